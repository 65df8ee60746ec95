//! Synthetic DRS data: random well-formed documents for property tests and
//! benchmarks, and a small templated sentence/DRS corpus for end-to-end runs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::drs::{classify_predicate, Clause, DocMeta, Drs, Sense, SensePos, Term, VarKind, Variable};

#[derive(Debug, Clone)]
pub struct RandomDrsConfig {
    pub max_vars: usize,
    pub max_boxes: usize,
    pub lemmas: Vec<&'static str>,
    pub roles: Vec<&'static str>,
    pub constants: Vec<&'static str>,
    pub box_operators: Vec<&'static str>,
}

impl Default for RandomDrsConfig {
    fn default() -> Self {
        RandomDrsConfig {
            max_vars: 8,
            max_boxes: 3,
            lemmas: vec!["dog", "cat", "time", "be", "see", "city", "red"],
            roles: vec!["Agent", "Theme", "Time", "Location"],
            constants: vec!["now", "tom", "2013", "speaker"],
            box_operators: vec!["NEGATION", "PRESUPPOSITION", "POSSIBILITY"],
        }
    }
}

fn sense(pos: SensePos, number: u8) -> Term {
    Term::Sense(Sense { pos, number })
}

fn clause(b: Variable, pred: &str, args: Vec<Term>) -> Clause {
    Clause::new(b, classify_predicate(pred), args).expect("generator builds valid clauses")
}

/// Random DRS that passes the referee: boxes form a tree through box
/// operators, every referent is introduced, described and linked.
pub fn random_drs(rng: &mut impl Rng, cfg: &RandomDrsConfig) -> Drs {
    let n_boxes = rng.random_range(1..=cfg.max_boxes.min(cfg.max_vars).max(1));
    let n_refs = rng.random_range(0..=cfg.max_vars.saturating_sub(n_boxes));
    let boxes: Vec<Variable> = (1..=n_boxes as u32).map(|i| Variable::new(VarKind::Box, i)).collect();
    let kinds = [VarKind::Entity, VarKind::Event, VarKind::Time, VarKind::State];
    let mut counters = [0u32; 4];
    let mut refs = Vec::new();
    for _ in 0..n_refs {
        let k = rng.random_range(0..kinds.len());
        counters[k] += 1;
        refs.push(Variable::new(kinds[k], counters[k]));
    }

    let mut clauses = Vec::new();
    for i in 1..n_boxes {
        let parent = boxes[rng.random_range(0..i)];
        let op = cfg.box_operators.choose(rng).unwrap();
        clauses.push(clause(parent, op, vec![Term::Var(boxes[i])]));
    }
    for r in &refs {
        let b = *boxes.choose(rng).unwrap();
        clauses.push(clause(b, "REF", vec![Term::Var(*r)]));
        let lemma = cfg.lemmas.choose(rng).unwrap();
        let pos = [SensePos::Noun, SensePos::Verb, SensePos::Adjective][rng.random_range(0..3)];
        let b = *boxes.choose(rng).unwrap();
        clauses.push(clause(
            b,
            lemma,
            vec![sense(pos, rng.random_range(1..=3)), Term::Var(*r)],
        ));
    }
    for (i, r) in refs.iter().enumerate() {
        if rng.random_bool(0.6) {
            let b = *boxes.choose(rng).unwrap();
            let role = cfg.roles.choose(rng).unwrap();
            let arg = if i > 0 && rng.random_bool(0.6) {
                Term::Var(refs[rng.random_range(0..i)])
            } else {
                Term::Constant(cfg.constants.choose(rng).unwrap().to_string())
            };
            clauses.push(clause(b, role, vec![Term::Var(*r), arg]));
        }
    }
    if rng.random_bool(0.3) && !refs.is_empty() {
        let r = *refs.choose(rng).unwrap();
        clauses.push(clause(
            boxes[0],
            "TPR",
            vec![Term::Var(r), Term::Constant("now".into())],
        ));
    }
    clauses.shuffle(rng);
    Drs::from_clauses(clauses)
}

/// Renames variables by a random kind-preserving permutation.
pub fn shuffle_names(rng: &mut impl Rng, drs: &Drs) -> Drs {
    let vars = drs.variables();
    let mut renaming = std::collections::HashMap::new();
    for kind in VarKind::ALL {
        let of_kind: Vec<Variable> = vars.iter().copied().filter(|v| v.kind == kind).collect();
        let mut targets = of_kind.clone();
        targets.shuffle(rng);
        renaming.extend(of_kind.into_iter().zip(targets));
    }
    drs.map_vars(|v| renaming[&v])
}

/// A noisy copy: names shuffled, some clauses dropped, senses or lemmas
/// changed, clauses duplicated onto other variables.
pub fn perturb(rng: &mut impl Rng, drs: &Drs, cfg: &RandomDrsConfig) -> Drs {
    let renamed = shuffle_names(rng, drs);
    let vars = renamed.variables();
    let mut out = Vec::new();
    for c in renamed.clauses() {
        let roll: f64 = rng.random();
        if roll < 0.15 {
            continue;
        }
        if roll < 0.3 {
            if let crate::drs::PredicateKind::Concept(_) = c.predicate() {
                let lemma = cfg.lemmas.choose(rng).unwrap();
                out.push(clause(c.box_var(), lemma, c.args().to_vec()));
                continue;
            }
        }
        if roll < 0.4 {
            // re-point one variable at another of the same kind
            let c2 = c.map_vars(|v| {
                let same: Vec<Variable> = vars.iter().copied().filter(|w| w.kind == v.kind).collect();
                *same.choose(rng).unwrap()
            });
            out.push(c2);
            continue;
        }
        out.push(c.clone());
    }
    Drs::from_clauses(out)
}

/// Pair of random DRSs with at most `cfg.max_vars` variables each; about half
/// of the pairs are noisy copies of each other.
pub fn random_pair(rng: &mut impl Rng, cfg: &RandomDrsConfig) -> (Drs, Drs) {
    let gold = random_drs(rng, cfg);
    let pred = if rng.random_bool(0.5) {
        perturb(rng, &gold, cfg)
    } else {
        random_drs(rng, cfg)
    };
    (pred, gold)
}

/// `n` random well-formed documents with ids `syn-<i>`.
pub fn fixture_corpus(n: usize, seed: u64) -> Vec<Drs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RandomDrsConfig {
        max_vars: 14,
        max_boxes: 4,
        ..RandomDrsConfig::default()
    };
    (0..n)
        .map(|i| {
            let d = random_drs(&mut rng, &cfg);
            d.with_meta(DocMeta {
                id: Some(format!("syn-{i}")),
                ..DocMeta::default()
            })
        })
        .collect()
}

struct Person {
    token: &'static str,
    name: &'static str,
    concept: &'static str,
}

const PEOPLE: [Person; 5] = [
    Person {
        token: "Tom",
        name: "tom",
        concept: "male",
    },
    Person {
        token: "Mary",
        name: "mary",
        concept: "female",
    },
    Person {
        token: "John",
        name: "john",
        concept: "male",
    },
    Person {
        token: "Anna",
        name: "anna",
        concept: "female",
    },
    Person {
        token: "Paul",
        name: "paul",
        concept: "male",
    },
];

/// (third person form, base form)
const INTRANSITIVE: [(&str, &str); 5] = [
    ("sleeps", "sleep"),
    ("runs", "run"),
    ("sings", "sing"),
    ("dances", "dance"),
    ("smiles", "smile"),
];

/// (third person form, lemma, subject role, object role)
const TRANSITIVE: [(&str, &str, &str, &str); 3] = [
    ("sees", "see", "Experiencer", "Stimulus"),
    ("likes", "like", "Experiencer", "Stimulus"),
    ("chases", "chase", "Agent", "Theme"),
];

const NOUNS: [&str; 4] = ["dog", "cat", "bird", "horse"];

fn v(kind: VarKind, i: u32) -> Variable {
    Variable::new(kind, i)
}

fn person_clauses(b: Variable, x: Variable, p: &Person) -> Vec<Clause> {
    vec![
        clause(b, "REF", vec![Term::Var(x)]),
        clause(b, "Name", vec![Term::Var(x), Term::Constant(p.name.into())]),
        clause(b, p.concept, vec![sense(SensePos::Noun, 2), Term::Var(x)]),
    ]
}

fn event_clauses(b: Variable, e: Variable, lemma: &str) -> Vec<Clause> {
    vec![
        clause(b, "REF", vec![Term::Var(e)]),
        clause(b, lemma, vec![sense(SensePos::Verb, 1), Term::Var(e)]),
    ]
}

fn toy_doc(i: usize) -> Drs {
    let (b1, b2, b3) = (v(VarKind::Box, 1), v(VarKind::Box, 2), v(VarKind::Box, 3));
    let (x1, x2, e1) = (v(VarKind::Entity, 1), v(VarKind::Entity, 2), v(VarKind::Event, 1));
    let person = &PEOPLE[i % PEOPLE.len()];
    let (sentence, clauses) = match i % 4 {
        0 => {
            let (form, lemma) = INTRANSITIVE[(i / 4) % INTRANSITIVE.len()];
            let mut cs = person_clauses(b1, x1, person);
            cs.extend(event_clauses(b2, e1, lemma));
            cs.push(clause(b2, "Agent", vec![Term::Var(e1), Term::Var(x1)]));
            (format!("{} {form} .", person.token), cs)
        }
        1 => {
            let (_, lemma) = INTRANSITIVE[(i / 4) % INTRANSITIVE.len()];
            let mut cs = person_clauses(b1, x1, person);
            cs.push(clause(b2, "NEGATION", vec![Term::Var(b3)]));
            cs.extend(event_clauses(b3, e1, lemma));
            cs.push(clause(b3, "Agent", vec![Term::Var(e1), Term::Var(x1)]));
            (format!("{} does n't {lemma} .", person.token), cs)
        }
        2 => {
            let noun = NOUNS[(i / 4) % NOUNS.len()];
            let (form, lemma) = INTRANSITIVE[(i / 5) % INTRANSITIVE.len()];
            let mut cs = vec![
                clause(b1, "REF", vec![Term::Var(x1)]),
                clause(b1, noun, vec![sense(SensePos::Noun, 1), Term::Var(x1)]),
            ];
            cs.extend(event_clauses(b2, e1, lemma));
            cs.push(clause(b2, "Agent", vec![Term::Var(e1), Term::Var(x1)]));
            (format!("The {noun} {form} ."), cs)
        }
        _ => {
            let noun = NOUNS[(i / 4) % NOUNS.len()];
            let (form, lemma, subj, obj) = TRANSITIVE[(i / 3) % TRANSITIVE.len()];
            let mut cs = person_clauses(b1, x1, person);
            cs.push(clause(b2, "REF", vec![Term::Var(x2)]));
            cs.push(clause(b2, noun, vec![sense(SensePos::Noun, 1), Term::Var(x2)]));
            cs.extend(event_clauses(b3, e1, lemma));
            cs.push(clause(b3, subj, vec![Term::Var(e1), Term::Var(x1)]));
            cs.push(clause(b3, obj, vec![Term::Var(e1), Term::Var(x2)]));
            (format!("{} {form} the {noun} .", person.token), cs)
        }
    };
    Drs::from_clauses(clauses).with_meta(DocMeta {
        id: Some(format!("toy-{i:03}")),
        sentence: Some(sentence),
        ..DocMeta::default()
    })
}

/// Templated sentence/DRS pairs (sentences of at most 8 tokens), distinct
/// sentences, deterministic.
pub fn toy_corpus(n: usize) -> Vec<Drs> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < n {
        let d = toy_doc(i);
        i += 1;
        if seen.insert(d.meta.sentence.clone()) {
            out.push(d);
        }
        assert!(i < 100 * n.max(1), "template space exhausted");
    }
    out
}
