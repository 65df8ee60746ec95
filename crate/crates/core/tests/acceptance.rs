//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line each and
//! exits non-zero when any fails. Runs with its own harness so the lines are
//! always visible and the timed criteria run alone.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use drskit::counter::{brute_force_match, evaluate_corpus, match_score, EvalConfig};
use drskit::drs::{parse_clause, parse_corpus_str, render, render_corpus, Drs, VarKind, Variable};
use drskit::jury::{
    jury_report, rank_documents, semtag_subsets, significance, Method, PhenomenonCatalog, RunSet, SignificanceMode,
};
use drskit::neural::{
    beam_decode, corpus_f1, grad_check, greedy_decode, predict_all, train, Channel, EncoderMode, ExampleObjective,
    Model, ModelConfig, SourceText, TrainOptions, Vocabs,
};
use drskit::referee::{validate, ViolationCode};
use drskit::seqio::{delinearize, linearize, CorpusSplit, Phase, Schedule, Tier};
use drskit::synth::{fixture_corpus, random_pair, toy_corpus, RandomDrsConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NEGATION_EXAMPLE: &str = include_str!("data/negation_example.drs");

// Tolerances and budgets.
const EXACT: f64 = 1e-12;
const NEGATION_EXAMPLE_BUDGET: Duration = Duration::from_secs(1);
const PAIRS: usize = 200;
const PAIR_VARS: usize = 8;
const PAIRS_BUDGET: Duration = Duration::from_secs(60);
const ROUND_TRIP_DOCS: usize = 500;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(30);
const ATTENTION_TOL: f64 = 1e-6;
const GRAD_EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;
const GRAD_HIDDEN: usize = 16;
const GRAD_VOCAB: usize = 40;
const GRAD_SAMPLES: usize = 200;
const NEURAL_BUDGET: Duration = Duration::from_secs(120);
const OVERFIT_DOCS: usize = 50;
const OVERFIT_HIDDEN: usize = 128;
const OVERFIT_EPOCHS: usize = 300;
const OVERFIT_F1: f64 = 0.95;
const OVERFIT_BUDGET: Duration = Duration::from_secs(600);
const SAMPLED_R: usize = 100_000;
const SAMPLED_TOL: f64 = 0.02;
const SAMPLED_CASES: usize = 20;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn negation_example() -> Drs {
    parse_corpus_str(NEGATION_EXAMPLE).unwrap().remove(0)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn c1_negation_example_fidelity() -> Outcome {
    let t = Instant::now();
    let docs = parse_corpus_str(NEGATION_EXAMPLE).map_err(|e| e.to_string())?;
    ensure(docs.len() == 1, "expected one document")?;
    let d = &docs[0];
    ensure(d.len() == 17, format!("{} clauses", d.len()))?;
    ensure(render(d) == NEGATION_EXAMPLE, "printing is not byte-identical")?;
    ensure(validate(d).well_formed, "referee rejects the example")?;
    let m = match_score(d, d, &EvalConfig::default());
    for (name, v) in [("P", m.precision()), ("R", m.recall()), ("F1", m.f1())] {
        ensure(close(v, 1.0, EXACT), format!("self {name} = {v}"))?;
    }
    let el = t.elapsed();
    ensure(el < NEGATION_EXAMPLE_BUDGET, format!("took {el:?}"))?;
    Ok(format!("17 clauses, round trip exact, self F1 1.0 in {el:.2?}"))
}

fn c2_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // the oracle searches mappings only, so ill-formed predictions are scored
    // like any other
    let cfg = EvalConfig {
        validate_first: false,
        ..EvalConfig::default()
    };
    let mut done = 0;
    let mut attempts = 0;
    while done < PAIRS {
        attempts += 1;
        let gen = RandomDrsConfig {
            max_vars: rng.random_range(1..=PAIR_VARS - 1),
            ..RandomDrsConfig::default()
        };
        let (p, g) = random_pair(&mut rng, &gen);
        if p.variables().len() + g.variables().len() > PAIR_VARS || p.is_empty() {
            continue;
        }
        let hill = match_score(&p, &g, &cfg);
        let oracle = brute_force_match(&p, &g, &cfg).map_err(|e| e.to_string())?;
        ensure(
            hill.matched == oracle.matched,
            format!(
                "pair {done}: hill climbing {} vs oracle {}",
                hill.matched, oracle.matched
            ),
        )?;
        done += 1;
    }
    let el = t.elapsed();
    ensure(el < PAIRS_BUDGET, format!("took {el:?}"))?;
    Ok(format!(
        "{PAIRS} pairs ({attempts} drawn) agree with exhaustive search in {el:.2?}"
    ))
}

fn c3_known_score() -> Outcome {
    let gold = negation_example();
    let t2 = Variable::new(VarKind::Time, 2);
    let pred = gold.without(|c| c.variables().any(|v| v == t2));
    ensure(pred.len() == 13, format!("{} clauses left", pred.len()))?;
    let m = match_score(&pred, &gold, &EvalConfig::default());
    ensure(
        m.matched == 13 && m.produced == 13 && m.gold == 17,
        format!("{}/{}/{}", m.matched, m.produced, m.gold),
    )?;
    ensure(close(m.precision(), 1.0, EXACT), format!("P = {}", m.precision()))?;
    ensure(close(m.recall(), 13.0 / 17.0, EXACT), format!("R = {}", m.recall()))?;
    ensure(close(m.f1(), 26.0 / 30.0, EXACT), format!("F1 = {}", m.f1()))?;
    Ok(format!("P 1, R 13/17, F1 {:.6}", m.f1()))
}

fn c4_referee_injections() -> Outcome {
    let base = negation_example();
    ensure(validate(&base).well_formed, "base is ill-formed")?;
    let ref_x1 = parse_clause("b3 REF x1").unwrap();
    let cases = [
        (
            "missing REF",
            base.without(|c| *c == ref_x1),
            ViolationCode::FreeVariable,
        ),
        (
            "back edge",
            base.with_clauses([parse_clause("b2 POSSIBILITY b1").unwrap()]),
            ViolationCode::SubordinationCycle,
        ),
        (
            "island",
            base.with_clauses([
                parse_clause("b4 REF x2").unwrap(),
                parse_clause("b4 dog \"n.01\" x2").unwrap(),
            ]),
            ViolationCode::Disconnected,
        ),
    ];
    for (name, d, code) in cases {
        let codes = validate(&d).codes();
        ensure(
            codes == [code].into_iter().collect(),
            format!("{name}: got {codes:?}, want {code:?}"),
        )?;
    }
    Ok("free variable, cycle and island each flip exactly their code".into())
}

fn c5_linearization_round_trip() -> Outcome {
    let t = Instant::now();
    let docs = fixture_corpus(ROUND_TRIP_DOCS, 5);
    let cfg = EvalConfig::default();
    for (i, d) in docs.iter().enumerate() {
        let back = delinearize(&linearize(d).map_err(|e| format!("doc {i}: {e}"))?);
        let m = match_score(&back.drs, d, &cfg);
        ensure(
            m.matched == d.len() && m.produced == d.len(),
            format!("doc {i}: F1 {}", m.f1()),
        )?;
    }
    let el = t.elapsed();
    ensure(el < ROUND_TRIP_BUDGET, format!("took {el:?}"))?;
    Ok(format!("{ROUND_TRIP_DOCS} documents recovered with F1 1.0 in {el:.2?}"))
}

fn tagged_toy(n: usize) -> Vec<Drs> {
    let mut docs = toy_corpus(n);
    for d in docs.iter_mut() {
        let tags: Vec<String> = d.meta.tokens().iter().map(|t| format!("T{}", t.len() % 4)).collect();
        d.meta.tags.insert("sem".into(), tags);
    }
    docs
}

fn c6_neural_components() -> Outcome {
    let t = Instant::now();

    // full-size character encoder
    let docs = tagged_toy(3);
    let refs: Vec<&Drs> = docs.iter().collect();
    let cfg = ModelConfig {
        min_target_occ: 1,
        ..ModelConfig::default()
    };
    let model = Model::new(
        cfg.clone(),
        Vocabs::build(&refs, &cfg).map_err(|e| e.to_string())?,
        None,
    )
    .map_err(|e| e.to_string())?;
    let ex = model.vocabs.example(&docs[0], &cfg).map_err(|e| e.to_string())?;
    let width = model
        .char_cnn_embed(&ex.source.chars)
        .map_err(|e| e.to_string())?
        .ncols();
    ensure(width == 300, format!("char encoder width {width}"))?;

    // reduced dual-attention model: pick the corpus whose output vocabulary
    // is the largest not above the target size
    let reduced = |encoders| ModelConfig {
        hidden_size: GRAD_HIDDEN,
        target_embedding_dim: 12,
        word_dim: 10,
        tag_dim: 6,
        encoders,
        encoder_layers: 2,
        channels: vec![Channel::Word, Channel::CharCnn, Channel::Tag("sem".into())],
        char_cnn: drskit::neural::CharCnnConfig {
            widths: vec![1, 2, 3],
            filters_per_width: 4,
            char_embedding_dim: 6,
        },
        min_target_occ: 1,
        init_scale: 0.5,
        seed: 3,
        ..ModelConfig::default()
    };
    let cfg = reduced(EncoderMode::Two);
    let mut best = None;
    for n in 1..=12 {
        let docs = tagged_toy(n);
        let refs: Vec<&Drs> = docs.iter().collect();
        let v = Vocabs::build(&refs, &cfg).map_err(|e| e.to_string())?;
        if v.target.len() <= GRAD_VOCAB {
            best = Some((docs, v));
        }
    }
    let (docs, vocabs) = best.ok_or("no corpus with a small enough vocabulary")?;
    let vocab_size = vocabs.target.len();
    let mut model = Model::new(cfg.clone(), vocabs, None).map_err(|e| e.to_string())?;
    let examples: Vec<_> = docs
        .iter()
        .map(|d| model.vocabs.example(d, &cfg))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    // attention weights are distributions at every step
    let mut steps = 0;
    for e in &examples {
        let enc = model.encode_source(&e.source).map_err(|e| e.to_string())?;
        let mut state = model.initial_state(&enc).map_err(|e| e.to_string())?;
        let mut prev = drskit::seqio::BOS;
        for &tok in &e.target {
            let out = model.decode_step(&enc, &state, prev).map_err(|e| e.to_string())?;
            ensure(out.attention.len() == 2, "expected two attention distributions")?;
            for w in &out.attention {
                let s: f64 = w.iter().sum();
                ensure(close(s, 1.0, ATTENTION_TOL), format!("attention sums to {s}"))?;
            }
            state = out.state;
            prev = tok;
            steps += 1;
        }
    }

    let longest = examples.iter().max_by_key(|e| e.target.len()).unwrap().clone();
    let r = grad_check(
        &mut ExampleObjective {
            model: &mut model,
            example: &longest,
        },
        GRAD_EPS,
        GRAD_SAMPLES,
        17,
    )
    .map_err(|e| e.to_string())?;
    let (worst, checked) = (r.max_rel_error, r.checked);
    ensure(worst <= GRAD_TOL, format!("max relative error {worst:.3e} ({r:?})"))?;
    let el = t.elapsed();
    ensure(el < NEURAL_BUDGET, format!("took {el:?}"))?;
    Ok(format!(
        "char encoder 300 wide; attention sums to 1 over {steps} steps; \
         {checked} gradients (vocab {vocab_size}) within {worst:.2e} in {el:.1?}"
    ))
}

fn gold_only(docs: Vec<Drs>, dev: Vec<Drs>, epochs: usize) -> CorpusSplit {
    let mut tiers = BTreeMap::new();
    tiers.insert(Tier::Gold, docs);
    let schedule = Schedule::Custom(vec![Phase {
        tiers: vec![Tier::Gold],
        epochs,
    }]);
    CorpusSplit::new(tiers, dev, vec![], &schedule).unwrap()
}

fn c7_overfit() -> Outcome {
    let t = Instant::now();
    let docs = toy_corpus(OVERFIT_DOCS);
    let cfg = ModelConfig {
        hidden_size: OVERFIT_HIDDEN,
        min_target_occ: 1,
        ..ModelConfig::default()
    };
    let (model, _) = train(
        &gold_only(docs.clone(), vec![], OVERFIT_EPOCHS),
        cfg,
        None,
        TrainOptions::default(),
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    let trained = t.elapsed();
    let f1 = corpus_f1(&model, &docs, 10).map_err(|e| e.to_string())?;
    for (i, d) in docs.iter().enumerate() {
        let src = model
            .vocabs
            .source_ids(&SourceText::from_doc(d).map_err(|e| e.to_string())?, &model.config)
            .map_err(|e| e.to_string())?;
        let steps = model.config.max_decode_steps;
        let g = greedy_decode(&model, &src, steps).map_err(|e| e.to_string())?;
        let b = beam_decode(&model, &src, 1, steps).map_err(|e| e.to_string())?;
        ensure(g.tokens == b.tokens, format!("doc {i}: beam 1 differs from greedy"))?;
    }
    let el = t.elapsed();
    ensure(f1 >= OVERFIT_F1, format!("beam-10 F1 {f1:.4}"))?;
    ensure(el <= OVERFIT_BUDGET, format!("took {el:?}"))?;
    Ok(format!(
        "beam-10 F1 {f1:.4} on {OVERFIT_DOCS} training docs; beam 1 equals greedy; \
         trained in {trained:.0?}, total {el:.0?}"
    ))
}

/// Exhaustive swap enumeration, written independently of the library.
fn swap_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let obs = (a.iter().sum::<f64>() - b.iter().sum::<f64>()).abs();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let (mut sa, mut sb) = (0.0, 0.0);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                sa += b[i];
                sb += a[i];
            } else {
                sa += a[i];
                sb += b[i];
            }
        }
        if (sa - sb).abs() >= obs - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

fn c8_significance() -> Outcome {
    let r = significance(&[1.0; 3], &[0.0; 3], SignificanceMode::Exact, 0.05, 0).map_err(|e| e.to_string())?;
    ensure(
        close(r.p_value, 0.25, EXACT),
        format!("p = {} for a three-way sweep", r.p_value),
    )?;
    let v = [0.3, 0.7, 0.5, 0.9];
    let r = significance(&v, &v, SignificanceMode::Exact, 0.05, 0).map_err(|e| e.to_string())?;
    ensure(
        close(r.p_value, 1.0, EXACT),
        format!("p = {} for identical systems", r.p_value),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for case in 0..SAMPLED_CASES {
        let n = rng.random_range(1..=10);
        let a: Vec<f64> = (0..n).map(|_| (rng.random_range(0..=20) as f64) / 20.0).collect();
        let b: Vec<f64> = (0..n).map(|_| (rng.random_range(0..=20) as f64) / 20.0).collect();
        let exact = significance(&a, &b, SignificanceMode::Exact, 0.05, 0).map_err(|e| e.to_string())?;
        let oracle = swap_oracle(&a, &b);
        ensure(
            close(exact.p_value, oracle, 1e-9),
            format!("case {case}: exact {} vs oracle {oracle}", exact.p_value),
        )?;
        let sampled = significance(&a, &b, SignificanceMode::Sampled { samples: SAMPLED_R }, 0.05, 99)
            .map_err(|e| e.to_string())?;
        ensure(sampled.method == Method::Sampled(SAMPLED_R), "sampled mode not used")?;
        let gap = (sampled.p_value - exact.p_value).abs();
        worst = worst.max(gap);
        ensure(
            gap <= SAMPLED_TOL,
            format!("case {case}: sampled {} vs exact {}", sampled.p_value, exact.p_value),
        )?;
    }
    Ok(format!(
        "exact p 0.25 and 1.0; {SAMPLED_CASES} sampled cases within {worst:.4}"
    ))
}

fn c9_jury_tables() -> Outcome {
    let want: [(&str, &str); 7] = [
        ("Modality", "NOT NEC POS"),
        ("Logical", "ALT XCL DIS AND IMP BUT"),
        ("Pronouns", "PRO HAS REF EMP"),
        ("Attributes", "QUC QUV COL IST SST PRI DEG INT REL SCO"),
        ("Comparatives", "EQU APX MOR LES TOP BOT ORD"),
        ("Named entities", "PER GPE GPO GEO ORG ART HAP UOM CTC LIT NTH"),
        ("Numerals", "QUC MOY SCO ORD DAT DOM YOC DEC CLO"),
    ];
    let catalog = PhenomenonCatalog::default();
    ensure(catalog.categories().len() == want.len(), "category count")?;
    for ((name, tags), (wn, wt)) in catalog.categories().iter().zip(want) {
        ensure(
            name == wn && tags.join(" ") == wt,
            format!("category {name}: {}", tags.join(" ")),
        )?;
    }

    let tags = ["NIL", "NOT", "NEC", "HAS", "IST", "PER", "YOC", "NOW", "EXS"];
    let got = catalog.categories_of(&tags);
    ensure(
        got == ["Modality", "Pronouns", "Attributes", "Named entities", "Numerals"],
        format!("tag membership: {got:?}"),
    )?;

    // two systems, two runs, on two tagged documents
    let mut golds = toy_corpus(2);
    for (d, t) in golds.iter_mut().zip(["PRO", "NOT"]) {
        let n = d.meta.tokens().len();
        let row: Vec<String> = (0..n)
            .map(|i| if i == 0 { t.to_string() } else { "NIL".to_string() })
            .collect();
        d.meta.tags.insert("sem".into(), row);
    }
    let cfg = EvalConfig::default();
    let worse = vec![golds[0].clone(), golds[0].clone().with_meta(golds[1].meta.clone())];
    let a = RunSet::score("a", vec![golds.clone(), golds.clone()], &golds, &cfg, None).map_err(|e| e.to_string())?;
    let b = RunSet::score("b", vec![worse, golds.clone()], &golds, &cfg, None).map_err(|e| e.to_string())?;
    let report = jury_report(&[a.clone(), b.clone()]);
    let rows = [
        "Prec",
        "Rec",
        "F1",
        "Operators",
        "Roles",
        "Concepts",
        "Nouns",
        "Verbs",
        "Adjectives",
        "Adverbs",
        "Events",
        "Perfect sense",
        "Infreq. sense",
        "F1 std dev",
        "F1 confidence interval (low)",
        "F1 confidence interval (high)",
        "# illformed",
        "# perfect (avg)",
        "# perfect (all 2)",
        "# zero (avg)",
        "# zero (all 2)",
        "# same (all 2)",
    ];
    for r in rows {
        ensure(report.row(r).is_some(), format!("missing row {r}"))?;
    }
    let subsets = semtag_subsets(&golds, &[a, b], &catalog, "a").map_err(|e| e.to_string())?;
    ensure(
        subsets.rows.iter().any(|r| r.category == "Pronouns" && r.size == 1),
        "Pronouns subset",
    )?;

    let ids: Vec<String> = (0..4).map(|i| format!("d{i}")).collect();
    let sys = [0.554, 0.9, 0.482, 0.7];
    let base = [0.6, 0.3, 0.4, 0.7];
    let r = rank_documents(&sys, &base, &ids, 2).map_err(|e| e.to_string())?;
    let worst: Vec<f64> = r.worst.iter().map(|d| d.value).collect();
    ensure(worst == [0.482, 0.554], format!("worst {worst:?}"))?;
    ensure(
        r.best_relative[0].id == "d1",
        format!("best gain {:?}", r.best_relative[0]),
    )?;
    Ok("catalog verbatim, tag membership, all 22 rows, ranking heads".into())
}

fn e2e_run() -> Result<String, String> {
    let docs = toy_corpus(14);
    let (train_docs, dev) = (docs[..10].to_vec(), docs[10..].to_vec());
    let cfg = ModelConfig {
        hidden_size: 8,
        target_embedding_dim: 6,
        word_dim: 5,
        char_cnn: drskit::neural::CharCnnConfig {
            widths: vec![1, 2, 3],
            filters_per_width: 3,
            char_embedding_dim: 4,
        },
        min_target_occ: 1,
        batch_size: 4,
        beam_size: 3,
        max_decode_steps: 60,
        seed: 10,
        ..ModelConfig::default()
    };
    let (model, log) = train(
        &gold_only(train_docs, dev.clone(), 3),
        cfg,
        None,
        TrainOptions::default(),
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    let sources: Vec<SourceText> = dev
        .iter()
        .map(SourceText::from_doc)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let run = |beam| predict_all(&model, &sources, beam, 60, 1).map_err(|e| e.to_string());
    let (p1, p2) = (run(3)?, run(1)?);
    let eval = EvalConfig::default();
    let score = evaluate_corpus(&p1, &dev, &eval).map_err(|e| e.to_string())?;
    let sys = RunSet::score("beam", vec![p1.clone(), p1.clone()], &dev, &eval, None).map_err(|e| e.to_string())?;
    let greedy = RunSet::score("greedy", vec![p2.clone(), p2.clone()], &dev, &eval, None).map_err(|e| e.to_string())?;
    let sig = significance(
        &sys.mean_doc_f1(),
        &greedy.mean_doc_f1(),
        SignificanceMode::Auto { samples: 1000 },
        0.05,
        1,
    )
    .map_err(|e| e.to_string())?;
    Ok(format!(
        "{log}{}{}{:?}\n{}{:?}\n",
        drskit::neural::checkpoint::to_text(&model),
        render_corpus(&p1),
        score,
        jury_report(&[sys, greedy]).to_tsv(),
        sig
    ))
}

fn c10_determinism() -> Outcome {
    let a = e2e_run()?;
    let b = e2e_run()?;
    ensure(a == b, "two seeded runs differ")?;
    Ok(format!(
        "train, predict, score and jury repeat byte for byte ({} bytes)",
        a.len()
    ))
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, c1_negation_example_fidelity),
        (2, c2_oracle_equivalence),
        (3, c3_known_score),
        (4, c4_referee_injections),
        (5, c5_linearization_round_trip),
        (6, c6_neural_components),
        (7, c7_overfit),
        (8, c8_significance),
        (9, c9_jury_tables),
        (10, c10_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (n, f) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("criterion {n}: PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL  {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
