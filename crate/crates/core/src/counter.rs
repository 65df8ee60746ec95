//! Clause matching between a predicted and a gold DRS.
//!
//! Scoring searches for the variable mapping that maximizes the number of
//! matching clauses, using hill climbing with restarts, and reports micro
//! precision, recall and F1 over a corpus.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::drs::{Clause, Drs, PredicateKind, Sense, SensePos, Term, VarKind, Variable};
use crate::referee;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CounterError {
    #[error("prediction and gold corpora differ in length ({pred} vs {gold})")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("predicted DRS has {vars} variables, above the brute-force limit of {limit}")]
    OracleLimitExceeded { vars: usize, limit: usize },
    #[error("variable mapping {from} -> {to}: {reason}")]
    InvalidMapping {
        from: Variable,
        to: Variable,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalConfig {
    pub restarts: usize,
    /// Let any sense match any sense.
    pub default_sense: bool,
    pub seed: u64,
    /// Give ill-formed predictions zero matches.
    pub validate_first: bool,
    /// Largest predicted variable count `brute_force_match` accepts.
    pub oracle_limit: usize,
    /// Documents scored in parallel; 1 keeps everything on the calling thread.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            restarts: 100,
            default_sense: false,
            seed: 0,
            validate_first: true,
            oracle_limit: 8,
            jobs: 1,
        }
    }
}

/// Injective, kind-preserving partial map from predicted to gold variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VariableMapping {
    pairs: BTreeMap<Variable, Variable>,
}

impl VariableMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity(vars: impl IntoIterator<Item = Variable>) -> Self {
        VariableMapping {
            pairs: vars.into_iter().map(|v| (v, v)).collect(),
        }
    }

    pub fn insert(&mut self, from: Variable, to: Variable) -> Result<(), CounterError> {
        if from.kind != to.kind {
            return Err(CounterError::InvalidMapping {
                from,
                to,
                reason: "kinds differ",
            });
        }
        if self.pairs.iter().any(|(k, v)| *v == to && *k != from) {
            return Err(CounterError::InvalidMapping {
                from,
                to,
                reason: "target already mapped",
            });
        }
        self.pairs.insert(from, to);
        Ok(())
    }

    pub fn get(&self, v: Variable) -> Option<Variable> {
        self.pairs.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Variable, Variable)> + '_ {
        self.pairs.iter().map(|(a, b)| (*a, *b))
    }

    pub fn inverse(&self) -> VariableMapping {
        VariableMapping {
            pairs: self.pairs.iter().map(|(a, b)| (*b, *a)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub matched: usize,
    pub produced: usize,
    pub gold: usize,
    pub mapping: VariableMapping,
    /// Matched (predicted clause index, gold clause index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub ill_formed: bool,
}

impl MatchResult {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.produced)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    pub fn doc_score(&self) -> DocScore {
        DocScore {
            matched: self.matched,
            produced: self.produced,
            gold: self.gold,
            ill_formed: self.ill_formed,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Clause counts of one scored document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DocScore {
    pub matched: usize,
    pub produced: usize,
    pub gold: usize,
    pub ill_formed: bool,
}

impl DocScore {
    pub fn f1(&self) -> f64 {
        f1(ratio(self.matched, self.produced), ratio(self.matched, self.gold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub produced: usize,
    pub gold: usize,
    pub per_doc_f1: Vec<f64>,
    pub ill_formed_count: usize,
    #[serde(skip)]
    pub docs: Vec<DocScore>,
}

impl ScoreReport {
    /// Micro aggregation over document counts.
    pub fn from_docs(docs: Vec<DocScore>) -> Self {
        let matched = docs.iter().map(|d| d.matched).sum();
        let produced = docs.iter().map(|d| d.produced).sum();
        let gold = docs.iter().map(|d| d.gold).sum();
        let precision = ratio(matched, produced);
        let recall = ratio(matched, gold);
        ScoreReport {
            precision,
            recall,
            f1: f1(precision, recall),
            matched,
            produced,
            gold,
            per_doc_f1: docs.iter().map(DocScore::f1).collect(),
            ill_formed_count: docs.iter().filter(|d| d.ill_formed).count(),
            docs,
        }
    }
}

fn term_match(p: &Term, g: &Term, m: &VariableMapping, default_sense: bool) -> bool {
    match (p, g) {
        (Term::Var(a), Term::Var(b)) => m.get(*a) == Some(*b),
        (Term::Constant(a), Term::Constant(b)) => a == b,
        (Term::Sense(a), Term::Sense(b)) => default_sense || a == b,
        _ => false,
    }
}

/// Whether `c_pred` matches `c_gold` once its variables are renamed by `m`.
pub fn clause_match(c_pred: &Clause, c_gold: &Clause, m: &VariableMapping, cfg: &EvalConfig) -> bool {
    c_pred.predicate() == c_gold.predicate()
        && c_pred.args().len() == c_gold.args().len()
        && m.get(c_pred.box_var()) == Some(c_gold.box_var())
        && c_pred
            .args()
            .iter()
            .zip(c_gold.args())
            .all(|(p, g)| term_match(p, g, m, cfg.default_sense))
}

fn sorted_vars(d: &Drs) -> Vec<Variable> {
    let mut v = d.variables();
    v.sort();
    v
}

/// Maximum one-to-one clause matching under a fixed mapping (augmenting
/// paths). Only used by the exhaustive oracle.
fn bipartite_matching(pred: &Drs, gold: &Drs, m: &VariableMapping, cfg: &EvalConfig) -> usize {
    let adj: Vec<Vec<usize>> = pred
        .clauses()
        .iter()
        .map(|p| {
            gold.clauses()
                .iter()
                .enumerate()
                .filter(|(_, g)| clause_match(p, g, m, cfg))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gold.len()];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                if owner[j].is_none() || augment(owner[j].unwrap(), adj, seen, owner) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    let mut total = 0;
    for i in 0..adj.len() {
        let mut seen = vec![false; gold.len()];
        if augment(i, &adj, &mut seen, &mut owner) {
            total += 1;
        }
    }
    total
}

/// Exact maximum over every kind-preserving injective mapping.
pub fn brute_force_match(pred: &Drs, gold: &Drs, cfg: &EvalConfig) -> Result<MatchResult, CounterError> {
    let pvars = sorted_vars(pred);
    if pvars.len() > cfg.oracle_limit {
        return Err(CounterError::OracleLimitExceeded {
            vars: pvars.len(),
            limit: cfg.oracle_limit,
        });
    }
    let gvars = sorted_vars(gold);
    let mut best: Option<(usize, VariableMapping)> = None;
    let mut current = VariableMapping::new();
    let mut used = vec![false; gvars.len()];

    fn rec(
        k: usize,
        pvars: &[Variable],
        gvars: &[Variable],
        used: &mut [bool],
        current: &mut VariableMapping,
        best: &mut Option<(usize, VariableMapping)>,
        score: &dyn Fn(&VariableMapping) -> usize,
    ) {
        if k == pvars.len() {
            let s = score(current);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                *best = Some((s, current.clone()));
            }
            return;
        }
        // leaving the variable unmapped
        rec(k + 1, pvars, gvars, used, current, best, score);
        for (j, g) in gvars.iter().enumerate() {
            if !used[j] && g.kind == pvars[k].kind {
                used[j] = true;
                current.pairs.insert(pvars[k], *g);
                rec(k + 1, pvars, gvars, used, current, best, score);
                current.pairs.remove(&pvars[k]);
                used[j] = false;
            }
        }
    }
    let score = |m: &VariableMapping| bipartite_matching(pred, gold, m, cfg);
    rec(0, &pvars, &gvars, &mut used, &mut current, &mut best, &score);
    let (matched, mapping) = best.expect("at least the empty mapping is scored");
    Ok(MatchResult {
        matched,
        produced: pred.len(),
        gold: gold.len(),
        mapping,
        pairs: Vec::new(),
        ill_formed: false,
    })
}

/// A gold clause a predicted clause could match, and the variable pairs that
/// would have to be in the mapping for it to do so.
struct Candidate {
    class: usize,
    pairs: Vec<(usize, usize)>,
}

/// Precompiled matching problem over variable indices.
struct Problem {
    pvars: Vec<Variable>,
    gvars: Vec<Variable>,
    candidates: Vec<Vec<Candidate>>,
    /// Predicted clauses mentioning each predicted variable.
    clauses_of: Vec<Vec<usize>>,
    /// Gold clauses per equivalence class (clauses that only differ in sense
    /// share a class when senses are relaxed).
    class_members: Vec<Vec<usize>>,
}

fn relax_senses(c: &Clause) -> Clause {
    let args = c
        .args()
        .iter()
        .map(|t| match t {
            Term::Sense(_) => Term::Sense(Sense {
                pos: SensePos::Noun,
                number: 0,
            }),
            other => other.clone(),
        })
        .collect();
    Clause::new(c.box_var(), c.predicate().clone(), args).expect("same signature")
}

impl Problem {
    fn new(pred: &Drs, gold: &Drs, default_sense: bool) -> Problem {
        let pvars = sorted_vars(pred);
        let gvars = sorted_vars(gold);
        let pidx: HashMap<Variable, usize> = pvars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let gidx: HashMap<Variable, usize> = gvars.iter().enumerate().map(|(i, v)| (*v, i)).collect();

        let mut class_of_gold = Vec::with_capacity(gold.len());
        let mut class_members: Vec<Vec<usize>> = Vec::new();
        if default_sense {
            let mut seen: HashMap<Clause, usize> = HashMap::new();
            for (j, g) in gold.clauses().iter().enumerate() {
                let next = seen.len();
                let c = *seen.entry(relax_senses(g)).or_insert(next);
                if c == class_members.len() {
                    class_members.push(Vec::new());
                }
                class_members[c].push(j);
                class_of_gold.push(c);
            }
        } else {
            for j in 0..gold.len() {
                class_members.push(vec![j]);
                class_of_gold.push(j);
            }
        }

        let var_cfg = EvalConfig {
            default_sense,
            ..EvalConfig::default()
        };
        let mut candidates = Vec::with_capacity(pred.len());
        let mut clauses_of = vec![Vec::new(); pvars.len()];
        for (i, p) in pred.clauses().iter().enumerate() {
            let mut cands = Vec::new();
            for (j, g) in gold.clauses().iter().enumerate() {
                if p.predicate() != g.predicate() || p.args().len() != g.args().len() {
                    continue;
                }
                let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(3);
                let mut ok = true;
                let add = |a: Variable, b: Variable, pairs: &mut Vec<(usize, usize)>| {
                    if a.kind != b.kind {
                        return false;
                    }
                    let (x, y) = (pidx[&a], gidx[&b]);
                    for &(px, gy) in pairs.iter() {
                        if (px == x) != (gy == y) {
                            return false;
                        }
                    }
                    if !pairs.contains(&(x, y)) {
                        pairs.push((x, y));
                    }
                    true
                };
                ok &= add(p.box_var(), g.box_var(), &mut pairs);
                for (a, b) in p.args().iter().zip(g.args()) {
                    if !ok {
                        break;
                    }
                    ok &= match (a, b) {
                        (Term::Var(x), Term::Var(y)) => add(*x, *y, &mut pairs),
                        (x, y) => term_match(x, y, &VariableMapping::new(), var_cfg.default_sense),
                    };
                }
                if ok {
                    cands.push(Candidate {
                        class: class_of_gold[j],
                        pairs,
                    });
                }
            }
            for c in &cands {
                for &(x, _) in &c.pairs {
                    if !clauses_of[x].contains(&i) {
                        clauses_of[x].push(i);
                    }
                }
            }
            candidates.push(cands);
        }
        Problem {
            pvars,
            gvars,
            candidates,
            clauses_of,
            class_members,
        }
    }

    /// Class hit by predicted clause `i` under `m`, if any.
    fn hit(&self, i: usize, m: &[Option<usize>]) -> Option<usize> {
        self.candidates[i]
            .iter()
            .find(|c| c.pairs.iter().all(|&(x, y)| m[x] == Some(y)))
            .map(|c| c.class)
    }

    fn state(&self, m: &[Option<usize>]) -> State {
        let hits: Vec<Option<usize>> = (0..self.candidates.len()).map(|i| self.hit(i, m)).collect();
        let mut counts = vec![0usize; self.class_members.len()];
        for c in hits.iter().flatten() {
            counts[*c] += 1;
        }
        let matched = counts
            .iter()
            .zip(&self.class_members)
            .map(|(n, members)| (*n).min(members.len()))
            .sum();
        State { hits, counts, matched }
    }

    /// Change in matched count if the variables in `changed` took the values
    /// in `m` (other variables unchanged from `state`).
    fn delta(&self, state: &State, m: &[Option<usize>], changed: &[usize], scratch: &mut Vec<usize>) -> isize {
        scratch.clear();
        for &x in changed {
            for &i in &self.clauses_of[x] {
                if !scratch.contains(&i) {
                    scratch.push(i);
                }
            }
        }
        let mut diff: Vec<(usize, isize)> = Vec::new();
        let bump = |c: usize, d: isize, diff: &mut Vec<(usize, isize)>| {
            if let Some(e) = diff.iter_mut().find(|(k, _)| *k == c) {
                e.1 += d;
            } else {
                diff.push((c, d));
            }
        };
        for &i in scratch.iter() {
            let before = state.hits[i];
            let after = self.hit(i, m);
            if before != after {
                if let Some(c) = before {
                    bump(c, -1, &mut diff);
                }
                if let Some(c) = after {
                    bump(c, 1, &mut diff);
                }
            }
        }
        diff.iter()
            .map(|&(c, d)| {
                let cap = self.class_members[c].len() as isize;
                let old = state.counts[c] as isize;
                (old + d).min(cap) - old.min(cap)
            })
            .sum()
    }

    fn smart_init(&self) -> Vec<Option<usize>> {
        let mut votes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for cands in &self.candidates {
            for c in cands {
                for &pair in &c.pairs {
                    *votes.entry(pair).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<((usize, usize), usize)> = votes.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut m = vec![None; self.pvars.len()];
        let mut used = vec![false; self.gvars.len()];
        for ((x, y), _) in ranked {
            if m[x].is_none() && !used[y] {
                m[x] = Some(y);
                used[y] = true;
            }
        }
        m
    }

    fn random_init(&self, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut m = vec![None; self.pvars.len()];
        let mut used = vec![false; self.gvars.len()];
        for (x, pv) in self.pvars.iter().enumerate() {
            let options: Vec<usize> = (0..self.gvars.len())
                .filter(|&y| !used[y] && self.gvars[y].kind == pv.kind)
                .collect();
            if let Some(&y) = options.choose(rng) {
                m[x] = Some(y);
                used[y] = true;
            }
        }
        m
    }

    /// Steepest-ascent hill climbing over add/change/swap/remove moves.
    fn climb(&self, mut m: Vec<Option<usize>>) -> (usize, Vec<Option<usize>>) {
        let mut owner: Vec<Option<usize>> = vec![None; self.gvars.len()];
        for (x, y) in m.iter().enumerate() {
            if let Some(y) = y {
                owner[*y] = Some(x);
            }
        }
        let mut state = self.state(&m);
        let mut scratch = Vec::new();
        loop {
            let mut best: Option<(isize, Move)> = None;
            for x in 0..self.pvars.len() {
                if self.clauses_of[x].is_empty() {
                    continue;
                }
                let kind = self.pvars[x].kind;
                for (y, gv) in self.gvars.iter().enumerate() {
                    if gv.kind != kind || m[x] == Some(y) {
                        continue;
                    }
                    let old = m[x];
                    let other = owner[y];
                    m[x] = Some(y);
                    if let Some(z) = other {
                        m[z] = old;
                    }
                    let changed: &[usize] = match other {
                        Some(z) => &[x, z],
                        None => &[x],
                    };
                    let d = self.delta(&state, &m, changed, &mut scratch);
                    m[x] = old;
                    if let Some(z) = other {
                        m[z] = Some(y);
                    }
                    if d > 0 && best.as_ref().is_none_or(|(bd, _)| d > *bd) {
                        best = Some((d, Move::Assign { x, y }));
                    }
                }
                if m[x].is_some() {
                    let old = m[x];
                    m[x] = None;
                    let d = self.delta(&state, &m, &[x], &mut scratch);
                    m[x] = old;
                    if d > 0 && best.as_ref().is_none_or(|(bd, _)| d > *bd) {
                        best = Some((d, Move::Remove { x }));
                    }
                }
            }
            let Some((_, mv)) = best else {
                return (state.matched, m);
            };
            match mv {
                Move::Assign { x, y } => {
                    let old = m[x];
                    if let Some(z) = owner[y] {
                        m[z] = old;
                        owner[y] = None;
                        if let Some(o) = old {
                            owner[o] = Some(z);
                        }
                    } else if let Some(o) = old {
                        owner[o] = None;
                    }
                    m[x] = Some(y);
                    owner[y] = Some(x);
                }
                Move::Remove { x } => {
                    if let Some(o) = m[x] {
                        owner[o] = None;
                    }
                    m[x] = None;
                }
            }
            state = self.state(&m);
        }
    }

    /// Concrete clause pairs realizing the matched count under `m`.
    fn pairs(&self, m: &[Option<usize>]) -> Vec<(usize, usize)> {
        let mut next = vec![0usize; self.class_members.len()];
        let mut out = Vec::new();
        for i in 0..self.candidates.len() {
            if let Some(c) = self.hit(i, m) {
                if next[c] < self.class_members[c].len() {
                    out.push((i, self.class_members[c][next[c]]));
                    next[c] += 1;
                }
            }
        }
        out
    }

    fn mapping(&self, m: &[Option<usize>]) -> VariableMapping {
        VariableMapping {
            pairs: m
                .iter()
                .enumerate()
                .filter_map(|(x, y)| y.map(|y| (self.pvars[x], self.gvars[y])))
                .collect(),
        }
    }
}

enum Move {
    Assign { x: usize, y: usize },
    Remove { x: usize },
}

struct State {
    hits: Vec<Option<usize>>,
    counts: Vec<usize>,
    matched: usize,
}

/// Whether a prediction gets the zero-score treatment under `cfg`.
pub fn is_ill_formed(pred: &Drs, cfg: &EvalConfig) -> bool {
    cfg.validate_first && (pred.meta.is_malformed() || !referee::validate(pred).well_formed)
}

/// Best clause matching found by restarted hill climbing.
///
/// The first restart starts from a mapping that pairs variables sharing the
/// most compatible clauses; the others start from random kind-preserving
/// mappings drawn from a generator seeded with `cfg.seed`. Among equal
/// scores the lexicographically smallest mapping wins. The search stops
/// early once every clause on the smaller side is matched.
pub fn match_score(pred: &Drs, gold: &Drs, cfg: &EvalConfig) -> MatchResult {
    if is_ill_formed(pred, cfg) {
        return MatchResult {
            matched: 0,
            produced: pred.len(),
            gold: gold.len(),
            mapping: VariableMapping::new(),
            pairs: Vec::new(),
            ill_formed: true,
        };
    }
    let problem = Problem::new(pred, gold, cfg.default_sense);
    let ceiling = pred.len().min(gold.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Vec<Option<usize>>)> = None;
    for r in 0..cfg.restarts.max(1) {
        let init = if r == 0 {
            problem.smart_init()
        } else {
            problem.random_init(&mut rng)
        };
        let (score, m) = problem.climb(init);
        let better = match &best {
            None => true,
            Some((bs, bm)) => score > *bs || (score == *bs && m < *bm),
        };
        if better {
            best = Some((score, m));
        }
        if best.as_ref().is_some_and(|(s, _)| *s == ceiling) {
            break;
        }
    }
    let (matched, m) = best.expect("at least one restart");
    MatchResult {
        matched,
        produced: pred.len(),
        gold: gold.len(),
        mapping: problem.mapping(&m),
        pairs: problem.pairs(&m),
        ill_formed: false,
    }
}

fn match_all(preds: &[Drs], golds: &[Drs], cfg: &EvalConfig) -> Result<Vec<MatchResult>, CounterError> {
    if preds.len() != golds.len() {
        return Err(CounterError::LengthMismatch {
            pred: preds.len(),
            gold: golds.len(),
        });
    }
    if cfg.jobs <= 1 {
        return Ok(preds.iter().zip(golds).map(|(p, g)| match_score(p, g, cfg)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .expect("thread pool");
    Ok(pool.install(|| {
        preds
            .par_iter()
            .zip(golds.par_iter())
            .map(|(p, g)| match_score(p, g, cfg))
            .collect()
    }))
}

pub fn evaluate_corpus(preds: &[Drs], golds: &[Drs], cfg: &EvalConfig) -> Result<ScoreReport, CounterError> {
    let results = match_all(preds, golds, cfg)?;
    Ok(ScoreReport::from_docs(
        results.iter().map(MatchResult::doc_score).collect(),
    ))
}

/// Majority sense per concept lemma, collected from training data.
#[derive(Debug, Clone, Default)]
pub struct SenseTable {
    majority: HashMap<String, Sense>,
}

impl SenseTable {
    pub fn from_corpus<'a>(docs: impl IntoIterator<Item = &'a Drs>) -> Self {
        let mut counts: HashMap<String, BTreeMap<Sense, usize>> = HashMap::new();
        for d in docs {
            for c in d.clauses() {
                if let (PredicateKind::Concept(lemma), Some(Term::Sense(s))) = (c.predicate(), c.args().first()) {
                    *counts.entry(lemma.clone()).or_default().entry(*s).or_default() += 1;
                }
            }
        }
        let majority = counts
            .into_iter()
            .map(|(lemma, senses)| {
                // highest count, then lowest sense
                let best = senses
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(s, _)| *s)
                    .expect("non-empty");
                (lemma, best)
            })
            .collect();
        SenseTable { majority }
    }

    pub fn insert(&mut self, lemma: impl Into<String>, sense: Sense) {
        self.majority.insert(lemma.into(), sense);
    }

    pub fn majority(&self, lemma: &str) -> Option<Sense> {
        self.majority.get(lemma).copied()
    }

    /// Concept clause whose sense is not the most frequent one for its lemma.
    pub fn is_infrequent(&self, c: &Clause) -> bool {
        match (c.predicate(), c.args().first()) {
            (PredicateKind::Concept(lemma), Some(Term::Sense(s))) => self.majority(lemma) != Some(*s),
            _ => false,
        }
    }

    /// Reads `lemma<TAB>sense` lines.
    pub fn parse(text: &str) -> Option<SenseTable> {
        let mut t = SenseTable::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (lemma, sense) = line.trim().split_once(char::is_whitespace)?;
            t.insert(lemma, Sense::parse(sense.trim())?);
        }
        Some(t)
    }

    pub fn to_text(&self) -> String {
        let mut rows: Vec<_> = self.majority.iter().collect();
        rows.sort();
        rows.iter().map(|(l, s)| format!("{l}\t{s}\n")).collect()
    }
}

/// Clause categories of the detailed report, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Category {
    Operators,
    Roles,
    Concepts,
    Nouns,
    Verbs,
    Adjectives,
    Adverbs,
    Events,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Operators,
        Category::Roles,
        Category::Concepts,
        Category::Nouns,
        Category::Verbs,
        Category::Adjectives,
        Category::Adverbs,
        Category::Events,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Operators => "Operators",
            Category::Roles => "Roles",
            Category::Concepts => "Concepts",
            Category::Nouns => "Nouns",
            Category::Verbs => "Verbs",
            Category::Adjectives => "Adjectives",
            Category::Adverbs => "Adverbs",
            Category::Events => "Events",
        }
    }

    pub fn of(c: &Clause) -> Vec<Category> {
        match c.predicate() {
            PredicateKind::Operator(_) => vec![Category::Operators],
            PredicateKind::Role(_) => vec![Category::Roles],
            PredicateKind::Concept(_) => {
                let mut out = vec![Category::Concepts];
                if let Some(Term::Sense(s)) = c.args().first() {
                    out.push(match s.pos {
                        SensePos::Noun => Category::Nouns,
                        SensePos::Verb => Category::Verbs,
                        SensePos::Adjective => Category::Adjectives,
                        SensePos::Adverb => Category::Adverbs,
                    });
                }
                if matches!(c.args().get(1), Some(Term::Var(v)) if v.kind == VarKind::Event) {
                    out.push(Category::Events);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CategoryScore {
    /// Matched predicted clauses of this category.
    pub matched_pred: usize,
    /// Matched gold clauses of this category.
    pub matched_gold: usize,
    pub produced: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CategoryScore {
    fn finish(&mut self) {
        self.precision = ratio(self.matched_pred, self.produced);
        self.recall = ratio(self.matched_gold, self.gold);
        self.f1 = f1(self.precision, self.recall);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetailedReport {
    pub score: ScoreReport,
    pub categories: Vec<(Category, CategoryScore)>,
    pub perfect_sense_f1: f64,
    pub infrequent_sense_f1: Option<f64>,
    pub ill_formed: usize,
    pub perfect: usize,
    pub zero: usize,
}

impl DetailedReport {
    pub fn category(&self, c: Category) -> &CategoryScore {
        &self
            .categories
            .iter()
            .find(|(k, _)| *k == c)
            .expect("all categories present")
            .1
    }

    /// (label, value) rows in report order; F-scores as percentages.
    pub fn rows(&self) -> Vec<(String, Option<f64>)> {
        let mut rows = vec![
            ("Prec".to_string(), Some(self.score.precision * 100.0)),
            ("Rec".to_string(), Some(self.score.recall * 100.0)),
            ("F1".to_string(), Some(self.score.f1 * 100.0)),
        ];
        for (c, s) in &self.categories {
            rows.push((c.label().to_string(), Some(s.f1 * 100.0)));
        }
        rows.push(("Perfect sense".into(), Some(self.perfect_sense_f1 * 100.0)));
        rows.push(("Infreq. sense".into(), self.infrequent_sense_f1.map(|f| f * 100.0)));
        rows.push(("# illformed".into(), Some(self.ill_formed as f64)));
        rows.push(("# perfect".into(), Some(self.perfect as f64)));
        rows.push(("# zero".into(), Some(self.zero as f64)));
        rows
    }
}

impl fmt::Display for DetailedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, value) in self.rows() {
            match value {
                Some(v) if label.starts_with('#') => writeln!(f, "{label:<16}{v:>8.0}")?,
                Some(v) => writeln!(f, "{label:<16}{v:>8.1}")?,
                None => writeln!(f, "{label:<16}{:>8}", "-")?,
            }
        }
        Ok(())
    }
}

/// Per-category breakdown under the mapping chosen by `match_score`.
///
/// `senses` is the training-set majority table; without it the infrequent
/// sense score is omitted.
pub fn detailed_report(
    preds: &[Drs],
    golds: &[Drs],
    cfg: &EvalConfig,
    senses: Option<&SenseTable>,
) -> Result<DetailedReport, CounterError> {
    let results = match_all(preds, golds, cfg)?;
    let mut cats: BTreeMap<Category, CategoryScore> =
        Category::ALL.iter().map(|c| (*c, CategoryScore::default())).collect();
    let mut infreq = CategoryScore::default();

    for ((pred, gold), res) in preds.iter().zip(golds).zip(&results) {
        let pred_hit: Vec<bool> = {
            let mut v = vec![false; pred.len()];
            for &(i, _) in &res.pairs {
                v[i] = true;
            }
            v
        };
        let gold_hit: Vec<bool> = {
            let mut v = vec![false; gold.len()];
            for &(_, j) in &res.pairs {
                v[j] = true;
            }
            v
        };
        for (c, hit) in pred.clauses().iter().zip(&pred_hit) {
            for cat in Category::of(c) {
                let s = cats.get_mut(&cat).unwrap();
                s.produced += 1;
                s.matched_pred += *hit as usize;
            }
            if let Some(t) = senses {
                if t.is_infrequent(c) {
                    infreq.produced += 1;
                    infreq.matched_pred += *hit as usize;
                }
            }
        }
        for (c, hit) in gold.clauses().iter().zip(&gold_hit) {
            for cat in Category::of(c) {
                let s = cats.get_mut(&cat).unwrap();
                s.gold += 1;
                s.matched_gold += *hit as usize;
            }
            if let Some(t) = senses {
                if t.is_infrequent(c) {
                    infreq.gold += 1;
                    infreq.matched_gold += *hit as usize;
                }
            }
        }
    }
    for s in cats.values_mut() {
        s.finish();
    }
    infreq.finish();

    let score = ScoreReport::from_docs(results.iter().map(MatchResult::doc_score).collect());
    let perfect_sense_f1 = if cfg.default_sense {
        score.f1
    } else {
        let relaxed = EvalConfig {
            default_sense: true,
            ..cfg.clone()
        };
        evaluate_corpus(preds, golds, &relaxed)?.f1
    };
    Ok(DetailedReport {
        ill_formed: score.ill_formed_count,
        perfect: score.per_doc_f1.iter().filter(|f| **f == 1.0).count(),
        zero: score.per_doc_f1.iter().filter(|f| **f == 0.0).count(),
        categories: cats.into_iter().collect(),
        perfect_sense_f1,
        infrequent_sense_f1: senses.map(|_| infreq.f1),
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drs::{parse_clause, parse_document};

    const NEGATION_EXAMPLE: &str = include_str!("../tests/data/negation_example.drs");

    fn negation_example() -> Drs {
        parse_document(NEGATION_EXAMPLE).unwrap()
    }

    fn without_t2() -> Drs {
        let t2 = Variable::new(VarKind::Time, 2);
        negation_example().without(|c| c.variables().any(|v| v == t2))
    }

    #[test]
    fn identical_clauses_match_under_identity() {
        let c = parse_clause("b2 Time e1 t1").unwrap();
        let m = VariableMapping::identity(c.variables());
        assert!(clause_match(&c, &c, &m, &EvalConfig::default()));
    }

    #[test]
    fn sense_relaxation() {
        let p = parse_clause("b2 be \"v.03\" e1").unwrap();
        let g = parse_clause("b2 be \"v.01\" e1").unwrap();
        let m = VariableMapping::identity(p.variables());
        let strict = EvalConfig::default();
        let relaxed = EvalConfig {
            default_sense: true,
            ..EvalConfig::default()
        };
        assert!(clause_match(&p, &g, &m, &relaxed));
        assert!(!clause_match(&p, &g, &m, &strict));
    }

    #[test]
    fn mapping_rejects_kind_change_and_collisions() {
        let mut m = VariableMapping::new();
        let b1 = Variable::new(VarKind::Box, 1);
        let b2 = Variable::new(VarKind::Box, 2);
        let x1 = Variable::new(VarKind::Entity, 1);
        assert!(m.insert(b1, x1).is_err());
        m.insert(b1, b2).unwrap();
        assert!(m.insert(b2, b2).is_err());
    }

    #[test]
    fn negation_example_self_score() {
        let d = negation_example();
        let r = match_score(&d, &d, &EvalConfig::default());
        assert_eq!((r.matched, r.produced, r.gold), (17, 17, 17));
        assert_eq!(r.f1(), 1.0);
        let o = brute_force_match(&d, &d, &EvalConfig::default()).unwrap();
        assert_eq!(o.matched, 17);
    }

    #[test]
    fn negation_example_minus_t2() {
        let cfg = EvalConfig::default();
        let pred = without_t2();
        let oracle = brute_force_match(&pred, &negation_example(), &cfg).unwrap();
        assert_eq!(oracle.matched, 13);
        let r = match_score(&pred, &negation_example(), &cfg);
        assert_eq!(r.matched, 13);
        assert_eq!(r.precision(), 1.0);
        assert!((r.recall() - 13.0 / 17.0).abs() < 1e-12);
        assert!((r.f1() - 26.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_limit() {
        let big =
            negation_example().with_clauses([parse_clause("b4 REF x2").unwrap(), parse_clause("b4 REF x3").unwrap()]);
        let err = brute_force_match(&big, &negation_example(), &EvalConfig::default()).unwrap_err();
        assert_eq!(err, CounterError::OracleLimitExceeded { vars: 10, limit: 8 });
    }

    #[test]
    fn swapped_boxes_still_match_fully() {
        let d = negation_example();
        let swapped = d.map_vars(|v| match (v.kind, v.index) {
            (VarKind::Box, 1) => Variable::new(VarKind::Box, 3),
            (VarKind::Box, 3) => Variable::new(VarKind::Box, 1),
            _ => v,
        });
        let r = match_score(&swapped, &d, &EvalConfig::default());
        assert_eq!(r.matched, 17);
        assert_eq!(
            r.mapping.get(Variable::new(VarKind::Box, 3)),
            Some(Variable::new(VarKind::Box, 1))
        );
    }

    #[test]
    fn ill_formed_prediction_scores_zero() {
        let bad = negation_example().with_clauses([parse_clause("b2 POSSIBILITY b1").unwrap()]);
        let r = match_score(&bad, &negation_example(), &EvalConfig::default());
        assert!(r.ill_formed);
        assert_eq!((r.matched, r.produced), (0, 18));
        assert_eq!(r.f1(), 0.0);
        let lax = EvalConfig {
            validate_first: false,
            ..EvalConfig::default()
        };
        assert_eq!(match_score(&bad, &negation_example(), &lax).matched, 17);
    }

    #[test]
    fn corpus_aggregation() {
        let g = vec![negation_example(), without_t2()];
        let r = evaluate_corpus(&g, &g, &EvalConfig::default()).unwrap();
        assert_eq!(r.f1, 1.0);

        let bad = negation_example().with_clauses([parse_clause("b2 POSSIBILITY b1").unwrap()]);
        let preds = vec![negation_example(), bad];
        let golds = vec![negation_example(), negation_example()];
        let r = evaluate_corpus(&preds, &golds, &EvalConfig::default()).unwrap();
        // matched 17 + 0; gold 17 + 17; produced 17 + 18
        assert!((r.recall - 17.0 / 34.0).abs() < 1e-12);
        assert!((r.precision - 17.0 / 35.0).abs() < 1e-12);
        assert_eq!(r.ill_formed_count, 1);
        assert_eq!(r.per_doc_f1, vec![1.0, 0.0]);
    }

    #[test]
    fn corpus_length_checks() {
        let err = evaluate_corpus(&[negation_example()], &[], &EvalConfig::default()).unwrap_err();
        assert_eq!(err, CounterError::LengthMismatch { pred: 1, gold: 0 });
        let r = evaluate_corpus(&[], &[], &EvalConfig::default()).unwrap();
        assert_eq!((r.matched, r.produced, r.gold), (0, 0, 0));
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn parallel_scoring_matches_sequential() {
        let g = vec![negation_example(), without_t2(), negation_example()];
        let p = vec![without_t2(), negation_example(), negation_example()];
        let seq = evaluate_corpus(&p, &g, &EvalConfig::default()).unwrap();
        let par = evaluate_corpus(
            &p,
            &g,
            &EvalConfig {
                jobs: 3,
                ..EvalConfig::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn detailed_self_score() {
        let g = vec![negation_example()];
        let r = detailed_report(&g, &g, &EvalConfig::default(), Some(&SenseTable::from_corpus(&g))).unwrap();
        for c in Category::ALL {
            let s = r.category(c);
            if s.gold > 0 {
                assert_eq!(s.f1, 1.0, "{c:?}");
            }
        }
        // NEGATION, 4x REF, TPR, PRESUPPOSITION
        assert_eq!(r.category(Category::Operators).gold, 7);
        assert_eq!(r.category(Category::Concepts).gold, 4);
        assert_eq!(r.category(Category::Verbs).gold, 1);
        assert_eq!(r.category(Category::Events).gold, 1);
        assert_eq!(r.perfect, 1);
        assert_eq!(r.perfect_sense_f1, 1.0);
    }

    #[test]
    fn wrong_sense_only_hurts_strict_scores() {
        let gold = negation_example();
        let be = parse_clause("b2 be \"v.03\" e1").unwrap();
        let pred = gold
            .without(|c| *c == be)
            .with_clauses([parse_clause("b2 be \"v.01\" e1").unwrap()]);
        let r = detailed_report(&[pred], &[gold], &EvalConfig::default(), None).unwrap();
        assert!(r.category(Category::Concepts).f1 < 1.0);
        assert!((r.category(Category::Concepts).f1 - 0.75).abs() < 1e-12);
        assert!((r.score.f1 - 16.0 / 17.0).abs() < 1e-12);
        assert_eq!(r.perfect_sense_f1, 1.0);
        assert_eq!(r.infrequent_sense_f1, None);
    }

    #[test]
    fn infrequent_sense_restricts_to_minority_senses() {
        let gold = negation_example();
        let mut table = SenseTable::default();
        table.insert("be", Sense::parse("v.01").unwrap());
        table.insert("time", Sense::parse("n.08").unwrap());
        table.insert("city", Sense::parse("n.01").unwrap());
        let r = detailed_report(
            std::slice::from_ref(&gold),
            std::slice::from_ref(&gold),
            &EvalConfig::default(),
            Some(&table),
        )
        .unwrap();
        assert_eq!(r.infrequent_sense_f1, Some(1.0));
    }

    #[test]
    fn relaxed_senses_match_one_to_one() {
        let p = parse_document("b1 REF e1\nb1 be \"v.01\" e1\nb1 be \"v.02\" e1\n").unwrap();
        let g = parse_document("b1 REF e1\nb1 be \"v.03\" e1\n").unwrap();
        let cfg = EvalConfig {
            default_sense: true,
            validate_first: false,
            ..EvalConfig::default()
        };
        assert_eq!(match_score(&p, &g, &cfg).matched, 2);
        assert_eq!(brute_force_match(&p, &g, &cfg).unwrap().matched, 2);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = match_score(
            &without_t2(),
            &negation_example(),
            &EvalConfig {
                seed: 5,
                ..EvalConfig::default()
            },
        );
        let b = match_score(
            &without_t2(),
            &negation_example(),
            &EvalConfig {
                seed: 5,
                ..EvalConfig::default()
            },
        );
        assert_eq!(a, b);
    }
}
