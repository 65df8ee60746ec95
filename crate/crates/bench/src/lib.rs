//! Shared inputs for the benchmarks.

use drskit::drs::Drs;
use drskit::neural::{CharCnnConfig, Model, ModelConfig, SourceIds, Vocabs};
use drskit::synth::{fixture_corpus, toy_corpus};

pub const NEGATION_EXAMPLE: &str = include_str!("../../core/tests/data/negation_example.drs");

/// Prediction/gold pairs: each fixture document against a copy with its last
/// clause dropped.
pub fn scoring_pairs(n: usize) -> Vec<(Drs, Drs)> {
    fixture_corpus(n, 17)
        .into_iter()
        .map(|gold| {
            let keep = gold.len().saturating_sub(1).max(gold.len().min(1));
            let pred = Drs::from_clauses(gold.clauses()[..keep].iter().cloned());
            (pred, gold)
        })
        .collect()
}

/// A small untrained parser and the source ids of its training sentences.
pub fn small_model(hidden: usize) -> (Model, Vec<SourceIds>) {
    let cfg = ModelConfig {
        hidden_size: hidden,
        target_embedding_dim: hidden,
        word_dim: hidden,
        char_cnn: CharCnnConfig {
            widths: vec![1, 2, 3],
            filters_per_width: hidden / 3,
            char_embedding_dim: 16,
        },
        min_target_occ: 1,
        ..ModelConfig::default()
    };
    let docs = toy_corpus(20);
    let refs: Vec<&Drs> = docs.iter().collect();
    let vocabs = Vocabs::build(&refs, &cfg).expect("toy corpus builds");
    let model = Model::new(cfg.clone(), vocabs, None).expect("valid config");
    let sources = docs
        .iter()
        .map(|d| model.vocabs.example(d, &cfg).expect("example").source)
        .collect();
    (model, sources)
}
