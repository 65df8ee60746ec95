//! Toolkit for clause-format Discourse Representation Structures: parsing and
//! printing, well-formedness checks, clause-matching evaluation, a
//! character-aware sequence-to-sequence parser and experiment analysis.

pub mod counter;
pub mod drs;
pub mod jury;
pub mod neural;
pub mod referee;
pub mod seqio;
pub mod synth;

pub use counter::{
    brute_force_match, clause_match, detailed_report, evaluate_corpus, match_score, DetailedReport, EvalConfig,
    MatchResult, ScoreReport, VariableMapping,
};
pub use drs::{classify_predicate, parse_clause, parse_corpus, parse_document, render, Clause, Drs, Term, Variable};
pub use jury::{
    jury_report, significance, JuryReport, PhenomenonCatalog, RunSet, SignificanceMode, SignificanceResult,
};
pub use neural::{predict, train, Model, ModelConfig, NeuralError, TrainLog, TrainOptions};
pub use referee::{validate, ValidationReport};
pub use seqio::{delinearize, linearize, CorpusSplit, Schedule, Tier, Vocab};
