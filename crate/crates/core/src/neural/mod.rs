//! Character-aware attentional sequence-to-sequence parser with
//! hand-derived gradients.

pub mod checkpoint;
mod config;
mod data;
mod decode;
mod gradcheck;
mod model;
mod ops;
mod params;
mod train;

use thiserror::Error;

use crate::seqio::SeqError;

pub use config::{Channel, CharCnnConfig, EncoderMode, ModelConfig};
pub use data::{Example, FrozenEmbeddings, SourceIds, SourceText, Vocabs};
pub use decode::{beam_decode, greedy_decode, hypothesis_to_drs, predict, predict_all, Hypothesis};
pub use gradcheck::{grad_check, relative_error, ExampleObjective, GradCheckReport, Objective, RELATIVE_FLOOR};
pub use model::{DecoderState, EncoderOutput, Feeding, Model, StepOutput};
pub use ops::attend;
pub use params::{clip_global_norm, Adam, Layout, Slot, SlotKind, Tensors};
pub use train::{corpus_f1, train, EpochRecord, TrainLog, TrainOptions};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("config {key}: {reason}")]
    Config { key: String, reason: String },
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("token {index} has no characters")]
    EmptyToken { index: usize },
    #[error("the file channel needs a loaded embedding table")]
    MissingEmbeddingTable,
    #[error("embedding file line {line}: {reason}")]
    EmbeddingFile { line: usize, reason: String },
    #[error("no tags for channel {channel}")]
    MissingTags { channel: String },
    #[error("document {id} has no sentence")]
    MissingSentence { id: String },
    #[error("{0} is not enabled in this model")]
    ChannelDisabled(&'static str),
    #[error("non-finite loss at {detail}")]
    NonFiniteLoss { detail: String },
    #[error("beam size must be at least 1")]
    InvalidBeam,
    #[error("finite-difference step must be positive")]
    InvalidEpsilon,
    #[error("training schedule has no phase with epochs")]
    EmptySchedule,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drs::Drs;
    use crate::seqio::EOS;
    use crate::synth::toy_corpus;

    fn tiny(encoders: EncoderMode) -> ModelConfig {
        ModelConfig {
            hidden_size: 6,
            target_embedding_dim: 5,
            word_dim: 4,
            tag_dim: 3,
            char_cnn: CharCnnConfig {
                widths: vec![1, 2, 3],
                filters_per_width: 3,
                char_embedding_dim: 4,
            },
            encoders,
            min_target_occ: 1,
            init_scale: 0.5,
            seed: 7,
            ..ModelConfig::default()
        }
    }

    fn setup(cfg: ModelConfig, n: usize) -> (Model, Vec<Example>, Vec<Drs>) {
        let mut docs = toy_corpus(n);
        for d in docs.iter_mut() {
            let tags: Vec<String> = d.meta.tokens().iter().map(|t| format!("T{}", t.len() % 4)).collect();
            d.meta.tags.insert("sem".into(), tags);
        }
        let refs: Vec<&Drs> = docs.iter().collect();
        let vocabs = Vocabs::build(&refs, &cfg).unwrap();
        let model = Model::new(cfg.clone(), vocabs, None).unwrap();
        let examples = docs.iter().map(|d| model.vocabs.example(d, &cfg).unwrap()).collect();
        (model, examples, docs)
    }

    #[test]
    fn default_char_cnn_is_300_wide() {
        let (model, ex, _) = setup(
            ModelConfig {
                min_target_occ: 1,
                ..ModelConfig::default()
            },
            3,
        );
        let out = model.char_cnn_embed(&ex[0].source.chars).unwrap();
        assert_eq!(out.ncols(), 300);
        assert_eq!(model.source_dim(), 600);
    }

    #[test]
    fn empty_token_is_rejected() {
        let (model, _, _) = setup(tiny(EncoderMode::One), 3);
        assert!(matches!(
            model.char_cnn_embed(&[vec![3], vec![]]),
            Err(NeuralError::EmptyToken { index: 1 })
        ));
    }

    #[test]
    fn encoder_context_is_mean_of_states() {
        let (model, ex, _) = setup(tiny(EncoderMode::Two), 4);
        for out in model.encode_source(&ex[2].source).unwrap() {
            let mean = out.states.mean_axis(ndarray::Axis(0)).unwrap();
            for (a, b) in mean.iter().zip(out.context.iter()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
            }
        }
        let one = ndarray::Array2::from_elem((1, model.source_dim()), 0.3);
        let out = model.encode(one, 0).unwrap();
        assert_eq!(out.states.nrows(), 1);
        assert_eq!(out.states.row(0), out.context);
    }

    #[test]
    fn init_decoder_shapes() {
        let (m1, _, _) = setup(tiny(EncoderMode::One), 3);
        let w1 = m1.layout.find("dec.init.w").unwrap();
        assert_eq!(m1.layout.slots[w1].rows, 12);
        let (m2, _, _) = setup(tiny(EncoderMode::Two), 3);
        let w2 = m2.layout.find("dec.init.w").unwrap();
        assert_eq!(m2.layout.slots[w2].rows, 24);
        let z = vec![0.0; 12];
        let d0 = m1.init_decoder(&[&z]).unwrap();
        assert_eq!(d0.h, vec![0.0; 6]);
        assert!(matches!(
            m2.init_decoder(&[&z]),
            Err(NeuralError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decode_step_distributions() {
        let (model, ex, _) = setup(tiny(EncoderMode::Two), 4);
        let enc = model.encode_source(&ex[1].source).unwrap();
        let mut state = model.initial_state(&enc).unwrap();
        assert!(state.h.iter().all(|v| v.abs() < 1.0));
        let mut prev = crate::seqio::BOS;
        for &t in &ex[1].target[..5] {
            let out = model.decode_step(&enc, &state, prev).unwrap();
            let total: f64 = out.log_probs.iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(out.log_probs.iter().all(|l| l.exp() > 0.0 && l.exp() < 1.0));
            for w in &out.attention {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(w.iter().all(|x| *x >= 0.0));
            }
            state = out.state;
            prev = t;
        }
    }

    fn check(cfg: ModelConfig, example: usize) -> GradCheckReport {
        let (mut model, ex, _) = setup(cfg, 6);
        let e = ex[example].clone();
        let mut obj = ExampleObjective {
            model: &mut model,
            example: &e,
        };
        grad_check(&mut obj, 1e-5, 120, 11).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let r = check(tiny(EncoderMode::One), 3);
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
        assert!(r.checked >= 50);
    }

    #[test]
    fn dual_encoder_with_tags_and_two_layers() {
        let mut cfg = tiny(EncoderMode::Two);
        cfg.encoder_layers = 2;
        cfg.label_smoothing = 0.1;
        cfg.channels.push(Channel::Tag("sem".into()));
        let r = check(cfg, 5);
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
    }

    #[test]
    fn beam_one_is_greedy() {
        let (model, ex, _) = setup(tiny(EncoderMode::Two), 5);
        for e in &ex {
            let g = greedy_decode(&model, &e.source, 40).unwrap();
            let b = beam_decode(&model, &e.source, 1, 40).unwrap();
            assert_eq!(g.tokens, b.tokens);
            let wide = beam_decode(&model, &e.source, 10, 40).unwrap();
            assert!(wide.score() >= b.score());
        }
    }

    #[test]
    fn max_steps_bounds_output() {
        let (model, ex, _) = setup(tiny(EncoderMode::One), 3);
        let h = beam_decode(&model, &ex[0].source, 3, 5).unwrap();
        assert!(h.tokens.len() <= 5);
        if !h.finished {
            let d = hypothesis_to_drs(&model, &h);
            assert!(d.meta.is_malformed());
        }
        assert!(matches!(
            beam_decode(&model, &ex[0].source, 0, 5),
            Err(NeuralError::InvalidBeam)
        ));
    }

    #[test]
    fn teacher_forcing_ignores_seed() {
        let (model, ex, _) = setup(tiny(EncoderMode::One), 3);
        let a = model
            .example_loss(
                &ex[0],
                Feeding {
                    sample_prob: 0.0,
                    seed: 1,
                },
                None,
            )
            .unwrap();
        let b = model
            .example_loss(
                &ex[0],
                Feeding {
                    sample_prob: 0.0,
                    seed: 2,
                },
                None,
            )
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1, ex[0].target.len());
        assert_eq!(*ex[0].target.last().unwrap(), EOS);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (model, ex, _) = setup(tiny(EncoderMode::Two), 3);
        let text = checkpoint::to_text(&model);
        let back = checkpoint::from_text(&text).unwrap();
        assert_eq!(back.params, model.params);
        assert_eq!(back.vocabs, model.vocabs);
        assert_eq!(checkpoint::to_text(&back), text);
        let a = greedy_decode(&model, &ex[0].source, 20).unwrap();
        let b = greedy_decode(&back, &ex[0].source, 20).unwrap();
        assert_eq!(a, b);
        assert!(checkpoint::from_text(&text[..text.len() / 2]).is_err());
    }
}
