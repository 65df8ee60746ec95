use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counter::{evaluate_corpus, EvalConfig};
use crate::drs::Drs;
use crate::seqio::{CorpusSplit, Tier};

use super::data::{Example, FrozenEmbeddings, SourceText, Vocabs};
use super::decode::predict;
use super::model::{Feeding, Model};
use super::params::{clip_global_norm, Adam, Tensors};
use super::{ModelConfig, NeuralError};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub phase: usize,
    pub epoch: usize,
    pub updates: usize,
    pub tokens: usize,
    /// Mean per-token loss over the epoch.
    pub loss: f64,
    pub dev_f1: Option<f64>,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phase={} epoch={} updates={} tokens={} loss={:.9}",
            self.phase, self.epoch, self.updates, self.tokens, self.loss
        )?;
        if let Some(d) = self.dev_f1 {
            write!(f, " dev_f1={d:.6}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub skipped: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch record whose parameters were kept, when dev scoring ran.
    pub best: Option<(usize, usize)>,
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "skipped={}", self.skipped)?;
        for e in &self.epochs {
            writeln!(f, "{e}")?;
        }
        if let Some((p, e)) = self.best {
            writeln!(f, "best phase={p} epoch={e}")?;
        }
        Ok(())
    }
}

/// Execution knobs that do not change the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    /// Chunks per batch whose gradients are computed in parallel and then
    /// summed in order; results depend on this value but not on timing.
    pub jobs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { jobs: 1 }
    }
}

/// Micro F1 of beam-decoded `docs` against themselves.
pub fn corpus_f1(model: &Model, docs: &[Drs], beam_size: usize) -> Result<f64, NeuralError> {
    let mut preds = Vec::with_capacity(docs.len());
    for d in docs {
        preds.push(predict(
            model,
            &SourceText::from_doc(d)?,
            beam_size,
            model.config.max_decode_steps,
        )?);
    }
    let report =
        evaluate_corpus(&preds, docs, &EvalConfig::default()).map_err(|e| NeuralError::Runtime(e.to_string()))?;
    Ok(report.f1)
}

fn batch_gradient(model: &Model, batch: &[(&Example, u64)], jobs: usize) -> Result<(Tensors, f64, usize), NeuralError> {
    let prob = model.config.scheduled_sampling_prob;
    let chunk_len = batch.len().div_ceil(jobs.max(1));
    let run = |chunk: &[(&Example, u64)]| -> Result<(Tensors, f64, usize), NeuralError> {
        let mut g = Tensors::zeros(&model.layout);
        let (mut loss, mut toks) = (0.0, 0);
        for &(ex, seed) in chunk {
            let (l, t) = model.example_loss(
                ex,
                Feeding {
                    sample_prob: prob,
                    seed,
                },
                Some(&mut g),
            )?;
            loss += l;
            toks += t;
        }
        Ok((g, loss, toks))
    };
    let parts: Vec<Result<_, _>> = if jobs > 1 {
        batch.par_chunks(chunk_len).map(run).collect()
    } else {
        batch.chunks(chunk_len).map(run).collect()
    };
    let mut parts = parts.into_iter();
    let (mut g, mut loss, mut toks) = parts.next().expect("non-empty batch")?;
    for p in parts {
        let (pg, pl, pt) = p?;
        g.add_assign(&pg);
        loss += pl;
        toks += pt;
    }
    Ok((g, loss, toks))
}

/// Trains a fresh model through the split's schedule. `on_epoch` sees every
/// log record as it is produced.
pub fn train(
    split: &CorpusSplit,
    config: ModelConfig,
    frozen: Option<FrozenEmbeddings>,
    opts: TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, TrainLog), NeuralError> {
    config.validate()?;
    if split.schedule.is_empty() {
        return Err(NeuralError::EmptySchedule);
    }
    let training: Vec<&Drs> = split.training_docs().collect();
    let vocabs = Vocabs::build(&training, &config)?;
    let mut model = Model::new(config, vocabs, frozen)?;
    let cfg = model.config.clone();

    let mut log = TrainLog::default();
    let mut examples: std::collections::BTreeMap<Tier, Vec<Example>> = Default::default();
    for (tier, docs) in &split.tiers {
        let mut kept = Vec::new();
        for d in docs {
            match model.vocabs.example(d, &cfg) {
                Ok(ex) if ex.source.len() <= cfg.max_source_tokens && ex.target.len() <= cfg.max_target_tokens => {
                    kept.push(ex)
                }
                Ok(_) | Err(NeuralError::Seq(_)) => log.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        examples.insert(*tier, kept);
    }

    let pool = (opts.jobs > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build())
        .transpose()
        .map_err(|e| NeuralError::Runtime(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut adam = Adam::new(model.layout.size, cfg.learning_rate);
    let mut best: Option<(f64, Tensors)> = None;

    for (p, phase) in split.schedule.iter().enumerate() {
        let pool_examples: Vec<&Example> = phase.tiers.iter().filter_map(|t| examples.get(t)).flatten().collect();
        if pool_examples.is_empty() {
            continue;
        }
        let mut phase_best = f64::NEG_INFINITY;
        let mut stale = 0;
        for epoch in 1..=phase.epochs {
            let mut order: Vec<usize> = (0..pool_examples.len()).collect();
            order.shuffle(&mut rng);
            let seeded: Vec<(&Example, u64)> = order.iter().map(|&i| (pool_examples[i], rng.random())).collect();
            let (mut sum_loss, mut sum_tokens, mut updates) = (0.0, 0, 0);
            for (b, batch) in seeded.chunks(cfg.batch_size).enumerate() {
                let computed = match &pool {
                    Some(tp) => tp.install(|| batch_gradient(&model, batch, opts.jobs)),
                    None => batch_gradient(&model, batch, 1),
                };
                let (mut g, loss, toks) = computed.map_err(|e| match e {
                    NeuralError::NonFiniteLoss { detail } => NeuralError::NonFiniteLoss {
                        detail: format!("phase {} epoch {epoch} batch {b}: {detail}", p + 1),
                    },
                    other => other,
                })?;
                g.scale(1.0 / toks as f64);
                if !g.is_finite() {
                    return Err(NeuralError::NonFiniteLoss {
                        detail: format!("phase {} epoch {epoch} batch {b}: non-finite gradient", p + 1),
                    });
                }
                clip_global_norm(&mut g, cfg.grad_clip);
                adam.step(&mut model.params, &g);
                model.params.renorm_embeddings(&model.layout, cfg.embedding_max_norm);
                sum_loss += loss;
                sum_tokens += toks;
                updates += 1;
            }
            let dev_f1 = if !split.dev.is_empty() && epoch % cfg.eval_every == 0 {
                Some(corpus_f1(&model, &split.dev, cfg.beam_size)?)
            } else {
                None
            };
            let rec = EpochRecord {
                phase: p + 1,
                epoch,
                updates,
                tokens: sum_tokens,
                loss: sum_loss / sum_tokens.max(1) as f64,
                dev_f1,
            };
            on_epoch(&rec);
            log.epochs.push(rec);
            if let Some(f) = dev_f1 {
                if best.as_ref().is_none_or(|(b, _)| f > *b) {
                    best = Some((f, model.params.clone()));
                    log.best = Some((p + 1, epoch));
                }
                if f > phase_best {
                    phase_best = f;
                    stale = 0;
                } else {
                    stale += 1;
                    if cfg.patience > 0 && stale >= cfg.patience {
                        break;
                    }
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, log))
}
