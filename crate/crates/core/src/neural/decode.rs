use std::cmp::Ordering;

use rayon::prelude::*;

use crate::drs::Drs;
use crate::seqio::{delinearize, TargetToken, BOS, EOS, PAD, UNK};

use super::data::{SourceIds, SourceText};
use super::model::{DecoderState, EncoderOutput, Model};
use super::ops::argmax;
use super::NeuralError;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated ids, ending in EOS when finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability divided by the number of generated tokens.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            self.log_prob
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Ids without the closing EOS.
    pub fn body(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

fn start(model: &Model, src: &SourceIds) -> Result<(Vec<EncoderOutput>, DecoderState), NeuralError> {
    let enc = model.encode_source(src)?;
    let state = model.initial_state(&enc)?;
    Ok((enc, state))
}

/// Argmax decoding.
pub fn greedy_decode(model: &Model, src: &SourceIds, max_steps: usize) -> Result<Hypothesis, NeuralError> {
    let (enc, mut state) = start(model, src)?;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    let mut prev = BOS;
    while hyp.tokens.len() < max_steps {
        let out = model.decode_step(&enc, &state, prev)?;
        let tok = argmax(&out.log_probs);
        hyp.log_prob += out.log_probs[tok];
        hyp.tokens.push(tok);
        if tok == EOS {
            hyp.finished = true;
            break;
        }
        state = out.state;
        prev = tok;
    }
    Ok(hyp)
}

struct Live {
    hyp: Hypothesis,
    state: DecoderState,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    a.score() > b.score()
}

/// Beam search ranking partial hypotheses by summed log-probability and
/// choosing the final output by length-normalized score. With width one
/// this is exactly greedy decoding; with larger widths the greedy output is
/// kept as a candidate so the result never scores below it.
pub fn beam_decode(
    model: &Model,
    src: &SourceIds,
    beam_size: usize,
    max_steps: usize,
) -> Result<Hypothesis, NeuralError> {
    if beam_size == 0 {
        return Err(NeuralError::InvalidBeam);
    }
    let (enc, state) = start(model, src)?;
    let mut live = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        state,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_steps {
        let mut outs = Vec::with_capacity(live.len());
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, l) in live.iter().enumerate() {
            let prev = l.hyp.tokens.last().copied().unwrap_or(BOS);
            let out = model.decode_step(&enc, &l.state, prev)?;
            for (tok, lp) in out.log_probs.iter().enumerate() {
                cands.push((l.hyp.log_prob + lp, i, tok));
            }
            outs.push(out);
        }
        let keep = beam_size.min(cands.len());
        let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        };
        if keep < cands.len() {
            cands.select_nth_unstable_by(keep - 1, order);
            cands.truncate(keep);
        }
        cands.sort_by(order);
        let mut next = Vec::with_capacity(keep);
        for (lp, i, tok) in cands {
            let mut tokens = live[i].hyp.tokens.clone();
            tokens.push(tok);
            let hyp = Hypothesis {
                tokens,
                log_prob: lp,
                finished: tok == EOS,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next.push(Live {
                    hyp,
                    state: outs[i].state.clone(),
                });
            }
        }
        live = next;
        if finished.len() >= beam_size || live.is_empty() {
            break;
        }
    }
    let mut pool = finished;
    if pool.is_empty() {
        pool.extend(live.into_iter().map(|l| l.hyp));
    }
    if beam_size > 1 {
        pool.push(greedy_decode(model, src, max_steps)?);
    }
    let mut best = pool.swap_remove(0);
    for h in pool {
        if better(&h, &best) {
            best = h;
        }
    }
    Ok(best)
}

/// Turns decoder output back into a DRS. Special ids, truncation and
/// unrecoverable clauses are recorded as diagnostics, which mark the
/// result as malformed.
pub fn hypothesis_to_drs(model: &Model, hyp: &Hypothesis) -> Drs {
    let mut diagnostics = Vec::new();
    let mut tokens = Vec::new();
    for &id in hyp.body() {
        if [PAD, UNK, BOS, EOS].contains(&id) {
            diagnostics.push(format!(
                "decoder produced special symbol {}",
                model.vocabs.target.symbol(id)
            ));
            continue;
        }
        match TargetToken::from_symbol(model.vocabs.target.symbol(id)) {
            Some(t) => tokens.push(t),
            None => diagnostics.push(format!("unreadable symbol {}", model.vocabs.target.symbol(id))),
        }
    }
    if !hyp.finished {
        diagnostics.push("decoding stopped at the step limit".into());
    }
    let d = delinearize(&tokens);
    diagnostics.extend(d.diagnostics);
    let mut drs = d.drs;
    drs.meta.diagnostics = diagnostics;
    drs
}

/// Parses one sentence; the output carries the sentence as metadata.
pub fn predict(model: &Model, src: &SourceText, beam_size: usize, max_steps: usize) -> Result<Drs, NeuralError> {
    let ids = model.vocabs.source_ids(src, &model.config)?;
    let hyp = beam_decode(model, &ids, beam_size, max_steps)?;
    let mut drs = hypothesis_to_drs(model, &hyp);
    drs.meta.sentence = Some(src.tokens.join(" "));
    Ok(drs)
}

/// Parses many sentences, in parallel when `jobs > 1`. Output order
/// matches input order.
pub fn predict_all(
    model: &Model,
    sources: &[SourceText],
    beam_size: usize,
    max_steps: usize,
    jobs: usize,
) -> Result<Vec<Drs>, NeuralError> {
    if jobs <= 1 {
        return sources
            .iter()
            .map(|s| predict(model, s, beam_size, max_steps))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| NeuralError::Runtime(e.to_string()))?;
    pool.install(|| {
        sources
            .par_iter()
            .map(|s| predict(model, s, beam_size, max_steps))
            .collect()
    })
}
