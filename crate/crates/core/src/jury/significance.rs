//! Paired approximate randomization over per-document scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::JuryError;

/// Largest document count that `Auto` enumerates exhaustively.
pub const EXACT_LIMIT: usize = 20;
/// Largest document count `Exact` accepts at all.
pub const MAX_EXACT: usize = 26;

/// Samples drawn from one RNG stream; streams are independent so the
/// result does not depend on how blocks are scheduled.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignificanceMode {
    /// Exact up to [`EXACT_LIMIT`] documents, sampled beyond.
    Auto {
        samples: usize,
    },
    Exact,
    Sampled {
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Sampled(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
    /// `|mean(a) - mean(b)|`.
    pub observed: f64,
    pub method: Method,
}

/// Signed sum of the paired differences under one swap pattern; bit `i` of
/// `mask` swaps document `i`.
fn pattern_sum(d: &[f64], mask: &[u64]) -> f64 {
    d.iter()
        .enumerate()
        .map(|(i, v)| if mask[i / 64] >> (i % 64) & 1 == 1 { -v } else { *v })
        .sum()
}

/// Two-sided test of whether `a` and `b` differ in mean. Each swap pattern
/// exchanges the two systems' scores on a subset of documents.
pub fn significance(
    a: &[f64],
    b: &[f64],
    mode: SignificanceMode,
    alpha: f64,
    seed: u64,
) -> Result<SignificanceResult, JuryError> {
    if a.len() != b.len() {
        return Err(JuryError::LengthMismatch {
            what: "paired scores",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(JuryError::EmptyInput);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(JuryError::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let words = n.div_ceil(64);
    let obs = pattern_sum(&d, &vec![0; words]).abs();
    // sums that are equal in exact arithmetic may differ by rounding
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let at_least = |s: f64| s.abs() >= obs - tol;

    let exact = match mode {
        SignificanceMode::Exact => true,
        SignificanceMode::Auto { .. } => n <= EXACT_LIMIT,
        SignificanceMode::Sampled { .. } => false,
    };
    let (p_value, method) = if exact {
        if n > MAX_EXACT {
            return Err(JuryError::InvalidParameter(format!(
                "exact enumeration is limited to {MAX_EXACT} documents, got {n}"
            )));
        }
        let total = 1u64 << n;
        let hits = (0..total)
            .into_par_iter()
            .filter(|&m| at_least(pattern_sum(&d, &[m])))
            .count();
        (hits as f64 / total as f64, Method::Exact)
    } else {
        let samples = match mode {
            SignificanceMode::Auto { samples } | SignificanceMode::Sampled { samples } => samples,
            SignificanceMode::Exact => unreachable!(),
        };
        if samples == 0 {
            return Err(JuryError::InvalidParameter(
                "sampled mode needs at least one sample".into(),
            ));
        }
        let blocks = samples.div_ceil(BLOCK);
        let hits: usize = (0..blocks)
            .into_par_iter()
            .map(|blk| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(blk as u64);
                let todo = BLOCK.min(samples - blk * BLOCK);
                let mut mask = vec![0u64; words];
                let mut hits = 0;
                for _ in 0..todo {
                    mask.iter_mut().for_each(|w| *w = rng.random());
                    hits += at_least(pattern_sum(&d, &mask)) as usize;
                }
                hits
            })
            .sum();
        ((hits + 1) as f64 / (samples + 1) as f64, Method::Sampled(samples))
    };
    Ok(SignificanceResult {
        p_value,
        significant: p_value < alpha,
        alpha,
        observed: obs / n as f64,
        method,
    })
}
