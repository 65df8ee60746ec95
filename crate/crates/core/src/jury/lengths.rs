//! Scores binned by document length in tokens.

use std::fmt::Write as _;

use serde::Serialize;

use crate::counter::ScoreReport;

use super::{JuryError, RunSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBin {
    /// Inclusive lower edge.
    pub lo: usize,
    /// Exclusive upper edge; open for the last bin.
    pub hi: Option<usize>,
    pub count: usize,
    /// Per system, micro F1 over the bin averaged over runs.
    pub f1: Vec<Option<f64>>,
}

/// Bins `[e0, e1), [e1, e2), ..., [ek, inf)` over `lengths`, one per document.
pub fn length_bins(lengths: &[usize], systems: &[RunSet], edges: &[usize]) -> Result<Vec<LengthBin>, JuryError> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(JuryError::EmptyBins);
    }
    for s in systems {
        if s.docs() != lengths.len() {
            return Err(JuryError::LengthMismatch {
                what: "documents per run",
                expected: lengths.len(),
                got: s.docs(),
            });
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); edges.len()];
    for (i, &len) in lengths.iter().enumerate() {
        let bin = edges.partition_point(|&e| e <= len);
        if bin == 0 {
            return Err(JuryError::UncoveredLength { length: len });
        }
        members[bin - 1].push(i);
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(b, m)| LengthBin {
            lo: edges[b],
            hi: edges.get(b + 1).copied(),
            count: m.len(),
            f1: systems
                .iter()
                .map(|s| {
                    (!m.is_empty()).then(|| {
                        (0..s.runs())
                            .map(|r| ScoreReport::from_docs(m.iter().map(|&i| s.doc_scores(r)[i]).collect()).f1)
                            .sum::<f64>()
                            / s.runs() as f64
                    })
                })
                .collect(),
        })
        .collect())
}

/// Plot-ready table: one row per bin, one F1 column per system.
pub fn length_csv(systems: &[String], bins: &[LengthBin]) -> String {
    let mut out = String::from("lo,hi,count");
    for s in systems {
        write!(out, ",{s}").unwrap();
    }
    out.push('\n');
    for b in bins {
        write!(
            out,
            "{},{},{}",
            b.lo,
            b.hi.map_or(String::new(), |h| h.to_string()),
            b.count
        )
        .unwrap();
        for f in &b.f1 {
            write!(out, ",{}", f.map_or(String::new(), |v| format!("{v:.6}"))).unwrap();
        }
        out.push('\n');
    }
    out
}
