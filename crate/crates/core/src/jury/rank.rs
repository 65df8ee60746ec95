//! Worst documents of a system and its largest gains over a baseline.

use std::cmp::Ordering;

use serde::Serialize;

use super::JuryError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedDoc {
    pub index: usize,
    pub id: String,
    /// F1 in the worst list, `system - baseline` in the relative list.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub worst: Vec<RankedDoc>,
    pub best_relative: Vec<RankedDoc>,
}

/// Worst `k` by system F1 ascending and best `k` by gain descending; ties
/// are broken by document id.
pub fn rank_documents(system: &[f64], baseline: &[f64], ids: &[String], k: usize) -> Result<Ranking, JuryError> {
    for (what, got) in [("baseline scores", baseline.len()), ("document ids", ids.len())] {
        if got != system.len() {
            return Err(JuryError::LengthMismatch {
                what,
                expected: system.len(),
                got,
            });
        }
    }
    let ranked = |values: Vec<f64>, order: fn(f64, f64) -> Ordering| -> Vec<RankedDoc> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| order(values[a], values[b]).then_with(|| ids[a].cmp(&ids[b])));
        idx.into_iter()
            .take(k)
            .map(|i| RankedDoc {
                index: i,
                id: ids[i].clone(),
                value: values[i],
            })
            .collect()
    };
    let deltas = system.iter().zip(baseline).map(|(s, b)| s - b).collect();
    Ok(Ranking {
        worst: ranked(system.to_vec(), |a, b| a.total_cmp(&b)),
        best_relative: ranked(deltas, |a, b| b.total_cmp(&a)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:02}")).collect()
    }

    #[test]
    fn zero_heads_worst_list() {
        let r = rank_documents(&[0.5, 0.0, 0.9], &[0.5, 0.0, 0.9], &ids(3), 2).unwrap();
        assert_eq!(r.worst[0].id, "d01");
        assert_eq!(r.worst[0].value, 0.0);
        assert!(r.best_relative.iter().all(|d| d.value == 0.0));
        // equal deltas fall back to id order
        assert_eq!(r.best_relative[0].id, "d00");
    }

    #[test]
    fn gains_sorted_descending() {
        let base = [0.3, 0.2, 0.5, 0.1, 0.4];
        let gains = [0.1, 0.554, 0.0, 0.482, 0.3];
        let sys: Vec<f64> = base.iter().zip(&gains).map(|(b, g)| b + g).collect();
        let r = rank_documents(&sys, &base, &ids(5), 3).unwrap();
        let head: Vec<&str> = r.best_relative.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(head, ["d01", "d03", "d04"]);
        assert!((r.best_relative[0].value - 0.554).abs() < 1e-12);
        assert!((r.best_relative[1].value - 0.482).abs() < 1e-12);
    }

    #[test]
    fn ties_by_id_not_position() {
        let names: Vec<String> = ["z", "a", "m"].iter().map(|s| s.to_string()).collect();
        let r = rank_documents(&[0.2, 0.2, 0.2], &[0.0; 3], &names, 3).unwrap();
        let order: Vec<&str> = r.worst.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(order, ["a", "m", "z"]);
    }

    #[test]
    fn misaligned_rejected() {
        assert!(matches!(
            rank_documents(&[0.1, 0.2], &[0.1], &ids(2), 1),
            Err(JuryError::LengthMismatch { .. })
        ));
    }
}
