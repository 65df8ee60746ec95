//! Comparing systems over several training runs: run aggregation,
//! randomization tests, phenomenon subsets, length curves and document
//! rankings.

mod lengths;
mod phenomena;
mod rank;
mod report;
mod significance;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::counter::{detailed_report, CounterError, DetailedReport, DocScore, EvalConfig, SenseTable};
use crate::drs::Drs;

pub use lengths::{length_bins, length_csv, LengthBin};
pub use phenomena::{semtag_subsets, PhenomenonCatalog, SubsetReport, SubsetRow};
pub use rank::{rank_documents, RankedDoc, Ranking};
pub use report::{jury_report, JuryReport, ReportRow, RowFormat};
pub use significance::{significance, Method, SignificanceMode, SignificanceResult, EXACT_LIMIT, MAX_EXACT};

#[derive(Debug, Error)]
pub enum JuryError {
    #[error("a run set needs at least one run")]
    NoRuns,
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no documents to compare")]
    EmptyInput,
    #[error("document {index} ({id}) has no semantic tags")]
    MissingSemtags { index: usize, id: String },
    #[error("length bins need strictly increasing edges")]
    EmptyBins,
    #[error("document length {length} is below the first bin edge")]
    UncoveredLength { length: usize },
    #[error("no system named {0}")]
    UnknownSystem(String),
    #[error("catalog line {line}: {reason}")]
    CatalogFormat { line: usize, reason: String },
    #[error("{0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Counter(#[from] CounterError),
}

/// Every run of one system on a shared document list.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub system: String,
    pub predictions: Vec<Vec<Drs>>,
    pub reports: Vec<DetailedReport>,
}

impl RunSet {
    /// Scores each run against `golds`.
    pub fn score(
        system: impl Into<String>,
        predictions: Vec<Vec<Drs>>,
        golds: &[Drs],
        cfg: &EvalConfig,
        senses: Option<&SenseTable>,
    ) -> Result<RunSet, JuryError> {
        let reports = predictions
            .iter()
            .map(|p| detailed_report(p, golds, cfg, senses))
            .collect::<Result<Vec<_>, _>>()?;
        RunSet::new(system, predictions, reports)
    }

    pub fn new(
        system: impl Into<String>,
        predictions: Vec<Vec<Drs>>,
        reports: Vec<DetailedReport>,
    ) -> Result<RunSet, JuryError> {
        if reports.is_empty() {
            return Err(JuryError::NoRuns);
        }
        if predictions.len() != reports.len() {
            return Err(JuryError::LengthMismatch {
                what: "runs",
                expected: reports.len(),
                got: predictions.len(),
            });
        }
        let docs = reports[0].score.docs.len();
        for (p, r) in predictions.iter().zip(&reports) {
            for got in [p.len(), r.score.docs.len()] {
                if got != docs {
                    return Err(JuryError::LengthMismatch {
                        what: "documents per run",
                        expected: docs,
                        got,
                    });
                }
            }
        }
        Ok(RunSet {
            system: system.into(),
            predictions,
            reports,
        })
    }

    pub fn runs(&self) -> usize {
        self.reports.len()
    }

    pub fn docs(&self) -> usize {
        self.reports[0].score.docs.len()
    }

    pub fn doc_scores(&self, run: usize) -> &[DocScore] {
        &self.reports[run].score.docs
    }

    /// Corpus micro F1 of every run.
    pub fn run_f1(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.score.f1).collect()
    }

    /// Per-document F1 averaged over runs.
    pub fn mean_doc_f1(&self) -> Vec<f64> {
        let n = self.runs() as f64;
        (0..self.docs())
            .map(|i| self.reports.iter().map(|r| r.score.per_doc_f1[i]).sum::<f64>() / n)
            .collect()
    }

    pub fn aggregate(&self) -> RunAggregate {
        aggregate_runs(&self.run_f1())
    }

    pub fn count_stats(&self) -> CountStats {
        count_stats(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub sd: Option<f64>,
    /// 95% Student-t band around the mean; absent for a single run.
    pub band: Option<(f64, f64)>,
}

pub fn aggregate_runs(values: &[f64]) -> RunAggregate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    if n < 2 {
        return RunAggregate {
            runs: n,
            mean,
            sd: None,
            band: None,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * sd / (n as f64).sqrt();
    RunAggregate {
        runs: n,
        mean,
        sd: Some(sd),
        band: Some((mean - half, mean + half)),
    }
}

/// Document counts over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountStats {
    pub runs: usize,
    pub ill_formed_avg: f64,
    pub perfect_avg: f64,
    pub perfect_all: usize,
    pub zero_avg: f64,
    pub zero_all: usize,
    /// Documents whose produced clauses are identical in every run.
    pub same_all: usize,
}

pub fn count_stats(rs: &RunSet) -> CountStats {
    let n = rs.runs() as f64;
    let per_run = |f: &dyn Fn(&DocScore) -> bool| -> f64 {
        rs.reports
            .iter()
            .map(|r| r.score.docs.iter().filter(|d| f(d)).count())
            .sum::<usize>() as f64
            / n
    };
    let in_all = |f: &dyn Fn(&DocScore) -> bool| -> usize {
        (0..rs.docs())
            .filter(|&i| rs.reports.iter().all(|r| f(&r.score.docs[i])))
            .count()
    };
    let perfect = |d: &DocScore| d.f1() == 1.0;
    let zero = |d: &DocScore| d.f1() == 0.0;
    let same_all = (0..rs.docs())
        .filter(|&i| {
            rs.predictions
                .iter()
                .all(|p| p[i].clauses() == rs.predictions[0][i].clauses())
        })
        .count();
    CountStats {
        runs: rs.runs(),
        ill_formed_avg: per_run(&|d| d.ill_formed),
        perfect_avg: per_run(&perfect),
        perfect_all: in_all(&perfect),
        zero_avg: per_run(&zero),
        zero_all: in_all(&zero),
        same_all,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::drs::{parse_clause, Drs};

    pub fn doc(id: &str, sentence: &str, clauses: &[&str], tags: Option<&[&str]>) -> Drs {
        let mut d = Drs::from_clauses(clauses.iter().map(|c| parse_clause(c).unwrap()));
        d.meta.id = Some(id.into());
        d.meta.sentence = Some(sentence.into());
        if let Some(t) = tags {
            d.meta
                .tags
                .insert("sem".into(), t.iter().map(|s| s.to_string()).collect());
        }
        d
    }

    pub fn report(scores: &[(usize, usize, usize)]) -> DetailedReport {
        let docs: Vec<DocScore> = scores
            .iter()
            .map(|&(matched, produced, gold)| DocScore {
                matched,
                produced,
                gold,
                ill_formed: produced == 0,
            })
            .collect();
        DetailedReport {
            score: crate::counter::ScoreReport::from_docs(docs),
            categories: crate::counter::Category::ALL
                .iter()
                .map(|c| (*c, Default::default()))
                .collect(),
            perfect_sense_f1: 0.0,
            infrequent_sense_f1: None,
            ill_formed: scores.iter().filter(|s| s.1 == 0).count(),
            perfect: 0,
            zero: 0,
        }
    }

    /// A run set whose predictions are empty placeholders.
    pub fn runset(name: &str, runs: &[&[(usize, usize, usize)]]) -> RunSet {
        let reports: Vec<DetailedReport> = runs.iter().map(|r| report(r)).collect();
        let preds = runs.iter().map(|r| vec![Drs::default(); r.len()]).collect();
        RunSet::new(name, preds, reports).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn aggregate_constant_runs() {
        let a = aggregate_runs(&[0.88, 0.88, 0.88]);
        assert!((a.mean - 0.88).abs() < 1e-12);
        assert_eq!(a.sd, Some(0.0));
        let (lo, hi) = a.band.unwrap();
        assert!((lo - 0.88).abs() < 1e-12 && (hi - 0.88).abs() < 1e-12);
    }

    #[test]
    fn aggregate_single_run_has_no_band() {
        let a = aggregate_runs(&[0.7]);
        assert_eq!((a.mean, a.sd, a.band), (0.7, None, None));
    }

    #[test]
    fn aggregate_two_runs() {
        let a = aggregate_runs(&[0.6, 0.8]);
        assert!((a.mean - 0.7).abs() < 1e-12);
        // sqrt(((0.1)^2 + (0.1)^2) / 1)
        assert!((a.sd.unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
        // t(1, 0.975) = tan(pi * 0.475)
        let t = (std::f64::consts::PI * 0.475).tan();
        let (lo, hi) = a.band.unwrap();
        assert!((hi - (0.7 + t * 0.1)).abs() < 1e-6, "{hi}");
        assert!((lo - (0.7 - t * 0.1)).abs() < 1e-6);
    }

    #[test]
    fn band_matches_five_run_table_row() {
        // A mean of 85.4 with sd 0.30 over five runs spans 85.0 to 85.8.
        let vals = [85.4 - 0.3 * 2f64.sqrt(), 85.4, 85.4, 85.4, 85.4 + 0.3 * 2f64.sqrt()];
        let a = aggregate_runs(&vals);
        assert!((a.sd.unwrap() - 0.3).abs() < 1e-9);
        let (lo, hi) = a.band.unwrap();
        assert_eq!(format!("{lo:.1} {hi:.1}"), "85.0 85.8");
    }

    #[test]
    fn counts_over_runs() {
        let rs = runset(
            "sys",
            &[
                &[(3, 3, 3), (0, 2, 2), (0, 0, 2), (1, 2, 2)],
                &[(3, 3, 3), (0, 2, 2), (2, 2, 2), (1, 2, 2)],
            ],
        );
        let c = rs.count_stats();
        assert_eq!(c.runs, 2);
        assert_eq!(c.ill_formed_avg, 0.5);
        assert_eq!(c.perfect_avg, 1.5);
        assert_eq!(c.perfect_all, 1);
        assert_eq!(c.zero_avg, 1.5);
        assert_eq!(c.zero_all, 1);
        assert_eq!(c.same_all, 4);
    }

    #[test]
    fn one_ill_formed_in_five_runs() {
        let ok: &[(usize, usize, usize)] = &[(2, 2, 2)];
        let bad: &[(usize, usize, usize)] = &[(0, 0, 2)];
        let rs = runset("s", &[ok, ok, bad, ok, ok]);
        assert!((rs.count_stats().ill_formed_avg - 0.2).abs() < 1e-12);
    }

    #[test]
    fn disagreeing_runs_share_nothing() {
        let a = doc("d1", "A.", &["b1 REF x1", "b1 dog \"n.01\" x1"], None);
        let b = doc("d1", "A.", &["b1 REF x1", "b1 cat \"n.01\" x1"], None);
        let golds = vec![a.clone()];
        let rs = RunSet::score("s", vec![vec![a], vec![b]], &golds, &EvalConfig::default(), None).unwrap();
        assert_eq!(rs.count_stats().same_all, 0);
        assert_eq!(rs.count_stats().perfect_all, 0);
        assert_eq!(rs.count_stats().perfect_avg, 0.5);
    }

    #[test]
    fn misaligned_runs_rejected() {
        let reports = vec![report(&[(1, 1, 1)]), report(&[(1, 1, 1), (1, 1, 1)])];
        let preds = vec![vec![Drs::default()], vec![Drs::default(); 2]];
        assert!(matches!(
            RunSet::new("s", preds, reports),
            Err(JuryError::LengthMismatch { .. })
        ));
        assert!(matches!(RunSet::new("s", vec![], vec![]), Err(JuryError::NoRuns)));
    }
}
