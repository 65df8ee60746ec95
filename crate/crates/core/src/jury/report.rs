//! Detailed scores of several systems averaged over runs, with run spread
//! and document counts.

use std::fmt::Write as _;

use serde::Serialize;

use super::RunSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowFormat {
    /// Percentages and averaged counts.
    OneDecimal,
    TwoDecimals,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub format: RowFormat,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JuryReport {
    pub systems: Vec<String>,
    pub runs: Vec<usize>,
    pub rows: Vec<ReportRow>,
}

impl JuryReport {
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    fn cell(format: RowFormat, v: Option<f64>) -> String {
        match (format, v) {
            (_, None) => "-".into(),
            (RowFormat::OneDecimal, Some(v)) => format!("{v:.1}"),
            (RowFormat::TwoDecimals, Some(v)) => format!("{v:.2}"),
            (RowFormat::Integer, Some(v)) => format!("{v:.0}"),
        }
    }

    pub fn to_text(&self) -> String {
        let width = self.systems.iter().map(|s| s.len()).max().unwrap_or(0).max(8) + 2;
        let label_width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0) + 2;
        let mut out = format!("{:<label_width$}", "");
        for s in &self.systems {
            write!(out, "{s:>width$}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{:<label_width$}", r.label).unwrap();
            for v in &r.values {
                write!(out, "{:>width$}", Self::cell(r.format, *v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Full-precision values for downstream tools.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("row");
        for s in &self.systems {
            write!(out, "\t{s}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.label);
            for v in &r.values {
                write!(out, "\t{}", v.map_or(String::new(), |x| format!("{x}"))).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<_>>()?;
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// One column per system. Scores are percentages averaged over runs; the
/// spread rows use run-level corpus F1.
pub fn jury_report(systems: &[RunSet]) -> JuryReport {
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut push = |label: String, format, values| rows.push(ReportRow { label, format, values });

    // every detailed report has the same row labels in the same order
    if let Some(first) = systems.first() {
        let labels: Vec<String> = first.reports[0]
            .rows()
            .into_iter()
            .map(|(l, _)| l)
            .filter(|l| !l.starts_with('#'))
            .collect();
        for (k, label) in labels.into_iter().enumerate() {
            let values = systems
                .iter()
                .map(|s| mean(s.reports.iter().map(|r| r.rows()[k].1)))
                .collect();
            push(label, RowFormat::OneDecimal, values);
        }
    }

    let aggs: Vec<_> = systems.iter().map(RunSet::aggregate).collect();
    push(
        "F1 std dev".into(),
        RowFormat::TwoDecimals,
        aggs.iter().map(|a| a.sd.map(|s| s * 100.0)).collect(),
    );
    push(
        "F1 confidence interval (low)".into(),
        RowFormat::OneDecimal,
        aggs.iter().map(|a| a.band.map(|b| b.0 * 100.0)).collect(),
    );
    push(
        "F1 confidence interval (high)".into(),
        RowFormat::OneDecimal,
        aggs.iter().map(|a| a.band.map(|b| b.1 * 100.0)).collect(),
    );

    let counts: Vec<_> = systems.iter().map(RunSet::count_stats).collect();
    let runs: Vec<usize> = systems.iter().map(RunSet::runs).collect();
    let all = match runs.first() {
        Some(&n) if runs.iter().all(|&r| r == n) => format!("all {n}"),
        _ => "all runs".into(),
    };
    let avg = |f: fn(&super::CountStats) -> f64| counts.iter().map(|c| Some(f(c))).collect();
    let whole = |f: fn(&super::CountStats) -> usize| counts.iter().map(|c| Some(f(c) as f64)).collect();
    push("# illformed".into(), RowFormat::OneDecimal, avg(|c| c.ill_formed_avg));
    push("# perfect (avg)".into(), RowFormat::OneDecimal, avg(|c| c.perfect_avg));
    push(
        format!("# perfect ({all})"),
        RowFormat::Integer,
        whole(|c| c.perfect_all),
    );
    push("# zero (avg)".into(), RowFormat::OneDecimal, avg(|c| c.zero_avg));
    push(format!("# zero ({all})"), RowFormat::Integer, whole(|c| c.zero_all));
    push(format!("# same ({all})"), RowFormat::Integer, whole(|c| c.same_all));

    JuryReport {
        systems: systems.iter().map(|s| s.system.clone()).collect(),
        runs,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    pub const TABLE_ROWS: [&str; 22] = [
        "Prec",
        "Rec",
        "F1",
        "Operators",
        "Roles",
        "Concepts",
        "Nouns",
        "Verbs",
        "Adjectives",
        "Adverbs",
        "Events",
        "Perfect sense",
        "Infreq. sense",
        "F1 std dev",
        "F1 confidence interval (low)",
        "F1 confidence interval (high)",
        "# illformed",
        "# perfect (avg)",
        "# perfect (all 2)",
        "# zero (avg)",
        "# zero (all 2)",
        "# same (all 2)",
    ];

    #[test]
    fn has_every_row_in_order() {
        let a = runset("a", &[&[(1, 1, 1), (0, 0, 2)], &[(1, 1, 1), (1, 2, 2)]]);
        let b = runset("b", &[&[(1, 1, 1), (2, 2, 2)], &[(1, 1, 1), (2, 2, 2)]]);
        let r = jury_report(&[a, b]);
        let labels: Vec<&str> = r.rows.iter().map(|x| x.label.as_str()).collect();
        assert_eq!(labels, TABLE_ROWS);
        assert_eq!(r.row("F1").unwrap().values[1], Some(100.0));
        assert_eq!(r.row("F1 std dev").unwrap().values[1], Some(0.0));
        assert_eq!(r.row("# illformed").unwrap().values[0], Some(0.5));
        assert_eq!(r.row("# perfect (all 2)").unwrap().values, vec![Some(1.0), Some(2.0)]);
        assert_eq!(r.row("Infreq. sense").unwrap().values, vec![None, None]);
        let text = r.to_text();
        assert_eq!(text.lines().count(), 23);
        assert!(text.contains("# perfect (all 2)"));
        assert_eq!(r.to_tsv().lines().count(), 23);
    }

    #[test]
    fn uneven_run_counts() {
        let a = runset("a", &[&[(1, 1, 1)]]);
        let b = runset("b", &[&[(1, 1, 1)], &[(1, 1, 1)]]);
        let r = jury_report(&[a, b]);
        assert!(r.row("# same (all runs)").is_some());
        assert_eq!(r.row("F1 std dev").unwrap().values[0], None);
    }
}
