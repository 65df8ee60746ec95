//! Scores on document subsets selected by semantic tags.

use std::fmt::Write as _;

use serde::Serialize;

use crate::counter::{DocScore, ScoreReport};
use crate::drs::Drs;

use super::{JuryError, RunSet};

/// Named phenomena, each selected by a set of semantic tags. Categories may
/// share tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhenomenonCatalog {
    categories: Vec<(String, Vec<String>)>,
}

const DEFAULT_CATALOG: [(&str, &[&str]); 7] = [
    ("Modality", &["NOT", "NEC", "POS"]),
    ("Logical", &["ALT", "XCL", "DIS", "AND", "IMP", "BUT"]),
    ("Pronouns", &["PRO", "HAS", "REF", "EMP"]),
    (
        "Attributes",
        &["QUC", "QUV", "COL", "IST", "SST", "PRI", "DEG", "INT", "REL", "SCO"],
    ),
    ("Comparatives", &["EQU", "APX", "MOR", "LES", "TOP", "BOT", "ORD"]),
    (
        "Named entities",
        &[
            "PER", "GPE", "GPO", "GEO", "ORG", "ART", "HAP", "UOM", "CTC", "LIT", "NTH",
        ],
    ),
    (
        "Numerals",
        &["QUC", "MOY", "SCO", "ORD", "DAT", "DOM", "YOC", "DEC", "CLO"],
    ),
];

impl Default for PhenomenonCatalog {
    fn default() -> Self {
        PhenomenonCatalog {
            categories: DEFAULT_CATALOG
                .iter()
                .map(|(name, tags)| (name.to_string(), tags.iter().map(|t| t.to_string()).collect()))
                .collect(),
        }
    }
}

impl PhenomenonCatalog {
    pub fn new(categories: Vec<(String, Vec<String>)>) -> Self {
        PhenomenonCatalog { categories }
    }

    pub fn categories(&self) -> &[(String, Vec<String>)] {
        &self.categories
    }

    pub fn tags(&self, category: &str) -> Option<&[String]> {
        self.categories
            .iter()
            .find(|(n, _)| n == category)
            .map(|(_, t)| t.as_slice())
    }

    /// Categories with at least one of `tags`, in catalog order.
    pub fn categories_of<S: AsRef<str>>(&self, tags: &[S]) -> Vec<&str> {
        self.categories
            .iter()
            .filter(|(_, set)| tags.iter().any(|t| set.iter().any(|s| s == t.as_ref())))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// One category per line: `name<TAB>TAG TAG ...`.
    pub fn from_text(text: &str) -> Result<Self, JuryError> {
        let mut categories = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, tags)) = line.split_once('\t') else {
                return Err(JuryError::CatalogFormat {
                    line: i + 1,
                    reason: "expected name<TAB>tags".into(),
                });
            };
            let tags: Vec<String> = tags.split_whitespace().map(str::to_string).collect();
            if name.trim().is_empty() || tags.is_empty() {
                return Err(JuryError::CatalogFormat {
                    line: i + 1,
                    reason: "empty name or tag list".into(),
                });
            }
            categories.push((name.trim().to_string(), tags));
        }
        Ok(PhenomenonCatalog { categories })
    }

    pub fn to_text(&self) -> String {
        self.categories
            .iter()
            .map(|(n, t)| format!("{n}\t{}\n", t.join(" ")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetRow {
    pub category: String,
    pub size: usize,
    /// Per system, micro F1 on the subset averaged over runs.
    pub f1: Vec<Option<f64>>,
    /// Per system, difference from the baseline system.
    pub delta: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetReport {
    pub systems: Vec<String>,
    pub baseline: usize,
    pub rows: Vec<SubsetRow>,
}

impl SubsetReport {
    /// Baseline scores in full, other systems as signed differences.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<16}{:>6}", "Phenomenon", "Docs");
        for s in &self.systems {
            write!(out, "{s:>12}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{:<16}{:>6}", r.category, r.size).unwrap();
            for (i, (f, d)) in r.f1.iter().zip(&r.delta).enumerate() {
                let cell = match (i == self.baseline, f, d) {
                    (true, Some(f), _) => format!("{:.1}", f * 100.0),
                    (false, _, Some(d)) => format!("{:+.1}", d * 100.0),
                    _ => "-".into(),
                };
                write!(out, "{cell:>12}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("category\tsize");
        for s in &self.systems {
            write!(out, "\t{s}_f1\t{s}_delta").unwrap();
        }
        out.push('\n');
        let cell = |v: &Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for r in &self.rows {
            write!(out, "{}\t{}", r.category, r.size).unwrap();
            for (f, d) in r.f1.iter().zip(&r.delta) {
                write!(out, "\t{}\t{}", cell(f), cell(d)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Micro F1 over `members` of one run.
fn subset_f1(docs: &[DocScore], members: &[usize]) -> f64 {
    ScoreReport::from_docs(members.iter().map(|&i| docs[i]).collect()).f1
}

/// Scores every system on the documents of each category. A document joins
/// a category when any of its semantic tags is in the category's set.
pub fn semtag_subsets(
    golds: &[Drs],
    systems: &[RunSet],
    catalog: &PhenomenonCatalog,
    baseline: &str,
) -> Result<SubsetReport, JuryError> {
    let base = systems
        .iter()
        .position(|s| s.system == baseline)
        .ok_or_else(|| JuryError::UnknownSystem(baseline.to_string()))?;
    for s in systems {
        if s.docs() != golds.len() {
            return Err(JuryError::LengthMismatch {
                what: "documents per run",
                expected: golds.len(),
                got: s.docs(),
            });
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); catalog.categories.len()];
    for (i, d) in golds.iter().enumerate() {
        let tags = d.meta.semtags().ok_or_else(|| JuryError::MissingSemtags {
            index: i,
            id: d.meta.id.clone().unwrap_or_else(|| "?".into()),
        })?;
        for (c, (_, set)) in catalog.categories.iter().enumerate() {
            if tags.iter().any(|t| set.contains(t)) {
                members[c].push(i);
            }
        }
    }
    let rows = catalog
        .categories
        .iter()
        .zip(&members)
        .map(|((name, _), m)| {
            let f1: Vec<Option<f64>> = systems
                .iter()
                .map(|s| {
                    (!m.is_empty())
                        .then(|| (0..s.runs()).map(|r| subset_f1(s.doc_scores(r), m)).sum::<f64>() / s.runs() as f64)
                })
                .collect();
            let delta = f1.iter().map(|f| Some(f.as_ref()? - f1[base].as_ref()?)).collect();
            SubsetRow {
                category: name.clone(),
                size: m.len(),
                f1,
                delta,
            }
        })
        .collect();
    Ok(SubsetReport {
        systems: systems.iter().map(|s| s.system.clone()).collect(),
        baseline: base,
        rows,
    })
}
