use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::drs::{parse_corpus, Drs, ErrorMode};

use super::SeqError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Tier {
    Gold,
    Silver,
    Bronze,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Gold => "gold",
            Tier::Silver => "silver",
            Tier::Bronze => "bronze",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phase {
    pub tiers: Vec<Tier>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    /// Gold + silver, then gold only.
    Standard {
        pretrain: usize,
        finetune: usize,
    },
    /// For languages without gold training data: silver + bronze, then silver.
    NoGold {
        pretrain: usize,
        finetune: usize,
    },
    Custom(Vec<Phase>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Standard {
            pretrain: 10,
            finetune: 5,
        }
    }
}

impl Schedule {
    /// Phases with at least one epoch.
    pub fn phases(&self) -> Vec<Phase> {
        let two = |first: Vec<Tier>, pretrain, second: Vec<Tier>, finetune| {
            vec![
                Phase {
                    tiers: first,
                    epochs: pretrain,
                },
                Phase {
                    tiers: second,
                    epochs: finetune,
                },
            ]
        };
        let all = match self {
            Schedule::Standard { pretrain, finetune } => {
                two(vec![Tier::Gold, Tier::Silver], *pretrain, vec![Tier::Gold], *finetune)
            }
            Schedule::NoGold { pretrain, finetune } => two(
                vec![Tier::Silver, Tier::Bronze],
                *pretrain,
                vec![Tier::Silver],
                *finetune,
            ),
            Schedule::Custom(p) => p.clone(),
        };
        all.into_iter().filter(|p| p.epochs > 0).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SplitPaths {
    pub gold: Option<PathBuf>,
    pub silver: Option<PathBuf>,
    pub bronze: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub tiers: BTreeMap<Tier, Vec<Drs>>,
    pub dev: Vec<Drs>,
    pub test: Vec<Drs>,
    pub schedule: Vec<Phase>,
}

impl CorpusSplit {
    /// Checks that no dev or test document id occurs in a training tier.
    pub fn new(
        tiers: BTreeMap<Tier, Vec<Drs>>,
        dev: Vec<Drs>,
        test: Vec<Drs>,
        schedule: &Schedule,
    ) -> Result<CorpusSplit, SeqError> {
        for (name, held) in [("dev", &dev), ("test", &test)] {
            let ids: HashSet<&str> = held.iter().filter_map(|d| d.meta.id.as_deref()).collect();
            for (tier, docs) in &tiers {
                if let Some(id) = docs
                    .iter()
                    .filter_map(|d| d.meta.id.as_deref())
                    .find(|id| ids.contains(id))
                {
                    return Err(SeqError::Overlap {
                        id: id.to_string(),
                        held_out: name,
                        tier: *tier,
                    });
                }
            }
        }
        Ok(CorpusSplit {
            tiers,
            dev,
            test,
            schedule: schedule.phases(),
        })
    }

    /// Training documents of a phase, tier by tier in the phase's order.
    pub fn pool(&self, phase: &Phase) -> Vec<&Drs> {
        phase.tiers.iter().filter_map(|t| self.tiers.get(t)).flatten().collect()
    }

    pub fn training_docs(&self) -> impl Iterator<Item = &Drs> {
        self.tiers.values().flatten()
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Drs>, SeqError> {
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file), ErrorMode::FailFast)
        .map(|c| c.docs)
        .map_err(|source| SeqError::Corpus {
            path: path.display().to_string(),
            source,
        })
}

pub fn load_split(paths: &SplitPaths, schedule: &Schedule) -> Result<CorpusSplit, SeqError> {
    let mut tiers = BTreeMap::new();
    for (tier, path) in [
        (Tier::Gold, &paths.gold),
        (Tier::Silver, &paths.silver),
        (Tier::Bronze, &paths.bronze),
    ] {
        if let Some(p) = path {
            tiers.insert(tier, read_corpus(p)?);
        }
    }
    let load = |p: &Option<PathBuf>| p.as_deref().map(read_corpus).transpose().map(Option::unwrap_or_default);
    let dev = load(&paths.dev)?;
    let test = load(&paths.test)?;
    CorpusSplit::new(tiers, dev, test, schedule)
}

/// Per-token tags for a sentence, one row per channel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FeatureAlignment {
    pub tokens: Vec<String>,
    pub channels: Vec<(String, Vec<String>)>,
}

impl FeatureAlignment {
    pub fn channel(&self, name: &str) -> Option<&[String]> {
        self.channels.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_slice())
    }
}

pub fn align_features<S: AsRef<str>>(
    tokens: &[S],
    channels: &[(String, Vec<String>)],
) -> Result<FeatureAlignment, SeqError> {
    for (name, tags) in channels {
        if tags.len() != tokens.len() {
            return Err(SeqError::AlignmentMismatch {
                channel: name.clone(),
                tags: tags.len(),
                tokens: tokens.len(),
            });
        }
    }
    Ok(FeatureAlignment {
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        channels: channels.to_vec(),
    })
}

/// One document's worth of tag rows from a tag file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagBlock {
    pub id: Option<String>,
    pub channels: Vec<(String, Vec<String>)>,
}

/// Tag files hold blank-line-separated blocks, one per document in corpus
/// order. A block may open with `%%% <id>`; every other line is
/// `channel<TAB>tag tag ...`.
pub fn parse_tag_file(text: &str) -> Result<Vec<TagBlock>, SeqError> {
    let mut blocks = Vec::new();
    let mut cur = TagBlock::default();
    let mut open = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if open {
                blocks.push(std::mem::take(&mut cur));
                open = false;
            }
            continue;
        }
        open = true;
        if let Some(id) = line.strip_prefix("%%% ") {
            cur.id = Some(id.trim().to_string());
            continue;
        }
        let (channel, tags) = line.split_once('\t').ok_or_else(|| SeqError::TagFormat {
            line: i + 1,
            reason: "expected channel<TAB>tags".into(),
        })?;
        cur.channels.push((
            channel.to_string(),
            tags.split_whitespace().map(str::to_string).collect(),
        ));
    }
    if open {
        blocks.push(cur);
    }
    Ok(blocks)
}

/// Attaches tag blocks to documents, by id when both carry one and by
/// position otherwise. Every attached channel is checked against the
/// sentence's tokens.
pub fn attach_tags(docs: &mut [Drs], blocks: &[TagBlock]) -> Result<(), SeqError> {
    let by_id: BTreeMap<&str, &TagBlock> = blocks
        .iter()
        .filter_map(|b| b.id.as_deref().map(|id| (id, b)))
        .collect();
    for (i, doc) in docs.iter_mut().enumerate() {
        let block = match doc.meta.id.as_deref().and_then(|id| by_id.get(id)) {
            Some(b) => *b,
            None => match blocks.get(i) {
                Some(b) => b,
                None => continue,
            },
        };
        let aligned = align_features(&doc.meta.tokens(), &block.channels)?;
        for (name, tags) in aligned.channels {
            doc.meta.tags.insert(name, tags);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drs::{parse_document, render_corpus};

    const SENTENCE: [&str; 8] = ["I", "haven't", "been", "to", "Boston", "since", "2013", "."];
    const SEM: [&str; 8] = ["PRO", "NOW", "NOT", "EXT", "REL", "GPE", "REL", "YOC"];

    fn doc(id: &str) -> Drs {
        let mut d = parse_document("b1 REF x1\nb1 dog \"n.01\" x1\n").unwrap();
        d.meta.id = Some(id.to_string());
        d
    }

    fn docs(prefix: &str, n: usize) -> Vec<Drs> {
        (0..n).map(|i| doc(&format!("{prefix}{i}"))).collect()
    }

    #[test]
    fn semtag_row_aligns() {
        let sem = ("sem".to_string(), SEM.iter().map(|s| s.to_string()).collect());
        let a = align_features(&SENTENCE, &[sem]).unwrap();
        assert_eq!(a.tokens.len(), 8);
        assert_eq!(a.channel("sem").unwrap()[5], "GPE");
    }

    #[test]
    fn short_row_is_mismatch() {
        let sem = ("sem".to_string(), SEM[..7].iter().map(|s| s.to_string()).collect());
        assert!(matches!(
            align_features(&SENTENCE, &[sem]),
            Err(SeqError::AlignmentMismatch { tags: 7, tokens: 8, .. })
        ));
    }

    #[test]
    fn no_channels() {
        let a = align_features(&SENTENCE, &[]).unwrap();
        assert!(a.channels.is_empty());
    }

    #[test]
    fn default_schedule_pool() {
        let mut tiers = BTreeMap::new();
        tiers.insert(Tier::Gold, docs("g", 6620));
        tiers.insert(Tier::Silver, docs("s", 97598));
        let split = CorpusSplit::new(tiers, docs("d", 3), vec![], &Schedule::default()).unwrap();
        assert_eq!(split.schedule.len(), 2);
        assert_eq!(split.pool(&split.schedule[0]).len(), 104218);
        assert_eq!(split.pool(&split.schedule[1]).len(), 6620);
    }

    #[test]
    fn zero_finetune_is_single_phase() {
        let s = Schedule::Standard {
            pretrain: 3,
            finetune: 0,
        };
        assert_eq!(s.phases().len(), 1);
        let ng = Schedule::NoGold {
            pretrain: 1,
            finetune: 1,
        };
        assert_eq!(ng.phases()[1].tiers, vec![Tier::Silver]);
    }

    #[test]
    fn leak_is_rejected() {
        let mut tiers = BTreeMap::new();
        tiers.insert(Tier::Gold, docs("g", 5));
        tiers.insert(Tier::Silver, vec![doc("x"), doc("d1")]);
        let err = CorpusSplit::new(tiers, docs("d", 3), vec![], &Schedule::default()).unwrap_err();
        assert!(matches!(
            err,
            SeqError::Overlap {
                tier: Tier::Silver,
                held_out: "dev",
                ..
            }
        ));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let gold = dir.path().join("gold.drs");
        let dev = dir.path().join("dev.drs");
        std::fs::write(&gold, render_corpus(&docs("g", 4))).unwrap();
        std::fs::write(&dev, render_corpus(&docs("d", 2))).unwrap();
        let paths = SplitPaths {
            gold: Some(gold),
            dev: Some(dev),
            ..Default::default()
        };
        let split = load_split(&paths, &Schedule::default()).unwrap();
        assert_eq!(split.pool(&split.schedule[0]).len(), 4);
        assert_eq!(split.dev.len(), 2);
        assert_eq!(split.dev[1].meta.id.as_deref(), Some("d1"));
    }

    #[test]
    fn tag_file_attach() {
        let text = format!("%%% a\nsem\t{}\npos\tPRP VBP VBN TO NNP IN CD .\n\n", SEM.join(" "));
        let blocks = parse_tag_file(&text).unwrap();
        assert_eq!(blocks.len(), 1);
        let mut d = doc("a");
        d.meta.sentence = Some(SENTENCE.join(" "));
        let mut all = vec![d];
        attach_tags(&mut all, &blocks).unwrap();
        assert_eq!(all[0].meta.semtags().unwrap()[0], "PRO");
        assert_eq!(all[0].meta.tags["pos"].len(), 8);
    }

    #[test]
    fn tag_file_errors() {
        assert!(parse_tag_file("sem PRO\n").is_err());
        let blocks = parse_tag_file("sem\tPRO NOW\n").unwrap();
        let mut d = doc("z");
        d.meta.sentence = Some("one".into());
        assert!(attach_tags(&mut [d], &blocks).is_err());
    }
}
