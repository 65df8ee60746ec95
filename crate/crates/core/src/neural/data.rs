use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::drs::Drs;
use crate::seqio::{self, Vocab, EOS};

use super::config::ModelConfig;
use super::NeuralError;

/// Tokenized sentence plus optional per-token tag channels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceText {
    pub tokens: Vec<String>,
    pub tags: BTreeMap<String, Vec<String>>,
}

impl SourceText {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Self {
        SourceText {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            tags: BTreeMap::new(),
        }
    }

    pub fn from_doc(doc: &Drs) -> Result<Self, NeuralError> {
        let tokens = doc.meta.tokens();
        if tokens.is_empty() {
            return Err(NeuralError::MissingSentence {
                id: doc.meta.id.clone().unwrap_or_else(|| "?".into()),
            });
        }
        Ok(SourceText {
            tokens: tokens.into_iter().map(str::to_string).collect(),
            tags: doc.meta.tags.clone(),
        })
    }

    /// The sentence as one character stream, tokens joined by single spaces.
    pub fn chars(&self) -> Vec<char> {
        self.tokens.join(" ").chars().collect()
    }
}

/// Source-side ids for every channel, plus the raw tokens for the frozen
/// table lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceIds {
    pub tokens: Vec<String>,
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub tags: Vec<Vec<usize>>,
    pub sentence_chars: Vec<usize>,
}

impl SourceIds {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: SourceIds,
    /// Target ids ending in EOS.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub target: Vocab,
    pub word: Vocab,
    pub chars: Vocab,
    pub tags: BTreeMap<String, Vocab>,
}

fn char_strings(s: &SourceText) -> Vec<String> {
    s.chars().into_iter().map(|c| c.to_string()).collect()
}

impl Vocabs {
    /// Builds all vocabularies from well-formed training documents.
    pub fn build(docs: &[&Drs], cfg: &ModelConfig) -> Result<Vocabs, NeuralError> {
        let mut targets = Vec::new();
        let mut sources = Vec::new();
        for d in docs {
            if let Ok(toks) = seqio::linearize(d) {
                targets.push(seqio::to_symbols(&toks));
                sources.push(SourceText::from_doc(d)?);
            }
        }
        let target = Vocab::build(&targets, cfg.min_target_occ)?;
        let word = Vocab::build(sources.iter().map(|s| s.tokens.clone()), cfg.min_source_occ)?;
        let chars = Vocab::build(sources.iter().map(char_strings), 1)?;
        let mut tags = BTreeMap::new();
        for channel in cfg.tag_channels() {
            let rows: Vec<Vec<String>> = sources.iter().filter_map(|s| s.tags.get(&channel).cloned()).collect();
            tags.insert(channel.clone(), Vocab::build(rows, 1)?);
        }
        Ok(Vocabs {
            target,
            word,
            chars,
            tags,
        })
    }

    pub fn source_ids(&self, src: &SourceText, cfg: &ModelConfig) -> Result<SourceIds, NeuralError> {
        let split = seqio::source_char_split(&src.tokens)?;
        let chars = split
            .iter()
            .map(|cs| cs.iter().map(|c| self.chars.id(&c.to_string())).collect())
            .collect();
        let mut tags = Vec::new();
        for channel in cfg.tag_channels() {
            let row = src.tags.get(&channel).ok_or_else(|| NeuralError::MissingTags {
                channel: channel.clone(),
            })?;
            let aligned = seqio::align_features(&src.tokens, &[(channel.clone(), row.clone())])?;
            let vocab = &self.tags[&channel];
            tags.push(aligned.channels[0].1.iter().map(|t| vocab.id(t)).collect());
        }
        Ok(SourceIds {
            tokens: src.tokens.clone(),
            words: self.word.encode(&src.tokens),
            chars,
            tags,
            sentence_chars: char_strings(src).iter().map(|c| self.chars.id(c)).collect(),
        })
    }

    pub fn example(&self, doc: &Drs, cfg: &ModelConfig) -> Result<Example, NeuralError> {
        let source = self.source_ids(&SourceText::from_doc(doc)?, cfg)?;
        let toks = seqio::linearize(doc)?;
        let mut target = self.target.encode(&seqio::to_symbols(&toks));
        target.push(EOS);
        Ok(Example { source, target })
    }
}

/// Frozen word vectors: one line per token, the token followed by
/// space-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEmbeddings {
    pub dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl FrozenEmbeddings {
    pub fn parse(text: &str) -> Result<Self, NeuralError> {
        let mut dim = 0;
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let vec: Vec<f64> =
                parts
                    .map(|p| p.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| NeuralError::EmbeddingFile {
                        line: i + 1,
                        reason: "non-numeric component".into(),
                    })?;
            if dim == 0 {
                dim = vec.len();
            }
            if vec.is_empty() || vec.len() != dim {
                return Err(NeuralError::EmbeddingFile {
                    line: i + 1,
                    reason: format!("expected {dim} components, found {}", vec.len()),
                });
            }
            table.insert(token.to_string(), vec);
        }
        if dim == 0 {
            return Err(NeuralError::EmbeddingFile {
                line: 0,
                reason: "no vectors".into(),
            });
        }
        Ok(FrozenEmbeddings { dim, table })
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Exact match, then lowercase; unknown tokens get the zero vector.
    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.table
            .get(token)
            .or_else(|| self.table.get(&token.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        self.lookup(token)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Lines sorted by token, so the dump is deterministic.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(k);
            for v in &self.table[k] {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}
