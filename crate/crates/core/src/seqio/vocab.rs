use std::collections::HashMap;
use std::fmt::Write as _;

use crate::drs::Drs;

use super::{linear, SeqError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Symbol/id bijection. Ids after the four specials are ordered by
/// descending training frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    freqs: Vec<usize>,
    index: HashMap<String, usize>,
    min_occ: usize,
}

impl Vocab {
    pub fn build<I, S, T>(sequences: I, min_occ: usize) -> Result<Vocab, SeqError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if min_occ == 0 {
            return Err(SeqError::InvalidThreshold);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seq in sequences {
            for sym in seq {
                let sym = sym.as_ref();
                if SPECIALS.contains(&sym) {
                    continue;
                }
                match counts.get_mut(sym) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(sym.to_string(), 1);
                    }
                }
            }
        }
        if counts.is_empty() {
            return Err(SeqError::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_occ).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut entries: Vec<(String, usize)> = SPECIALS.iter().map(|s| (s.to_string(), 0)).collect();
        entries.extend(kept);
        Ok(Self::from_entries(entries, min_occ))
    }

    fn from_entries(entries: Vec<(String, usize)>, min_occ: usize) -> Vocab {
        let index = entries.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect();
        let (symbols, freqs) = entries.into_iter().unzip();
        Vocab {
            symbols,
            freqs,
            index,
            min_occ,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn min_occ(&self) -> usize {
        self.min_occ
    }

    pub fn id(&self, symbol: &str) -> usize {
        self.index.get(symbol).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn symbol(&self, id: usize) -> &str {
        self.symbols.get(id).map(String::as_str).unwrap_or(SPECIALS[UNK])
    }

    pub fn freq(&self, id: usize) -> usize {
        self.freqs.get(id).copied().unwrap_or(0)
    }

    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Vec<usize> {
        symbols.iter().map(|s| self.id(s.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.symbol(i).to_string()).collect()
    }

    /// `symbol<TAB>freq` per line, preceded by a `#min_occ<TAB>n` header.
    pub fn to_text(&self) -> String {
        let mut out = format!("#min_occ\t{}\n", self.min_occ);
        for (s, f) in self.symbols.iter().zip(&self.freqs) {
            writeln!(out, "{s}\t{f}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Vocab, SeqError> {
        let bad = |line: usize, reason: &str| SeqError::VocabFormat {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let min_occ = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#min_occ\t")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad(1, "missing #min_occ header"))?,
            None => return Err(bad(1, "empty file")),
        };
        let mut entries = Vec::new();
        for (i, line) in lines {
            let (sym, freq) = line
                .rsplit_once('\t')
                .ok_or_else(|| bad(i + 1, "expected symbol<TAB>freq"))?;
            let freq = freq.parse().map_err(|_| bad(i + 1, "frequency is not a number"))?;
            entries.push((sym.to_string(), freq));
        }
        let specials_ok =
            entries.len() >= SPECIALS.len() && entries.iter().zip(SPECIALS).all(|((s, _), want)| s == want);
        if !specials_ok {
            return Err(bad(2, "vocabulary must start with the four special symbols"));
        }
        let vocab = Self::from_entries(entries, min_occ);
        if vocab.index.len() != vocab.symbols.len() {
            return Err(bad(0, "duplicate symbol"));
        }
        Ok(vocab)
    }
}

/// Target-side vocabulary over the linearized corpus.
pub fn build_target_vocab(corpus: &[Drs], min_occ: usize) -> Result<Vocab, SeqError> {
    let seqs: Vec<Vec<String>> = corpus
        .iter()
        .map(|d| linear::to_symbols(&linear::linearize_unchecked(d)))
        .collect();
    Vocab::build(seqs, min_occ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::toy_corpus;

    fn seqs() -> Vec<Vec<&'static str>> {
        vec![
            vec!["time", "time", "b", "a"],
            vec!["time", "time", "a", "rare", "rare"],
            vec!["time", "c"],
        ]
    }

    #[test]
    fn threshold_filters() {
        let v = Vocab::build(seqs(), 3).unwrap();
        assert!(v.contains("time"));
        assert_eq!(v.id("rare"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn min_occ_one_covers_all() {
        let v = Vocab::build(seqs(), 1).unwrap();
        for s in ["time", "a", "b", "c", "rare"] {
            assert_ne!(v.id(s), UNK, "{s}");
        }
    }

    #[test]
    fn ordering_is_frequency_then_lexicographic() {
        let v = Vocab::build(seqs(), 1).unwrap();
        let order: Vec<&str> = (4..v.len()).map(|i| v.symbol(i)).collect();
        assert_eq!(order, vec!["time", "a", "rare", "b", "c"]);
        assert_eq!(v.symbol(PAD), "<pad>");
        assert_eq!(v.symbol(EOS), "</s>");
    }

    #[test]
    fn errors() {
        assert!(matches!(Vocab::build(seqs(), 0), Err(SeqError::InvalidThreshold)));
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert!(matches!(Vocab::build(empty, 1), Err(SeqError::EmptyCorpus)));
    }

    #[test]
    fn text_round_trip_and_determinism() {
        let corpus = toy_corpus(40);
        let a = build_target_vocab(&corpus, 3).unwrap();
        let b = build_target_vocab(&corpus, 3).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let back = Vocab::from_text(&a.to_text()).unwrap();
        assert_eq!(back, a);
        assert!(a.contains("***"));
        assert!(a.contains("@b:NEW"));
    }

    #[test]
    fn encode_decode() {
        let v = Vocab::build(seqs(), 1).unwrap();
        let ids = v.encode(&["time", "zzz"]);
        assert_eq!(ids[1], UNK);
        assert_eq!(v.decode(&ids), vec!["time", "<unk>"]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Vocab::from_text("").is_err());
        assert!(Vocab::from_text("#min_occ\t1\nfoo\t1\n").is_err());
    }
}
