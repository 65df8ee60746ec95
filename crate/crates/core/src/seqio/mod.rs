//! Sequence views of DRSs and sentences for the neural parser, plus corpus,
//! split and tag-channel ingestion.

mod corpus;
mod linear;
mod vocab;

use thiserror::Error;

pub use corpus::{
    align_features, attach_tags, load_split, parse_tag_file, CorpusSplit, FeatureAlignment, Phase, Schedule,
    SplitPaths, TagBlock, Tier,
};
pub use linear::{
    delinearize, from_symbols, linearize, linearize_unchecked, to_symbols, Boundary, Delinearized, TargetToken,
};
pub use vocab::{build_target_vocab, Vocab, BOS, EOS, PAD, UNK};

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("input DRS is not well formed: {0}")]
    IllFormedInput(String),
    #[error("token {index} is empty")]
    EmptyToken { index: usize },
    #[error("no symbols to build a vocabulary from")]
    EmptyCorpus,
    #[error("minimum occurrence must be at least 1")]
    InvalidThreshold,
    #[error("malformed vocabulary line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error("document {id} appears in {held_out} and in training tier {tier}")]
    Overlap {
        id: String,
        held_out: &'static str,
        tier: Tier,
    },
    #[error("channel {channel}: {tags} tags for {tokens} tokens")]
    AlignmentMismatch {
        channel: String,
        tags: usize,
        tokens: usize,
    },
    #[error("tag file line {line}: {reason}")]
    TagFormat { line: usize, reason: String },
    #[error("{path}: {source}")]
    Corpus {
        path: String,
        #[source]
        source: crate::drs::BlockError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Characters of each token, for the character-level source encoders.
pub fn source_char_split<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<Vec<char>>, SeqError> {
    tokens
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let chars: Vec<char> = t.as_ref().chars().collect();
            if chars.is_empty() {
                Err(SeqError::EmptyToken { index })
            } else {
                Ok(chars)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_split() {
        let split = source_char_split(&["Boston", "2013", "I"]).unwrap();
        assert_eq!(split[0], vec!['B', 'o', 's', 't', 'o', 'n']);
        assert_eq!(split[1], vec!['2', '0', '1', '3']);
        assert_eq!(split[2], vec!['I']);
    }

    #[test]
    fn char_split_is_per_scalar() {
        assert_eq!(source_char_split(&["née"]).unwrap()[0].len(), 3);
    }

    #[test]
    fn empty_token_rejected() {
        assert!(matches!(
            source_char_split(&["a", ""]),
            Err(SeqError::EmptyToken { index: 1 })
        ));
    }
}
