//! Token pipeline: vocabulary, fixed-length sequences, embeddings, and the
//! desk-scale synthetic tasks that stand in for real corpora.
//!
//! Index conventions are fixed: `0` is padding, `1` is out-of-vocabulary,
//! real tokens start at `2`. Sequences are pre-padded and pre-truncated.

mod embedding;
mod synth;
mod text;

pub use embedding::{load_frozen_embeddings, EmbeddingTable};
pub use synth::{synth_generate, task_registry, FirstTokenClass, KeywordCount, MajorityVote, SynthTask, SynthTaskKind};
pub use text::{build_vocab, load_tsv_corpus, tokenize, Example, Vocab, OOV, PAD};

use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Left-pad with `0` or keep the last `len` tokens.
pub fn pad_or_truncate(seq: &[usize], len: usize) -> Vec<usize> {
    if seq.len() >= len {
        seq[seq.len() - len..].to_vec()
    } else {
        let mut out = vec![PAD; len - seq.len()];
        out.extend_from_slice(seq);
        out
    }
}

/// Fixed-length token rows with one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    tokens: Vec<Vec<usize>>,
    labels: Vec<usize>,
    seq_len: usize,
}

impl SequenceBatch {
    pub fn new(tokens: Vec<Vec<usize>>, labels: Vec<usize>) -> Result<Self> {
        if tokens.len() != labels.len() {
            return Err(Error::shape("SequenceBatch::new", format!("{} rows", tokens.len()), format!("{} labels", labels.len())));
        }
        let seq_len = tokens.first().map_or(0, Vec::len);
        if let Some(bad) = tokens.iter().find(|r| r.len() != seq_len) {
            return Err(Error::shape("SequenceBatch::new", format!("row len {seq_len}"), format!("row len {}", bad.len())));
        }
        if !tokens.is_empty() && seq_len == 0 {
            return Err(Error::invalid("sequences must have length >= 1"));
        }
        Ok(SequenceBatch { tokens, labels, seq_len })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn tokens(&self) -> &[Vec<usize>] {
        &self.tokens
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[usize], usize) {
        (&self.tokens[i], self.labels[i])
    }

    pub fn max_token(&self) -> Option<usize> {
        self.tokens.iter().flatten().copied().max()
    }

    pub fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        match self.max_token() {
            Some(t) if t >= vocab_size => Err(Error::invalid(format!("token {t} out of range for vocab size {vocab_size}"))),
            _ => Ok(()),
        }
    }

    pub fn select(&self, idx: &[usize]) -> SequenceBatch {
        SequenceBatch {
            tokens: idx.iter().map(|&i| self.tokens[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            seq_len: self.seq_len,
        }
    }
}

/// Encode, pad and split labelled text 80/20 after a seeded shuffle.
pub fn encode_corpus(
    corpus: &[Example],
    vocab: &Vocab,
    seq_len: usize,
    seed: u64,
) -> Result<(SequenceBatch, SequenceBatch)> {
    if corpus.len() < 2 {
        return Err(Error::invalid("corpus needs at least two examples to split"));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    RngState::new(seed).shuffle(&mut order);
    let n_train = (corpus.len() * 4 / 5).max(1);
    let build = |idx: &[usize]| {
        let tokens = idx
            .iter()
            .map(|&i| pad_or_truncate(&vocab.encode(&corpus[i].tokens), seq_len))
            .collect();
        let labels = idx.iter().map(|&i| corpus[i].label).collect();
        SequenceBatch::new(tokens, labels)
    };
    Ok((build(&order[..n_train])?, build(&order[n_train..])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pre_pads() {
        assert_eq!(pad_or_truncate(&[3, 7], 4), vec![0, 0, 3, 7]);
    }

    #[test]
    fn pre_truncates() {
        assert_eq!(pad_or_truncate(&[1, 2, 3, 4, 5], 3), vec![3, 4, 5]);
    }

    #[test]
    fn exact_length_unchanged() {
        assert_eq!(pad_or_truncate(&[4, 5, 6], 3), vec![4, 5, 6]);
    }

    #[test]
    fn batch_rejects_ragged_rows() {
        assert!(SequenceBatch::new(vec![vec![1, 2], vec![1]], vec![0, 1]).is_err());
        assert!(SequenceBatch::new(vec![vec![1, 2]], vec![0, 1]).is_err());
        let b = SequenceBatch::new(vec![vec![1, 2], vec![3, 9]], vec![0, 1]).unwrap();
        assert!(b.check_vocab(10).is_ok());
        assert!(b.check_vocab(9).is_err());
    }

    #[test]
    fn encode_corpus_splits_everything_once() {
        let corpus: Vec<Example> = (0..10)
            .map(|i| Example {
                label: i % 2,
                tokens: vec![format!("w{i}"), "common".into()],
            })
            .collect();
        let all: Vec<Vec<String>> = corpus.iter().map(|e| e.tokens.clone()).collect();
        let vocab = build_vocab(&all, 20).unwrap();
        let (train, test) = encode_corpus(&corpus, &vocab, 3, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut seen: Vec<usize> = train.tokens().iter().chain(test.tokens()).map(|r| r[1]).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
        assert!(train.tokens().iter().all(|r| r[0] == PAD));
    }

    proptest! {
        #[test]
        fn pad_or_truncate_is_idempotent(seq in prop::collection::vec(0usize..100, 0..40), len in 1usize..30) {
            let once = pad_or_truncate(&seq, len);
            prop_assert_eq!(once.len(), len);
            prop_assert_eq!(pad_or_truncate(&once, len), once);
        }
    }
}
