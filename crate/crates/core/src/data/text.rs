use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const OOV: usize = 1;

/// Frequency-ranked token index.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    index: HashMap<String, usize>,
    /// `words[i - 2]` is the token with index `i`.
    words: Vec<String>,
}

impl Vocab {
    /// Total index space including the pad and OOV slots.
    pub fn len(&self) -> usize {
        self.words.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t.as_ref())).collect()
    }

    /// `None` for the reserved pad and OOV indices.
    pub fn word(&self, index: usize) -> Option<&str> {
        index.checked_sub(2).and_then(|i| self.words.get(i)).map(String::as_str)
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<Option<&str>> {
        ids.iter().map(|&i| self.word(i)).collect()
    }
}

/// Keep the `max_words - 2` most frequent tokens; ties break lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], max_words: usize) -> Result<Vocab> {
    if max_words < 3 {
        return Err(Error::invalid(format!("max_words must be >= 3, got {max_words}")));
    }
    if corpus.iter().all(|doc| doc.is_empty()) {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in corpus.iter().flatten() {
        *counts.entry(tok.as_ref()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_words - 2);
    let words: Vec<String> = ranked.into_iter().map(|(w, _)| w.to_string()).collect();
    let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i + 2)).collect();
    Ok(Vocab { index, words })
}

/// Lowercase, split on whitespace, strip ASCII punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub label: usize,
    pub tokens: Vec<String>,
}

/// Read `label<TAB>text` lines. Blank lines are skipped.
pub fn load_tsv_corpus(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(i + 1, "expected `label<TAB>text`".into()))?;
        let label = label
            .trim()
            .parse::<usize>()
            .map_err(|_| parse_err(i + 1, format!("unknown label `{label}`")))?;
        out.push(Example {
            label,
            tokens: tokenize(text),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn docs(words: &[&[&str]]) -> Vec<Vec<String>> {
        words.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn frequency_order() {
        let v = build_vocab(&docs(&[&["a", "b", "a"]]), 4).unwrap();
        assert_eq!(v.index_of("a"), 2);
        assert_eq!(v.index_of("b"), 3);
    }

    #[test]
    fn words_outside_top_k_are_oov() {
        let v = build_vocab(&docs(&[&["a", "a", "b", "c", "c", "c"]]), 4).unwrap();
        assert_eq!(v.index_of("c"), 2);
        assert_eq!(v.index_of("a"), 3);
        assert_eq!(v.index_of("b"), OOV);
        assert_eq!(v.index_of("never"), OOV);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(&docs(&[&["b", "a"]]), 4).unwrap();
        assert_eq!(v.index_of("a"), 2);
        assert_eq!(v.index_of("b"), 3);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(build_vocab(&docs(&[&["a"]]), 2).is_err());
        assert!(build_vocab::<String>(&[], 10).is_err());
        assert!(build_vocab(&docs(&[&[]]), 10).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let corpus = docs(&[&["the", "cat", "sat"], &["the", "dog"]]);
        let v = build_vocab(&corpus, 100).unwrap();
        for doc in &corpus {
            let ids = v.encode(doc);
            let back: Vec<&str> = v.decode(&ids).into_iter().map(Option::unwrap).collect();
            assert_eq!(back, *doc);
        }
        assert_eq!(v.word(PAD), None);
        assert_eq!(v.word(OOV), None);
    }

    #[test]
    fn tokenizer_rule() {
        assert_eq!(tokenize("Great movie!"), vec!["great", "movie"]);
        assert_eq!(tokenize("  it's   A  (very) good-one.. "), vec!["its", "a", "very", "goodone"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("?!").is_empty());
    }

    fn write_tmp(content: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content).unwrap();
        f
    }

    #[test]
    fn tsv_basic_and_empty_text() {
        let f = write_tmp(b"1\tGreat movie!\n0\t\n");
        let rows = load_tsv_corpus(f.path()).unwrap();
        assert_eq!(rows[0], Example { label: 1, tokens: vec!["great".into(), "movie".into()] });
        assert_eq!(rows[1], Example { label: 0, tokens: vec![] });
    }

    #[test]
    fn tsv_crlf_matches_lf() {
        let a = load_tsv_corpus(write_tmp(b"1\tGood film\n0\tBad, bad.\n").path()).unwrap();
        let b = load_tsv_corpus(write_tmp(b"1\tGood film\r\n0\tBad, bad.\r\n").path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tsv_errors_carry_line_numbers() {
        let err = load_tsv_corpus(write_tmp(b"1\tok\nno tab here\n").path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        let err = load_tsv_corpus(write_tmp(b"1\tok\n0\tfine\npositive\tnope\n").path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3:") && msg.contains("unknown label"), "{msg}");
    }
}
