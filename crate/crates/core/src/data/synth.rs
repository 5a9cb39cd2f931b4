//! Synthetic sequence-classification tasks. Each task owns a deterministic
//! labelling function and a sampler that draws a sequence for a requested
//! label, so generated splits are exactly class-balanced.

use std::fmt;
use std::str::FromStr;

use super::text::OOV;
use super::SequenceBatch;
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// First non-reserved token id.
const FIRST: usize = 2;
/// Upper bound on marker occurrences of the winning class per sequence.
const MAX_MARKERS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SynthTaskKind {
    KeywordCount,
    FirstTokenClass,
    MajorityVote,
}

impl SynthTaskKind {
    pub fn name(self) -> &'static str {
        self.task().name()
    }

    pub fn task(self) -> &'static dyn SynthTask {
        match self {
            SynthTaskKind::KeywordCount => &KeywordCount,
            SynthTaskKind::FirstTokenClass => &FirstTokenClass,
            SynthTaskKind::MajorityVote => &MajorityVote,
        }
    }
}

impl fmt::Display for SynthTaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SynthTaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        task_registry::lookup(s).map(|t| t.kind())
    }
}

pub mod task_registry {
    use super::*;

    static TASKS: [&dyn SynthTask; 3] = [&KeywordCount, &FirstTokenClass, &MajorityVote];

    pub fn all() -> &'static [&'static dyn SynthTask] {
        &TASKS
    }

    pub fn lookup(name: &str) -> Result<&'static dyn SynthTask> {
        TASKS
            .iter()
            .copied()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::Unknown {
                kind: "synthetic task",
                name: name.to_string(),
            })
    }
}

pub trait SynthTask: Send + Sync {
    fn kind(&self) -> SynthTaskKind;

    fn name(&self) -> &'static str;

    fn num_classes(&self, vocab_size: usize) -> usize;

    /// The ground-truth labelling function.
    fn label(&self, tokens: &[usize], vocab_size: usize) -> usize;

    /// Draw a sequence whose label is `label`.
    fn sample(&self, label: usize, seq_len: usize, vocab_size: usize, rng: &mut RngState) -> Vec<usize>;
}

fn fillers(from: usize, vocab_size: usize) -> Vec<usize> {
    if from < vocab_size {
        (from..vocab_size).collect()
    } else {
        vec![OOV]
    }
}

fn filled(seq_len: usize, pool: &[usize], rng: &mut RngState) -> Vec<usize> {
    (0..seq_len).map(|_| pool[rng.below(pool.len())]).collect()
}

/// Place `counts[k]` copies of `tokens[k]` at distinct random positions.
fn scatter_markers(seq: &mut [usize], tokens: &[usize], counts: &[usize], rng: &mut RngState) {
    let mut positions: Vec<usize> = (0..seq.len()).collect();
    let total: usize = counts.iter().sum();
    debug_assert!(total <= seq.len());
    // partial Fisher–Yates: the first `total` slots become a random subset
    for i in 0..total {
        let j = i + rng.below(positions.len() - i);
        positions.swap(i, j);
    }
    let mut slot = positions.into_iter();
    for (&tok, &c) in tokens.iter().zip(counts) {
        for pos in slot.by_ref().take(c) {
            seq[pos] = tok;
        }
    }
}

fn winner_count(seq_len: usize, rng: &mut RngState) -> usize {
    let hi = MAX_MARKERS.min(seq_len);
    let lo = 2.min(hi);
    lo + rng.below(hi - lo + 1)
}

/// Binary: `1` iff the positive marker (id 2) occurs more often than the
/// negative marker (id 3). Other ids are filler.
pub struct KeywordCount;

impl KeywordCount {
    pub const POSITIVE: usize = FIRST;
    pub const NEGATIVE: usize = FIRST + 1;
}

impl SynthTask for KeywordCount {
    fn kind(&self) -> SynthTaskKind {
        SynthTaskKind::KeywordCount
    }

    fn name(&self) -> &'static str {
        "keyword_count"
    }

    fn num_classes(&self, _vocab_size: usize) -> usize {
        2
    }

    fn label(&self, tokens: &[usize], _vocab_size: usize) -> usize {
        let pos = tokens.iter().filter(|&&t| t == Self::POSITIVE).count();
        let neg = tokens.iter().filter(|&&t| t == Self::NEGATIVE).count();
        usize::from(pos > neg)
    }

    fn sample(&self, label: usize, seq_len: usize, vocab_size: usize, rng: &mut RngState) -> Vec<usize> {
        let mut seq = filled(seq_len, &fillers(FIRST + 2, vocab_size), rng);
        let hi = winner_count(seq_len, rng);
        let lo = rng.below((hi - 1).min(seq_len - hi) + 1);
        let (pos, neg) = if label == 1 { (hi, lo) } else { (lo, hi) };
        scatter_markers(&mut seq, &[Self::POSITIVE, Self::NEGATIVE], &[pos, neg], rng);
        seq
    }
}

/// `k`-way: the class of the first token, with `class(id) = (id - 2) mod k`
/// and `k = min(4, vocab_size - 2)`.
pub struct FirstTokenClass;

impl FirstTokenClass {
    fn classes(vocab_size: usize) -> usize {
        4.min(vocab_size - FIRST)
    }
}

impl SynthTask for FirstTokenClass {
    fn kind(&self) -> SynthTaskKind {
        SynthTaskKind::FirstTokenClass
    }

    fn name(&self) -> &'static str {
        "first_token_class"
    }

    fn num_classes(&self, vocab_size: usize) -> usize {
        Self::classes(vocab_size)
    }

    fn label(&self, tokens: &[usize], vocab_size: usize) -> usize {
        match tokens.first() {
            Some(&t) if t >= FIRST => (t - FIRST) % Self::classes(vocab_size),
            _ => 0,
        }
    }

    fn sample(&self, label: usize, seq_len: usize, vocab_size: usize, rng: &mut RngState) -> Vec<usize> {
        let k = Self::classes(vocab_size);
        let mut seq = filled(seq_len, &fillers(FIRST, vocab_size), rng);
        let choices: Vec<usize> = (FIRST + label..vocab_size).step_by(k).collect();
        seq[0] = choices[rng.below(choices.len())];
        seq
    }
}

/// `k`-way: the most frequent of `k = min(3, vocab_size - 2)` marker ids
/// (2, 3, ..). Sampled sequences always have a unique winner.
pub struct MajorityVote;

impl MajorityVote {
    fn classes(vocab_size: usize) -> usize {
        3.min(vocab_size - FIRST)
    }
}

impl SynthTask for MajorityVote {
    fn kind(&self) -> SynthTaskKind {
        SynthTaskKind::MajorityVote
    }

    fn name(&self) -> &'static str {
        "majority_vote"
    }

    fn num_classes(&self, vocab_size: usize) -> usize {
        Self::classes(vocab_size)
    }

    fn label(&self, tokens: &[usize], vocab_size: usize) -> usize {
        let k = Self::classes(vocab_size);
        let mut counts = vec![0usize; k];
        for &t in tokens {
            if (FIRST..FIRST + k).contains(&t) {
                counts[t - FIRST] += 1;
            }
        }
        // lowest class wins ties
        let best = *counts.iter().max().expect("k >= 2");
        counts.iter().position(|&c| c == best).expect("max exists")
    }

    fn sample(&self, label: usize, seq_len: usize, vocab_size: usize, rng: &mut RngState) -> Vec<usize> {
        let k = Self::classes(vocab_size);
        let mut seq = filled(seq_len, &fillers(FIRST + k, vocab_size), rng);
        let win = winner_count(seq_len, rng);
        let mut left = seq_len - win;
        let counts: Vec<usize> = (0..k)
            .map(|c| {
                if c == label {
                    win
                } else {
                    let n = rng.below((win - 1).min(left) + 1);
                    left -= n;
                    n
                }
            })
            .collect();
        let tokens: Vec<usize> = (FIRST..FIRST + k).collect();
        scatter_markers(&mut seq, &tokens, &counts, rng);
        seq
    }
}

/// Balanced 80/20 train/test splits for `kind`.
pub fn synth_generate(
    kind: SynthTaskKind,
    n_samples: usize,
    seq_len: usize,
    vocab_size: usize,
    rng: &mut RngState,
) -> Result<(SequenceBatch, SequenceBatch)> {
    if n_samples < 10 || seq_len < 2 || vocab_size < 4 {
        return Err(Error::invalid(format!(
            "synthetic data needs n_samples >= 10, T >= 2, vocab >= 4; got {n_samples}, {seq_len}, {vocab_size}"
        )));
    }
    let task = kind.task();
    let classes = task.num_classes(vocab_size);
    let n_train = n_samples * 4 / 5;
    let mut split = |len: usize| {
        let mut rows: Vec<(Vec<usize>, usize)> = (0..len)
            .map(|i| {
                let label = i % classes;
                (task.sample(label, seq_len, vocab_size, rng), label)
            })
            .collect();
        rng.shuffle(&mut rows);
        let (tokens, labels) = rows.into_iter().unzip();
        SequenceBatch::new(tokens, labels)
    };
    let train = split(n_train)?;
    let test = split(n_samples - n_train)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [SynthTaskKind; 3] = [
        SynthTaskKind::KeywordCount,
        SynthTaskKind::FirstTokenClass,
        SynthTaskKind::MajorityVote,
    ];

    #[test]
    fn keyword_count_labels() {
        let (p, n) = (KeywordCount::POSITIVE, KeywordCount::NEGATIVE);
        assert_eq!(KeywordCount.label(&[p, 7, n, p, 9, p], 50), 1);
        assert_eq!(KeywordCount.label(&[p, n], 50), 0);
        assert_eq!(KeywordCount.label(&[n, n, p], 50), 0);
    }

    #[test]
    fn samples_carry_requested_label() {
        let mut rng = RngState::new(5);
        for kind in KINDS {
            let task = kind.task();
            for (t, v) in [(2, 4), (3, 5), (40, 50), (7, 6)] {
                for label in 0..task.num_classes(v) {
                    for _ in 0..50 {
                        let s = task.sample(label, t, v, &mut rng);
                        assert_eq!(s.len(), t);
                        assert!(s.iter().all(|&x| x < v && x != 0));
                        assert_eq!(task.label(&s, v), label, "{kind} T={t} V={v}");
                    }
                }
            }
        }
    }

    #[test]
    fn splits_are_balanced_and_sized() {
        for kind in KINDS {
            let (train, test) = synth_generate(kind, 101, 12, 20, &mut RngState::new(1)).unwrap();
            assert_eq!((train.len(), test.len()), (80, 21));
            let classes = kind.task().num_classes(20);
            for split in [&train, &test] {
                let mut counts = vec![0i64; classes];
                for &l in split.labels() {
                    counts[l] += 1;
                }
                let (mx, mn) = (counts.iter().max().unwrap(), counts.iter().min().unwrap());
                assert!(mx - mn <= 1, "{kind}: {counts:?}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in KINDS {
            let a = synth_generate(kind, 50, 10, 12, &mut RngState::new(9)).unwrap();
            let b = synth_generate(kind, 50, 10, 12, &mut RngState::new(9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn desk_scale_splits_share_no_sequences() {
        let (train, test) = synth_generate(SynthTaskKind::KeywordCount, 2500, 40, 50, &mut RngState::new(3)).unwrap();
        let seen: std::collections::HashSet<&Vec<usize>> = train.tokens().iter().collect();
        assert!(test.tokens().iter().all(|r| !seen.contains(r)));
    }

    #[test]
    fn rejects_out_of_bounds_requests() {
        let mut rng = RngState::new(0);
        assert!(synth_generate(SynthTaskKind::KeywordCount, 9, 10, 10, &mut rng).is_err());
        assert!(synth_generate(SynthTaskKind::KeywordCount, 10, 1, 10, &mut rng).is_err());
        assert!(synth_generate(SynthTaskKind::KeywordCount, 10, 10, 3, &mut rng).is_err());
    }

    #[test]
    fn registry_names() {
        for kind in KINDS {
            assert_eq!(kind.name().parse::<SynthTaskKind>().unwrap(), kind);
        }
        assert!("sentiment".parse::<SynthTaskKind>().is_err());
    }

    /// Logistic regression on token counts. If this cannot fit the task the
    /// recurrent acceptance runs are meaningless.
    #[test]
    fn keyword_count_is_linearly_learnable() {
        let v = 50;
        let (train, test) = synth_generate(SynthTaskKind::KeywordCount, 2500, 40, v, &mut RngState::new(17)).unwrap();
        let features = |row: &[usize]| {
            let mut f = vec![0.0; v];
            for &t in row {
                f[t] += 1.0;
            }
            f
        };
        let xs: Vec<Vec<f64>> = train.tokens().iter().map(|r| features(r)).collect();
        let mut w = vec![0.0; v];
        let mut b = 0.0;
        for _ in 0..300 {
            let mut gw = vec![0.0; v];
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(train.labels()) {
                let p = crate::numerics::sigmoid(crate::numerics::dot(&w, x) + b);
                let d = p - y as f64;
                crate::numerics::axpy(d, x, &mut gw);
                gb += d;
            }
            let lr = 0.5 / xs.len() as f64;
            crate::numerics::axpy(-lr, &gw, &mut w);
            b -= lr * gb;
        }
        let correct = test
            .tokens()
            .iter()
            .zip(test.labels())
            .filter(|(r, &y)| {
                let p = crate::numerics::sigmoid(crate::numerics::dot(&w, &features(r)) + b);
                usize::from(p > 0.5) == y
            })
            .count();
        let acc = correct as f64 / test.len() as f64;
        assert!(acc >= 0.99, "bag-of-words accuracy {acc}");
    }
}
