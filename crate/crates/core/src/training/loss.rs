use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::sigmoid;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Single sigmoid output, labels in `{0, 1}`.
    BinaryCrossEntropy,
    /// Softmax over class logits, one-hot targets.
    CategoricalCrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::BinaryCrossEntropy => "bce",
            LossKind::CategoricalCrossEntropy => "cce",
        }
    }

    /// Output width required for `classes` labels.
    pub fn output_dim(self, classes: usize) -> usize {
        match self {
            LossKind::BinaryCrossEntropy => 1,
            LossKind::CategoricalCrossEntropy => classes,
        }
    }

    /// Target vector for an integer label.
    pub fn target(self, label: usize, outputs: usize) -> Result<Vec<f64>> {
        match self {
            LossKind::BinaryCrossEntropy if label <= 1 => Ok(vec![label as f64]),
            LossKind::BinaryCrossEntropy => Err(Error::invalid(format!("binary label must be 0 or 1, got {label}"))),
            LossKind::CategoricalCrossEntropy if label < outputs => {
                let mut y = vec![0.0; outputs];
                y[label] = 1.0;
                Ok(y)
            }
            LossKind::CategoricalCrossEntropy => {
                Err(Error::invalid(format!("class {label} out of range for {outputs} outputs")))
            }
        }
    }

    /// Predicted class for raw outputs.
    pub fn predict(self, raw: &[f64]) -> usize {
        match self {
            LossKind::BinaryCrossEntropy => usize::from(sigmoid(raw[0]) > 0.5),
            LossKind::CategoricalCrossEntropy => raw
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" | "binary_cross_entropy" => Ok(LossKind::BinaryCrossEntropy),
            "cce" | "categorical_cross_entropy" => Ok(LossKind::CategoricalCrossEntropy),
            _ => Err(Error::Unknown {
                kind: "loss",
                name: s.to_string(),
            }),
        }
    }
}

fn log_clamp_bounds() -> (f64, f64) {
    (PROB_CLAMP.ln(), (-PROB_CLAMP).ln_1p())
}

/// `ln σ(z)` without forming `σ(z)`.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Loss and its gradient with respect to the raw outputs. The gradient is
/// the unclamped `p - y`.
pub fn loss_eval(kind: LossKind, raw: &[f64], y_true: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (lo, hi) = log_clamp_bounds();
    match kind {
        LossKind::BinaryCrossEntropy => {
            if raw.len() != 1 || y_true.len() != 1 {
                return Err(Error::shape("binary cross-entropy", "len 1", format!("raw {} / target {}", raw.len(), y_true.len())));
            }
            let y = y_true[0];
            if y != 0.0 && y != 1.0 {
                return Err(Error::invalid(format!("binary target must be 0 or 1, got {y}")));
            }
            let z = raw[0];
            let log_p = log_sigmoid(z).clamp(lo, hi);
            let log_q = log_sigmoid(-z).clamp(lo, hi);
            let loss = -(y * log_p + (1.0 - y) * log_q);
            Ok((loss, vec![sigmoid(z) - y]))
        }
        LossKind::CategoricalCrossEntropy => {
            if raw.len() != y_true.len() || raw.is_empty() {
                return Err(Error::shape("categorical cross-entropy", raw.len(), y_true.len()));
            }
            let ones = y_true.iter().filter(|&&v| v == 1.0).count();
            let zeros = y_true.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != y_true.len() {
                return Err(Error::invalid("categorical target must be one-hot"));
            }
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = raw.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(raw.len());
            for (&r, &y) in raw.iter().zip(y_true) {
                if y == 1.0 {
                    loss -= (r - log_z).clamp(lo, hi);
                }
                grad.push((r - log_z).exp() - y);
            }
            Ok((loss, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn binary_at_zero_logit() {
        let (l, g) = loss_eval(LossKind::BinaryCrossEntropy, &[0.0], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l - 0.693147).abs() < 1e-6);
        assert_eq!(g, vec![-0.5]);
    }

    #[test]
    fn binary_exact_prediction_has_zero_gradient() {
        let (l, g) = loss_eval(LossKind::BinaryCrossEntropy, &[60.0], &[1.0]).unwrap();
        assert_eq!(g, vec![0.0]);
        // clamped, so tiny but not zero
        assert!(l > 0.0 && l < 2e-12);
        let (_, g) = loss_eval(LossKind::BinaryCrossEntropy, &[-800.0], &[0.0]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn binary_is_clamped_when_confidently_wrong() {
        let (l, _) = loss_eval(LossKind::BinaryCrossEntropy, &[-800.0], &[1.0]).unwrap();
        assert!((l + PROB_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn categorical_uniform() {
        let (l, g) = loss_eval(LossKind::CategoricalCrossEntropy, &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert!((l - 1.098612).abs() < 1e-6);
        let expect = [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_targets() {
        assert!(loss_eval(LossKind::BinaryCrossEntropy, &[0.0], &[0.5]).is_err());
        assert!(loss_eval(LossKind::BinaryCrossEntropy, &[0.0, 1.0], &[1.0]).is_err());
        assert!(loss_eval(LossKind::CategoricalCrossEntropy, &[0.0; 3], &[1.0, 1.0, 0.0]).is_err());
        assert!(loss_eval(LossKind::CategoricalCrossEntropy, &[0.0; 3], &[0.5, 0.5, 0.0]).is_err());
        assert!(loss_eval(LossKind::CategoricalCrossEntropy, &[0.0; 3], &[1.0, 0.0]).is_err());
        assert!(LossKind::BinaryCrossEntropy.target(2, 1).is_err());
        assert!(LossKind::CategoricalCrossEntropy.target(3, 3).is_err());
    }

    #[test]
    fn predictions() {
        assert_eq!(LossKind::BinaryCrossEntropy.predict(&[0.1]), 1);
        assert_eq!(LossKind::BinaryCrossEntropy.predict(&[0.0]), 0);
        assert_eq!(LossKind::CategoricalCrossEntropy.predict(&[0.1, 2.0, -1.0]), 1);
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(z in -50.0f64..50.0, y in 0usize..2, raw in prop::collection::vec(-20.0f64..20.0, 2..6), c in 0usize..6) {
            let (l, _) = loss_eval(LossKind::BinaryCrossEntropy, &[z], &[y as f64]).unwrap();
            prop_assert!(l > 0.0);
            let c = c % raw.len();
            let target = LossKind::CategoricalCrossEntropy.target(c, raw.len()).unwrap();
            let (l, g) = loss_eval(LossKind::CategoricalCrossEntropy, &raw, &target).unwrap();
            prop_assert!(l > 0.0);
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }

        #[test]
        fn gradient_matches_finite_difference(z in -8.0f64..8.0, y in 0usize..2) {
            let h = 1e-6;
            let f = |z: f64| loss_eval(LossKind::BinaryCrossEntropy, &[z], &[y as f64]).unwrap().0;
            let fd = (f(z + h) - f(z - h)) / (2.0 * h);
            let (_, g) = loss_eval(LossKind::BinaryCrossEntropy, &[z], &[y as f64]).unwrap();
            prop_assert!((fd - g[0]).abs() < 1e-8);
        }
    }
}
