use std::fmt;
use std::str::FromStr;

use super::bptt::GradientSet;
use super::network::Network;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
    Sgd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Adam, OptimizerKind::RmsProp, OptimizerKind::Sgd];

    pub fn name(self) -> &'static str {
        self.rule().name()
    }

    pub fn rule(self) -> &'static dyn UpdateRule {
        match self {
            OptimizerKind::Adam => &Adam,
            OptimizerKind::RmsProp => &RmsProp,
            OptimizerKind::Sgd => &Sgd,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        registry::lookup(s).map(UpdateRule::kind)
    }
}

pub mod registry {
    use super::{Adam, RmsProp, Sgd, UpdateRule};
    use crate::error::{Error, Result};

    static RULES: [&dyn UpdateRule; 3] = [&Adam, &RmsProp, &Sgd];

    pub fn all() -> &'static [&'static dyn UpdateRule] {
        &RULES
    }

    pub fn lookup(name: &str) -> Result<&'static dyn UpdateRule> {
        RULES.iter().copied().find(|r| r.name() == name).ok_or_else(|| Error::Unknown {
            kind: "optimizer",
            name: name.to_string(),
        })
    }
}

/// An elementwise first-order update. Per-parameter state lives in
/// `slots` (one buffer per [`UpdateRule::slot_count`], zero-initialised).
pub trait UpdateRule: Send + Sync {
    fn kind(&self) -> OptimizerKind;

    fn name(&self) -> &'static str;

    fn slot_count(&self) -> usize;

    /// `step` counts from 1.
    fn apply(&self, eta: f64, step: u64, theta: &mut [f64], grad: &[f64], slots: &mut [Vec<f64>]);
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

pub struct Adam;
pub struct RmsProp;
pub struct Sgd;

impl UpdateRule for Adam {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::Adam
    }

    fn name(&self) -> &'static str {
        "adam"
    }

    fn slot_count(&self) -> usize {
        2
    }

    fn apply(&self, eta: f64, step: u64, theta: &mut [f64], grad: &[f64], slots: &mut [Vec<f64>]) {
        let [m, v] = slots else { unreachable!("adam has two slots") };
        let t = step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for k in 0..theta.len() {
            let g = grad[k];
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= eta * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

impl UpdateRule for RmsProp {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::RmsProp
    }

    fn name(&self) -> &'static str {
        "rmsprop"
    }

    fn slot_count(&self) -> usize {
        1
    }

    fn apply(&self, eta: f64, _step: u64, theta: &mut [f64], grad: &[f64], slots: &mut [Vec<f64>]) {
        let v = &mut slots[0];
        for k in 0..theta.len() {
            let g = grad[k];
            v[k] = RMSPROP_RHO * v[k] + (1.0 - RMSPROP_RHO) * g * g;
            theta[k] -= eta * g / (v[k].sqrt() + RMSPROP_EPS);
        }
    }
}

impl UpdateRule for Sgd {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::Sgd
    }

    fn name(&self) -> &'static str {
        "sgd"
    }

    fn slot_count(&self) -> usize {
        0
    }

    fn apply(&self, eta: f64, _step: u64, theta: &mut [f64], grad: &[f64], _slots: &mut [Vec<f64>]) {
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= eta * g;
        }
    }
}

/// Learning rate, step counter and per-tensor moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    eta: f64,
    step: u64,
    /// `slots[group][slot][k]`; allocated on the first step.
    slots: Vec<Vec<Vec<f64>>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {eta}")));
        }
        Ok(OptimizerState {
            kind,
            eta,
            step: 0,
            slots: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update to raw parameter tensors.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("optimizer_step", params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape("optimizer_step", p.len(), g.len()));
            }
        }
        let rule = self.kind.rule();
        if self.slots.is_empty() {
            self.slots = params.iter().map(|p| vec![vec![0.0; p.len()]; rule.slot_count()]).collect();
        } else if self.slots.len() != params.len()
            || self.slots.iter().zip(params.iter()).any(|(s, p)| s.first().is_some_and(|b| b.len() != p.len()))
        {
            return Err(Error::invalid("parameter layout changed between optimizer steps"));
        }
        self.step += 1;
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            rule.apply(self.eta, self.step, p, g, s);
        }
        Ok(())
    }
}

/// One update of every adaptive tensor of `net`. The embedding padding
/// row stays zero.
pub fn optimizer_step(state: &mut OptimizerState, net: &mut Network, grads: &GradientSet) -> Result<()> {
    grads.check_matches(net)?;
    {
        let mut params: Vec<&mut [f64]> = net.param_groups_mut().into_iter().map(|m| m.as_mut_slice()).collect();
        let g: Vec<&[f64]> = grads.matrices().iter().map(|m| m.as_slice()).collect();
        state.update(&mut params, &g)?;
    }
    if let Some(e) = net.embedding_mut() {
        e.zero_pad_row();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(kind: OptimizerKind, eta: f64, theta: &mut [f64], grad: impl Fn(&[f64]) -> Vec<f64>, steps: usize) {
        let mut st = OptimizerState::new(kind, eta).unwrap();
        for _ in 0..steps {
            let g = grad(theta);
            st.update(&mut [&mut *theta], &[&g]).unwrap();
        }
    }

    #[test]
    fn adam_first_step_is_about_eta() {
        for g0 in [1e-3, 0.5, 40.0, -3.0] {
            let mut theta = [1.0];
            run(OptimizerKind::Adam, 0.01, &mut theta, |_| vec![g0], 1);
            let moved = 1.0 - theta[0];
            assert!((moved.abs() - 0.01).abs() < 1e-6, "g0={g0} moved={moved}");
            assert_eq!(moved.signum(), g0.signum());
        }
    }

    #[test]
    fn adam_two_steps_on_square_match_hand_rollout() {
        let mut theta = [1.0];
        run(OptimizerKind::Adam, 0.1, &mut theta, |t| vec![2.0 * t[0]], 2);

        let (b1, b2, eps, eta) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let mut x = 1.0f64;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            x -= eta * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!((theta[0] - x).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in OptimizerKind::ALL {
            let mut theta = [0.3, -2.0, 7.5];
            run(kind, 0.1, &mut theta, |_| vec![0.0; 3], 3);
            assert_eq!(theta, [0.3, -2.0, 7.5], "{kind}");
        }
    }

    #[test]
    fn sgd_and_rmsprop_closed_forms() {
        let mut theta = [1.0];
        run(OptimizerKind::Sgd, 0.1, &mut theta, |_| vec![2.0], 1);
        assert_eq!(theta[0], 1.0 - 0.2);

        let mut theta = [1.0];
        run(OptimizerKind::RmsProp, 0.1, &mut theta, |_| vec![2.0], 1);
        let v: f64 = 0.1 * 4.0;
        assert!((theta[0] - (1.0 - 0.1 * 2.0 / (v.sqrt() + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn registry_and_errors() {
        for r in registry::all() {
            assert_eq!(r.name().parse::<OptimizerKind>().unwrap(), r.kind());
        }
        assert!("adagrad".parse::<OptimizerKind>().is_err());
        assert!(OptimizerState::new(OptimizerKind::Sgd, -1.0).is_err());
        assert!(OptimizerState::new(OptimizerKind::Sgd, f64::NAN).is_err());
        let mut st = OptimizerState::new(OptimizerKind::Adam, 0.1).unwrap();
        let mut a = [0.0; 2];
        assert!(st.update(&mut [&mut a], &[&[1.0]]).is_err());
        st.update(&mut [&mut a], &[&[1.0, 1.0]]).unwrap();
        let mut b = [0.0; 3];
        assert!(st.update(&mut [&mut b], &[&[1.0, 1.0, 1.0]]).is_err());
    }
}
