//! Recurrent cell variants.
//!
//! Every variant is a [`CellKernel`]: a stateless strategy that knows its
//! parameter layout, its forward step and its hand-derived backward step.
//! Parameters live in a variant-agnostic [`CellParams`] (one [`Matrix`] per
//! layout entry), so optimizers, checkpoints and the gradient oracle treat all
//! variants alike. Kernels are registered by name in [`registry`].
//!
//! | variant   | cell update                                  | adaptive params |
//! |-----------|----------------------------------------------|-----------------|
//! | `srnn`    | `h = σ(W_hx x + W_hh h' + b_h)`              | n(m+n+1)        |
//! | `lstm`    | gated, `c = f⊙c' + i⊙ĉ`, `h = o⊙σ(c)`         | 4n(m+n+1)       |
//! | `lstm6`   | `c = f c' + σ(W_c x + U_c h' + b_c)`, `h = σ(c)` | n(m+n+1)    |
//! | `lstm_c6` | `c = f c' + σ(W_c x + u_c⊙h' + b_c)`, `h = σ(c)` | n(m+2)      |

mod lstm;
mod slim;
mod srnn;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{init_matrix, matvec, Activation, Matrix, RngState};

pub use lstm::{GatePins, Lstm};
pub use slim::{Lstm6, LstmC6};
pub use srnn::Srnn;

/// Default constant forget value for the slim variants.
pub const DEFAULT_FORGET: f64 = 0.59;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellVariant {
    Srnn,
    Lstm,
    Lstm6,
    LstmC6,
}

impl CellVariant {
    pub const ALL: [CellVariant; 4] = [
        CellVariant::Srnn,
        CellVariant::Lstm,
        CellVariant::Lstm6,
        CellVariant::LstmC6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellVariant::Srnn => "srnn",
            CellVariant::Lstm => "lstm",
            CellVariant::Lstm6 => "lstm6",
            CellVariant::LstmC6 => "lstm_c6",
        }
    }

    pub fn kernel(self) -> &'static dyn CellKernel {
        match self {
            CellVariant::Srnn => &Srnn,
            CellVariant::Lstm => &Lstm,
            CellVariant::Lstm6 => &Lstm6,
            CellVariant::LstmC6 => &LstmC6,
        }
    }

    /// Whether the variant carries the non-adaptive forget constant.
    pub fn uses_forget_const(self) -> bool {
        matches!(self, CellVariant::Lstm6 | CellVariant::LstmC6)
    }
}

impl fmt::Display for CellVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for CellVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        registry::lookup(s).map(|k| k.variant())
    }
}

/// Name-keyed lookup over every available cell kernel.
pub mod registry {
    use super::*;

    static KERNELS: [&dyn CellKernel; 4] = [&Srnn, &Lstm, &Lstm6, &LstmC6];

    pub fn all() -> &'static [&'static dyn CellKernel] {
        &KERNELS
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        KERNELS.iter().map(|k| k.variant().name())
    }

    pub fn lookup(name: &str) -> Result<&'static dyn CellKernel> {
        KERNELS
            .iter()
            .copied()
            .find(|k| k.variant().name() == name)
            .ok_or_else(|| Error::Unknown {
                kind: "cell variant",
                name: name.to_string(),
            })
    }
}

/// How a parameter tensor's shape follows from `(m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    /// `n x m`, multiplies the input.
    Input,
    /// `n x n`, multiplies the previous hidden state.
    Recurrent,
    /// `n x 1`, point-wise multiplier of the previous hidden state.
    Diagonal,
    /// `n x 1`, zero-initialized.
    Bias,
}

#[derive(Clone, Copy, Debug)]
pub struct TensorSpec {
    pub name: &'static str,
    pub role: TensorRole,
}

impl TensorSpec {
    pub const fn new(name: &'static str, role: TensorRole) -> Self {
        TensorSpec { name, role }
    }

    pub fn shape(&self, m: usize, n: usize) -> (usize, usize) {
        match self.role {
            TensorRole::Input => (n, m),
            TensorRole::Recurrent => (n, n),
            TensorRole::Diagonal | TensorRole::Bias => (n, 1),
        }
    }
}

/// A recurrent cell strategy. Implementations are stateless; all adaptive
/// state lives in [`CellParams`], whose tensors follow [`CellKernel::layout`].
///
/// `forward` and `backward` assume shapes were validated by the caller; the
/// checked entry points are [`CellParams::step`] and the `*_step` functions.
pub trait CellKernel: Send + Sync {
    fn variant(&self) -> CellVariant;

    fn layout(&self) -> &'static [TensorSpec];

    /// Closed-form count of adaptive parameters.
    fn param_count(&self, m: usize, n: usize) -> usize;

    /// Multiply-accumulates spent in one forward step's products.
    fn step_macs(&self, m: usize, n: usize) -> usize;

    fn forward(&self, p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache;

    /// One reverse step. `dh` is the full gradient reaching `h_t`, `dc` the
    /// gradient reaching `c_t` through `c_{t+1}`. Parameter gradients are
    /// accumulated into `grads` (same layout as `p`); `dx`, `dh_prev` and
    /// `dc_prev` are overwritten.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        p: &CellParams,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut [Matrix],
        dx: &mut [f64],
        dh_prev: &mut [f64],
        dc_prev: &mut [f64],
    );
}

/// Adaptive parameters of one cell plus its fixed hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    variant: CellVariant,
    input_dim: usize,
    hidden_dim: usize,
    act: Activation,
    forget_const: f64,
    tensors: Vec<Matrix>,
}

fn check_forget(variant: CellVariant, f: f64) -> Result<()> {
    if variant.uses_forget_const() && !(f > -1.0 && f < 1.0) {
        return Err(Error::invalid(format!(
            "forget constant must satisfy -1 < f < 1, got {f}"
        )));
    }
    Ok(())
}

impl CellParams {
    /// Glorot-uniform weights (including `u_c`), zero biases.
    pub fn init(
        variant: CellVariant,
        m: usize,
        n: usize,
        act: Activation,
        forget_const: f64,
        rng: &mut RngState,
    ) -> Result<Self> {
        Self::build(variant, m, n, act, forget_const, |spec| {
            let (r, c) = spec.shape(m, n);
            match spec.role {
                TensorRole::Bias => Matrix::zeros(r, c),
                _ => init_matrix(rng, r, c),
            }
        })
    }

    pub fn zeros(variant: CellVariant, m: usize, n: usize, act: Activation, forget_const: f64) -> Result<Self> {
        Self::build(variant, m, n, act, forget_const, |spec| {
            let (r, c) = spec.shape(m, n);
            Matrix::zeros(r, c)
        })
    }

    fn build(
        variant: CellVariant,
        m: usize,
        n: usize,
        act: Activation,
        forget_const: f64,
        mut make: impl FnMut(&TensorSpec) -> Matrix,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid(format!("cell dimensions must be >= 1, got m={m} n={n}")));
        }
        check_forget(variant, forget_const)?;
        let tensors = variant.kernel().layout().iter().map(&mut make).collect();
        Ok(CellParams {
            variant,
            input_dim: m,
            hidden_dim: n,
            act,
            forget_const,
            tensors,
        })
    }

    /// Assemble from explicit tensors in layout order.
    pub fn from_tensors(
        variant: CellVariant,
        m: usize,
        n: usize,
        act: Activation,
        forget_const: f64,
        tensors: Vec<Matrix>,
    ) -> Result<Self> {
        let layout = variant.kernel().layout();
        if tensors.len() != layout.len() {
            return Err(Error::shape(
                "CellParams::from_tensors",
                format!("{} tensors for {variant}", layout.len()),
                format!("{} given", tensors.len()),
            ));
        }
        for (spec, t) in layout.iter().zip(&tensors) {
            let (r, c) = spec.shape(m, n);
            if t.shape() != (r, c) {
                return Err(Error::shape(
                    "CellParams::from_tensors",
                    format!("{} {r}x{c}", spec.name),
                    t.shape_str(),
                ));
            }
        }
        check_forget(variant, forget_const)?;
        Ok(CellParams {
            variant,
            input_dim: m,
            hidden_dim: n,
            act,
            forget_const,
            tensors,
        })
    }

    pub fn variant(&self) -> CellVariant {
        self.variant
    }

    pub fn kernel(&self) -> &'static dyn CellKernel {
        self.variant.kernel()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn activation(&self) -> Activation {
        self.act
    }

    pub fn forget_const(&self) -> f64 {
        self.forget_const
    }

    pub fn set_forget_const(&mut self, f: f64) -> Result<()> {
        check_forget(self.variant, f)?;
        self.forget_const = f;
        Ok(())
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.kernel().layout().iter().position(|s| s.name == name)
    }

    /// Number of real values stored across all tensors.
    pub fn adaptive_count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Zero gradients shaped like this cell's tensors.
    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect()
    }

    pub fn check_step_inputs(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape("cell step input", format!("m={}", self.input_dim), format!("x len {}", x.len())));
        }
        if h_prev.len() != self.hidden_dim {
            return Err(Error::shape("cell step state", format!("n={}", self.hidden_dim), format!("h len {}", h_prev.len())));
        }
        if c_prev.len() != self.hidden_dim {
            return Err(Error::shape("cell step state", format!("n={}", self.hidden_dim), format!("c len {}", c_prev.len())));
        }
        Ok(())
    }

    /// Checked forward step for whatever variant these params hold.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<StepCache> {
        self.check_step_inputs(x, h_prev, c_prev)?;
        Ok(self.kernel().forward(self, x, h_prev, c_prev))
    }

    fn expect_variant(&self, want: CellVariant) -> Result<()> {
        if self.variant != want {
            return Err(Error::invalid(format!("expected {want} parameters, got {}", self.variant)));
        }
        Ok(())
    }
}

/// Forward intermediates of one timestep, kept for the reverse pass.
///
/// Gate vectors are empty for `srnn`; for the slim variants they hold the
/// constants actually applied (`i = o = 1`, `f = forget_const`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// Pre-activation of the candidate (of `h` for `srnn`).
    pub pre: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub c: Vec<f64>,
    /// `σ(c_t)`; equals `h` for the slim variants.
    pub c_act: Vec<f64>,
    pub h: Vec<f64>,
}

impl StepCache {
    /// Recompute `f ⊙ c_prev + i ⊙ c̃` from the stored fields.
    pub fn reconstruct_cell(&self) -> Vec<f64> {
        (0..self.c.len())
            .map(|k| self.f[k] * self.c_prev[k] + self.i[k] * self.c_tilde[k])
            .collect()
    }

    /// Smallest distance of any argument to the cell nonlinearity from zero.
    /// Used to keep finite differences away from relu kinks.
    pub fn min_abs_preactivation(&self, variant: CellVariant) -> f64 {
        let mut d = self.pre.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if variant != CellVariant::Srnn {
            d = self.c.iter().fold(d, |a, v| a.min(v.abs()));
        }
        d
    }
}

pub fn srnn_step(p: &CellParams, x: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, StepCache)> {
    p.expect_variant(CellVariant::Srnn)?;
    let zeros = vec![0.0; p.hidden_dim];
    let cache = p.step(x, h_prev, &zeros)?;
    Ok((cache.h.clone(), cache))
}

pub fn lstm_step(p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
    p.expect_variant(CellVariant::Lstm)?;
    let cache = p.step(x, h_prev, c_prev)?;
    Ok((cache.h.clone(), cache.c.clone(), cache))
}

pub fn lstm6_step(p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
    p.expect_variant(CellVariant::Lstm6)?;
    let cache = p.step(x, h_prev, c_prev)?;
    Ok((cache.h.clone(), cache.c.clone(), cache))
}

pub fn lstmc6_step(p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
    p.expect_variant(CellVariant::LstmC6)?;
    let cache = p.step(x, h_prev, c_prev)?;
    Ok((cache.h.clone(), cache.c.clone(), cache))
}

/// Standard LSTM step with selected gates pinned to constants instead of
/// computed. With no pins this is exactly [`lstm_step`].
pub fn gate_override_step(
    p: &CellParams,
    pins: GatePins,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, StepCache)> {
    p.expect_variant(CellVariant::Lstm)?;
    pins.validate()?;
    p.check_step_inputs(x, h_prev, c_prev)?;
    let cache = Lstm::forward_pinned(p, pins, x, h_prev, c_prev);
    Ok((cache.h.clone(), cache.c.clone(), cache))
}

/// Affine readout `y = W_hy h + b_y`. Squashing belongs to the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputLayer {
    pub w: Matrix,
    pub b: Matrix,
}

impl OutputLayer {
    pub fn init(input: usize, output: usize, rng: &mut RngState) -> Self {
        OutputLayer {
            w: init_matrix(rng, output, input),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn new(w: Matrix, b: Matrix) -> Result<Self> {
        if b.cols() != 1 || b.rows() != w.rows() {
            return Err(Error::shape("OutputLayer::new", w.shape_str(), b.shape_str()));
        }
        Ok(OutputLayer { w, b })
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut y = matvec(&self.w, h)?;
        for (yi, bi) in y.iter_mut().zip(self.b.as_slice()) {
            *yi += bi;
        }
        Ok(y)
    }
}

/// Run the cell over `xs` from `(h0, c0)`, caching every step.
pub fn run_cell<'a>(
    p: &CellParams,
    xs: impl IntoIterator<Item = &'a [f64]>,
    h0: &[f64],
    c0: &[f64],
) -> Result<Vec<StepCache>> {
    let kernel = p.kernel();
    let mut caches: Vec<StepCache> = Vec::new();
    for x in xs {
        let cache = match caches.last() {
            None => {
                p.check_step_inputs(x, h0, c0)?;
                kernel.forward(p, x, h0, c0)
            }
            Some(prev) => {
                p.check_step_inputs(x, &prev.h, &prev.c)?;
                kernel.forward(p, x, &prev.h, &prev.c)
            }
        };
        caches.push(cache);
    }
    if caches.is_empty() {
        return Err(Error::invalid("empty input sequence"));
    }
    Ok(caches)
}

/// Many-to-one sequence run: the readout sees only the final hidden state.
pub fn run_sequence(
    p: &CellParams,
    out: &OutputLayer,
    xs: &[Vec<f64>],
    h0: &[f64],
    c0: &[f64],
) -> Result<(Vec<f64>, Vec<StepCache>)> {
    let caches = run_cell(p, xs.iter().map(Vec::as_slice), h0, c0)?;
    let y = out.apply(&caches.last().expect("nonempty").h)?;
    Ok((y, caches))
}

/// `[h_fwd_T ; h_bwd_T]`: forward pass over `xs`, second pass over `xs`
/// reversed, both from zero state.
pub fn bidirectional_run(p_fwd: &CellParams, p_bwd: &CellParams, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_bidirectional_pair(p_fwd, p_bwd)?;
    let n = p_fwd.hidden_dim();
    let zeros = vec![0.0; n];
    let fwd = run_cell(p_fwd, xs.iter().map(Vec::as_slice), &zeros, &zeros)?;
    let bwd = run_cell(p_bwd, xs.iter().rev().map(Vec::as_slice), &zeros, &zeros)?;
    let mut h = fwd.last().expect("nonempty").h.clone();
    h.extend_from_slice(&bwd.last().expect("nonempty").h);
    Ok(h)
}

pub fn check_bidirectional_pair(p_fwd: &CellParams, p_bwd: &CellParams) -> Result<()> {
    let key = |p: &CellParams| (p.variant(), p.input_dim(), p.hidden_dim());
    if key(p_fwd) != key(p_bwd) {
        let fmt = |p: &CellParams| format!("{} m={} n={}", p.variant(), p.input_dim(), p.hidden_dim());
        return Err(Error::shape("bidirectional pair", fmt(p_fwd), fmt(p_bwd)));
    }
    Ok(())
}

/// Adaptive parameters of the recurrent layer (doubled when bidirectional).
pub fn param_count(variant: CellVariant, m: usize, n: usize, bidirectional: bool) -> usize {
    let one = variant.kernel().param_count(m, n);
    if bidirectional {
        2 * one
    } else {
        one
    }
}

pub fn step_mac_count(variant: CellVariant, m: usize, n: usize) -> usize {
    variant.kernel().step_macs(m, n)
}
