use twofloat::TwoFloat;

use super::bptt::GradientSet;
use super::loss::{LossKind, PROB_CLAMP};
use super::network::Network;
use crate::cells::CellVariant;
use crate::data::{SequenceBatch, PAD};
use crate::error::{Error, Result};
use crate::numerics::Activation;

/// Floor on the denominator of [`rel_err`].
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// `|a - b| / max(REL_ERR_FLOOR, |a| + |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / REL_ERR_FLOOR.max(a.abs() + b.abs())
}

/// Central-difference gradient of the mean batch loss over every adaptive
/// scalar.
///
/// The oracle shares nothing with the BPTT path: it runs its own forward
/// pass straight from the cell formulas, in double-double arithmetic, with
/// each parameter shifted by exactly `±eps`. Rounding the loss to `f64`
/// alone would put ~`1e-16 / eps` of noise into every quotient, which is
/// larger than the tolerance for gradients below ~`1e-4`.
pub fn finite_difference_oracle(net: &Network, batch: &SequenceBatch, loss: LossKind, eps: f64) -> Result<GradientSet> {
    check_eps(eps)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    batch.check_vocab(net.vocab_size())?;
    let targets = batch
        .labels()
        .iter()
        .map(|&l| loss.target(l, net.output_dim()))
        .collect::<Result<Vec<_>>>()?;
    let wide = WideNet::new(net);
    let mut theta: Vec<Dd> = net
        .param_groups()
        .iter()
        .flat_map(|(_, m)| m.as_slice().iter().map(|&v| Dd::from(v)))
        .collect();
    let flat = central_differences(&mut theta, eps, |th| wide.mean_loss(th, batch, &targets, loss));

    let mut grads = GradientSet::zeros_like(net);
    let mut rest = flat.as_slice();
    for g in grads.matrices_mut() {
        let (head, tail) = rest.split_at(g.len());
        g.as_mut_slice().copy_from_slice(head);
        rest = tail;
    }
    Ok(grads)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("eps must be finite and > 0, got {eps}")))
    }
}

type Dd = TwoFloat;

const LN_2_DD: (f64, f64) = (std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

// The crate's own transcendental functions and double-double division
// are only accurate to ~1e-12 and ~1e-17; these reach ~1e-29 using just
// its exact addition and multiplication.

/// `a / b` by two Newton corrections of the `f64` quotient.
fn dd_div(a: Dd, b: Dd) -> Dd {
    let mut q = Dd::from(a.hi() / b.hi());
    for _ in 0..2 {
        q += (a - b * q).hi() / b.hi();
    }
    q
}

/// `e^x`: reduce by `k ln 2`, then by `2^-10`, Taylor series, square back.
fn dd_exp(x: Dd) -> Dd {
    if x.hi() < -745.0 {
        return Dd::from(0.0);
    }
    let ln2 = Dd::try_from(LN_2_DD).expect("normalised constant");
    let k = (x.hi() / LN_2_DD.0).round();
    let r = (x - ln2 * k) / 1024.0;
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for n in 1..=14 {
        term = dd_div(term * r, Dd::from(f64::from(n)));
        sum += term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    sum * 2f64.powi(k as i32)
}

/// Natural log by two Newton steps on [`dd_exp`] from the `f64` estimate.
fn dd_ln(s: Dd) -> Dd {
    let mut y = Dd::from(s.hi().ln());
    for _ in 0..2 {
        y = y + s * dd_exp(-y) - 1.0;
    }
    y
}

/// `(f(θ + ε e_k) − f(θ − ε e_k)) / 2ε` for every `k`. The shifts are exact
/// in double-double; `theta` is restored on return.
fn central_differences(theta: &mut [Dd], eps: f64, f: impl Fn(&[Dd]) -> Dd) -> Vec<f64> {
    let two_eps = Dd::from(2.0 * eps);
    (0..theta.len())
        .map(|k| {
            let orig = theta[k];
            theta[k] = orig + eps;
            let plus = f(theta);
            theta[k] = orig - eps;
            let minus = f(theta);
            theta[k] = orig;
            let q = dd_div(plus - minus, two_eps);
            q.hi() + q.lo()
        })
        .collect()
}

#[derive(Clone, Copy)]
struct WideView<'a> {
    cols: usize,
    data: &'a [Dd],
}

impl WideView<'_> {
    fn row_dot(&self, i: usize, x: &[Dd]) -> Dd {
        let row = &self.data[i * self.cols..(i + 1) * self.cols];
        row.iter().zip(x).fold(Dd::from(0.0), |acc, (&a, &b)| acc + a * b)
    }
}

fn wide_act(kind: Activation, x: Dd) -> Dd {
    let one = Dd::from(1.0);
    match kind {
        Activation::Sigmoid if x >= 0.0 => dd_div(one, one + dd_exp(-x)),
        Activation::Sigmoid => {
            let e = dd_exp(x);
            dd_div(e, one + e)
        }
        Activation::Tanh => {
            let t = dd_exp(x.abs() * -2.0);
            let v = dd_div(one - t, one + t);
            if x < 0.0 {
                -v
            } else {
                v
            }
        }
        Activation::Relu if x > 0.0 => x,
        Activation::Relu => Dd::from(0.0),
    }
}

fn log_sigmoid(z: Dd) -> Dd {
    if z >= 0.0 {
        -dd_ln(dd_exp(-z) + 1.0)
    } else {
        z - dd_ln(dd_exp(z) + 1.0)
    }
}

struct WideCell {
    variant: CellVariant,
    act: Activation,
    forget: f64,
    n: usize,
    /// `(name, group index)` per tensor in layout order.
    tensors: Vec<(&'static str, usize)>,
}

/// Network structure for a forward pass over a flat double-double
/// parameter vector in `param_groups` order.
struct WideNet {
    input_dim: usize,
    /// `(offset, cols)` of every group in the flat vector.
    groups: Vec<(usize, usize)>,
    /// `Some(None)`: trainable embedding in group 0; `Some(Some(t))`: frozen.
    embedding: Option<Option<Vec<Dd>>>,
    cells: Vec<WideCell>,
}

impl WideNet {
    fn new(net: &Network) -> Self {
        let mut offset = 0;
        let groups = net
            .param_groups()
            .iter()
            .map(|(_, m)| {
                let g = (offset, m.cols());
                offset += m.len();
                g
            })
            .collect();
        let embedding = net.embedding().map(|e| {
            (!e.trainable()).then(|| e.table().as_slice().iter().map(|&v| Dd::from(v)).collect())
        });
        let mut base = usize::from(matches!(embedding, Some(None)));
        let cells = net
            .cells()
            .iter()
            .map(|c| {
                let tensors = c.kernel().layout().iter().enumerate().map(|(i, s)| (s.name, base + i)).collect();
                base += c.tensors().len();
                WideCell {
                    variant: c.variant(),
                    act: c.activation(),
                    forget: c.forget_const(),
                    n: c.hidden_dim(),
                    tensors,
                }
            })
            .collect();
        WideNet {
            input_dim: net.input_dim(),
            groups,
            embedding,
            cells,
        }
    }

    fn group<'a>(&self, theta: &'a [Dd], g: usize) -> WideView<'a> {
        let (offset, cols) = self.groups[g];
        let end = self.groups.get(g + 1).map_or(theta.len(), |n| n.0);
        WideView {
            cols,
            data: &theta[offset..end],
        }
    }

    fn tensor<'a>(&self, theta: &'a [Dd], cell: &WideCell, name: &str) -> WideView<'a> {
        let g = cell.tensors.iter().find(|(n, _)| *n == name).expect("tensor in layout").1;
        self.group(theta, g)
    }

    fn inputs(&self, theta: &[Dd], tokens: &[usize]) -> Vec<Vec<Dd>> {
        let m = self.input_dim;
        let zero = Dd::from(0.0);
        tokens
            .iter()
            .map(|&t| {
                let table = match &self.embedding {
                    None => return (0..m).map(|j| Dd::from(if j == t { 1.0 } else { 0.0 })).collect(),
                    Some(_) if t == PAD => return vec![zero; m],
                    Some(None) => self.group(theta, 0).data,
                    Some(Some(frozen)) => frozen.as_slice(),
                };
                table[t * m..(t + 1) * m].to_vec()
            })
            .collect()
    }

    /// Final hidden state of one direction.
    fn run(&self, theta: &[Dd], cell: &WideCell, xs: &[&[Dd]]) -> Vec<Dd> {
        let n = cell.n;
        let zero = Dd::from(0.0);
        let sig = |v: Dd| wide_act(Activation::Sigmoid, v);
        let s = |v: Dd| wide_act(cell.act, v);
        let t = |name: &str| self.tensor(theta, cell, name);
        let mut h = vec![zero; n];
        let mut c = vec![zero; n];
        for x in xs {
            let mut h_new = vec![zero; n];
            let mut c_new = vec![zero; n];
            for k in 0..n {
                let affine = |w: &str, u: &str, b: &str| t(w).row_dot(k, x) + t(u).row_dot(k, &h) + t(b).data[k];
                match cell.variant {
                    CellVariant::Srnn => h_new[k] = s(affine("w_hx", "w_hh", "b_h")),
                    CellVariant::Lstm => {
                        let i = sig(affine("w_i", "u_i", "b_i"));
                        let f = sig(affine("w_f", "u_f", "b_f"));
                        let o = sig(affine("w_o", "u_o", "b_o"));
                        let cand = s(affine("w_c", "u_c", "b_c"));
                        c_new[k] = f * c[k] + i * cand;
                        h_new[k] = o * s(c_new[k]);
                    }
                    CellVariant::Lstm6 => {
                        c_new[k] = c[k] * cell.forget + s(affine("w_c", "u_c", "b_c"));
                        h_new[k] = s(c_new[k]);
                    }
                    CellVariant::LstmC6 => {
                        let pre = t("w_c").row_dot(k, x) + t("u_c").data[k] * h[k] + t("b_c").data[k];
                        c_new[k] = c[k] * cell.forget + s(pre);
                        h_new[k] = s(c_new[k]);
                    }
                }
            }
            h = h_new;
            c = c_new;
        }
        h
    }

    fn sample_loss(&self, theta: &[Dd], tokens: &[usize], y: &[f64], loss: LossKind) -> Dd {
        let xs = self.inputs(theta, tokens);
        let fwd: Vec<&[Dd]> = xs.iter().map(Vec::as_slice).collect();
        let mut features = self.run(theta, &self.cells[0], &fwd);
        if let Some(bwd) = self.cells.get(1) {
            let rev: Vec<&[Dd]> = fwd.iter().rev().copied().collect();
            features.extend(self.run(theta, bwd, &rev));
        }
        let k = self.groups.len();
        let (w, b) = (self.group(theta, k - 2), self.group(theta, k - 1));
        let raw: Vec<Dd> = (0..b.data.len()).map(|r| w.row_dot(r, &features) + b.data[r]).collect();

        let lo = dd_ln(Dd::from(PROB_CLAMP));
        let hi = dd_ln(Dd::from(1.0) - PROB_CLAMP);
        let clamp = |v: Dd| if v < lo { lo } else if v > hi { hi } else { v };
        match loss {
            LossKind::BinaryCrossEntropy => {
                let log_p = clamp(log_sigmoid(raw[0]));
                let log_q = clamp(log_sigmoid(-raw[0]));
                -(log_p * y[0] + log_q * (1.0 - y[0]))
            }
            LossKind::CategoricalCrossEntropy => {
                let max = raw.iter().copied().fold(raw[0], |a, v| if v > a { v } else { a });
                let sum = raw.iter().fold(Dd::from(0.0), |acc, &v| acc + dd_exp(v - max));
                let log_z = max + dd_ln(sum);
                let class = y.iter().position(|&v| v == 1.0).expect("one-hot target");
                -clamp(raw[class] - log_z)
            }
        }
    }

    fn mean_loss(&self, theta: &[Dd], batch: &SequenceBatch, targets: &[Vec<f64>], loss: LossKind) -> Dd {
        let total = batch
            .tokens()
            .iter()
            .zip(targets)
            .fold(Dd::from(0.0), |acc, (tokens, y)| acc + self.sample_loss(theta, tokens, y, loss));
        dd_div(total, Dd::from(batch.len() as f64))
    }
}

/// Worst disagreement within one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the entry with the largest relative error.
    pub worst_index: usize,
}

pub fn compare_gradients(analytic: &GradientSet, numeric: &GradientSet) -> Result<Vec<GroupError>> {
    if analytic.len() != numeric.len() {
        return Err(Error::shape("compare_gradients", analytic.len(), numeric.len()));
    }
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|((name, a), (other, b))| {
            if name != other || a.shape() != b.shape() {
                return Err(Error::shape("compare_gradients", format!("{name} {}", a.shape_str()), format!("{other} {}", b.shape_str())));
            }
            let mut out = GroupError {
                name: name.to_string(),
                max_rel_err: 0.0,
                max_abs_err: 0.0,
                worst_index: 0,
            };
            for (k, (&x, &y)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
                let r = rel_err(x, y);
                if r > out.max_rel_err {
                    out.max_rel_err = r;
                    out.worst_index = k;
                }
                out.max_abs_err = out.max_abs_err.max((x - y).abs());
            }
            Ok(out)
        })
        .collect()
}

/// Smallest distance of any cell nonlinearity argument from zero over the
/// batch. Finite differences are unreliable for relu when this is tiny.
pub fn min_abs_preactivation(net: &Network, batch: &SequenceBatch) -> Result<f64> {
    let mut d = f64::INFINITY;
    for tokens in batch.tokens() {
        let trace = net.trace(tokens)?;
        for (cell, caches) in net.cells().iter().zip(&trace.caches) {
            for c in caches {
                d = d.min(c.min_abs_preactivation(cell.variant()));
            }
        }
    }
    Ok(d)
}
