//! Constant-gate variants: `i = o = 1`, `f` a fixed hyper-parameter with
//! `|f| < 1`. Only the input block stays adaptive, so the reverse pass
//! through `c_t` is a plain scaling by `f`.

use super::{CellKernel, CellParams, CellVariant, StepCache, TensorRole, TensorSpec};
use crate::numerics::{matvec_acc, matvec_t_acc, outer_acc, Matrix};

const W_C: usize = 0;
const U_C: usize = 1;
const B_C: usize = 2;

static LAYOUT_6: [TensorSpec; 3] = [
    TensorSpec::new("w_c", TensorRole::Input),
    TensorSpec::new("u_c", TensorRole::Recurrent),
    TensorSpec::new("b_c", TensorRole::Bias),
];

static LAYOUT_C6: [TensorSpec; 3] = [
    TensorSpec::new("w_c", TensorRole::Input),
    TensorSpec::new("u_c", TensorRole::Diagonal),
    TensorSpec::new("b_c", TensorRole::Bias),
];

/// `c = f c' + σ(W_c x + U_c h' + b_c)`, `h = σ(c)`.
pub struct Lstm6;

/// `c = f c' + σ(W_c x + u_c ⊙ h' + b_c)`, `h = σ(c)`.
pub struct LstmC6;

fn finish(p: &CellParams, pre: Vec<f64>, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let n = p.hidden_dim();
    let act = p.activation();
    let f = p.forget_const();
    let c_tilde: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
    let c: Vec<f64> = (0..n).map(|k| f * c_prev[k] + c_tilde[k]).collect();
    let h: Vec<f64> = c.iter().map(|&v| act.apply(v)).collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i: vec![1.0; n],
        f: vec![f; n],
        o: vec![1.0; n],
        pre,
        c_tilde,
        c,
        c_act: h.clone(),
        h,
    }
}

/// Gradient at the candidate pre-activation; fills `dc_prev`.
fn candidate_grad(p: &CellParams, cache: &StepCache, dh: &[f64], dc: &[f64], dc_prev: &mut [f64]) -> Vec<f64> {
    let act = p.activation();
    let f = p.forget_const();
    (0..p.hidden_dim())
        .map(|k| {
            let d_c = dc[k] + dh[k] * act.derivative_from_output(cache.h[k]);
            dc_prev[k] = f * d_c;
            d_c * act.derivative_from_output(cache.c_tilde[k])
        })
        .collect()
}

fn input_block_grads(p: &CellParams, cache: &StepCache, da: &[f64], grads: &mut [Matrix], dx: &mut [f64]) {
    outer_acc(&mut grads[W_C], da, &cache.x);
    for (g, d) in grads[B_C].as_mut_slice().iter_mut().zip(da) {
        *g += d;
    }
    dx.fill(0.0);
    matvec_t_acc(&p.tensors()[W_C], da, dx);
}

impl CellKernel for Lstm6 {
    fn variant(&self) -> CellVariant {
        CellVariant::Lstm6
    }

    fn layout(&self) -> &'static [TensorSpec] {
        &LAYOUT_6
    }

    fn param_count(&self, m: usize, n: usize) -> usize {
        n * (m + n + 1)
    }

    fn step_macs(&self, m: usize, n: usize) -> usize {
        n * (m + n)
    }

    fn forward(&self, p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let t = p.tensors();
        let mut pre = t[B_C].as_slice().to_vec();
        matvec_acc(&t[W_C], x, &mut pre);
        matvec_acc(&t[U_C], h_prev, &mut pre);
        finish(p, pre, x, h_prev, c_prev)
    }

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
    ) {
        let da = candidate_grad(p, cache, dh, dc, dc_prev);
        input_block_grads(p, cache, &da, grads, dx);
        outer_acc(&mut grads[U_C], &da, &cache.h_prev);
        dh_prev.fill(0.0);
        matvec_t_acc(&p.tensors()[U_C], &da, dh_prev);
    }
}

impl CellKernel for LstmC6 {
    fn variant(&self) -> CellVariant {
        CellVariant::LstmC6
    }

    fn layout(&self) -> &'static [TensorSpec] {
        &LAYOUT_C6
    }

    fn param_count(&self, m: usize, n: usize) -> usize {
        n * (m + 2)
    }

    fn step_macs(&self, m: usize, n: usize) -> usize {
        n * m + n
    }

    fn forward(&self, p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let t = p.tensors();
        let mut pre = t[B_C].as_slice().to_vec();
        matvec_acc(&t[W_C], x, &mut pre);
        for ((a, u), h) in pre.iter_mut().zip(t[U_C].as_slice()).zip(h_prev) {
            *a += u * h;
        }
        finish(p, pre, x, h_prev, c_prev)
    }

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
    ) {
        let da = candidate_grad(p, cache, dh, dc, dc_prev);
        input_block_grads(p, cache, &da, grads, dx);
        let u = p.tensors()[U_C].as_slice();
        for (k, g) in grads[U_C].as_mut_slice().iter_mut().enumerate() {
            *g += da[k] * cache.h_prev[k];
            dh_prev[k] = u[k] * da[k];
        }
    }
}
