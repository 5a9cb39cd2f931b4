use super::{CellKernel, CellParams, CellVariant, StepCache, TensorRole, TensorSpec};
use crate::numerics::{matvec_acc, matvec_t_acc, outer_acc, Matrix};

const W_HX: usize = 0;
const W_HH: usize = 1;
const B_H: usize = 2;

static LAYOUT: [TensorSpec; 3] = [
    TensorSpec::new("w_hx", TensorRole::Input),
    TensorSpec::new("w_hh", TensorRole::Recurrent),
    TensorSpec::new("b_h", TensorRole::Bias),
];

/// Simple RNN, `h = σ(W_hx x + W_hh h' + b_h)`. Carries no cell state; the
/// `c` slots stay zero.
pub struct Srnn;

impl CellKernel for Srnn {
    fn variant(&self) -> CellVariant {
        CellVariant::Srnn
    }

    fn layout(&self) -> &'static [TensorSpec] {
        &LAYOUT
    }

    fn param_count(&self, m: usize, n: usize) -> usize {
        n * (m + n + 1)
    }

    fn step_macs(&self, m: usize, n: usize) -> usize {
        n * (m + n)
    }

    fn forward(&self, p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let t = p.tensors();
        let act = p.activation();
        let mut pre = t[B_H].as_slice().to_vec();
        matvec_acc(&t[W_HX], x, &mut pre);
        matvec_acc(&t[W_HH], h_prev, &mut pre);
        let h: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
        StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            pre,
            c: vec![0.0; h.len()],
            c_act: h.clone(),
            h,
            ..StepCache::default()
        }
    }

    fn backward(
        &self,
        p: &CellParams,
        cache: &StepCache,
        dh: &[f64],
        _dc: &[f64],
        grads: &mut [Matrix],
        dx: &mut [f64],
        dh_prev: &mut [f64],
        dc_prev: &mut [f64],
    ) {
        let act = p.activation();
        let da: Vec<f64> = dh
            .iter()
            .zip(&cache.h)
            .map(|(d, h)| d * act.derivative_from_output(*h))
            .collect();
        outer_acc(&mut grads[W_HX], &da, &cache.x);
        outer_acc(&mut grads[W_HH], &da, &cache.h_prev);
        for (g, d) in grads[B_H].as_mut_slice().iter_mut().zip(&da) {
            *g += d;
        }
        let t = p.tensors();
        dx.fill(0.0);
        dh_prev.fill(0.0);
        matvec_t_acc(&t[W_HX], &da, dx);
        matvec_t_acc(&t[W_HH], &da, dh_prev);
        dc_prev.fill(0.0);
    }
}
