use super::{CellKernel, CellParams, CellVariant, StepCache, TensorRole, TensorSpec};
use crate::error::{Error, Result};
use crate::numerics::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Matrix};

const W_I: usize = 0;
const W_F: usize = 1;
const W_O: usize = 2;
const W_C: usize = 3;
const U_I: usize = 4;
const U_F: usize = 5;
const U_O: usize = 6;
const U_C: usize = 7;
const B_I: usize = 8;
const B_F: usize = 9;
const B_O: usize = 10;
const B_C: usize = 11;

static LAYOUT: [TensorSpec; 12] = [
    TensorSpec::new("w_i", TensorRole::Input),
    TensorSpec::new("w_f", TensorRole::Input),
    TensorSpec::new("w_o", TensorRole::Input),
    TensorSpec::new("w_c", TensorRole::Input),
    TensorSpec::new("u_i", TensorRole::Recurrent),
    TensorSpec::new("u_f", TensorRole::Recurrent),
    TensorSpec::new("u_o", TensorRole::Recurrent),
    TensorSpec::new("u_c", TensorRole::Recurrent),
    TensorSpec::new("b_i", TensorRole::Bias),
    TensorSpec::new("b_f", TensorRole::Bias),
    TensorSpec::new("b_o", TensorRole::Bias),
    TensorSpec::new("b_c", TensorRole::Bias),
];

/// Constants that replace computed gates. A pinned gate skips its sigmoid
/// entirely; its weights are unused.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GatePins {
    pub input: Option<f64>,
    pub forget: Option<f64>,
    pub output: Option<f64>,
}

impl GatePins {
    /// The pins that turn a standard LSTM into LSTM_6.
    pub fn slim(forget: f64) -> Self {
        GatePins {
            input: Some(1.0),
            forget: Some(forget),
            output: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.forget {
            if !(f > -1.0 && f <= 1.0) {
                return Err(Error::invalid(format!("forget pin must lie in (-1, 1], got {f}")));
            }
        }
        for (name, pin) in [("input", self.input), ("output", self.output)] {
            if let Some(v) = pin {
                if v != 1.0 {
                    return Err(Error::invalid(format!("{name} pin must be exactly 1.0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Standard LSTM with sigmoid gates and a configurable cell nonlinearity.
pub struct Lstm;

fn gate(p: &CellParams, w: usize, u: usize, b: usize, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let t = p.tensors();
    let mut a = t[b].as_slice().to_vec();
    matvec_acc(&t[w], x, &mut a);
    matvec_acc(&t[u], h_prev, &mut a);
    a
}

impl Lstm {
    pub(crate) fn forward_pinned(p: &CellParams, pins: GatePins, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let n = p.hidden_dim();
        let act = p.activation();
        let gate_or_pin = |pin: Option<f64>, w, u, b| match pin {
            Some(v) => vec![v; n],
            None => gate(p, w, u, b, x, h_prev).into_iter().map(sigmoid).collect(),
        };
        let i = gate_or_pin(pins.input, W_I, U_I, B_I);
        let f = gate_or_pin(pins.forget, W_F, U_F, B_F);
        let o = gate_or_pin(pins.output, W_O, U_O, B_O);
        let pre = gate(p, W_C, U_C, B_C, x, h_prev);
        let c_tilde: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
        let c: Vec<f64> = (0..n).map(|k| f[k] * c_prev[k] + i[k] * c_tilde[k]).collect();
        let c_act: Vec<f64> = c.iter().map(|&v| act.apply(v)).collect();
        let h = (0..n).map(|k| o[k] * c_act[k]).collect();
        StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            pre,
            c_tilde,
            c,
            c_act,
            h,
        }
    }
}

impl CellKernel for Lstm {
    fn variant(&self) -> CellVariant {
        CellVariant::Lstm
    }

    fn layout(&self) -> &'static [TensorSpec] {
        &LAYOUT
    }

    fn param_count(&self, m: usize, n: usize) -> usize {
        4 * n * (m + n + 1)
    }

    fn step_macs(&self, m: usize, n: usize) -> usize {
        4 * n * (m + n)
    }

    fn forward(&self, p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        Self::forward_pinned(p, GatePins::default(), x, h_prev, c_prev)
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
        let n = p.hidden_dim();
        let act = p.activation();
        let StepCache { i, f, o, c_tilde, c_prev, c_act, .. } = cache;

        let mut da_i = vec![0.0; n];
        let mut da_f = vec![0.0; n];
        let mut da_o = vec![0.0; n];
        let mut da_c = vec![0.0; n];
        for k in 0..n {
            let d_o = dh[k] * c_act[k];
            let d_c = dc[k] + dh[k] * o[k] * act.derivative_from_output(c_act[k]);
            da_i[k] = d_c * c_tilde[k] * i[k] * (1.0 - i[k]);
            da_f[k] = d_c * c_prev[k] * f[k] * (1.0 - f[k]);
            da_o[k] = d_o * o[k] * (1.0 - o[k]);
            da_c[k] = d_c * i[k] * act.derivative_from_output(c_tilde[k]);
            dc_prev[k] = d_c * f[k];
        }

        let t = p.tensors();
        dx.fill(0.0);
        dh_prev.fill(0.0);
        for (da, w, u, b) in [
            (&da_i, W_I, U_I, B_I),
            (&da_f, W_F, U_F, B_F),
            (&da_o, W_O, U_O, B_O),
            (&da_c, W_C, U_C, B_C),
        ] {
            outer_acc(&mut grads[w], da, &cache.x);
            outer_acc(&mut grads[u], da, &cache.h_prev);
            for (g, d) in grads[b].as_mut_slice().iter_mut().zip(da) {
                *g += d;
            }
            matvec_t_acc(&t[w], da, dx);
            matvec_t_acc(&t[u], da, dh_prev);
        }
    }
}
