use super::loss::{loss_eval, LossKind};
use super::network::Network;
use crate::cells::{CellParams, StepCache};
use crate::data::{EmbeddingTable, SequenceBatch};
use crate::error::{Error, Result};
use crate::numerics::{matvec_t_acc, outer_acc, Matrix};

/// Named gradient tensors, in [`Network::param_groups`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    names: Vec<String>,
    mats: Vec<Matrix>,
}

impl GradientSet {
    /// All-zero gradients shaped like the network's adaptive tensors.
    pub fn zeros_like(net: &Network) -> Self {
        let (names, mats) = net
            .param_groups()
            .into_iter()
            .map(|(name, m)| (name, Matrix::zeros(m.rows(), m.cols())))
            .unzip();
        GradientSet { names, mats }
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.mats[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names().zip(&self.mats)
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.mats
    }

    pub fn matrices_mut(&mut self) -> &mut [Matrix] {
        &mut self.mats
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.mats {
            m.scale(s);
        }
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.mats.iter().map(Matrix::len).sum()
    }

    pub fn check_matches(&self, net: &Network) -> Result<()> {
        let groups = net.param_groups();
        if groups.len() != self.mats.len() {
            return Err(Error::shape("GradientSet", groups.len(), self.mats.len()));
        }
        for ((name, p), (gname, g)) in groups.iter().zip(self.iter()) {
            if name != gname || p.shape() != g.shape() {
                return Err(Error::shape(
                    "GradientSet",
                    format!("{name} {}", p.shape_str()),
                    format!("{gname} {}", g.shape_str()),
                ));
            }
        }
        Ok(())
    }
}

/// Reverse pass through one direction. Returns `dL/dx_t` in that
/// direction's own time order.
fn backprop_direction(p: &CellParams, caches: &[StepCache], dh_final: &[f64], grads: &mut [Matrix]) -> Vec<Vec<f64>> {
    let kernel = p.kernel();
    let n = p.hidden_dim();
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; n];
    let mut dh_prev = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    let mut dxs = vec![Vec::new(); caches.len()];
    for (t, cache) in caches.iter().enumerate().rev() {
        let mut dx = vec![0.0; p.input_dim()];
        kernel.backward(p, cache, &dh, &dc, grads, &mut dx, &mut dh_prev, &mut dc_prev);
        dxs[t] = dx;
        std::mem::swap(&mut dh, &mut dh_prev);
        std::mem::swap(&mut dc, &mut dc_prev);
    }
    dxs
}

/// Mean batch loss, with no gradient.
pub fn batch_loss(net: &Network, batch: &SequenceBatch, loss: LossKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for (tokens, &label) in batch.tokens().iter().zip(batch.labels()) {
        let raw = net.forward(tokens)?;
        let y = loss.target(label, net.output_dim())?;
        total += loss_eval(loss, &raw, &y)?.0;
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of the mean batch loss by backpropagation through time.
pub fn bptt_gradients(net: &Network, batch: &SequenceBatch, loss: LossKind) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = GradientSet::zeros_like(net);
    let n = net.hidden_dim();
    let emb_slots = usize::from(net.embedding().is_some_and(EmbeddingTable::trainable));
    let per_cell = net.cells()[0].tensors().len();
    let out_w = grads.len() - 2;
    let mut total = 0.0;

    for (tokens, &label) in batch.tokens().iter().zip(batch.labels()) {
        let trace = net.trace(tokens)?;
        let y = loss.target(label, net.output_dim())?;
        let (l, dy) = loss_eval(loss, &trace.raw, &y)?;
        total += l;

        let mats = grads.matrices_mut();
        outer_acc(&mut mats[out_w], &dy, &trace.features);
        for (b, d) in mats[out_w + 1].as_mut_slice().iter_mut().zip(&dy) {
            *b += d;
        }
        let mut dfeat = vec![0.0; trace.features.len()];
        matvec_t_acc(&net.output().w, &dy, &mut dfeat);

        let mut dx_sum = vec![vec![0.0; net.input_dim()]; tokens.len()];
        for (d, cell) in net.cells().iter().enumerate() {
            let lo = emb_slots + d * per_cell;
            let dxs = backprop_direction(cell, &trace.caches[d], &dfeat[d * n..(d + 1) * n], &mut mats[lo..lo + per_cell]);
            // the second direction ran over the reversed sequence
            let len = dxs.len();
            for (t, dx) in dxs.iter().enumerate() {
                let pos = if d == 0 { t } else { len - 1 - t };
                for (a, b) in dx_sum[pos].iter_mut().zip(dx) {
                    *a += b;
                }
            }
        }
        if emb_slots == 1 {
            EmbeddingTable::scatter_grad(&mut mats[0], tokens, &dx_sum);
        }
    }

    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellVariant;
    use crate::numerics::{Activation, RngState};
    use crate::training::network::{InputSpec, NetworkSpec};

    fn net(variant: CellVariant, seed: u64) -> Network {
        let spec = NetworkSpec {
            variant,
            activation: Activation::Tanh,
            forget_const: 0.59,
            input: InputSpec::Embedding { vocab: 6, dim: 3 },
            hidden: 4,
            outputs: 1,
            bidirectional: false,
        };
        Network::init(&spec, &mut RngState::new(seed)).unwrap()
    }

    #[test]
    fn loss_matches_forward_only_path() {
        let n = net(CellVariant::Lstm, 3);
        let b = SequenceBatch::new(vec![vec![1, 2, 3], vec![0, 5, 4]], vec![1, 0]).unwrap();
        let (l, g) = bptt_gradients(&n, &b, LossKind::BinaryCrossEntropy).unwrap();
        assert_eq!(l, batch_loss(&n, &b, LossKind::BinaryCrossEntropy).unwrap());
        g.check_matches(&n).unwrap();
    }

    #[test]
    fn pad_row_receives_no_gradient() {
        let n = net(CellVariant::LstmC6, 4);
        let b = SequenceBatch::new(vec![vec![0, 0, 3]], vec![1]).unwrap();
        let (_, g) = bptt_gradients(&n, &b, LossKind::BinaryCrossEntropy).unwrap();
        let e = g.get("embedding").unwrap();
        assert!(e.row(0).iter().all(|v| *v == 0.0));
        assert!(e.row(3).iter().any(|v| *v != 0.0));
        assert!(e.row(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn recurrent_gradient_vanishes_for_single_step_from_zero_state() {
        for variant in [CellVariant::Lstm6, CellVariant::LstmC6] {
            let n = net(variant, 5);
            let b = SequenceBatch::new(vec![vec![2]], vec![1]).unwrap();
            let (_, g) = bptt_gradients(&n, &b, LossKind::BinaryCrossEntropy).unwrap();
            assert!(g.get("cell.u_c").unwrap().as_slice().iter().all(|v| *v == 0.0));
            assert!(g.get("cell.w_c").unwrap().as_slice().iter().any(|v| *v != 0.0));
        }
    }

    #[test]
    fn symmetric_batch_gives_zero_output_bias_gradient() {
        let mut n = net(CellVariant::Lstm, 6);
        n.output_mut().w.fill(0.0);
        n.output_mut().b.fill(0.0);
        let b = SequenceBatch::new(vec![vec![1, 2], vec![1, 2]], vec![1, 0]).unwrap();
        let (_, g) = bptt_gradients(&n, &b, LossKind::BinaryCrossEntropy).unwrap();
        assert_eq!(g.get("out.b").unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let n = net(CellVariant::Srnn, 1);
        let b = SequenceBatch::new(vec![], vec![]).unwrap();
        assert!(bptt_gradients(&n, &b, LossKind::BinaryCrossEntropy).is_err());
    }
}
