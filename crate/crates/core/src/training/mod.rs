//! Exact BPTT, losses, optimizers and the epoch loop.

mod bptt;
mod loss;
mod network;
mod optim;
mod oracle;


use std::time::Instant;

pub use bptt::{batch_loss, bptt_gradients, GradientSet};
pub use loss::{loss_eval, LossKind, PROB_CLAMP};
pub use network::{InputSpec, Network, NetworkSpec, SequenceTrace};
pub use optim::{
    optimizer_step, registry as optimizer_registry, Adam, OptimizerKind, OptimizerState, RmsProp, Sgd, UpdateRule,
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS, RMSPROP_EPS, RMSPROP_RHO,
};
pub use oracle::{compare_gradients, finite_difference_oracle, min_abs_preactivation, rel_err, GroupError, REL_ERR_FLOOR};

use crate::data::SequenceBatch;
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// One row of the per-epoch metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// Wall time of the update loop only; evaluation is excluded.
    pub seconds: f64,
}

/// Mean loss and accuracy over a whole split.
pub fn evaluate(net: &Network, data: &SequenceBatch, loss: LossKind) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for (tokens, &label) in data.tokens().iter().zip(data.labels()) {
        let raw = net.forward(tokens)?;
        let y = loss.target(label, net.output_dim())?;
        total += loss_eval(loss, &raw, &y)?.0;
        correct += usize::from(loss.predict(&raw) == label);
    }
    let n = data.len() as f64;
    Ok((total / n, correct as f64 / n))
}

/// Hyper-parameters of the epoch loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochConfig {
    pub batch_size: usize,
    pub loss: LossKind,
    /// Epoch `e` shuffles with seed `seed + e`.
    pub seed: u64,
}

/// Shuffle, run minibatch updates over `train`, then evaluate both splits.
/// The last minibatch may be short.
pub fn train_epoch(
    net: &mut Network,
    train: &SequenceBatch,
    test: &SequenceBatch,
    opt: &mut OptimizerState,
    cfg: &EpochConfig,
    epoch: usize,
) -> Result<MetricsRecord> {
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    if train.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    RngState::new(cfg.seed.wrapping_add(epoch as u64)).shuffle(&mut order);

    let start = Instant::now();
    for idx in order.chunks(cfg.batch_size) {
        let batch = train.select(idx);
        let (_, grads) = bptt_gradients(net, &batch, cfg.loss)?;
        optimizer_step(opt, net, &grads)?;
    }
    let seconds = start.elapsed().as_secs_f64();

    let (train_loss, train_acc) = evaluate(net, train, cfg.loss)?;
    let (test_loss, test_acc) = evaluate(net, test, cfg.loss)?;
    Ok(MetricsRecord {
        epoch,
        train_loss,
        train_acc,
        test_loss,
        test_acc,
        seconds,
    })
}
