//! Single-threaded forward+backward timing against the MAC cost model.

use std::time::Instant;

use anyhow::{bail, Result};
use slimrnn_core::cells::{step_mac_count, CellVariant};
use slimrnn_core::data::SequenceBatch;
use slimrnn_core::numerics::{Activation, RngState};
use slimrnn_core::training::{bptt_gradients, InputSpec, LossKind, Network, NetworkSpec};

const BENCH_VOCAB: usize = 50;

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub variants: Vec<CellVariant>,
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub batch: usize,
    pub reps: usize,
    /// Sequences per epoch for the per-epoch extrapolation.
    pub epoch_samples: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            variants: vec![CellVariant::Lstm, CellVariant::Lstm6, CellVariant::LstmC6],
            m: 32,
            n: 100,
            t: 500,
            batch: 1,
            reps: 5,
            epoch_samples: 25_000,
            activation: Activation::Sigmoid,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub variant: CellVariant,
    /// Seconds per timestep per sequence, forward plus backward.
    pub median_step_secs: f64,
    pub per_epoch_secs: f64,
    pub step_macs: usize,
    /// Relative to the first variant in the spec.
    pub measured_speedup: f64,
    pub mac_speedup: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[k]
    } else {
        0.5 * (xs[k - 1] + xs[k])
    }
}

/// Reps are interleaved across variants so drift in machine load hits
/// every variant alike; one untimed warm-up pass precedes them.
pub fn run(spec: &BenchSpec) -> Result<Vec<BenchResult>> {
    if spec.reps < 3 {
        bail!("bench needs reps >= 3, got {}", spec.reps);
    }
    if spec.variants.is_empty() || spec.m == 0 || spec.n == 0 || spec.t == 0 || spec.batch == 0 {
        bail!("bench needs at least one variant and m, n, T, batch >= 1");
    }
    let mut rng = RngState::new(spec.seed);
    let tokens: Vec<Vec<usize>> = (0..spec.batch)
        .map(|_| (0..spec.t).map(|_| 2 + rng.below(BENCH_VOCAB - 2)).collect())
        .collect();
    let labels = (0..spec.batch).map(|i| i % 2).collect();
    let batch = SequenceBatch::new(tokens, labels)?;
    let nets = spec
        .variants
        .iter()
        .map(|&variant| {
            let net_spec = NetworkSpec {
                variant,
                activation: spec.activation,
                forget_const: slimrnn_core::cells::DEFAULT_FORGET,
                input: InputSpec::Embedding {
                    vocab: BENCH_VOCAB,
                    dim: spec.m,
                },
                hidden: spec.n,
                outputs: 1,
                bidirectional: false,
            };
            Network::init(&net_spec, &mut RngState::new(spec.seed))
        })
        .collect::<slimrnn_core::Result<Vec<_>>>()?;

    for net in &nets {
        bptt_gradients(net, &batch, LossKind::BinaryCrossEntropy)?;
    }
    let mut times = vec![Vec::with_capacity(spec.reps); nets.len()];
    for _ in 0..spec.reps {
        for (net, slot) in nets.iter().zip(&mut times) {
            let start = Instant::now();
            let (loss, _) = bptt_gradients(net, &batch, LossKind::BinaryCrossEntropy)?;
            slot.push(start.elapsed().as_secs_f64());
            std::hint::black_box(loss);
        }
    }

    let steps = (spec.batch * spec.t) as f64;
    let per_step: Vec<f64> = times.into_iter().map(|t| median(t) / steps).collect();
    let base_macs = step_mac_count(spec.variants[0], spec.m, spec.n);
    Ok(spec
        .variants
        .iter()
        .zip(&per_step)
        .map(|(&variant, &s)| {
            let macs = step_mac_count(variant, spec.m, spec.n);
            BenchResult {
                variant,
                median_step_secs: s,
                per_epoch_secs: s * (spec.t * spec.epoch_samples) as f64,
                step_macs: macs,
                measured_speedup: per_step[0] / s,
                mac_speedup: base_macs as f64 / macs as f64,
            }
        })
        .collect())
}

pub fn format_results(spec: &BenchSpec, results: &[BenchResult]) -> String {
    let mut s = format!(
        "m={} n={} T={} batch={} reps={} (median, single thread, forward+backward)\n",
        spec.m, spec.n, spec.t, spec.batch, spec.reps
    );
    s.push_str(&format!(
        "{:<8} {:>12} {:>14} {:>10} {:>10} {:>10}\n",
        "variant", "us/step", "s/epoch", "step_macs", "speedup", "mac_ratio"
    ));
    for r in results {
        s.push_str(&format!(
            "{:<8} {:>12.3} {:>14.1} {:>10} {:>10.2} {:>10.2}\n",
            r.variant,
            r.median_step_secs * 1e6,
            r.per_epoch_secs,
            r.step_macs,
            r.measured_speedup,
            r.mac_speedup
        ));
    }
    s.push_str(&format!("s/epoch extrapolates to {} sequences of length T\n", spec.epoch_samples));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_bench_reports_every_variant() {
        let spec = BenchSpec {
            m: 4,
            n: 6,
            t: 10,
            reps: 3,
            ..BenchSpec::default()
        };
        let r = run(&spec).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].mac_speedup, 1.0);
        assert_eq!(r[1].mac_speedup, 4.0);
        assert!(r.iter().all(|x| x.median_step_secs > 0.0));
        assert!(format_results(&spec, &r).contains("lstm_c6"));
    }

    #[test]
    fn too_few_reps() {
        let spec = BenchSpec { reps: 2, ..BenchSpec::default() };
        assert!(run(&spec).is_err());
    }
}
