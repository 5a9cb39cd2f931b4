//! BPTT against the finite-difference oracle on small random problems.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use slimrnn_core::cells::CellVariant;
use slimrnn_core::data::SequenceBatch;
use slimrnn_core::numerics::{Activation, RngState};
use slimrnn_core::training::{
    bptt_gradients, compare_gradients, finite_difference_oracle, min_abs_preactivation, GradientSet, InputSpec,
    LossKind, Network, NetworkSpec,
};

pub const MAX_DIM: usize = 8;
pub const MAX_T: usize = 5;
pub const MAX_BATCH: usize = 3;
pub const TOLERANCE: f64 = 1e-6;
pub const FD_EPS: f64 = 1e-6;
/// Relu cases with any pre-activation closer than this to 0 are skipped.
pub const KINK_MARGIN: f64 = 1e-4;
/// Relu draws at most this many candidates per requested case.
const KINK_ATTEMPTS: usize = 40;

#[derive(Clone, Debug)]
pub struct GradcheckSpec {
    pub variants: Vec<CellVariant>,
    pub activations: Vec<Activation>,
    /// Upper bounds; each case draws `m`, `n`, `T` uniformly in `1..=max`.
    pub max_m: usize,
    pub max_n: usize,
    pub max_t: usize,
    pub max_batch: usize,
    pub seeds: usize,
    pub base_seed: u64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec {
            variants: CellVariant::ALL.to_vec(),
            activations: vec![Activation::Sigmoid, Activation::Tanh],
            max_m: 6,
            max_n: 6,
            max_t: MAX_T,
            max_batch: MAX_BATCH,
            seeds: 10,
            base_seed: 0,
        }
    }
}

impl GradcheckSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_m == 0 || self.max_n == 0 || self.max_t == 0 || self.max_batch == 0 {
            bail!("gradcheck dimensions must be >= 1");
        }
        if self.max_m > MAX_DIM || self.max_n > MAX_DIM || self.max_t > MAX_T || self.max_batch > MAX_BATCH {
            bail!("gradcheck is capped at m, n <= {MAX_DIM}, T <= {MAX_T}, batch <= {MAX_BATCH}");
        }
        if self.seeds == 0 || self.variants.is_empty() || self.activations.is_empty() {
            bail!("gradcheck needs at least one seed, variant and activation");
        }
        Ok(())
    }
}

pub struct Case {
    pub net: Network,
    pub batch: SequenceBatch,
    pub loss: LossKind,
}

/// Random network and batch within the caps. The loss kind, class count,
/// forget constant and bidirectionality are drawn too.
pub fn random_case(spec: &GradcheckSpec, variant: CellVariant, act: Activation, seed: u64) -> Result<Case> {
    let mut rng = RngState::new(seed);
    let vocab = 3 + rng.below(4);
    let m = 1 + rng.below(spec.max_m);
    let n = 1 + rng.below(spec.max_n);
    let t = 1 + rng.below(spec.max_t);
    let b = 1 + rng.below(spec.max_batch);
    let loss = if rng.bernoulli(0.5) { LossKind::BinaryCrossEntropy } else { LossKind::CategoricalCrossEntropy };
    let classes = match loss {
        LossKind::BinaryCrossEntropy => 2,
        LossKind::CategoricalCrossEntropy => 2 + rng.below(2),
    };
    let net_spec = NetworkSpec {
        variant,
        activation: act,
        forget_const: rng.symmetric(0.95),
        input: InputSpec::Embedding { vocab, dim: m },
        hidden: n,
        outputs: loss.output_dim(classes),
        bidirectional: rng.bernoulli(0.5),
    };
    let net = Network::init(&net_spec, &mut rng)?;
    let tokens = (0..b).map(|_| (0..t).map(|_| rng.below(vocab)).collect()).collect();
    let labels = (0..b).map(|_| rng.below(classes)).collect();
    Ok(Case {
        net,
        batch: SequenceBatch::new(tokens, labels)?,
        loss,
    })
}

/// Outcome for one variant and activation.
#[derive(Clone, Debug)]
pub struct ComboReport {
    pub variant: CellVariant,
    pub activation: Activation,
    pub cases: usize,
    pub skipped: usize,
    /// Worst relative error per parameter group over all cases.
    pub groups: BTreeMap<String, f64>,
    pub passed: bool,
}

impl ComboReport {
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.groups
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.as_str(), *v))
    }

    /// Groups whose error exceeds the tolerance.
    pub fn failing_groups(&self) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|(_, e)| e.is_nan() || **e > TOLERANCE)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Mutates the BPTT gradient before comparison; used to prove a broken
/// gradient is caught.
pub type FaultHook<'a> = &'a dyn Fn(&mut GradientSet);

pub fn run(spec: &GradcheckSpec, fault: Option<FaultHook<'_>>) -> Result<Vec<ComboReport>> {
    spec.validate()?;
    let mut reports = Vec::new();
    for &variant in &spec.variants {
        for &act in &spec.activations {
            reports.push(check_combo(spec, variant, act, fault)?);
        }
    }
    Ok(reports)
}

fn check_combo(spec: &GradcheckSpec, variant: CellVariant, act: Activation, fault: Option<FaultHook<'_>>) -> Result<ComboReport> {
    let mut groups: BTreeMap<String, f64> = BTreeMap::new();
    let (mut cases, mut skipped) = (0, 0);
    let attempts = if act == Activation::Relu { spec.seeds * KINK_ATTEMPTS } else { spec.seeds };
    for i in 0..attempts as u64 {
        if cases == spec.seeds {
            break;
        }
        let case = random_case(spec, variant, act, spec.base_seed.wrapping_add(i))?;
        if act == Activation::Relu && min_abs_preactivation(&case.net, &case.batch)? < KINK_MARGIN {
            skipped += 1;
            continue;
        }
        let (_, mut grads) = bptt_gradients(&case.net, &case.batch, case.loss)?;
        if let Some(hook) = fault {
            hook(&mut grads);
        }
        let fd = finite_difference_oracle(&case.net, &case.batch, case.loss, FD_EPS)?;
        for e in compare_gradients(&grads, &fd)? {
            let slot = groups.entry(e.name).or_insert(0.0);
            // NaN must not hide behind max()
            if e.max_rel_err.is_nan() || e.max_rel_err > *slot {
                *slot = e.max_rel_err;
            }
        }
        cases += 1;
    }
    let passed = cases == spec.seeds && groups.values().all(|e| *e <= TOLERANCE);
    Ok(ComboReport {
        variant,
        activation: act,
        cases,
        skipped,
        groups,
        passed,
    })
}

pub fn format_report(reports: &[ComboReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let (group, worst) = r.worst().unwrap_or(("-", f64::NAN));
        writeln!(
            s,
            "{} {:<8} {:<7} cases={} skipped={} worst={:.3e} ({group})",
            if r.passed { "PASS" } else { "FAIL" },
            r.variant,
            r.activation,
            r.cases,
            r.skipped,
            worst
        )
        .expect("String");
        for (name, e) in &r.groups {
            let mark = if *e <= TOLERANCE { "" } else { "  <-- exceeds tolerance" };
            writeln!(s, "    {name:<12} {e:.3e}{mark}").expect("String");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GradcheckSpec {
        GradcheckSpec {
            seeds: 3,
            max_m: 3,
            max_n: 3,
            max_t: 3,
            ..GradcheckSpec::default()
        }
    }

    #[test]
    fn all_variants_pass() {
        let reports = run(&small(), None).unwrap();
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(r.passed, "{}", format_report(std::slice::from_ref(r)));
            assert_eq!(r.cases, 3);
        }
    }

    #[test]
    fn corrupted_gradient_is_caught_and_named() {
        let spec = GradcheckSpec {
            variants: vec![CellVariant::Lstm6],
            activations: vec![Activation::Tanh],
            ..small()
        };
        let hook = |g: &mut GradientSet| {
            let i = g.names().position(|n| n == "out.b").unwrap();
            g.matrices_mut()[i].as_mut_slice()[0] += 1e-3;
        };
        let reports = run(&spec, Some(&hook)).unwrap();
        assert!(!reports[0].passed);
        assert_eq!(reports[0].failing_groups(), ["out.b"]);
        assert!(format_report(&reports).contains("out.b"));
    }

    #[test]
    fn relu_uses_kink_exclusion() {
        let spec = GradcheckSpec {
            variants: vec![CellVariant::Srnn, CellVariant::LstmC6],
            activations: vec![Activation::Relu],
            ..small()
        };
        for r in run(&spec, None).unwrap() {
            assert!(r.passed, "{}", format_report(std::slice::from_ref(&r)));
            assert!(r.skipped > 0);
        }
    }

    #[test]
    fn caps_are_enforced() {
        assert!(GradcheckSpec { max_m: 9, ..small() }.validate().is_err());
        assert!(GradcheckSpec { max_n: 9, ..small() }.validate().is_err());
        assert!(GradcheckSpec { max_t: 6, ..small() }.validate().is_err());
        assert!(GradcheckSpec { seeds: 0, ..small() }.validate().is_err());
        assert!(GradcheckSpec { max_m: 8, max_n: 8, ..small() }.validate().is_ok());
    }
}
