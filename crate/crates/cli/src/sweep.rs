//! Grid sweeps over `(variant, n, eta, f)`.
//!
//! Cells are independent runs sharing one data split (drawn from the base
//! seed). Cell `i` in grid order trains with seed `base_seed + i`, so the
//! outcome does not depend on the worker count or scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{bail, Context, Result};
use slimrnn_core::cells::CellVariant;

use crate::config::ExperimentConfig;
use crate::experiment::{load_data, train_in, Dataset};

pub const SUMMARY_HEADER: &str = "variant,hidden,eta,forget,best_test_acc,best_epoch,final_train_acc";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub variants: Vec<CellVariant>,
    pub hiddens: Vec<usize>,
    pub etas: Vec<f64>,
    pub forgets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub variant: CellVariant,
    pub hidden: usize,
    pub eta: f64,
    pub forget: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub best_test_acc: f64,
    pub best_epoch: usize,
    pub final_train_acc: f64,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub dir: PathBuf,
    /// Failures are kept as messages so the rest of the sweep still runs.
    pub outcome: std::result::Result<CellSummary, String>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.hiddens.is_empty() || self.etas.is_empty() || self.forgets.is_empty() {
            bail!("every sweep list needs at least one value");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variants.len() * self.hiddens.len() * self.etas.len() * self.forgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The cross product, variants outermost and forget innermost.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.len());
        for &variant in &self.variants {
            for &hidden in &self.hiddens {
                for &eta in &self.etas {
                    for &forget in &self.forgets {
                        out.push(Cell {
                            index: out.len(),
                            variant,
                            hidden,
                            eta,
                            forget,
                        });
                    }
                }
            }
        }
        out
    }
}

impl Cell {
    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.variant = self.variant;
        cfg.hidden = self.hidden;
        cfg.eta = self.eta;
        cfg.forget = self.forget;
        cfg.seed = base.seed.wrapping_add(self.index as u64);
        cfg.out = base.out.join(self.dir_name());
        cfg
    }

    pub fn dir_name(&self) -> String {
        format!("cell{:03}_{}_n{}_eta{}_f{}", self.index, self.variant, self.hidden, self.eta, self.forget)
    }
}

fn run_cell(base: &ExperimentConfig, data: &Dataset, cell: &Cell) -> CellResult {
    let cfg = cell.config(base);
    let outcome = train_in(&cfg, data, &cfg.out)
        .and_then(|o| {
            let best = o.best().context("run produced no epochs")?;
            Ok(CellSummary {
                best_test_acc: best.test_acc,
                best_epoch: best.epoch,
                final_train_acc: o.records.last().expect("nonempty").train_acc,
            })
        })
        .map_err(|e| format!("{e:#}"));
    if let Err(msg) = &outcome {
        // best effort: the summary row already marks the failure
        let _ = fs::write(cfg.out.join("error.txt"), format!("{msg}\n"));
    }
    CellResult {
        cell: cell.clone(),
        dir: cfg.out,
        outcome,
    }
}

/// Run every cell on at most `workers` threads and write `summary.csv`
/// into `base.out`. Results come back in grid order.
pub fn cmd_sweep(base: &ExperimentConfig, spec: &SweepSpec, workers: usize) -> Result<Vec<CellResult>> {
    spec.validate()?;
    for cell in spec.cells() {
        cell.config(base).validate().with_context(|| format!("sweep cell {}", cell.dir_name()))?;
    }
    fs::create_dir_all(&base.out).with_context(|| format!("creating output directory {}", base.out.display()))?;
    let data = load_data(base)?;
    let cells = spec.cells();
    let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let r = run_cell(base, &data, cell);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let results: Vec<CellResult> = slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();
    write_summary(&base.out.join(SUMMARY_FILE), &results)?;
    Ok(results)
}

/// Failed cells keep their grid coordinates and leave the metric fields
/// empty.
pub fn summary_csv(results: &[CellResult]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in results {
        let c = &r.cell;
        match &r.outcome {
            Ok(m) => writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.variant, c.hidden, c.eta, c.forget, m.best_test_acc, m.best_epoch, m.final_train_acc
            ),
            Err(_) => writeln!(s, "{},{},{},{},,,", c.variant, c.hidden, c.eta, c.forget),
        }
        .expect("writing to a String");
    }
    s
}

pub fn write_summary(path: &Path, results: &[CellResult]) -> Result<()> {
    fs::write(path, summary_csv(results)).with_context(|| format!("writing {}", path.display()))
}

/// Best test accuracy laid out with `variant/n[/f]` rows and one column
/// per eta.
pub fn pivot(results: &[CellResult]) -> String {
    let mut etas: Vec<f64> = Vec::new();
    let mut rows: Vec<(CellVariant, usize, f64)> = Vec::new();
    for r in results {
        if !etas.contains(&r.cell.eta) {
            etas.push(r.cell.eta);
        }
        let key = (r.cell.variant, r.cell.hidden, r.cell.forget);
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    let show_f = rows.iter().any(|k| k.2 != rows[0].2);
    let label = |(v, n, f): (CellVariant, usize, f64)| {
        if show_f {
            format!("{v}/{n}/f={f}")
        } else {
            format!("{v}/{n}")
        }
    };
    let width = rows.iter().map(|&k| label(k).len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:width$}", "");
    for eta in &etas {
        write!(s, " {:>10}", format!("eta={eta}")).expect("String");
    }
    s.push('\n');
    for &key in &rows {
        write!(s, "{:width$}", label(key)).expect("String");
        for &eta in &etas {
            let cell = results
                .iter()
                .find(|r| (r.cell.variant, r.cell.hidden, r.cell.forget) == key && r.cell.eta == eta);
            let text = match cell.map(|r| &r.outcome) {
                Some(Ok(m)) => format!("{:.4}", m.best_test_acc),
                Some(Err(_)) => "failed".to_string(),
                None => "-".to_string(),
            };
            write!(s, " {text:>10}").expect("String");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{strip_seconds, METRICS_FILE};

    fn base(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("embed = 4\nseq-len = 8\nvocab = 12\nsamples = 50\nepochs = 3\nbatch = 8\nseed = 11\n").unwrap();
        cfg.out = out.to_path_buf();
        cfg
    }

    fn spec() -> SweepSpec {
        SweepSpec {
            variants: vec![CellVariant::Lstm, CellVariant::LstmC6],
            hiddens: vec![3, 5],
            etas: vec![1e-3, 2e-2],
            forgets: vec![0.59],
        }
    }

    #[test]
    fn grid_order_and_seeds() {
        let s = spec();
        let cells = s.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(s.len(), 8);
        assert_eq!((cells[1].variant, cells[1].hidden, cells[1].eta), (CellVariant::Lstm, 3, 2e-2));
        assert_eq!(cells[7].config(&base(Path::new("x"))).seed, 18);
        let empty = SweepSpec { etas: vec![], ..spec() };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn concurrent_equals_sequential_and_summary_matches_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let seq = cmd_sweep(&base(&dir.path().join("seq")), &spec(), 1).unwrap();
        let par = cmd_sweep(&base(&dir.path().join("par")), &spec(), 4).unwrap();
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.cell, b.cell);
            assert_eq!(a.outcome, b.outcome);
            let csv = |r: &CellResult| strip_seconds(&fs::read_to_string(r.dir.join(METRICS_FILE)).unwrap());
            assert_eq!(csv(a), csv(b));
        }
        let summary = fs::read_to_string(dir.path().join("seq").join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary, fs::read_to_string(dir.path().join("par").join(SUMMARY_FILE)).unwrap());
        assert_eq!(summary.lines().next(), Some(SUMMARY_HEADER));

        // cross-file: summary best equals the max over the cell's rows
        for (line, r) in summary.lines().skip(1).zip(&seq) {
            let fields: Vec<&str> = line.split(',').collect();
            let csv = fs::read_to_string(r.dir.join(METRICS_FILE)).unwrap();
            let rows: Vec<Vec<f64>> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect();
            let max = rows.iter().map(|row| row[4]).fold(f64::NEG_INFINITY, f64::max);
            let best: f64 = fields[4].parse().unwrap();
            assert_eq!(best, max);
            let epoch: usize = fields[5].parse().unwrap();
            assert_eq!(rows[epoch - 1][4], max);
            assert_eq!(fields[6].parse::<f64>().unwrap(), rows.last().unwrap()[2]);
        }
    }

    #[test]
    fn failed_cell_is_recorded_without_aborting() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep");
        let s = SweepSpec {
            variants: vec![CellVariant::Lstm6],
            hiddens: vec![3],
            etas: vec![1e-2, 2e-2],
            forgets: vec![0.59],
        };
        // block the first cell's directory with a plain file
        fs::create_dir_all(&out).unwrap();
        fs::write(out.join(s.cells()[0].dir_name()), "in the way").unwrap();
        let results = cmd_sweep(&base(&out), &s, 2).unwrap();
        assert!(results[0].outcome.is_err());
        assert!(results[1].outcome.is_ok());
        let summary = fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
        assert!(summary.lines().nth(1).unwrap().ends_with(",,,"));
        assert!(pivot(&results).contains("failed"));
    }

    #[test]
    fn single_cell_sweep_is_a_train_run() {
        let dir = tempfile::tempdir().unwrap();
        let b = base(&dir.path().join("sweep"));
        let s = SweepSpec {
            variants: vec![b.variant],
            hiddens: vec![b.hidden],
            etas: vec![b.eta],
            forgets: vec![b.forget],
        };
        let results = cmd_sweep(&b, &s, 1).unwrap();
        let mut single = b.clone();
        single.out = dir.path().join("train");
        crate::experiment::cmd_train(&single).unwrap();
        let csv = |d: &Path| strip_seconds(&fs::read_to_string(d.join(METRICS_FILE)).unwrap());
        assert_eq!(csv(&results[0].dir), csv(&single.out));
    }

    #[test]
    fn pivot_layout() {
        let results: Vec<CellResult> = spec()
            .cells()
            .into_iter()
            .map(|cell| CellResult {
                outcome: Ok(CellSummary {
                    best_test_acc: cell.index as f64 / 10.0,
                    best_epoch: 1,
                    final_train_acc: 0.0,
                }),
                dir: PathBuf::new(),
                cell,
            })
            .collect();
        let p = pivot(&results);
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].contains("eta=0.001") && lines[0].contains("eta=0.02"));
        assert!(lines[4].starts_with("lstm_c6/5"));
        assert!(lines[4].ends_with("0.7000"));
    }
}
