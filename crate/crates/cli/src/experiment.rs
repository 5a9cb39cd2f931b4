//! Single training runs: data, model, optimizer, epoch loop, metrics CSV
//! and checkpoint.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use slimrnn_core::data::{build_vocab, encode_corpus, load_tsv_corpus, synth_generate, SequenceBatch};
use slimrnn_core::numerics::RngState;
use slimrnn_core::training::{
    train_epoch, EpochConfig, InputSpec, LossKind, MetricsRecord, Network, NetworkSpec, OptimizerState,
};

use crate::checkpoint;
use crate::config::{DataSource, ExperimentConfig};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,seconds";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.txt";

/// Offset separating the parameter-init stream from the data stream.
const INIT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Encoded train/test splits plus what the model needs to know about them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: SequenceBatch,
    pub test: SequenceBatch,
    /// Index space of the tokens, including pad and OOV.
    pub vocab_size: usize,
    pub classes: usize,
}

/// Generate or load the data named by `cfg.data`, seeded by `cfg.seed`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let (train, test, vocab_size, classes) = match &cfg.data {
        DataSource::Synth(kind) => {
            let (train, test) = synth_generate(*kind, cfg.samples, cfg.seq_len, cfg.vocab, &mut RngState::new(cfg.seed))?;
            (train, test, cfg.vocab, kind.task().num_classes(cfg.vocab))
        }
        DataSource::Tsv(path) => {
            let corpus = load_tsv_corpus(path)?;
            let docs: Vec<Vec<&str>> = corpus.iter().map(|e| e.tokens.iter().map(String::as_str).collect()).collect();
            let vocab = build_vocab(&docs, cfg.vocab)?;
            let (train, test) = encode_corpus(&corpus, &vocab, cfg.seq_len, cfg.seed)?;
            let classes = corpus.iter().map(|e| e.label + 1).max().unwrap_or(0).max(2);
            (train, test, vocab.len(), classes)
        }
    };
    if cfg.loss == LossKind::BinaryCrossEntropy && classes != 2 {
        bail!("loss bce needs exactly 2 classes, the data has {classes}; use --loss cce");
    }
    if test.is_empty() {
        bail!("test split is empty");
    }
    Ok(Dataset {
        train,
        test,
        vocab_size,
        classes,
    })
}

pub fn network_spec(cfg: &ExperimentConfig, data: &Dataset) -> NetworkSpec {
    NetworkSpec {
        variant: cfg.variant,
        activation: cfg.activation,
        forget_const: cfg.forget,
        input: InputSpec::Embedding {
            vocab: data.vocab_size,
            dim: cfg.embed,
        },
        hidden: cfg.hidden,
        outputs: cfg.loss.output_dim(data.classes),
        bidirectional: cfg.bidirectional,
    }
}

/// A run in progress. Parameters and shuffles are seeded by `cfg.seed`.
pub struct Run {
    pub net: Network,
    opt: OptimizerState,
    epoch_cfg: EpochConfig,
    epoch: usize,
}

impl Run {
    pub fn new(cfg: &ExperimentConfig, data: &Dataset) -> Result<Self> {
        cfg.validate()?;
        let net = Network::init(&network_spec(cfg, data), &mut RngState::new(cfg.seed.wrapping_add(INIT_STREAM)))?;
        Ok(Run {
            net,
            opt: OptimizerState::new(cfg.optimizer, cfg.eta)?,
            epoch_cfg: EpochConfig {
                batch_size: cfg.batch,
                loss: cfg.loss,
                seed: cfg.seed,
            },
            epoch: 0,
        })
    }

    /// Train one more epoch; epochs are numbered from 1.
    pub fn next_epoch(&mut self, data: &Dataset) -> Result<MetricsRecord> {
        self.epoch += 1;
        Ok(train_epoch(&mut self.net, &data.train, &data.test, &mut self.opt, &self.epoch_cfg, self.epoch)?)
    }
}

pub fn format_record(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc, r.seconds
    )
}

/// Appends one CSV row per epoch, flushing each so a crashed run keeps
/// its history.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    pub fn append(&mut self, r: &MetricsRecord) -> Result<()> {
        writeln!(self.out, "{}", format_record(r))?;
        self.out.flush()?;
        Ok(())
    }
}

/// Per-run result without the files.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
}

impl TrainOutcome {
    /// Highest test accuracy and its epoch; the earliest epoch wins ties.
    pub fn best(&self) -> Option<&MetricsRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&MetricsRecord>, r| match best {
                Some(b) if b.test_acc >= r.test_acc => Some(b),
                _ => Some(r),
            })
    }
}

/// Validate, prepare `dir`, then train on already loaded data.
pub fn train_in(cfg: &ExperimentConfig, data: &Dataset, dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut saved = cfg.clone();
    saved.out = dir.to_path_buf();
    fs::write(dir.join(CONFIG_FILE), saved.serialize()).with_context(|| format!("writing {}", dir.display()))?;
    let mut writer = MetricsWriter::create(&dir.join(METRICS_FILE))?;

    let mut run = Run::new(cfg, data)?;
    let mut records = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let r = run.next_epoch(data)?;
        writer.append(&r)?;
        records.push(r);
    }
    checkpoint::save(&run.net, &dir.join(CHECKPOINT_FILE))?;
    Ok(TrainOutcome {
        dir: dir.to_path_buf(),
        records,
    })
}

/// `train`: writes `metrics.csv`, `model.ckpt` and `config.txt` into
/// `cfg.out`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    let data = load_data(cfg)?;
    train_in(cfg, &data, &cfg.out)
}

/// Drop the trailing `seconds` column of a metrics CSV.
pub fn strip_seconds(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}
