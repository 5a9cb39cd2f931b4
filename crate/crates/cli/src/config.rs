//! Experiment configuration and its `key = value` file format.
//!
//! Keys are the CLI flag names without the leading dashes. Files are applied
//! first, then explicit flags, so flags win.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use slimrnn_core::cells::CellVariant;
use slimrnn_core::data::SynthTaskKind;
use slimrnn_core::numerics::Activation;
use slimrnn_core::training::{LossKind, OptimizerKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synth(SynthTaskKind),
    /// `label<TAB>text` corpus, split 80/20 after a seeded shuffle.
    Tsv(PathBuf),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synth(kind) => write!(f, "synth:{kind}"),
            DataSource::Tsv(path) => write!(f, "tsv:{}", path.display()),
        }
    }
}

impl FromStr for DataSource {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("synth", kind)) => Ok(DataSource::Synth(kind.parse()?)),
            Some(("tsv", path)) if !path.is_empty() => Ok(DataSource::Tsv(PathBuf::from(path))),
            _ => bail!("data source must be `synth:<kind>` or `tsv:<path>`, got `{s}`"),
        }
    }
}

/// Every knob of a single training run. Defaults are sized for a binary
/// sentiment corpus: embedding 32, T = 500, n = 100, sigmoid, Adam at
/// 1e-3, batch 32, binary cross-entropy, 5000-word dictionary, 100 epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub variant: CellVariant,
    pub activation: Activation,
    pub hidden: usize,
    pub embed: usize,
    pub seq_len: usize,
    pub vocab: usize,
    /// Synthetic data only: total samples before the 80/20 split.
    pub samples: usize,
    pub eta: f64,
    pub forget: f64,
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub seed: u64,
    pub bidirectional: bool,
    pub data: DataSource,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: CellVariant::Lstm,
            activation: Activation::Sigmoid,
            hidden: 100,
            embed: 32,
            seq_len: 500,
            vocab: 5000,
            samples: 2500,
            eta: 1e-3,
            forget: slimrnn_core::cells::DEFAULT_FORGET,
            epochs: 100,
            batch: 32,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::BinaryCrossEntropy,
            seed: 0,
            bidirectional: false,
            data: DataSource::Synth(SynthTaskKind::KeywordCount),
            out: PathBuf::from("runs/default"),
        }
    }
}

/// Keys in serialization order.
pub const KEYS: [&str; 17] = [
    "variant",
    "activation",
    "hidden",
    "embed",
    "seq-len",
    "vocab",
    "samples",
    "eta",
    "forget",
    "epochs",
    "batch",
    "optimizer",
    "loss",
    "seed",
    "bidirectional",
    "data",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| anyhow!("{key}: cannot parse `{value}`: {e}"))
}

impl ExperimentConfig {
    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "variant" => self.variant = parse(key, v)?,
            "activation" => self.activation = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "embed" => self.embed = parse(key, v)?,
            "seq-len" => self.seq_len = parse(key, v)?,
            "vocab" => self.vocab = parse(key, v)?,
            "samples" => self.samples = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "forget" => self.forget = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "optimizer" => self.optimizer = parse(key, v)?,
            "loss" => self.loss = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "bidirectional" => self.bidirectional = parse(key, v)?,
            "data" => self.data = v.parse()?,
            "out" => self.out = PathBuf::from(v),
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.to_string(),
            "activation" => self.activation.to_string(),
            "hidden" => self.hidden.to_string(),
            "embed" => self.embed.to_string(),
            "seq-len" => self.seq_len.to_string(),
            "vocab" => self.vocab.to_string(),
            "samples" => self.samples.to_string(),
            "eta" => self.eta.to_string(),
            "forget" => self.forget.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch" => self.batch.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "loss" => self.loss.to_string(),
            "seed" => self.seed.to_string(),
            "bidirectional" => self.bidirectional.to_string(),
            "data" => self.data.to_string(),
            "out" => self.out.display().to_string(),
            _ => return None,
        })
    }

    /// One `key = value` line per field, in [`KEYS`] order. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn serialize(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored; a repeated key is an error.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim();
            if seen.contains(&key) {
                bail!("line {}: duplicate key `{key}`", i + 1);
            }
            seen.push(key);
            self.set(key, value).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.forget > -1.0 && self.forget < 1.0) {
            bail!("forget must satisfy -1 < f < 1, got {}", self.forget);
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            bail!("eta must be a positive finite number, got {}", self.eta);
        }
        for (name, v, min) in [
            ("epochs", self.epochs, 1),
            ("batch", self.batch, 1),
            ("hidden", self.hidden, 1),
            ("embed", self.embed, 1),
            ("seq-len", self.seq_len, 1),
            ("vocab", self.vocab, 4),
        ] {
            if v < min {
                bail!("{name} must be >= {min}, got {v}");
            }
        }
        if let DataSource::Synth(_) = self.data {
            if self.seq_len < 2 || self.samples < 10 {
                bail!("synthetic data needs seq-len >= 2 and samples >= 10");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.hidden, c.embed, c.seq_len, c.vocab, c.batch, c.epochs), (100, 32, 500, 5000, 32, 100));
        assert_eq!((c.activation, c.optimizer, c.loss), (Activation::Sigmoid, OptimizerKind::Adam, LossKind::BinaryCrossEntropy));
        assert_eq!(c.eta, 1e-3);
    }

    #[test]
    fn file_values_and_comments() {
        let cfg = ExperimentConfig::parse("# sweep base\nvariant = lstm_c6\n\nseq-len = 40  # short\ndata = tsv:/tmp/a.tsv\n").unwrap();
        assert_eq!(cfg.variant, CellVariant::LstmC6);
        assert_eq!(cfg.seq_len, 40);
        assert_eq!(cfg.data, DataSource::Tsv("/tmp/a.tsv".into()));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("hidden").is_err());
        assert!(ExperimentConfig::parse("hidden = ten").is_err());
        assert!(ExperimentConfig::parse("hidden = 1\nhidden = 2").is_err());
        assert!(ExperimentConfig::parse("data = csv:x").is_err());
        assert!(ExperimentConfig::parse("data = synth:nope").is_err());
    }

    #[test]
    fn validation() {
        let bad = |k: &str, v: &str| {
            let mut c = ExperimentConfig::default();
            c.set(k, v).unwrap();
            c.validate().is_err()
        };
        assert!(bad("epochs", "0"));
        assert!(bad("eta", "0"));
        assert!(bad("eta", "-1e-3"));
        assert!(bad("forget", "1"));
        assert!(bad("forget", "-1"));
        assert!(bad("batch", "0"));
        assert!(!bad("forget", "-0.5"));
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            (0usize..4, 0usize..3, 1usize..500, 1usize..300, any::<u64>(), any::<bool>()),
            (1e-9f64..1.0, -0.999f64..0.999, 0usize..3, 0usize..2, "[a-z0-9_/]{1,12}"),
        )
            .prop_map(|((v, a, hidden, embed, seed, bi), (eta, forget, opt, loss, out))| ExperimentConfig {
                variant: CellVariant::ALL[v],
                activation: Activation::ALL[a],
                hidden,
                embed,
                eta,
                forget,
                optimizer: OptimizerKind::ALL[opt],
                loss: [LossKind::BinaryCrossEntropy, LossKind::CategoricalCrossEntropy][loss],
                seed,
                bidirectional: bi,
                data: if seed % 2 == 0 { DataSource::Synth(SynthTaskKind::MajorityVote) } else { DataSource::Tsv(out.clone().into()) },
                out: out.into(),
                ..ExperimentConfig::default()
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_serialize_is_identical(cfg in arb_config()) {
            let text = cfg.serialize();
            let back = ExperimentConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
