//! Model checkpoints: a line-oriented text header terminated by `end`,
//! followed by every tensor as little-endian f64 in header order.
//!
//! ```text
//! slimrnn-checkpoint 1
//! variant lstm6
//! activation sigmoid
//! forget 0.59
//! input embedding trainable
//! m 32
//! n 100
//! directions 1
//! tensor embedding 5000 32
//! tensor cell.w_c 100 32
//! ...
//! end
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use slimrnn_core::cells::{CellParams, CellVariant, OutputLayer};
use slimrnn_core::data::EmbeddingTable;
use slimrnn_core::numerics::{Activation, Matrix};
use slimrnn_core::training::Network;

const MAGIC: &str = "slimrnn-checkpoint 1";

fn named_tensors(net: &Network) -> Vec<(String, &Matrix)> {
    let mut out = Vec::new();
    if let Some(e) = net.embedding() {
        out.push(("embedding".to_string(), e.table()));
    }
    let prefixes: &[&str] = if net.bidirectional() { &["fwd", "bwd"] } else { &["cell"] };
    for (prefix, cell) in prefixes.iter().zip(net.cells()) {
        for (spec, t) in cell.kernel().layout().iter().zip(cell.tensors()) {
            out.push((format!("{prefix}.{}", spec.name), t));
        }
    }
    out.push(("out.w".to_string(), &net.output().w));
    out.push(("out.b".to_string(), &net.output().b));
    out
}

pub fn encode(net: &Network) -> Vec<u8> {
    let cell = &net.cells()[0];
    let input = match net.embedding() {
        Some(e) if e.trainable() => "embedding trainable",
        Some(_) => "embedding frozen",
        None => "onehot",
    };
    let tensors = named_tensors(net);
    let mut header = format!(
        "{MAGIC}\nvariant {}\nactivation {}\nforget {}\ninput {input}\nm {}\nn {}\ndirections {}\n",
        cell.variant(),
        cell.activation(),
        cell.forget_const(),
        net.input_dim(),
        net.hidden_dim(),
        net.cells().len(),
    );
    for (name, t) in &tensors {
        header.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    for (_, t) in &tensors {
        for v in t.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

struct Header {
    variant: CellVariant,
    activation: Activation,
    forget: f64,
    input: String,
    m: usize,
    n: usize,
    directions: usize,
    tensors: Vec<(String, usize, usize)>,
}

fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text.lines();
    ensure!(lines.next() == Some(MAGIC), "not a checkpoint (bad magic line)");
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| anyhow!("header ends before `{key}`"))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| anyhow!("expected `{key} ...`, found `{line}`"))
    };
    let variant = field("variant")?.parse()?;
    let activation = field("activation")?.parse()?;
    let forget = field("forget")?.parse()?;
    let input = field("input")?;
    let m = field("m")?.parse()?;
    let n = field("n")?.parse()?;
    let directions = field("directions")?.parse()?;
    let mut tensors = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split(' ').collect();
        match parts.as_slice() {
            ["tensor", name, r, c] => tensors.push((name.to_string(), r.parse()?, c.parse()?)),
            ["end"] => {
                return Ok(Header {
                    variant,
                    activation,
                    forget,
                    input,
                    m,
                    n,
                    directions,
                    tensors,
                })
            }
            _ => bail!("unexpected header line `{line}`"),
        }
    }
    bail!("header has no `end` line")
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let end = bytes
        .windows(5)
        .position(|w| w == b"\nend\n")
        .ok_or_else(|| anyhow!("checkpoint header has no `end` line"))?
        + 5;
    let header = parse_header(std::str::from_utf8(&bytes[..end]).context("header is not UTF-8")?)?;
    let payload = &bytes[end..];
    let total: usize = header.tensors.iter().map(|(_, r, c)| r * c).sum();
    ensure!(payload.len() == total * 8, "payload holds {} bytes, header describes {}", payload.len(), total * 8);

    let mut values = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    let mut mats = header.tensors.iter().map(|(name, r, c)| {
        let data: Vec<f64> = values.by_ref().take(r * c).collect();
        Matrix::from_vec(*r, *c, data).map(|m| (name.as_str(), m))
    });
    let mut next = |expect: &str| -> Result<Matrix> {
        let (name, m) = mats.next().ok_or_else(|| anyhow!("missing tensor `{expect}`"))??;
        ensure!(name == expect, "expected tensor `{expect}`, found `{name}`");
        Ok(m)
    };

    let embedding = match header.input.as_str() {
        "embedding trainable" => Some(EmbeddingTable::from_matrix(next("embedding")?, true)),
        "embedding frozen" => Some(EmbeddingTable::from_matrix(next("embedding")?, false)),
        "onehot" => None,
        other => bail!("unknown input mode `{other}`"),
    };
    let prefixes: &[&str] = match header.directions {
        1 => &["cell"],
        2 => &["fwd", "bwd"],
        d => bail!("unsupported direction count {d}"),
    };
    let mut cells = Vec::new();
    for prefix in prefixes {
        let tensors = header
            .variant
            .kernel()
            .layout()
            .iter()
            .map(|spec| next(&format!("{prefix}.{}", spec.name)))
            .collect::<Result<Vec<_>>>()?;
        cells.push(CellParams::from_tensors(header.variant, header.m, header.n, header.activation, header.forget, tensors)?);
    }
    let output = OutputLayer::new(next("out.w")?, next("out.b")?)?;
    ensure!(header.tensors.len() == named_tensors_len(embedding.is_some(), header.variant, cells.len()), "unexpected extra tensors");
    Ok(Network::from_parts(embedding, header.m, cells, output)?)
}

fn named_tensors_len(embedding: bool, variant: CellVariant, directions: usize) -> usize {
    usize::from(embedding) + directions * variant.kernel().layout().len() + 2
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating checkpoint {}", path.display()))?;
    f.write_all(&encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    decode(&bytes).with_context(|| format!("in checkpoint {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slimrnn_core::numerics::RngState;
    use slimrnn_core::training::{InputSpec, NetworkSpec};

    fn net(variant: CellVariant, input: InputSpec, bidirectional: bool, seed: u64) -> Network {
        let spec = NetworkSpec {
            variant,
            activation: Activation::Tanh,
            forget_const: 0.1 + 0.2,
            input,
            hidden: 5,
            outputs: 3,
            bidirectional,
        };
        Network::init(&spec, &mut RngState::new(seed)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let tokens = [3, 0, 7, 7, 1, 4];
        for (i, variant) in CellVariant::ALL.into_iter().enumerate() {
            for (input, bi) in [
                (InputSpec::Embedding { vocab: 9, dim: 4 }, false),
                (InputSpec::Embedding { vocab: 9, dim: 4 }, true),
                (InputSpec::OneHot { vocab: 9 }, true),
            ] {
                let before = net(variant, input, bi, i as u64);
                let path = dir.path().join("m.ckpt");
                save(&before, &path).unwrap();
                let after = load(&path).unwrap();
                assert_eq!(after, before);
                let (a, b) = (before.forward(&tokens).unwrap(), after.forward(&tokens).unwrap());
                assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn frozen_flag_survives() {
        let mut n = net(CellVariant::LstmC6, InputSpec::Embedding { vocab: 6, dim: 2 }, false, 1);
        let table = n.embedding().unwrap().table().clone();
        *n.embedding_mut().unwrap() = EmbeddingTable::from_matrix(table, false);
        let back = decode(&encode(&n)).unwrap();
        assert!(!back.embedding().unwrap().trainable());
    }

    #[test]
    fn header_is_readable() {
        let bytes = encode(&net(CellVariant::Lstm6, InputSpec::Embedding { vocab: 6, dim: 2 }, false, 2));
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.starts_with("slimrnn-checkpoint 1\nvariant lstm6\nactivation tanh\nforget 0.30000000000000004\n"));
        assert!(text.contains("tensor cell.u_c 5 5\n"));
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = encode(&net(CellVariant::Srnn, InputSpec::OneHot { vocab: 4 }, false, 3));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"garbage\nend\n").is_err());
        let end = bytes.windows(5).position(|w| w == b"\nend\n").unwrap() + 5;
        let mut tampered = String::from_utf8(bytes[..end].to_vec()).unwrap().replace("variant srnn", "variant lstm").into_bytes();
        tampered.extend_from_slice(&bytes[end..]);
        assert!(decode(&tampered).is_err());
    }
}
