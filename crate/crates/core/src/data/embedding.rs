use std::fs;
use std::path::Path;

use super::text::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::numerics::{axpy, init_matrix, Matrix, RngState};

/// Row-per-token lookup table. Row 0 is the padding row: always zero and
/// never updated.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    table: Matrix,
    trainable: bool,
}

impl EmbeddingTable {
    pub fn init(vocab_size: usize, dim: usize, rng: &mut RngState) -> Result<Self> {
        if vocab_size < 2 || dim == 0 {
            return Err(Error::invalid(format!("embedding needs vocab >= 2 and dim >= 1, got {vocab_size}x{dim}")));
        }
        let mut table = init_matrix(rng, vocab_size, dim);
        table.row_mut(PAD).fill(0.0);
        Ok(EmbeddingTable { table, trainable: true })
    }

    /// Wrap an existing table; row 0 is zeroed.
    pub fn from_matrix(mut table: Matrix, trainable: bool) -> Self {
        table.row_mut(PAD).fill(0.0);
        EmbeddingTable { table, trainable }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Matrix {
        &mut self.table
    }

    /// Restore the padding-row invariant after an external update.
    pub fn zero_pad_row(&mut self) {
        self.table.row_mut(PAD).fill(0.0);
    }

    /// `PAD` always maps to zeros, whatever row 0 holds.
    pub fn lookup(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        tokens
            .iter()
            .map(|&t| {
                if t >= self.vocab_size() {
                    Err(Error::invalid(format!("token {t} out of range for vocab size {}", self.vocab_size())))
                } else if t == PAD {
                    Ok(vec![0.0; self.dim()])
                } else {
                    Ok(self.table.row(t).to_vec())
                }
            })
            .collect()
    }

    /// Scatter-add per-step input gradients into their token rows. The
    /// padding row never receives gradient.
    pub fn scatter_grad(grad: &mut Matrix, tokens: &[usize], dxs: &[Vec<f64>]) {
        for (&t, dx) in tokens.iter().zip(dxs) {
            if t != PAD {
                axpy(1.0, dx, grad.row_mut(t));
            }
        }
    }
}

/// Read a frozen table: a `"<rows> <dim>"` header, then one
/// `token v_1 .. v_dim` line per row. Rows are matched to `vocab` by token;
/// vocabulary entries missing from the file stay zero.
pub fn load_frozen_embeddings(path: impl AsRef<Path>, vocab: &Vocab) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path)?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing `rows dim` header".into()))?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(1, format!("bad header `{header}`")))?;
    let [rows, dim] = fields[..] else {
        return Err(err(1, format!("header must be `rows dim`, got `{header}`")));
    };
    if dim == 0 {
        return Err(err(1, "dim must be >= 1".into()));
    }

    let mut table = Matrix::zeros(vocab.len(), dim);
    let mut count = 0;
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-blank line");
        let values: Vec<f64> = parts
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(i + 1, format!("bad value: {e}")))?;
        if values.len() != dim {
            return Err(err(i + 1, format!("expected {dim} values, got {}", values.len())));
        }
        let idx = vocab.index_of(token);
        if idx > super::text::OOV {
            table.row_mut(idx).copy_from_slice(&values);
        }
        count += 1;
    }
    if count != rows {
        return Err(err(1, format!("header declares {rows} rows, file has {count}")));
    }
    Ok(EmbeddingTable::from_matrix(table, false))
}
