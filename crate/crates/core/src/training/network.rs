use crate::cells::{check_bidirectional_pair, run_cell, CellParams, CellVariant, OutputLayer, StepCache};
use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, RngState};

/// How tokens become cell inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputSpec {
    /// Learned (or frozen) embedding table of `vocab x dim`.
    Embedding { vocab: usize, dim: usize },
    /// One-hot vectors of length `vocab`; no parameters.
    OneHot { vocab: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub variant: CellVariant,
    pub activation: Activation,
    pub forget_const: f64,
    pub input: InputSpec,
    pub hidden: usize,
    pub outputs: usize,
    pub bidirectional: bool,
}

/// Token classifier: embedding, one recurrent layer (optionally
/// bidirectional), affine readout of the final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    embedding: Option<EmbeddingTable>,
    input_dim: usize,
    cells: Vec<CellParams>,
    output: OutputLayer,
}

/// Forward intermediates for one sequence.
pub struct SequenceTrace {
    pub xs: Vec<Vec<f64>>,
    /// One cache list per direction; the backward direction is stored in
    /// its own (reversed) time order.
    pub caches: Vec<Vec<StepCache>>,
    pub features: Vec<f64>,
    pub raw: Vec<f64>,
}

impl Network {
    pub fn init(spec: &NetworkSpec, rng: &mut RngState) -> Result<Self> {
        let (embedding, m) = match spec.input {
            InputSpec::Embedding { vocab, dim } => (Some(EmbeddingTable::init(vocab, dim, rng)?), dim),
            InputSpec::OneHot { vocab } => (None, vocab),
        };
        let directions = if spec.bidirectional { 2 } else { 1 };
        let cells = (0..directions)
            .map(|_| CellParams::init(spec.variant, m, spec.hidden, spec.activation, spec.forget_const, rng))
            .collect::<Result<Vec<_>>>()?;
        if spec.outputs == 0 {
            return Err(Error::invalid("output dimension must be >= 1"));
        }
        let output = OutputLayer::init(directions * spec.hidden, spec.outputs, rng);
        Self::from_parts(embedding, m, cells, output)
    }

    pub fn from_parts(
        embedding: Option<EmbeddingTable>,
        input_dim: usize,
        cells: Vec<CellParams>,
        output: OutputLayer,
    ) -> Result<Self> {
        match cells.as_slice() {
            [_] => {}
            [f, b] => check_bidirectional_pair(f, b)?,
            _ => return Err(Error::invalid(format!("expected 1 or 2 directions, got {}", cells.len()))),
        }
        if let Some(e) = &embedding {
            if e.dim() != input_dim {
                return Err(Error::shape("Network", format!("embedding dim {}", e.dim()), format!("input dim {input_dim}")));
            }
        }
        if cells[0].input_dim() != input_dim {
            return Err(Error::shape("Network", format!("input dim {input_dim}"), format!("cell m={}", cells[0].input_dim())));
        }
        let width = cells.len() * cells[0].hidden_dim();
        if output.input_dim() != width {
            return Err(Error::shape("Network", format!("recurrent width {width}"), format!("readout {}", output.w.shape_str())));
        }
        Ok(Network {
            embedding,
            input_dim,
            cells,
            output,
        })
    }

    pub fn embedding(&self) -> Option<&EmbeddingTable> {
        self.embedding.as_ref()
    }

    pub fn embedding_mut(&mut self) -> Option<&mut EmbeddingTable> {
        self.embedding.as_mut()
    }

    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [CellParams] {
        &mut self.cells
    }

    pub fn output(&self) -> &OutputLayer {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut OutputLayer {
        &mut self.output
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.cells[0].hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    pub fn bidirectional(&self) -> bool {
        self.cells.len() == 2
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.as_ref().map_or(self.input_dim, EmbeddingTable::vocab_size)
    }

    fn cell_prefixes(&self) -> &'static [&'static str] {
        if self.bidirectional() {
            &["fwd", "bwd"]
        } else {
            &["cell"]
        }
    }

    /// Every adaptive tensor in a fixed order: trainable embedding, cell
    /// tensors per direction, readout weight and bias.
    pub fn param_groups(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        if let Some(e) = self.embedding.as_ref().filter(|e| e.trainable()) {
            out.push(("embedding".to_string(), e.table()));
        }
        for (prefix, cell) in self.cell_prefixes().iter().zip(&self.cells) {
            for (spec, t) in cell.kernel().layout().iter().zip(cell.tensors()) {
                out.push((format!("{prefix}.{}", spec.name), t));
            }
        }
        out.push(("out.w".to_string(), &self.output.w));
        out.push(("out.b".to_string(), &self.output.b));
        out
    }

    /// Same order as [`Network::param_groups`].
    pub fn param_groups_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        if let Some(e) = self.embedding.as_mut().filter(|e| e.trainable()) {
            out.push(e.table_mut());
        }
        for cell in &mut self.cells {
            out.extend(cell.tensors_mut().iter_mut());
        }
        out.push(&mut self.output.w);
        out.push(&mut self.output.b);
        out
    }

    pub fn adaptive_count(&self) -> usize {
        self.param_groups().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn inputs(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        match &self.embedding {
            Some(e) => e.lookup(tokens),
            None => tokens
                .iter()
                .map(|&t| {
                    if t >= self.input_dim {
                        return Err(Error::invalid(format!("token {t} out of range for one-hot width {}", self.input_dim)));
                    }
                    let mut x = vec![0.0; self.input_dim];
                    x[t] = 1.0;
                    Ok(x)
                })
                .collect(),
        }
    }

    pub fn trace(&self, tokens: &[usize]) -> Result<SequenceTrace> {
        let xs = self.inputs(tokens)?;
        let zeros = vec![0.0; self.hidden_dim()];
        let mut caches = vec![run_cell(&self.cells[0], xs.iter().map(Vec::as_slice), &zeros, &zeros)?];
        if let Some(bwd) = self.cells.get(1) {
            caches.push(run_cell(bwd, xs.iter().rev().map(Vec::as_slice), &zeros, &zeros)?);
        }
        let features: Vec<f64> = caches
            .iter()
            .flat_map(|c| c.last().expect("nonempty").h.iter().copied())
            .collect();
        let raw = self.output.apply(&features)?;
        Ok(SequenceTrace {
            xs,
            caches,
            features,
            raw,
        })
    }

    /// Raw (pre-squash) outputs for one sequence.
    pub fn forward(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        Ok(self.trace(tokens)?.raw)
    }
}
