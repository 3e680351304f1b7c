//! The trainable alignment component: one small fully-connected stack per
//! document source, wrapped in a residual bypass.
//!
//! The last layer of each stack is initialized to zero, so a fresh network
//! is exactly the identity map and training starts from the frozen base
//! geometry.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbedError, EmbeddingVector, SourceKind};

/// One fully-connected layer, `dim -> dim`, row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseLayer {
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let mut z = self.b.clone();
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.w[i * dim..(i + 1) * dim];
            *zi += row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }
}

/// The per-source stack: `out = x + f(x)` where `f` is the layer stack with
/// tanh between layers (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SourceStack {
    pub(crate) layers: Vec<DenseLayer>,
}

/// Cached intermediate values of one forward pass, for backpropagation.
pub(crate) struct ForwardTrace {
    /// Input of each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre_acts: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

/// Parameter gradients of one stack, mirroring its layer shapes.
#[derive(Debug, Clone)]
pub(crate) struct StackGrads {
    pub(crate) layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SourceStack {
    fn zeroed_grads(&self) -> StackGrads {
        StackGrads {
            layers: self
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    fn forward_trace(&self, x: &[f64], dim: usize) -> ForwardTrace {
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_acts = Vec::with_capacity(n_layers);
        let mut h = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let z = layer.apply(&h, dim);
            h = if li + 1 < n_layers {
                z.iter().map(|v| v.tanh()).collect()
            } else {
                z.clone()
            };
            pre_acts.push(z);
        }
        let output: Vec<f64> = x.iter().zip(h.iter()).map(|(a, b)| a + b).collect();
        ForwardTrace {
            inputs,
            pre_acts,
            output,
        }
    }

    /// Accumulate parameter gradients for `upstream = dL/d(output)` and
    /// return `dL/dx`.
    fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut StackGrads,
        dim: usize,
    ) -> Vec<f64> {
        let n_layers = self.layers.len();
        // Gradient flowing through the stack branch (the residual adds the
        // upstream directly at the end).
        let mut dh = upstream.to_vec();
        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let (dw, db) = &mut grads.layers[li];
            let dz: Vec<f64> = if li + 1 < n_layers {
                dh.iter()
                    .zip(trace.pre_acts[li].iter())
                    .map(|(g, z)| {
                        let t = z.tanh();
                        g * (1.0 - t * t)
                    })
                    .collect()
            } else {
                dh.clone()
            };
            let input = &trace.inputs[li];
            for i in 0..dim {
                db[i] += dz[i];
                let row = &mut dw[i * dim..(i + 1) * dim];
                for (j, r) in row.iter_mut().enumerate() {
                    *r += dz[i] * input[j];
                }
            }
            let mut dx = vec![0.0; dim];
            for i in 0..dim {
                let row = &layer.w[i * dim..(i + 1) * dim];
                for (j, dxj) in dx.iter_mut().enumerate() {
                    *dxj += row[j] * dz[i];
                }
            }
            dh = dx;
        }
        // Residual bypass.
        dh.iter().zip(upstream.iter()).map(|(a, b)| a + b).collect()
    }

    fn sgd_step(&mut self, grads: &StackGrads, lr: f64) {
        for (layer, (dw, db)) in self.layers.iter_mut().zip(grads.layers.iter()) {
            for (w, g) in layer.w.iter_mut().zip(dw.iter()) {
                *w -= lr * g;
            }
            for (b, g) in layer.b.iter_mut().zip(db.iter()) {
                *b -= lr * g;
            }
        }
    }
}

/// Per-source residual alignment stacks mapping base embeddings into the
/// unified retrieval space.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentNetwork {
    dim: usize,
    question: SourceStack,
    manual: SourceStack,
    seed: u64,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"ALNC";
const CHECKPOINT_VERSION: u32 = 1;

impl AlignmentNetwork {
    /// Build a network of `layers_per_stack` fully-connected layers per
    /// source. Inner layers get small seeded random weights; the final layer
    /// is zero, so `forward(x) == x` exactly at initialization.
    pub fn new(dim: usize, layers_per_stack: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        assert!(layers_per_stack > 0, "need at least one layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let build_stack = |rng: &mut ChaCha8Rng| {
            let scale = 1.0 / (dim as f64).sqrt();
            let layers: Vec<DenseLayer> = (0..layers_per_stack)
                .map(|li| {
                    let last = li + 1 == layers_per_stack;
                    let w = if last {
                        vec![0.0; dim * dim]
                    } else {
                        (0..dim * dim)
                            .map(|_| rng.gen_range(-scale..scale))
                            .collect()
                    };
                    DenseLayer {
                        w,
                        b: vec![0.0; dim],
                    }
                })
                .collect();
            SourceStack { layers }
        };
        let question = build_stack(&mut rng);
        let manual = build_stack(&mut rng);
        AlignmentNetwork {
            dim,
            question,
            manual,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers_per_stack(&self) -> usize {
        self.question.layers.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total parameter count across both stacks.
    pub fn parameter_count(&self) -> usize {
        2 * self.question.layers.len() * (self.dim * self.dim + self.dim)
    }

    pub(crate) fn stack(&self, kind: SourceKind) -> &SourceStack {
        match kind {
            SourceKind::Question => &self.question,
            SourceKind::Manual => &self.manual,
        }
    }

    pub(crate) fn stack_mut(&mut self, kind: SourceKind) -> &mut SourceStack {
        match kind {
            SourceKind::Question => &mut self.question,
            SourceKind::Manual => &mut self.manual,
        }
    }

    /// Map a base embedding into the unified space through the stack of its
    /// source.
    pub fn align(
        &self,
        v: &EmbeddingVector,
        kind: SourceKind,
    ) -> Result<EmbeddingVector, EmbedError> {
        if v.dim() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        let trace = self.stack(kind).forward_trace(v.as_slice(), self.dim);
        EmbeddingVector::new(trace.output)
    }

    pub(crate) fn forward_trace(&self, x: &[f64], kind: SourceKind) -> ForwardTrace {
        self.stack(kind).forward_trace(x, self.dim)
    }

    pub(crate) fn zeroed_grads(&self, kind: SourceKind) -> StackGrads {
        self.stack(kind).zeroed_grads()
    }

    pub(crate) fn backward(
        &self,
        kind: SourceKind,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut StackGrads,
    ) -> Vec<f64> {
        self.stack(kind).backward(trace, upstream, grads, self.dim)
    }

    pub(crate) fn sgd_step(&mut self, kind: SourceKind, grads: &StackGrads, lr: f64) {
        self.stack_mut(kind).sgd_step(grads, lr);
    }

    /// Read a layer's parameters: `(weights, biases)`, row-major weights.
    pub fn layer_params(&self, kind: SourceKind, layer: usize) -> (&[f64], &[f64]) {
        let l = &self.stack(kind).layers[layer];
        (&l.w, &l.b)
    }

    /// Overwrite one layer's parameters.
    pub fn set_layer_params(
        &mut self,
        kind: SourceKind,
        layer: usize,
        w: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<(), EmbedError> {
        let dim = self.dim;
        if w.len() != dim * dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim * dim,
                got: w.len(),
            });
        }
        if b.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        let l = &mut self.stack_mut(kind).layers[layer];
        l.w = w;
        l.b = b;
        Ok(())
    }

    /// Serialize to the binary checkpoint format: magic, version, dimension
    /// and layer count, then per-source parameter blocks as little-endian
    /// 32-bit floats (question stack first, then manual).
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut bytes = Vec::with_capacity(16 + self.parameter_count() * 4);
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.question.layers.len() as u32).to_le_bytes());
        for stack in [&self.question, &self.manual] {
            for layer in &stack.layers {
                for &w in &layer.w {
                    bytes.extend_from_slice(&(w as f32).to_le_bytes());
                }
                for &b in &layer.b {
                    bytes.extend_from_slice(&(b as f32).to_le_bytes());
                }
            }
        }
        crate::write_atomic(path, &bytes)?;
        Ok(())
    }

    /// Load a checkpoint written by [`AlignmentNetwork::save`].
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let bytes = std::fs::read(path)?;
        let mut cursor = Cursor::new(&bytes);
        let magic = cursor.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(EmbedError::CorruptCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(EmbedError::CorruptCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let dim = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
        let layer_count = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
        if dim == 0 || layer_count == 0 {
            return Err(EmbedError::CorruptCheckpoint("empty geometry".into()));
        }
        let read_stack = |cursor: &mut Cursor| -> Result<SourceStack, EmbedError> {
            let layers = (0..layer_count)
                .map(|_| {
                    let mut w = Vec::with_capacity(dim * dim);
                    for _ in 0..dim * dim {
                        w.push(f64::from(f32::from_le_bytes(
                            cursor.take(4)?.try_into().unwrap(),
                        )));
                    }
                    let mut b = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        b.push(f64::from(f32::from_le_bytes(
                            cursor.take(4)?.try_into().unwrap(),
                        )));
                    }
                    Ok(DenseLayer { w, b })
                })
                .collect::<Result<Vec<_>, EmbedError>>()?;
            Ok(SourceStack { layers })
        };
        let question = read_stack(&mut cursor)?;
        let manual = read_stack(&mut cursor)?;
        if !cursor.at_end() {
            return Err(EmbedError::CorruptCheckpoint("trailing bytes".into()));
        }
        Ok(AlignmentNetwork {
            dim,
            question,
            manual,
            seed: 0,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbedError> {
        if self.pos + n > self.bytes.len() {
            return Err(EmbedError::CorruptCheckpoint("truncated file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Free-function form of [`AlignmentNetwork::align`].
pub fn align(
    net: &AlignmentNetwork,
    v: &EmbeddingVector,
    kind: SourceKind,
) -> Result<EmbeddingVector, EmbedError> {
    net.align(v, kind)
}
