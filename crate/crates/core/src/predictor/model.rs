use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::ConditioningInput;
use crate::elastodynamics::MaterialRanges;
use crate::error::{Error, Result};
use crate::filterbank::{FilterBankParams, Topology};
use crate::geometry::{OccupancyGrid, GRID_SIZE};
use crate::rng::rng_from_seed;
use crate::spectral::SpectralConfig;

/// Material (5) plus excitation coordinates (2).
pub const COND_DIM: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub topology: Topology,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            channels: vec![16, 32, 64, 128],
            embed_dim: 64,
            hidden: vec![512; 3],
            topology: Topology { l: 32, m: 4 },
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::invalid("encoder needs at least one block with nonzero channels"));
        }
        if self.embed_dim == 0 || self.embed_dim > 1000 {
            return Err(Error::invalid(format!("embed_dim must be in [1, 1000], got {}", self.embed_dim)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be nonzero"));
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        self.topology.n_params()
    }

    /// Tensor names and shapes in storage order.
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let mut c_in = 1;
        for (i, &c) in self.channels.iter().enumerate() {
            specs.push(TensorSpec::new(format!("encoder.conv{i}.weight"), vec![c, c_in, 3, 3]));
            specs.push(TensorSpec::new(format!("encoder.conv{i}.bias"), vec![c]));
            c_in = c;
        }
        specs.push(TensorSpec::new("encoder.proj.weight".into(), vec![self.embed_dim, c_in]));
        let mut w_in = self.embed_dim + COND_DIM;
        for (i, &h) in self.hidden.iter().enumerate() {
            specs.push(TensorSpec::new(format!("head.fc{i}.weight"), vec![h, w_in]));
            specs.push(TensorSpec::new(format!("head.fc{i}.bias"), vec![h]));
            w_in = h;
        }
        specs.push(TensorSpec::new("head.out.weight".into(), vec![self.n_outputs(), w_in]));
        specs.push(TensorSpec::new("head.out.bias".into(), vec![self.n_outputs()]));
        specs
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    fn new(name: String, shape: Vec<usize>) -> Self {
        TensorSpec { name, shape }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeEmbedding(pub Vec<f64>);

/// Offsets of every tensor inside the flat weight vector.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    conv_w: Vec<usize>,
    conv_b: Vec<usize>,
    proj: usize,
    fc_w: Vec<usize>,
    fc_b: Vec<usize>,
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let specs = arch.tensors();
        let mut offsets = Vec::with_capacity(specs.len());
        let mut off = 0;
        for s in &specs {
            offsets.push(off);
            off += s.len();
        }
        let nc = arch.channels.len();
        let nh = arch.hidden.len();
        let base = 2 * nc + 1;
        Layout {
            conv_w: (0..nc).map(|i| offsets[2 * i]).collect(),
            conv_b: (0..nc).map(|i| offsets[2 * i + 1]).collect(),
            proj: offsets[2 * nc],
            fc_w: (0..nh).map(|i| offsets[base + 2 * i]).collect(),
            fc_b: (0..nh).map(|i| offsets[base + 2 * i + 1]).collect(),
            out_w: offsets[base + 2 * nh],
            out_b: offsets[base + 2 * nh + 1],
            total: off,
        }
    }
}

/// Encoder + MLP head with its normalization ranges and the fixed parameter bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub arch: Architecture,
    pub ranges: MaterialRanges,
    pub spectral: SpectralConfig,
    pub seed: u64,
    pub weights: Vec<f64>,
    layout: Layout,
    bias: Vec<f64>,
}

/// Forward activations of the encoder kept for the backward pass.
pub struct EncoderTrace {
    /// Input followed by the post-ReLU output of every block.
    acts: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    pub embedding: ShapeEmbedding,
}

/// Forward activations of the head kept for the backward pass.
pub struct HeadTrace {
    /// MLP input followed by every post-ReLU hidden layer.
    acts: Vec<Vec<f64>>,
    pub params: FilterBankParams,
}

impl Predictor {
    /// He-initialized hidden layers; the output layer starts at zero, so the untrained
    /// model predicts exactly the bias parameters.
    pub fn new(arch: Architecture, ranges: MaterialRanges, spectral: SpectralConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut weights = vec![0.0; layout.total];
        let mut rng = rng_from_seed(seed);
        let mut off = 0;
        for spec in arch.tensors() {
            let len = spec.len();
            if spec.name.ends_with(".weight") && !spec.name.starts_with("head.out") {
                let fan_in: usize = spec.shape[1..].iter().product();
                let gain = if spec.name == "encoder.proj.weight" { 1.0 } else { 2.0 };
                let dist = Normal::new(0.0, (gain / fan_in as f64).sqrt()).unwrap();
                for w in &mut weights[off..off + len] {
                    *w = dist.sample(&mut rng);
                }
            }
            off += len;
        }
        Self::from_weights(arch, ranges, spectral, seed, weights)
    }

    pub fn from_weights(
        arch: Architecture,
        ranges: MaterialRanges,
        spectral: SpectralConfig,
        seed: u64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if weights.len() != layout.total {
            return Err(Error::invalid(format!("expected {} weights, got {}", layout.total, weights.len())));
        }
        let bias = FilterBankParams::bias(arch.topology, spectral.sample_rate).to_flat();
        Ok(Predictor { arch, ranges, spectral, seed, weights, layout, bias })
    }

    pub fn n_weights(&self) -> usize {
        self.layout.total
    }

    pub fn topology(&self) -> Topology {
        self.arch.topology
    }

    pub fn encode(&self, grid: &OccupancyGrid) -> ShapeEmbedding {
        self.encode_traced(grid).embedding
    }

    pub fn encode_traced(&self, grid: &OccupancyGrid) -> EncoderTrace {
        let mut acts = vec![grid.as_f64()];
        let (mut c_in, mut n) = (1, GRID_SIZE);
        for (i, &c) in self.arch.channels.iter().enumerate() {
            let w = self.tensor(self.layout.conv_w[i], c * c_in * 9);
            let b = self.tensor(self.layout.conv_b[i], c);
            let mut y = conv_forward(acts.last().unwrap(), c_in, n, w, b, c);
            relu_inplace(&mut y);
            acts.push(y);
            c_in = c;
            n = conv_out_size(n);
        }
        let area = (n * n) as f64;
        let last = acts.last().unwrap();
        let pooled: Vec<f64> = (0..c_in).map(|c| last[c * n * n..(c + 1) * n * n].iter().sum::<f64>() / area).collect();
        let proj = self.tensor(self.layout.proj, self.arch.embed_dim * c_in);
        let embedding = ShapeEmbedding(linear_forward(&pooled, proj, &[], self.arch.embed_dim));
        EncoderTrace { acts, pooled, embedding }
    }

    pub fn predict(&self, embedding: &ShapeEmbedding, cond: &ConditioningInput) -> Result<FilterBankParams> {
        Ok(self.predict_traced(embedding, cond)?.params)
    }

    pub fn predict_traced(&self, embedding: &ShapeEmbedding, cond: &ConditioningInput) -> Result<HeadTrace> {
        if embedding.0.len() != self.arch.embed_dim {
            return Err(Error::invalid(format!(
                "embedding has {} dims, model expects {}",
                embedding.0.len(),
                self.arch.embed_dim
            )));
        }
        let mut x = embedding.0.clone();
        x.extend_from_slice(&cond.material_norm);
        x.extend_from_slice(&cond.coords_norm);
        let mut acts = vec![x];
        for (i, &h) in self.arch.hidden.iter().enumerate() {
            let prev = acts.last().unwrap();
            let w = self.tensor(self.layout.fc_w[i], h * prev.len());
            let b = self.tensor(self.layout.fc_b[i], h);
            let mut y = linear_forward(prev, w, b, h);
            relu_inplace(&mut y);
            acts.push(y);
        }
        let prev = acts.last().unwrap();
        let n_out = self.arch.n_outputs();
        let w = self.tensor(self.layout.out_w, n_out * prev.len());
        let b = self.tensor(self.layout.out_b, n_out);
        let raw = linear_forward(prev, w, b, n_out);
        let flat: Vec<f64> = raw.iter().zip(&self.bias).map(|(r, b)| r + b).collect();
        let params = FilterBankParams::from_flat(self.arch.topology, &flat)?;
        Ok(HeadTrace { acts, params })
    }

    /// Backpropagates d(loss)/d(params) through the head, accumulating into `grad`, and
    /// returns d(loss)/d(embedding).
    pub fn backward_head(&self, trace: &HeadTrace, d_params: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(d_params.len(), self.arch.n_outputs());
        let n_out = self.arch.n_outputs();
        let last = trace.acts.last().unwrap();
        let (dw, db) = split2(grad, self.layout.out_w, n_out * last.len(), self.layout.out_b, n_out);
        let w = self.tensor(self.layout.out_w, n_out * last.len());
        let mut d = linear_backward(last, w, d_params, dw, db);
        for i in (0..self.arch.hidden.len()).rev() {
            relu_backward(&trace.acts[i + 1], &mut d);
            let (x, h) = (&trace.acts[i], self.arch.hidden[i]);
            let (dw, db) = split2(grad, self.layout.fc_w[i], h * x.len(), self.layout.fc_b[i], h);
            let w = self.tensor(self.layout.fc_w[i], h * x.len());
            d = linear_backward(x, w, &d, dw, db);
        }
        d.truncate(self.arch.embed_dim);
        d
    }

    /// Backpropagates d(loss)/d(embedding) through the encoder into `grad`.
    pub fn backward_encoder(&self, trace: &EncoderTrace, d_embedding: &[f64], grad: &mut [f64]) {
        let nc = self.arch.channels.len();
        let c_last = self.arch.channels[nc - 1];
        let proj_len = self.arch.embed_dim * c_last;
        let proj = self.tensor(self.layout.proj, proj_len);
        let mut d_proj = vec![0.0; proj_len];
        let d_pooled = linear_backward(&trace.pooled, proj, d_embedding, &mut d_proj, &mut []);
        add_into(&mut grad[self.layout.proj..self.layout.proj + proj_len], &d_proj);
        let mut sizes = vec![GRID_SIZE];
        for _ in 0..nc {
            sizes.push(conv_out_size(*sizes.last().unwrap()));
        }
        let n_last = sizes[nc];
        let area = (n_last * n_last) as f64;
        let mut d: Vec<f64> = (0..c_last).flat_map(|c| std::iter::repeat_n(d_pooled[c] / area, n_last * n_last)).collect();
        for i in (0..nc).rev() {
            relu_backward(&trace.acts[i + 1], &mut d);
            let c_out = self.arch.channels[i];
            let c_in = if i == 0 { 1 } else { self.arch.channels[i - 1] };
            let wlen = c_out * c_in * 9;
            let (dw, db) = split2(grad, self.layout.conv_w[i], wlen, self.layout.conv_b[i], c_out);
            let w = self.tensor(self.layout.conv_w[i], wlen);
            d = conv_backward(&trace.acts[i], c_in, sizes[i], w, c_out, &d, dw, db, i > 0);
        }
    }

    fn tensor(&self, off: usize, len: usize) -> &[f64] {
        &self.weights[off..off + len]
    }

    /// Bias parameters in flat order; what a zero head output decodes to.
    pub fn bias_params(&self) -> FilterBankParams {
        FilterBankParams::from_flat(self.arch.topology, &self.bias).unwrap()
    }

    /// Named views of the weight vector in storage order.
    pub fn named_tensors(&self) -> Vec<(TensorSpec, &[f64])> {
        let mut off = 0;
        self.arch
            .tensors()
            .into_iter()
            .map(|s| {
                let len = s.len();
                let t = &self.weights[off..off + len];
                off += len;
                (s, t)
            })
            .collect()
    }

    pub fn out_layer_range(&self) -> std::ops::Range<usize> {
        self.layout.out_w..self.layout.total
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Two disjoint mutable windows of `v`; `a` must precede `b`.
fn split2(v: &mut [f64], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + alen <= b);
    let (head, tail) = v.split_at_mut(b);
    (&mut head[a..a + alen], &mut tail[..blen])
}
