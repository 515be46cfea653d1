//! Phone acoustic model: affine+ReLU hidden layers and a softmax output.
//!
//! Parameters are stored as `f32` (the on-disk precision); all arithmetic is
//! done in `f64`. Gradients are accumulated over fixed-size row chunks and
//! summed in chunk order, so sequential and parallel execution agree bit for
//! bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::par::Execution;
use crate::phoneset::PhoneInventory;

#[derive(Debug, Error)]
pub enum AmError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input has {got} values, expected a multiple of {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("non-finite value in input row {row}")]
    NonFinite { row: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("{targets} targets for {rows} input rows")]
    TargetCount { targets: usize, rows: usize },
    #[error("target {target} out of range for {outputs} outputs")]
    TargetOutOfRange { target: usize, outputs: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("model was trained for a different phone inventory ({found} outputs, digest {found_digest}; expected {expected} outputs, digest {expected_digest})")]
    InventoryMismatch {
        expected: usize,
        found: usize,
        expected_digest: String,
        found_digest: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub seed: u64,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            input_dim: 299,
            hidden_dims: vec![120, 120],
            output_dim: 44,
            seed: 0,
        }
    }
}

impl AmConfig {
    /// Default architecture with one output per phone of `inv`.
    pub fn for_inventory(inv: &PhoneInventory) -> Self {
        Self {
            output_dim: inv.len(),
            ..Self::default()
        }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_dims.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_dims);
        d.push(self.output_dim);
        d
    }

    pub fn validate(&self) -> Result<(), AmError> {
        if self.dims().contains(&0) {
            return Err(AmError::Config(format!("zero-width layer in {:?}", self.dims())));
        }
        Ok(())
    }
}

/// Σ over layers of in·out + out.
pub fn param_count(cfg: &AmConfig) -> usize {
    cfg.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// All weights and biases, flattened layer by layer: the out×in weight
/// matrix (row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AmParams {
    dims: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

fn layer_spans(dims: &[usize]) -> Vec<LayerSpan> {
    let mut offset = 0;
    dims.windows(2)
        .map(|w| {
            let span = LayerSpan {
                inputs: w[0],
                outputs: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            span
        })
        .collect()
}

impl AmParams {
    /// He-initialized weights (normal, std √(2/fan_in)) and zero biases.
    pub fn init(cfg: &AmConfig) -> Result<Self, AmError> {
        cfg.validate()?;
        let dims = cfg.dims();
        let mut data = vec![0.0f32; param_count(cfg)];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for span in layer_spans(&dims) {
            let normal = Normal::new(0.0, (2.0 / span.inputs as f64).sqrt())
                .map_err(|e| AmError::Config(e.to_string()))?;
            for w in &mut data[span.weights..span.bias] {
                *w = normal.sample(&mut rng) as f32;
            }
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(cfg: &AmConfig) -> Result<Self, AmError> {
        cfg.validate()?;
        Ok(Self {
            dims: cfg.dims(),
            data: vec![0.0; param_count(cfg)],
        })
    }

    pub fn from_flat(cfg: &AmConfig, data: Vec<f32>) -> Result<Self, AmError> {
        cfg.validate()?;
        if data.len() != param_count(cfg) {
            return Err(AmError::Config(format!(
                "{} parameters for a model with {}",
                data.len(),
                param_count(cfg)
            )));
        }
        Ok(Self { dims: cfg.dims(), data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Weight matrix (out×in, row-major) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f32], &[f32]) {
        let s = layer_spans(&self.dims)[l];
        (&self.data[s.weights..s.bias], &self.data[s.bias..s.bias + s.outputs])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f32], &mut [f32]) {
        let s = layer_spans(&self.dims)[l];
        let (w, rest) = self.data[s.weights..].split_at_mut(s.bias - s.weights);
        (w, &mut rest[..s.outputs])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// T × P row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonePosteriors {
    pub data: Vec<f64>,
    pub frames: usize,
    pub phones: usize,
}

impl PhonePosteriors {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.phones..(t + 1) * self.phones]
    }

    pub fn argmax(&self, t: usize) -> usize {
        let row = self.row(t);
        (0..self.phones).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0)
    }
}

const FORWARD_CHUNK: usize = 64;
const GRAD_CHUNK: usize = 32;

/// Parameters widened once per call.
struct Net {
    spans: Vec<LayerSpan>,
    w: Vec<f64>,
}

impl Net {
    fn new(params: &AmParams) -> Self {
        Self {
            spans: layer_spans(&params.dims),
            w: params.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Activations of every layer for `rows` input rows; the last entry holds
    /// log-softmax outputs.
    fn activations(&self, input: &[f32], rows: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.spans.len() + 1);
        acts.push(input.iter().map(|&v| v as f64).collect::<Vec<f64>>());
        let last = self.spans.len() - 1;
        for (l, s) in self.spans.iter().enumerate() {
            let prev = &acts[l];
            let mut out = vec![0.0f64; rows * s.outputs];
            for r in 0..rows {
                let a = &prev[r * s.inputs..(r + 1) * s.inputs];
                let z = &mut out[r * s.outputs..(r + 1) * s.outputs];
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &self.w[s.weights + o * s.inputs..s.weights + (o + 1) * s.inputs];
                    let dot: f64 = row.iter().zip(a).map(|(w, x)| w * x).sum();
                    let v = dot + self.w[s.bias + o];
                    *zo = if l < last { v.max(0.0) } else { v };
                }
                if l == last {
                    log_softmax_in_place(z);
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Sum of cross-entropy over the chunk and the summed gradient.
    fn chunk_gradient(&self, input: &[f32], targets: &[usize]) -> (f64, Vec<f64>) {
        let rows = targets.len();
        let acts = self.activations(input, rows);
        let mut grad = vec![0.0f64; self.w.len()];
        let last = self.spans.len() - 1;
        let logp = &acts[last + 1];
        let outputs = self.spans[last].outputs;
        let mut loss = 0.0;
        let mut delta: Vec<f64> = Vec::with_capacity(rows * outputs);
        for (r, &t) in targets.iter().enumerate() {
            let lp = &logp[r * outputs..(r + 1) * outputs];
            loss -= lp[t];
            delta.extend(lp.iter().enumerate().map(|(k, &v)| v.exp() - if k == t { 1.0 } else { 0.0 }));
        }
        for l in (0..=last).rev() {
            let s = self.spans[l];
            let a = &acts[l];
            for r in 0..rows {
                let ar = &a[r * s.inputs..(r + 1) * s.inputs];
                let dr = &delta[r * s.outputs..(r + 1) * s.outputs];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let g = &mut grad[s.weights + o * s.inputs..s.weights + (o + 1) * s.inputs];
                    for (gi, &x) in g.iter_mut().zip(ar) {
                        *gi += d * x;
                    }
                    grad[s.bias + o] += d;
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through W and the ReLU of the layer below.
            let mut prev = vec![0.0f64; rows * s.inputs];
            for r in 0..rows {
                let dr = &delta[r * s.outputs..(r + 1) * s.outputs];
                let pr = &mut prev[r * s.inputs..(r + 1) * s.inputs];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.w[s.weights + o * s.inputs..s.weights + (o + 1) * s.inputs];
                    for (p, &w) in pr.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                let ar = &a[r * s.inputs..(r + 1) * s.inputs];
                for (p, &x) in pr.iter_mut().zip(ar) {
                    if x <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (loss, grad)
    }
}

fn log_softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter_mut().for_each(|v| *v -= lse);
}

fn check_input(params: &AmParams, inputs: &[f32]) -> Result<usize, AmError> {
    let dim = params.input_dim();
    if !inputs.len().is_multiple_of(dim) {
        return Err(AmError::InputShape {
            expected: dim,
            got: inputs.len(),
        });
    }
    if let Some(pos) = inputs.iter().position(|v| !v.is_finite()) {
        return Err(AmError::NonFinite { row: pos / dim });
    }
    Ok(inputs.len() / dim)
}

/// Log posteriors for row-major input vectors.
pub fn forward_log(params: &AmParams, inputs: &[f32], exec: Execution) -> Result<PhonePosteriors, AmError> {
    let rows = check_input(params, inputs)?;
    let net = Net::new(params);
    let (din, p) = (params.input_dim(), params.output_dim());
    let mut data = vec![0.0f64; rows * p];
    exec.for_each_chunk_mut(&mut data, FORWARD_CHUNK * p, |i, out| {
        let n = out.len() / p;
        let start = i * FORWARD_CHUNK;
        let acts = net.activations(&inputs[start * din..(start + n) * din], n);
        out.copy_from_slice(acts.last().unwrap());
    });
    Ok(PhonePosteriors { data, frames: rows, phones: p })
}

/// Posterior probabilities for row-major input vectors.
pub fn forward(params: &AmParams, inputs: &[f32], exec: Execution) -> Result<PhonePosteriors, AmError> {
    let mut post = forward_log(params, inputs, exec)?;
    for v in &mut post.data {
        *v = v.exp().max(f64::MIN_POSITIVE);
    }
    Ok(post)
}

fn check_targets(params: &AmParams, rows: usize, targets: &[usize]) -> Result<(), AmError> {
    if targets.is_empty() {
        return Err(AmError::EmptyBatch);
    }
    if targets.len() != rows {
        return Err(AmError::TargetCount {
            targets: targets.len(),
            rows,
        });
    }
    let outputs = params.output_dim();
    if let Some(&t) = targets.iter().find(|&&t| t >= outputs) {
        return Err(AmError::TargetOutOfRange { target: t, outputs });
    }
    Ok(())
}

/// Mean cross-entropy and its gradient with respect to the flat parameters.
pub fn loss_and_gradient(
    params: &AmParams,
    inputs: &[f32],
    targets: &[usize],
    exec: Execution,
) -> Result<(f64, Vec<f64>), AmError> {
    let rows = check_input(params, inputs)?;
    check_targets(params, rows, targets)?;
    let net = Net::new(params);
    let din = params.input_dim();
    let parts = exec.map_chunks(targets, GRAD_CHUNK, |i, t| {
        let start = i * GRAD_CHUNK;
        net.chunk_gradient(&inputs[start * din..(start + t.len()) * din], t)
    });
    let mut parts = parts.into_iter();
    let (mut loss, mut grad) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let n = rows as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Mean cross-entropy only.
pub fn mean_loss(params: &AmParams, inputs: &[f32], targets: &[usize], exec: Execution) -> Result<f64, AmError> {
    let rows = check_input(params, inputs)?;
    check_targets(params, rows, targets)?;
    let logp = forward_log(params, inputs, exec)?;
    Ok(-targets.iter().enumerate().map(|(r, &t)| logp.row(r)[t]).sum::<f64>() / rows as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: Optimizer,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, params: &AmParams) -> Self {
        let n = match kind {
            Optimizer::Adam { .. } => params.data.len(),
            Optimizer::Sgd => 0,
        };
        Self {
            kind,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn apply(&mut self, params: &mut AmParams, grad: &[f64], lr: f64) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (w, g) in params.data.iter_mut().zip(grad) {
                    *w = (*w as f64 - lr * g) as f32;
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powf(self.step as f64);
                let c2 = 1.0 - beta2.powf(self.step as f64);
                for (((w, g), m), v) in params.data.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let step = lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                    *w = (*w as f64 - step) as f32;
                }
            }
        }
    }
}

/// One optimizer update on a batch; returns the mean loss before the update.
pub fn train_step(
    params: &mut AmParams,
    state: &mut OptimizerState,
    inputs: &[f32],
    targets: &[usize],
    lr: f64,
    exec: Execution,
) -> Result<f64, AmError> {
    let (loss, grad) = loss_and_gradient(params, inputs, targets, exec)?;
    state.apply(params, &grad, lr);
    Ok(loss)
}

const MAGIC: &[u8; 6] = b"PRAKAM";
const VERSION: u32 = 1;

fn hex(d: &[u8]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes the model: magic, version, layer count, dims, seed, inventory
/// digest, then the f32 parameters, all little-endian.
pub fn encode(params: &AmParams, cfg: &AmConfig, inventory_digest: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dims.len() as u32).to_le_bytes());
    for &d in &params.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(inventory_digest);
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// A decoded model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: AmParams,
    pub config: AmConfig,
    pub inventory_digest: [u8; 32],
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AmError::Format(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, AmError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelFile, AmError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(6, "magic")? != MAGIC {
        return Err(AmError::Format("not a model file (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(AmError::Format(format!("unsupported version {version}")));
    }
    let n = c.u32("layer count")? as usize;
    if !(2..=64).contains(&n) {
        return Err(AmError::Format(format!("implausible layer count {n}")));
    }
    let dims = (0..n).map(|_| c.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let seed = u64::from_le_bytes(c.take(8, "seed")?.try_into().unwrap());
    let digest: [u8; 32] = c.take(32, "inventory digest")?.try_into().unwrap();
    let config = AmConfig {
        input_dim: dims[0],
        hidden_dims: dims[1..n - 1].to_vec(),
        output_dim: dims[n - 1],
        seed,
    };
    config.validate().map_err(|e| AmError::Format(e.to_string()))?;
    let count = param_count(&config);
    let raw = c.take(count * 4, "parameters")?;
    if c.pos != bytes.len() {
        return Err(AmError::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let data: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(AmError::Format("non-finite parameter".into()));
    }
    Ok(ModelFile {
        params: AmParams { dims, data },
        config,
        inventory_digest: digest,
    })
}

/// Writes the model atomically (temporary file, then rename).
pub fn save(params: &AmParams, cfg: &AmConfig, inventory: &PhoneInventory, path: &Path) -> Result<(), AmError> {
    let io = |source| AmError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("tmp-write");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(params, cfg, &inventory.digest())).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

/// Reads a model and checks that it was built for `inventory`.
pub fn load(path: &Path, inventory: &PhoneInventory) -> Result<(AmParams, AmConfig), AmError> {
    let bytes = fs::read(path).map_err(|source| AmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file = decode(&bytes)?;
    let expected = inventory.digest();
    if file.inventory_digest != expected || file.config.output_dim != inventory.len() {
        return Err(AmError::InventoryMismatch {
            expected: inventory.len(),
            found: file.config.output_dim,
            expected_digest: hex(&expected[..8]),
            found_digest: hex(&file.inventory_digest[..8]),
        });
    }
    Ok((file.params, file.config))
}
