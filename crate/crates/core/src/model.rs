//! The trainable classification head placed on frozen pooled features.
//!
//! Layer order: linear → ReLU → dropout → [linear → ReLU] → linear →
//! softmax, where the bracketed pair exists only with `extra_dense`.
//! Dropout is inverted (scaled by `1/(1-p)` at train time) so evaluation
//! needs no rescaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassWeights, Label};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const N_CLASSES: usize = 2;

/// Smallest probability fed to the log in the loss.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub d_model: usize,
    pub d_hidden: usize,
    pub dropout_p: f64,
    pub extra_dense: bool,
    pub use_dropout: bool,
}

impl HeadSpec {
    pub fn new(d_model: usize) -> Self {
        Self {
            d_model,
            d_hidden: 512,
            dropout_p: 0.1,
            extra_dense: false,
            use_dropout: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_hidden == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    /// Whether TRAIN-mode forwards draw a dropout mask.
    pub fn dropout_active(&self) -> bool {
        self.use_dropout && self.dropout_p > 0.0
    }
}

/// A fully connected layer, weights row-major `[out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
            n_in,
            n_out,
        }
    }

    fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| (2.0 * rng.gen::<f64>() - 1.0) * s).collect();
        Self {
            w,
            b: vec![0.0; n_out],
            n_in,
            n_out,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b[o]
            })
            .collect()
    }

    /// Accumulates `dW += dy ⊗ x`, `db += dy` and returns `Wᵀ dy`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.w[o * self.n_in..(o + 1) * self.n_in];
            for j in 0..self.n_in {
                grow[j] += g * x[j];
                dx[j] += g * row[j];
            }
        }
        dx
    }
}

/// Head weights. Gradients and optimizer moments reuse this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub hidden: Dense,
    pub extra: Option<Dense>,
    pub output: Dense,
}

impl HeadParams {
    pub fn zeros(spec: &HeadSpec) -> Self {
        Self {
            hidden: Dense::zeros(spec.d_model, spec.d_hidden),
            extra: spec.extra_dense.then(|| Dense::zeros(spec.d_hidden, spec.d_hidden)),
            output: Dense::zeros(spec.d_hidden, N_CLASSES),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: Dense::zeros(self.hidden.n_in, self.hidden.n_out),
            extra: self.extra.as_ref().map(|d| Dense::zeros(d.n_in, d.n_out)),
            output: Dense::zeros(self.output.n_in, self.output.n_out),
        }
    }

    /// Named flat tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = vec![("w1", self.hidden.w.as_slice()), ("b1", self.hidden.b.as_slice())];
        if let Some(e) = &self.extra {
            out.push(("w1b", e.w.as_slice()));
            out.push(("b1b", e.b.as_slice()));
        }
        out.push(("w2", self.output.w.as_slice()));
        out.push(("b2", self.output.b.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.hidden.w, &mut self.hidden.b];
        if let Some(e) = &mut self.extra {
            out.push(&mut e.w);
            out.push(&mut e.b);
        }
        out.push(&mut self.output.w);
        out.push(&mut self.output.b);
        out
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied())
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn matches(&self, spec: &HeadSpec) -> bool {
        self.hidden.n_in == spec.d_model
            && self.hidden.n_out == spec.d_hidden
            && self.extra.is_some() == spec.extra_dense
            && self.output.n_in == spec.d_hidden
            && self.output.n_out == N_CLASSES
    }
}

/// Glorot-uniform weights `U(-s, s)`, `s = sqrt(6 / (fan_in + fan_out))`,
/// zero biases. Layers are drawn in order hidden, extra, output from one
/// ChaCha8 stream seeded with `seed`.
pub fn init_head(spec: &HeadSpec, seed: u64) -> Result<HeadParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = Dense::glorot(spec.d_model, spec.d_hidden, &mut rng);
    let extra = spec
        .extra_dense
        .then(|| Dense::glorot(spec.d_hidden, spec.d_hidden, &mut rng));
    let output = Dense::glorot(spec.d_hidden, N_CLASSES, &mut rng);
    Ok(HeadParams { hidden, extra, output })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate activations of one forward pass, kept for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub z1: Vec<f64>,
    /// ReLU(z1) after dropout (equal to ReLU(z1) in EVAL mode).
    pub hidden: Vec<f64>,
    pub z_extra: Option<Vec<f64>>,
    /// Input of the output layer.
    pub last: Vec<f64>,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// Draws a keep-mask with keep probability `1 - p`.
pub fn sample_dropout_mask<R: Rng + ?Sized>(rng: &mut R, len: usize, p: f64) -> Vec<bool> {
    (0..len).map(|_| rng.gen::<f64>() >= p).collect()
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

pub fn head_forward(
    x: &[f64],
    params: &HeadParams,
    spec: &HeadSpec,
    mode: Mode,
    dropout_mask: Option<&[bool]>,
) -> Result<Forward> {
    if x.len() != spec.d_model {
        return Err(Error::Config(format!(
            "feature width {} != d_model {}",
            x.len(),
            spec.d_model
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input feature".into()));
    }
    let z1 = params.hidden.apply(x);
    let mut hidden = z1.clone();
    relu(&mut hidden);
    if mode == Mode::Train && spec.dropout_active() {
        let mask = dropout_mask.ok_or_else(|| Error::Config("TRAIN mode with dropout needs a dropout mask".into()))?;
        if mask.len() != spec.d_hidden {
            return Err(Error::Config("dropout mask width differs from d_hidden".into()));
        }
        let keep_scale = 1.0 / (1.0 - spec.dropout_p);
        for (h, &keep) in hidden.iter_mut().zip(mask) {
            *h = if keep { *h * keep_scale } else { 0.0 };
        }
    }
    let (z_extra, last) = match &params.extra {
        Some(extra) => {
            let z = extra.apply(&hidden);
            let mut a = z.clone();
            relu(&mut a);
            (Some(z), a)
        }
        None => (None, hidden.clone()),
    };
    let out = params.output.apply(&last);
    let logits = [out[0], out[1]];
    let probs = softmax(logits);
    if !(probs[0].is_finite() && probs[1].is_finite()) {
        return Err(Error::Numeric("non-finite probabilities".into()));
    }
    Ok(Forward {
        z1,
        hidden,
        z_extra,
        last,
        logits,
        probs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; 2],
    pub label: Label,
}

/// Argmax of the EVAL-mode probabilities; exact ties go to NOT_HATEFUL.
pub fn predict(x: &[f64], params: &HeadParams, spec: &HeadSpec) -> Result<Prediction> {
    let f = head_forward(x, params, spec, Mode::Eval, None)?;
    Ok(Prediction {
        probs: f.probs,
        label: label_of(f.probs),
    })
}

pub fn label_of(probs: [f64; 2]) -> Label {
    if probs[1] > probs[0] {
        Label::Hateful
    } else {
        Label::NotHateful
    }
}

pub fn predict_batch<X: AsRef<[f64]>>(xs: &[X], params: &HeadParams, spec: &HeadSpec) -> Result<Vec<Prediction>> {
    xs.iter().map(|x| predict(x.as_ref(), params, spec)).collect()
}

/// `Σ w_y · (−log p_y) / Σ w_y`, the log floored at [`LOG_FLOOR`].
pub fn weighted_cross_entropy(probs: &[[f64; 2]], gold: &[Label], weights: &ClassWeights) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Numeric("loss of an empty batch is undefined".into()));
    }
    if probs.len() != gold.len() {
        return Err(Error::Data(format!(
            "{} probability rows for {} labels",
            probs.len(),
            gold.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &y) in probs.iter().zip(gold) {
        let w = weights.get(y);
        num += w * -p[y.index()].max(LOG_FLOOR).ln();
        den += w;
    }
    Ok(num / den)
}

/// Loss and analytic gradients of [`weighted_cross_entropy`] over a batch
/// with respect to every head parameter.
///
/// `dropout_masks`, when given, holds one mask per row and switches the
/// forward to TRAIN mode.
pub fn head_gradients<X: AsRef<[f64]>>(
    xs: &[X],
    gold: &[Label],
    params: &HeadParams,
    spec: &HeadSpec,
    weights: &ClassWeights,
    dropout_masks: Option<&[Vec<bool>]>,
) -> Result<(f64, HeadParams)> {
    if xs.is_empty() {
        return Err(Error::Numeric("gradient of an empty batch is undefined".into()));
    }
    if xs.len() != gold.len() || dropout_masks.is_some_and(|m| m.len() != xs.len()) {
        return Err(Error::Data("batch inputs misaligned".into()));
    }
    let train = dropout_masks.is_some() && spec.dropout_active();
    let mode = if train { Mode::Train } else { Mode::Eval };
    let keep_scale = 1.0 / (1.0 - spec.dropout_p);
    let total_w: f64 = gold.iter().map(|&y| weights.get(y)).sum();

    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for (i, (x, &y)) in xs.iter().zip(gold).enumerate() {
        let x = x.as_ref();
        let mask = dropout_masks.map(|m| m[i].as_slice());
        let f = head_forward(x, params, spec, mode, mask)?;
        let w = weights.get(y) / total_w;
        let p_y = f.probs[y.index()];
        loss += w * -p_y.max(LOG_FLOOR).ln();
        if p_y < LOG_FLOOR {
            // the floored log is flat here
            continue;
        }
        let mut dlogits = [w * f.probs[0], w * f.probs[1]];
        dlogits[y.index()] -= w;

        let mut d_last = params.output.backward(&f.last, &dlogits, &mut grad.output);
        let d_hidden = match (&params.extra, &f.z_extra) {
            (Some(extra), Some(z)) => {
                for (d, zv) in d_last.iter_mut().zip(z) {
                    if *zv <= 0.0 {
                        *d = 0.0;
                    }
                }
                extra.backward(&f.hidden, &d_last, grad.extra.as_mut().expect("same shape"))
            }
            _ => d_last,
        };
        let mut dz1 = d_hidden;
        for (j, d) in dz1.iter_mut().enumerate() {
            if f.z1[j] <= 0.0 {
                *d = 0.0;
            } else if train {
                *d = if mask.expect("train has masks")[j] {
                    *d * keep_scale
                } else {
                    0.0
                };
            }
        }
        params.hidden.backward(x, &dz1, &mut grad.hidden);
    }
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((loss, grad))
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    format: String,
    spec: HeadSpec,
    tensors: Vec<TensorRecord>,
}

const HEAD_FORMAT: &str = "xhate-head/1";

/// Serializes spec and parameters as pretty JSON. Floats use the shortest
/// representation that parses back to the identical f64.
pub fn head_to_json(params: &HeadParams, spec: &HeadSpec) -> String {
    let tensors = params
        .tensors()
        .into_iter()
        .map(|(name, data)| {
            let shape = match name {
                "w1" => vec![params.hidden.n_out, params.hidden.n_in],
                "w1b" => {
                    let e = params.extra.as_ref().expect("w1b implies extra");
                    vec![e.n_out, e.n_in]
                }
                "w2" => vec![params.output.n_out, params.output.n_in],
                _ => vec![data.len()],
            };
            TensorRecord {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            }
        })
        .collect();
    let file = HeadFile {
        format: HEAD_FORMAT.into(),
        spec: spec.clone(),
        tensors,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("head serializes");
    s.push('\n');
    s
}

pub fn head_from_json(text: &str) -> Result<(HeadParams, HeadSpec)> {
    let file: HeadFile = serde_json::from_str(text)?;
    if file.format != HEAD_FORMAT {
        return Err(Error::Config(format!("unsupported head format {:?}", file.format)));
    }
    file.spec.validate()?;
    let mut params = HeadParams::zeros(&file.spec);
    let names: Vec<&str> = params.tensors().iter().map(|(n, _)| *n).collect();
    if names.len() != file.tensors.len() {
        return Err(Error::Config("head file tensor list does not match its spec".into()));
    }
    for ((name, slot), rec) in names.iter().zip(params.tensors_mut()).zip(&file.tensors) {
        let expected: usize = rec.shape.iter().product();
        if rec.name != *name || rec.data.len() != slot.len() || expected != slot.len() {
            return Err(Error::Config(format!(
                "tensor {} has unexpected name or shape",
                rec.name
            )));
        }
        slot.copy_from_slice(&rec.data);
    }
    if !params.is_finite() {
        return Err(Error::Numeric("head file holds non-finite parameters".into()));
    }
    Ok((params, file.spec))
}

pub fn head_digest(params: &HeadParams, spec: &HeadSpec) -> String {
    sha256_hex(head_to_json(params, spec).as_bytes())
}
