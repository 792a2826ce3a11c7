//! Head-only training on cached features: seeded samplers, Adam/AdamW,
//! class-weighted loss with global-norm gradient clipping, and the grid
//! runner.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    compute_class_weights, compute_stats, split_train_val, ClassWeights, Corpus, Label, Language, SplitSpec,
};
use crate::encoding::{build_feature_cache, Encoder, FeatureMatrix, WhitespaceTokenizer};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, LanguagePair};
use crate::model::{head_digest, head_gradients, init_head, sample_dropout_mask, HeadParams, HeadSpec};
use crate::model::{head_forward, weighted_cross_entropy, Mode};
use crate::runs::{ensure_writable, write_run, RunArtifacts, RunInputs, RunStatus};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adamw,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::Adamw),
            other => Err(Error::Usage(format!("unknown optimizer {other:?} (adam, adamw)"))),
        }
    }
}

/// Missing fields in JSON take their [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub seed: u64,
    pub max_seq_len: usize,
    pub extra_dense: bool,
    pub use_dropout: bool,
    pub d_hidden: usize,
    pub dropout_p: f64,
    pub class_weighting: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 5,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            seed: 0,
            max_seq_len: 32,
            extra_dense: false,
            use_dropout: true,
            d_hidden: 512,
            dropout_p: 0.1,
            class_weighting: true,
        }
    }
}

impl HyperParams {
    /// The learning rates, batch sizes and epoch counts explored for the
    /// published tables.
    pub const LEARNING_RATES: [f64; 4] = [3e-4, 1e-4, 5e-5, 3e-5];
    pub const BATCH_SIZES: [usize; 2] = [32, 64];
    pub const EPOCHS: [usize; 3] = [5, 10, 15];
    /// (epochs, learning rate) columns of the cross-lingual tables.
    pub const TABLE_CELLS: [(usize, f64); 3] = [(5, 1e-4), (10, 3e-4), (15, 5e-5)];
    pub const WEIGHT_DECAYS: [f64; 2] = [0.0, 0.01];

    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    fn check(&self, allow_zero_lr: bool) -> Result<()> {
        let lr_ok = self.learning_rate.is_finite()
            && (self.learning_rate > 0.0 || (allow_zero_lr && self.learning_rate == 0.0));
        if !lr_ok {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be finite and non-negative".into()));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be positive".into()));
        }
        Ok(())
    }

    pub fn head_spec(&self, d_model: usize) -> HeadSpec {
        HeadSpec {
            d_model,
            d_hidden: self.d_hidden,
            dropout_p: self.dropout_p,
            extra_dense: self.extra_dense,
            use_dropout: self.use_dropout,
        }
    }

    /// Table column label, e.g. `10 epochs, 3e-4`.
    pub fn variant_label(&self) -> String {
        format!("{} epochs, {:e}", self.epochs, self.learning_rate)
    }
}

/// Train order reshuffled every epoch, validation order fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Samplers {
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
}

pub fn make_samplers(n_train: usize, n_val: usize, seed: u64) -> Result<Samplers> {
    if n_train == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    Ok(Samplers { n_train, n_val, seed })
}

impl Samplers {
    /// Fresh shuffle seeded with `seed ^ epoch`.
    pub fn train_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_train).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ epoch as u64);
        order.shuffle(&mut rng);
        order
    }

    pub fn val_order(&self) -> Vec<usize> {
        (0..self.n_val).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: HeadParams,
    pub v: HeadParams,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &HeadParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
        }
    }
}

fn same_shape(a: &HeadParams, b: &HeadParams) -> bool {
    let (ta, tb) = (a.tensors(), b.tensors());
    ta.len() == tb.len() && ta.iter().zip(&tb).all(|((_, x), (_, y))| x.len() == y.len())
}

fn adaptive_step(
    params: &mut HeadParams,
    grads: &HeadParams,
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !same_shape(params, grads) || !same_shape(params, &state.m) {
        return Err(Error::Config("optimizer shapes do not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let grads = grads.tensors();
    let mut ms = state.m.tensors_mut();
    let mut vs = state.v.tensors_mut();
    for (k, theta) in params.tensors_mut().into_iter().enumerate() {
        let g = grads[k].1;
        let (m, v) = (&mut *ms[k], &mut *vs[k]);
        for i in 0..theta.len() {
            if weight_decay != 0.0 {
                theta[i] -= lr * weight_decay * theta[i];
            }
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut HeadParams, grads: &HeadParams, state: &mut OptimizerState, lr: f64) -> Result<()> {
    adaptive_step(params, grads, state, lr, 0.0)
}

/// Adam with decoupled weight decay `θ ← θ − lr·λ·θ` applied before the
/// adaptive update.
pub fn adamw_step(
    params: &mut HeadParams,
    grads: &HeadParams,
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    adaptive_step(params, grads, state, lr, weight_decay)
}

/// Features aligned with gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: FeatureMatrix,
    pub labels: Vec<Label>,
}

impl LabeledFeatures {
    pub fn new(features: FeatureMatrix, labels: Vec<Label>) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows for {} labels",
                features.n_rows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Result of one [`train`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub spec: HeadSpec,
    pub initial: HeadParams,
    pub params: HeadParams,
    /// Mean batch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Full validation loss per epoch (empty without a validation set).
    pub val_loss: Vec<f64>,
    /// Global gradient norm of every step, before and after clipping.
    pub grad_norms: Vec<(f64, f64)>,
    pub seconds: f64,
}

/// Trains a freshly initialized head on frozen features.
///
/// Each epoch shuffles, batches, runs TRAIN-mode forwards with seeded
/// dropout, takes analytic gradients of the weighted loss, clips them to
/// global norm [`CLIP_NORM`] and applies the configured optimizer. The
/// whole run is a pure function of `(hyperparams, data)`. A learning rate
/// of 0 is accepted here and leaves the head at its initialization.
pub fn train(
    train_set: &LabeledFeatures,
    val_set: Option<&LabeledFeatures>,
    weights: Option<ClassWeights>,
    hp: &HyperParams,
) -> Result<Trained> {
    hp.check(true)?;
    let started = Instant::now();
    let spec = hp.head_spec(train_set.features.d_model());
    let weights = weights.unwrap_or(ClassWeights::UNIT);
    let samplers = make_samplers(train_set.len(), val_set.map_or(0, LabeledFeatures::len), hp.seed)?;

    let initial = init_head(&spec, hp.seed)?;
    let mut params = initial.clone();
    let mut state = OptimizerState::new(&params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(hp.seed);
    dropout_rng.set_stream(1);

    let rows: Vec<Vec<f64>> = (0..train_set.len()).map(|i| train_set.features.row_f64(i)).collect();
    let mut train_loss = Vec::with_capacity(hp.epochs);
    let mut val_loss = Vec::with_capacity(hp.epochs);
    let mut grad_norms = Vec::new();

    for epoch in 0..hp.epochs {
        let order = samplers.train_order(epoch);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_id, chunk) in order.chunks(hp.batch_size).enumerate() {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| rows[i].as_slice()).collect();
            let gold: Vec<Label> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let masks: Option<Vec<Vec<bool>>> = spec.dropout_active().then(|| {
                chunk
                    .iter()
                    .map(|_| sample_dropout_mask(&mut dropout_rng, spec.d_hidden, spec.dropout_p))
                    .collect()
            });
            let context = |e: Error| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {batch_id}: {m}")),
                other => other,
            };
            let (loss, mut grad) =
                head_gradients(&xs, &gold, &params, &spec, &weights, masks.as_deref()).map_err(context)?;
            let norm = grad.global_norm();
            if norm > CLIP_NORM {
                grad.scale(CLIP_NORM / norm);
            }
            grad_norms.push((norm, grad.global_norm()));
            match hp.optimizer {
                OptimizerKind::Adam => adam_step(&mut params, &grad, &mut state, hp.learning_rate),
                OptimizerKind::Adamw => adamw_step(&mut params, &grad, &mut state, hp.learning_rate, hp.weight_decay),
            }
            .map_err(context)?;
            epoch_loss += loss;
            n_batches += 1;
        }
        train_loss.push(epoch_loss / n_batches as f64);
        if let Some(val) = val_set.filter(|v| !v.is_empty()) {
            val_loss.push(validation_loss(&params, &spec, val, &samplers, &weights)?);
        }
    }
    Ok(Trained {
        spec,
        initial,
        params,
        train_loss,
        val_loss,
        grad_norms,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn validation_loss(
    params: &HeadParams,
    spec: &HeadSpec,
    val: &LabeledFeatures,
    samplers: &Samplers,
    weights: &ClassWeights,
) -> Result<f64> {
    let mut probs = Vec::with_capacity(val.len());
    let mut gold = Vec::with_capacity(val.len());
    for i in samplers.val_order() {
        let f = head_forward(&val.features.row_f64(i), params, spec, Mode::Eval, None)?;
        probs.push(f.probs);
        gold.push(val.labels[i]);
    }
    weighted_cross_entropy(&probs, &gold, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub run_id: String,
    pub hyperparams: HyperParams,
    pub backbone_id: String,
    pub language_pair: LanguagePair,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub max_post_clip_norm: f64,
    pub initial_head_digest: String,
    pub head_digest: String,
    pub wall_clock_seconds: f64,
}

impl TrainRun {
    pub fn new(cell: &GridCell, trained: &Trained) -> Self {
        Self {
            run_id: cell.run_id.clone(),
            hyperparams: cell.hyperparams.clone(),
            backbone_id: cell.backbone_id.clone(),
            language_pair: cell.language_pair(),
            train_loss: trained.train_loss.clone(),
            val_loss: trained.val_loss.clone(),
            max_post_clip_norm: trained.grad_norms.iter().map(|n| n.1).fold(0.0, f64::max),
            initial_head_digest: head_digest(&trained.initial, &trained.spec),
            head_digest: head_digest(&trained.params, &trained.spec),
            wall_clock_seconds: trained.seconds,
        }
    }
}

/// One grid cell: a backbone, a language pair and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub run_id: String,
    pub backbone_id: String,
    pub train_lang: Language,
    pub test_lang: Language,
    #[serde(default)]
    pub variant: Option<String>,
    pub hyperparams: HyperParams,
}

impl GridCell {
    pub fn language_pair(&self) -> LanguagePair {
        LanguagePair::new(self.train_lang, self.test_lang)
    }

    pub fn variant_label(&self) -> String {
        self.variant.clone().unwrap_or_else(|| self.hyperparams.variant_label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cells: Vec<GridCell>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("grid has no cells".into()));
        }
        let mut ids = HashSet::new();
        for c in &self.cells {
            if !ids.insert(c.run_id.as_str()) {
                return Err(Error::Config(format!("duplicate run id {}", c.run_id)));
            }
            c.hyperparams.validate()?;
        }
        Ok(())
    }

    /// Backbones × the three (epochs, learning rate) table columns for one
    /// language pair, sharing `base` for everything else.
    pub fn table_grid(backbones: &[&str], pair: LanguagePair, base: &HyperParams) -> GridSpec {
        let mut cells = Vec::new();
        for backbone in backbones {
            for (epochs, lr) in HyperParams::TABLE_CELLS {
                let hyperparams = HyperParams {
                    epochs,
                    learning_rate: lr,
                    ..base.clone()
                };
                cells.push(GridCell {
                    run_id: format!("{backbone}_{}{}_e{epochs}_lr{lr:e}", pair.train, pair.test),
                    backbone_id: backbone.to_string(),
                    train_lang: pair.train,
                    test_lang: pair.test,
                    variant: Some(hyperparams.variant_label()),
                    hyperparams,
                });
            }
        }
        GridSpec { cells }
    }
}

/// Data a grid cell trains and evaluates on.
#[derive(Debug, Clone)]
pub struct CellData {
    pub train: LabeledFeatures,
    pub val: Option<LabeledFeatures>,
    pub test: LabeledFeatures,
    pub weights: Option<ClassWeights>,
    pub inputs: RunInputs,
}

impl CellData {
    /// Encodes the three corpora with `encoder`. Class weights come from the
    /// training labels and are absent when a class is missing there.
    pub fn from_corpora<E: Encoder + ?Sized>(
        train: &Corpus,
        val: Option<&Corpus>,
        test: &Corpus,
        encoder: &E,
        inputs: RunInputs,
    ) -> Result<Self> {
        Self::with_features(train, val, test, |c| build_feature_cache(c, encoder), inputs)
    }

    /// As [`CellData::from_corpora`], with features supplied by `features`
    /// (e.g. read through a feature cache).
    pub fn with_features<F>(
        train: &Corpus,
        val: Option<&Corpus>,
        test: &Corpus,
        features: F,
        mut inputs: RunInputs,
    ) -> Result<Self>
    where
        F: Fn(&Corpus) -> Result<FeatureMatrix>,
    {
        let encode = |c: &Corpus| LabeledFeatures::new(features(c)?, c.labels());
        let stats = compute_stats(train, &WhitespaceTokenizer::default());
        let train_set = encode(train)?;
        inputs.train_digest = train.digest();
        inputs.val_digest = val.map(Corpus::digest).unwrap_or_default();
        inputs.test_digest = test.digest();
        inputs.feature_fingerprint = train_set.features.fingerprint_hex();
        Ok(Self {
            train: train_set,
            val: val.map(encode).transpose()?,
            test: encode(test)?,
            weights: compute_class_weights(&stats).ok(),
            inputs,
        })
    }
}

/// Train, validation and test corpora for a language pair: the training
/// language's corpus is split, and a same-language pair is tested on the
/// validation part.
pub fn split_for_pair(
    train_lang: &Corpus,
    other: Option<&Corpus>,
    split: &SplitSpec,
) -> Result<(Corpus, Corpus, Corpus)> {
    let (train, val) = split_train_val(train_lang, split)?;
    let test = match other {
        Some(c) => c.clone(),
        None => val.clone(),
    };
    Ok((train, val, test))
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub run_id: String,
    pub result: std::result::Result<(TrainRun, EvalReport), String>,
}

/// Trains and evaluates one cell, writing its run directory when `runs_dir`
/// is given.
pub fn run_cell(
    cell: &GridCell,
    data: &CellData,
    runs_dir: Option<&Path>,
    overwrite: bool,
) -> Result<(TrainRun, EvalReport)> {
    cell.hyperparams.validate()?;
    if let Some(dir) = runs_dir {
        ensure_writable(&dir.join(&cell.run_id), overwrite)?;
    }
    let weights = match (cell.hyperparams.class_weighting, data.weights) {
        (false, _) => None,
        (true, Some(w)) => Some(w),
        (true, None) => {
            return Err(Error::Config(
                "class weighting needs both classes in the training set".into(),
            ));
        }
    };
    let trained = train(&data.train, data.val.as_ref(), weights, &cell.hyperparams)?;
    let run = TrainRun::new(cell, &trained);
    let report = evaluate(
        &trained.params,
        &trained.spec,
        &data.test.features,
        &data.test.labels,
        cell.language_pair(),
        &cell.run_id,
    )?
    .with_labels(&cell.backbone_id, &cell.variant_label());
    if let Some(dir) = runs_dir {
        write_run(
            &dir.join(&cell.run_id),
            &RunArtifacts {
                cell,
                data,
                trained: &trained,
                run: &run,
                report: &report,
            },
            overwrite,
        )?;
    }
    Ok((run, report))
}

/// Runs every cell independently on a pool of `jobs` workers. A failing
/// cell is recorded and the others still run; outcomes keep cell order.
pub fn run_grid<F>(
    grid: &GridSpec,
    data: F,
    jobs: usize,
    runs_dir: Option<&Path>,
    overwrite: bool,
) -> Result<Vec<CellOutcome>>
where
    F: Fn(&GridCell) -> Result<Arc<CellData>> + Sync,
{
    grid.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        use rayon::prelude::*;
        grid.cells
            .par_iter()
            .map(|cell| {
                let result = data(cell)
                    .and_then(|d| run_cell(cell, &d, runs_dir, overwrite))
                    .map_err(|e| {
                        log::error!("cell {} failed: {e}", cell.run_id);
                        e.to_string()
                    });
                CellOutcome {
                    run_id: cell.run_id.clone(),
                    result,
                }
            })
            .collect()
    });
    if let Some(dir) = runs_dir {
        let statuses: Vec<RunStatus> = outcomes.iter().map(RunStatus::from_outcome).collect();
        crate::runs::write_grid_manifest(dir, grid, &statuses, overwrite)?;
    }
    Ok(outcomes)
}
