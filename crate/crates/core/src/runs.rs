//! Run directories: manifest, loss history, head parameters and evaluation
//! report, plus the grid-level status manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::SplitSpec;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, LanguagePair};
use crate::model::{head_from_json, head_to_json, HeadParams, HeadSpec};
use crate::training::{CellOutcome, GridCell, GridSpec, HyperParams, TrainRun, Trained};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOSS_FILE: &str = "loss_history.json";
pub const HEAD_FILE: &str = "head_params.json";
pub const REPORT_FILE: &str = "eval_report.json";
pub const GRID_FILE: &str = "grid.json";
pub const GRID_MANIFEST_FILE: &str = "grid_manifest.json";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a run's data came from. Paths are optional so that in-memory runs
/// can still be written; digests are always present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    /// Prepared corpus of the training language, split into train/val.
    #[serde(default)]
    pub source_corpus: Option<PathBuf>,
    /// Prepared corpus of the test language when it differs.
    #[serde(default)]
    pub target_corpus: Option<PathBuf>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    pub train_digest: String,
    pub val_digest: String,
    pub test_digest: String,
    #[serde(default)]
    pub encoder_seed: u64,
    /// Hex fingerprint of the encoder that produced the features.
    pub feature_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigests {
    pub head_params: String,
    pub loss_history: String,
    pub eval_report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub complete: bool,
    pub backbone_id: String,
    pub language_pair: LanguagePair,
    pub variant: String,
    pub hyperparams: HyperParams,
    pub inputs: RunInputs,
    pub initial_head_digest: String,
    pub head_digest: String,
    pub artifacts: Option<ArtifactDigests>,
    pub toolkit_version: String,
    pub started_at: u64,
    pub finished_at: u64,
    pub train_seconds: f64,
}

impl RunManifest {
    /// The manifest with wall-clock fields zeroed, for comparing two
    /// executions of the same cell.
    pub fn without_timings(&self) -> RunManifest {
        RunManifest {
            started_at: 0,
            finished_at: 0,
            train_seconds: 0.0,
            ..self.clone()
        }
    }

    /// Grid cell that re-creates this run.
    pub fn cell(&self) -> GridCell {
        GridCell {
            run_id: self.run_id.clone(),
            backbone_id: self.backbone_id.clone(),
            train_lang: self.language_pair.train,
            test_lang: self.language_pair.test,
            variant: Some(self.variant.clone()),
            hyperparams: self.hyperparams.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// `[pre_clip, post_clip]` global gradient norm per step.
    pub grad_norms: Vec<[f64; 2]>,
}

pub struct RunArtifacts<'a> {
    pub cell: &'a GridCell,
    pub data: &'a crate::training::CellData,
    pub trained: &'a Trained,
    pub run: &'a TrainRun,
    pub report: &'a EvalReport,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_file(path: &Path, contents: &str) -> Result<String> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(contents.as_bytes()))
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Refuses to touch an existing artifact unless `overwrite` is set.
pub fn ensure_writable(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(Error::Usage(format!(
            "{} already exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    Ok(())
}

/// Writes the four run files. The manifest is written last and marked
/// complete only once every artifact digest is known.
pub fn write_run(dir: &Path, a: &RunArtifacts<'_>, overwrite: bool) -> Result<RunManifest> {
    ensure_writable(dir, overwrite)?;
    let started_at = now_secs();
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let history = LossHistory {
        train_loss: a.trained.train_loss.clone(),
        val_loss: a.trained.val_loss.clone(),
        grad_norms: a.trained.grad_norms.iter().map(|&(pre, post)| [pre, post]).collect(),
    };
    let artifacts = ArtifactDigests {
        head_params: write_file(&dir.join(HEAD_FILE), &head_to_json(&a.trained.params, &a.trained.spec))?,
        loss_history: write_file(&dir.join(LOSS_FILE), &pretty(&history)?)?,
        eval_report: write_file(&dir.join(REPORT_FILE), &a.report.to_json())?,
    };
    let manifest = RunManifest {
        run_id: a.cell.run_id.clone(),
        complete: true,
        backbone_id: a.cell.backbone_id.clone(),
        language_pair: a.cell.language_pair(),
        variant: a.cell.variant_label(),
        hyperparams: a.cell.hyperparams.clone(),
        inputs: a.data.inputs.clone(),
        initial_head_digest: a.run.initial_head_digest.clone(),
        head_digest: a.run.head_digest.clone(),
        artifacts: Some(artifacts),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        started_at,
        finished_at: now_secs(),
        train_seconds: a.run.wall_clock_seconds,
    };
    write_file(&dir.join(MANIFEST_FILE), &pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = if dir.is_dir() {
        dir.join(MANIFEST_FILE)
    } else {
        dir.to_path_buf()
    };
    Ok(serde_json::from_str(&read_to_string(&path)?)?)
}

/// A completed run read back from disk, with every artifact digest checked
/// against the manifest.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub params: HeadParams,
    pub spec: HeadSpec,
    pub report: EvalReport,
    pub history: LossHistory,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest = read_manifest(dir)?;
    let artifacts = match (&manifest.artifacts, manifest.complete) {
        (Some(a), true) => a.clone(),
        _ => return Err(Error::Data(format!("run {} is not complete", dir.display()))),
    };
    let checked = |name: &str, expected: &str| -> Result<String> {
        let text = read_to_string(&dir.join(name))?;
        let found = sha256_hex(text.as_bytes());
        if found != expected {
            return Err(Error::DigestMismatch {
                what: dir.join(name).display().to_string(),
                left: expected.to_string(),
                right: found,
            });
        }
        Ok(text)
    };
    let (params, spec) = head_from_json(&checked(HEAD_FILE, &artifacts.head_params)?)?;
    let history = serde_json::from_str(&checked(LOSS_FILE, &artifacts.loss_history)?)?;
    let report = serde_json::from_str(&checked(REPORT_FILE, &artifacts.eval_report)?)?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        params,
        spec,
        report,
        history,
    })
}

/// Completed run directories directly below `root`, sorted by name.
pub fn list_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_avg_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_digest: Option<String>,
}

impl RunStatus {
    pub fn from_outcome(o: &CellOutcome) -> Self {
        match &o.result {
            Ok((run, report)) => RunStatus {
                run_id: o.run_id.clone(),
                status: "complete".into(),
                error: None,
                macro_avg_f1: Some(report.macro_avg_f1),
                head_digest: Some(run.head_digest.clone()),
            },
            Err(e) => RunStatus {
                run_id: o.run_id.clone(),
                status: "failed".into(),
                error: Some(e.clone()),
                macro_avg_f1: None,
                head_digest: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub toolkit_version: String,
    pub cells: Vec<RunStatus>,
}

/// Writes `grid.json` (the cells as run) and `grid_manifest.json` (their
/// status) into `root`.
pub fn write_grid_manifest(root: &Path, grid: &GridSpec, statuses: &[RunStatus], overwrite: bool) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest_path = root.join(GRID_MANIFEST_FILE);
    ensure_writable(&manifest_path, overwrite)?;
    write_file(&root.join(GRID_FILE), &pretty(grid)?)?;
    let manifest = GridManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        cells: statuses.to_vec(),
    };
    write_file(&manifest_path, &pretty(&manifest)?)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridSpec> {
    let grid: GridSpec = serde_json::from_str(&read_to_string(path)?)?;
    grid.validate()?;
    Ok(grid)
}
