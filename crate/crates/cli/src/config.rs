use std::path::{Path, PathBuf};

use serde::Deserialize;
use xhate::corpus::SplitSpec;
use xhate::training::HyperParams;
use xhate::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub lexicon_dir: Option<PathBuf>,
    /// Root of exported backbone adapter directories.
    pub adapters_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderDefaults {
    pub seed: u64,
}

/// Contents of the `--config` JSON file. Every field is optional and any
/// command-line flag takes precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub paths: Paths,
    pub hyperparams: HyperParams,
    pub encoder: EncoderDefaults,
    pub split: SplitSpec,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: CliConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.hyperparams.validate()?;
        // directories that are only read must already exist
        for (name, dir) in [
            ("lexicon_dir", &config.paths.lexicon_dir),
            ("adapters_dir", &config.paths.adapters_dir),
        ] {
            if let Some(dir) = dir.as_ref().filter(|d| !d.is_dir()) {
                return Err(Error::Config(format!("{name} {} is not a directory", dir.display())));
            }
        }
        Ok(config)
    }

    pub fn data_dir(&self, flag: Option<&Path>) -> PathBuf {
        pick(flag, &self.paths.data_dir, "data")
    }

    pub fn runs_dir(&self, flag: Option<&Path>) -> PathBuf {
        pick(flag, &self.paths.runs_dir, "runs")
    }

    pub fn cache_dir(&self, flag: Option<&Path>) -> PathBuf {
        pick(flag, &self.paths.cache_dir, ".xhate-cache")
    }
}

fn pick(flag: Option<&Path>, configured: &Option<PathBuf>, fallback: &str) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| configured.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}
