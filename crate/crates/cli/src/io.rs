//! Dataset files and the trained-model cache.
//!
//! Models are cached per training scope and config under a name that also
//! fingerprints the training data's shape, so switching datasets or
//! hyperparameters in the same cache directory retrains instead of serving
//! a stale model. A cache entry that fails to load or does not match is
//! retrained and overwritten with a note on stderr.

use std::path::{Path, PathBuf};

use recaudit_core::dataset::{parse_movielens, Dataset, ParseError};
use recaudit_core::mf::{train_mf, MfConfig, MfError, MfModel};
use thiserror::Error;

use crate::checkpoint::{load_model, save_model, CheckpointError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] MfError),
}

impl IoError {
    /// Process exit code class: 2 for data problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Train(_) => 3,
            _ => 2,
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_movielens(&text).map_err(|source| IoError::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// What a model was trained on: the whole dataset, or the train side of the
/// leave-last-k split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelScope {
    Full,
    SplitK(usize),
}

impl ModelScope {
    pub fn tag(&self) -> String {
        match self {
            ModelScope::Full => "full".into(),
            ModelScope::SplitK(k) => format!("k{k}"),
        }
    }
}

fn cache_path(dir: &Path, train: &Dataset, cfg: &MfConfig, scope: &ModelScope) -> PathBuf {
    dir.join(format!(
        "mf-{}-u{}i{}n{}-d{}-e{}-r{}-s{}.ckpt",
        scope.tag(),
        train.n_users(),
        train.n_items(),
        train.n_interactions(),
        cfg.dim,
        cfg.epochs,
        cfg.reg,
        cfg.seed,
    ))
}

/// Trains a model, or loads it from `cache_dir` when a matching checkpoint
/// exists there; fresh models are saved back into the cache.
pub fn train_or_load(
    train: &Dataset,
    cfg: &MfConfig,
    scope: &ModelScope,
    cache_dir: Option<&Path>,
) -> Result<MfModel, IoError> {
    let cached = cache_dir.map(|dir| cache_path(dir, train, cfg, scope));
    if let Some(path) = &cached {
        if path.exists() {
            match load_model(path) {
                Ok((model, tag)) if tag == scope.tag() && model.config == *cfg => {
                    return Ok(model)
                }
                Ok(_) => eprintln!(
                    "cache entry {} does not match the requested model; retraining",
                    path.display()
                ),
                Err(e) => eprintln!(
                    "cache entry {} is unreadable ({e}); retraining",
                    path.display()
                ),
            }
        }
    }
    let model = train_mf(train, cfg)?;
    if let Some(path) = &cached {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| IoError::Write {
                path: dir.display().to_string(),
                source,
            })?;
        }
        save_model(&model, &scope.tag(), path)?;
    }
    Ok(model)
}
