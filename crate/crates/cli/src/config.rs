//! Experiment configuration assembled from three layers: built-in defaults,
//! a flat `key = value` config file, and command-line flags, with later
//! layers overriding earlier ones.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use recaudit_core::audit::{DistanceKind, MetricKind};
use recaudit_core::optim::OptimizerKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {0} is not 'key = value'")]
    BadLine(usize),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}'")]
    BadValue { key: &'static str, value: String },
    #[error("missing required setting '{0}'")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ReachSweep,
    StabSweep,
    BetaSweep,
    OptimizerCompare,
    GroupReach,
    GroupStab,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ReachSweep => "reach-sweep",
            ExperimentKind::StabSweep => "stab-sweep",
            ExperimentKind::BetaSweep => "beta-sweep",
            ExperimentKind::OptimizerCompare => "optimizer-compare",
            ExperimentKind::GroupReach => "group-reach",
            ExperimentKind::GroupStab => "group-stab",
        }
    }

    fn default_metric(&self) -> MetricKind {
        match self {
            ExperimentKind::ReachSweep => MetricKind::PastReach,
            ExperimentKind::StabSweep => MetricKind::PastStab,
            ExperimentKind::BetaSweep => MetricKind::PastStab,
            ExperimentKind::OptimizerCompare => MetricKind::PastStab,
            ExperimentKind::GroupReach => MetricKind::FutureReach,
            ExperimentKind::GroupStab => MetricKind::FutureStab,
        }
    }

    fn accepts(&self, metric: MetricKind) -> bool {
        match self {
            ExperimentKind::ReachSweep | ExperimentKind::GroupReach => metric.is_reach(),
            ExperimentKind::StabSweep | ExperimentKind::BetaSweep | ExperimentKind::GroupStab => {
                !metric.is_reach()
            }
            ExperimentKind::OptimizerCompare => true,
        }
    }
}

pub fn parse_metric(s: &str) -> Result<MetricKind, ConfigError> {
    match s {
        "past-reach" => Ok(MetricKind::PastReach),
        "future-reach" => Ok(MetricKind::FutureReach),
        "past-stab" => Ok(MetricKind::PastStab),
        "future-stab" => Ok(MetricKind::FutureStab),
        other => Err(ConfigError::BadValue {
            key: "metric",
            value: other.into(),
        }),
    }
}

pub fn parse_optimizer(s: &str) -> Result<OptimizerKind, ConfigError> {
    match s {
        "gd" => Ok(OptimizerKind::GradientAscent),
        "zo" => Ok(OptimizerKind::ZerothOrder),
        "oracle" => Ok(OptimizerKind::ExtremeOracle),
        other => Err(ConfigError::BadValue {
            key: "optimizer",
            value: other.into(),
        }),
    }
}

pub fn parse_distance(s: &str) -> Result<DistanceKind, ConfigError> {
    match s {
        "l2" => Ok(DistanceKind::L2),
        "hellinger" => Ok(DistanceKind::Hellinger),
        other => Err(ConfigError::BadValue {
            key: "distance",
            value: other.into(),
        }),
    }
}

/// One layer of settings; `None` means "not set here". The config file and
/// the command line both produce one of these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawSettings {
    pub data: Option<PathBuf>,
    pub metric: Option<String>,
    pub k: Option<Vec<usize>>,
    pub beta: Option<Vec<f64>>,
    pub optimizer: Option<String>,
    pub distance: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub eps: Option<f64>,
    pub num_z: Option<usize>,
    pub user_frac: Option<f64>,
    pub item_frac: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dim: Option<usize>,
    pub mf_epochs: Option<usize>,
    pub mf_lambda: Option<f64>,
    pub model_cache: Option<PathBuf>,
}

fn parse_one<T: FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key,
        value: value.into(),
    })
}

fn parse_list<T: FromStr>(key: &'static str, value: &str) -> Result<Vec<T>, ConfigError> {
    value.split(',').map(|part| parse_one(key, part)).collect()
}

impl RawSettings {
    /// Parses the flat config-file format: one `key = value` per line, `#`
    /// comments, keys named exactly like the long flags without `--`.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_str_lines(&text)
    }

    pub fn from_str_lines(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(idx + 1))?;
            entries.insert(key.trim().to_owned(), value.trim().to_owned());
        }
        let mut s = RawSettings::default();
        for (key, value) in entries {
            match key.as_str() {
                "data" => s.data = Some(PathBuf::from(value)),
                "metric" => s.metric = Some(value),
                "k" => s.k = Some(parse_list("k", &value)?),
                "beta" => s.beta = Some(parse_list("beta", &value)?),
                "optimizer" => s.optimizer = Some(value),
                "distance" => s.distance = Some(value),
                "epochs" => s.epochs = Some(parse_one("epochs", &value)?),
                "lr" => s.lr = Some(parse_one("lr", &value)?),
                "eps" => s.eps = Some(parse_one("eps", &value)?),
                "num-z" => s.num_z = Some(parse_one("num-z", &value)?),
                "user-frac" => s.user_frac = Some(parse_one("user-frac", &value)?),
                "item-frac" => s.item_frac = Some(parse_one("item-frac", &value)?),
                "seed" => s.seed = Some(parse_one("seed", &value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "dim" => s.dim = Some(parse_one("dim", &value)?),
                "mf-epochs" => s.mf_epochs = Some(parse_one("mf-epochs", &value)?),
                "mf-lambda" => s.mf_lambda = Some(parse_one("mf-lambda", &value)?),
                "model-cache" => s.model_cache = Some(PathBuf::from(value)),
                other => return Err(ConfigError::UnknownKey(other.into())),
            }
        }
        Ok(s)
    }

    /// Field-wise overlay: values in `self` win over `base`.
    pub fn merged_over(self, base: RawSettings) -> RawSettings {
        RawSettings {
            data: self.data.or(base.data),
            metric: self.metric.or(base.metric),
            k: self.k.or(base.k),
            beta: self.beta.or(base.beta),
            optimizer: self.optimizer.or(base.optimizer),
            distance: self.distance.or(base.distance),
            epochs: self.epochs.or(base.epochs),
            lr: self.lr.or(base.lr),
            eps: self.eps.or(base.eps),
            num_z: self.num_z.or(base.num_z),
            user_frac: self.user_frac.or(base.user_frac),
            item_frac: self.item_frac.or(base.item_frac),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            dim: self.dim.or(base.dim),
            mf_epochs: self.mf_epochs.or(base.mf_epochs),
            mf_lambda: self.mf_lambda.or(base.mf_lambda),
            model_cache: self.model_cache.or(base.model_cache),
        }
    }
}

/// Fully resolved experiment request. `mf_lambda` doubles as the audit-time
/// refit ridge so counterfactual refits solve the same regularized system
/// the training did.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub data: PathBuf,
    pub metric: MetricKind,
    pub k_list: Vec<usize>,
    pub beta_list: Vec<f64>,
    pub optimizer: OptimizerKind,
    pub distance: DistanceKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub eps: f64,
    pub num_z: usize,
    pub user_frac: f64,
    pub item_frac: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub dim: usize,
    pub mf_epochs: usize,
    pub mf_lambda: f64,
    pub model_cache: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn resolve(
        experiment: ExperimentKind,
        flags: RawSettings,
        file: RawSettings,
    ) -> Result<Self, ConfigError> {
        let s = flags.merged_over(file);
        let metric = match &s.metric {
            Some(m) => parse_metric(m)?,
            None => experiment.default_metric(),
        };
        let cfg = ExperimentConfig {
            experiment,
            data: s.data.ok_or(ConfigError::Missing("data"))?,
            metric,
            k_list: s.k.unwrap_or_else(|| vec![1]),
            beta_list: s.beta.unwrap_or_else(|| vec![1.0]),
            optimizer: match &s.optimizer {
                Some(o) => parse_optimizer(o)?,
                None => OptimizerKind::GradientAscent,
            },
            distance: match &s.distance {
                Some(d) => parse_distance(d)?,
                None => DistanceKind::L2,
            },
            epochs: s.epochs.unwrap_or(50),
            // Future tables are sparse in effective coordinates, so they
            // take a larger default step than the dense past vectors.
            learning_rate: s.lr.unwrap_or(if metric.is_past() { 0.5 } else { 5.0 }),
            eps: s.eps.unwrap_or(1e-3),
            num_z: s.num_z.unwrap_or(16),
            user_frac: s.user_frac.unwrap_or(0.1),
            item_frac: s.item_frac.unwrap_or(0.1),
            seed: s.seed.unwrap_or(0),
            out: s.out.unwrap_or_else(|| PathBuf::from("out")),
            dim: s.dim.unwrap_or(16),
            mf_epochs: s.mf_epochs.unwrap_or(20),
            mf_lambda: s.mf_lambda.unwrap_or(0.1),
            model_cache: s.model_cache,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        fn fail(msg: String) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid(msg))
        }
        if self.k_list.is_empty() {
            return fail("k list must be non-empty".into());
        }
        if self.k_list.contains(&0) {
            return fail("every k must be at least 1".into());
        }
        if self.beta_list.is_empty() {
            return fail("beta list must be non-empty".into());
        }
        if self.beta_list.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return fail("every beta must be finite and > 0".into());
        }
        for (name, frac) in [("user-frac", self.user_frac), ("item-frac", self.item_frac)] {
            if !(frac > 0.0 && frac <= 1.0) {
                return fail(format!("{name} must lie in (0, 1], got {frac}"));
            }
        }
        if self.epochs == 0 || self.mf_epochs == 0 {
            return fail("epochs and mf-epochs must be at least 1".into());
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("lr must be finite and > 0".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return fail("eps must be finite and > 0".into());
        }
        if self.num_z == 0 {
            return fail("num-z must be at least 1".into());
        }
        if !(self.mf_lambda > 0.0 && self.mf_lambda.is_finite()) {
            return fail("mf-lambda must be finite and > 0".into());
        }
        if !self.experiment.accepts(self.metric) {
            return fail(format!(
                "experiment {} does not support metric {}",
                self.experiment.name(),
                self.metric.name()
            ));
        }
        if self.optimizer == OptimizerKind::ExtremeOracle && self.metric != MetricKind::PastStab {
            return fail("the corner oracle applies to past stability only".into());
        }
        Ok(())
    }
}
