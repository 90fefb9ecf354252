//! Experiment sweeps: sample audit pairs, run every audit in parallel, and
//! emit deterministic result rows.
//!
//! One master seed drives everything. Pair sampling draws from the seed's
//! default stream; the audit at flat index `i` over `(k, beta, pair)` takes
//! its optimizer seed from stream `i + 1`. Arms of a comparison therefore
//! share per-pair seeds, and a rerun of the same config reproduces every
//! row. Rows keep job order, not completion order, and carry `wall_ms = 0`;
//! real timing goes to stderr so reruns stay byte-identical.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use recaudit_core::audit::{run_audit, AuditData, AuditError, AuditSpec};
use recaudit_core::dataset::{DataError, Dataset, HoldoutSplit};
use recaudit_core::mf::{MfConfig, MfModel};
use recaudit_core::optim::{OptimizerConfig, OptimizerKind};
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::csv_out::ResultRow;
use crate::io::{train_or_load, IoError, ModelScope};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Split(#[from] DataError),
    #[error("{experiment} cannot run on this dataset: {reason}")]
    Unsupported {
        experiment: &'static str,
        reason: String,
    },
    #[error("audit of user {user} against {counterpart} failed: {source}")]
    Audit {
        user: u32,
        counterpart: u32,
        source: AuditError,
    },
}

impl HarnessError {
    /// Process exit code class: 2 for data problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(e) => e.exit_code(),
            HarnessError::Split(_) | HarnessError::Unsupported { .. } => 2,
            HarnessError::Audit { .. } => 3,
        }
    }
}

pub struct RunReport {
    pub rows: Vec<ResultRow>,
    /// One line per infeasible pair, in job order.
    pub skips: Vec<String>,
    pub wall_ms: u128,
}

/// One optimizer-and-pair-set lane of an experiment; its label becomes the
/// `experiment` column of every row it produces.
struct Arm {
    label: String,
    optimizer: OptimizerKind,
    pairs: Vec<(u32, u32)>,
}

struct Job {
    arm: usize,
    k: usize,
    beta: f64,
    user: u32,
    counterpart: u32,
    seed: u64,
}

struct Models {
    per_k: BTreeMap<usize, (HoldoutSplit, MfModel)>,
    full: Option<MfModel>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let dataset = crate::io::load_dataset(&cfg.data)?;
    run_on_dataset(cfg, &dataset)
}

pub fn run_on_dataset(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<RunReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arms = plan_arms(cfg, dataset, &mut rng)?;
    let models = build_models(cfg, dataset)?;
    let jobs = build_jobs(cfg, &arms);

    let started = Instant::now();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|job| run_one(cfg, &arms, &models, dataset, job))
        .collect::<Result<_, _>>()?;
    let wall_ms = started.elapsed().as_millis();

    let mut rows = Vec::new();
    let mut skips = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Row(row) => rows.push(row),
            Outcome::Skip(reason) => skips.push(reason),
        }
    }
    Ok(RunReport {
        rows,
        skips,
        wall_ms,
    })
}

// ---- pair planning --------------------------------------------------------

fn sample_n(ids: &[u32], n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut picked: Vec<u32> = rand::seq::index::sample(rng, ids.len(), n)
        .iter()
        .map(|i| ids[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn sample_frac(ids: &[u32], frac: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = ((ids.len() as f64) * frac).round() as usize;
    sample_n(ids, n.clamp(1, ids.len()), rng)
}

fn cross(users: &[u32], counterparts: &[u32]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::with_capacity(users.len() * counterparts.len());
    for &u in users {
        for &c in counterparts {
            pairs.push((u, c));
        }
    }
    pairs
}

fn reach_pairs(cfg: &ExperimentConfig, ds: &Dataset, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let users = sample_frac(ds.user_ids(), cfg.user_frac, rng);
    let items = sample_frac(ds.item_ids(), cfg.item_frac, rng);
    cross(&users, &items)
}

fn stab_pairs(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(u32, u32)>, HarnessError> {
    let sampled = sample_frac(ds.user_ids(), cfg.user_frac, rng);
    if sampled.len() < 2 {
        return Err(HarnessError::Unsupported {
            experiment: cfg.experiment.name(),
            reason: format!(
                "stability pairs need at least 2 sampled users, got {}",
                sampled.len()
            ),
        });
    }
    // Sampled users split into the audited half and the adversary half, so
    // no pair can be a self-pair.
    let (audited, adversaries) = sampled.split_at(sampled.len() / 2);
    Ok(cross(audited, adversaries))
}

/// Top 30 of a ranking vs 30 sampled uniformly from ranks 200 through 300.
fn rank_bands(
    ranked: &[u32],
    what: &'static str,
    experiment: &'static str,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<u32>, Vec<u32>), HarnessError> {
    if ranked.len() < 300 {
        return Err(HarnessError::Unsupported {
            experiment,
            reason: format!("need at least 300 ranked {what}, found {}", ranked.len()),
        });
    }
    let top = ranked[..30].to_vec();
    let intermediate = sample_n(&ranked[199..300], 30, rng);
    Ok((top, intermediate))
}

fn plan_arms(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Arm>, HarnessError> {
    let name = cfg.experiment.name();
    match cfg.experiment {
        ExperimentKind::ReachSweep => Ok(vec![Arm {
            label: name.into(),
            optimizer: cfg.optimizer,
            pairs: reach_pairs(cfg, ds, rng),
        }]),
        ExperimentKind::StabSweep | ExperimentKind::BetaSweep => Ok(vec![Arm {
            label: name.into(),
            optimizer: cfg.optimizer,
            pairs: stab_pairs(cfg, ds, rng)?,
        }]),
        ExperimentKind::OptimizerCompare => {
            let pairs = if cfg.metric.is_reach() {
                reach_pairs(cfg, ds, rng)
            } else {
                stab_pairs(cfg, ds, rng)?
            };
            let mut kinds = vec![
                ("gd", OptimizerKind::GradientAscent),
                ("zo", OptimizerKind::ZerothOrder),
            ];
            if cfg.metric == recaudit_core::audit::MetricKind::PastStab {
                kinds.push(("oracle", OptimizerKind::ExtremeOracle));
            }
            Ok(kinds
                .into_iter()
                .map(|(tag, optimizer)| Arm {
                    label: format!("{name}:{tag}"),
                    optimizer,
                    pairs: pairs.clone(),
                })
                .collect())
        }
        ExperimentKind::GroupReach => {
            let (popular, intermediate) = rank_bands(&ds.popularity_rank(), "items", name, rng)?;
            let users = sample_frac(ds.user_ids(), cfg.user_frac, rng);
            Ok(vec![
                Arm {
                    label: format!("{name}:popular"),
                    optimizer: cfg.optimizer,
                    pairs: cross(&users, &popular),
                },
                Arm {
                    label: format!("{name}:intermediate"),
                    optimizer: cfg.optimizer,
                    pairs: cross(&users, &intermediate),
                },
            ])
        }
        ExperimentKind::GroupStab => {
            let (active, intermediate) = rank_bands(&ds.activity_rank(), "users", name, rng)?;
            let audited = sample_frac(ds.user_ids(), cfg.user_frac, rng);
            let no_self = |advs: &[u32]| {
                cross(&audited, advs)
                    .into_iter()
                    .filter(|(u, a)| u != a)
                    .collect()
            };
            Ok(vec![
                Arm {
                    label: format!("{name}:active"),
                    optimizer: cfg.optimizer,
                    pairs: no_self(&active),
                },
                Arm {
                    label: format!("{name}:intermediate"),
                    optimizer: cfg.optimizer,
                    pairs: no_self(&intermediate),
                },
            ])
        }
    }
}

// ---- models and jobs -------------------------------------------------------

fn build_models(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Models, HarnessError> {
    let mf = MfConfig {
        dim: cfg.dim,
        reg: cfg.mf_lambda,
        epochs: cfg.mf_epochs,
        // The ALS trainer ignores it; carried into checkpoints.
        learning_rate: 0.005,
        seed: cfg.seed,
    };
    let cache = cfg.model_cache.as_deref();
    let mut models = Models {
        per_k: BTreeMap::new(),
        full: None,
    };
    if cfg.metric.is_past() {
        for &k in &cfg.k_list {
            if models.per_k.contains_key(&k) {
                continue;
            }
            let split = ds.holdout_split(k)?;
            let model = train_or_load(&split.train, &mf, &ModelScope::SplitK(k), cache)?;
            models.per_k.insert(k, (split, model));
        }
    } else {
        models.full = Some(train_or_load(ds, &mf, &ModelScope::Full, cache)?);
    }
    Ok(models)
}

fn build_jobs(cfg: &ExperimentConfig, arms: &[Arm]) -> Vec<Job> {
    let n_beta = cfg.beta_list.len();
    let max_pairs = arms.iter().map(|a| a.pairs.len()).max().unwrap_or(0);
    let mut jobs = Vec::new();
    for (ai, arm) in arms.iter().enumerate() {
        for (ki, &k) in cfg.k_list.iter().enumerate() {
            for (bi, &beta) in cfg.beta_list.iter().enumerate() {
                for (pi, &(user, counterpart)) in arm.pairs.iter().enumerate() {
                    // Stream index ignores the arm so compared arms draw the
                    // same seed for the same (k, beta, pair) cell.
                    let flat = (ki * n_beta + bi) * max_pairs + pi;
                    let mut sr = ChaCha8Rng::seed_from_u64(cfg.seed);
                    sr.set_stream(flat as u64 + 1);
                    jobs.push(Job {
                        arm: ai,
                        k,
                        beta,
                        user,
                        counterpart,
                        seed: sr.next_u64(),
                    });
                }
            }
        }
    }
    jobs
}

// ---- execution -------------------------------------------------------------

enum Outcome {
    Row(ResultRow),
    Skip(String),
}

/// Errors that describe the sampled pair rather than the run; sweeps skip
/// these and log the reason instead of failing.
fn is_pair_infeasible(e: &AuditError) -> bool {
    matches!(
        e,
        AuditError::TargetAlreadyRated { .. }
            | AuditError::HistoryTooShort { .. }
            | AuditError::EmptyCandidates(_)
            | AuditError::CandidatesExhausted { .. }
            | AuditError::UnknownUser(_)
            | AuditError::UnknownItem(_)
            | AuditError::SameUser(_)
    )
}

fn run_one(
    cfg: &ExperimentConfig,
    arms: &[Arm],
    models: &Models,
    ds: &Dataset,
    job: &Job,
) -> Result<Outcome, HarnessError> {
    let arm = &arms[job.arm];
    let spec = AuditSpec {
        metric: cfg.metric,
        user: job.user,
        counterpart: job.counterpart,
        k: job.k,
        beta: job.beta,
        distance: cfg.distance,
        num_samples: 1,
        ridge: cfg.mf_lambda,
        optimizer: OptimizerConfig {
            kind: arm.optimizer,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            lo: 1.0,
            hi: 5.0,
            eps: cfg.eps,
            num_z: cfg.num_z,
            monotone_accept: true,
            seed: job.seed,
        },
    };
    let (model, data) = if cfg.metric.is_past() {
        let (split, model) = &models.per_k[&job.k];
        (model, AuditData::with_split(ds, split))
    } else {
        let model = models.full.as_ref().expect("future metrics train the full model");
        (model, AuditData::full_only(ds))
    };
    match run_audit(&spec, model, &data) {
        Ok(res) => {
            let value = if cfg.metric.is_reach() {
                match res.lift {
                    Some(lift) => lift,
                    None => {
                        return Ok(Outcome::Skip(format!(
                            "{} k={} beta={} user {} vs {}: baseline probability \
                             underflowed, lift undefined",
                            arm.label, job.k, job.beta, job.user, job.counterpart
                        )))
                    }
                }
            } else {
                res.optimized
            };
            Ok(Outcome::Row(ResultRow {
                experiment: arm.label.clone(),
                metric: cfg.metric,
                k: job.k,
                beta: job.beta,
                user: job.user,
                counterpart: job.counterpart,
                baseline: res.baseline,
                optimized: res.optimized,
                lift_or_instability: value,
                epochs: res.meta.epochs,
                seed: job.seed,
                wall_ms: 0,
            }))
        }
        Err(e) if is_pair_infeasible(&e) => Ok(Outcome::Skip(format!(
            "{} k={} beta={} user {} vs {}: {e}",
            arm.label, job.k, job.beta, job.user, job.counterpart
        ))),
        Err(source) => Err(HarnessError::Audit {
            user: job.user,
            counterpart: job.counterpart,
            source,
        }),
    }
}
