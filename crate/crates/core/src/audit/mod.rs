//! The four agency metrics and the driver that optimizes them.
//!
//! Reachability asks how large the recommendation probability of a target
//! item can get when the audited user chooses their own ratings; stability
//! asks how far one user's recommendation distribution can be dragged by
//! another user's ratings. Each comes in a past-editing variant (rewrite the
//! last `k` historical ratings, model trained with those held out) and a
//! future-acting variant (choose ratings for the next `k` recommendations,
//! model trained on everything).
//!
//! All four reduce to maximizing an [`Objective`] over ratings in `[1, 5]`;
//! [`run_audit`] builds the objective, picks the solver, and reports the
//! optimized value next to the do-nothing baseline.

mod reach;
mod stab;

pub use reach::{FutureReachObjective, PastReachObjective};
pub use stab::{EditedItemSpec, FutureStabObjective, PastStabObjective};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Dataset, HoldoutSplit};
use crate::mf::{MfError, MfModel};
use crate::optim::{
    analytic_gradient_fn, extreme_point_oracle, projected_gradient_ascent,
    zeroth_order_gradient_fn, Objective, OptimError, OptimizerConfig, OptimizerKind,
};
use crate::policy::{PolicyError, RecPolicy, RecommendationDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("invalid audit spec: {0}")]
    InvalidSpec(&'static str),
    #[error("user {0} is not in the model")]
    UnknownUser(u32),
    #[error("item {0} is not in the model")]
    UnknownItem(u32),
    #[error("user {user} has already rated target item {item}")]
    TargetAlreadyRated { user: u32, item: u32 },
    #[error("user {user} has no held-out tail of length {k}")]
    HistoryTooShort { user: u32, k: usize },
    #[error("user {0} has no unrated candidate items")]
    EmptyCandidates(u32),
    #[error("user {user} has only {available} candidates, fewer than horizon {k} needs")]
    CandidatesExhausted { user: u32, available: usize, k: usize },
    #[error("audited user and adversary are both {0}")]
    SameUser(u32),
    #[error("past metrics need a holdout split with matching horizon")]
    MissingHoldout,
    #[error("distributions cover different candidate sets")]
    DistanceSupportMismatch,
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Mf(#[from] MfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    PastReach,
    FutureReach,
    PastStab,
    FutureStab,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::PastReach => "past-reach",
            MetricKind::FutureReach => "future-reach",
            MetricKind::PastStab => "past-stab",
            MetricKind::FutureStab => "future-stab",
        }
    }

    pub fn is_reach(&self) -> bool {
        matches!(self, MetricKind::PastReach | MetricKind::FutureReach)
    }

    pub fn is_past(&self) -> bool {
        matches!(self, MetricKind::PastReach | MetricKind::PastStab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    L2,
    Hellinger,
}

impl DistanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::L2 => "l2",
            DistanceKind::Hellinger => "hellinger",
        }
    }
}

/// Decision variables of an audit.
///
/// Past metrics edit the last `k` historical ratings, one value per step.
/// Future metrics hold a `(timestep, item)` table: entry `(t, m)` is the
/// rating given if item `m` is recommended at step `t`, flattened row-major,
/// so only the entries along the realized recommendation path take effect.
#[derive(Debug, Clone, PartialEq)]
pub enum RatingParams {
    Past(Vec<f64>),
    Future {
        horizon: usize,
        n_items: usize,
        table: Vec<f64>,
    },
}

impl RatingParams {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            RatingParams::Past(v) => v,
            RatingParams::Future { table, .. } => table,
        }
    }
}

/// One audit request: who is audited, against what, and how to solve it.
///
/// For reachability `user` edits or acts and `counterpart` is the target
/// item id. For stability `user` is the observed user and `counterpart` the
/// adversary's user id. `ridge` regularizes the audit-time refits; it must
/// be positive so every refit system stays well-posed.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditSpec {
    pub metric: MetricKind,
    pub user: u32,
    pub counterpart: u32,
    pub k: usize,
    pub beta: f64,
    pub distance: DistanceKind,
    pub num_samples: usize,
    pub ridge: f64,
    pub optimizer: OptimizerConfig,
}

impl AuditSpec {
    fn validate(&self) -> Result<(), AuditError> {
        if self.k == 0 {
            return Err(AuditError::InvalidSpec("horizon k must be at least 1"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(AuditError::InvalidSpec("beta must be finite and >= 0"));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(AuditError::InvalidSpec("ridge must be finite and > 0"));
        }
        if self.num_samples == 0 {
            return Err(AuditError::InvalidSpec("num_samples must be at least 1"));
        }
        Ok(())
    }
}

/// Data context for [`run_audit`]. Past metrics additionally need the
/// leave-last-k split the model was trained on.
#[derive(Debug, Clone, Copy)]
pub struct AuditData<'a> {
    pub full: &'a Dataset,
    pub split: Option<&'a HoldoutSplit>,
}

impl<'a> AuditData<'a> {
    pub fn full_only(full: &'a Dataset) -> Self {
        AuditData { full, split: None }
    }

    pub fn with_split(full: &'a Dataset, split: &'a HoldoutSplit) -> Self {
        AuditData {
            full,
            split: Some(split),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditMeta {
    pub metric: MetricKind,
    pub k: usize,
    pub beta: f64,
    pub seed: u64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    /// Filled by callers that can read a clock; 0 from this crate.
    pub wall_ms: u64,
}

/// Outcome of one audit. `lift` is `optimized / baseline` for reachability
/// when the baseline is positive; stability reports absolute instability, so
/// `lift` stays `None` there.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    pub baseline: f64,
    pub optimized: f64,
    pub lift: Option<f64>,
    pub params_at_opt: RatingParams,
    pub objective_trace: Vec<f64>,
    pub meta: AuditMeta,
}

// ---- distances ----------------------------------------------------------

fn check_same_support(
    p: &RecommendationDistribution,
    q: &RecommendationDistribution,
) -> Result<(), AuditError> {
    if p.items != q.items {
        return Err(AuditError::DistanceSupportMismatch);
    }
    Ok(())
}

pub(crate) fn l2_slice(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    libm::sqrt(acc)
}

pub(crate) fn hellinger_slice(a: &[f64], b: &[f64]) -> f64 {
    // sqrt(1 - sum sqrt(a b)) loses the zero at a == b to rounding; the
    // difference-of-roots form is exact there and equal elsewhere.
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = libm::sqrt(*x) - libm::sqrt(*y);
        acc += d * d;
    }
    libm::sqrt(0.5 * acc).min(1.0)
}

pub(crate) fn distance_slice(kind: DistanceKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        DistanceKind::L2 => l2_slice(a, b),
        DistanceKind::Hellinger => hellinger_slice(a, b),
    }
}

/// Euclidean distance between two distributions over the same candidates.
pub fn l2_distance(
    p: &RecommendationDistribution,
    q: &RecommendationDistribution,
) -> Result<f64, AuditError> {
    check_same_support(p, q)?;
    Ok(l2_slice(&p.probs, &q.probs))
}

/// Hellinger distance between two distributions over the same candidates;
/// always in `[0, 1]`, with 1 for disjoint mass.
pub fn hellinger(
    p: &RecommendationDistribution,
    q: &RecommendationDistribution,
) -> Result<f64, AuditError> {
    check_same_support(p, q)?;
    Ok(hellinger_slice(&p.probs, &q.probs))
}

// ---- shared objective plumbing ------------------------------------------

/// Max-shifted softmax of `beta * scores`.
pub(crate) fn softmax_probs(scores: &[f64], beta: f64) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &s in scores {
        if s > max {
            max = s;
        }
    }
    let mut out: Vec<f64> = scores.iter().map(|&s| libm::exp(beta * (s - max))).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

pub(crate) fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Ratings-to-vector refit split into its affine pieces: with the design
/// matrix fixed, the solution is `offset + sum_t r_t * direction_t` where
/// `direction_t` solves the normal equations against column `t`'s row.
pub(crate) struct AffineRefit {
    pub offset: DVector<f64>,
    pub directions: Vec<DVector<f64>>,
}

/// Decomposes the refit over `rows` (stacked vectors of everything rated)
/// where the trailing `edited` ratings are free parameters and the rest are
/// fixed at `fixed_ratings`.
pub(crate) fn affine_refit(
    rows: &DMatrix<f64>,
    fixed_ratings: &[f64],
    edited: usize,
    ridge: f64,
) -> Result<AffineRefit, AuditError> {
    let t = rows.nrows();
    debug_assert_eq!(fixed_ratings.len() + edited, t);
    let mut ata = rows.tr_mul(rows);
    for i in 0..ata.nrows() {
        ata[(i, i)] += ridge;
    }
    let chol = nalgebra::linalg::Cholesky::new(ata)
        .ok_or(AuditError::Numerical("refit normal equations not positive definite"))?;
    let mut b = DVector::zeros(rows.ncols());
    for (pos, &r) in fixed_ratings.iter().enumerate() {
        for c in 0..rows.ncols() {
            b[c] += r * rows[(pos, c)];
        }
    }
    let offset = chol.solve(&b);
    let directions = (t - edited..t)
        .map(|pos| chol.solve(&rows.row(pos).transpose()))
        .collect();
    Ok(AffineRefit { offset, directions })
}

// ---- baseline ------------------------------------------------------------

/// Probability that `item_id` is recommended to `user_id` right now, under
/// the given policy and the model as trained. The candidate set excludes
/// everything the user has rated in `dataset`.
pub fn baseline_reachability(
    model: &MfModel,
    dataset: &Dataset,
    policy: &RecPolicy,
    user_id: u32,
    item_id: u32,
) -> Result<f64, AuditError> {
    let i = model.user_idx(user_id).ok_or(AuditError::UnknownUser(user_id))?;
    let j = model.item_idx(item_id).ok_or(AuditError::UnknownItem(item_id))?;
    if dataset.has_rated(user_id, item_id) {
        return Err(AuditError::TargetAlreadyRated {
            user: user_id,
            item: item_id,
        });
    }
    let rated: Vec<usize> = dataset
        .user_history(user_id)
        .filter_map(|it| model.item_idx(it.item_id))
        .collect();
    let cands = crate::policy::candidate_set(&rated, model.n_items())
        .map_err(|_| AuditError::EmptyCandidates(user_id))?;
    let p_i = model.p.row(i).transpose();
    let scores: Vec<f64> = cands.iter().map(|&c| model.q.row(c).tr_dot(&p_i)).collect();
    let dist = policy.distribution(&cands, &scores)?;
    Ok(dist.prob_of(j).expect("target is a candidate"))
}

// ---- audit assembly -------------------------------------------------------

/// The user's full chronological history as (model item index, rating).
/// Items the model has never seen have no factor row; `strict` makes them an
/// error, otherwise they are dropped.
fn mapped_history(
    model: &MfModel,
    dataset: &Dataset,
    user_id: u32,
    strict: bool,
) -> Result<Vec<(usize, f64)>, AuditError> {
    let mut out = Vec::new();
    for it in dataset.user_history(user_id) {
        match model.item_idx(it.item_id) {
            Some(idx) => out.push((idx, it.rating)),
            None if strict => return Err(AuditError::UnknownItem(it.item_id)),
            None => {}
        }
    }
    Ok(out)
}

fn require_split<'a>(
    data: &AuditData<'a>,
    k: usize,
) -> Result<&'a HoldoutSplit, AuditError> {
    match data.split {
        Some(s) if s.k == k => Ok(s),
        _ => Err(AuditError::MissingHoldout),
    }
}

fn heldout_tail(
    split: &HoldoutSplit,
    user_id: u32,
    k: usize,
) -> Result<&[crate::dataset::Interaction], AuditError> {
    match split.heldout.get(&user_id) {
        Some(tail) if tail.len() == k => Ok(tail),
        _ => Err(AuditError::HistoryTooShort { user: user_id, k }),
    }
}

fn build_past_reach(
    spec: &AuditSpec,
    model: &MfModel,
    data: &AuditData,
) -> Result<PastReachObjective, AuditError> {
    let split = require_split(data, spec.k)?;
    heldout_tail(split, spec.user, spec.k)?;
    model
        .user_idx(spec.user)
        .ok_or(AuditError::UnknownUser(spec.user))?;
    let j = model
        .item_idx(spec.counterpart)
        .ok_or(AuditError::UnknownItem(spec.counterpart))?;
    if data.full.has_rated(spec.user, spec.counterpart) {
        return Err(AuditError::TargetAlreadyRated {
            user: spec.user,
            item: spec.counterpart,
        });
    }
    let trajectory = mapped_history(model, data.full, spec.user, true)?;
    PastReachObjective::new(&model.q, &trajectory, spec.k, j, spec.beta, spec.ridge)
}

fn build_future_reach<'a>(
    spec: &AuditSpec,
    model: &'a MfModel,
    data: &AuditData,
) -> Result<FutureReachObjective<'a>, AuditError> {
    let i = model
        .user_idx(spec.user)
        .ok_or(AuditError::UnknownUser(spec.user))?;
    let j = model
        .item_idx(spec.counterpart)
        .ok_or(AuditError::UnknownItem(spec.counterpart))?;
    if data.full.has_rated(spec.user, spec.counterpart) {
        return Err(AuditError::TargetAlreadyRated {
            user: spec.user,
            item: spec.counterpart,
        });
    }
    let history = mapped_history(model, data.full, spec.user, false)?;
    FutureReachObjective::new(
        &model.q,
        model.p.row(i).transpose(),
        &history,
        spec.k,
        j,
        spec.beta,
        spec.ridge,
        spec.num_samples,
    )
    .map_err(|e| match e {
        AuditError::EmptyCandidates(_) => AuditError::EmptyCandidates(spec.user),
        AuditError::CandidatesExhausted { available, k, .. } => AuditError::CandidatesExhausted {
            user: spec.user,
            available,
            k,
        },
        other => other,
    })
}

/// Train-split raters of one item, as (model user index, rating).
fn mapped_raters(model: &MfModel, train: &Dataset, item_id: u32) -> Vec<(usize, f64)> {
    train
        .item_raters(item_id)
        .filter_map(|it| model.user_idx(it.user_id).map(|u| (u, it.rating)))
        .collect()
}

fn build_past_stab(
    spec: &AuditSpec,
    model: &MfModel,
    data: &AuditData,
) -> Result<PastStabObjective, AuditError> {
    if spec.user == spec.counterpart {
        return Err(AuditError::SameUser(spec.user));
    }
    let split = require_split(data, spec.k)?;
    let tail = heldout_tail(split, spec.counterpart, spec.k)?;
    let i1 = model
        .user_idx(spec.user)
        .ok_or(AuditError::UnknownUser(spec.user))?;
    let adv = model
        .user_idx(spec.counterpart)
        .ok_or(AuditError::UnknownUser(spec.counterpart))?;
    let mut edited = Vec::with_capacity(spec.k);
    for it in tail {
        let item = model
            .item_idx(it.item_id)
            .ok_or(AuditError::UnknownItem(it.item_id))?;
        edited.push(EditedItemSpec {
            item,
            raters: mapped_raters(model, &split.train, it.item_id),
            factual_rating: it.rating,
        });
    }
    let i1_rated: Vec<usize> = mapped_history(model, data.full, spec.user, false)?
        .into_iter()
        .map(|(item, _)| item)
        .collect();
    PastStabObjective::new(
        &model.p,
        &model.q,
        i1,
        &i1_rated,
        adv,
        &edited,
        spec.beta,
        spec.distance,
        spec.ridge,
    )
    .map_err(|e| match e {
        AuditError::EmptyCandidates(_) => AuditError::EmptyCandidates(spec.user),
        other => other,
    })
}

fn build_future_stab(
    spec: &AuditSpec,
    model: &MfModel,
    data: &AuditData,
) -> Result<FutureStabObjective, AuditError> {
    if spec.user == spec.counterpart {
        return Err(AuditError::SameUser(spec.user));
    }
    let i1 = model
        .user_idx(spec.user)
        .ok_or(AuditError::UnknownUser(spec.user))?;
    let adv = model
        .user_idx(spec.counterpart)
        .ok_or(AuditError::UnknownUser(spec.counterpart))?;
    let i1_rated: Vec<usize> = mapped_history(model, data.full, spec.user, false)?
        .into_iter()
        .map(|(item, _)| item)
        .collect();
    let adv_rated: Vec<usize> = mapped_history(model, data.full, spec.counterpart, false)?
        .into_iter()
        .map(|(item, _)| item)
        .collect();
    // Raters per item for refits during the rollout; the adversary can land
    // on any of their candidates, so cover the whole item space lazily via
    // ids here and let the objective cache factorizations.
    let mut raters: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for &item_id in data.full.item_ids() {
        if let Some(idx) = model.item_idx(item_id) {
            raters.insert(idx, mapped_raters(model, data.full, item_id));
        }
    }
    FutureStabObjective::new(
        model,
        i1,
        &i1_rated,
        adv,
        &adv_rated,
        raters,
        spec.k,
        spec.beta,
        spec.distance,
        spec.ridge,
        spec.num_samples,
    )
    .map_err(|e| match e {
        AuditError::EmptyCandidates(0) => AuditError::EmptyCandidates(spec.user),
        AuditError::CandidatesExhausted { available, k, .. } => AuditError::CandidatesExhausted {
            user: spec.counterpart,
            available,
            k,
        },
        other => other,
    })
}

fn random_table(len: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(lo..=hi)).collect()
}

fn solve(
    obj: &dyn Objective,
    init: &[f64],
    cfg: &OptimizerConfig,
) -> Result<crate::optim::AscentResult, AuditError> {
    let res = match cfg.kind {
        OptimizerKind::GradientAscent => {
            projected_gradient_ascent(obj, analytic_gradient_fn(obj), init, cfg)?
        }
        OptimizerKind::ZerothOrder => {
            projected_gradient_ascent(obj, zeroth_order_gradient_fn(obj, cfg), init, cfg)?
        }
        OptimizerKind::ExtremeOracle => extreme_point_oracle(obj, cfg.lo, cfg.hi)?,
    };
    Ok(res)
}

/// Runs one audit end to end: build the metric's objective, maximize it,
/// and report the result next to the unintervened baseline.
///
/// Preconditions: for past metrics, `data.split` must be the leave-last-k
/// split (same `k` as the spec) that `model` was trained on; for future
/// metrics, `model` must be trained on `data.full`.
pub fn run_audit(
    spec: &AuditSpec,
    model: &MfModel,
    data: &AuditData,
) -> Result<AuditResult, AuditError> {
    spec.validate()?;
    if spec.optimizer.kind == OptimizerKind::ExtremeOracle
        && spec.metric != MetricKind::PastStab
    {
        return Err(AuditError::InvalidSpec(
            "the corner oracle applies to past stability only",
        ));
    }

    let (baseline, ascent, params_at_opt) = match spec.metric {
        MetricKind::PastReach => {
            let obj = build_past_reach(spec, model, data)?;
            let init = obj.factual_ratings().to_vec();
            let baseline = obj.value(&init);
            let res = solve(&obj, &init, &spec.optimizer)?;
            (baseline, res, RatingParams::Past as fn(Vec<f64>) -> RatingParams)
        }
        MetricKind::PastStab => {
            let obj = build_past_stab(spec, model, data)?;
            let init = obj.factual_ratings().to_vec();
            let baseline = obj.value(&init);
            let res = solve(&obj, &init, &spec.optimizer)?;
            (baseline, res, RatingParams::Past as fn(Vec<f64>) -> RatingParams)
        }
        MetricKind::FutureReach => {
            let obj = build_future_reach(spec, model, data)?;
            let baseline = baseline_reachability(
                model,
                data.full,
                &RecPolicy::Softmax { beta: spec.beta },
                spec.user,
                spec.counterpart,
            )?;
            let init = random_table(
                obj.dim(),
                spec.optimizer.lo,
                spec.optimizer.hi,
                spec.optimizer.seed,
            );
            let res = solve(&obj, &init, &spec.optimizer)?;
            let n_items = model.n_items();
            let k = spec.k;
            return Ok(finish(spec, baseline, res, move |t| RatingParams::Future {
                horizon: k,
                n_items,
                table: t,
            }));
        }
        MetricKind::FutureStab => {
            let obj = build_future_stab(spec, model, data)?;
            let init = random_table(
                obj.dim(),
                spec.optimizer.lo,
                spec.optimizer.hi,
                spec.optimizer.seed,
            );
            let res = solve(&obj, &init, &spec.optimizer)?;
            let n_items = model.n_items();
            let k = spec.k;
            return Ok(finish(spec, 0.0, res, move |t| RatingParams::Future {
                horizon: k,
                n_items,
                table: t,
            }));
        }
    };
    Ok(finish(spec, baseline, ascent, params_at_opt))
}

fn finish(
    spec: &AuditSpec,
    baseline: f64,
    res: crate::optim::AscentResult,
    wrap: impl FnOnce(Vec<f64>) -> RatingParams,
) -> AuditResult {
    let lift = if spec.metric.is_reach() && baseline > 0.0 {
        Some(res.value / baseline)
    } else {
        None
    };
    let epochs = match spec.optimizer.kind {
        OptimizerKind::ExtremeOracle => res.trace.len(),
        _ => spec.optimizer.epochs,
    };
    AuditResult {
        baseline,
        optimized: res.value,
        lift,
        params_at_opt: wrap(res.params),
        objective_trace: res.trace,
        meta: AuditMeta {
            metric: spec.metric,
            k: spec.k,
            beta: spec.beta,
            seed: spec.optimizer.seed,
            epochs,
            optimizer: spec.optimizer.kind,
            wall_ms: 0,
        },
    }
}
