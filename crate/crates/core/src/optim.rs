//! Bounded maximization of audit objectives over rating values.
//!
//! Three solvers share the [`Objective`] interface: projected gradient
//! ascent for white-box objectives, the same ascent loop driven by a
//! two-sided random-direction gradient estimate when only evaluations are
//! available, and exhaustive corner enumeration for low-dimensional
//! objectives whose maximum sits on the box boundary.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// A real objective over parameters confined to a box.
///
/// Implementations must be pure: equal parameters give equal values.
/// Evaluation failure is signaled with NaN, which every solver treats as a
/// hard error rather than a candidate value.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, params: &[f64]) -> f64;

    /// Exact gradient where available; `None` for query-only objectives.
    fn gradient(&self, _params: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    BadConfig(&'static str),
    #[error("objective has {expected} parameters, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,
    #[error("gradient contains a non-finite entry")]
    NonFiniteGradient,
    #[error("objective provides no analytic gradient; use the zeroth-order mode")]
    GradientUnsupported,
    #[error("corner search over {k} parameters exceeds the 2^{max} budget")]
    HorizonTooLarge { k: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    GradientAscent,
    ZerothOrder,
    ExtremeOracle,
}

/// Shared solver settings. `learning_rate` is the initial step size;
/// `eps` and `num_z` only drive the zeroth-order estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lo: f64,
    pub hi: f64,
    pub eps: f64,
    pub num_z: usize,
    pub monotone_accept: bool,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::GradientAscent,
            epochs: 50,
            learning_rate: 0.5,
            lo: 1.0,
            hi: 5.0,
            eps: 1e-3,
            num_z: 16,
            monotone_accept: true,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<(), OptimError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(OptimError::BadConfig("bounds must be finite with lo < hi"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(OptimError::BadConfig("learning_rate must be > 0"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(OptimError::BadConfig("eps must be > 0"));
        }
        if self.num_z == 0 {
            return Err(OptimError::BadConfig("num_z must be at least 1"));
        }
        Ok(())
    }
}

/// Final iterate of an ascent run. `trace` holds the accepted objective
/// value after each epoch; with monotone acceptance it never decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub trace: Vec<f64>,
}

fn clamp_into(params: &mut [f64], lo: f64, hi: f64) {
    for x in params.iter_mut() {
        *x = x.clamp(lo, hi);
    }
}

fn checked_value(obj: &dyn Objective, params: &[f64]) -> Result<f64, OptimError> {
    let v = obj.value(params);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OptimError::NonFiniteObjective)
    }
}

/// Gradient ascent with projection onto `[lo, hi]^dim`.
///
/// Each epoch takes one step along `grad_fn` and projects back into the box.
/// With monotone acceptance a step that lowers the objective is rejected and
/// the learning rate halved (floored at 1e-8 of its initial value), so the
/// final value never falls below the initial one.
pub fn projected_gradient_ascent<F>(
    obj: &dyn Objective,
    mut grad_fn: F,
    init: &[f64],
    cfg: &OptimizerConfig,
) -> Result<AscentResult, OptimError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, OptimError>,
{
    cfg.validate()?;
    if init.len() != obj.dim() {
        return Err(OptimError::DimMismatch {
            expected: obj.dim(),
            got: init.len(),
        });
    }
    let mut theta = init.to_vec();
    clamp_into(&mut theta, cfg.lo, cfg.hi);
    let mut f = checked_value(obj, &theta)?;
    let mut lr = cfg.learning_rate;
    let lr_floor = cfg.learning_rate * 1e-8;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let g = grad_fn(&theta)?;
        if g.len() != theta.len() {
            return Err(OptimError::DimMismatch {
                expected: theta.len(),
                got: g.len(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(OptimError::NonFiniteGradient);
        }

        let mut proposal: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x + lr * gi).collect();
        clamp_into(&mut proposal, cfg.lo, cfg.hi);
        let fp = checked_value(obj, &proposal)?;
        if cfg.monotone_accept && fp < f {
            lr = (lr / 2.0).max(lr_floor);
        } else {
            theta = proposal;
            f = fp;
        }
        trace.push(f);
    }

    Ok(AscentResult {
        params: theta,
        value: f,
        trace,
    })
}

/// Two-sided random-direction gradient estimate from objective evaluations
/// only: the average of `(f(t + eps z) - f(t - eps z)) / (2 eps) * z` over
/// `num_z` standard normal directions. Perturbed points are projected into
/// the box before evaluation.
pub fn zeroth_order_gradient<R: Rng + ?Sized>(
    obj: &dyn Objective,
    params: &[f64],
    eps: f64,
    num_z: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<Vec<f64>, OptimError> {
    if params.len() != obj.dim() {
        return Err(OptimError::DimMismatch {
            expected: obj.dim(),
            got: params.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(OptimError::BadConfig("eps must be > 0"));
    }
    if num_z == 0 {
        return Err(OptimError::BadConfig("num_z must be at least 1"));
    }
    let dim = params.len();
    let mut acc = alloc::vec![0.0; dim];
    let mut plus = alloc::vec![0.0; dim];
    let mut minus = alloc::vec![0.0; dim];
    let mut z = alloc::vec![0.0; dim];
    for _ in 0..num_z {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            plus[i] = (params[i] + eps * z[i]).clamp(lo, hi);
            minus[i] = (params[i] - eps * z[i]).clamp(lo, hi);
        }
        let fp = checked_value(obj, &plus)?;
        let fm = checked_value(obj, &minus)?;
        let scale = (fp - fm) / (2.0 * eps);
        for i in 0..dim {
            acc[i] += scale * z[i];
        }
    }
    for a in acc.iter_mut() {
        *a /= num_z as f64;
    }
    Ok(acc)
}

/// Convenience adaptor: the analytic gradient as an ascent-ready closure.
pub fn analytic_gradient_fn(
    obj: &dyn Objective,
) -> impl FnMut(&[f64]) -> Result<Vec<f64>, OptimError> + '_ {
    move |params| obj.gradient(params).ok_or(OptimError::GradientUnsupported)
}

/// Convenience adaptor: a seeded zeroth-order estimator as a closure. The
/// generator state carries across calls, so each epoch draws fresh
/// directions while the whole sequence stays reproducible.
pub fn zeroth_order_gradient_fn<'a>(
    obj: &'a dyn Objective,
    cfg: &OptimizerConfig,
) -> impl FnMut(&[f64]) -> Result<Vec<f64>, OptimError> + 'a {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (eps, num_z, lo, hi) = (cfg.eps, cfg.num_z, cfg.lo, cfg.hi);
    move |params| zeroth_order_gradient(obj, params, eps, num_z, lo, hi, &mut rng)
}

/// Central finite differences, exposed as a reference check for analytic
/// gradients. Not a production estimator: it costs two evaluations per
/// coordinate and inherits truncation error O(h^2).
pub fn finite_difference_gradient(
    obj: &dyn Objective,
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>, OptimError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OptimError::BadConfig("h must be > 0"));
    }
    let mut g = alloc::vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        work[i] = params[i] + h;
        let fp = checked_value(obj, &work)?;
        work[i] = params[i] - h;
        let fm = checked_value(obj, &work)?;
        work[i] = params[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

const ORACLE_MAX_K: usize = 20;

/// Best corner of `{lo, hi}^k` by exhaustive enumeration.
///
/// Corners are visited in lexicographic order with `lo` before `hi`, and
/// only strict improvements replace the incumbent, so ties resolve to the
/// lexicographically smallest maximizer. `trace` is the running best.
/// Refuses `k` beyond 20 to bound the 2^k evaluation cost.
pub fn extreme_point_oracle(
    obj: &dyn Objective,
    lo: f64,
    hi: f64,
) -> Result<AscentResult, OptimError> {
    let k = obj.dim();
    if k > ORACLE_MAX_K {
        return Err(OptimError::HorizonTooLarge {
            k,
            max: ORACLE_MAX_K,
        });
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(OptimError::BadConfig("bounds must be finite with lo < hi"));
    }
    let mut best_params = alloc::vec![lo; k];
    let mut best = f64::NEG_INFINITY;
    let mut trace = Vec::with_capacity(1usize << k);
    let mut corner = alloc::vec![lo; k];
    for mask in 0u64..(1u64 << k) {
        for (t, x) in corner.iter_mut().enumerate() {
            // Bit (k-1-t) makes the mask count in lexicographic order over
            // (corner[0], .., corner[k-1]).
            *x = if mask >> (k - 1 - t) & 1 == 1 { hi } else { lo };
        }
        let v = checked_value(obj, &corner)?;
        if v > best {
            best = v;
            best_params.copy_from_slice(&corner);
        }
        trace.push(best);
    }
    Ok(AscentResult {
        params: best_params,
        value: best,
        trace,
    })
}
