//! Reachability objectives: the recommendation probability of a target item
//! as a function of the audited user's own ratings.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{affine_refit, gather_rows, softmax_probs, AuditError};
use crate::optim::Objective;
use crate::policy::candidate_set;

/// Probability of recommending `target` after rewriting the last `k`
/// ratings of a fixed item trajectory.
///
/// The user vector is refit by ridge least squares over the whole
/// trajectory, so with the design matrix fixed every candidate score is
/// affine in the edited ratings: `scores = s0 + coeff * r`. The objective is
/// the beta-softmax probability of the target under those scores, making its
/// log concave in `r`.
pub struct PastReachObjective {
    k: usize,
    beta: f64,
    factual: Vec<f64>,
    cands: Vec<usize>,
    target_pos: usize,
    s0: DVector<f64>,
    coeff: DMatrix<f64>,
}

impl PastReachObjective {
    /// `trajectory` is the user's full chronological history as
    /// (item index into `q`, factual rating); its last `k` entries are the
    /// editable ones. `target` must not appear in the trajectory.
    pub fn new(
        q: &DMatrix<f64>,
        trajectory: &[(usize, f64)],
        k: usize,
        target: usize,
        beta: f64,
        ridge: f64,
    ) -> Result<Self, AuditError> {
        if trajectory.is_empty() {
            return Err(AuditError::InvalidSpec("trajectory must be non-empty"));
        }
        if k == 0 || k > trajectory.len() {
            return Err(AuditError::InvalidSpec(
                "horizon must satisfy 1 <= k <= trajectory length",
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(AuditError::InvalidSpec("beta must be finite and >= 0"));
        }
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(AuditError::InvalidSpec("ridge must be finite and > 0"));
        }
        let n_items = q.nrows();
        let items: Vec<usize> = trajectory.iter().map(|&(m, _)| m).collect();
        let mut sorted = items.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(AuditError::InvalidSpec("trajectory items must be distinct"));
        }
        if items.iter().any(|&m| m >= n_items) || target >= n_items {
            return Err(AuditError::InvalidSpec("item index out of range"));
        }
        if items.contains(&target) {
            return Err(AuditError::InvalidSpec("target item is already rated"));
        }
        if trajectory.iter().any(|&(_, r)| !r.is_finite()) {
            return Err(AuditError::InvalidSpec("ratings must be finite"));
        }

        let rows = gather_rows(q, &items);
        let fixed: Vec<f64> = trajectory[..trajectory.len() - k]
            .iter()
            .map(|&(_, r)| r)
            .collect();
        let refit = affine_refit(&rows, &fixed, k, ridge)?;

        let cands = candidate_set(&items, n_items).expect("target is unrated");
        let target_pos = cands.binary_search(&target).expect("target is a candidate");
        let s0 = DVector::from_fn(cands.len(), |c, _| q.row(cands[c]).tr_dot(&refit.offset));
        let coeff = DMatrix::from_fn(cands.len(), k, |c, t| {
            q.row(cands[c]).tr_dot(&refit.directions[t])
        });
        let factual = trajectory[trajectory.len() - k..]
            .iter()
            .map(|&(_, r)| r)
            .collect();
        Ok(PastReachObjective {
            k,
            beta,
            factual,
            cands,
            target_pos,
            s0,
            coeff,
        })
    }

    /// Factual ratings of the editable tail, the audit's starting point.
    pub fn factual_ratings(&self) -> &[f64] {
        &self.factual
    }

    pub fn candidates(&self) -> &[usize] {
        &self.cands
    }

    fn probs(&self, params: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(params);
        let scores = &self.coeff * r + &self.s0;
        softmax_probs(scores.as_slice(), self.beta)
    }
}

impl Objective for PastReachObjective {
    fn dim(&self) -> usize {
        self.k
    }

    fn value(&self, params: &[f64]) -> f64 {
        self.probs(params)[self.target_pos]
    }

    fn gradient(&self, params: &[f64]) -> Option<Vec<f64>> {
        let probs = self.probs(params);
        let pj = probs[self.target_pos];
        let mut g = alloc::vec![0.0; self.k];
        for (t, gt) in g.iter_mut().enumerate() {
            let mut avg = 0.0;
            for (c, &phi) in probs.iter().enumerate() {
                avg += phi * self.coeff[(c, t)];
            }
            *gt = self.beta * pj * (self.coeff[(self.target_pos, t)] - avg);
        }
        Some(g)
    }
}

/// Probability of recommending `target` after `k` future steps in which the
/// user rates whatever the system recommends.
///
/// Parameters form a (timestep, item) table; entry `(t, m)` is the rating
/// given if item `m` arrives at step `t`. Each step picks the top-1 unrated
/// item, appends the table rating, and refits the user vector over history
/// plus the growing rollout. The objective is the final-step beta-softmax
/// probability of the target, averaged over `num_samples` rollouts (the
/// top-1 choice makes every rollout identical; the average is kept for
/// policy generality). Ratings influence the objective only through the
/// refits: the discrete item choices carry no gradient, so the analytic
/// gradient is exact within a fixed selection sequence and the sequence is
/// recomputed at every evaluation.
///
/// If the target itself gets recommended mid-rollout it becomes rated and
/// can no longer be recommended at step `k`; the objective is 0 there.
pub struct FutureReachObjective<'a> {
    q: &'a DMatrix<f64>,
    p_init: DVector<f64>,
    hist_items: Vec<usize>,
    hist_ratings: Vec<f64>,
    base_cands: Vec<usize>,
    ata0: DMatrix<f64>,
    b0: DVector<f64>,
    k: usize,
    target: usize,
    beta: f64,
    ridge: f64,
    num_samples: usize,
}

struct Rollout {
    chosen: Vec<usize>,
    cands: Vec<usize>,
    p_final: DVector<f64>,
    target_consumed: bool,
}

impl<'a> FutureReachObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: &'a DMatrix<f64>,
        p_init: DVector<f64>,
        history: &[(usize, f64)],
        k: usize,
        target: usize,
        beta: f64,
        ridge: f64,
        num_samples: usize,
    ) -> Result<Self, AuditError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(AuditError::InvalidSpec("beta must be finite and >= 0"));
        }
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(AuditError::InvalidSpec("ridge must be finite and > 0"));
        }
        if num_samples == 0 {
            return Err(AuditError::InvalidSpec("num_samples must be at least 1"));
        }
        let n_items = q.nrows();
        if p_init.len() != q.ncols() {
            return Err(AuditError::InvalidSpec("user vector dimension mismatch"));
        }
        let hist_items: Vec<usize> = history.iter().map(|&(m, _)| m).collect();
        let mut sorted = hist_items.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(AuditError::InvalidSpec("history items must be distinct"));
        }
        if hist_items.iter().any(|&m| m >= n_items) || target >= n_items {
            return Err(AuditError::InvalidSpec("item index out of range"));
        }
        if hist_items.contains(&target) {
            return Err(AuditError::InvalidSpec("target item is already rated"));
        }
        if history.iter().any(|&(_, r)| !r.is_finite()) {
            return Err(AuditError::InvalidSpec("ratings must be finite"));
        }
        let base_cands = candidate_set(&hist_items, n_items)
            .map_err(|_| AuditError::EmptyCandidates(0))?;
        // Each step consumes one candidate; the final distribution needs at
        // least one left.
        if base_cands.len() <= k {
            return Err(AuditError::CandidatesExhausted {
                user: 0,
                available: base_cands.len(),
                k,
            });
        }
        let hist_ratings: Vec<f64> = history.iter().map(|&(_, r)| r).collect();
        let rows = gather_rows(q, &hist_items);
        let mut ata0 = rows.tr_mul(&rows);
        for i in 0..ata0.nrows() {
            ata0[(i, i)] += ridge;
        }
        let mut b0 = DVector::zeros(q.ncols());
        for (pos, &m) in hist_items.iter().enumerate() {
            let r = hist_ratings[pos];
            for c in 0..q.ncols() {
                b0[c] += r * q[(m, c)];
            }
        }
        Ok(FutureReachObjective {
            q,
            p_init,
            hist_items,
            hist_ratings,
            base_cands,
            ata0,
            b0,
            k,
            target,
            beta,
            ridge,
            num_samples,
        })
    }

    pub fn horizon(&self) -> usize {
        self.k
    }

    pub fn n_items(&self) -> usize {
        self.q.nrows()
    }

    /// Runs the deterministic top-1 rollout for one parameter table.
    /// Returns None when a refit system cannot be factored.
    fn rollout(&self, table: &[f64]) -> Option<Rollout> {
        let n_items = self.q.nrows();
        let mut cands = self.base_cands.clone();
        let mut ata = self.ata0.clone();
        let mut b = self.b0.clone();
        let mut p_cur = self.p_init.clone();
        let mut chosen = Vec::with_capacity(self.k);
        let mut target_consumed = false;
        for t in 0..self.k {
            let mut best_pos = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (pos, &c) in cands.iter().enumerate() {
                let s = self.q.row(c).tr_dot(&p_cur);
                if s > best_score {
                    best_score = s;
                    best_pos = pos;
                }
            }
            let m = cands.remove(best_pos);
            if m == self.target {
                target_consumed = true;
            }
            let rating = table[t * n_items + m];
            let qm = self.q.row(m).transpose();
            // ata += qm qm', b += rating * qm: the growing normal equations.
            ata.ger(1.0, &qm, &qm, 1.0);
            b.axpy(rating, &qm, 1.0);
            let chol = nalgebra::linalg::Cholesky::new(ata.clone())?;
            p_cur = chol.solve(&b);
            chosen.push(m);
        }
        Some(Rollout {
            chosen,
            cands,
            p_final: p_cur,
            target_consumed,
        })
    }

    fn single_value(&self, table: &[f64]) -> f64 {
        let Some(roll) = self.rollout(table) else {
            return f64::NAN;
        };
        if roll.target_consumed {
            return 0.0;
        }
        let scores: Vec<f64> = roll
            .cands
            .iter()
            .map(|&c| self.q.row(c).tr_dot(&roll.p_final))
            .collect();
        let probs = softmax_probs(&scores, self.beta);
        let pos = roll
            .cands
            .binary_search(&self.target)
            .expect("unconsumed target stays a candidate");
        probs[pos]
    }
}

impl Objective for FutureReachObjective<'_> {
    fn dim(&self) -> usize {
        self.k * self.q.nrows()
    }

    fn value(&self, params: &[f64]) -> f64 {
        let mut acc = 0.0;
        for _ in 0..self.num_samples {
            acc += self.single_value(params);
        }
        acc / self.num_samples as f64
    }

    fn gradient(&self, params: &[f64]) -> Option<Vec<f64>> {
        let n_items = self.q.nrows();
        let mut g = alloc::vec![0.0; self.k * n_items];
        let Some(roll) = self.rollout(params) else {
            // Signal evaluation failure; the ascent loop aborts on it.
            return Some(alloc::vec![f64::NAN; self.k * n_items]);
        };
        if roll.target_consumed {
            // Locally constant at zero: no direction improves within this
            // selection region.
            return Some(g);
        }
        // Within the realized selection sequence the final user vector is an
        // affine function of the k chosen ratings, exactly as in the past
        // metric with the rollout appended to the trajectory.
        let mut items = self.hist_items.clone();
        items.extend_from_slice(&roll.chosen);
        let rows = gather_rows(self.q, &items);
        let refit = match affine_refit(&rows, &self.hist_ratings, self.k, self.ridge) {
            Ok(r) => r,
            Err(_) => return Some(alloc::vec![f64::NAN; self.k * n_items]),
        };
        let target_pos = roll
            .cands
            .binary_search(&self.target)
            .expect("unconsumed target stays a candidate");
        let scores: Vec<f64> = roll
            .cands
            .iter()
            .map(|&c| self.q.row(c).tr_dot(&roll.p_final))
            .collect();
        let probs = softmax_probs(&scores, self.beta);
        let pj = probs[target_pos];
        for (t, &m) in roll.chosen.iter().enumerate() {
            let dir = &refit.directions[t];
            let coeff_target = self.q.row(self.target).tr_dot(dir);
            let mut avg = 0.0;
            for (pos, &c) in roll.cands.iter().enumerate() {
                avg += probs[pos] * self.q.row(c).tr_dot(dir);
            }
            g[t * n_items + m] = self.beta * pj * (coeff_target - avg);
        }
        Some(g)
    }
}
