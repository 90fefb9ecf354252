//! Stability objectives: how far a counterpart's ratings can push the
//! audited user's recommendation distribution.
//!
//! Both metrics share one mechanism. A counterpart rating an item appends
//! one row to that item's ridge system, so the rebuilt item vector is affine
//! in the new rating: `q_hat(r) = base + r * w`. Only the audited user's
//! score for that very item moves, which keeps every evaluation a cheap
//! patch-and-softmax over precomputed coefficients.

use alloc::vec::Vec;
use alloc::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{distance_slice, hellinger_slice, l2_slice, softmax_probs, AuditError, DistanceKind};
use crate::mf::MfModel;
use crate::optim::Objective;
use crate::policy::candidate_set;

/// Distances below this are treated as the cone point of the objective,
/// where the distance gradient is undefined. Zero is reported there; the
/// cone is the objective's global minimum, so ascent has no reason to sit
/// on it and any nonzero perturbation restores a usable gradient.
const CONE_TOL: f64 = 1e-12;

/// One item the counterpart can re-rate: the item's index, the train-split
/// ratings it keeps (model user index, rating), and the counterpart's
/// factual rating that editing replaces.
#[derive(Clone, Debug)]
pub struct EditedItemSpec {
    pub item: usize,
    pub raters: Vec<(usize, f64)>,
    pub factual_rating: f64,
}

/// Rebuilds one item's ridge system with the counterpart's rating appended
/// and splits the solution into `base + rating * w`.
fn edited_item_affine(
    p: &DMatrix<f64>,
    raters: &[(usize, f64)],
    adversary: usize,
    ridge: f64,
) -> Result<(DVector<f64>, DVector<f64>), AuditError> {
    let d = p.ncols();
    let mut ata = DMatrix::zeros(d, d);
    for i in 0..d {
        ata[(i, i)] = ridge;
    }
    let mut b = DVector::zeros(d);
    for &(u, r) in raters {
        let pu = p.row(u).transpose();
        ata.ger(1.0, &pu, &pu, 1.0);
        b.axpy(r, &pu, 1.0);
    }
    let pa = p.row(adversary).transpose();
    ata.ger(1.0, &pa, &pa, 1.0);
    let chol = nalgebra::linalg::Cholesky::new(ata)
        .ok_or(AuditError::Numerical("edited-item system is not positive definite"))?;
    Ok((chol.solve(&b), chol.solve(&pa)))
}

/// How edit `t` enters the audited user's score list.
struct Edit {
    /// Position in the candidate list, None when the audited user already
    /// rated the item so it never appears in their distribution.
    pos: Option<usize>,
    /// d(score)/d(rating) at `pos`.
    coeff: f64,
    /// Score at `pos` when the rating is zero.
    offset: f64,
}

/// Scores, edits, and reference distribution shared by both metrics.
struct StabCore {
    beta: f64,
    distance: DistanceKind,
    base_scores: Vec<f64>,
    edits: Vec<Edit>,
    l1: Vec<f64>,
}

impl StabCore {
    fn l2_probs(&self, ratings: &[f64]) -> Vec<f64> {
        let mut scores = self.base_scores.clone();
        for (e, &r) in self.edits.iter().zip(ratings) {
            if let Some(pos) = e.pos {
                scores[pos] = e.offset + e.coeff * r;
            }
        }
        softmax_probs(&scores, self.beta)
    }

    fn value(&self, ratings: &[f64]) -> f64 {
        distance_slice(self.distance, &self.l1, &self.l2_probs(ratings))
    }

    fn grad(&self, ratings: &[f64]) -> Vec<f64> {
        let l2 = self.l2_probs(ratings);
        let l1 = &self.l1;
        let mut g = alloc::vec![0.0; self.edits.len()];
        match self.distance {
            DistanceKind::L2 => {
                let dist = l2_slice(l1, &l2);
                if dist < CONE_TOL {
                    return g;
                }
                let mut inner = 0.0;
                for (a, b) in l2.iter().zip(l1) {
                    inner += (a - b) * a;
                }
                for (t, e) in self.edits.iter().enumerate() {
                    if let Some(m) = e.pos {
                        g[t] = self.beta * e.coeff * l2[m] * ((l2[m] - l1[m]) - inner) / dist;
                    }
                }
            }
            DistanceKind::Hellinger => {
                let dist = hellinger_slice(l1, &l2);
                if dist < CONE_TOL {
                    return g;
                }
                let mut bc = 0.0;
                for (a, b) in l1.iter().zip(&l2) {
                    bc += libm::sqrt(a * b);
                }
                for (t, e) in self.edits.iter().enumerate() {
                    if let Some(m) = e.pos {
                        g[t] = self.beta * e.coeff
                            * (l2[m] * bc - libm::sqrt(l1[m] * l2[m]))
                            / (4.0 * dist);
                    }
                }
            }
        }
        g
    }
}

fn check_common(beta: f64, ridge: f64) -> Result<(), AuditError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(AuditError::InvalidSpec("beta must be finite and >= 0"));
    }
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(AuditError::InvalidSpec("ridge must be finite and > 0"));
    }
    Ok(())
}

fn check_raters(
    raters: &[(usize, f64)],
    n_users: usize,
    adversary: usize,
) -> Result<(), AuditError> {
    for &(u, r) in raters {
        if u >= n_users {
            return Err(AuditError::InvalidSpec("rater index out of range"));
        }
        if u == adversary {
            return Err(AuditError::InvalidSpec(
                "counterpart already rates an edited item",
            ));
        }
        if !r.is_finite() {
            return Err(AuditError::InvalidSpec("ratings must be finite"));
        }
    }
    Ok(())
}

/// Distance between the audited user's recommendation distribution under
/// the model as trained and under the counterpart's edited last-`k` ratings.
///
/// The reference comes from the trained vectors directly; edits act only on
/// the counterfactual side. The model never saw the held-out factual
/// ratings, so even re-entering them registers their genuine pull on the
/// audited user, and that value is the audit's do-nothing baseline.
pub struct PastStabObjective {
    core: StabCore,
    factual: Vec<f64>,
}

impl PastStabObjective {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: &DMatrix<f64>,
        q: &DMatrix<f64>,
        audited: usize,
        audited_rated: &[usize],
        adversary: usize,
        edited: &[EditedItemSpec],
        beta: f64,
        distance: DistanceKind,
        ridge: f64,
    ) -> Result<Self, AuditError> {
        check_common(beta, ridge)?;
        let n_users = p.nrows();
        let n_items = q.nrows();
        if audited >= n_users || adversary >= n_users {
            return Err(AuditError::InvalidSpec("user index out of range"));
        }
        if audited == adversary {
            return Err(AuditError::InvalidSpec("audited user and counterpart must differ"));
        }
        if edited.is_empty() {
            return Err(AuditError::InvalidSpec("edited item list must be non-empty"));
        }
        let mut seen = alloc::vec![false; n_items];
        for e in edited {
            if e.item >= n_items {
                return Err(AuditError::InvalidSpec("item index out of range"));
            }
            if core::mem::replace(&mut seen[e.item], true) {
                return Err(AuditError::InvalidSpec("edited items must be distinct"));
            }
            if !e.factual_rating.is_finite() {
                return Err(AuditError::InvalidSpec("ratings must be finite"));
            }
            check_raters(&e.raters, n_users, adversary)?;
        }

        let cands = candidate_set(audited_rated, n_items)
            .map_err(|_| AuditError::EmptyCandidates(0))?;
        let p_aud = p.row(audited).transpose();
        let base_scores: Vec<f64> = cands.iter().map(|&c| q.row(c).tr_dot(&p_aud)).collect();
        let mut edits = Vec::with_capacity(edited.len());
        for e in edited {
            let (base, w) = edited_item_affine(p, &e.raters, adversary, ridge)?;
            edits.push(Edit {
                pos: cands.binary_search(&e.item).ok(),
                coeff: w.dot(&p_aud),
                offset: base.dot(&p_aud),
            });
        }
        let factual: Vec<f64> = edited.iter().map(|e| e.factual_rating).collect();
        let l1 = softmax_probs(&base_scores, beta);
        let core = StabCore {
            beta,
            distance,
            base_scores,
            edits,
            l1,
        };
        Ok(PastStabObjective { core, factual })
    }

    /// Factual ratings of the edited items, the audit's starting point.
    pub fn factual_ratings(&self) -> &[f64] {
        &self.factual
    }

    /// Reference distribution the distance is measured from.
    pub fn reference(&self) -> &[f64] {
        &self.core.l1
    }
}

impl Objective for PastStabObjective {
    fn dim(&self) -> usize {
        self.core.edits.len()
    }

    fn value(&self, params: &[f64]) -> f64 {
        self.core.value(params)
    }

    fn gradient(&self, params: &[f64]) -> Option<Vec<f64>> {
        Some(self.core.grad(params))
    }
}

/// Distance between the audited user's current recommendation distribution
/// and the one after the counterpart rates `k` future recommendations.
///
/// Each step the counterpart takes their top-1 unrated item. The chosen
/// item's vector is rebuilt with the new rating appended, which moves the
/// audited user's score for that item. Selection scores the remaining pool
/// with the counterpart's trained vector, and chosen items leave the pool,
/// so the visited sequence is the counterpart's top-`k` regardless of the
/// ratings given; parameters act only through the rebuilt vectors and the
/// analytic gradient is exact.
///
/// Parameters form a (timestep, item) table; entry `(t, m)` is the rating
/// given if item `m` arrives at step `t`. Only the `k` entries on the
/// visited sequence influence the objective.
pub struct FutureStabObjective {
    core: StabCore,
    chosen: Vec<usize>,
    n_items: usize,
}

impl FutureStabObjective {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &MfModel,
        audited: usize,
        audited_rated: &[usize],
        adversary: usize,
        adversary_rated: &[usize],
        raters: BTreeMap<usize, Vec<(usize, f64)>>,
        k: usize,
        beta: f64,
        distance: DistanceKind,
        ridge: f64,
        num_samples: usize,
    ) -> Result<Self, AuditError> {
        check_common(beta, ridge)?;
        if num_samples == 0 {
            return Err(AuditError::InvalidSpec("num_samples must be at least 1"));
        }
        let p = &model.p;
        let q = &model.q;
        let n_users = p.nrows();
        let n_items = q.nrows();
        if audited >= n_users || adversary >= n_users {
            return Err(AuditError::InvalidSpec("user index out of range"));
        }
        if audited == adversary {
            return Err(AuditError::InvalidSpec("audited user and counterpart must differ"));
        }

        let adv_cands = candidate_set(adversary_rated, n_items).unwrap_or_default();
        if adv_cands.len() < k {
            return Err(AuditError::CandidatesExhausted {
                user: 0,
                available: adv_cands.len(),
                k,
            });
        }
        // Top-k by the counterpart's trained scores, smallest index on ties:
        // the order items get visited during the rollout.
        let p_adv = p.row(adversary).transpose();
        let mut pool: Vec<(f64, usize)> = adv_cands
            .iter()
            .map(|&c| (q.row(c).tr_dot(&p_adv), c))
            .collect();
        let mut chosen = Vec::with_capacity(k);
        for _ in 0..k {
            let mut best = 0usize;
            for (pos, &(s, m)) in pool.iter().enumerate() {
                let (bs, bm) = pool[best];
                if s > bs || (s == bs && m < bm) {
                    best = pos;
                }
            }
            chosen.push(pool.swap_remove(best).1);
        }

        let cands = candidate_set(audited_rated, n_items)
            .map_err(|_| AuditError::EmptyCandidates(0))?;
        let p_aud = p.row(audited).transpose();
        let base_scores: Vec<f64> = cands.iter().map(|&c| q.row(c).tr_dot(&p_aud)).collect();
        let l1 = softmax_probs(&base_scores, beta);
        let empty = Vec::new();
        let mut edits = Vec::with_capacity(k);
        for &m in &chosen {
            let list = raters.get(&m).unwrap_or(&empty);
            check_raters(list, n_users, adversary)?;
            let (base, w) = edited_item_affine(p, list, adversary, ridge)?;
            edits.push(Edit {
                pos: cands.binary_search(&m).ok(),
                coeff: w.dot(&p_aud),
                offset: base.dot(&p_aud),
            });
        }
        Ok(FutureStabObjective {
            core: StabCore {
                beta,
                distance,
                base_scores,
                edits,
                l1,
            },
            chosen,
            n_items,
        })
    }

    /// Items the counterpart visits, in rollout order.
    pub fn visited(&self) -> &[usize] {
        &self.chosen
    }

    /// Reference distribution the distance is measured from.
    pub fn reference(&self) -> &[f64] {
        &self.core.l1
    }

    fn gather_ratings(&self, table: &[f64]) -> Vec<f64> {
        self.chosen
            .iter()
            .enumerate()
            .map(|(t, &m)| table[t * self.n_items + m])
            .collect()
    }
}

impl Objective for FutureStabObjective {
    fn dim(&self) -> usize {
        self.chosen.len() * self.n_items
    }

    fn value(&self, params: &[f64]) -> f64 {
        self.core.value(&self.gather_ratings(params))
    }

    fn gradient(&self, params: &[f64]) -> Option<Vec<f64>> {
        let dense = self.core.grad(&self.gather_ratings(params));
        let mut g = alloc::vec![0.0; self.dim()];
        for (t, &m) in self.chosen.iter().enumerate() {
            g[t * self.n_items + m] = dense[t];
        }
        Some(g)
    }
}
