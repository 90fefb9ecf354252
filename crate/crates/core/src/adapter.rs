//! Query-only access to a recommender: submit rating edits, read back the
//! recommendation distribution. Audits that only have this surface use
//! zeroth-order optimization; the reference adapter wraps the built-in
//! factorization model so the query path can be cross-checked against the
//! closed-form updates it is made of.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::audit::AuditError;
use crate::dataset::Dataset;
use crate::mf::{update_item_vector, update_user_vector, MfModel};
use crate::optim::Objective;
use crate::policy::{candidate_set, RecPolicy, RecommendationDistribution};

/// One rating edit: `user` rates `item` with `rating`, replacing their
/// stored rating for the item or appending a new one.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingEdit {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
}

/// A recommendation readout request: apply `edits`, then report the policy
/// distribution over `subject`'s unrated items.
#[derive(Clone, Debug)]
pub struct BlackBoxQuery {
    pub subject: u32,
    pub edits: Vec<RatingEdit>,
    pub policy: RecPolicy,
}

/// The query surface an external recommender must offer to be auditable
/// without model internals. Pull-based and synchronous; implementations own
/// any caching or rate limiting.
///
/// `items` in the returned distribution hold adapter-defined item keys; the
/// reference adapter uses its model's dense item indices.
pub trait RecommenderAdapter {
    fn query(&self, query: &BlackBoxQuery) -> Result<RecommendationDistribution, AuditError>;
}

/// Applies one query through an adapter.
pub fn blackbox_query(
    adapter: &dyn RecommenderAdapter,
    query: &BlackBoxQuery,
) -> Result<RecommendationDistribution, AuditError> {
    adapter.query(query)
}

/// Reference adapter over a trained factorization model and the ratings it
/// was trained on.
///
/// Edits act on a scratch copy of the stored ratings. An edit by the
/// subject refits the subject's user vector over their edited history; an
/// edit by anyone else refits that item's vector with the edit applied to
/// its rater list. Entities whose ratings come out unchanged keep their
/// trained vectors, so restoring a factual rating is exactly a no-op.
/// Refits use the training regularizer.
pub struct MfAdapter {
    model: MfModel,
    by_user: BTreeMap<usize, Vec<(usize, f64)>>,
    by_item: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl MfAdapter {
    /// Interactions whose user or item the model does not know are ignored:
    /// they touch no model vector.
    pub fn new(model: MfModel, data: &Dataset) -> Self {
        let mut by_user: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        let mut by_item: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for it in data.interactions() {
            let (Some(u), Some(m)) = (model.user_idx(it.user_id), model.item_idx(it.item_id))
            else {
                continue;
            };
            by_user.entry(u).or_default().push((m, it.rating));
            by_item.entry(m).or_default().push((u, it.rating));
        }
        MfAdapter {
            model,
            by_user,
            by_item,
        }
    }

    pub fn model(&self) -> &MfModel {
        &self.model
    }

    fn rebuilt_item(
        &self,
        item: usize,
        edits: &[(usize, f64)],
    ) -> Result<Option<DVector<f64>>, AuditError> {
        let empty = Vec::new();
        let mut raters = self.by_item.get(&item).unwrap_or(&empty).clone();
        if !apply_edits(&mut raters, edits) {
            return Ok(None);
        }
        let p_rows = DMatrix::from_fn(raters.len(), self.model.p.ncols(), |r, c| {
            self.model.p[(raters[r].0, c)]
        });
        let ratings = DVector::from_fn(raters.len(), |r, _| raters[r].1);
        let q = update_item_vector(&p_rows, &ratings, self.model.config.reg)?;
        Ok(Some(q))
    }
}

/// Applies (key, rating) edits to a rating list in place: replace on key
/// match, append otherwise. Returns whether anything actually changed.
fn apply_edits(list: &mut Vec<(usize, f64)>, edits: &[(usize, f64)]) -> bool {
    let mut changed = false;
    for &(key, rating) in edits {
        match list.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => {
                if entry.1 != rating {
                    entry.1 = rating;
                    changed = true;
                }
            }
            None => {
                list.push((key, rating));
                changed = true;
            }
        }
    }
    changed
}

impl RecommenderAdapter for MfAdapter {
    fn query(&self, query: &BlackBoxQuery) -> Result<RecommendationDistribution, AuditError> {
        let model = &self.model;
        let subject = model
            .user_idx(query.subject)
            .ok_or(AuditError::UnknownUser(query.subject))?;
        let mut own_edits: Vec<(usize, f64)> = Vec::new();
        let mut item_edits: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for e in &query.edits {
            let u = model
                .user_idx(e.user)
                .ok_or(AuditError::UnknownUser(e.user))?;
            let m = model
                .item_idx(e.item)
                .ok_or(AuditError::UnknownItem(e.item))?;
            if !(e.rating.is_finite() && (1.0..=5.0).contains(&e.rating)) {
                return Err(AuditError::InvalidSpec("edit ratings must lie in [1, 5]"));
            }
            if u == subject {
                own_edits.push((m, e.rating));
            } else {
                item_edits.entry(m).or_default().push((u, e.rating));
            }
        }

        let mut new_items: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
        for (item, edits) in &item_edits {
            if let Some(q) = self.rebuilt_item(*item, edits)? {
                new_items.insert(*item, q);
            }
        }

        let empty = Vec::new();
        let mut history = self.by_user.get(&subject).unwrap_or(&empty).clone();
        let changed = apply_edits(&mut history, &own_edits);
        let item_row = |m: usize| -> DVector<f64> {
            new_items
                .get(&m)
                .cloned()
                .unwrap_or_else(|| model.q.row(m).transpose())
        };
        let p_subject = if changed {
            if history.is_empty() {
                return Err(AuditError::InvalidSpec("subject has no ratings to refit from"));
            }
            let q_rows = DMatrix::from_fn(history.len(), model.q.ncols(), |r, c| {
                item_row(history[r].0)[c]
            });
            let ratings = DVector::from_fn(history.len(), |r, _| history[r].1);
            update_user_vector(&q_rows, &ratings, model.config.reg)?
        } else {
            model.p.row(subject).transpose()
        };

        let rated: Vec<usize> = history.iter().map(|&(m, _)| m).collect();
        let cands = candidate_set(&rated, model.q.nrows())
            .map_err(|_| AuditError::EmptyCandidates(query.subject))?;
        let scores: Vec<f64> = cands.iter().map(|&c| item_row(c).dot(&p_subject)).collect();
        Ok(query.policy.distribution(&cands, &scores)?)
    }
}

/// Reachability of one target item through query access alone: parameters
/// are the subject's ratings for `edited_items`, the value is the target's
/// recommendation probability after those edits. No gradient is available,
/// so gradient-based solvers refuse it and zeroth-order ones estimate from
/// value queries. Query failures surface as NaN, which aborts an ascent.
pub struct QueryReachObjective<'a> {
    adapter: &'a dyn RecommenderAdapter,
    subject: u32,
    edited_items: Vec<u32>,
    /// Target in the adapter's item-key space.
    target_key: usize,
    policy: RecPolicy,
}

impl<'a> QueryReachObjective<'a> {
    pub fn new(
        adapter: &'a dyn RecommenderAdapter,
        subject: u32,
        edited_items: Vec<u32>,
        target_key: usize,
        policy: RecPolicy,
    ) -> Result<Self, AuditError> {
        if edited_items.is_empty() {
            return Err(AuditError::InvalidSpec("edited item list must be non-empty"));
        }
        Ok(QueryReachObjective {
            adapter,
            subject,
            edited_items,
            target_key,
            policy,
        })
    }
}

impl Objective for QueryReachObjective<'_> {
    fn dim(&self) -> usize {
        self.edited_items.len()
    }

    fn value(&self, params: &[f64]) -> f64 {
        let edits: Vec<RatingEdit> = self
            .edited_items
            .iter()
            .zip(params)
            .map(|(&item, &rating)| RatingEdit {
                user: self.subject,
                item,
                rating,
            })
            .collect();
        let query = BlackBoxQuery {
            subject: self.subject,
            edits,
            policy: self.policy,
        };
        match self.adapter.query(&query) {
            Ok(dist) => dist.prob_of(self.target_key).unwrap_or(0.0),
            Err(_) => f64::NAN,
        }
    }
}
