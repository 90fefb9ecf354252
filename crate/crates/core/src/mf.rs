//! Matrix factorization: alternating least squares training and the
//! closed-form single-row updates the audits rely on.
//!
//! A model holds user factors `P` (n x d) and item factors `Q` (m x d); the
//! predicted rating is the row dot product `P[i] . Q[j]`. Training minimizes
//! squared error over observed entries plus `reg * (|P|^2 + |Q|^2)`, and each
//! alternation solves the same ridge system as [`update_user_vector`] and
//! [`update_item_vector`], so audit-time refits mirror training exactly.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::Dataset;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MfError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("rated matrix has {rows} rows but {ratings} ratings were supplied")]
    DimensionMismatch { rows: usize, ratings: usize },
    #[error("normal equations are numerically singular; use a ridge weight > 0")]
    SingularSystem,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("index {index} out of range ({len} {kind})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },
}

/// Training hyperparameters.
///
/// `learning_rate` is carried for gradient-based trainers and recorded in
/// checkpoints; the ALS trainer solves each row exactly and ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfConfig {
    pub dim: usize,
    pub reg: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            dim: 100,
            reg: 5.0,
            epochs: 15,
            learning_rate: 0.005,
            seed: 0,
        }
    }
}

impl MfConfig {
    fn validate(&self) -> Result<(), MfError> {
        if self.dim == 0 {
            return Err(MfError::InvalidConfig("dim must be at least 1"));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(MfError::InvalidConfig("reg must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(MfError::InvalidConfig("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MfError::InvalidConfig("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// Trained factors plus the id maps tying matrix rows back to external ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub config: MfConfig,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    user_index: BTreeMap<u32, usize>,
    item_index: BTreeMap<u32, usize>,
    /// Objective value after each training epoch; not checkpointed.
    pub train_loss: Vec<f64>,
}

impl MfModel {
    /// Assembles a model from pre-existing factors and id maps. Ids must be
    /// strictly ascending and match the factor row counts.
    pub fn from_parts(
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        config: MfConfig,
        user_ids: Vec<u32>,
        item_ids: Vec<u32>,
    ) -> Result<Self, MfError> {
        if p.nrows() != user_ids.len() || q.nrows() != item_ids.len() {
            return Err(MfError::InvalidConfig("factor rows must match id counts"));
        }
        if p.ncols() != config.dim || q.ncols() != config.dim {
            return Err(MfError::InvalidConfig("factor columns must match dim"));
        }
        if user_ids.windows(2).any(|w| w[0] >= w[1]) || item_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfError::InvalidConfig("id maps must be strictly ascending"));
        }
        let user_index = user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_index = item_ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        Ok(MfModel {
            p,
            q,
            config,
            user_ids,
            item_ids,
            user_index,
            item_index,
            train_loss: Vec::new(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    pub fn user_idx(&self, user_id: u32) -> Option<usize> {
        self.user_index.get(&user_id).copied()
    }

    pub fn item_idx(&self, item_id: u32) -> Option<usize> {
        self.item_index.get(&item_id).copied()
    }

    pub fn user_id(&self, idx: usize) -> Option<u32> {
        self.user_ids.get(idx).copied()
    }

    pub fn item_id(&self, idx: usize) -> Option<u32> {
        self.item_ids.get(idx).copied()
    }
}

/// Predicted score `P[i] . Q[j]` for dense indices.
pub fn score(model: &MfModel, user_idx: usize, item_idx: usize) -> Result<f64, MfError> {
    if user_idx >= model.p.nrows() {
        return Err(MfError::IndexOutOfRange {
            kind: "users",
            index: user_idx,
            len: model.p.nrows(),
        });
    }
    if item_idx >= model.q.nrows() {
        return Err(MfError::IndexOutOfRange {
            kind: "items",
            index: item_idx,
            len: model.q.nrows(),
        });
    }
    Ok(model.p.row(user_idx).dot(&model.q.row(item_idx)))
}

/// Solves `argmin_x |A x - b|^2 + ridge * |x|^2` through the normal
/// equations `(A' A + ridge I) x = A' b`, factored with Cholesky. The
/// solution is linear in `b` for fixed `A`.
fn ridge_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>, MfError> {
    if a.nrows() != b.len() {
        return Err(MfError::DimensionMismatch {
            rows: a.nrows(),
            ratings: b.len(),
        });
    }
    let mut ata = a.tr_mul(a);
    for i in 0..ata.nrows() {
        ata[(i, i)] += ridge;
    }
    let chol = nalgebra::linalg::Cholesky::new(ata).ok_or(MfError::SingularSystem)?;
    Ok(chol.solve(&a.tr_mul(b)))
}

/// Refits one user vector from the item vectors of everything they rated.
///
/// `q_rated` stacks the rated items' vectors (one row per rating) and
/// `ratings` holds the matching rating values.
pub fn update_user_vector(
    q_rated: &DMatrix<f64>,
    ratings: &DVector<f64>,
    ridge: f64,
) -> Result<DVector<f64>, MfError> {
    ridge_lstsq(q_rated, ratings, ridge)
}

/// Refits one item vector from the user vectors of everyone who rated it.
/// Same least-squares solve as [`update_user_vector`] with roles swapped.
pub fn update_item_vector(
    p_rated: &DMatrix<f64>,
    ratings: &DVector<f64>,
    ridge: f64,
) -> Result<DVector<f64>, MfError> {
    ridge_lstsq(p_rated, ratings, ridge)
}

/// Trains factors by alternating exact row solves.
///
/// Deterministic for a fixed seed: factors are initialized from a counter
/// based stream cipher and rows are visited in index order on one thread, so
/// identical inputs give bitwise-identical factors on the same platform.
pub fn train_mf(train: &Dataset, config: &MfConfig) -> Result<MfModel, MfError> {
    config.validate()?;
    if train.n_interactions() == 0 {
        return Err(MfError::EmptyDataset);
    }
    let d = config.dim;
    let user_ids: Vec<u32> = train.user_ids().to_vec();
    let item_ids: Vec<u32> = train.item_ids().to_vec();
    let n = user_ids.len();
    let m = item_ids.len();
    let user_index: BTreeMap<u32, usize> =
        user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: BTreeMap<u32, usize> =
        item_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // Dense per-row observation lists, index order.
    let mut by_user: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); n];
    let mut by_item: Vec<Vec<(usize, f64)>> = alloc::vec![Vec::new(); m];
    for it in train.interactions() {
        let u = user_index[&it.user_id];
        let v = item_index[&it.item_id];
        by_user[u].push((v, it.rating));
        by_item[v].push((u, it.rating));
    }

    // Fill order (P row-major, then Q row-major) is part of the seed
    // contract; reordering would silently change every trained model.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut p = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * scale);
    let mut q = DMatrix::from_fn(m, d, |_, _| rng.random::<f64>() * scale);

    let gather =
        |rows: &DMatrix<f64>, obs: &[(usize, f64)]| -> (DMatrix<f64>, DVector<f64>) {
            let a = DMatrix::from_fn(obs.len(), d, |r, c| rows[(obs[r].0, c)]);
            let b = DVector::from_fn(obs.len(), |r, _| obs[r].1);
            (a, b)
        };

    let mut train_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for (u, obs) in by_user.iter().enumerate() {
            if obs.is_empty() {
                p.row_mut(u).fill(0.0);
                continue;
            }
            let (a, b) = gather(&q, obs);
            let x = ridge_lstsq(&a, &b, config.reg)?;
            p.row_mut(u).tr_copy_from(&x);
        }
        for (v, obs) in by_item.iter().enumerate() {
            if obs.is_empty() {
                q.row_mut(v).fill(0.0);
                continue;
            }
            let (a, b) = gather(&p, obs);
            let x = ridge_lstsq(&a, &b, config.reg)?;
            q.row_mut(v).tr_copy_from(&x);
        }

        let mut loss = config.reg * (p.norm_squared() + q.norm_squared());
        for (u, obs) in by_user.iter().enumerate() {
            for &(v, r) in obs {
                let e = p.row(u).dot(&q.row(v)) - r;
                loss += e * e;
            }
        }
        if !loss.is_finite() {
            return Err(MfError::Diverged { epoch });
        }
        train_loss.push(loss);
    }

    Ok(MfModel {
        p,
        q,
        config: *config,
        user_ids,
        item_ids,
        user_index,
        item_index,
        train_loss,
    })
}
