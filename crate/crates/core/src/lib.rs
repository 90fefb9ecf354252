//! Agency audits for matrix-factorization recommenders.
//!
//! The crate measures two things about a trained recommender: how far a user
//! can push the probability that a chosen item gets recommended to them by
//! editing their own ratings (reachability), and how far another user can
//! shift someone's recommendations by editing theirs (stability). Both are
//! posed as bounded maximization problems over rating values in `[1, 5]` and
//! solved with projected gradient ascent, a gradient-free estimator, or an
//! exhaustive corner search.
//!
//! Everything here is pure computation over in-memory data; file formats,
//! experiment drivers, and the command line live in the companion `recaudit`
//! crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adapter;
pub mod audit;
pub mod dataset;
pub mod mf;
pub mod optim;
pub mod policy;

pub use adapter::{
    blackbox_query, BlackBoxQuery, MfAdapter, QueryReachObjective, RatingEdit, RecommenderAdapter,
};
pub use audit::{
    baseline_reachability, hellinger, l2_distance, run_audit, AuditData, AuditError, AuditResult,
    AuditSpec, DistanceKind, MetricKind, RatingParams,
};
pub use dataset::{
    parse_movielens, Dataset, DataError, HoldoutSplit, Interaction, ParseError, SummaryStats,
};
pub use mf::{score, train_mf, update_item_vector, update_user_vector, MfConfig, MfError, MfModel};
pub use optim::{
    extreme_point_oracle, projected_gradient_ascent, zeroth_order_gradient, Objective,
    OptimError, OptimizerConfig, OptimizerKind,
};
pub use policy::{
    candidate_set, sample, softmax_distribution, top_one, PolicyError, RecPolicy,
    RecommendationDistribution,
};
