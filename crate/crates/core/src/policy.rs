//! Item selection on top of model scores: candidate filtering, the
//! beta-softmax recommendation distribution, and deterministic top-1 choice.
//!
//! Candidates are always the items a user has not rated yet. The softmax
//! temperature `beta` controls how peaked recommendations are: 0 is uniform
//! over candidates, large values approach deterministic top-1.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("{candidates} candidates but {scores} scores")]
    LengthMismatch { candidates: usize, scores: usize },
    #[error("score for candidate {0} is not finite")]
    NonFiniteScore(usize),
    #[error("beta must be finite and >= 0")]
    BadBeta,
}

/// How the system turns scores into a recommendation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecPolicy {
    /// Highest score wins, ties to the smallest item index.
    TopOne,
    /// Sample proportional to `exp(beta * score)`.
    Softmax { beta: f64 },
}

/// Probabilities over a candidate list; `items[i]` occurs with `probs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationDistribution {
    pub items: Vec<usize>,
    pub probs: Vec<f64>,
}

impl RecommendationDistribution {
    pub fn prob_of(&self, item: usize) -> Option<f64> {
        self.items
            .iter()
            .position(|&m| m == item)
            .map(|pos| self.probs[pos])
    }
}

/// All item indices in `0..n_items` absent from `rated`, ascending.
pub fn candidate_set(rated: &[usize], n_items: usize) -> Result<Vec<usize>, PolicyError> {
    let mut is_rated = alloc::vec![false; n_items];
    for &m in rated {
        if m < n_items {
            is_rated[m] = true;
        }
    }
    let out: Vec<usize> = (0..n_items).filter(|&m| !is_rated[m]).collect();
    if out.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    Ok(out)
}

/// Beta-softmax over candidate scores, computed max-shifted so a huge score
/// gap saturates to a one-hot distribution instead of overflowing.
pub fn softmax_distribution(
    candidates: &[usize],
    scores: &[f64],
    beta: f64,
) -> Result<RecommendationDistribution, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    if candidates.len() != scores.len() {
        return Err(PolicyError::LengthMismatch {
            candidates: candidates.len(),
            scores: scores.len(),
        });
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(PolicyError::BadBeta);
    }
    let mut max = f64::NEG_INFINITY;
    for (pos, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(PolicyError::NonFiniteScore(candidates[pos]));
        }
        if s > max {
            max = s;
        }
    }
    let mut probs: Vec<f64> = scores.iter().map(|&s| libm::exp(beta * (s - max))).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    Ok(RecommendationDistribution {
        items: candidates.to_vec(),
        probs,
    })
}

/// Index of the highest-scoring candidate; ties go to the smallest item
/// index so reruns pick the same item.
pub fn top_one(candidates: &[usize], scores: &[f64]) -> Result<usize, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    if candidates.len() != scores.len() {
        return Err(PolicyError::LengthMismatch {
            candidates: candidates.len(),
            scores: scores.len(),
        });
    }
    let mut best_pos = 0usize;
    for (pos, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(PolicyError::NonFiniteScore(candidates[pos]));
        }
        let better = s > scores[best_pos]
            || (s == scores[best_pos] && candidates[pos] < candidates[best_pos]);
        if better {
            best_pos = pos;
        }
    }
    Ok(candidates[best_pos])
}

/// Draws one item from the distribution using the caller's generator.
pub fn sample<R: Rng + ?Sized>(dist: &RecommendationDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (pos, &p) in dist.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return dist.items[pos];
        }
    }
    // Rounding can leave acc slightly below 1; fall back to the last item.
    *dist.items.last().expect("distribution is non-empty")
}

impl RecPolicy {
    /// The recommendation distribution this policy induces over candidates.
    /// Top-1 is a point mass on the winning item.
    pub fn distribution(
        &self,
        candidates: &[usize],
        scores: &[f64],
    ) -> Result<RecommendationDistribution, PolicyError> {
        match *self {
            RecPolicy::Softmax { beta } => softmax_distribution(candidates, scores, beta),
            RecPolicy::TopOne => {
                let winner = top_one(candidates, scores)?;
                let probs = candidates
                    .iter()
                    .map(|&m| if m == winner { 1.0 } else { 0.0 })
                    .collect();
                Ok(RecommendationDistribution {
                    items: candidates.to_vec(),
                    probs,
                })
            }
        }
    }
}
