//! Deterministic synthetic rating logs shaped like the MovieLens corpus.
//!
//! Item popularity follows a power law over item index and user activity
//! decays over user index, so popularity and activity group studies find
//! real structure. Each user's early ratings draw from a steep popularity
//! law and their later ratings from a flat one, mirroring how log histories
//! drift from blockbusters toward the deep catalog. Ratings come from a
//! planted 4-dimensional taste model plus a popularity lift (widely watched
//! titles also rate higher, as in real rating logs) plus noise, rounded to
//! the integer scale. Every item is guaranteed at least one rating, so item
//! counts survive the round trip through a file.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recaudit_core::dataset::{DataError, Dataset, Interaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub users: u32,
    pub items: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 300,
            items: 400,
            seed: 7,
        }
    }
}

const TASTE_DIM: usize = 4;

/// How many items user `u` rates before the coverage pass: a decaying
/// activity curve from 75 down toward 15.
fn activity(u: u32) -> usize {
    15 + (60.0 / (1.0 + 0.02 * u as f64)) as usize
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset, DataError> {
    let n_users = spec.users as usize;
    let n_items = spec.items as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let user_taste: Vec<[f64; TASTE_DIM]> = (0..n_users).map(|_| draw_taste(&mut rng)).collect();
    let item_taste: Vec<[f64; TASTE_DIM]> = (0..n_items).map(|_| draw_taste(&mut rng)).collect();

    let head_weights: Vec<f64> = (0..n_items).map(|m| 1.0 / ((m + 1) as f64).powf(1.2)).collect();
    let tail_weights: Vec<f64> = (0..n_items).map(|m| 1.0 / ((m + 1) as f64).powf(0.25)).collect();
    let by_head = WeightedIndex::new(&head_weights).expect("power-law weights are finite and positive");
    let by_tail = WeightedIndex::new(&tail_weights).expect("power-law weights are finite and positive");

    // Per-user item lists in draw order; draw order becomes chronology.
    let mut chosen: Vec<Vec<usize>> = Vec::with_capacity(n_users);
    let mut item_is_rated = vec![false; n_items];
    for u in 0..n_users {
        let want = activity(u as u32).min(n_items);
        let head_want = want * 3 / 5;
        let mut list = Vec::with_capacity(want);
        let mut seen = vec![false; n_items];
        while list.len() < want {
            let m = if list.len() < head_want {
                by_head.sample(&mut rng)
            } else {
                by_tail.sample(&mut rng)
            };
            if !seen[m] {
                seen[m] = true;
                item_is_rated[m] = true;
                list.push(m);
            }
        }
        chosen.push(list);
    }

    // Coverage pass: orphaned tail items get one rating each, assigned
    // round-robin so no single user balloons.
    for (m, rated) in item_is_rated.iter_mut().enumerate() {
        if !*rated {
            chosen[m % n_users].push(m);
            *rated = true;
        }
    }

    let mut interactions = Vec::new();
    for (u, list) in chosen.iter().enumerate() {
        for (pos, &m) in list.iter().enumerate() {
            let dot: f64 = (0..TASTE_DIM)
                .map(|c| user_taste[u][c] * item_taste[m][c])
                .sum();
            let noise = rng.random_range(-0.5..0.5);
            let rating = (3.0 + 2.2 * dot + pop_lift(m) + noise).round().clamp(1.0, 5.0);
            interactions.push(Interaction {
                user_id: u as u32 + 1,
                item_id: m as u32 + 1,
                rating,
                timestamp: u as i64 * 1000 + pos as i64,
            });
        }
    }
    Dataset::from_interactions(interactions)
}

pub fn generate_lines(spec: &SynthSpec) -> Result<String, DataError> {
    Ok(generate(spec)?.to_movielens_lines())
}

fn draw_taste(rng: &mut ChaCha8Rng) -> [f64; TASTE_DIM] {
    core::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

/// Quality bonus decaying with popularity rank: the head of the catalog
/// rates about +0.65 above par, the deep tail about -0.25.
fn pop_lift(m: usize) -> f64 {
    0.9 / (1.0 + 0.03 * m as f64) - 0.25
}
