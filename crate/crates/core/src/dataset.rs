//! Rating data: parsing, holdout splits, and corpus statistics.
//!
//! The on-disk format is the MovieLens `ratings.dat` layout: one interaction
//! per line, `UserID::MovieID::Rating::Timestamp`, `::` separators, integer
//! ratings in 1..=5. Users and items keep their external ids here; dense
//! 0-based indices are assigned by the model at training time.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// One (user, item, rating, timestamp) event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("expected 4 `::`-separated fields, found {0}")]
    FieldCount(usize),
    #[error("field `{0}` is not a number")]
    BadNumber(&'static str),
    #[error("rating {0} outside 1..=5")]
    RatingRange(i64),
    #[error("rating is not an integer")]
    RatingNotInteger,
    #[error("duplicate (user {user}, item {item}) pair")]
    Duplicate { user: u32, item: u32 },
}

/// Parse failure, tagged with the 1-based input line.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("duplicate (user {user}, item {item}) pair")]
    DuplicatePair { user: u32, item: u32 },
    #[error("rating {rating} for (user {user}, item {item}) outside [1, 5]")]
    RatingOutOfRange { user: u32, item: u32, rating: f64 },
    #[error("holdout horizon must be at least 1")]
    ZeroHorizon,
}

/// Corpus-level counts; `density_pct` is percent of the user-item grid filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub density_pct: f64,
}

/// Immutable interaction log with per-user and per-item views.
///
/// Construction validates that each (user, item) pair appears at most once
/// and that ratings lie in `[1, 5]`. Per-user and per-item lists are sorted
/// chronologically, ties broken by input order. The struct is never mutated
/// after construction, so sharing it across threads is safe.
#[derive(Debug, Clone)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    // Values are indices into `interactions`, chronologically sorted.
    per_user: BTreeMap<u32, Vec<usize>>,
    per_item: BTreeMap<u32, Vec<usize>>,
    rated_pairs: BTreeSet<(u32, u32)>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        // The views are functions of the interaction list.
        self.interactions == other.interactions
    }
}

/// Leave-last-k split. `heldout` maps each affected user to their
/// chronologically last `k` interactions; everything else stays in `train`.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: Dataset,
    pub heldout: BTreeMap<u32, Vec<Interaction>>,
    pub k: usize,
}

impl Dataset {
    /// Builds a dataset from raw interactions, keeping their input order.
    pub fn from_interactions(interactions: Vec<Interaction>) -> Result<Self, DataError> {
        let mut rated_pairs = BTreeSet::new();
        for it in &interactions {
            if !(it.rating >= 1.0 && it.rating <= 5.0) {
                return Err(DataError::RatingOutOfRange {
                    user: it.user_id,
                    item: it.item_id,
                    rating: it.rating,
                });
            }
            if !rated_pairs.insert((it.user_id, it.item_id)) {
                return Err(DataError::DuplicatePair {
                    user: it.user_id,
                    item: it.item_id,
                });
            }
        }

        let mut per_user: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut per_item: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (idx, it) in interactions.iter().enumerate() {
            per_user.entry(it.user_id).or_default().push(idx);
            per_item.entry(it.item_id).or_default().push(idx);
        }
        // Stable sort keeps input order among equal timestamps.
        for list in per_user.values_mut().chain(per_item.values_mut()) {
            list.sort_by_key(|&i| interactions[i].timestamp);
        }

        let user_ids = per_user.keys().copied().collect();
        let item_ids = per_item.keys().copied().collect();
        Ok(Dataset {
            interactions,
            user_ids,
            item_ids,
            per_user,
            per_item,
            rated_pairs,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.interactions.len()
    }

    /// Distinct user ids, ascending.
    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    /// Distinct item ids, ascending.
    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    /// The user's interactions oldest-first; empty for unknown users.
    pub fn user_history(&self, user_id: u32) -> impl Iterator<Item = &Interaction> {
        self.per_user
            .get(&user_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    /// The item's interactions oldest-first; empty for unknown items.
    pub fn item_raters(&self, item_id: u32) -> impl Iterator<Item = &Interaction> {
        self.per_item
            .get(&item_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn has_rated(&self, user_id: u32, item_id: u32) -> bool {
        self.rated_pairs.contains(&(user_id, item_id))
    }

    pub fn summary_stats(&self) -> SummaryStats {
        let cells = self.n_users() * self.n_items();
        let density_pct = if cells == 0 {
            0.0
        } else {
            100.0 * self.interactions.len() as f64 / cells as f64
        };
        SummaryStats {
            n_users: self.n_users(),
            n_items: self.n_items(),
            n_ratings: self.interactions.len(),
            density_pct,
        }
    }

    /// Item ids sorted by interaction count, most popular first.
    /// Equal counts order by ascending id so the ranking is reproducible.
    pub fn popularity_rank(&self) -> Vec<u32> {
        let mut ranked: Vec<(usize, u32)> = self
            .per_item
            .iter()
            .map(|(&id, list)| (list.len(), id))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.into_iter().map(|(_, id)| id).collect()
    }

    /// User ids sorted by interaction count, most active first.
    /// Equal counts order by ascending id so the ranking is reproducible.
    pub fn activity_rank(&self) -> Vec<u32> {
        let mut ranked: Vec<(usize, u32)> = self
            .per_user
            .iter()
            .map(|(&id, list)| (list.len(), id))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.into_iter().map(|(_, id)| id).collect()
    }

    /// Splits off each user's chronologically last `k` interactions.
    ///
    /// Users with `k` or fewer interactions stay entirely in the train split
    /// and do not appear in `heldout`, so every held-out user keeps at least
    /// one training interaction to anchor their history.
    pub fn holdout_split(&self, k: usize) -> Result<HoldoutSplit, DataError> {
        if k == 0 {
            return Err(DataError::ZeroHorizon);
        }
        let mut heldout_rows = BTreeSet::new();
        let mut heldout = BTreeMap::new();
        for (&user, rows) in &self.per_user {
            if rows.len() > k {
                let tail = &rows[rows.len() - k..];
                heldout_rows.extend(tail.iter().copied());
                heldout.insert(
                    user,
                    tail.iter().map(|&i| self.interactions[i]).collect(),
                );
            }
        }
        let train_rows: Vec<Interaction> = self
            .interactions
            .iter()
            .enumerate()
            .filter(|(i, _)| !heldout_rows.contains(i))
            .map(|(_, it)| *it)
            .collect();
        // Validity is inherited from `self`: dropping rows cannot introduce
        // duplicates or out-of-range ratings.
        let train = Dataset::from_interactions(train_rows).expect("subset of a valid dataset");
        Ok(HoldoutSplit { train, heldout, k })
    }

    /// Serializes back to `ratings.dat` lines in input order.
    ///
    /// Only integral ratings round-trip through this format; constructed
    /// datasets with fractional ratings are rendered with their fraction and
    /// will fail re-parsing, matching the source format's constraints.
    pub fn to_movielens_lines(&self) -> String {
        let mut out = String::new();
        for it in &self.interactions {
            if libm::trunc(it.rating) == it.rating {
                out.push_str(&format!(
                    "{}::{}::{}::{}\n",
                    it.user_id, it.item_id, it.rating as i64, it.timestamp
                ));
            } else {
                out.push_str(&format!(
                    "{}::{}::{}::{}\n",
                    it.user_id, it.item_id, it.rating, it.timestamp
                ));
            }
        }
        out
    }
}

/// Parses MovieLens `ratings.dat` content. Lines end in LF or CRLF; empty
/// lines are skipped. An empty input yields an empty dataset.
pub fn parse_movielens(input: &str) -> Result<Dataset, ParseError> {
    let mut interactions = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in input.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let err = |kind| ParseError {
            line: lineno + 1,
            kind,
        };
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(err(ParseErrorKind::FieldCount(fields.len())));
        }
        let user_id: u32 = fields[0]
            .parse()
            .map_err(|_| err(ParseErrorKind::BadNumber("user")))?;
        let item_id: u32 = fields[1]
            .parse()
            .map_err(|_| err(ParseErrorKind::BadNumber("item")))?;
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| err(ParseErrorKind::BadNumber("rating")))?;
        let timestamp: i64 = fields[3]
            .parse()
            .map_err(|_| err(ParseErrorKind::BadNumber("timestamp")))?;
        if !rating.is_finite() || libm::trunc(rating) != rating {
            return Err(err(ParseErrorKind::RatingNotInteger));
        }
        if !(1.0..=5.0).contains(&rating) {
            return Err(err(ParseErrorKind::RatingRange(rating as i64)));
        }
        if !seen.insert((user_id, item_id)) {
            return Err(err(ParseErrorKind::Duplicate {
                user: user_id,
                item: item_id,
            }));
        }
        interactions.push(Interaction {
            user_id,
            item_id,
            rating,
            timestamp,
        });
    }
    Ok(Dataset::from_interactions(interactions).expect("validated during parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        parse_movielens(
            "1::10::5::100\n1::20::3::200\n1::30::4::300\n2::10::1::150\n2::40::2::250\n",
        )
        .unwrap()
    }

    #[test]
    fn parses_counts_and_density() {
        let d = toy();
        let s = d.summary_stats();
        assert_eq!(s.n_users, 2);
        assert_eq!(s.n_items, 4);
        assert_eq!(s.n_ratings, 5);
        assert!((s.density_pct - 100.0 * 5.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn handles_crlf_and_blank_lines() {
        let d = parse_movielens("1::10::5::100\r\n\r\n2::10::3::50\n\n").unwrap();
        assert_eq!(d.n_interactions(), 2);
        assert_eq!(d.interactions()[1].rating, 3.0);
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        let d = parse_movielens("").unwrap();
        assert_eq!(d.n_interactions(), 0);
        assert_eq!(d.summary_stats().density_pct, 0.0);
    }

    #[test]
    fn rejects_malformed_lines() {
        let field_count = parse_movielens("1::10::5\n").unwrap_err();
        assert_eq!(field_count.kind, ParseErrorKind::FieldCount(3));
        let bad_num = parse_movielens("1::x::5::100\n").unwrap_err();
        assert_eq!(bad_num.kind, ParseErrorKind::BadNumber("item"));
        let range = parse_movielens("1::10::6::100\n").unwrap_err();
        assert_eq!(range.kind, ParseErrorKind::RatingRange(6));
        let frac = parse_movielens("1::10::3.5::100\n").unwrap_err();
        assert_eq!(frac.kind, ParseErrorKind::RatingNotInteger);
        let dup = parse_movielens("1::10::3::100\n1::10::4::200\n").unwrap_err();
        assert_eq!(dup.line, 2);
    }

    #[test]
    fn history_is_chronological_with_stable_ties() {
        let d = parse_movielens("1::10::5::300\n1::20::3::100\n1::30::4::100\n").unwrap();
        let items: Vec<u32> = d.user_history(1).map(|it| it.item_id).collect();
        // Equal timestamps keep input order: 20 before 30.
        assert_eq!(items, [20, 30, 10]);
    }

    #[test]
    fn holdout_takes_chronological_tail() {
        let d = toy();
        let split = d.holdout_split(1).unwrap();
        assert_eq!(split.heldout[&1][0].item_id, 30);
        assert_eq!(split.heldout[&2][0].item_id, 40);
        assert_eq!(split.train.n_interactions(), 3);
        // Union of train and heldout reproduces the source interactions.
        let mut total = split.train.n_interactions();
        total += split.heldout.values().map(|v| v.len()).sum::<usize>();
        assert_eq!(total, d.n_interactions());
    }

    #[test]
    fn holdout_keeps_short_histories_in_train() {
        // User 2 has exactly 2 interactions; k = 2 must leave them alone.
        let d = toy();
        let split = d.holdout_split(2).unwrap();
        assert!(!split.heldout.contains_key(&2));
        assert_eq!(split.heldout[&1].len(), 2);
    }

    #[test]
    fn holdout_zero_is_rejected() {
        assert_eq!(toy().holdout_split(0).unwrap_err(), DataError::ZeroHorizon);
    }

    #[test]
    fn ranks_break_ties_by_id() {
        let d = toy();
        // Item 10 has 2 ratings, the rest 1 each.
        assert_eq!(d.popularity_rank(), [10, 20, 30, 40]);
        // User 1 has 3 ratings, user 2 has 2.
        assert_eq!(d.activity_rank(), [1, 2]);
    }

    #[test]
    fn roundtrips_through_lines() {
        let d = toy();
        let reparsed = parse_movielens(&d.to_movielens_lines()).unwrap();
        assert_eq!(d, reparsed);
    }
}
