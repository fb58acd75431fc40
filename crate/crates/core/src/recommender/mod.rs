//! Base recommenders that produce the candidate lists handed to the re-rankers.

mod checkpoint;
mod rankals;

use std::cmp::Ordering;

use crate::dataset::Interactions;
use crate::types::{ItemIdx, ScoredList, UserIdx};

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelManifest, FACTORS_FILE, MODEL_MANIFEST_FILE};
pub use rankals::{pairwise_objective, train, FactorModel, SupportWeight, TrainConfig, TrainReport};

/// A scoring model over a fixed catalog. Implementations are read-only after construction,
/// so lists for different users can be computed concurrently.
pub trait Recommender: Sync {
    fn label(&self) -> &str;

    fn n_items(&self) -> usize;

    /// Scores for every catalog item, indexed by `ItemIdx`.
    fn scores(&self, user: UserIdx) -> Vec<f64>;

    /// The `n` best items outside `exclude`, ties broken by ascending item index.
    fn top_n(&self, user: UserIdx, n: usize, exclude: &[ItemIdx]) -> ScoredList {
        let mut mask = vec![false; self.n_items()];
        for item in exclude {
            mask[item.index()] = true;
        }
        top_n_from_scores(user, &self.scores(user), n, &mask, self.label())
    }

    /// The `n` best items the user has not rated in `train`.
    fn candidates(&self, user: UserIdx, n: usize, train: &Interactions) -> ScoredList {
        let exclude: Vec<ItemIdx> = train.profile(user).iter().map(|e| e.item).collect();
        self.top_n(user, n, &exclude)
    }
}

fn rank_order(a: &(ItemIdx, f64), b: &(ItemIdx, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn top_n_from_scores(user: UserIdx, scores: &[f64], n: usize, excluded: &[bool], label: &str) -> ScoredList {
    let mut pool: Vec<(ItemIdx, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded[*i])
        .map(|(i, &s)| (ItemIdx(i as u32), s))
        .collect();
    let short = pool.len() < n;
    if pool.len() > n && n > 0 {
        pool.select_nth_unstable_by(n - 1, rank_order);
        pool.truncate(n);
    }
    pool.truncate(n);
    pool.sort_by(rank_order);
    ScoredList {
        user,
        entries: pool,
        produced_by: label.to_string(),
        short,
    }
}

/// Scores every item by its train popularity. Deterministic stand-in for the factor model.
#[derive(Debug, Clone)]
pub struct PopularityRanker {
    popularity: Vec<u32>,
}

impl PopularityRanker {
    pub fn new(train: &Interactions) -> Self {
        PopularityRanker {
            popularity: train.popularity().to_vec(),
        }
    }

    pub fn from_popularity(popularity: Vec<u32>) -> Self {
        PopularityRanker { popularity }
    }
}

impl Recommender for PopularityRanker {
    fn label(&self) -> &str {
        "popularity"
    }

    fn n_items(&self) -> usize {
        self.popularity.len()
    }

    fn scores(&self, _user: UserIdx) -> Vec<f64> {
        self.popularity.iter().map(|&p| p as f64).collect()
    }
}
