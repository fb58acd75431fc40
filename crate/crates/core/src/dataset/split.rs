use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Entry, Interactions};
use crate::error::{Error, Result};
use crate::types::{Category, ItemIdx, UserIdx};

/// Partition of the catalog into short head (Γ′) and long tail (Γ).
///
/// An item is short-head iff its popularity is strictly greater than `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySplit {
    categories: Vec<Category>,
    pub threshold: u32,
    pub head_mass: f64,
    pub head_ratings: u64,
    pub total_ratings: u64,
}

impl CategorySplit {
    /// Rebuilds a split from per-item labels, e.g. when loading a prepared cache.
    pub fn from_categories(categories: Vec<Category>, popularity: &[u32], head_mass: f64) -> Result<Self> {
        if categories.len() != popularity.len() {
            return Err(Error::Mismatch(format!(
                "{} category labels for {} items",
                categories.len(),
                popularity.len()
            )));
        }
        let head_min = categories
            .iter()
            .zip(popularity)
            .filter(|(c, _)| **c == Category::ShortHead)
            .map(|(_, &p)| p)
            .min();
        let tail_max = categories
            .iter()
            .zip(popularity)
            .filter(|(c, _)| **c == Category::LongTail)
            .map(|(_, &p)| p)
            .max();
        let threshold = match (head_min, tail_max) {
            (Some(h), Some(t)) if h <= t => {
                return Err(Error::Mismatch(format!(
                    "short-head item with popularity {h} not above long-tail item with {t}"
                )))
            }
            (Some(h), _) => h.saturating_sub(1),
            (None, Some(t)) => t,
            (None, None) => 0,
        };
        let total_ratings = popularity.iter().map(|&p| p as u64).sum();
        let head_ratings = categories
            .iter()
            .zip(popularity)
            .filter(|(c, _)| **c == Category::ShortHead)
            .map(|(_, &p)| p as u64)
            .sum();
        Ok(CategorySplit {
            categories,
            threshold,
            head_mass,
            head_ratings,
            total_ratings,
        })
    }

    pub fn category(&self, item: ItemIdx) -> Category {
        self.categories[item.index()]
    }

    pub fn is_long_tail(&self, item: ItemIdx) -> bool {
        self.category(item) == Category::LongTail
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn n_items(&self) -> usize {
        self.categories.len()
    }

    pub fn items_in(&self, category: Category) -> impl Iterator<Item = ItemIdx> + '_ {
        self.categories
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == category)
            .map(|(i, _)| ItemIdx(i as u32))
    }

    pub fn long_tail(&self) -> Vec<ItemIdx> {
        self.items_in(Category::LongTail).collect()
    }

    pub fn short_head(&self) -> Vec<ItemIdx> {
        self.items_in(Category::ShortHead).collect()
    }

    pub fn n_long_tail(&self) -> usize {
        self.items_in(Category::LongTail).count()
    }

    pub fn n_short_head(&self) -> usize {
        self.n_items() - self.n_long_tail()
    }

    /// Share of all ratings that fall on short-head items.
    pub fn head_share(&self) -> f64 {
        if self.total_ratings == 0 {
            0.0
        } else {
            self.head_ratings as f64 / self.total_ratings as f64
        }
    }
}

/// Ranks items by popularity and takes the shortest prefix holding at least
/// `head_mass` of all ratings as the short head.
///
/// Items tied with the least popular prefix item join the short head as well, so
/// membership is decided by the strict rule `popularity > threshold`.
pub fn split_categories(inter: &Interactions, head_mass: f64) -> Result<CategorySplit> {
    if !(head_mass > 0.0 && head_mass < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "head_mass must lie in (0, 1), got {head_mass}"
        )));
    }
    let popularity = inter.popularity();
    let total: u64 = popularity.iter().map(|&p| p as u64).sum();

    let mut order: Vec<usize> = (0..popularity.len()).collect();
    order.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));

    let target = head_mass * total as f64;
    let mut cumulative = 0u64;
    let mut boundary = None;
    for &i in &order {
        if total == 0 {
            break;
        }
        cumulative += popularity[i] as u64;
        if cumulative as f64 >= target {
            boundary = Some(popularity[i]);
            break;
        }
    }

    // no short head at all only when the catalog holds no ratings
    let threshold = match boundary {
        Some(p) => p - 1,
        None => popularity.iter().copied().max().unwrap_or(0),
    };
    let categories = popularity
        .iter()
        .map(|&p| {
            if p > threshold {
                Category::ShortHead
            } else {
                Category::LongTail
            }
        })
        .collect();
    let head_ratings = popularity
        .iter()
        .filter(|&&p| p > threshold)
        .map(|&p| p as u64)
        .sum();
    Ok(CategorySplit {
        categories,
        threshold,
        head_mass,
        head_ratings,
        total_ratings: total,
    })
}

/// Train and test halves sharing one index space.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Interactions,
    pub test: Interactions,
    pub seed: u64,
    pub test_fraction: f64,
}

impl SplitData {
    /// Users with at least one held-out rating; all of them also have train ratings.
    pub fn test_users(&self) -> Vec<UserIdx> {
        self.test.active_users()
    }
}

/// Per-user random holdout of `ceil(test_fraction × |profile|)` ratings.
/// Users whose train share would be empty keep everything in train.
pub fn split_train_test(inter: &Interactions, test_fraction: f64, seed: u64) -> Result<SplitData> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<Entry> = Vec::with_capacity(inter.len());
    let mut test: Vec<Entry> = Vec::with_capacity(inter.len() / 4);

    for u in 0..inter.n_users() as u32 {
        let profile = inter.profile(UserIdx(u));
        let n = profile.len();
        let n_test = holdout_size(n, test_fraction);
        if n_test == 0 || n_test >= n {
            train.extend_from_slice(profile);
            continue;
        }
        let mut shuffled = profile.to_vec();
        shuffled.shuffle(&mut rng);
        test.extend_from_slice(&shuffled[..n_test]);
        train.extend_from_slice(&shuffled[n_test..]);
    }

    Ok(SplitData {
        train: inter.with_same_index(train),
        test: inter.with_same_index(test),
        seed,
        test_fraction,
    })
}

/// `ceil(fraction × n)`, tolerant of representation error in the product.
pub(crate) fn holdout_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Assignment of test users to epochs `0..n_epochs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub n_epochs: usize,
    pub seed: u64,
    epochs: Vec<Vec<UserIdx>>,
    assignment: BTreeMap<UserIdx, usize>,
}

impl EpochPlan {
    /// Users of one epoch, in the order they were drawn.
    pub fn users(&self, epoch: usize) -> &[UserIdx] {
        &self.epochs[epoch]
    }

    pub fn epochs(&self) -> &[Vec<UserIdx>] {
        &self.epochs
    }

    pub fn epoch_of(&self, user: UserIdx) -> Option<usize> {
        self.assignment.get(&user).copied()
    }

    pub fn n_users(&self) -> usize {
        self.assignment.len()
    }
}

/// Seeded uniform permutation of the users, cut into `n_epochs` groups whose sizes differ by
/// at most one. The larger groups come first.
pub fn assign_epochs(test_users: &[UserIdx], n_epochs: usize, seed: u64) -> Result<EpochPlan> {
    if n_epochs == 0 {
        return Err(Error::InvalidConfig("n_epochs must be at least 1".into()));
    }
    if test_users.is_empty() {
        return Err(Error::InvalidConfig("no test users to assign".into()));
    }
    let mut users = test_users.to_vec();
    users.sort_unstable();
    users.dedup();
    if n_epochs > users.len() {
        return Err(Error::TooManyEpochs {
            users: users.len(),
            epochs: n_epochs,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);

    let base = users.len() / n_epochs;
    let remainder = users.len() % n_epochs;
    let mut epochs = Vec::with_capacity(n_epochs);
    let mut assignment = BTreeMap::new();
    let mut start = 0;
    for e in 0..n_epochs {
        let size = base + usize::from(e < remainder);
        let group = users[start..start + size].to_vec();
        for &u in &group {
            assignment.insert(u, e);
        }
        epochs.push(group);
        start += size;
    }
    Ok(EpochPlan {
        n_epochs,
        seed,
        epochs,
        assignment,
    })
}
