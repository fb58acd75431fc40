//! Shared fixtures for the benchmarks.

use poptail_core::dataset::{filter_interactions, split_categories};
use poptail_core::synthetic::{self, SyntheticConfig};
use poptail_core::{CategorySplit, Interactions};

/// A seeded synthetic corpus of the given size, filtered and split like a real dataset.
pub fn corpus(users: usize, items: usize) -> (Interactions, CategorySplit) {
    let config = SyntheticConfig {
        users,
        items,
        ..SyntheticConfig::default()
    };
    let ratings = synthetic::generate(&config);
    let inter = filter_interactions(&ratings, 20, 20).expect("synthetic corpus survives filtering");
    let split = split_categories(&inter, 0.8).expect("synthetic corpus has a head");
    (inter, split)
}
