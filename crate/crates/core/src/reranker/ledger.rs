use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::CategorySplit;
use crate::types::{Category, ItemIdx, ScoredList};

/// Append-only record of every list served so far.
///
/// Keeps both the distinct items seen and per-category slot counts, so coverage can be read
/// either by item identity or by multiplicity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryLedger {
    seen_items: BTreeSet<ItemIdx>,
    seen_long_tail: usize,
    pub total_slots: usize,
    pub count_long: usize,
    pub count_short: usize,
}

impl HistoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, served: &ScoredList, split: &CategorySplit) {
        for item in served.items() {
            let category = split.category(item);
            match category {
                Category::LongTail => self.count_long += 1,
                Category::ShortHead => self.count_short += 1,
            }
            if self.seen_items.insert(item) && category == Category::LongTail {
                self.seen_long_tail += 1;
            }
        }
        self.total_slots += served.len();
    }

    pub fn seen_items(&self) -> &BTreeSet<ItemIdx> {
        &self.seen_items
    }

    /// Distinct long-tail items recommended so far.
    pub fn seen_long_tail(&self) -> usize {
        self.seen_long_tail
    }

    pub fn count(&self, category: Category) -> usize {
        match category {
            Category::LongTail => self.count_long,
            Category::ShortHead => self.count_short,
        }
    }

    pub fn covers(&self, category: Category) -> bool {
        self.count(category) > 0
    }

    pub fn is_empty(&self) -> bool {
        self.total_slots == 0
    }
}
