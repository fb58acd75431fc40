use std::fmt;

use serde::{Deserialize, Serialize};

/// Raw user identifier as it appears in the rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u64);

/// Raw item identifier as it appears in the rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub u64);

/// Dense user index in `0..n_users`. Indices follow ascending raw id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserIdx(pub u32);

/// Dense item index in `0..n_items`. Indices follow ascending raw id order, so comparing
/// indices is the same as comparing raw ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemIdx(pub u32);

impl UserIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Popularity class of an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Γ: items holding the bottom share of the rating mass.
    LongTail,
    /// Γ′: the most popular items.
    ShortHead,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::LongTail, Category::ShortHead];

    pub fn label(self) -> &'static str {
        match self {
            Category::LongTail => "tail",
            Category::ShortHead => "head",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "tail" => Some(Category::LongTail),
            "head" => Some(Category::ShortHead),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// An ordered recommendation list of `(item, score)` pairs for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredList {
    pub user: UserIdx,
    pub entries: Vec<(ItemIdx, f64)>,
    pub produced_by: String,
    /// Set when fewer entries than requested could be produced.
    pub short: bool,
}

impl ScoredList {
    pub fn new(user: UserIdx, produced_by: impl Into<String>) -> Self {
        ScoredList {
            user,
            entries: Vec::new(),
            produced_by: produced_by.into(),
            short: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemIdx> + '_ {
        self.entries.iter().map(|&(item, _)| item)
    }

    pub fn item_vec(&self) -> Vec<ItemIdx> {
        self.items().collect()
    }

    /// The first `n` entries, flagged short if fewer than `n` exist.
    pub fn prefix(&self, n: usize, produced_by: impl Into<String>) -> ScoredList {
        ScoredList {
            user: self.user,
            entries: self.entries.iter().take(n).copied().collect(),
            produced_by: produced_by.into(),
            short: self.entries.len() < n,
        }
    }
}
