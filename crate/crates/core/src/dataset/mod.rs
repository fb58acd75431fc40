//! Rating ingestion and experiment preparation.
//!
//! Preparation runs in a fixed order: [`parse_ratings`], [`filter_interactions`] (one user
//! pass, then one item pass), [`split_categories`] on the filtered data, [`split_train_test`]
//! and finally [`assign_epochs`] over the test users.

mod cache;
mod parse;
mod split;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ItemId, ItemIdx, UserId, UserIdx};

pub use cache::{load_prepared, read_manifest, write_prepared, PreparedDataset, PreparedManifest};
pub use parse::{parse_ratings, parse_reader, ParseReport, RatingFormat, RatingScale};
pub use split::{assign_epochs, split_categories, split_train_test, CategorySplit, EpochPlan, SplitData};

/// One parsed rating record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: UserId,
    pub item: ItemId,
    pub value: f32,
    /// Carried through parsing only; nothing downstream reads it.
    pub timestamp: Option<i64>,
}

/// A rating in dense index space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub user: UserIdx,
    pub item: ItemIdx,
    pub value: f32,
}

/// A rating matrix with dense index maps and per-item popularity counts.
///
/// Entries are stored sorted by `(user, item)` so that user profiles are contiguous slices.
/// Train and test halves of a split share the index maps of their parent, so the same
/// `UserIdx`/`ItemIdx` refers to the same entity in both.
#[derive(Debug, Clone)]
pub struct Interactions {
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_lookup: HashMap<UserId, UserIdx>,
    item_lookup: HashMap<ItemId, ItemIdx>,
    entries: Vec<Entry>,
    user_offsets: Vec<usize>,
    popularity: Vec<u32>,
}

impl Interactions {
    /// Builds index maps over exactly the users and items present in `ratings`.
    /// Duplicate `(user, item)` pairs keep the last occurrence.
    pub fn from_ratings(ratings: &[Rating]) -> Self {
        let mut users: Vec<UserId> = ratings.iter().map(|r| r.user).collect();
        users.sort_unstable();
        users.dedup();
        let mut items: Vec<ItemId> = ratings.iter().map(|r| r.item).collect();
        items.sort_unstable();
        items.dedup();

        let user_lookup = lookup(&users, |i| UserIdx(i));
        let item_lookup = lookup(&items, |i| ItemIdx(i));
        let entries = ratings
            .iter()
            .map(|r| Entry {
                user: user_lookup[&r.user],
                item: item_lookup[&r.item],
                value: r.value,
            })
            .collect();
        Self::assemble(users, items, user_lookup, item_lookup, entries)
    }

    /// A new collection over `entries` that reuses this collection's index maps.
    pub fn with_same_index(&self, entries: Vec<Entry>) -> Self {
        Self::assemble(
            self.users.clone(),
            self.items.clone(),
            self.user_lookup.clone(),
            self.item_lookup.clone(),
            entries,
        )
    }

    /// Builds a collection from explicit catalogs. Both id lists must be sorted and unique;
    /// every rating must reference listed ids.
    pub fn from_parts(users: Vec<UserId>, items: Vec<ItemId>, ratings: &[Rating]) -> Result<Self> {
        let sorted_unique = |v: &[u64]| v.windows(2).all(|w| w[0] < w[1]);
        let raw_users: Vec<u64> = users.iter().map(|u| u.0).collect();
        let raw_items: Vec<u64> = items.iter().map(|i| i.0).collect();
        if !sorted_unique(&raw_users) || !sorted_unique(&raw_items) {
            return Err(Error::InvalidConfig(
                "catalog ids must be sorted and unique".into(),
            ));
        }
        let user_lookup = lookup(&users, |i| UserIdx(i));
        let item_lookup = lookup(&items, |i| ItemIdx(i));
        let mut entries = Vec::with_capacity(ratings.len());
        for r in ratings {
            let user = *user_lookup.get(&r.user).ok_or(Error::UnknownId {
                kind: "user",
                id: r.user.0,
            })?;
            let item = *item_lookup.get(&r.item).ok_or(Error::UnknownId {
                kind: "item",
                id: r.item.0,
            })?;
            entries.push(Entry {
                user,
                item,
                value: r.value,
            });
        }
        Ok(Self::assemble(users, items, user_lookup, item_lookup, entries))
    }

    fn assemble(
        users: Vec<UserId>,
        items: Vec<ItemId>,
        user_lookup: HashMap<UserId, UserIdx>,
        item_lookup: HashMap<ItemId, ItemIdx>,
        mut entries: Vec<Entry>,
    ) -> Self {
        entries.sort_by_key(|e| (e.user, e.item));
        // keep the last occurrence of a duplicated pair; the sort above is stable
        let mut deduped: Vec<Entry> = Vec::with_capacity(entries.len());
        for e in entries {
            match deduped.last_mut() {
                Some(last) if last.user == e.user && last.item == e.item => *last = e,
                _ => deduped.push(e),
            }
        }
        let entries = deduped;

        let mut user_offsets = vec![0usize; users.len() + 1];
        let mut popularity = vec![0u32; items.len()];
        for e in &entries {
            user_offsets[e.user.index() + 1] += 1;
            popularity[e.item.index()] += 1;
        }
        for u in 0..users.len() {
            user_offsets[u + 1] += user_offsets[u];
        }

        Interactions {
            users,
            items,
            user_lookup,
            item_lookup,
            entries,
            user_offsets,
            popularity,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of rating records.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// The ratings of one user, sorted by item.
    pub fn profile(&self, user: UserIdx) -> &[Entry] {
        let u = user.index();
        &self.entries[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn popularity(&self) -> &[u32] {
        &self.popularity
    }

    pub fn item_popularity(&self, item: ItemIdx) -> u32 {
        self.popularity[item.index()]
    }

    pub fn user_ids(&self) -> &[UserId] {
        &self.users
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.items
    }

    pub fn user_id(&self, user: UserIdx) -> UserId {
        self.users[user.index()]
    }

    pub fn item_id(&self, item: ItemIdx) -> ItemId {
        self.items[item.index()]
    }

    pub fn user_idx(&self, id: UserId) -> Option<UserIdx> {
        self.user_lookup.get(&id).copied()
    }

    pub fn item_idx(&self, id: ItemId) -> Option<ItemIdx> {
        self.item_lookup.get(&id).copied()
    }

    /// Users with at least one rating in this collection.
    pub fn active_users(&self) -> Vec<UserIdx> {
        (0..self.n_users() as u32)
            .map(UserIdx)
            .filter(|&u| !self.profile(u).is_empty())
            .collect()
    }

    /// SHA-256 over the raw-id entries, used to tie checkpoints to the data they were fit on.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(self.user_id(e.user).0.to_le_bytes());
            hasher.update(self.item_id(e.item).0.to_le_bytes());
            hasher.update(e.value.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Back to raw-id records (timestamps are not retained).
    pub fn to_ratings(&self) -> Vec<Rating> {
        self.entries
            .iter()
            .map(|e| Rating {
                user: self.user_id(e.user),
                item: self.item_id(e.item),
                value: e.value,
                timestamp: None,
            })
            .collect()
    }
}

fn lookup<K: Copy + Eq + std::hash::Hash, V>(ids: &[K], wrap: impl Fn(u32) -> V) -> HashMap<K, V> {
    ids.iter()
        .enumerate()
        .map(|(i, &id)| (id, wrap(i as u32)))
        .collect()
}

/// Drops users with fewer than `min_user` ratings, then drops items with fewer than
/// `min_item` ratings among the survivors. Each pass runs once; the result is not iterated to a
/// fixed point, so a user can end up below `min_user` after the item pass.
pub fn filter_interactions(ratings: &[Rating], min_user: usize, min_item: usize) -> Result<Interactions> {
    let mut user_counts: HashMap<UserId, usize> = HashMap::new();
    for r in ratings {
        *user_counts.entry(r.user).or_default() += 1;
    }
    let after_users: Vec<Rating> = ratings
        .iter()
        .filter(|r| user_counts[&r.user] >= min_user)
        .copied()
        .collect();

    let mut item_counts: HashMap<ItemId, usize> = HashMap::new();
    for r in &after_users {
        *item_counts.entry(r.item).or_default() += 1;
    }
    let kept: Vec<Rating> = after_users
        .into_iter()
        .filter(|r| item_counts[&r.item] >= min_item)
        .collect();

    if kept.is_empty() {
        return Err(Error::EmptyDataset { min_user, min_item });
    }
    Ok(Interactions::from_ratings(&kept))
}
