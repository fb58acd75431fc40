use super::{HistoryLedger, RerankConfig, SmoothForm, UserCategoryPreference, Variant};
use crate::dataset::CategorySplit;
use crate::types::{Category, ItemIdx, ScoredList};

/// Category slot counts of a coverage context: the partial output list for list-based
/// variants, the history ledger for temporal ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoverageCounts {
    pub total: usize,
    pub long: usize,
    pub short: usize,
}

impl CoverageCounts {
    pub fn from_items(items: impl IntoIterator<Item = ItemIdx>, split: &CategorySplit) -> Self {
        let mut counts = CoverageCounts::default();
        for item in items {
            counts.add(split.category(item));
        }
        counts
    }

    pub fn from_ledger(ledger: &HistoryLedger) -> Self {
        CoverageCounts {
            total: ledger.total_slots,
            long: ledger.count_long,
            short: ledger.count_short,
        }
    }

    fn add(&mut self, category: Category) {
        self.total += 1;
        match category {
            Category::LongTail => self.long += 1,
            Category::ShortHead => self.short += 1,
        }
    }

    pub fn count(&self, category: Category) -> usize {
        match category {
            Category::LongTail => self.long,
            Category::ShortHead => self.short,
        }
    }
}

/// `Π_{i ∈ C} (1 − P(i|d, C))` in closed form.
pub fn coverage_term(variant: Variant, category: Category, context: &CoverageCounts, form: SmoothForm) -> f64 {
    let n_d = context.count(category);
    if !variant.is_smooth() {
        return if n_d == 0 { 1.0 } else { 0.0 };
    }
    if context.total == 0 {
        return 1.0;
    }
    let total = context.total as f64;
    match form {
        SmoothForm::PerItemMass => (1.0 - 1.0 / total).powi(n_d as i32),
        SmoothForm::ConstantFraction => (1.0 - n_d as f64 / total).powi(context.total as i32),
    }
}

/// The λ-weighted part of the xQuAD score. `P(v|d)` is an indicator, so only the item's own
/// category contributes.
pub fn diversity_score(
    item: ItemIdx,
    pref: &UserCategoryPreference,
    split: &CategorySplit,
    variant: Variant,
    context: &CoverageCounts,
    form: SmoothForm,
) -> f64 {
    let category = split.category(item);
    pref.get(category) * coverage_term(variant, category, context, form)
}

/// Greedy xQuAD re-ranking of `candidates` into a list of `config.output_len` items.
///
/// Temporal variants read coverage from `ledger`, which is not modified here; recording the
/// served list is the caller's job. Ties on the combined score go to the higher base score,
/// then to the lower item index. Emitted scores are the combined scores at selection time.
pub fn rerank(
    candidates: &ScoredList,
    pref: &UserCategoryPreference,
    split: &CategorySplit,
    config: &RerankConfig,
    ledger: &HistoryLedger,
) -> ScoredList {
    let base = base_scores(candidates, config.normalize_scores);
    let mut remaining: Vec<(ItemIdx, f64)> = candidates.items().zip(base).collect();
    let mut out = ScoredList::new(candidates.user, config.variant.label());
    out.short = remaining.len() < config.output_len;

    let history = CoverageCounts::from_ledger(ledger);
    let mut selected = CoverageCounts::default();

    while out.len() < config.output_len && !remaining.is_empty() {
        let context = if config.variant.is_temporal() { &history } else { &selected };
        let mut best: Option<(usize, f64)> = None;
        for (pos, &(item, score)) in remaining.iter().enumerate() {
            let s = score
                + config.lambda * diversity_score(item, pref, split, config.variant, context, config.smooth_form);
            let better = match best {
                None => true,
                Some((b, bs)) => {
                    let (b_item, b_score) = remaining[b];
                    s > bs || (s == bs && (score > b_score || (score == b_score && item < b_item)))
                }
            };
            if better {
                best = Some((pos, s));
            }
        }
        let (pos, s) = best.expect("remaining is non-empty");
        let (item, _) = remaining.remove(pos);
        selected.add(split.category(item));
        out.entries.push((item, s));
    }
    out
}

fn base_scores(candidates: &ScoredList, normalize: bool) -> Vec<f64> {
    let raw: Vec<f64> = candidates.entries.iter().map(|&(_, s)| s).collect();
    if !normalize || raw.is_empty() {
        return raw;
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        raw.iter().map(|s| (s - min) / (max - min)).collect()
    } else {
        vec![1.0; raw.len()]
    }
}
