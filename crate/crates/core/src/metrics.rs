//! Popularity, coverage and accuracy metrics over recommendation lists.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{CategorySplit, Interactions};
use crate::error::{Error, Result};
use crate::types::{Category, ItemIdx, ScoredList, UserIdx};

/// Mean of per-list mean popularity, with the number of empty lists left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arp {
    pub value: f64,
    pub skipped_empty: usize,
}

/// Mean train popularity of the items in one list; `None` for an empty list.
pub fn list_popularity(list: &ScoredList, popularity: &[u32]) -> Option<f64> {
    if list.is_empty() {
        return None;
    }
    let sum: f64 = list.items().map(|i| popularity[i.index()] as f64).sum();
    Some(sum / list.len() as f64)
}

pub fn arp<'a>(lists: impl IntoIterator<Item = &'a ScoredList>, popularity: &[u32]) -> Result<Arp> {
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut skipped_empty = 0usize;
    for list in lists {
        match list_popularity(list, popularity) {
            Some(p) => {
                sum += p;
                counted += 1;
            }
            None => skipped_empty += 1,
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric("ARP over no non-empty lists".into()));
    }
    Ok(Arp {
        value: sum / counted as f64,
        skipped_empty,
    })
}

fn long_tail_size(split: &CategorySplit) -> Result<usize> {
    match split.n_long_tail() {
        0 => Err(Error::UndefinedMetric("the long tail is empty".into())),
        n => Ok(n),
    }
}

fn covered_long_tail<'a>(lists: impl IntoIterator<Item = &'a ScoredList>, split: &CategorySplit) -> HashSet<ItemIdx> {
    lists
        .into_iter()
        .flat_map(|l| l.items())
        .filter(|&i| split.is_long_tail(i))
        .collect()
}

/// Share of long-tail items that appear in at least one list.
pub fn lcr<'a>(lists: impl IntoIterator<Item = &'a ScoredList>, split: &CategorySplit) -> Result<f64> {
    let tail = long_tail_size(split)?;
    Ok(covered_long_tail(lists, split).len() as f64 / tail as f64)
}

/// How per-epoch coverage is accumulated into CLCR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClcrForm {
    /// Coverage of the union of all lists served so far.
    #[default]
    Union,
    /// Sum of the per-epoch coverage ratios. Comparison only.
    SumOfEpochRatios,
}

/// Cumulative long-tail coverage after the last epoch in `history`.
pub fn clcr<E: AsRef<[ScoredList]>>(history: &[E], split: &CategorySplit) -> Result<f64> {
    clcr_series(history, split, ClcrForm::Union)?
        .last()
        .copied()
        .ok_or_else(|| Error::UndefinedMetric("CLCR over an empty history".into()))
}

/// CLCR after each epoch of `history`.
pub fn clcr_series<E: AsRef<[ScoredList]>>(history: &[E], split: &CategorySplit, form: ClcrForm) -> Result<Vec<f64>> {
    let tail = long_tail_size(split)? as f64;
    let mut seen = HashSet::new();
    let mut running = 0.0;
    let mut out = Vec::with_capacity(history.len());
    for epoch in history {
        let covered = covered_long_tail(epoch.as_ref(), split);
        match form {
            ClcrForm::Union => {
                seen.extend(covered);
                out.push(seen.len() as f64 / tail);
            }
            ClcrForm::SumOfEpochRatios => {
                running += covered.len() as f64 / tail;
                out.push(running);
            }
        }
    }
    Ok(out)
}

/// Binary-relevance NDCG over the top `k` entries. `None` when `relevant` is empty.
pub fn ndcg_at_k(list: &ScoredList, relevant: &HashSet<ItemIdx>, k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = list
        .items()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.contains(item))
        .map(|(rank, _)| discount(rank))
        .sum();
    let ideal: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Some(dcg / ideal)
}

/// Long-tail items whose mean train rating is strictly above `min_avg`.
pub fn longtail_quality_count(split: &CategorySplit, train: &Interactions, min_avg: f64) -> usize {
    let mut sums = vec![(0.0f64, 0usize); train.n_items()];
    for e in train.entries() {
        let slot = &mut sums[e.item.index()];
        slot.0 += e.value as f64;
        slot.1 += 1;
    }
    split
        .items_in(Category::LongTail)
        .filter(|i| {
            let (sum, n) = sums[i.index()];
            n > 0 && sum / n as f64 > min_avg
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    pub mean_difference: f64,
    pub n: usize,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Two-sided paired t-test on `a − b`.
///
/// Zero-variance differences are resolved by convention: all-zero differences give `p = 1`,
/// a constant non-zero difference gives `p = 0`.
pub fn paired_significance<K: Ord + std::fmt::Debug>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> Result<Significance> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::Mismatch("paired samples must share the same keys".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Mismatch(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = a.values().zip(b.values()).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;

    let (t, p) = if var <= 0.0 || var.sqrt() <= 1e-15 * mean.abs() {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
        let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
        (t, p)
    };
    Ok(Significance {
        t_statistic: t,
        p_value: p,
        significant: p <= SIGNIFICANCE_LEVEL,
        mean_difference: mean,
        n,
    })
}

/// Metrics for one epoch of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    pub epoch: usize,
    /// Served lists in serve order.
    pub lists: Vec<ScoredList>,
    pub arp: f64,
    pub lcr: f64,
    pub clcr: f64,
    pub ndcg: f64,
    pub users_evaluated: usize,
    pub users_skipped: usize,
    pub per_user_ndcg: BTreeMap<UserIdx, f64>,
    pub per_user_arp: BTreeMap<UserIdx, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(items: &[u32]) -> ScoredList {
        ScoredList {
            user: UserIdx(0),
            entries: items.iter().map(|&i| (ItemIdx(i), 0.0)).collect(),
            produced_by: "t".into(),
            short: false,
        }
    }

    /// Items 0..head are short-head, the rest long-tail.
    fn split(head: usize, total: usize) -> CategorySplit {
        let cats = (0..total)
            .map(|i| if i < head { Category::ShortHead } else { Category::LongTail })
            .collect();
        let pops: Vec<u32> = (0..total).map(|i| if i < head { 100 } else { 1 }).collect();
        CategorySplit::from_categories(cats, &pops, 0.8).unwrap()
    }

    #[test]
    fn arp_examples() {
        let mut pop = vec![0u32; 10];
        pop[3] = 5;
        assert_eq!(arp([&list(&[3])], &pop).unwrap().value, 5.0);

        let pop = [10, 10, 20, 20];
        let lists = [list(&[0, 1]), list(&[2, 3])];
        assert_eq!(arp(&lists, &pop).unwrap().value, 15.0);

        let lists = [list(&[0, 1]), list(&[]), list(&[2, 3])];
        let result = arp(&lists, &pop).unwrap();
        assert_eq!((result.value, result.skipped_empty), (15.0, 1));
        assert!(arp(&[list(&[])], &pop).is_err());
    }

    #[test]
    fn arp_is_permutation_invariant() {
        let pop = [3, 9, 27, 81, 1];
        let a = [list(&[0, 1, 2]), list(&[3, 4])];
        let b = [list(&[4, 3]), list(&[2, 0, 1])];
        assert!((arp(&a, &pop).unwrap().value - arp(&b, &pop).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn lcr_examples() {
        let s = split(2, 12);
        assert_eq!(lcr(&[list(&[0, 1])], &s).unwrap(), 0.0);
        assert!((lcr(&[list(&[0, 2]), list(&[3, 2])], &s).unwrap() - 0.2).abs() < 1e-12);
        let all: Vec<u32> = (2..12).collect();
        assert_eq!(lcr(&[list(&all)], &s).unwrap(), 1.0);
        assert!(matches!(lcr(&[list(&[0])], &split(3, 3)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn clcr_examples() {
        let s = split(1, 5); // |Γ| = 4
        let one = vec![vec![list(&[1, 2])]];
        assert_eq!(clcr(&one, &s).unwrap(), lcr(&one[0], &s).unwrap());

        let history = vec![vec![list(&[1])], vec![list(&[1])]];
        assert!((clcr(&history, &s).unwrap() - 0.25).abs() < 1e-12);
        let summed = clcr_series(&history, &s, ClcrForm::SumOfEpochRatios).unwrap();
        assert!((summed[1] - 0.5).abs() < 1e-12);

        let history = vec![vec![list(&[1])], vec![list(&[0])], vec![list(&[2, 3])]];
        let series = clcr_series(&history, &s, ClcrForm::Union).unwrap();
        assert!(series.windows(2).all(|w| w[1] >= w[0]));
        assert!(clcr::<Vec<ScoredList>>(&[], &s).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let rel: HashSet<ItemIdx> = [ItemIdx(0), ItemIdx(1)].into();
        assert!((ndcg_at_k(&list(&[1, 0, 5]), &rel, 2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&list(&[5, 6]), &rel, 2).unwrap(), 0.0);

        let rel: HashSet<ItemIdx> = [ItemIdx(1)].into();
        let v = ndcg_at_k(&list(&[0, 1]), &rel, 2).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-9);
        assert!((v - 0.6309).abs() < 1e-4);

        assert_eq!(ndcg_at_k(&list(&[0]), &HashSet::new(), 10), None);
        // more relevant items than k: ideal is capped at k
        let rel: HashSet<ItemIdx> = (0..5).map(ItemIdx).collect();
        assert!((ndcg_at_k(&list(&[0, 1, 9]), &rel, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quality_count() {
        use crate::dataset::Rating;
        use crate::types::{ItemId, UserId};
        let r = |u: u64, i: u64, v: f32| Rating {
            user: UserId(u),
            item: ItemId(i),
            value: v,
            timestamp: None,
        };
        let inter = Interactions::from_ratings(&[r(1, 0, 5.0), r(1, 1, 4.0), r(2, 1, 4.0), r(1, 2, 2.0), r(2, 2, 3.0)]);
        let s = split(1, 3);
        assert_eq!(longtail_quality_count(&s, &inter, 3.0), 1);
        assert_eq!(longtail_quality_count(&s, &inter, 4.0), 0);
    }

    fn keyed(values: &[f64]) -> BTreeMap<usize, f64> {
        values.iter().copied().enumerate().collect()
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let a = keyed(&[0.1, 0.5, 0.3, 0.9]);
        let sig = paired_significance(&a, &a).unwrap();
        assert_eq!(sig.p_value, 1.0);
        assert!(!sig.significant);
    }

    #[test]
    fn constant_difference_is_significant() {
        let a = keyed(&(0..100).map(|i| i as f64 + 1.0).collect::<Vec<_>>());
        let b = keyed(&(0..100).map(|i| i as f64).collect::<Vec<_>>());
        let sig = paired_significance(&a, &b).unwrap();
        assert_eq!(sig.p_value, 0.0);
        assert!(sig.significant);
    }

    #[test]
    fn mismatched_keys() {
        let a = keyed(&[1.0, 2.0]);
        let mut b = keyed(&[1.0, 2.0]);
        b.insert(7, 1.0);
        assert!(paired_significance(&a, &b).is_err());
        assert!(paired_significance(&keyed(&[1.0]), &keyed(&[2.0])).is_err());
    }

    /// Γ((ν+1)/2) / Γ(ν/2) for integer ν by the recurrence Γ(x+1) = xΓ(x).
    fn gamma_ratio(nu: usize) -> f64 {
        let gamma_half_int = |twice: usize| -> f64 {
            // Γ(twice/2)
            let (mut x, mut g) = if twice % 2 == 0 { (1.0, 1.0) } else { (0.5, std::f64::consts::PI.sqrt()) };
            while x < twice as f64 / 2.0 - 1e-9 {
                g *= x;
                x += 1.0;
            }
            g
        };
        gamma_half_int(nu + 1) / gamma_half_int(nu)
    }

    /// Two-sided p-value by Simpson integration of the t density on [0, |t|].
    fn p_value_by_quadrature(t: f64, nu: usize) -> f64 {
        let nu_f = nu as f64;
        let c = gamma_ratio(nu) / (nu_f * std::f64::consts::PI).sqrt();
        let density = |x: f64| c * (1.0 + x * x / nu_f).powf(-(nu_f + 1.0) / 2.0);
        let steps = 20_000;
        let h = t.abs() / steps as f64;
        let mut acc = density(0.0) + density(t.abs());
        for s in 1..steps {
            acc += density(s as f64 * h) * if s % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * acc * h / 3.0
    }

    #[test]
    fn p_values_match_quadrature() {
        let a = keyed(&[0.31, 0.12, 0.55, 0.48, 0.22, 0.67, 0.19, 0.40, 0.35, 0.28, 0.51]);
        let b = keyed(&[0.30, 0.05, 0.50, 0.49, 0.10, 0.60, 0.20, 0.33, 0.31, 0.20, 0.52]);
        let sig = paired_significance(&a, &b).unwrap();
        let diffs: Vec<f64> = a.values().zip(b.values()).map(|(x, y)| x - y).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let t = mean / (sd / n.sqrt());
        assert!((sig.t_statistic - t).abs() < 1e-12);
        assert!((sig.p_value - p_value_by_quadrature(t, 10)).abs() < 1e-6);

        // textbook critical value: t = 2.228 with 10 df is the two-sided 5% point
        assert!((p_value_by_quadrature(2.228, 10) - 0.05).abs() < 1e-3);
        for (t, nu) in [(0.5, 3), (1.7, 29), (3.1, 99)] {
            let dist = StudentsT::new(0.0, 1.0, nu as f64).unwrap();
            let p = 2.0 * (1.0 - dist.cdf(t));
            assert!((p - p_value_by_quadrature(t, nu)).abs() < 1e-6, "t={t} nu={nu}");
        }
    }
}
