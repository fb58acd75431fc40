//! xQuAD re-ranking against the short-head / long-tail split.
//!
//! Each step of the greedy loop adds the remaining candidate maximising
//!
//! ```text
//! s(v) = P(v|u) + λ Σ_d P(d|u) P(v|d) Π_{i ∈ C} (1 − P(i|d, C))
//! ```
//!
//! where `P(v|u)` is the base score, `P(d|u)` the user's share of category `d` in their
//! profile and `P(v|d)` the category indicator. The list-based variants use the partially
//! built output list as `C`; the time-based variants use the [`HistoryLedger`] of every list
//! served so far.

mod ledger;
mod xquad;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{CategorySplit, Entry};
use crate::error::{Error, Result};
use crate::types::Category;

pub use ledger::HistoryLedger;
pub use xquad::{coverage_term, diversity_score, rerank, CoverageCounts};

/// The four re-ranking variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Binary,
    Smooth,
    TimeBinary,
    TimeSmooth,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Binary, Variant::Smooth, Variant::TimeBinary, Variant::TimeSmooth];

    /// Whether coverage is judged against the history ledger rather than the list under
    /// construction.
    pub fn is_temporal(self) -> bool {
        matches!(self, Variant::TimeBinary | Variant::TimeSmooth)
    }

    pub fn is_smooth(self) -> bool {
        matches!(self, Variant::Smooth | Variant::TimeSmooth)
    }

    pub fn label(self) -> &'static str {
        Algorithm::from(self).label()
    }
}

/// How the smooth variants read "the fraction of category `d` items" in `P(i|d, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothForm {
    /// `P(i|d, C) = [i ∈ d] / |C|`, giving `(1 − 1/|C|)^{n_d}`.
    #[default]
    PerItemMass,
    /// `P(i|d, C) = n_d / |C|` for every `i`, giving `(1 − n_d/|C|)^{|C|}`.
    ConstantFraction,
}

/// A named entry of the algorithm registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// The base recommender's list, truncated.
    Base,
    Binary,
    Smooth,
    TimeBinary,
    TimeSmooth,
}

/// Registry labels, including the reserved ones that have no implementation.
pub const REGISTRY_LABELS: [&str; 6] = ["base", "binary", "smooth", "time_binary", "time_smooth", "reg"];
const RESERVED_LABELS: [&str; 1] = ["reg"];

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Base,
        Algorithm::Binary,
        Algorithm::Smooth,
        Algorithm::TimeBinary,
        Algorithm::TimeSmooth,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Base => "base",
            Algorithm::Binary => "binary",
            Algorithm::Smooth => "smooth",
            Algorithm::TimeBinary => "time_binary",
            Algorithm::TimeSmooth => "time_smooth",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Algorithm::Base => None,
            Algorithm::Binary => Some(Variant::Binary),
            Algorithm::Smooth => Some(Variant::Smooth),
            Algorithm::TimeBinary => Some(Variant::TimeBinary),
            Algorithm::TimeSmooth => Some(Variant::TimeSmooth),
        }
    }

    pub fn registry_listing() -> String {
        REGISTRY_LABELS
            .iter()
            .map(|l| {
                if RESERVED_LABELS.contains(l) {
                    format!("{l} (out of scope)")
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl From<Variant> for Algorithm {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Binary => Algorithm::Binary,
            Variant::Smooth => Algorithm::Smooth,
            Variant::TimeBinary => Algorithm::TimeBinary,
            Variant::TimeSmooth => Algorithm::TimeSmooth,
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(label: &str) -> Result<Self> {
        if let Some(a) = Algorithm::ALL.iter().find(|a| a.label() == label) {
            return Ok(*a);
        }
        if RESERVED_LABELS.contains(&label) {
            return Err(Error::OutOfScope(label.to_string()));
        }
        Err(Error::UnknownAlgorithm {
            label: label.to_string(),
            known: Algorithm::registry_listing(),
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub lambda: f64,
    pub variant: Variant,
    pub output_len: usize,
    #[serde(default)]
    pub smooth_form: SmoothForm,
    /// Min-max scale base scores within each candidate list before scoring.
    #[serde(default)]
    pub normalize_scores: bool,
}

impl RerankConfig {
    pub fn new(variant: Variant, lambda: f64) -> Self {
        RerankConfig {
            lambda,
            variant,
            output_len: 10,
            smooth_form: SmoothForm::PerItemMass,
            normalize_scores: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.output_len == 0 {
            return Err(Error::InvalidConfig("output_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// `P(d|u)`: the user's split of interest between the two categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserCategoryPreference {
    pub p_long: f64,
    pub p_short: f64,
}

impl UserCategoryPreference {
    pub fn new(p_long: f64) -> Self {
        UserCategoryPreference {
            p_long,
            p_short: 1.0 - p_long,
        }
    }

    pub fn get(&self, category: Category) -> f64 {
        match category {
            Category::LongTail => self.p_long,
            Category::ShortHead => self.p_short,
        }
    }

    /// Fraction of the profile's items in each category. An empty profile falls back to the
    /// catalog-wide rating mass of each category.
    pub fn from_profile(profile: &[Entry], split: &CategorySplit) -> Self {
        if profile.is_empty() {
            return UserCategoryPreference::new(1.0 - split.head_share());
        }
        let long = profile.iter().filter(|e| split.is_long_tail(e.item)).count();
        UserCategoryPreference::new(long as f64 / profile.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ItemIdx, UserIdx};

    fn split() -> CategorySplit {
        // items 0,1 head; 2,3 tail
        CategorySplit::from_categories(
            vec![Category::ShortHead, Category::ShortHead, Category::LongTail, Category::LongTail],
            &[10, 9, 2, 1],
            0.8,
        )
        .unwrap()
    }

    fn profile(items: &[u32]) -> Vec<Entry> {
        items
            .iter()
            .map(|&i| Entry {
                user: UserIdx(0),
                item: ItemIdx(i),
                value: 4.0,
            })
            .collect()
    }

    #[test]
    fn preference_fractions() {
        let s = split();
        let pref = UserCategoryPreference::from_profile(&profile(&[0, 1, 2, 3]), &s);
        assert_eq!((pref.p_long, pref.p_short), (0.5, 0.5));
        let pref = UserCategoryPreference::from_profile(&profile(&[0, 1]), &s);
        assert_eq!((pref.p_long, pref.p_short), (0.0, 1.0));
    }

    #[test]
    fn empty_profile_uses_catalog_mass() {
        let s = split();
        let pref = UserCategoryPreference::from_profile(&[], &s);
        assert!((pref.p_long - 3.0 / 22.0).abs() < 1e-12);
        assert!((pref.p_long + pref.p_short - 1.0).abs() < 1e-12);
    }

    #[test]
    fn registry() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!("reg".parse::<Algorithm>(), Err(Error::OutOfScope(_))));
        let err = "mmr".parse::<Algorithm>().unwrap_err().to_string();
        assert!(err.contains("time_smooth") && err.contains("reg (out of scope)"), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(RerankConfig::new(Variant::Binary, -0.1).validate().is_err());
        assert!(RerankConfig { output_len: 0, ..RerankConfig::new(Variant::Binary, 0.1) }.validate().is_err());
        assert!(RerankConfig::new(Variant::TimeSmooth, 0.0).validate().is_ok());
    }
}
