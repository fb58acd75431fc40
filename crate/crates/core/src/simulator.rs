//! Epoch-by-epoch replay of the test users.
//!
//! Candidate lists come from a static base model and are computed once. Within a run every
//! algorithm keeps its own [`HistoryLedger`]; runs in a suite share the epoch plan and the
//! serve-order seed, so every algorithm sees the same users in the same order.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CategorySplit, EpochPlan, Interactions, SplitData};
use crate::error::{Error, Result};
use crate::metrics::{self, EpochResult};
use crate::recommender::Recommender;
use crate::reranker::{self, Algorithm, HistoryLedger, RerankConfig, SmoothForm, UserCategoryPreference};
use crate::types::{ItemIdx, ScoredList, UserIdx};

/// When served lists enter the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LedgerCadence {
    /// After each user, so later users of the same epoch see earlier ones.
    #[default]
    PerUser,
    /// After each epoch; users of one epoch all see the same snapshot.
    PerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub epoch: u64,
    pub serve: u64,
    pub model: u64,
}

impl Seeds {
    /// Derives all four seeds from one value.
    pub fn from_base(seed: u64) -> Self {
        Seeds {
            split: seed,
            epoch: seed.wrapping_add(1),
            serve: seed.wrapping_add(2),
            model: seed.wrapping_add(3),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(2019)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub n_epochs: usize,
    pub candidate_len: usize,
    pub output_len: usize,
    pub seeds: Seeds,
    pub cadence: LedgerCadence,
    pub smooth_form: SmoothForm,
    pub normalize_scores: bool,
}

impl RunConfig {
    pub fn new(dataset: impl Into<String>, algorithm: Algorithm, lambda: f64) -> Self {
        RunConfig {
            dataset: dataset.into(),
            algorithm,
            lambda,
            n_epochs: 50,
            candidate_len: 100,
            output_len: 10,
            seeds: Seeds::default(),
            cadence: LedgerCadence::PerUser,
            smooth_form: SmoothForm::PerItemMass,
            normalize_scores: false,
        }
    }

    pub fn name(&self) -> String {
        format!("{}/{}@{}", self.dataset, self.algorithm, self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_len == 0 || self.candidate_len < self.output_len {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= output_len ({}) <= candidate_len ({})",
                self.output_len, self.candidate_len
            )));
        }
        if self.n_epochs == 0 {
            return Err(Error::InvalidConfig("n_epochs must be at least 1".into()));
        }
        if let Some(variant) = self.algorithm.variant() {
            self.rerank_config(variant).validate()?;
        }
        Ok(())
    }

    fn rerank_config(&self, variant: reranker::Variant) -> RerankConfig {
        RerankConfig {
            lambda: self.lambda,
            variant,
            output_len: self.output_len,
            smooth_form: self.smooth_form,
            normalize_scores: self.normalize_scores,
        }
    }
}

/// Read-only inputs shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct Prepared<'a> {
    pub data: &'a SplitData,
    pub categories: &'a CategorySplit,
    pub plan: &'a EpochPlan,
}

impl<'a> Prepared<'a> {
    fn check(&self) -> Result<()> {
        let test_users = self.data.test_users();
        if test_users.len() != self.plan.n_users() || test_users.iter().any(|&u| self.plan.epoch_of(u).is_none()) {
            return Err(Error::Mismatch("epoch plan does not cover exactly the test users".into()));
        }
        if self.categories.n_items() != self.data.train.n_items() {
            return Err(Error::Mismatch("category split and dataset disagree on catalog size".into()));
        }
        Ok(())
    }
}

/// Base-model candidate lists for every test user.
#[derive(Debug, Clone)]
pub struct CandidateCache {
    pub len: usize,
    lists: BTreeMap<UserIdx, ScoredList>,
}

impl CandidateCache {
    pub fn build<R: Recommender + ?Sized>(model: &R, train: &Interactions, users: &[UserIdx], len: usize) -> Self {
        let lists = users
            .par_iter()
            .map(|&u| (u, model.candidates(u, len, train)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        CandidateCache { len, lists }
    }

    pub fn get(&self, user: UserIdx) -> Option<&ScoredList> {
        self.lists.get(&user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserIdx, &ScoredList)> {
        self.lists.iter()
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub config: RunConfig,
    pub epochs: Vec<EpochResult>,
    pub ledger: HistoryLedger,
}

impl RunTrace {
    /// Mean of the per-epoch LCR values.
    pub fn mean_lcr(&self) -> f64 {
        self.epochs.iter().map(|e| e.lcr).sum::<f64>() / self.epochs.len() as f64
    }

    /// Mean NDCG over every evaluated user of the run.
    pub fn mean_ndcg(&self) -> f64 {
        mean(self.per_user_ndcg().values())
    }

    /// Mean list popularity over every non-empty served list of the run.
    pub fn mean_arp(&self) -> f64 {
        mean(self.per_user_arp().values())
    }

    pub fn final_clcr(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.clcr)
    }

    pub fn clcr_series(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.clcr).collect()
    }

    pub fn per_user_ndcg(&self) -> BTreeMap<UserIdx, f64> {
        self.epochs.iter().flat_map(|e| e.per_user_ndcg.clone()).collect()
    }

    pub fn per_user_arp(&self) -> BTreeMap<UserIdx, f64> {
        self.epochs.iter().flat_map(|e| e.per_user_arp.clone()).collect()
    }

    /// Served lists of all epochs, in serve order.
    pub fn lists(&self) -> impl Iterator<Item = &ScoredList> {
        self.epochs.iter().flat_map(|e| e.lists.iter())
    }
}

fn mean<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Runs one configuration, computing candidates from `model`.
pub fn run<R: Recommender + ?Sized>(config: &RunConfig, prepared: &Prepared<'_>, model: &R) -> Result<RunTrace> {
    config.validate()?;
    prepared.check()?;
    let cache = CandidateCache::build(model, &prepared.data.train, &prepared.data.test_users(), config.candidate_len);
    run_with_candidates(config, prepared, &cache)
}

/// Runs one configuration on precomputed candidates.
pub fn run_with_candidates(config: &RunConfig, prepared: &Prepared<'_>, cache: &CandidateCache) -> Result<RunTrace> {
    config.validate()?;
    prepared.check()?;
    if cache.len < config.candidate_len {
        return Err(Error::InvalidConfig(format!(
            "candidate cache holds {} items per user, config needs {}",
            cache.len, config.candidate_len
        )));
    }
    let train = &prepared.data.train;
    let test = &prepared.data.test;
    let split = prepared.categories;
    let popularity = train.popularity();
    let rerank_config = config.algorithm.variant().map(|v| config.rerank_config(v));
    let empty = ScoredList::new(UserIdx(0), "none");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds.serve);
    let mut ledger = HistoryLedger::new();
    let mut epochs = Vec::with_capacity(prepared.plan.n_epochs);

    for (epoch, users) in prepared.plan.epochs().iter().enumerate() {
        let mut order = users.clone();
        order.shuffle(&mut rng);
        let snapshot = ledger.clone();

        let mut lists = Vec::with_capacity(order.len());
        for &user in &order {
            let mut candidates = cache.get(user).unwrap_or(&empty).prefix(config.candidate_len, "candidates");
            candidates.user = user;
            let served = match rerank_config {
                None => candidates.prefix(config.output_len, Algorithm::Base.label()),
                Some(rc) => {
                    let pref = UserCategoryPreference::from_profile(train.profile(user), split);
                    let history = match config.cadence {
                        LedgerCadence::PerUser => &ledger,
                        LedgerCadence::PerEpoch => &snapshot,
                    };
                    reranker::rerank(&candidates, &pref, split, &rc, history)
                }
            };
            if config.cadence == LedgerCadence::PerUser {
                ledger.record(&served, split);
            }
            lists.push(served);
        }
        if config.cadence == LedgerCadence::PerEpoch {
            for served in &lists {
                ledger.record(served, split);
            }
        }
        epochs.push(evaluate_epoch(epoch, lists, test, popularity, split, &ledger, config.output_len)?);
    }
    Ok(RunTrace {
        config: config.clone(),
        epochs,
        ledger,
    })
}

fn evaluate_epoch(
    epoch: usize,
    lists: Vec<ScoredList>,
    test: &Interactions,
    popularity: &[u32],
    split: &CategorySplit,
    ledger: &HistoryLedger,
    k: usize,
) -> Result<EpochResult> {
    let mut per_user_ndcg = BTreeMap::new();
    let mut per_user_arp = BTreeMap::new();
    let mut ndcg_sum = 0.0;
    let mut skipped = 0;
    for list in &lists {
        if let Some(p) = metrics::list_popularity(list, popularity) {
            per_user_arp.insert(list.user, p);
        }
        let relevant: HashSet<ItemIdx> = test.profile(list.user).iter().map(|e| e.item).collect();
        match (list.is_empty(), metrics::ndcg_at_k(list, &relevant, k)) {
            (false, Some(v)) => {
                ndcg_sum += v;
                per_user_ndcg.insert(list.user, v);
            }
            _ => skipped += 1,
        }
    }
    let evaluated = per_user_ndcg.len();
    let arp = metrics::arp(&lists, popularity).map_or(f64::NAN, |a| a.value);
    let lcr = metrics::lcr(&lists, split)?;
    let clcr = ledger.seen_long_tail() as f64 / split.n_long_tail() as f64;
    Ok(EpochResult {
        epoch,
        lists,
        arp,
        lcr,
        clcr,
        ndcg: if evaluated == 0 { f64::NAN } else { ndcg_sum / evaluated as f64 },
        users_evaluated: evaluated,
        users_skipped: skipped,
        per_user_ndcg,
        per_user_arp,
    })
}

/// Runs every configuration against one shared candidate cache. The first failure aborts the
/// suite and names its configuration.
pub fn run_suite<R: Recommender + ?Sized>(configs: &[RunConfig], prepared: &Prepared<'_>, model: &R) -> Result<Vec<RunTrace>> {
    prepared.check()?;
    let len = configs.iter().map(|c| c.candidate_len).max().unwrap_or(0);
    let cache = CandidateCache::build(model, &prepared.data.train, &prepared.data.test_users(), len);
    run_suite_with_candidates(configs, prepared, &cache)
}

pub fn run_suite_with_candidates(configs: &[RunConfig], prepared: &Prepared<'_>, cache: &CandidateCache) -> Result<Vec<RunTrace>> {
    configs
        .par_iter()
        .map(|c| {
            run_with_candidates(c, prepared, cache).map_err(|e| Error::Run {
                config: c.name(),
                source: Box::new(e),
            })
        })
        .collect()
}

pub const METRICS_HEADER: [&str; 10] = [
    "dataset",
    "algorithm",
    "lambda",
    "epoch",
    "arp",
    "lcr",
    "clcr",
    "ndcg",
    "users_evaluated",
    "users_skipped",
];

pub const RECOMMENDATIONS_HEADER: [&str; 6] = ["epoch", "user", "rank", "item", "score", "category"];

/// Appends one metrics row per epoch. Writes the header when `header` is set.
pub fn write_metrics<W: Write>(out: &mut csv::Writer<W>, trace: &RunTrace, header: bool) -> Result<()> {
    if header {
        out.write_record(METRICS_HEADER)?;
    }
    for e in &trace.epochs {
        out.write_record([
            trace.config.dataset.clone(),
            trace.config.algorithm.to_string(),
            trace.config.lambda.to_string(),
            e.epoch.to_string(),
            e.arp.to_string(),
            e.lcr.to_string(),
            e.clcr.to_string(),
            e.ndcg.to_string(),
            e.users_evaluated.to_string(),
            e.users_skipped.to_string(),
        ])?;
    }
    Ok(())
}

/// One row per served slot, with raw user and item ids.
pub fn write_recommendations<W: Write>(out: &mut csv::Writer<W>, trace: &RunTrace, ids: &Interactions, split: &CategorySplit) -> Result<()> {
    out.write_record(RECOMMENDATIONS_HEADER)?;
    for e in &trace.epochs {
        for list in &e.lists {
            for (rank, &(item, score)) in list.entries.iter().enumerate() {
                out.write_record([
                    e.epoch.to_string(),
                    ids.user_id(list.user).to_string(),
                    (rank + 1).to_string(),
                    ids.item_id(item).to_string(),
                    score.to_string(),
                    split.category(item).to_string(),
                ])?;
            }
        }
    }
    Ok(())
}

pub fn write_trace(dir: &Path, trace: &RunTrace, ids: &Interactions, split: &CategorySplit) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
    write_metrics(&mut metrics, trace, true)?;
    metrics.flush().map_err(|e| Error::io(dir, e))?;
    let mut recs = csv::Writer::from_path(dir.join("recommendations.csv"))?;
    write_recommendations(&mut recs, trace, ids, split)?;
    recs.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}
