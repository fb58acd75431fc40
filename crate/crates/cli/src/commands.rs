//! The four pipeline stages. Each reads what the previous one left under the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use poptail_core::dataset::{
    self, assign_epochs, filter_interactions, load_prepared, parse_ratings, read_manifest, split_categories,
    split_train_test, write_prepared, PreparedDataset, PreparedManifest,
};
use poptail_core::metrics::{self, longtail_quality_count, Significance};
use poptail_core::recommender::{self, load_checkpoint, save_checkpoint, FactorModel};
use poptail_core::simulator::{self, CandidateCache, Prepared, RunConfig, RunTrace};
use poptail_core::{Algorithm, EpochPlan, UserIdx};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Bumped whenever preparation output changes for identical inputs.
const PREPARE_VERSION: &str = "prepare-v1";

/// Ratings with a mean strictly above this count as high quality.
const QUALITY_RATING: f64 = 3.0;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";

pub const SUMMARY_HEADER: [&str; 12] = [
    "algorithm",
    "lambda",
    "Average LCR",
    "Average NDCG@10",
    "Average ARP",
    "Final CLCR",
    "LCR t",
    "LCR p-value",
    "NDCG t",
    "NDCG p-value",
    "ARP t",
    "ARP p-value",
];

#[derive(Debug)]
pub struct PrepareOutcome {
    pub manifest: PreparedManifest,
    pub cached: bool,
    pub dir: PathBuf,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Serialize)]
struct PrepareKey<'a> {
    version: &'a str,
    source_sha256: &'a str,
    name: &'a str,
    format: dataset::RatingFormat,
    scale: dataset::RatingScale,
    min_user_ratings: usize,
    min_item_ratings: usize,
    head_mass: f64,
    test_fraction: f64,
    split_seed: u64,
}

fn prepare_hash(config: &ExperimentConfig, source_sha256: &str) -> Result<String> {
    let d = &config.dataset;
    let key = PrepareKey {
        version: PREPARE_VERSION,
        source_sha256,
        name: &d.name,
        format: d.format,
        scale: d.scale,
        min_user_ratings: d.min_user_ratings,
        min_item_ratings: d.min_item_ratings,
        head_mass: d.head_mass,
        test_fraction: d.test_fraction,
        split_seed: config.seeds().split,
    };
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&key)?)))
}

pub fn prepare(config: &ExperimentConfig) -> Result<PrepareOutcome> {
    config.validate()?;
    config.validate_source()?;
    let d = &config.dataset;
    let dir = config.prepared_dir();
    let source_sha256 = sha256_file(&d.path)?;
    let config_hash = prepare_hash(config, &source_sha256)?;
    if let Ok(existing) = read_manifest(&dir) {
        if existing.config_hash == config_hash {
            info!("prepared cache at {} is current", dir.display());
            return Ok(PrepareOutcome {
                manifest: existing,
                cached: true,
                dir,
            });
        }
    }

    let started = Instant::now();
    let report = parse_ratings(&d.path, d.format, d.scale)?;
    for (line, reason) in &report.skipped_examples {
        warn!("{}:{line}: skipped: {reason}", d.path.display());
    }
    if report.skipped > report.skipped_examples.len() {
        warn!(
            "{}: {} more lines skipped",
            d.path.display(),
            report.skipped - report.skipped_examples.len()
        );
    }
    if report.ratings.is_empty() {
        match report.skipped_examples.first() {
            Some((line, reason)) => bail!(
                "{}:{line}: no valid ratings; first rejected line: {reason}",
                d.path.display()
            ),
            None => bail!("{}: no ratings found", d.path.display()),
        }
    }
    let raw_ratings = report.ratings.len();
    let filtered = filter_interactions(&report.ratings, d.min_user_ratings, d.min_item_ratings)
        .with_context(|| format!("filtering {}", d.path.display()))?;
    let after_user_filter = ratings_after_user_pass(&report.ratings, d.min_user_ratings);
    let categories = split_categories(&filtered, d.head_mass)?;
    let split = split_train_test(&filtered, d.test_fraction, config.seeds().split)?;

    let mut notes = Vec::new();
    let thin_users = (0..filtered.n_users())
        .filter(|&u| filtered.profile(UserIdx(u as u32)).len() < d.min_user_ratings)
        .count();
    let thin_items = filtered.popularity().iter().filter(|&&p| (p as usize) < d.min_item_ratings).count();
    if thin_users > 0 || thin_items > 0 {
        notes.push(format!(
            "single-pass filtering left {thin_users} users below {} ratings and {thin_items} items below {}",
            d.min_user_ratings, d.min_item_ratings
        ));
    }
    let manifest = PreparedManifest {
        config_hash,
        dataset: d.name.clone(),
        source: d.path.display().to_string(),
        source_sha256,
        format: d.format,
        raw_ratings,
        skipped_lines: report.skipped,
        duplicate_ratings: report.duplicates,
        min_user_ratings: d.min_user_ratings,
        min_item_ratings: d.min_item_ratings,
        ratings_after_user_filter: after_user_filter,
        users: filtered.n_users(),
        items: filtered.n_items(),
        ratings: filtered.len(),
        reduction: 1.0 - filtered.len() as f64 / raw_ratings as f64,
        head_mass: d.head_mass,
        threshold: categories.threshold,
        short_head_items: categories.n_short_head(),
        long_tail_items: categories.n_long_tail(),
        short_head_rating_share: categories.head_share(),
        test_fraction: d.test_fraction,
        split_seed: config.seeds().split,
        train_ratings: split.train.len(),
        test_ratings: split.test.len(),
        test_users: split.test_users().len(),
        high_quality_long_tail_items: longtail_quality_count(&categories, &filtered, QUALITY_RATING),
        notes,
    };
    write_prepared(&dir, &PreparedDataset { split, categories }, &manifest)?;
    info!("prepared {} in {:.1?}", d.name, started.elapsed());
    Ok(PrepareOutcome {
        manifest,
        cached: false,
        dir,
    })
}

fn ratings_after_user_pass(ratings: &[dataset::Rating], min_user: usize) -> usize {
    let mut counts = std::collections::HashMap::new();
    for r in ratings {
        *counts.entry(r.user).or_insert(0usize) += 1;
    }
    ratings.iter().filter(|r| counts[&r.user] >= min_user).count()
}

pub fn prepare_table(outcome: &PrepareOutcome) -> String {
    let m = &outcome.manifest;
    let rows: Vec<(&str, String)> = vec![
        ("dataset", m.dataset.clone()),
        ("cache", format!("{}{}", outcome.dir.display(), if outcome.cached { " (hit)" } else { "" })),
        ("raw ratings", m.raw_ratings.to_string()),
        ("skipped lines", m.skipped_lines.to_string()),
        ("duplicates", m.duplicate_ratings.to_string()),
        ("after user filter", m.ratings_after_user_filter.to_string()),
        ("users", m.users.to_string()),
        ("items", m.items.to_string()),
        ("ratings", m.ratings.to_string()),
        ("reduction", format!("{:.4}%", 100.0 * m.reduction)),
        ("threshold", format!("> {}", m.threshold)),
        ("short-head items", m.short_head_items.to_string()),
        ("long-tail items", m.long_tail_items.to_string()),
        ("short-head share", format!("{:.4}", m.short_head_rating_share)),
        ("train ratings", m.train_ratings.to_string()),
        ("test ratings", m.test_ratings.to_string()),
        ("test users", m.test_users.to_string()),
        ("quality long-tail", m.high_quality_long_tail_items.to_string()),
    ];
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<20}{v}");
    }
    out
}

fn load_cache(config: &ExperimentConfig) -> Result<(PreparedDataset, PreparedManifest)> {
    let dir = config.prepared_dir();
    if read_manifest(&dir).is_err() {
        bail!(
            "no prepared dataset at {}; run `poptail prepare` with this config first",
            dir.display()
        );
    }
    load_prepared(&dir).with_context(|| format!("loading prepared dataset from {}", dir.display()))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: FactorModel,
    pub objective: Vec<f64>,
    pub dir: PathBuf,
}

pub fn train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (prepared, _) = load_cache(config)?;
    let train_config = config.train_config();
    let started = Instant::now();
    let (model, report) = recommender::train(&prepared.split.train, &train_config)?;
    info!("trained {} sweeps in {:.1?}", model.trained_sweeps, started.elapsed());

    let dir = config.model_dir();
    save_checkpoint(&dir, &model, &prepared.split.train.fingerprint(), &report.objective)?;
    let mut log = csv::Writer::from_path(dir.join(TRAINING_LOG_FILE))?;
    log.write_record(["sweep", "objective", "pairwise"])?;
    for (sweep, (o, p)) in report.objective.iter().zip(&report.pairwise).enumerate() {
        log.write_record([sweep.to_string(), o.to_string(), p.to_string()])?;
    }
    log.flush()?;
    Ok(TrainOutcome {
        model,
        objective: report.objective,
        dir,
    })
}

fn load_model(config: &ExperimentConfig, prepared: &PreparedDataset) -> Result<FactorModel> {
    let dir = config.model_dir();
    if !dir.join(recommender::MODEL_MANIFEST_FILE).is_file() {
        bail!("no model checkpoint at {}; run `poptail train` with this config first", dir.display());
    }
    let (model, manifest) = load_checkpoint(&dir)?;
    if manifest.dataset_hash != prepared.split.train.fingerprint() {
        bail!(
            "checkpoint at {} was trained on different data; run `poptail train` again",
            dir.display()
        );
    }
    if manifest.config != config.train_config() {
        bail!(
            "checkpoint at {} was trained with different model settings; run `poptail train` again",
            dir.display()
        );
    }
    Ok(model)
}

/// Loaded inputs shared by `run` and `sweep`.
struct Session {
    prepared: PreparedDataset,
    plan: EpochPlan,
    cache: CandidateCache,
}

impl Session {
    fn open(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (prepared, _) = load_cache(config)?;
        let model = load_model(config, &prepared)?;
        let plan = assign_epochs(
            &prepared.split.test_users(),
            config.experiment.n_epochs,
            config.seeds().epoch,
        )?;
        let cache = CandidateCache::build(
            &model,
            &prepared.split.train,
            &prepared.split.test_users(),
            config.experiment.candidate_len,
        );
        Ok(Session { prepared, plan, cache })
    }

    fn prepared(&self) -> Prepared<'_> {
        Prepared {
            data: &self.prepared.split,
            categories: &self.prepared.categories,
            plan: &self.plan,
        }
    }

    fn run_config(&self, config: &ExperimentConfig, algorithm: Algorithm, lambda: f64) -> RunConfig {
        let e = &config.experiment;
        RunConfig {
            dataset: config.dataset.name.clone(),
            algorithm,
            lambda,
            n_epochs: e.n_epochs,
            candidate_len: e.candidate_len,
            output_len: e.output_len,
            seeds: config.seeds(),
            cadence: e.cadence,
            smooth_form: e.smooth_form,
            normalize_scores: e.normalize_scores,
        }
    }

    fn run_all(&self, configs: &[RunConfig]) -> Result<Vec<RunTrace>> {
        Ok(simulator::run_suite_with_candidates(configs, &self.prepared(), &self.cache)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub mean_lcr: f64,
    pub mean_ndcg: f64,
    pub mean_arp: f64,
    pub final_clcr: f64,
    /// Paired tests against the base run; absent for the base row itself. LCR pairs epochs,
    /// NDCG and ARP pair users.
    pub lcr_vs_base: Option<Significance>,
    pub ndcg_vs_base: Option<Significance>,
    pub arp_vs_base: Option<Significance>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub rows: Vec<SummaryRow>,
    pub traces: Vec<RunTrace>,
    pub dir: PathBuf,
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let session = Session::open(config)?;
    let algorithms = config.algorithms()?;
    // the base run is always needed for the significance columns
    let mut configs = vec![session.run_config(config, Algorithm::Base, 0.0)];
    for &a in algorithms.iter().filter(|a| **a != Algorithm::Base) {
        configs.push(session.run_config(config, a, config.lambda_for(a)?));
    }
    let traces = session.run_all(&configs)?;
    let base = &traces[0];

    let runs = config.runs_dir();
    let mut rows = Vec::new();
    for &a in &algorithms {
        let trace = traces.iter().find(|t| t.config.algorithm == a).expect("configured run");
        simulator::write_trace(&runs.join(a.label()), trace, &session.prepared.split.train, &session.prepared.categories)?;
        rows.push(summary_row(trace, base)?);
    }
    write_summary(&config.output_dir.join(SUMMARY_FILE), &rows)?;
    Ok(RunOutcome {
        rows,
        traces,
        dir: config.output_dir.clone(),
    })
}

fn summary_row(trace: &RunTrace, base: &RunTrace) -> Result<SummaryRow> {
    let is_base = trace.config.algorithm == Algorithm::Base;
    let versus = |f: fn(&RunTrace) -> BTreeMap<UserIdx, f64>| -> Result<Option<Significance>> {
        if is_base {
            return Ok(None);
        }
        Ok(Some(metrics::paired_significance(&f(trace), &f(base))?))
    };
    let per_epoch_lcr = |t: &RunTrace| -> BTreeMap<usize, f64> { t.epochs.iter().map(|e| (e.epoch, e.lcr)).collect() };
    // a single epoch leaves nothing to pair
    let lcr_vs_base = if is_base || trace.epochs.len() < 2 {
        None
    } else {
        Some(metrics::paired_significance(&per_epoch_lcr(trace), &per_epoch_lcr(base))?)
    };
    Ok(SummaryRow {
        algorithm: trace.config.algorithm,
        lambda: trace.config.lambda,
        mean_lcr: trace.mean_lcr(),
        mean_ndcg: trace.mean_ndcg(),
        mean_arp: trace.mean_arp(),
        final_clcr: trace.final_clcr(),
        lcr_vs_base,
        ndcg_vs_base: versus(RunTrace::per_user_ndcg)?,
        arp_vs_base: versus(RunTrace::per_user_arp)?,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record([
            r.algorithm.label().to_string(),
            r.lambda.to_string(),
            r.mean_lcr.to_string(),
            r.mean_ndcg.to_string(),
            r.mean_arp.to_string(),
            r.final_clcr.to_string(),
            opt(r.lcr_vs_base.map(|s| s.t_statistic)),
            opt(r.lcr_vs_base.map(|s| s.p_value)),
            opt(r.ndcg_vs_base.map(|s| s.t_statistic)),
            opt(r.ndcg_vs_base.map(|s| s.p_value)),
            opt(r.arp_vs_base.map(|s| s.t_statistic)),
            opt(r.arp_vs_base.map(|s| s.p_value)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Table 1 layout; `*` marks a significant difference from base at the 5% level.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mark = |s: Option<Significance>| match s {
        Some(s) if s.significant => "*",
        _ => " ",
    };
    let p = |s: Option<Significance>| s.map_or("-".to_string(), |s| format!("{:.3}", s.p_value));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>13} {:>16} {:>12} {:>11} {:>8} {:>8} {:>8}",
        "algorithm", "lambda", "Average LCR", "Average NDCG@10", "Average ARP", "Final CLCR", "p(LCR)", "p(NDCG)", "p(ARP)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>12.5}{} {:>15.5}{} {:>11.3}{} {:>11.5} {:>8} {:>8} {:>8}",
            r.algorithm.label(),
            r.lambda,
            r.mean_lcr,
            mark(r.lcr_vs_base),
            r.mean_ndcg,
            mark(r.ndcg_vs_base),
            r.mean_arp,
            mark(r.arp_vs_base),
            r.final_clcr,
            p(r.lcr_vs_base),
            p(r.ndcg_vs_base),
            p(r.arp_vs_base),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_lcr: f64,
    pub mean_ndcg: f64,
}

/// Sorted, de-duplicated λ values; warns about repeats.
pub fn normalize_lambdas(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        bail!("sweep needs at least one lambda value");
    }
    if let Some(bad) = values.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        bail!("lambda values must be finite and >= 0, got {bad}");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < values.len() {
        warn!("dropped {} duplicate lambda values", values.len() - sorted.len());
    }
    Ok(sorted)
}

pub fn sweep(config: &ExperimentConfig, algorithm: Algorithm, lambdas: &[f64]) -> Result<(Vec<SweepRow>, PathBuf)> {
    let lambdas = normalize_lambdas(lambdas)?;
    let session = Session::open(config)?;
    let configs: Vec<RunConfig> = lambdas
        .iter()
        .map(|&l| session.run_config(config, algorithm, l))
        .collect();
    let traces = session.run_all(&configs)?;
    let rows: Vec<SweepRow> = traces
        .iter()
        .map(|t| SweepRow {
            lambda: t.config.lambda,
            mean_lcr: t.mean_lcr(),
            mean_ndcg: t.mean_ndcg(),
        })
        .collect();
    let path = config.output_dir.join(format!("sweep_{}.csv", algorithm.label()));
    let mut out = csv::Writer::from_path(&path)?;
    out.write_record(["lambda", "mean_lcr", "mean_ndcg"])?;
    for r in &rows {
        out.write_record([r.lambda.to_string(), r.mean_lcr.to_string(), r.mean_ndcg.to_string()])?;
    }
    out.flush()?;
    Ok((rows, path))
}
