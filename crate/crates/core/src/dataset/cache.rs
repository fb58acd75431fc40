//! Prepared-dataset cache: train/test rating files, per-item category labels and a manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::parse::{parse_ratings, RatingFormat, RatingScale};
use super::split::{CategorySplit, SplitData};
use super::{Interactions, Rating};
use crate::error::{Error, Result};
use crate::types::{Category, ItemId, UserId};

pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const CATEGORIES_FILE: &str = "categories.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything downstream stages need from preparation.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub split: SplitData,
    pub categories: CategorySplit,
}

impl PreparedDataset {
    /// Train and test ratings together, i.e. the filtered dataset.
    pub fn full(&self) -> Interactions {
        let mut entries = self.split.train.entries().to_vec();
        entries.extend_from_slice(self.split.test.entries());
        self.split.train.with_same_index(entries)
    }
}

/// Provenance and summary counts for a prepared cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedManifest {
    /// Hash of the preparation inputs; an identical hash means the cache is current.
    pub config_hash: String,
    pub dataset: String,
    pub source: String,
    pub source_sha256: String,
    pub format: RatingFormat,
    pub raw_ratings: usize,
    pub skipped_lines: usize,
    pub duplicate_ratings: usize,
    pub min_user_ratings: usize,
    pub min_item_ratings: usize,
    /// Ratings left after the user pass; the item pass runs on these.
    pub ratings_after_user_filter: usize,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    /// Fraction of raw ratings removed by filtering.
    pub reduction: f64,
    pub head_mass: f64,
    /// Short-head items have strictly more ratings than this.
    pub threshold: u32,
    pub short_head_items: usize,
    pub long_tail_items: usize,
    pub short_head_rating_share: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub train_ratings: usize,
    pub test_ratings: usize,
    pub test_users: usize,
    /// Long-tail items whose mean rating in the filtered data exceeds 3.
    pub high_quality_long_tail_items: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn write_prepared(dir: &Path, prepared: &PreparedDataset, manifest: &PreparedManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_ratings(&dir.join(TRAIN_FILE), &prepared.split.train)?;
    write_ratings(&dir.join(TEST_FILE), &prepared.split.test)?;

    let path = dir.join(CATEGORIES_FILE);
    let mut out = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    let train = &prepared.split.train;
    for (i, category) in prepared.categories.categories().iter().enumerate() {
        writeln!(out, "{}\t{}", train.item_ids()[i], category).map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    // the manifest goes last so that its presence marks a complete cache
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

fn write_ratings(path: &Path, inter: &Interactions) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for e in inter.entries() {
        writeln!(
            out,
            "{}\t{}\t{}",
            inter.user_id(e.user),
            inter.item_id(e.item),
            e.value
        )
        .map_err(|err| Error::io(path, err))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<PreparedManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_prepared(dir: &Path) -> Result<(PreparedDataset, PreparedManifest)> {
    let manifest = read_manifest(dir)?;
    // cached values are written with the shortest round-trip representation, whatever the scale
    let scale = RatingScale {
        min: f32::MIN,
        max: f32::MAX,
    };
    let load = |name: &str| -> Result<Vec<Rating>> {
        let path = dir.join(name);
        let report = parse_ratings(&path, RatingFormat::EpinionsTabular, scale)?;
        if report.skipped > 0 || report.duplicates > 0 {
            let line = report.skipped_examples.first().map_or(0, |(l, _)| *l);
            return Err(Error::Malformed {
                path,
                line,
                message: "cached rating file is corrupt".into(),
            });
        }
        Ok(report.ratings)
    };
    let train = load(TRAIN_FILE)?;
    let test = load(TEST_FILE)?;

    let path = dir.join(CATEGORIES_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut items = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        let malformed = || Error::Malformed {
            path: path.clone(),
            line: n + 1,
            message: format!("expected `item<TAB>head|tail`, got `{line}`"),
        };
        let (id, label) = line.split_once('\t').ok_or_else(malformed)?;
        items.push(ItemId(id.parse().map_err(|_| malformed())?));
        labels.push(Category::from_label(label).ok_or_else(malformed)?);
    }

    let mut users: Vec<UserId> = train.iter().chain(&test).map(|r| r.user).collect();
    users.sort_unstable();
    users.dedup();

    let train = Interactions::from_parts(users.clone(), items.clone(), &train)?;
    let test = Interactions::from_parts(users, items, &test)?;
    let split = SplitData {
        train,
        test,
        seed: manifest.split_seed,
        test_fraction: manifest.test_fraction,
    };
    let mut popularity = split.train.popularity().to_vec();
    for (p, t) in popularity.iter_mut().zip(split.test.popularity()) {
        *p += t;
    }
    let categories = CategorySplit::from_categories(labels, &popularity, manifest.head_mass)?;
    if categories.threshold != manifest.threshold {
        return Err(Error::Mismatch(format!(
            "category labels imply threshold {} but manifest records {}",
            categories.threshold, manifest.threshold
        )));
    }
    Ok((PreparedDataset { split, categories }, manifest))
}
