//! Experiment configuration file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use poptail_core::dataset::{RatingFormat, RatingScale};
use poptail_core::recommender::{SupportWeight, TrainConfig};
use poptail_core::reranker::SmoothForm;
use poptail_core::simulator::LedgerCadence;
use poptail_core::{Algorithm, Seeds};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    /// Per-algorithm λ, keyed by registry label. Missing labels fall back to the preset.
    #[serde(default)]
    pub lambda: BTreeMap<String, f64>,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub format: RatingFormat,
    #[serde(default = "default_min_ratings")]
    pub min_user_ratings: usize,
    #[serde(default = "default_min_ratings")]
    pub min_item_ratings: usize,
    #[serde(default = "default_head_mass")]
    pub head_mass: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub scale: RatingScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub k: usize,
    pub sweeps: usize,
    pub regularization: f64,
    pub support: SupportWeight,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelConfig {
            k: t.k,
            sweeps: t.sweeps,
            regularization: t.regularization,
            support: t.support,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub n_epochs: usize,
    pub candidate_len: usize,
    pub output_len: usize,
    pub algorithms: Vec<String>,
    pub cadence: LedgerCadence,
    pub smooth_form: SmoothForm,
    /// Min-max scale candidate scores per list before mixing with the diversity term.
    pub normalize_scores: bool,
    /// λ defaults for labels absent from `[lambda]`.
    pub lambda_preset: Option<LambdaPreset>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            n_epochs: 50,
            candidate_len: 100,
            output_len: 10,
            algorithms: Algorithm::ALL.iter().map(|a| a.label().to_string()).collect(),
            cadence: LedgerCadence::default(),
            smooth_form: SmoothForm::default(),
            normalize_scores: false,
            lambda_preset: None,
        }
    }
}

/// The tuned λ values reported for the two reference datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPreset {
    Movielens,
    Epinions,
}

impl LambdaPreset {
    pub fn lambda(self, algorithm: Algorithm) -> f64 {
        match (self, algorithm) {
            (_, Algorithm::Base) => 0.0,
            (LambdaPreset::Movielens, Algorithm::Binary) => 0.1,
            (LambdaPreset::Movielens, Algorithm::Smooth) => 0.1,
            (LambdaPreset::Movielens, Algorithm::TimeBinary) => 0.1,
            (LambdaPreset::Movielens, Algorithm::TimeSmooth) => 0.05,
            (LambdaPreset::Epinions, Algorithm::Binary) => 0.1,
            (LambdaPreset::Epinions, Algorithm::Smooth) => 0.0001,
            (LambdaPreset::Epinions, Algorithm::TimeBinary) => 0.0006,
            (LambdaPreset::Epinions, Algorithm::TimeSmooth) => 0.0002,
        }
    }
}

/// Either one base seed or all four explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default = "default_seed")]
    pub base: u64,
    pub split: Option<u64>,
    pub epoch: Option<u64>,
    pub serve: Option<u64>,
    pub model: Option<u64>,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            base: default_seed(),
            split: None,
            epoch: None,
            serve: None,
            model: None,
        }
    }
}

impl SeedConfig {
    pub fn resolve(&self) -> Seeds {
        let derived = Seeds::from_base(self.base);
        Seeds {
            split: self.split.unwrap_or(derived.split),
            epoch: self.epoch.unwrap_or(derived.epoch),
            serve: self.serve.unwrap_or(derived.serve),
            model: self.model.unwrap_or(derived.model),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_min_ratings() -> usize {
    20
}
fn default_head_mass() -> f64 {
    0.8
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_seed() -> u64 {
    Seeds::default().split
}

impl ExperimentConfig {
    /// Reads a TOML file. Relative dataset and output paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.dataset.path.is_relative() {
            config.dataset.path = base.join(&config.dataset.path);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    /// Applies `--out` and `--seed`; `--seed` replaces every configured seed.
    pub fn with_overrides(mut self, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        if let Some(out) = out {
            self.output_dir = out;
        }
        if let Some(seed) = seed {
            self.seeds = SeedConfig {
                base: seed,
                ..SeedConfig::default()
            };
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(d.head_mass > 0.0 && d.head_mass <= 1.0) {
            bail!("dataset.head_mass must lie in (0, 1], got {}", d.head_mass);
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            bail!("dataset.test_fraction must lie in (0, 1), got {}", d.test_fraction);
        }
        self.train_config().validate()?;
        for (label, &lambda) in &self.lambda {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                bail!("lambda.{label} must be a finite value >= 0, got {lambda}");
            }
            if !poptail_core::reranker::REGISTRY_LABELS.contains(&label.as_str()) {
                bail!(
                    "lambda.{label}: unknown algorithm; known: {}",
                    Algorithm::registry_listing()
                );
            }
        }
        let algorithms = self.algorithms()?;
        if algorithms.is_empty() {
            bail!("experiment.algorithms is empty");
        }
        for a in algorithms {
            self.lambda_for(a)?;
        }
        Ok(())
    }

    /// Checks that the raw ratings file exists; only `prepare` needs it.
    pub fn validate_source(&self) -> Result<()> {
        if !self.dataset.path.is_file() {
            bail!("dataset file {} does not exist", self.dataset.path.display());
        }
        Ok(())
    }

    pub fn algorithms(&self) -> Result<Vec<Algorithm>> {
        let mut out = Vec::new();
        for label in &self.experiment.algorithms {
            let a: Algorithm = label.parse()?;
            if !out.contains(&a) {
                out.push(a);
            }
        }
        Ok(out)
    }

    pub fn lambda_for(&self, algorithm: Algorithm) -> Result<f64> {
        if algorithm == Algorithm::Base {
            return Ok(0.0);
        }
        if let Some(&l) = self.lambda.get(algorithm.label()) {
            return Ok(l);
        }
        match self.experiment.lambda_preset {
            Some(p) => Ok(p.lambda(algorithm)),
            None => bail!(
                "no lambda for {}: set lambda.{} or experiment.lambda_preset",
                algorithm.label(),
                algorithm.label()
            ),
        }
    }

    pub fn seeds(&self) -> Seeds {
        self.seeds.resolve()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k: self.model.k,
            sweeps: self.model.sweeps,
            regularization: self.model.regularization,
            seed: self.seeds().model,
            support: self.model.support,
        }
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.output_dir.join("prepared")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.output_dir.join("model")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.output_dir.join("runs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    const MINIMAL: &str = r#"
        [dataset]
        name = "ml-1m"
        path = "ratings.dat"
        format = "movielens1m"
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = parse(MINIMAL);
        assert_eq!(c.dataset.min_user_ratings, 20);
        assert_eq!(c.dataset.min_item_ratings, 20);
        assert_eq!(c.dataset.head_mass, 0.8);
        assert_eq!(c.dataset.test_fraction, 0.2);
        assert_eq!(c.experiment.n_epochs, 50);
        assert_eq!(c.experiment.candidate_len, 100);
        assert_eq!(c.model.k, 10);
        assert_eq!(c.algorithms().unwrap(), Algorithm::ALL.to_vec());
        assert_eq!(c.seeds(), Seeds::default());
    }

    #[test]
    fn presets_and_overrides() {
        let mut c = parse(MINIMAL);
        assert!(c.validate().is_err(), "no lambda for the re-rankers");
        c.experiment.lambda_preset = Some(LambdaPreset::Epinions);
        c.lambda.insert("smooth".into(), 0.3);
        c.validate().unwrap();
        assert_eq!(c.lambda_for(Algorithm::Smooth).unwrap(), 0.3);
        assert_eq!(c.lambda_for(Algorithm::TimeBinary).unwrap(), 0.0006);
        assert_eq!(c.lambda_for(Algorithm::Base).unwrap(), 0.0);
        c.lambda.insert("binary".into(), -1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_override_replaces_all_seeds() {
        let mut c = parse(MINIMAL);
        c.seeds.serve = Some(99);
        let c = c.with_overrides(Some("elsewhere".into()), Some(7));
        assert_eq!(c.seeds(), Seeds::from_base(7));
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn unknown_and_reserved_algorithms() {
        let mut c = parse(MINIMAL);
        c.experiment.algorithms = vec!["base".into(), "mmr".into()];
        let err = c.algorithms().unwrap_err().to_string();
        assert!(err.contains("reg (out of scope)"), "{err}");
        c.experiment.algorithms = vec!["reg".into()];
        assert!(c.algorithms().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{MINIMAL}\n[model]\nfactors = 3\n");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }
}
