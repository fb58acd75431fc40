//! Synthetic rating data with a heavy popularity skew, for tests, benches and demos.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal};

use crate::dataset::Rating;
use crate::error::{Error, Result};
use crate::types::{ItemId, UserId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub latent_dim: usize,
    /// Every user rates at least this many items.
    pub min_profile: usize,
    /// Mean number of ratings above `min_profile` (geometric).
    pub mean_extra: f64,
    /// Exponent of the Zipf law behind item exposure.
    pub zipf_exponent: f64,
    /// Weight of latent taste against raw popularity when users pick items.
    pub taste_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 1200,
            items: 800,
            latent_dim: 4,
            min_profile: 20,
            mean_extra: 30.0,
            zipf_exponent: 1.3,
            taste_strength: 1.0,
            seed: 17,
        }
    }
}

/// Ratings on a 1–5 integer scale. User ids start at 1, item ids at 1.
pub fn generate(config: &SyntheticConfig) -> Vec<Rating> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let dim = config.latent_dim.max(1);
    let scale = 1.0 / (dim as f64).sqrt();

    // item ids are shuffled against popularity rank so that id order carries no signal
    let mut ids: Vec<u64> = (1..=config.items as u64).collect();
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let log_exposure: Vec<f64> = (0..config.items)
        .map(|rank| -config.zipf_exponent * ((rank + 1) as f64).ln())
        .collect();
    let item_vecs: Vec<Vec<f64>> = (0..config.items)
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng) * scale).collect())
        .collect();
    let quality: Vec<f64> = (0..config.items).map(|_| 0.5 * normal.sample(&mut rng)).collect();

    let mut ratings = Vec::new();
    for u in 0..config.users {
        let user_vec: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let extra = if config.mean_extra > 0.0 {
            let p = 1.0 / (1.0 + config.mean_extra);
            let draw: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (draw.ln() / (1.0 - p).ln()).floor() as usize
        } else {
            0
        };
        let n = (config.min_profile + extra).min(config.items);
        let affinity: Vec<f64> = item_vecs
            .iter()
            .map(|v| v.iter().zip(&user_vec).map(|(a, b)| a * b).sum())
            .collect();
        // Gumbel top-n draws n items without replacement, proportionally to the weights
        let mut keys: Vec<(f64, usize)> = (0..config.items)
            .map(|i| (log_exposure[i] + config.taste_strength * affinity[i] + gumbel.sample(&mut rng), i))
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in keys.iter().take(n) {
            let raw = 3.2 + affinity[i] + quality[i] + 0.6 * normal.sample(&mut rng);
            ratings.push(Rating {
                user: UserId(u as u64 + 1),
                item: ItemId(ids[i]),
                value: raw.round().clamp(1.0, 5.0) as f32,
                timestamp: Some(978_300_000 + ratings.len() as i64),
            });
        }
    }
    ratings
}

/// Writes ratings in the `user::item::rating::timestamp` layout.
pub fn write_movielens(path: &Path, ratings: &[Rating]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in ratings {
        writeln!(out, "{}::{}::{}::{}", r.user, r.item, r.value, r.timestamp.unwrap_or(0)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes ratings as whitespace-separated `user item rating` triples.
pub fn write_tabular(path: &Path, ratings: &[Rating]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in ratings {
        writeln!(out, "{} {} {}", r.user, r.item, r.value).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
