//! Pairwise ranking matrix factorization trained by alternating least squares.
//!
//! The model minimises, over user factors `p_u` and item factors `q_i`,
//!
//! ```text
//! Σ_u Σ_{i ∈ I_u} Σ_{j ∈ I} s_j [ (p_u·q_i − p_u·q_j) − (r_ui − r_uj) ]²  +  reg (‖P‖² + ‖Q‖²)
//! ```
//!
//! where `I_u` are the items rated by `u`, `j` ranges over the whole catalog with `r_uj = 0`
//! when unrated, and `s_j` is an item support weight. Every sum over the catalog is expanded
//! into precomputed aggregates, so a sweep costs `O(nnz · k²)` instead of `O(nnz · |I|)`.
//!
//! The user step solves every `p_u` exactly given `Q`. The item step visits items one at a
//! time and solves each `q_i` exactly given everything else, updating the aggregates after
//! every item, so the objective never increases from one sweep to the next.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Recommender;
use crate::dataset::{Entry, Interactions};
use crate::error::{Error, Result};
use crate::types::{ItemIdx, UserIdx};

/// Weight `s_j` given to item `j` when it acts as the comparison item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupportWeight {
    /// `s_j = 1`
    #[default]
    Uniform,
    /// `s_j = |U_j|`, the item's train popularity.
    Popularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub sweeps: usize,
    pub regularization: f64,
    pub seed: u64,
    #[serde(default)]
    pub support: SupportWeight,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 10,
            sweeps: 30,
            regularization: 0.01,
            seed: 0,
            support: SupportWeight::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::InvalidConfig("sweeps must be at least 1".into()));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "regularization must be finite and non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }
}

/// User and item factor matrices, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub trained_sweeps: usize,
    pub config: TrainConfig,
}

impl FactorModel {
    pub fn user_row(&self, user: UserIdx) -> &[f64] {
        &self.user_factors[user.index() * self.k..(user.index() + 1) * self.k]
    }

    pub fn item_row(&self, item: ItemIdx) -> &[f64] {
        &self.item_factors[item.index() * self.k..(item.index() + 1) * self.k]
    }

    pub fn score(&self, user: UserIdx, item: ItemIdx) -> Result<f64> {
        if user.index() >= self.n_users {
            return Err(Error::UnknownId {
                kind: "user",
                id: user.0 as u64,
            });
        }
        if item.index() >= self.n_items {
            return Err(Error::UnknownId {
                kind: "item",
                id: item.0 as u64,
            });
        }
        Ok(dot(self.user_row(user), self.item_row(item)))
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors.iter().chain(&self.item_factors).all(|v| v.is_finite())
    }
}

impl Recommender for FactorModel {
    fn label(&self) -> &str {
        "rankals"
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn scores(&self, user: UserIdx) -> Vec<f64> {
        let p = self.user_row(user);
        self.item_factors.chunks_exact(self.k).map(|q| dot(p, q)).collect()
    }
}

/// Objective values recorded during training: index 0 is the initial model, index `t` the
/// model after sweep `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: Vec<f64>,
    pub pairwise: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn support_weights(train: &Interactions, support: SupportWeight) -> Vec<f64> {
    match support {
        SupportWeight::Uniform => vec![1.0; train.n_items()],
        SupportWeight::Popularity => train.popularity().iter().map(|&p| p as f64).collect(),
    }
}

/// Catalog-wide sums over comparison items: `Σ s_j`, `Σ s_j q_j` and `Σ s_j q_j q_jᵀ`.
struct ItemAggregates {
    s_sum: f64,
    q_bar: DVector<f64>,
    a_tilde: DMatrix<f64>,
}

impl ItemAggregates {
    fn compute(q: &[f64], k: usize, support: &[f64]) -> Self {
        let mut q_bar = DVector::zeros(k);
        let mut a_tilde = DMatrix::zeros(k, k);
        for (row, &s) in q.chunks_exact(k).zip(support) {
            let v = DVector::from_column_slice(row);
            q_bar.axpy(s, &v, 1.0);
            a_tilde.ger(s, &v, &v, 1.0);
        }
        ItemAggregates {
            s_sum: support.iter().sum(),
            q_bar,
            a_tilde,
        }
    }
}

/// The user's objective as the quadratic `pᵀ M p − 2 pᵀ y + c` (regularization excluded).
struct UserQuadratic {
    m: DMatrix<f64>,
    y: DVector<f64>,
    c: f64,
}

fn user_quadratic(profile: &[Entry], q: &[f64], k: usize, support: &[f64], agg: &ItemAggregates) -> UserQuadratic {
    let n = profile.len() as f64;
    let mut a_u = DMatrix::zeros(k, k);
    let mut q_c = DVector::zeros(k);
    let mut b_u = DVector::zeros(k);
    let mut b_tilde = DVector::zeros(k);
    let (mut r_c, mut r_bar, mut r2_c, mut r2_bar) = (0.0, 0.0, 0.0, 0.0);
    for e in profile {
        let i = e.item.index();
        let r = e.value as f64;
        let s = support[i];
        let v = DVector::from_column_slice(&q[i * k..(i + 1) * k]);
        a_u.ger(1.0, &v, &v, 1.0);
        q_c += &v;
        b_u.axpy(r, &v, 1.0);
        b_tilde.axpy(s * r, &v, 1.0);
        r_c += r;
        r_bar += s * r;
        r2_c += r * r;
        r2_bar += s * r * r;
    }
    let s_sum = agg.s_sum;
    let m = &a_u * s_sum - &q_c * agg.q_bar.transpose() - &agg.q_bar * q_c.transpose() + &agg.a_tilde * n;
    let y = &b_u * s_sum - &q_c * r_bar - &agg.q_bar * r_c + &b_tilde * n;
    let c = s_sum * r2_c - 2.0 * r_c * r_bar + n * r2_bar;
    UserQuadratic { m, y, c }
}

fn solve_spd(mut a: DMatrix<f64>, b: &DVector<f64>, reg: f64) -> Option<DVector<f64>> {
    for d in 0..a.nrows() {
        a[(d, d)] += reg;
    }
    match a.clone().cholesky() {
        Some(chol) => Some(chol.solve(b)),
        None => a.lu().solve(b),
    }
}

/// Pairwise part of the objective, without regularization.
pub fn pairwise_objective(model: &FactorModel, train: &Interactions) -> f64 {
    let support = support_weights(train, model.config.support);
    pairwise_with(model, train, &support)
}

fn pairwise_with(model: &FactorModel, train: &Interactions, support: &[f64]) -> f64 {
    let k = model.k;
    let agg = ItemAggregates::compute(&model.item_factors, k, support);
    let per_user: Vec<f64> = (0..model.n_users)
        .into_par_iter()
        .map(|u| {
            let profile = train.profile(UserIdx(u as u32));
            if profile.is_empty() {
                return 0.0;
            }
            let quad = user_quadratic(profile, &model.item_factors, k, support, &agg);
            let p = DVector::from_column_slice(model.user_row(UserIdx(u as u32)));
            (p.transpose() * &quad.m * &p)[(0, 0)] - 2.0 * p.dot(&quad.y) + quad.c
        })
        .collect();
    per_user.iter().sum()
}

fn regularization_term(model: &FactorModel) -> f64 {
    let sq: f64 = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .map(|v| v * v)
        .sum();
    model.config.regularization * sq
}

fn user_step(model: &mut FactorModel, train: &Interactions, support: &[f64]) {
    let k = model.k;
    let reg = model.config.regularization;
    let agg = ItemAggregates::compute(&model.item_factors, k, support);
    let q = &model.item_factors;
    model
        .user_factors
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(u, p)| {
            let profile = train.profile(UserIdx(u as u32));
            if profile.is_empty() {
                p.fill(0.0);
                return;
            }
            let quad = user_quadratic(profile, q, k, support, &agg);
            if let Some(solution) = solve_spd(quad.m, &quad.y, reg) {
                p.copy_from_slice(solution.as_slice());
            }
        });
}

/// Per-user constants that stay fixed through an item step.
struct UserConstants {
    n: Vec<f64>,
    r_bar: Vec<f64>,
}

fn item_step(model: &mut FactorModel, train: &Interactions, raters: &[Vec<(u32, f32)>], support: &[f64]) {
    let k = model.k;
    let reg = model.config.regularization;
    let p = &model.user_factors;
    let q = &mut model.item_factors;

    let consts = UserConstants {
        n: (0..model.n_users)
            .map(|u| train.profile(UserIdx(u as u32)).len() as f64)
            .collect(),
        r_bar: (0..model.n_users)
            .map(|u| {
                train
                    .profile(UserIdx(u as u32))
                    .iter()
                    .map(|e| support[e.item.index()] * e.value as f64)
                    .sum()
            })
            .collect(),
    };

    // N = Σ_u n_u p_u p_uᵀ, Z = Σ_u (Σ_i r_ui) p_u, G = Σ_u p_u p_uᵀ (Σ_{i∈I_u} q_i)
    let mut big_n = DMatrix::zeros(k, k);
    let mut z = DVector::zeros(k);
    let mut g = DVector::zeros(k);
    for u in 0..model.n_users {
        let profile = train.profile(UserIdx(u as u32));
        if profile.is_empty() {
            continue;
        }
        let pu = DVector::from_column_slice(&p[u * k..(u + 1) * k]);
        let mut q_c = DVector::zeros(k);
        let mut r_c = 0.0;
        for e in profile {
            let i = e.item.index();
            q_c += DVector::from_column_slice(&q[i * k..(i + 1) * k]);
            r_c += e.value as f64;
        }
        big_n.ger(consts.n[u], &pu, &pu, 1.0);
        z.axpy(r_c, &pu, 1.0);
        g.axpy(pu.dot(&q_c), &pu, 1.0);
    }
    let mut agg = ItemAggregates::compute(q, k, support);
    let s_sum = agg.s_sum;

    for (i, item_raters) in raters.iter().enumerate() {
        let s_i = support[i];
        let mut h = DMatrix::zeros(k, k);
        let mut c = DVector::zeros(k);
        for &(u, r) in item_raters {
            let u = u as usize;
            let r = r as f64;
            let pu = DVector::from_column_slice(&p[u * k..(u + 1) * k]);
            h.ger(1.0, &pu, &pu, 1.0);
            c.axpy(s_sum * r - consts.r_bar[u] + s_i * consts.n[u] * r, &pu, 1.0);
        }
        let q_old = DVector::from_column_slice(&q[i * k..(i + 1) * k]);
        let a = &big_n * s_i + &h * (s_sum - 2.0 * s_i);
        let b = (&g - &z) * s_i + &h * (&agg.q_bar - &q_old * (2.0 * s_i)) + c;
        let Some(q_new) = solve_spd(a, &b, reg) else {
            continue;
        };
        let delta = &q_new - &q_old;
        agg.q_bar.axpy(s_i, &delta, 1.0);
        g += &h * &delta;
        q[i * k..(i + 1) * k].copy_from_slice(q_new.as_slice());
    }
}

/// Trains a factor model on `train`. Identical inputs give bitwise-identical factors.
pub fn train(train: &Interactions, config: &TrainConfig) -> Result<(FactorModel, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("cannot train on an empty rating set".into()));
    }
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let item_factors: Vec<f64> = (0..train.n_items() * k).map(|_| normal.sample(&mut rng)).collect();
    let user_factors: Vec<f64> = (0..train.n_users() * k).map(|_| normal.sample(&mut rng)).collect();
    let mut model = FactorModel {
        n_users: train.n_users(),
        n_items: train.n_items(),
        k,
        user_factors,
        item_factors,
        trained_sweeps: 0,
        config: *config,
    };

    let support = support_weights(train, config.support);
    let mut raters: Vec<Vec<(u32, f32)>> = vec![Vec::new(); train.n_items()];
    for e in train.entries() {
        raters[e.item.index()].push((e.user.0, e.value));
    }

    let mut report = TrainReport {
        objective: Vec::with_capacity(config.sweeps + 1),
        pairwise: Vec::with_capacity(config.sweeps + 1),
    };
    let pairwise = pairwise_with(&model, train, &support);
    report.pairwise.push(pairwise);
    report.objective.push(pairwise + regularization_term(&model));

    for sweep in 1..=config.sweeps {
        user_step(&mut model, train, &support);
        item_step(&mut model, train, &raters, &support);
        model.trained_sweeps = sweep;
        if !model.is_finite() {
            return Err(Error::Diverged { sweep });
        }
        let pairwise = pairwise_with(&model, train, &support);
        let objective = pairwise + regularization_term(&model);
        if !objective.is_finite() {
            return Err(Error::Diverged { sweep });
        }
        log::debug!("sweep {sweep}: objective {objective:.6e}");
        report.pairwise.push(pairwise);
        report.objective.push(objective);
    }
    Ok((model, report))
}
