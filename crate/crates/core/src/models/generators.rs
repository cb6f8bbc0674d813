//! Synthetic datasets for the bundled experiments.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::data::Dataset;

fn normals<R: Rng + ?Sized>(mean: f64, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Two samples, `W ~ N(10, 1)` of size `n` and `V ~ N(v_mean, 1)` of size `m`.
pub fn two_sample_density<R: Rng + ?Sized>(v_mean: f64, n: usize, m: usize, rng: &mut R) -> Dataset {
    let mut d = Dataset::from_samples(vec![normals(10.0, n, rng), normals(v_mean, m, rng)]);
    d.names = vec!["W".into(), "V".into()];
    d
}

/// Three samples `N(10, 1)`, `N(-10, 1)`, `N(x, 1)` of size `n` each.
pub fn three_group<R: Rng + ?Sized>(x: f64, n: usize, rng: &mut R) -> Dataset {
    let mut d = Dataset::from_samples(vec![normals(10.0, n, rng), normals(-10.0, n, rng), normals(x, n, rng)]);
    d.names = vec!["W1".into(), "W2".into(), "W3".into()];
    d
}

/// Two-component returns for a pair of assets. The second asset mirrors the
/// first (negative sign) or copies it (positive sign), with its own noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedReturns {
    pub n_first: usize,
    pub n_second: usize,
    /// Weight of the calm component.
    pub calm_weight: f64,
    pub calm: (f64, f64),
    pub shock: (f64, f64),
    pub negative: bool,
}

impl Default for PairedReturns {
    fn default() -> Self {
        Self { n_first: 49, n_second: 55, calm_weight: 0.7, calm: (0.6, 0.35), shock: (-1.6, 0.35), negative: true }
    }
}

/// Synthetic stock (first) and bond (second) returns, standardized per sample.
pub fn paired_returns<R: Rng + ?Sized>(cfg: &PairedReturns, rng: &mut R) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&cfg.calm_weight) || cfg.calm.1 <= 0.0 || cfg.shock.1 <= 0.0 {
        return Err(invalid("paired_returns", "weights must lie in [0, 1] and scales be positive"));
    }
    let sign = if cfg.negative { -1.0 } else { 1.0 };
    let draw = |n: usize, sign: f64, rng: &mut R| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let (m, s) = if rng.random::<f64>() < cfg.calm_weight { cfg.calm } else { cfg.shock };
                sign * Normal::new(m, s).expect("positive scale").sample(rng)
            })
            .collect()
    };
    let first = draw(cfg.n_first, 1.0, rng);
    let second = draw(cfg.n_second, sign, rng);
    let mut d = Dataset::from_samples(vec![first, second]);
    d.names = vec!["stocks".into(), "bonds".into()];
    d.standardize_groups()
}

/// How entries are deleted from the complete simulated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Missingness {
    /// Every entry independently missing with probability `p`.
    Mcar { p: f64 },
    /// Entry `j` of a row from true cluster `k` missing with probability `probs[k][j]`.
    Mnar { probs: Vec<Vec<f64>> },
}

impl Missingness {
    /// Cluster-dependent defaults, about 17% of entries overall.
    pub fn mnar_default() -> Self {
        Missingness::Mnar {
            probs: vec![vec![0.30, 0.10, 0.05], vec![0.05, 0.30, 0.10], vec![0.10, 0.05, 0.30], vec![0.15, 0.20, 0.15]],
        }
    }
}

/// A complete 3-variate Gaussian mixture with entries then deleted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSimulation {
    pub matrix: Vec<Vec<Option<f64>>>,
    pub complete: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
    pub missing_fraction: f64,
}

/// Cluster means and mixing weights of the missing-data simulation.
pub const MISSING_SIM_MEANS: [[f64; 3]; 4] =
    [[-2.0, -2.0, -2.0], [2.0, 2.0, 2.0], [-2.0, 2.0, 0.0], [2.0, -2.0, 0.0]];
pub const MISSING_SIM_WEIGHTS: [f64; 4] = [0.3, 0.3, 0.2, 0.2];
pub const MISSING_SIM_SD: f64 = 0.8;

pub fn missing_data<R: Rng + ?Sized>(n: usize, mechanism: &Missingness, rng: &mut R) -> Result<MissingSimulation> {
    match mechanism {
        Missingness::Mcar { p } if !(0.0..1.0).contains(p) => return Err(invalid("p", "must lie in [0, 1)")),
        Missingness::Mnar { probs }
            if probs.len() != 4 || probs.iter().any(|r| r.len() != 3 || r.iter().any(|q| !(0.0..1.0).contains(q))) =>
        {
            return Err(invalid("probs", "needs 4 rows of 3 probabilities in [0, 1)"))
        }
        _ => {}
    }
    let mut complete = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut matrix = Vec::with_capacity(n);
    let mut missing = 0usize;
    for _ in 0..n {
        let mut u: f64 = rng.random();
        let mut k = 0;
        while k < 3 && u >= MISSING_SIM_WEIGHTS[k] {
            u -= MISSING_SIM_WEIGHTS[k];
            k += 1;
        }
        let row: Vec<f64> = MISSING_SIM_MEANS[k]
            .iter()
            .map(|m| m + MISSING_SIM_SD * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let probs: [f64; 3] = match mechanism {
            Missingness::Mcar { p } => [*p; 3],
            Missingness::Mnar { probs } => [probs[k][0], probs[k][1], probs[k][2]],
        };
        // Rows with every entry deleted are redrawn: they carry no information.
        let mask = loop {
            let m: Vec<bool> = probs.iter().map(|&q| rng.random::<f64>() < q).collect();
            if m.iter().any(|&b| !b) {
                break m;
            }
        };
        missing += mask.iter().filter(|&&b| b).count();
        matrix.push(row.iter().zip(&mask).map(|(&v, &gone)| if gone { None } else { Some(v) }).collect());
        complete.push(row);
        truth.push(k);
    }
    Ok(MissingSimulation { matrix, complete, truth, missing_fraction: missing as f64 / (3 * n).max(1) as f64 })
}
