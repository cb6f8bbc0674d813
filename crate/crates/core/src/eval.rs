//! Posterior summaries and metrics: density grids, MIAE, conditional
//! predictive ordinates, Rand index, variation-of-information point
//! estimates, effective sample size and a two-sample KS test.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FurbiError, Result};
use crate::special::log_sum_exp;

/// Trapezoid rule on a (not necessarily uniform) grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2).zip(values.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid", "needs at least two finite, strictly increasing points"));
    }
    Ok(())
}

/// Density draws on a grid, one row per kept iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
}

impl DensityGrid {
    pub fn new(grid: Vec<f64>, draws: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&grid)?;
        if draws.is_empty() {
            return Err(invalid("draws", "need at least one iteration"));
        }
        if draws.iter().any(|d| d.len() != grid.len()) {
            return Err(FurbiError::Data("density draws do not match the grid length".into()));
        }
        Ok(Self { grid, draws })
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        (0..self.grid.len()).map(|j| self.draws.iter().map(|d| d[j]).sum::<f64>() / n).collect()
    }

    /// Pointwise quantile with linear interpolation between order statistics.
    pub fn quantile(&self, q: f64) -> Vec<f64> {
        (0..self.grid.len())
            .map(|j| {
                let mut col: Vec<f64> = self.draws.iter().map(|d| d[j]).collect();
                col.sort_by(f64::total_cmp);
                quantile_sorted(&col, q)
            })
            .collect()
    }

    /// Trapezoid integral of each draw.
    pub fn integrals(&self) -> Vec<f64> {
        self.draws.iter().map(|d| trapezoid(&self.grid, d)).collect()
    }

    /// Rows `(x, mean, q05, q95)`.
    pub fn summary(&self) -> Vec<[f64; 4]> {
        let (m, lo, hi) = (self.mean(), self.quantile(0.05), self.quantile(0.95));
        (0..self.grid.len()).map(|j| [self.grid[j], m[j], lo[j], hi[j]]).collect()
    }
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, f) = (h.floor() as usize, h.fract());
    if i + 1 < sorted.len() {
        sorted[i] + f * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Integrated absolute error between two densities evaluated on the same grid.
pub fn miae(grid: &[f64], estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_grid(grid)?;
    if estimate.len() != grid.len() || truth.len() != grid.len() {
        return Err(FurbiError::Data(format!(
            "grid has {} points, estimate {} and truth {}",
            grid.len(),
            estimate.len(),
            truth.len()
        )));
    }
    let diff: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect();
    Ok(trapezoid(grid, &diff))
}

/// [`miae`] against an analytic density.
pub fn miae_fn(grid: &[f64], estimate: &[f64], truth: impl Fn(f64) -> f64) -> Result<f64> {
    let t: Vec<f64> = grid.iter().map(|&x| truth(x)).collect();
    miae(grid, estimate, &t)
}

/// Log CPO of one observation from its per-iteration log densities: the log
/// of their harmonic mean. `None` when some density is zero.
pub fn ln_cpo(ln_dens: &[f64]) -> Option<f64> {
    if ln_dens.is_empty() || ln_dens.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return None;
    }
    let neg: Vec<f64> = ln_dens.iter().map(|v| -v).collect();
    Some((ln_dens.len() as f64).ln() - log_sum_exp(&neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoSummary {
    pub ln_cpo: Vec<Option<f64>>,
    /// Mean of the defined log CPOs.
    pub alcpo: f64,
    /// Median of the defined log CPOs.
    pub mlcpo: f64,
    /// Observations left out because some iteration gave them zero density.
    pub excluded: Vec<usize>,
}

/// ALCPO and MLCPO from log densities laid out `[iteration][observation]`.
pub fn cpo_summary(ln_pred: &[Vec<f64>]) -> Result<CpoSummary> {
    let n = ln_pred.first().map_or(0, |r| r.len());
    if n == 0 || ln_pred.iter().any(|r| r.len() != n) {
        return Err(FurbiError::Data("predictive traces must be non-empty and rectangular".into()));
    }
    let ln_cpo: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ln_cpo(&ln_pred.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect();
    let excluded: Vec<usize> = (0..n).filter(|&i| ln_cpo[i].is_none()).collect();
    let ok: Vec<f64> = ln_cpo.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(FurbiError::Domain("every observation has a zero predictive density".into()));
    }
    Ok(CpoSummary { alcpo: ok.iter().sum::<f64>() / ok.len() as f64, mlcpo: median(&ok), ln_cpo, excluded })
}

/// Relabels a partition as 0, 1, ... in order of first appearance.
pub fn canonical(p: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    p.iter()
        .map(|&l| {
            let k = map.len();
            *map.entry(l).or_insert(k)
        })
        .collect()
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(FurbiError::Data(format!("partitions have lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Fraction of pairs on which two partitions agree (together in both or apart in both).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let (ca, cb) = (canonical(a), canonical(b));
    let table = contingency(&ca, &cb);
    let pairs = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let both: f64 = table.cells.iter().map(|&c| pairs(c)).sum();
    let in_a: f64 = table.rows.iter().map(|&c| pairs(c)).sum();
    let in_b: f64 = table.cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    Ok((total - in_a - in_b + 2.0 * both) / total)
}

struct Contingency {
    cells: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn contingency(a: &[usize], b: &[usize]) -> Contingency {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut cells = vec![0; ka * kb];
    let mut rows = vec![0; ka];
    let mut cols = vec![0; kb];
    for (&x, &y) in a.iter().zip(b) {
        cells[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    Contingency { cells, rows, cols }
}

fn entropy_terms(counts: &[usize], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n * (c as f64 / n).ln()).sum()
}

fn vi_canonical(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let t = contingency(a, b);
    let v = entropy_terms(&t.rows, n) + entropy_terms(&t.cols, n) - 2.0 * entropy_terms(&t.cells, n);
    v.max(0.0)
}

/// Variation of information `H(A) + H(B) - 2 I(A, B)` in nats.
pub fn vi_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(vi_canonical(&canonical(a), &canonical(b)))
}

/// Sampled partition with the smallest average VI distance to all samples.
/// Ties go to the earliest sample. Returns its index and the partition.
pub fn vi_point_estimate(samples: &[Vec<usize>]) -> Result<(usize, Vec<usize>)> {
    let n = samples.first().map(|s| s.len()).ok_or_else(|| invalid("samples", "need at least one partition"))?;
    if samples.iter().any(|s| s.len() != n) {
        return Err(FurbiError::Data("sampled partitions have different lengths".into()));
    }
    // Distinct partitions with their multiplicity and first index.
    let mut distinct: BTreeMap<Vec<usize>, (usize, usize)> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        distinct.entry(canonical(s)).and_modify(|e| e.1 += 1).or_insert((i, 1));
    }
    let items: Vec<(&Vec<usize>, usize, usize)> = distinct.iter().map(|(p, &(i, w))| (p, i, w)).collect();
    let scores: Vec<(usize, f64)> = items
        .par_iter()
        .map(|(p, first, _)| {
            let s: f64 = items.iter().map(|(q, _, w)| *w as f64 * vi_canonical(p, q)).sum();
            (*first, s)
        })
        .collect();
    let mut best = (usize::MAX, f64::INFINITY);
    for (first, s) in scores {
        let tol = 1e-12 * s.abs().max(1.0);
        if s < best.1 - tol || ((s - best.1).abs() <= tol && first < best.0) {
            best = (first, s);
        }
    }
    Ok((best.0, samples[best.0].clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub ess: f64,
    /// The trace was constant; `ess` is then its length.
    pub degenerate: bool,
}

/// Effective sample size by the initial monotone sequence estimator.
pub fn ess(trace: &[f64]) -> Result<Ess> {
    let n = trace.len();
    if n < 10 {
        return Err(invalid("trace", "needs at least 10 values"));
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let var0 = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if trace.iter().all(|&x| x == trace[0]) || !(var0 > 1e-300) {
        return Ok(Ess { ess: n as f64, degenerate: true });
    }
    let acov = |k: usize| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    // Sums of adjacent autocorrelation pairs, truncated at the first
    // non-positive one and forced to be non-increasing.
    let mut total = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let mut gamma = (acov(k) + acov(k + 1)) / var0;
        if gamma <= 0.0 {
            break;
        }
        gamma = gamma.min(prev);
        prev = gamma;
        total += gamma;
        k += 2;
    }
    let tau = (2.0 * total - 1.0).max(1.0 / n as f64);
    Ok(Ess { ess: n as f64 / tau, degenerate: false })
}

/// Standard error of a trace mean from non-overlapping batch means.
pub fn batch_means_se(trace: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || trace.len() < 2 * batches {
        return Err(invalid("batches", "need at least two batches of two values"));
    }
    let size = trace.len() / batches;
    let means: Vec<f64> = trace.chunks_exact(size).take(batches).map(|b| b.iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches - 1) as f64;
    Ok((var / batches as f64).sqrt())
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() || a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(invalid("samples", "need two non-empty samples without NaN"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    Ok((d, kolmogorov_q(lambda)))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Metrics of one fit, written as JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alcpo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlcpo: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cpo_excluded: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vi_estimate: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vi_clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_clusters: Option<f64>,
    #[serde(default)]
    pub ess: BTreeMap<String, Ess>,
}
