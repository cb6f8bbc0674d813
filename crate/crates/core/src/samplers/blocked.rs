//! Truncated stick-breaking (blocked) Gibbs sampler for equal-jumps gamma
//! models: every group shares the weights `W̄_k` and reads its own
//! coordinates of the atoms `φ_k ∈ ℝ^D`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::base_measure::sample_mvn;
use crate::error::{invalid, FurbiError, Result};
use crate::samplers::gaussian::GaussianAtoms;
use crate::samplers::mixture::sample_log_weights;
use crate::samplers::trace::TraceRow;
use crate::samplers::{AtomModel, HyperPriors};
use crate::special::{ln_normal, log_sum_exp};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockedState {
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
    /// Per group, per observation: atom index.
    pub labels: Vec<Vec<usize>>,
    pub theta: f64,
    pub iteration: usize,
}

impl BlockedState {
    pub fn n_clusters(&self) -> usize {
        let mut used = vec![false; self.weights.len()];
        for &l in self.labels.iter().flatten() {
            used[l] = true;
        }
        used.iter().filter(|&&u| u).count()
    }
}

/// Stick-breaking weights with `V_k ~ Beta(1 + n_k, θ + Σ_{l>k} n_l)`.
/// With `close`, the last stick takes all remaining mass; otherwise the
/// leftover `∏(1 - V_k)` is returned alongside.
pub fn draw_sticks<R: Rng + ?Sized>(counts: &[usize], theta: f64, close: bool, rng: &mut R) -> (Vec<f64>, f64) {
    let n = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut left = 1.0;
    let mut w = Vec::with_capacity(n);
    for (k, &c) in counts.iter().enumerate() {
        tail -= c;
        let v = if close && k + 1 == n {
            1.0
        } else {
            Beta::new(1.0 + c as f64, theta + tail as f64).expect("positive parameters").sample(rng)
        };
        w.push(left * v);
        left *= 1.0 - v;
    }
    (w, left)
}

#[derive(Debug, Clone)]
pub struct BlockedGibbs {
    pub model: GaussianAtoms,
    pub priors: HyperPriors,
    pub state: BlockedState,
    pub burn_in: usize,
    data: Vec<Vec<Vec<f64>>>,
    sticks: Vec<f64>,
}

impl BlockedGibbs {
    pub fn new<R: Rng + ?Sized>(
        theta: f64,
        model: GaussianAtoms,
        data: Vec<Vec<Vec<f64>>>,
        truncation: usize,
        priors: HyperPriors,
        rng: &mut R,
    ) -> Result<Self> {
        if truncation < 1 {
            return Err(invalid("truncation", "needs at least one atom"));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid("theta", "must be positive"));
        }
        if data.len() != model.n_groups() {
            return Err(FurbiError::Data(format!("model has {} groups, data has {}", model.n_groups(), data.len())));
        }
        for (g, rows) in data.iter().enumerate() {
            if rows.iter().any(|r| r.len() != model.row_len(g) || r.iter().any(|v| !v.is_finite())) {
                return Err(FurbiError::Data(format!("group {g}: rows must have {} finite values", model.row_len(g))));
            }
        }
        if priors.z_uniform {
            return Err(FurbiError::Unsupported("the blocked sampler covers equal jumps only".into()));
        }
        let (weights, _) = draw_sticks(&vec![0; truncation], theta, true, rng);
        let atoms = (0..truncation).map(|_| sample_mvn(&model.mean, model.prior_cov(), rng)).collect();
        let labels = data.iter().map(|d| vec![0; d.len()]).collect();
        let mut s = Self {
            model,
            priors,
            state: BlockedState { weights, atoms, labels, theta, iteration: 0 },
            burn_in: 0,
            data,
            sticks: Vec::new(),
        };
        s.allocate(rng);
        Ok(s)
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn truncation(&self) -> usize {
        self.state.weights.len()
    }

    fn ln_kernel(&self, atom: &[f64], g: usize, row: &[f64]) -> f64 {
        self.model.group_coords[g]
            .iter()
            .zip(row)
            .map(|(&p, &v)| ln_normal(v, atom[p], self.model.kernel_var[p]))
            .sum()
    }

    fn allocate<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ln_w: Vec<f64> = self.state.weights.iter().map(|w| w.ln()).collect();
        let mut buf = vec![0.0; ln_w.len()];
        for g in 0..self.data.len() {
            for i in 0..self.data[g].len() {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = ln_w[k] + self.ln_kernel(&self.state.atoms[k], g, &self.data[g][i]);
                }
                let total = log_sum_exp(&buf);
                self.state.labels[g][i] = sample_log_weights(&buf, total, rng);
            }
        }
    }

    /// One sweep: allocations, sticks, hyperparameters, atoms.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.truncation();
        self.allocate(rng);
        let mut counts = vec![0usize; n];
        for &l in self.state.labels.iter().flatten() {
            counts[l] += 1;
        }
        let (weights, _) = draw_sticks(&counts, self.state.theta, true, rng);
        self.sticks = stick_fractions(&weights);
        self.state.weights = weights;

        let mut stats: Vec<_> = (0..n).map(|k| self.member_stats(k)).collect();
        if let Some(prior) = self.priors.theta {
            // Conjugate: θ | V ~ Gamma(a + N - 1, b - Σ_{k<N} log(1 - V_k)).
            let s: f64 = self.sticks[..n - 1].iter().map(|v| (1.0 - v).max(f64::MIN_POSITIVE).ln()).sum();
            let rate = prior.rate - s;
            self.state.theta = Gamma::new(prior.shape + n as f64 - 1.0, 1.0 / rate)
                .expect("positive parameters")
                .sample(rng);
        }
        // Unoccupied atoms are pure prior draws; the hyperparameter step
        // conditions on the occupied ones and the atom step redraws all.
        let mut occupied: Vec<_> = stats.iter().filter(|s| s.rows > 0).cloned().collect();
        self.model.update_hyper(&mut occupied, &self.priors, rng);
        for (k, s) in stats.iter_mut().enumerate() {
            *s = self.member_stats(k);
            self.state.atoms[k] = self.model.draw_atom(s, rng);
        }
        self.state.iteration += 1;
        if self.state.iteration == self.burn_in {
            self.model.freeze_adaptation();
        }
    }

    fn member_stats(&self, k: usize) -> crate::samplers::GaussStats {
        let rows = self.state.labels.iter().enumerate().flat_map(|(g, labels)| {
            labels
                .iter()
                .enumerate()
                .filter(move |&(_, &l)| l == k)
                .map(move |(i, _)| (g, self.data[g][i].as_slice()))
        });
        self.model.stats_from_rows(rows)
    }

    /// Log density of `row` under group `g`'s current mixture.
    pub fn ln_mixture_density(&self, g: usize, row: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .state
            .weights
            .iter()
            .zip(&self.state.atoms)
            .map(|(w, a)| w.ln() + self.ln_kernel(a, g, row))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn data(&self) -> &[Vec<Vec<f64>>] {
        &self.data
    }

    /// Density of a new scalar observation of group `g` at each grid point.
    pub fn predictive_density(&self, g: usize, grid: &[f64]) -> Vec<f64> {
        let p = self.model.group_coords[g][0];
        let var = self.model.kernel_var[p];
        grid.iter()
            .map(|&x| {
                self.state
                    .weights
                    .iter()
                    .zip(&self.state.atoms)
                    .map(|(w, a)| w * ln_normal(x, a[p], var).exp())
                    .sum()
            })
            .collect()
    }

    pub fn trace_row(&self) -> TraceRow {
        let (rhos, variances) = self.model.hyper_values();
        let g_count = self.data.len();
        let mut per_group = vec![vec![false; self.truncation()]; g_count];
        for (g, labels) in self.state.labels.iter().enumerate() {
            for &l in labels {
                per_group[g][l] = true;
            }
        }
        let shared = (0..self.truncation())
            .filter(|&k| per_group.iter().filter(|u| u[k]).count() >= 2)
            .count();
        TraceRow {
            iteration: self.state.iteration,
            n_clusters: self.state.n_clusters(),
            group_clusters: per_group.iter().map(|u| u.iter().filter(|&&b| b).count()).collect(),
            shared,
            u: Vec::new(),
            theta: self.state.theta,
            z: f64::NAN,
            rhos,
            variances,
        }
    }
}

fn stick_fractions(w: &[f64]) -> Vec<f64> {
    let mut left = 1.0;
    w.iter()
        .map(|&wk| {
            let v = if left > 0.0 { (wk / left).min(1.0) } else { 1.0 };
            left -= wk;
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_d() -> GaussianAtoms {
        GaussianAtoms::new(vec![0.0], vec![1.0], vec![], vec![1.0], vec![vec![0]]).unwrap()
    }

    #[test]
    fn single_atom_truncation_puts_everything_in_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = vec![vec![vec![0.0], vec![5.0], vec![-3.0]]];
        let mut b = BlockedGibbs::new(1.0, one_d(), data, 1, HyperPriors::default(), &mut rng).unwrap();
        b.sweep(&mut rng);
        assert_eq!(b.state.weights, vec![1.0]);
        assert!(b.state.labels[0].iter().all(|&l| l == 0));
        assert!(BlockedGibbs::new(1.0, one_d(), vec![vec![vec![0.0]]], 0, HyperPriors::default(), &mut rng).is_err());
    }

    #[test]
    fn prior_stick_residual_is_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = 100_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..reps {
            let (_, r) = draw_sticks(&[0; 20], 1.0, false, &mut rng);
            acc += r;
            acc2 += r * r;
        }
        let mean = acc / reps as f64;
        let se = ((acc2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        let exact = 0.5f64.powi(20);
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn single_cluster_location_matches_conjugate_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = vec![vec![vec![2.0], vec![3.0], vec![4.0]]];
        let mut b = BlockedGibbs::new(1.0, one_d(), data, 1, HyperPriors::default(), &mut rng).unwrap();
        let n = 40_000;
        let (mut acc, mut acc2) = (0.0, 0.0);
        for _ in 0..n {
            b.sweep(&mut rng);
            let a = b.state.atoms[0][0];
            acc += a;
            acc2 += a * a;
        }
        // Posterior N(9/4, 1/4).
        let mean = acc / n as f64;
        let var = acc2 / n as f64 - mean * mean;
        assert!((mean - 2.25).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{mean}");
        assert!((var - 0.25).abs() < 0.01, "{var}");
    }
}
