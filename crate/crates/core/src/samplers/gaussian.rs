//! Gaussian kernels with a Gaussian prior on a latent atom vector, with the
//! atoms integrated out.
//!
//! Each group observes a fixed subset of the latent coordinates; the kernel is
//! Gaussian with a diagonal covariance `diag(σ²)` on those coordinates.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::base_measure::{build_corr_matrix, sample_mvn, BaseFamily, BaseMeasure};
use crate::error::{invalid, FurbiError, Result};
use crate::samplers::adapt::RwScale;
use crate::samplers::{AtomModel, HyperPriors};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A Gaussian density in Cholesky form, ready for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussPred {
    mean: Vec<f64>,
    /// Row-major lower Cholesky factor.
    chol: Vec<f64>,
    ln_norm: f64,
}

impl GaussPred {
    fn new(mean: Vec<f64>, cov: &DMatrix<f64>) -> Self {
        let d = mean.len();
        let l = Cholesky::new(cov.clone())
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::from_diagonal_element(d, d, f64::NAN));
        let mut chol = vec![0.0; d * d];
        let mut ln_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                chol[i * d + j] = l[(i, j)];
            }
            ln_det += 2.0 * l[(i, i)].ln();
        }
        Self {
            mean,
            chol,
            ln_norm: -0.5 * ln_det - 0.5 * d as f64 * LN_2PI,
        }
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut z = [0.0f64; 16];
        let mut q = 0.0;
        for i in 0..d {
            let mut acc = x[i] - self.mean[i];
            for j in 0..i {
                acc -= self.chol[i * d + j] * z[j];
            }
            z[i] = acc / self.chol[i * d + i];
            q += z[i] * z[i];
        }
        self.ln_norm - 0.5 * q
    }
}

/// Per-cluster sufficient statistics and the derived posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussStats {
    pub rows: usize,
    /// Per latent coordinate: number of covering observations, sum, sum of squares.
    pub count: Vec<usize>,
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub post_mean: DVector<f64>,
    pub post_cov: DMatrix<f64>,
    preds: Vec<GaussPred>,
}

#[derive(Debug, Clone)]
pub struct GaussianAtoms {
    pub mean: DVector<f64>,
    pub scale: Vec<f64>,
    /// Upper-triangle correlations of the atom prior.
    pub rhos: Vec<f64>,
    pub kernel_var: Vec<f64>,
    pub group_coords: Vec<Vec<usize>>,
    prior_prec: DMatrix<f64>,
    prior_h: DVector<f64>,
    prior_cov: DMatrix<f64>,
    new_preds: Vec<GaussPred>,
    rho_scale: RwScale,
    var_scale: Vec<RwScale>,
}

impl GaussianAtoms {
    pub fn new(
        mean: Vec<f64>,
        scale: Vec<f64>,
        rhos: Vec<f64>,
        kernel_var: Vec<f64>,
        group_coords: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 || d > 16 || scale.len() != d || kernel_var.len() != d {
            return Err(invalid("atoms", "mean, scale and kernel variances need a common dimension in 1..=16"));
        }
        if kernel_var.iter().chain(&scale).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("atoms", "scales and kernel variances must be positive"));
        }
        if group_coords.is_empty() || group_coords.iter().any(|c| c.is_empty() || c.iter().any(|&i| i >= d)) {
            return Err(invalid("group_coords", "each group needs a non-empty set of valid coordinates"));
        }
        let corr = build_corr_matrix(&rhos, d)?
            .ok_or_else(|| invalid("rhos", "correlation matrix is not positive definite"))?;
        let mut model = Self {
            mean: DVector::from_vec(mean),
            scale,
            rhos,
            kernel_var,
            group_coords,
            prior_prec: DMatrix::zeros(d, d),
            prior_h: DVector::zeros(d),
            prior_cov: DMatrix::zeros(d, d),
            new_preds: Vec::new(),
            rho_scale: RwScale::new(0.1),
            var_scale: vec![RwScale::new(0.2); d],
        };
        model.set_corr(&corr)?;
        Ok(model)
    }

    /// The atom model implied by a Gaussian base measure: bivariate and
    /// multivariate families map group `g` to coordinate `g`, the diagonal
    /// family maps every group to its single coordinate.
    pub fn from_base(g0: &BaseMeasure, kernel_var: f64, groups: usize) -> Result<Self> {
        let d = g0.latent_dim();
        let coords = match g0.family {
            BaseFamily::DiagonalDegenerate => vec![vec![0]; groups],
            BaseFamily::BivariateGaussian | BaseFamily::MultivariateGaussianCorr => {
                if groups > d {
                    return Err(invalid("groups", format!("base measure has {d} coordinates for {groups} groups")));
                }
                (0..groups).map(|g| vec![g]).collect()
            }
            _ => {
                return Err(FurbiError::Unsupported(format!(
                    "{:?} does not define a per-group coordinate map",
                    g0.family
                )))
            }
        };
        Self::new(g0.mean.clone(), g0.scale.clone(), g0.upper_rhos(), vec![kernel_var; d], coords)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    fn cov_from_corr(&self, corr: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| corr[(i, j)] * self.scale[i] * self.scale[j])
    }

    fn set_corr(&mut self, corr: &DMatrix<f64>) -> Result<()> {
        let cov = self.cov_from_corr(corr);
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| invalid("rhos", "prior covariance is not positive definite"))?;
        self.prior_prec = chol.inverse();
        self.prior_h = &self.prior_prec * &self.mean;
        self.prior_cov = cov;
        self.rebuild_new_preds();
        Ok(())
    }

    fn rebuild_new_preds(&mut self) {
        self.new_preds = (0..self.group_coords.len())
            .map(|g| self.pred_for(g, &self.mean, &self.prior_cov))
            .collect();
    }

    fn pred_for(&self, g: usize, mean: &DVector<f64>, cov: &DMatrix<f64>) -> GaussPred {
        let idx = &self.group_coords[g];
        let m: Vec<f64> = idx.iter().map(|&i| mean[i]).collect();
        let s = DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            cov[(idx[a], idx[b])] + if a == b { self.kernel_var[idx[a]] } else { 0.0 }
        });
        GaussPred::new(m, &s)
    }

    fn recompute(&self, stats: &mut GaussStats) {
        let d = self.dim();
        let mut prec = self.prior_prec.clone();
        let mut h = self.prior_h.clone();
        for p in 0..d {
            prec[(p, p)] += stats.count[p] as f64 / self.kernel_var[p];
            h[p] += stats.sum[p] / self.kernel_var[p];
        }
        let cov = Cholesky::new(prec).map(|c| c.inverse()).unwrap_or_else(|| self.prior_cov.clone());
        let cov = (&cov + cov.transpose()) * 0.5;
        stats.post_mean = &cov * h;
        stats.post_cov = cov;
        stats.preds = (0..self.group_coords.len())
            .map(|g| self.pred_for(g, &stats.post_mean, &stats.post_cov))
            .collect();
    }

    /// Statistics of a cluster holding the given `(group, row)` members.
    pub fn stats_from_rows<'a>(&self, rows: impl IntoIterator<Item = (usize, &'a [f64])>) -> GaussStats {
        let mut s = self.empty_stats();
        for (g, row) in rows {
            for (&p, &v) in self.group_coords[g].iter().zip(row) {
                s.count[p] += 1;
                s.sum[p] += v;
                s.sumsq[p] += v * v;
            }
            s.rows += 1;
        }
        if s.rows > 0 {
            self.recompute(&mut s);
        }
        s
    }

    /// A draw of the full atom vector from its posterior given the members.
    pub fn draw_atom<R: Rng + ?Sized>(&self, stats: &GaussStats, rng: &mut R) -> Vec<f64> {
        sample_mvn(&stats.post_mean, &stats.post_cov, rng)
    }

    /// An observation for group `g` drawn from the kernel at `atom`.
    pub fn draw_row<R: Rng + ?Sized>(&self, atom: &[f64], g: usize, rng: &mut R) -> Vec<f64> {
        self.group_coords[g]
            .iter()
            .map(|&p| atom[p] + self.kernel_var[p].sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn ln_prior_atoms(&self, chol: &Cholesky<f64, nalgebra::Dyn>, atoms: &[Vec<f64>]) -> f64 {
        let d = self.dim();
        let l = chol.l();
        let ln_det: f64 = (0..d).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let mut total = 0.0;
        for a in atoms {
            let diff = DVector::from_iterator(d, a.iter().zip(self.mean.iter()).map(|(x, m)| x - m));
            let z = l.solve_lower_triangular(&diff).expect("non-singular factor");
            total += -0.5 * z.norm_squared() - 0.5 * ln_det - 0.5 * d as f64 * LN_2PI;
        }
        total
    }

    fn update_rhos<R: Rng + ?Sized>(&mut self, atoms: &[Vec<f64>], rng: &mut R) {
        let d = self.dim();
        if d < 2 {
            return;
        }
        let current_corr = build_corr_matrix(&self.rhos, d).ok().flatten().expect("current correlation is valid");
        let current = Cholesky::new(self.cov_from_corr(&current_corr)).expect("current covariance is PD");
        let mut ln_cur = self.ln_prior_atoms(&current, atoms);
        for k in 0..self.rhos.len() {
            let mut proposal = self.rhos.clone();
            proposal[k] = reflect(proposal[k] + self.rho_scale.step() * rng.sample::<f64, _>(StandardNormal), -1.0, 1.0);
            let accepted = match build_corr_matrix(&proposal, d).ok().flatten() {
                // Non-PD proposals lie outside the truncated prior's support.
                None => false,
                Some(corr) => match Cholesky::new(self.cov_from_corr(&corr)) {
                    None => false,
                    Some(ch) => {
                        let ln_prop = self.ln_prior_atoms(&ch, atoms);
                        if rng.random::<f64>().ln() < ln_prop - ln_cur {
                            self.rhos = proposal;
                            ln_cur = ln_prop;
                            true
                        } else {
                            false
                        }
                    }
                },
            };
            self.rho_scale.record(accepted);
        }
        let corr = build_corr_matrix(&self.rhos, d).ok().flatten().expect("accepted correlation is valid");
        self.set_corr(&corr).expect("accepted covariance is PD");
    }

    fn update_kernel_var<R: Rng + ?Sized>(
        &mut self,
        clusters: &[GaussStats],
        atoms: &[Vec<f64>],
        shape: f64,
        rate: f64,
        rng: &mut R,
    ) {
        for p in 0..self.dim() {
            let (mut n, mut ss) = (0.0, 0.0);
            for (s, a) in clusters.iter().zip(atoms) {
                let c = s.count[p] as f64;
                n += c;
                ss += s.sumsq[p] - 2.0 * a[p] * s.sum[p] + c * a[p] * a[p];
            }
            let ss = ss.max(0.0);
            // Gamma(shape, rate) prior on the variance itself; walk on log σ².
            let ln_target = |v: f64| (shape - 1.0) * v.ln() - rate * v - 0.5 * n * v.ln() - 0.5 * ss / v + v.ln();
            let cur = self.kernel_var[p];
            let prop = cur * (self.var_scale[p].step() * rng.sample::<f64, _>(StandardNormal)).exp();
            let accepted = rng.random::<f64>().ln() < ln_target(prop) - ln_target(cur);
            if accepted {
                self.kernel_var[p] = prop;
            }
            self.var_scale[p].record(accepted);
        }
        self.rebuild_new_preds();
    }
}

/// Reflects `x` into `[lo, hi]`.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    lo + (x - lo).rem_euclid(width)
}

impl AtomModel for GaussianAtoms {
    type Stats = GaussStats;

    fn n_groups(&self) -> usize {
        self.group_coords.len()
    }

    fn row_len(&self, g: usize) -> usize {
        self.group_coords[g].len()
    }

    fn empty_stats(&self) -> GaussStats {
        let d = self.dim();
        let mut s = GaussStats {
            rows: 0,
            count: vec![0; d],
            sum: vec![0.0; d],
            sumsq: vec![0.0; d],
            post_mean: self.mean.clone(),
            post_cov: self.prior_cov.clone(),
            preds: Vec::new(),
        };
        s.preds = self.new_preds.clone();
        s
    }

    fn ln_pred_new(&self, g: usize, row: &[f64]) -> f64 {
        self.new_preds[g].ln_pdf(row)
    }

    fn ln_pred_join(&self, stats: &GaussStats, g: usize, row: &[f64]) -> f64 {
        stats.preds[g].ln_pdf(row)
    }

    fn add<R: Rng + ?Sized>(&self, stats: &mut GaussStats, g: usize, row: &[f64], _rng: &mut R) {
        for (&p, &v) in self.group_coords[g].iter().zip(row) {
            stats.count[p] += 1;
            stats.sum[p] += v;
            stats.sumsq[p] += v * v;
        }
        stats.rows += 1;
        self.recompute(stats);
    }

    fn remove(&self, stats: &mut GaussStats, g: usize, row: &[f64]) {
        for (&p, &v) in self.group_coords[g].iter().zip(row) {
            stats.count[p] -= 1;
            stats.sum[p] -= v;
            stats.sumsq[p] -= v * v;
            if stats.count[p] == 0 {
                stats.sum[p] = 0.0;
                stats.sumsq[p] = 0.0;
            }
        }
        stats.rows -= 1;
        self.recompute(stats);
    }

    fn refresh<R: Rng + ?Sized>(&self, _stats: &mut GaussStats, _rng: &mut R) {}

    fn update_hyper<R: Rng + ?Sized>(&mut self, clusters: &mut [GaussStats], priors: &HyperPriors, rng: &mut R) {
        let want_rho = priors.rho_uniform && self.dim() >= 2;
        let want_var = priors.kernel_var.is_some();
        if !want_rho && !want_var {
            return;
        }
        // Atoms are integrated out of the allocation step; draw them from their
        // posterior, update the hyperparameters given them, then drop them.
        let atoms: Vec<Vec<f64>> = clusters.iter().map(|s| self.draw_atom(s, rng)).collect();
        if want_rho {
            self.update_rhos(&atoms, rng);
        }
        if let Some(p) = priors.kernel_var {
            self.update_kernel_var(clusters, &atoms, p.shape, p.rate, rng);
        }
        for s in clusters.iter_mut() {
            self.recompute(s);
        }
    }

    fn hyper_values(&self) -> (Vec<f64>, Vec<f64>) {
        (self.rhos.clone(), self.kernel_var.clone())
    }

    fn freeze_adaptation(&mut self) {
        self.rho_scale.freeze();
        for s in &mut self.var_scale {
            s.freeze();
        }
    }
}
