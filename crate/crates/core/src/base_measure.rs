//! Atom distributions on product spaces.
//!
//! Gaussian families are described by a Gaussian law on a latent vector. The
//! atom's coordinates in the product space are projections of that vector:
//! the bivariate and multivariate families use one latent coordinate per group,
//! the diagonal family a single coordinate shared by both groups, and the
//! missing-data family one coordinate per original variable.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FurbiError, Result};
use crate::special::{bvn_cdf, ln_gamma, norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseFamily {
    BivariateGaussian,
    MultivariateGaussianCorr,
    DiagonalDegenerate,
    NormalInvGammaPair,
    MissingDataDegenerate,
}

/// Normal-inverse-gamma hyperparameters for a pair of location-variance atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NigParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl NigParams {
    pub fn symmetric(lambda: f64, alpha: f64, beta: f64) -> Self {
        Self {
            lambda1: lambda,
            lambda2: lambda,
            alpha1: alpha,
            beta1: beta,
            alpha2: alpha,
            beta2: beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseMeasure {
    pub family: BaseFamily,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major correlation matrix of the latent vector.
    pub corr: Vec<f64>,
    pub nig: Option<NigParams>,
}

/// A draw from `G₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// Product-space coordinates of a Gaussian atom.
    Point(Vec<f64>),
    Nig(NigAtom),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigAtom {
    pub x: f64,
    pub var_x: f64,
    pub y: f64,
    pub var_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionalKind {
    Gaussian,
    Dirac,
    GaussianGivenSubset,
    NigCompanion,
}

/// Law of the unobserved coordinates of an atom given the observed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub kind: ConditionalKind,
    /// Latent coordinates the law is over.
    pub coords: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// For [`ConditionalKind::NigCompanion`]: the variance law `IG(alpha, beta)`
    /// and the regression of the location on the variance.
    pub nig: Option<NigCompanionLaw>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigCompanionLaw {
    pub alpha: f64,
    pub beta: f64,
    /// Location is `center + slope·σ_v`, variance `resid·σ_v²`.
    pub center: f64,
    pub slope: f64,
    pub resid: f64,
}

impl ConditionalLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            ConditionalKind::Dirac => self.mean.iter().copied().collect(),
            ConditionalKind::Gaussian | ConditionalKind::GaussianGivenSubset => {
                sample_mvn(&self.mean, &self.cov, rng)
            }
            ConditionalKind::NigCompanion => {
                let law = self.nig.expect("companion law present");
                let var = sample_inv_gamma(law.alpha, law.beta, rng);
                let z: f64 = rng.sample(StandardNormal);
                let loc = law.center + law.slope * var.sqrt();
                vec![loc + (law.resid * var).sqrt() * z, var]
            }
        }
    }
}

/// Correlation matrix assembled from upper-triangle entries in row-major order
/// (`ρ12, ρ13, …, ρ23, …`). Returns `Ok(None)` when the matrix is not positive
/// definite, which callers treat as a rejection.
pub fn build_corr_matrix(rhos: &[f64], dim: usize) -> Result<Option<DMatrix<f64>>> {
    if dim == 0 {
        return Err(invalid("dim", "must be positive"));
    }
    if rhos.len() != dim * (dim - 1) / 2 {
        return Err(invalid(
            "rhos",
            format!("expected {} entries for dimension {dim}, got {}", dim * (dim - 1) / 2, rhos.len()),
        ));
    }
    if rhos.iter().any(|r| !(r.abs() <= 1.0)) {
        return Err(invalid("rhos", "correlations must lie in [-1, 1]"));
    }
    let mut m = DMatrix::identity(dim, dim);
    let mut it = rhos.iter();
    for i in 0..dim {
        for j in (i + 1)..dim {
            let r = *it.next().expect("length checked");
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    Ok(Cholesky::new(m.clone()).map(|_| m))
}

impl BaseMeasure {
    pub fn bivariate(mean: f64, scale: f64, rho0: f64) -> Result<Self> {
        let g0 = Self {
            family: BaseFamily::BivariateGaussian,
            mean: vec![mean, mean],
            scale: vec![scale, scale],
            corr: vec![1.0, rho0, rho0, 1.0],
            nig: None,
        };
        g0.validate()?;
        Ok(g0)
    }

    pub fn diagonal(mean: f64, scale: f64) -> Result<Self> {
        let g0 = Self {
            family: BaseFamily::DiagonalDegenerate,
            mean: vec![mean],
            scale: vec![scale],
            corr: vec![1.0],
            nig: None,
        };
        g0.validate()?;
        Ok(g0)
    }

    /// Common mean and scale for every group; `rhos` in upper-triangle order.
    pub fn multivariate(groups: usize, mean: f64, scale: f64, rhos: &[f64]) -> Result<Self> {
        let corr = build_corr_matrix(rhos, groups)?
            .ok_or_else(|| invalid("rhos", "correlation matrix is not positive definite"))?;
        let g0 = Self {
            family: BaseFamily::MultivariateGaussianCorr,
            mean: vec![mean; groups],
            scale: vec![scale; groups],
            corr: row_major(&corr),
            nig: None,
        };
        g0.validate()?;
        Ok(g0)
    }

    pub fn missing_data(mean: Vec<f64>, scale: Vec<f64>, rhos: &[f64]) -> Result<Self> {
        let p = mean.len();
        let corr = build_corr_matrix(rhos, p)?
            .ok_or_else(|| invalid("rhos", "correlation matrix is not positive definite"))?;
        let g0 = Self {
            family: BaseFamily::MissingDataDegenerate,
            mean,
            scale,
            corr: row_major(&corr),
            nig: None,
        };
        g0.validate()?;
        Ok(g0)
    }

    pub fn nig_pair(mean: f64, rho0: f64, nig: NigParams) -> Result<Self> {
        let g0 = Self {
            family: BaseFamily::NormalInvGammaPair,
            mean: vec![mean, mean],
            scale: vec![1.0, 1.0],
            corr: vec![1.0, rho0, rho0, 1.0],
            nig: Some(nig),
        };
        g0.validate()?;
        Ok(g0)
    }

    /// Number of latent coordinates.
    pub fn latent_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn corr_matrix(&self) -> DMatrix<f64> {
        let d = self.latent_dim();
        DMatrix::from_row_slice(d, d, &self.corr)
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.latent_dim();
        DMatrix::from_fn(d, d, |i, j| self.corr[i * d + j] * self.scale[i] * self.scale[j])
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    /// The `(0, 1)` correlation of a two-coordinate family.
    pub fn rho0(&self) -> f64 {
        match self.family {
            BaseFamily::DiagonalDegenerate => 1.0,
            _ if self.latent_dim() >= 2 => self.corr[1],
            _ => 1.0,
        }
    }

    pub fn with_rho0(&self, rho0: f64) -> Self {
        let mut g0 = self.clone();
        if g0.latent_dim() == 2 {
            g0.corr[1] = rho0;
            g0.corr[2] = rho0;
        }
        g0
    }

    /// Copy with a new correlation matrix given by upper-triangle entries, or
    /// `None` if the matrix is not positive definite.
    pub fn with_rhos(&self, rhos: &[f64]) -> Result<Option<Self>> {
        Ok(build_corr_matrix(rhos, self.latent_dim())?.map(|m| {
            let mut g0 = self.clone();
            g0.corr = row_major(&m);
            g0
        }))
    }

    pub fn upper_rhos(&self) -> Vec<f64> {
        let d = self.latent_dim();
        let mut out = Vec::with_capacity(d * (d.saturating_sub(1)) / 2);
        for i in 0..d {
            for j in (i + 1)..d {
                out.push(self.corr[i * d + j]);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.latent_dim();
        if d == 0 || self.scale.len() != d || self.corr.len() != d * d {
            return Err(invalid("base_measure", "inconsistent mean, scale and corr dimensions"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(invalid("mean", "must be finite"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("scale", "must be positive and finite"));
        }
        for i in 0..d {
            if self.corr[i * d + i] != 1.0 {
                return Err(invalid("corr", "diagonal must be 1"));
            }
            for j in 0..d {
                let (a, b) = (self.corr[i * d + j], self.corr[j * d + i]);
                if a != b || !(a.abs() <= 1.0) {
                    return Err(invalid("corr", "must be symmetric with entries in [-1, 1]"));
                }
            }
        }
        let expected = match self.family {
            BaseFamily::BivariateGaussian | BaseFamily::NormalInvGammaPair => Some(2),
            BaseFamily::DiagonalDegenerate => Some(1),
            _ => None,
        };
        if let Some(e) = expected {
            if d != e {
                return Err(invalid("base_measure", format!("{:?} needs {e} latent coordinates", self.family)));
            }
        }
        if matches!(
            self.family,
            BaseFamily::BivariateGaussian | BaseFamily::MultivariateGaussianCorr | BaseFamily::NormalInvGammaPair
        ) && (self.mean.iter().any(|&m| m != self.mean[0]) || self.scale.iter().any(|&s| s != self.scale[0]))
        {
            return Err(invalid("base_measure", "all coordinates must share the marginal law"));
        }
        match self.family {
            BaseFamily::NormalInvGammaPair => {
                let p = self.nig.ok_or_else(|| invalid("nig", "missing hyperparameters"))?;
                let all = [p.lambda1, p.lambda2, p.alpha1, p.beta1, p.alpha2, p.beta2];
                if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(invalid("nig", "hyperparameters must be positive"));
                }
                if self.rho0().abs() >= 1.0 {
                    return Err(invalid("rho0", "must lie strictly inside (-1, 1) for the NIG pair"));
                }
            }
            BaseFamily::DiagonalDegenerate => {}
            _ => {
                if d > 1 && Cholesky::new(self.corr_matrix()).is_none() {
                    // The bivariate family allows |ρ₀| = 1 as a limiting case.
                    if !(self.family == BaseFamily::BivariateGaussian && self.rho0().abs() <= 1.0) {
                        return Err(invalid("corr", "must be positive definite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// One draw from `G₀`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Atom {
        match self.family {
            BaseFamily::NormalInvGammaPair => Atom::Nig(self.sample_nig(rng)),
            BaseFamily::DiagonalDegenerate => {
                let x = self.mean[0] + self.scale[0] * rng.sample::<f64, _>(StandardNormal);
                Atom::Point(vec![x, x])
            }
            _ => Atom::Point(sample_mvn(&self.mean_vector(), &self.cov_matrix(), rng)),
        }
    }

    fn sample_nig<R: Rng + ?Sized>(&self, rng: &mut R) -> NigAtom {
        let p = self.nig.expect("validated NIG pair");
        let var_x = sample_inv_gamma(p.alpha1, p.beta1, rng);
        let x = self.mean[0] + (var_x / p.lambda1).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let companion = self
            .nig_companion(x, var_x)
            .sample(rng);
        NigAtom {
            x,
            var_x,
            y: companion[0],
            var_y: companion[1],
        }
    }

    /// Law of `(y, σ_v²)` given `(x, σ_w²)` under the NIG pair.
    pub fn nig_companion(&self, x: f64, var_x: f64) -> ConditionalLaw {
        let p = self.nig.expect("NIG hyperparameters");
        let rho = self.rho0();
        let z = (x - self.mean[0]) / (var_x / p.lambda1).sqrt();
        let law = NigCompanionLaw {
            alpha: p.alpha2,
            beta: p.beta2,
            center: self.mean[1],
            slope: rho * z / p.lambda2.sqrt(),
            resid: (1.0 - rho * rho) / p.lambda2,
        };
        ConditionalLaw {
            kind: ConditionalKind::NigCompanion,
            coords: vec![1],
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
            nig: Some(law),
        }
    }

    /// Exact law of the remaining latent coordinates given `observed`
    /// `(coordinate, value)` pairs.
    pub fn conditional(&self, observed: &[(usize, f64)]) -> Result<ConditionalLaw> {
        let d = self.latent_dim();
        if observed.iter().any(|(i, _)| *i >= d.max(2)) {
            return Err(FurbiError::Domain("observed coordinate out of range".into()));
        }
        match self.family {
            BaseFamily::DiagonalDegenerate => {
                let &(_, x) = observed
                    .first()
                    .ok_or_else(|| FurbiError::Domain("nothing to condition on".into()))?;
                if observed.iter().any(|&(_, v)| v != x) {
                    return Err(FurbiError::Domain("diagonal atom observed at two different values".into()));
                }
                if observed.iter().any(|&(i, _)| i == 0) && observed.iter().any(|&(i, _)| i == 1) {
                    return Err(FurbiError::Domain("cannot condition on every coordinate".into()));
                }
                let other = if observed[0].0 == 0 { 1 } else { 0 };
                Ok(ConditionalLaw {
                    kind: ConditionalKind::Dirac,
                    coords: vec![other],
                    mean: DVector::from_element(1, x),
                    cov: DMatrix::zeros(1, 1),
                    nig: None,
                })
            }
            BaseFamily::NormalInvGammaPair => Err(FurbiError::Unsupported(
                "the NIG pair conditions on (x, σ²) through nig_companion".into(),
            )),
            _ => {
                let obs_idx: Vec<usize> = observed.iter().map(|(i, _)| *i).collect();
                let free: Vec<usize> = (0..d).filter(|i| !obs_idx.contains(i)).collect();
                if free.is_empty() {
                    return Err(FurbiError::Domain("cannot condition on every coordinate".into()));
                }
                let values: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
                let (mean, cov) = gaussian_conditional(
                    &self.mean_vector(),
                    &self.cov_matrix(),
                    &free,
                    &obs_idx,
                    &values,
                )?;
                let kind = if d == 2 {
                    ConditionalKind::Gaussian
                } else {
                    ConditionalKind::GaussianGivenSubset
                };
                Ok(ConditionalLaw {
                    kind,
                    coords: free,
                    mean,
                    cov,
                    nig: None,
                })
            }
        }
    }

    /// Density of the common marginal `P₀` (the location marginal for the NIG
    /// pair, a Student t).
    pub fn p0_density(&self, x: f64) -> f64 {
        match self.family {
            BaseFamily::NormalInvGammaPair => {
                let p = self.nig.expect("NIG hyperparameters");
                crate::special::ln_student_t(
                    x,
                    2.0 * p.alpha1,
                    self.mean[0],
                    p.beta1 / (p.alpha1 * p.lambda1),
                )
                .exp()
            }
            _ => norm_pdf((x - self.mean[0]) / self.scale[0]) / self.scale[0],
        }
    }

    /// Density of a pair `(x, y)` with respect to the reference measure of the
    /// support: planar Lebesgue for the Gaussian pair, Lebesgue on the diagonal
    /// for the degenerate family.
    pub fn g0_density(&self, x: f64, y: f64) -> f64 {
        match self.family {
            BaseFamily::DiagonalDegenerate => {
                if x == y {
                    self.p0_density(x)
                } else {
                    0.0
                }
            }
            BaseFamily::BivariateGaussian => {
                let zx = (x - self.mean[0]) / self.scale[0];
                let zy = (y - self.mean[1]) / self.scale[1];
                let r = self.rho0();
                let det = 1.0 - r * r;
                if det <= 0.0 {
                    return if zx == zy * r.signum() { self.p0_density(x) } else { 0.0 };
                }
                let q = (zx * zx - 2.0 * r * zx * zy + zy * zy) / det;
                (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt() * self.scale[0] * self.scale[1])
            }
            _ => f64::NAN,
        }
    }

    /// Density of a full NIG atom.
    pub fn nig_density(&self, atom: &NigAtom) -> f64 {
        let p = self.nig.expect("NIG hyperparameters");
        let rho = self.rho0();
        let zx = (atom.x - self.mean[0]) / (atom.var_x / p.lambda1).sqrt();
        let zy = (atom.y - self.mean[1]) / (atom.var_y / p.lambda2).sqrt();
        let det = 1.0 - rho * rho;
        let ln = ln_inv_gamma(atom.var_x, p.alpha1, p.beta1) + ln_inv_gamma(atom.var_y, p.alpha2, p.beta2)
            - 0.5 * (zx * zx - 2.0 * rho * zx * zy + zy * zy) / det
            - (2.0 * std::f64::consts::PI).ln()
            - 0.5 * det.ln()
            - 0.5 * (atom.var_x / p.lambda1).ln()
            - 0.5 * (atom.var_y / p.lambda2).ln();
        ln.exp()
    }

    /// Correlation between the two location coordinates of an atom.
    pub fn atom_correlation(&self) -> f64 {
        match self.family {
            BaseFamily::DiagonalDegenerate => 1.0,
            BaseFamily::NormalInvGammaPair => {
                // corr(x, y) = ρ₀ E[σ_w]E[σ_v] / √(E[σ_w²]E[σ_v²]) with independent scales.
                let p = self.nig.expect("NIG hyperparameters");
                let m1 = |a: f64, b: f64| b.sqrt() * (ln_gamma(a - 0.5) - ln_gamma(a)).exp();
                let m2 = |a: f64, b: f64| b / (a - 1.0);
                if p.alpha1 <= 1.0 || p.alpha2 <= 1.0 {
                    return f64::NAN;
                }
                self.rho0() * m1(p.alpha1, p.beta1) * m1(p.alpha2, p.beta2)
                    / (m2(p.alpha1, p.beta1) * m2(p.alpha2, p.beta2)).sqrt()
            }
            _ => self.rho0(),
        }
    }

    /// `P₀((lo, hi])`.
    pub fn p0_prob(&self, set: Interval) -> Result<f64> {
        if self.family == BaseFamily::NormalInvGammaPair {
            return Err(FurbiError::Unsupported(
                "interval probabilities need a Gaussian base measure".into(),
            ));
        }
        let f = |v: f64| norm_cdf((v - self.mean[0]) / self.scale[0]);
        Ok(f(set.hi) - f(set.lo))
    }

    /// `G₀(A × B)` for intervals on the first two coordinates.
    pub fn g0_prob(&self, a: Interval, b: Interval) -> Result<f64> {
        match self.family {
            BaseFamily::DiagonalDegenerate => self.p0_prob(a.intersect(&b)),
            BaseFamily::BivariateGaussian | BaseFamily::MultivariateGaussianCorr => {
                let r = self.rho0();
                let sx = |v: f64| (v - self.mean[0]) / self.scale[0];
                let sy = |v: f64| (v - self.mean[1]) / self.scale[1];
                let f = |x: f64, y: f64| bvn_cdf(sx(x), sy(y), r);
                Ok((f(a.hi, b.hi) - f(a.lo, b.hi) - f(a.hi, b.lo) + f(a.lo, b.lo)).max(0.0))
            }
            _ => Err(FurbiError::Unsupported(
                "rectangle probabilities need a bivariate Gaussian or diagonal base measure".into(),
            )),
        }
    }
}

/// Half-open interval `(lo, hi]`; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn below(hi: f64) -> Self {
        Self { lo: f64::NEG_INFINITY, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let lo = self.lo.max(other.lo);
        Self { lo, hi: self.hi.min(other.hi).max(lo) }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Mean and covariance of `v[free] | v[obs] = values` for `v ~ N(mean, cov)`.
pub fn gaussian_conditional(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    free: &[usize],
    obs: &[usize],
    values: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mu_f = DVector::from_iterator(free.len(), free.iter().map(|&i| mean[i]));
    let s_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| cov[(free[a], free[b])]);
    if obs.is_empty() {
        return Ok((mu_f, s_ff));
    }
    let s_oo = DMatrix::from_fn(obs.len(), obs.len(), |a, b| cov[(obs[a], obs[b])]);
    let s_fo = DMatrix::from_fn(free.len(), obs.len(), |a, b| cov[(free[a], obs[b])]);
    let diff = DVector::from_iterator(obs.len(), obs.iter().zip(values).map(|(&i, v)| v - mean[i]));
    let chol = Cholesky::new(s_oo).ok_or_else(|| {
        FurbiError::Domain("observed block of the covariance is singular".into())
    })?;
    let m = &mu_f + &s_fo * chol.solve(&diff);
    let c = &s_ff - &s_fo * chol.solve(&s_fo.transpose());
    Ok((m, symmetrize(c)))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = mean.len();
    if n == 0 {
        return Vec::new();
    }
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let l = lower_factor(cov);
    (mean + l * z).iter().copied().collect()
}

/// Cholesky factor, falling back to an eigen-decomposition square root for
/// positive semi-definite matrices.
pub fn lower_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(cov.clone()) {
        return ch.l();
    }
    let eig = cov.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters").sample(rng);
    1.0 / g
}

/// Log density of `IG(shape, scale)` at `v`.
pub fn ln_inv_gamma(v: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * v.ln() - scale / v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn coords(a: &Atom) -> (f64, f64) {
        match a {
            Atom::Point(v) => (v[0], v[1]),
            Atom::Nig(n) => (n.x, n.y),
        }
    }

    fn moments(g0: &BaseMeasure, n: usize) -> (f64, f64, f64, f64, f64) {
        let mut r = rng();
        let draws: Vec<(f64, f64)> = (0..n).map(|_| coords(&g0.sample_pair(&mut r))).collect();
        let nf = n as f64;
        let mx = draws.iter().map(|d| d.0).sum::<f64>() / nf;
        let my = draws.iter().map(|d| d.1).sum::<f64>() / nf;
        let vx = draws.iter().map(|d| (d.0 - mx).powi(2)).sum::<f64>() / nf;
        let vy = draws.iter().map(|d| (d.1 - my).powi(2)).sum::<f64>() / nf;
        let cxy = draws.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum::<f64>() / nf;
        (mx, my, vx, vy, cxy / (vx * vy).sqrt())
    }

    #[test]
    fn diagonal_draws_coincide() {
        let g0 = BaseMeasure::diagonal(0.0, 1.0).unwrap();
        let mut r = rng();
        for _ in 0..100 {
            let (x, y) = coords(&g0.sample_pair(&mut r));
            assert_eq!(x, y);
        }
    }

    #[test]
    fn bivariate_empirical_correlation() {
        let n = 100_000;
        for rho in [0.0, -0.9] {
            let g0 = BaseMeasure::bivariate(0.0, 1.0, rho).unwrap();
            let (mx, my, vx, vy, c) = moments(&g0, n);
            let se = (1.0 - rho * rho) / (n as f64).sqrt();
            assert!((c - rho).abs() < 3.0 * se.max(1.0 / (n as f64).sqrt()), "rho={rho}: {c}");
            let se_m = 1.0 / (n as f64).sqrt();
            assert!((mx - my).abs() < 4.0 * se_m * 2f64.sqrt());
            assert!((vx - vy).abs() < 4.0 * (2.0 / n as f64).sqrt() * 2f64.sqrt());
        }
    }

    #[test]
    fn nig_marginals_agree_and_correlation_matches() {
        let g0 = BaseMeasure::nig_pair(0.0, 0.6, NigParams::symmetric(1.0, 4.0, 3.0)).unwrap();
        let n = 200_000;
        let (mx, my, vx, vy, c) = moments(&g0, n);
        // Var = β / ((α - 1) λ) = 1.
        assert!((vx - 1.0).abs() < 0.05 && (vy - 1.0).abs() < 0.05, "{vx} {vy}");
        assert!(mx.abs() < 0.02 && my.abs() < 0.02);
        assert!((c - g0.atom_correlation()).abs() < 0.02, "{c} vs {}", g0.atom_correlation());
    }

    #[test]
    fn conditional_examples() {
        let diag = BaseMeasure::diagonal(0.0, 1.0).unwrap();
        let law = diag.conditional(&[(0, 2.7)]).unwrap();
        assert_eq!(law.kind, ConditionalKind::Dirac);
        assert_eq!(law.sample(&mut rng()), vec![2.7]);

        for rho in [-0.7, 0.0, 0.9] {
            let g0 = BaseMeasure::bivariate(0.0, 1.0, rho).unwrap();
            let law = g0.conditional(&[(0, 0.0)]).unwrap();
            assert!(law.mean[0].abs() < 1e-15);
            assert!((law.cov[(0, 0)] - (1.0 - rho * rho)).abs() < 1e-14);
        }
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.5).unwrap();
        let law = g0.conditional(&[(0, 2.0)]).unwrap();
        assert!((law.mean[0] - 1.0).abs() < 1e-14);
        assert!((law.cov[(0, 0)] - 0.75).abs() < 1e-14);
        assert!(g0.conditional(&[(0, 1.0), (1, 1.0)]).is_err());
    }

    #[test]
    fn conditional_then_marginal_reproduces_joint() {
        let g0 = BaseMeasure::bivariate(1.0, 2.0, -0.6).unwrap();
        let mut r = rng();
        let n = 100_000;
        let mut cxy = 0.0;
        for _ in 0..n {
            let x = 1.0 + 2.0 * r.sample::<f64, _>(StandardNormal);
            let y = g0.conditional(&[(0, x)]).unwrap().sample(&mut r)[0];
            cxy += (x - 1.0) * (y - 1.0);
        }
        let corr = cxy / n as f64 / 4.0;
        assert!((corr + 0.6).abs() < 3.0 * 0.64 / (n as f64).sqrt() * 2.0);
    }

    #[test]
    fn density_examples() {
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.0).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        assert!((g0.g0_density(0.0, 0.0) - 1.0 / tau).abs() < 1e-15);
        assert!((g0.p0_density(0.0) - 1.0 / tau.sqrt()).abs() < 1e-15);

        let g = BaseMeasure::bivariate(0.0, 1.0, 0.8).unwrap();
        let q: f64 = (1.0 - 1.6 + 1.0) / 0.36;
        let oracle = (-0.5 * q).exp() / (tau * 0.6);
        assert!((g.g0_density(1.0, 1.0) - oracle).abs() < 1e-15);

        let diag = BaseMeasure::diagonal(0.0, 1.0).unwrap();
        assert_eq!(diag.g0_density(0.3, 0.4), 0.0);
    }

    #[test]
    fn density_integrates_to_one_on_grid() {
        let g = BaseMeasure::bivariate(0.0, 1.0, 0.7).unwrap();
        let h = 0.02;
        let mut acc = 0.0;
        let mut x = -8.0;
        while x < 8.0 {
            let mut y = -8.0;
            while y < 8.0 {
                acc += g.g0_density(x + h / 2.0, y + h / 2.0);
                y += h;
            }
            x += h;
        }
        assert!((acc * h * h - 1.0).abs() < 1e-4);
    }

    #[test]
    fn corr_matrix_examples() {
        let id = build_corr_matrix(&[0.0, 0.0, 0.0], 3).unwrap().unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));
        assert!(build_corr_matrix(&[0.9, 0.9, -0.9], 3).unwrap().is_none());
        let m = build_corr_matrix(&[0.5, 0.5, 0.5], 3).unwrap().unwrap();
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[2] - 2.0).abs() < 1e-12);
        assert!(build_corr_matrix(&[0.5], 3).is_err());
        assert!(build_corr_matrix(&[1.5], 2).is_err());
    }

    #[test]
    fn missing_data_conditional_on_subset() {
        let g0 = BaseMeasure::missing_data(vec![0.0; 3], vec![1.0; 3], &[0.5, 0.2, -0.3]).unwrap();
        let law = g0.conditional(&[(0, 1.0)]).unwrap();
        assert_eq!(law.kind, ConditionalKind::GaussianGivenSubset);
        assert_eq!(law.coords, vec![1, 2]);
        assert!((law.mean[0] - 0.5).abs() < 1e-14 && (law.mean[1] - 0.2).abs() < 1e-14);
        assert!((law.cov[(0, 1)] - (-0.3 - 0.1)).abs() < 1e-14);
    }

    #[test]
    fn rectangle_probabilities() {
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.0).unwrap();
        let a = Interval::new(-1.0, 0.5);
        let b = Interval::below(0.2);
        let direct = g0.p0_prob(a).unwrap() * g0.p0_prob(b).unwrap();
        assert!((g0.g0_prob(a, b).unwrap() - direct).abs() < 1e-12);
        let diag = BaseMeasure::diagonal(0.0, 1.0).unwrap();
        let both = diag.p0_prob(Interval::new(-1.0, 0.2)).unwrap();
        assert!((diag.g0_prob(a, b).unwrap() - both).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(BaseMeasure::bivariate(0.0, -1.0, 0.0).is_err());
        assert!(BaseMeasure::bivariate(0.0, 1.0, 1.2).is_err());
        assert!(BaseMeasure::multivariate(3, 0.0, 1.0, &[0.9, 0.9, -0.9]).is_err());
        assert!(BaseMeasure::nig_pair(0.0, 1.0, NigParams::symmetric(1.0, 2.0, 4.0)).is_err());
    }
}
