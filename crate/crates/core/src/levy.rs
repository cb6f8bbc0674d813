//! Joint Lévy intensities on the positive quadrant and the quantities derived
//! from them: marginal and joint Laplace exponents, tilted jump moments
//! (τ-integrals), their derivatives and tail masses.
//!
//! Every family has total mass `θ`. The underlying one-dimensional jump
//! intensity is the gamma intensity `s⁻¹ e⁻ˢ` or the inverse-Gaussian intensity
//! `(2π)^{-1/2} s^{-3/2} e^{-s/2}`. Exponents include `θ`; τ-integrals do not.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FurbiError, Result};
use crate::special::{ln_gamma, norm_cdf};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevyFamily {
    /// Gamma jumps shared by all groups.
    GammaEqualJumps,
    /// Inverse-Gaussian jumps shared by all groups.
    InvGaussEqualJumps,
    /// Group-specific gamma jumps with weight `z` plus shared gamma jumps with
    /// weight `1 - z`.
    AdditiveGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySpec {
    pub family: LevyFamily,
    pub theta: f64,
    /// Only meaningful for [`LevyFamily::AdditiveGamma`].
    #[serde(default)]
    pub z: f64,
}

impl LevySpec {
    pub fn new(family: LevyFamily, theta: f64, z: f64) -> Result<Self> {
        let spec = Self { family, theta, z };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma(theta: f64) -> Result<Self> {
        Self::new(LevyFamily::GammaEqualJumps, theta, 0.0)
    }

    pub fn inv_gauss(theta: f64) -> Result<Self> {
        Self::new(LevyFamily::InvGaussEqualJumps, theta, 0.0)
    }

    pub fn additive(theta: f64, z: f64) -> Result<Self> {
        Self::new(LevyFamily::AdditiveGamma, theta, z)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(invalid("theta", format!("must be positive and finite, got {}", self.theta)));
        }
        if self.family == LevyFamily::AdditiveGamma && !(0.0..=1.0).contains(&self.z) {
            return Err(invalid("z", format!("must lie in [0, 1], got {}", self.z)));
        }
        Ok(())
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self
    }

    /// Weight of the shared component: 1 for equal-jumps families.
    pub fn common_weight(&self) -> f64 {
        match self.family {
            LevyFamily::AdditiveGamma => 1.0 - self.z,
            _ => 1.0,
        }
    }

    /// Marginal Laplace exponent `ψ(u)`.
    pub fn psi(&self, u: f64) -> Result<f64> {
        check_nonneg(u)?;
        Ok(self.psi_unchecked(u))
    }

    fn psi_unchecked(&self, u: f64) -> f64 {
        match self.family {
            LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => self.theta * u.ln_1p(),
            LevyFamily::InvGaussEqualJumps => self.theta * ig_root_minus_one(u),
        }
    }

    /// Joint Laplace exponent `ψ_b(u1, u2)` of a two-group vector.
    pub fn psi_b(&self, u1: f64, u2: f64) -> Result<f64> {
        self.psi_b_vec(&[u1, u2])
    }

    /// Joint Laplace exponent for any number of groups.
    pub fn psi_b_vec(&self, u: &[f64]) -> Result<f64> {
        for &ui in u {
            check_nonneg(ui)?;
        }
        Ok(self.psi_b_unchecked(u))
    }

    pub(crate) fn psi_b_unchecked(&self, u: &[f64]) -> f64 {
        let total: f64 = u.iter().sum();
        match self.family {
            LevyFamily::GammaEqualJumps | LevyFamily::InvGaussEqualJumps => self.psi_unchecked(total),
            LevyFamily::AdditiveGamma => {
                let own: f64 = u.iter().map(|x| x.ln_1p()).sum();
                self.theta * (self.z * own + (1.0 - self.z) * total.ln_1p())
            }
        }
    }

    /// `τ_{n,m}(u1, u2) = ∫ e^{-u1 s1 - u2 s2} s1ⁿ s2ᵐ ρ(ds1, ds2)`.
    pub fn tau(&self, n: usize, m: usize, u1: f64, u2: f64) -> Result<f64> {
        check_nonneg(u1)?;
        check_nonneg(u2)?;
        if n + m == 0 {
            return Err(FurbiError::Domain(
                "tau with n = m = 0 diverges for an infinite-activity intensity".into(),
            ));
        }
        Ok(self.ln_tau_vec(&[n, m], &[u1, u2]).exp())
    }

    /// `log τ` for a vector of per-group counts; `-∞` when the integral vanishes
    /// (for instance counts in two groups with no shared jumps).
    ///
    /// Counts must not all be zero. Arguments are not validated.
    pub fn ln_tau_vec(&self, counts: &[usize], u: &[f64]) -> f64 {
        let total_n: usize = counts.iter().sum();
        debug_assert!(total_n > 0, "tau needs at least one positive count");
        let total_u: f64 = u.iter().sum();
        match self.family {
            LevyFamily::GammaEqualJumps => ln_tau_gamma(total_n, total_u),
            LevyFamily::InvGaussEqualJumps => ln_tau_ig(total_n, total_u),
            LevyFamily::AdditiveGamma => {
                let common = if self.z < 1.0 {
                    (1.0 - self.z).ln() + ln_tau_gamma(total_n, total_u)
                } else {
                    f64::NEG_INFINITY
                };
                let mut occupied = counts.iter().enumerate().filter(|(_, &c)| c > 0);
                let single = match (occupied.next(), occupied.next()) {
                    (Some((g, &c)), None) if self.z > 0.0 => self.z.ln() + ln_tau_gamma(c, u[g]),
                    _ => f64::NEG_INFINITY,
                };
                crate::special::log_add_exp(common, single)
            }
        }
    }

    /// Second derivative of the marginal exponent.
    pub fn psi_second(&self, u: f64) -> f64 {
        match self.family {
            LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => {
                -self.theta / ((1.0 + u) * (1.0 + u))
            }
            LevyFamily::InvGaussEqualJumps => -self.theta * (1.0 + 2.0 * u).powf(-1.5),
        }
    }

    /// Mixed partial derivative `∂²ψ_b / ∂u1 ∂u2`.
    pub fn psi_b_mixed(&self, u1: f64, u2: f64) -> f64 {
        let s = u1 + u2;
        match self.family {
            LevyFamily::GammaEqualJumps => -self.theta / ((1.0 + s) * (1.0 + s)),
            LevyFamily::AdditiveGamma => -(1.0 - self.z) * self.theta / ((1.0 + s) * (1.0 + s)),
            LevyFamily::InvGaussEqualJumps => -self.theta * (1.0 + 2.0 * s).powf(-1.5),
        }
    }

    /// Density of the one-dimensional jump intensity (without `θ`).
    pub fn jump_density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self.family {
            LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => (-s).exp() / s,
            LevyFamily::InvGaussEqualJumps => (-0.5 * s).exp() / ((2.0 * PI).sqrt() * s.powf(1.5)),
        }
    }

    /// `∫_s^∞ e^{-tilt·t} ν(dt)` for the one-dimensional jump intensity `ν`
    /// (without `θ`).
    pub fn tail_mass(&self, tilt: f64, s: f64) -> f64 {
        match self.family {
            LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => exp_integral_e1((1.0 + tilt) * s),
            LevyFamily::InvGaussEqualJumps => {
                let c = tilt + 0.5;
                c.sqrt() * upper_gamma_minus_half(c * s) / (2.0 * PI).sqrt()
            }
        }
    }

    /// Shape and rate of the gamma law of a jump that carries `count` observations
    /// under tilt `u` (total tilt over the groups the jump is shared by).
    pub fn fixed_jump_law(&self, count: usize, tilt: f64) -> (f64, f64) {
        match self.family {
            LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => (count as f64, 1.0 + tilt),
            LevyFamily::InvGaussEqualJumps => (count as f64 - 0.5, tilt + 0.5),
        }
    }
}

fn check_nonneg(u: f64) -> Result<()> {
    if u >= 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(FurbiError::Domain(format!("argument must be a finite nonnegative number, got {u}")))
    }
}

/// `√(1 + 2u) - 1` without cancellation near zero.
fn ig_root_minus_one(u: f64) -> f64 {
    2.0 * u / ((1.0 + 2.0 * u).sqrt() + 1.0)
}

fn ln_tau_gamma(n: usize, u: f64) -> f64 {
    let n = n as f64;
    ln_gamma(n) - n * u.ln_1p()
}

fn ln_tau_ig(j: usize, u: f64) -> f64 {
    let j = j as f64;
    (j - 1.0) * LN_2 + ln_gamma(j - 0.5) - 0.5 * PI.ln() - (j - 0.5) * (2.0 * u).ln_1p()
}

/// Exponential integral `E₁(x)`; `+∞` at zero.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    statrs::function::exponential::integral(x, 1).unwrap_or(0.0)
}

/// `Γ(-1/2, x) = 2 e^{-x} / √x - 2√π erfc(√x)`.
fn upper_gamma_minus_half(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x > 30.0 {
        // Asymptotic series avoids the cancellation between the two terms.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            term *= -(k as f64 + 0.5) / x;
            sum += term;
        }
        return (-x).exp() * x.powf(-1.5) * sum;
    }
    let r = x.sqrt();
    2.0 * (-x).exp() / r - 4.0 * PI.sqrt() * norm_cdf(-r * std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_half_line, QuadratureConfig};

    fn cfg() -> QuadratureConfig {
        QuadratureConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
            ..QuadratureConfig::default()
        }
    }

    fn all_specs() -> Vec<LevySpec> {
        vec![
            LevySpec::gamma(1.3).unwrap(),
            LevySpec::inv_gauss(0.7).unwrap(),
            LevySpec::additive(2.0, 0.35).unwrap(),
        ]
    }

    /// `θ ∫ (1 - e^{-u s}) ν(s) ds` by quadrature.
    fn psi_quad(spec: &LevySpec, u: f64) -> f64 {
        let v = integrate_half_line(|s| -(-u * s).exp_m1() * spec.jump_density(s), &cfg()).unwrap();
        spec.theta * v.value
    }

    #[test]
    fn psi_examples() {
        let g1 = LevySpec::gamma(1.0).unwrap();
        assert_eq!(g1.psi(0.0).unwrap(), 0.0);
        let g2 = LevySpec::gamma(2.0).unwrap();
        assert!((g2.psi(std::f64::consts::E - 1.0).unwrap() - 2.0).abs() < 1e-14);
        let ig = LevySpec::inv_gauss(1.0).unwrap();
        assert!((ig.psi(4.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(g1.psi(-0.1).is_err());
    }

    #[test]
    fn psi_matches_quadrature() {
        for spec in all_specs() {
            for u in [0.01, 0.5, 3.0, 40.0] {
                let q = psi_quad(&spec, u);
                let c = spec.psi(u).unwrap();
                assert!((q - c).abs() < 1e-8 * c.max(1.0), "{spec:?} u={u}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn psi_b_examples() {
        for spec in all_specs() {
            assert_eq!(spec.psi_b(0.0, 0.0).unwrap(), 0.0);
        }
        let g = LevySpec::gamma(1.0).unwrap();
        assert!((g.psi_b(1.0, 1.0).unwrap() - 3f64.ln()).abs() < 1e-14);
        let a = LevySpec::additive(1.0, 1.0).unwrap();
        assert!((a.psi_b(1.0, 1.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!(g.psi_b(1.0, -1.0).is_err());
    }

    #[test]
    fn psi_b_matches_quadrature_of_components() {
        // Shared jumps act on s1 = s2 = s; group-specific jumps on one axis only.
        for spec in all_specs() {
            for (u1, u2) in [(0.3, 1.7), (2.0, 0.0), (5.0, 5.0)] {
                let shared = psi_quad(&spec, u1 + u2);
                let q = match spec.family {
                    LevyFamily::AdditiveGamma => {
                        spec.z * (psi_quad(&spec, u1) + psi_quad(&spec, u2))
                            + (1.0 - spec.z) * shared
                    }
                    _ => shared,
                };
                let c = spec.psi_b(u1, u2).unwrap();
                assert!((q - c).abs() < 1e-8 * c.max(1.0), "{spec:?}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn tau_examples() {
        let g = LevySpec::gamma(1.0).unwrap();
        assert!((g.tau(1, 0, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        let ig = LevySpec::inv_gauss(1.0).unwrap();
        assert!((ig.tau(1, 0, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-13);
        let a = LevySpec::additive(1.0, 1.0).unwrap();
        assert_eq!(a.tau(1, 1, 0.4, 0.2).unwrap(), 0.0);
        assert!(g.tau(0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn tau_matches_quadrature() {
        for spec in all_specs() {
            for (n, m) in [(1, 0), (0, 2), (1, 1), (3, 2), (2, 4), (6, 0)] {
                for (u1, u2) in [(0.0, 0.0), (0.4, 1.1), (3.0, 0.2)] {
                    let moment = |tilt: f64, k: usize| {
                        integrate_half_line(
                            |s| (-tilt * s).exp() * s.powi(k as i32) * spec.jump_density(s),
                            &cfg(),
                        )
                        .unwrap()
                        .value
                    };
                    let shared = moment(u1 + u2, n + m);
                    let q = match spec.family {
                        LevyFamily::AdditiveGamma => {
                            let own = match (n, m) {
                                (_, 0) => moment(u1, n),
                                (0, _) => moment(u2, m),
                                _ => 0.0,
                            };
                            spec.z * own + (1.0 - spec.z) * shared
                        }
                        _ => shared,
                    };
                    let c = spec.tau(n, m, u1, u2).unwrap();
                    assert!((q - c).abs() < 1e-6 * c, "{spec:?} n={n} m={m}: {q} vs {c}");
                }
            }
        }
    }

    #[test]
    fn mixed_partials_match_finite_differences() {
        let h = 1e-4;
        for spec in all_specs() {
            for (u1, u2) in [(0.2, 0.5), (1.0, 3.0)] {
                let f = |a: f64, b: f64| spec.psi_b(a, b).unwrap();
                let fd = (f(u1 + h, u2 + h) - f(u1 + h, u2 - h) - f(u1 - h, u2 + h)
                    + f(u1 - h, u2 - h))
                    / (4.0 * h * h);
                let c = spec.psi_b_mixed(u1, u2);
                assert!((fd - c).abs() < 1e-4 * c.abs().max(1e-3), "{spec:?}: {fd} vs {c}");

                let g = |a: f64| spec.psi(a).unwrap();
                let fd2 = (g(u1 + h) - 2.0 * g(u1) + g(u1 - h)) / (h * h);
                assert!((fd2 - spec.psi_second(u1)).abs() < 1e-4 * fd2.abs());
            }
        }
    }

    #[test]
    fn tail_mass_matches_quadrature() {
        for spec in all_specs() {
            for tilt in [0.0, 0.8] {
                for s in [1e-3, 0.3, 2.0, 12.0, 40.0] {
                    let q = integrate(
                        |t| (-tilt * t).exp() * spec.jump_density(t),
                        s,
                        s + 200.0,
                        &QuadratureConfig { abs_tol: 1e-300, ..cfg() },
                    )
                    .unwrap()
                    .value;
                    let c = spec.tail_mass(tilt, s);
                    assert!((q - c).abs() < 1e-7 * c, "{spec:?} tilt={tilt} s={s}: {q} vs {c}");
                }
            }
        }
    }

    #[test]
    fn multi_group_exponent_reduces_to_pair() {
        for spec in all_specs() {
            let a = spec.psi_b_vec(&[0.4, 0.0, 1.2]).unwrap();
            let b = spec.psi_b(0.4, 1.2).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(LevySpec::gamma(0.0).is_err());
        assert!(LevySpec::gamma(f64::NAN).is_err());
        assert!(LevySpec::additive(1.0, 1.5).is_err());
    }
}
