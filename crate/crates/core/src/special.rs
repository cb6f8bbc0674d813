//! Special functions: log-gamma, the normal distribution, the bivariate normal
//! CDF and generalized hypergeometric series at unit argument.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{FurbiError, Result};
use crate::quadrature::{integrate, QuadratureConfig};

pub use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_406;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * statrs::function::erf::erfc(-x * FRAC_1_SQRT_2)
}

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Log density of a location-scale Student t with `df` degrees of freedom.
pub fn ln_student_t(x: f64, df: f64, loc: f64, scale2: f64) -> f64 {
    let z2 = (x - loc) * (x - loc) / scale2;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * PI * scale2).ln()
        - 0.5 * (df + 1.0) * (z2 / df).ln_1p()
}

/// `log(Σ exp(v))` over a slice, `-∞` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

const HYP_REL_TOL: f64 = 1e-12;
const HYP_MAX_TERMS: usize = 1_000_000;

/// `₃F₂(a1, a2, a3; b1, b2; 1)`.
///
/// The series converges only when the parametric excess
/// `s = b1 + b2 - a1 - a2 - a3` is positive; terms then decay like `k^{-1-s}`.
/// When `s` is small and the parameters allow it, Thomae's relation is applied
/// once to trade the excess for the largest numerator parameter. Summation
/// adds an asymptotic estimate of the remainder and stops once that estimate,
/// or its own error, drops below `1e-12` of the partial sum. At most `10⁶`
/// terms are summed.
pub fn hyp3f2_unit(a1: f64, a2: f64, a3: f64, b1: f64, b2: f64) -> Result<f64> {
    let params = [a1, a2, a3, b1, b2];
    if params.iter().any(|p| !p.is_finite()) {
        return Err(FurbiError::Domain("non-finite hypergeometric parameter".into()));
    }
    if [b1, b2].iter().any(|&b| b <= 0.0 && b.fract() == 0.0) {
        return Err(FurbiError::Domain(
            "denominator parameter is a non-positive integer".into(),
        ));
    }
    let excess = b1 + b2 - a1 - a2 - a3;
    if terminates(&[a1, a2, a3]) {
        return sum_series(a1, a2, a3, b1, b2, excess.max(1.0));
    }
    if excess <= 0.0 {
        return Err(FurbiError::Domain(format!(
            "3F2 at unit argument diverges: parametric excess {excess} <= 0"
        )));
    }

    // Thomae: 3F2(a,b,c;d,e;1) = Γ(d)Γ(e)Γ(s) / (Γ(a)Γ(s+b)Γ(s+c)) · 3F2(d-a, e-a, s; s+b, s+c; 1)
    let mut uppers = [a1, a2, a3];
    uppers.sort_by(|x, y| y.total_cmp(x));
    let (a, b, c) = (uppers[0], uppers[1], uppers[2]);
    let thomae_ok = a > excess && a > 0.0 && excess + b > 0.0 && excess + c > 0.0;
    if excess < 2.0 && thomae_ok {
        let prefactor = (ln_gamma(b1) + ln_gamma(b2) + ln_gamma(excess)
            - ln_gamma(a)
            - ln_gamma(excess + b)
            - ln_gamma(excess + c))
        .exp();
        let inner = sum_series(b1 - a, b2 - a, excess, excess + b, excess + c, a)?;
        return Ok(prefactor * inner);
    }
    sum_series(a1, a2, a3, b1, b2, excess)
}

fn terminates(uppers: &[f64]) -> bool {
    uppers.iter().any(|&a| a <= 0.0 && a.fract() == 0.0)
}

fn sum_series(a1: f64, a2: f64, a3: f64, b1: f64, b2: f64, excess: f64) -> Result<f64> {
    let scale = 1.0 + [a1, a2, a3, b1, b2].iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 0..HYP_MAX_TERMS {
        let kf = k as f64;
        let num = (a1 + kf) * (a2 + kf) * (a3 + kf);
        if num == 0.0 {
            return Ok(sum);
        }
        term *= num / ((b1 + kf) * (b2 + kf) * (kf + 1.0));
        sum += term;
        // Terms behave like C n^{-1-s}; the tail past n is then close to
        // t_n n^{1+s} (n + 1/2)^{-s} / s, with relative error O(scale / n).
        let n = kf + 1.0;
        // Before n passes the parameters the terms are not yet in that regime
        // and the estimate can be far too small.
        let tail = term * n * (n / (n + 0.5)).powf(excess) / excess;
        if n > 2.0 * scale && tail.abs() < HYP_REL_TOL * sum.abs() {
            return Ok(sum + tail);
        }
        if n > 8.0 * scale && tail.abs() * scale / n < 0.1 * HYP_REL_TOL * sum.abs() {
            return Ok(sum + tail);
        }
    }
    Err(FurbiError::SeriesNonConvergence {
        partial: sum,
        terms: HYP_MAX_TERMS,
    })
}

/// Standard bivariate normal CDF `P(X ≤ x, Y ≤ y)` with correlation `rho`.
///
/// Uses `Φ₂(x, y; ρ) = Φ(x)Φ(y) + (2π)⁻¹ ∫₀^{asin ρ} exp(-(x² - 2xy sin φ + y²) / (2 cos² φ)) dφ`,
/// whose integrand is smooth on the whole range. `|rho| ≥ 1` falls back to the
/// degenerate limits.
pub fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    if x.is_nan() || y.is_nan() || rho.is_nan() {
        return f64::NAN;
    }
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return norm_cdf(y);
    }
    if y == f64::INFINITY {
        return norm_cdf(x);
    }
    if rho >= 1.0 {
        return norm_cdf(x.min(y));
    }
    if rho <= -1.0 {
        return (norm_cdf(x) - norm_cdf(-y)).max(0.0);
    }
    let base = norm_cdf(x) * norm_cdf(y);
    if rho == 0.0 {
        return base;
    }
    let upper = rho.asin();
    let cfg = QuadratureConfig {
        rel_tol: 1e-13,
        abs_tol: 1e-15,
        max_subdivisions: 500,
        ..QuadratureConfig::default()
    };
    let integrand = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            return 0.0;
        }
        (-(x * x - 2.0 * x * y * s + y * y) / (2.0 * c2)).exp()
    };
    let value = match integrate(integrand, 0.0, upper, &cfg) {
        Ok(est) => est.value,
        Err(FurbiError::QuadratureNonConvergence { estimate, .. }) => estimate,
        Err(_) => f64::NAN,
    };
    (base + value / (2.0 * PI)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force partial sum, used only as an independent oracle.
    fn brute_3f2(a1: f64, a2: f64, a3: f64, b1: f64, b2: f64, terms: usize) -> f64 {
        let mut t = 1.0;
        let mut s = 1.0;
        for k in 0..terms {
            let kf = k as f64;
            t *= (a1 + kf) * (a2 + kf) * (a3 + kf) / ((b1 + kf) * (b2 + kf) * (kf + 1.0));
            s += t;
        }
        s
    }

    fn gauss_2f1(a: f64, b: f64, c: f64) -> f64 {
        (ln_gamma(c) + ln_gamma(c - a - b) - ln_gamma(c - a) - ln_gamma(c - b)).exp()
    }

    #[test]
    fn reduces_to_gauss_summation() {
        for (a, b, c, d) in [(3.0, 1.0, 1.0, 3.0), (0.5, 1.0, 1.0, 4.0), (1.7, 0.3, 1.2, 2.9), (6.0, 2.0, 0.5, 3.1)] {
            let v = hyp3f2_unit(a, b, c, a, d).unwrap();
            let oracle = gauss_2f1(b, c, d);
            assert!((v - oracle).abs() < 1e-10 * oracle, "a={a}: {v} vs {oracle}");
        }
    }

    #[test]
    fn matches_brute_force_partial_sums() {
        // Excess 3: the remainder after 10⁷ terms is below 1e-21.
        let oracle = brute_3f2(1.0, 1.0, 1.0, 3.0, 3.0, 10_000_000);
        let v = hyp3f2_unit(1.0, 1.0, 1.0, 3.0, 3.0).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        assert!((v - 1.159_472_534_785_81).abs() < 1e-12);
    }

    #[test]
    fn small_excess_uses_thomae() {
        // θ = 0.5, z = 0.25 pattern; excess 0.625.
        let t: f64 = 0.5;
        let z: f64 = 0.25;
        let v = hyp3f2_unit(t - t * z + 2.0, 1.0, 1.0, t + 2.0, t + 2.0).unwrap();
        // Reference value from an arbitrary-precision evaluation.
        assert!((v - 2.591_962_186_618_59).abs() < 1e-10, "{v}");
    }

    #[test]
    fn divergent_parameters_rejected() {
        assert!(matches!(
            hyp3f2_unit(2.0, 2.0, 2.0, 3.0, 3.0),
            Err(FurbiError::Domain(_))
        ));
    }

    #[test]
    fn terminating_series_is_polynomial() {
        // 3F2(-2, 1, 1; 2, 2; 1) = 1 - 2/4 + 1/18 ... computed term by term.
        let v = hyp3f2_unit(-2.0, 1.0, 1.0, 2.0, 2.0).unwrap();
        let expected = 1.0 + (-2.0 / 4.0) + (-2.0 * -1.0 * 2.0 * 2.0) / (2.0 * 3.0 * 2.0 * 3.0 * 2.0);
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn bvn_independence_and_orthants() {
        assert!((bvn_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        for rho in [-0.99f64, -0.7, -0.3, 0.2, 0.5, 0.95, 0.999] {
            let oracle = 0.25 + rho.asin() / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, rho) - oracle).abs() < 1e-12, "rho={rho}");
        }
        assert!((bvn_cdf(8.0, 8.0, 0.5) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bvn_degenerate_limits() {
        assert!((bvn_cdf(0.3, -0.2, 1.0) - norm_cdf(-0.2)).abs() < 1e-15);
        assert!((bvn_cdf(0.3, 0.2, -1.0) - (norm_cdf(0.3) - norm_cdf(-0.2))).abs() < 1e-15);
        assert!((bvn_cdf(0.3, 0.2, 0.999_999) - norm_cdf(0.2)).abs() < 1e-3);
    }

    #[test]
    fn bvn_matches_2d_riemann_oracle() {
        // Midpoint rule on a fine grid over [-9, x] × [-9, y].
        let (x, y, rho) = (0.7f64, -0.4f64, 0.6f64);
        let n = 3000;
        let hx = (x + 9.0) / n as f64;
        let hy = (y + 9.0) / n as f64;
        let det = 1.0 - rho * rho;
        let norm = 1.0 / (2.0 * PI * det.sqrt());
        let mut acc = 0.0;
        for i in 0..n {
            let a = -9.0 + (i as f64 + 0.5) * hx;
            for j in 0..n {
                let b = -9.0 + (j as f64 + 0.5) * hy;
                acc += (-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * det)).exp();
            }
        }
        let oracle = acc * norm * hx * hy;
        assert!((bvn_cdf(x, y, rho) - oracle).abs() < 1e-6);
    }

    #[test]
    fn bvn_marginal_consistency() {
        for (x, rho) in [(0.4, 0.3), (-1.2, -0.8), (2.0, 0.9)] {
            assert!((bvn_cdf(x, 8.0, rho) - norm_cdf(x)).abs() < 1e-10);
            // P(X ≤ x) = P(X ≤ x, Y ≤ y) + P(X ≤ x, Y > y)
            let y = 0.25;
            let upper = norm_cdf(x) - bvn_cdf(x, y, rho);
            let reflected = bvn_cdf(x, -y, -rho);
            assert!((upper - reflected).abs() < 1e-10);
        }
    }

    #[test]
    fn student_t_integrates_to_one() {
        let cfg = QuadratureConfig::default();
        let est = integrate(|x| ln_student_t(x, 4.0, 0.3, 2.0).exp(), -200.0, 200.0, &cfg).unwrap();
        assert!((est.value - 1.0).abs() < 1e-4);
    }

    #[test]
    fn hyp3f2_with_large_excess_reduces_to_gauss() {
        // 3F2(c, 1, 1; c, c; 1) = 2F1(1, 1; c; 1) = (c - 1) / (c - 2).
        for c in [12.0, 102.0, 1002.0] {
            let v = hyp3f2_unit(c, 1.0, 1.0, c, c).unwrap();
            assert!((v - (c - 1.0) / (c - 2.0)).abs() < 1e-12, "c = {c}: {v}");
        }
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
    }
}
