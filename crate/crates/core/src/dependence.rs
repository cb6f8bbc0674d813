//! Tie and hyper-tie probabilities and the correlations they induce.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::base_measure::{Atom, BaseFamily, BaseMeasure, Interval};
use crate::error::{invalid, FurbiError, Result};
use crate::levy::{LevyFamily, LevySpec};
use crate::quadrature::{integrate_half_line, integrate_posneg_2d, QuadratureConfig};
use crate::special::hyp3f2_unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DependenceMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStderr {
    pub beta: f64,
    pub gamma: f64,
    pub corr_within: f64,
    pub corr_across: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub beta: f64,
    pub gamma: f64,
    pub rho0: f64,
    pub corr_within: f64,
    pub corr_across: f64,
    pub method: DependenceMethod,
    pub mc_stderr: Option<McStderr>,
    /// Frequency of equal values across the two samples (Monte Carlo only).
    pub cross_tie: Option<f64>,
}

/// Probability that two draws from the same random measure coincide.
pub fn beta_closed(spec: &LevySpec) -> Result<f64> {
    spec.validate()?;
    match spec.family {
        LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => Ok(1.0 / (1.0 + spec.theta)),
        LevyFamily::InvGaussEqualJumps => beta_numeric(spec, &QuadratureConfig::default()),
    }
}

/// `β = -∫ u ψ''(u) e^{-ψ(u)} du` by quadrature.
pub fn beta_numeric(spec: &LevySpec, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    let est = integrate_half_line(
        |u| -u * spec.psi_second(u) * (-spec.psi(u).unwrap_or(f64::INFINITY)).exp(),
        cfg,
    )?;
    Ok(est.value)
}

/// Probability that one draw from each random measure selects the same atom.
pub fn gamma_closed(spec: &LevySpec) -> Result<f64> {
    spec.validate()?;
    match spec.family {
        LevyFamily::GammaEqualJumps | LevyFamily::InvGaussEqualJumps => beta_closed(spec),
        LevyFamily::AdditiveGamma => {
            let (t, z) = (spec.theta, spec.z);
            if z == 1.0 {
                return Ok(0.0);
            }
            if z == 0.0 {
                return beta_closed(&LevySpec::gamma(t)?);
            }
            let f = hyp3f2_unit(t - t * z + 2.0, 1.0, 1.0, t + 2.0, t + 2.0)?;
            Ok((1.0 - z) * f * t / ((1.0 + t) * (1.0 + t)))
        }
    }
}

/// `γ = -∬ ∂²ψ_b/∂u₁∂u₂ · e^{-ψ_b}` by 2D quadrature.
pub fn gamma_numeric(spec: &LevySpec, cfg: &QuadratureConfig) -> Result<f64> {
    spec.validate()?;
    if spec.common_weight() == 0.0 {
        return Ok(0.0);
    }
    let est = integrate_posneg_2d(
        |u1, u2| -spec.psi_b_mixed(u1, u2) * (-spec.psi_b_unchecked(&[u1, u2])).exp(),
        cfg,
    )?;
    Ok(est.value)
}

/// Correlations between two observations from the same sample and from
/// different samples.
pub fn corr_observables(spec: &LevySpec, g0: &BaseMeasure) -> Result<(f64, f64)> {
    let beta = beta_closed(spec)?;
    let gamma = gamma_closed(spec)?;
    let rho = g0.atom_correlation();
    if !rho.is_finite() {
        return Err(FurbiError::Unsupported(
            "atom locations lack finite second moments".into(),
        ));
    }
    Ok((beta, gamma * rho))
}

/// Correlation between `p̃₁(A)` and `p̃₂(B)`.
pub fn corr_measures(spec: &LevySpec, g0: &BaseMeasure, a: Interval, b: Interval) -> Result<f64> {
    let pa = g0.p0_prob(a)?;
    let pb = g0.p0_prob(b)?;
    let degenerate = |p: f64| !(p > 0.0 && p < 1.0);
    if degenerate(pa) || degenerate(pb) {
        return Err(FurbiError::Domain(
            "sets must have marginal probability strictly between 0 and 1".into(),
        ));
    }
    let beta = beta_closed(spec)?;
    let gamma = gamma_closed(spec)?;
    let joint = g0.g0_prob(a, b)?;
    Ok(gamma / beta * (joint - pa * pb) / (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt())
}

/// Tie and hyper-tie probabilities of a hierarchical Dirichlet process with
/// concentration `theta` and base concentration `theta0`.
pub fn hdp_dependence(theta: f64, theta0: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(invalid("theta", "must be positive"));
    }
    if !(theta0 > 0.0) {
        return Err(invalid("theta0", "must be positive"));
    }
    let beta = 1.0 - theta * theta0 / ((1.0 + theta) * (1.0 + theta0));
    Ok((beta, 1.0 / (1.0 + theta0)))
}

/// Closed-form report.
pub fn dependence_report(spec: &LevySpec, g0: &BaseMeasure) -> Result<DependenceReport> {
    let (within, across) = corr_observables(spec, g0)?;
    let method = match spec.family {
        LevyFamily::InvGaussEqualJumps => DependenceMethod::Quadrature,
        _ => DependenceMethod::ClosedForm,
    };
    Ok(DependenceReport {
        beta: beta_closed(spec)?,
        gamma: gamma_closed(spec)?,
        rho0: g0.rho0(),
        corr_within: within,
        corr_across: across,
        method,
        mc_stderr: None,
        cross_tie: None,
    })
}

/// Smallest stick-breaking truncation with expected residual mass below `1e-6`.
pub fn required_atoms(mass: f64) -> usize {
    if mass <= 0.0 {
        return 1;
    }
    ((1e-6f64).ln() / (mass / (1.0 + mass)).ln()).ceil().max(1.0) as usize
}

/// Truncated stick-breaking weights with the residual mass on the last atom.
fn stick_weights<R: Rng + ?Sized>(mass: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let beta = Beta::new(1.0, mass).expect("positive mass");
    let mut rest = 1.0;
    let mut w = Vec::with_capacity(n);
    for _ in 0..n.saturating_sub(1) {
        let v: f64 = beta.sample(rng);
        w.push(rest * v);
        rest *= 1.0 - v;
    }
    w.push(rest);
    w
}

fn pick<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random::<f64>() * w.iter().sum::<f64>();
    for (k, &wk) in w.iter().enumerate() {
        if u < wk {
            return k;
        }
        u -= wk;
    }
    w.len() - 1
}

/// Which atom a draw landed on: the component (0 shared, `g` group-specific)
/// and the index within it.
type Slot = (usize, usize);

/// Monte Carlo estimates of `β`, `γ` and the observable correlations from
/// `n_reps` independent prior replicates. Each replicate draws two
/// observations from the first measure and one from the second.
///
/// Gamma families only: the random measures are simulated by truncated
/// stick-breaking with `n_atoms` atoms per component.
pub fn mc_dependence_oracle<R: Rng + ?Sized>(
    spec: &LevySpec,
    g0: &BaseMeasure,
    n_atoms: usize,
    n_reps: usize,
    rng: &mut R,
) -> Result<DependenceReport> {
    spec.validate()?;
    g0.validate()?;
    if spec.family == LevyFamily::InvGaussEqualJumps {
        return Err(FurbiError::Unsupported(
            "the Monte Carlo oracle uses stick-breaking and needs gamma jumps".into(),
        ));
    }
    if n_reps < 2 {
        return Err(invalid("n_reps", "need at least two replicates"));
    }
    let (shared_mass, own_mass) = match spec.family {
        LevyFamily::AdditiveGamma => (spec.theta * (1.0 - spec.z), spec.theta * spec.z),
        _ => (spec.theta, 0.0),
    };
    let needed = required_atoms(shared_mass.max(own_mass));
    if n_atoms < needed {
        return Err(invalid(
            "n_atoms",
            format!("{n_atoms} atoms leave residual mass above 1e-6; need at least {needed}"),
        ));
    }

    let mut ties = 0usize;
    let mut hyper = 0usize;
    let mut cross_equal = 0usize;
    let mut xs = Vec::with_capacity(n_reps);
    let mut x2s = Vec::with_capacity(n_reps);
    let mut ys = Vec::with_capacity(n_reps);

    for _ in 0..n_reps {
        let shared_w = if shared_mass > 0.0 { stick_weights(shared_mass, n_atoms, rng) } else { Vec::new() };
        let own_w: Vec<Vec<f64>> = if own_mass > 0.0 {
            (0..2).map(|_| stick_weights(own_mass, n_atoms, rng)).collect()
        } else {
            Vec::new()
        };
        // Group g's total mass is T0 + T_g; a draw uses the shared component
        // with probability T0 / (T0 + T_g).
        let shared_prob: [f64; 2] = if own_mass == 0.0 {
            [1.0, 1.0]
        } else if shared_mass == 0.0 {
            [0.0, 0.0]
        } else {
            let t0: f64 = Gamma::new(shared_mass, 1.0).expect("positive").sample(rng);
            let own = Gamma::new(own_mass, 1.0).expect("positive");
            let t1: f64 = own.sample(rng);
            let t2: f64 = own.sample(rng);
            [t0 / (t0 + t1), t0 / (t0 + t2)]
        };
        let mut draw = |g: usize| -> Slot {
            if shared_prob[g] == 1.0 || rng.random::<f64>() < shared_prob[g] {
                (0, pick(&shared_w, rng))
            } else {
                (g + 1, pick(&own_w[g], rng))
            }
        };
        let a = draw(0);
        let b = draw(0);
        let c = draw(1);
        record(g0, a, b, c, rng, &mut ties, &mut hyper, &mut cross_equal, &mut xs, &mut x2s, &mut ys);
    }

    let n = n_reps as f64;
    let beta = ties as f64 / n;
    let gamma = hyper as f64 / n;
    let within = pearson(&xs, &x2s);
    let across = pearson(&xs, &ys);
    Ok(DependenceReport {
        beta,
        gamma,
        rho0: g0.rho0(),
        corr_within: within,
        corr_across: across,
        method: DependenceMethod::MonteCarlo,
        mc_stderr: Some(McStderr {
            beta: (beta * (1.0 - beta) / n).sqrt(),
            gamma: (gamma * (1.0 - gamma) / n).sqrt(),
            corr_within: corr_stderr(&xs, &x2s),
            corr_across: corr_stderr(&xs, &ys),
        }),
        cross_tie: Some(cross_equal as f64 / n),
    })
}

#[allow(clippy::too_many_arguments)]
fn record<R: Rng + ?Sized>(
    g0: &BaseMeasure,
    a: Slot,
    b: Slot,
    c: Slot,
    rng: &mut R,
    ties: &mut usize,
    hyper: &mut usize,
    cross_equal: &mut usize,
    xs: &mut Vec<f64>,
    x2s: &mut Vec<f64>,
    ys: &mut Vec<f64>,
) {
    // Only atoms actually selected are drawn, one per distinct slot.
    let mut atoms: Vec<(Slot, (f64, f64))> = Vec::with_capacity(3);
    let mut coords = |slot: Slot, rng: &mut R| -> (f64, f64) {
        if let Some((_, v)) = atoms.iter().find(|(s, _)| *s == slot) {
            return *v;
        }
        let v = match g0.sample_pair(rng) {
            Atom::Point(p) => (p[0], p[1]),
            Atom::Nig(n) => (n.x, n.y),
        };
        atoms.push((slot, v));
        v
    };
    let x1 = coords(a, rng).0;
    let x2 = coords(b, rng).0;
    let y1 = coords(c, rng).1;
    if a == b {
        *ties += 1;
    }
    if a == c && a.0 == 0 {
        *hyper += 1;
    }
    if x1 == y1 {
        *cross_equal += 1;
    }
    xs.push(x1);
    x2s.push(x2);
    ys.push(y1);
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Delta-method standard error of a sample correlation, computed from the
/// fourth-moment terms so it stays valid for non-Gaussian pairs.
fn corr_stderr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
    let r = pearson(a, b);
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let u = (x - ma) / sa;
        let v = (y - mb) / sb;
        // Influence function of the correlation coefficient.
        let inf = u * v - 0.5 * r * (u * u + v * v);
        acc += inf * inf;
    }
    (acc / n).sqrt() / n.sqrt()
}

/// Whether the base measure admits the rectangle probabilities used by
/// [`corr_measures`].
pub fn supports_set_correlation(g0: &BaseMeasure) -> bool {
    matches!(
        g0.family,
        BaseFamily::BivariateGaussian | BaseFamily::DiagonalDegenerate
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn beta_examples() {
        assert_eq!(beta_closed(&LevySpec::gamma(1.0).unwrap()).unwrap(), 0.5);
        assert!(beta_closed(&LevySpec::gamma(1e6).unwrap()).unwrap() < 2e-6);
        let cfg = QuadratureConfig {
            rel_tol: 1e-11,
            max_subdivisions: 1000,
            ..QuadratureConfig::default()
        };
        for theta in [0.5, 3.0] {
            let g = LevySpec::gamma(theta).unwrap();
            let q = beta_numeric(&g, &cfg).unwrap();
            assert!((q - 1.0 / (1.0 + theta)).abs() < 1e-8, "{q}");
        }
    }

    #[test]
    fn inverse_gaussian_beta_matches_series_oracle() {
        // Substituting v = √(1 + 2u) gives β = θ e^θ ∫₁^∞ (v² - 1) v⁻² e^{-θv} dv / 2
        // = θ e^θ [E₀(θ) - E₂(θ)] / 2 with E_n the generalized exponential integral.
        let theta: f64 = 1.0;
        let e0 = (-theta).exp() / theta;
        let e2 = statrs::function::exponential::integral(theta, 2).unwrap();
        let oracle = theta * theta.exp() * (e0 - e2) / 2.0;
        let b = beta_closed(&LevySpec::inv_gauss(theta).unwrap()).unwrap();
        assert!((b - oracle).abs() < 1e-8, "{b} vs {oracle}");
    }

    #[test]
    fn gamma_closed_examples() {
        assert_eq!(gamma_closed(&LevySpec::additive(1.0, 1.0).unwrap()).unwrap(), 0.0);
        let z0 = gamma_closed(&LevySpec::additive(1.0, 0.0).unwrap()).unwrap();
        assert!((z0 - 0.5).abs() < 1e-10);
        let g = gamma_closed(&LevySpec::gamma(2.0).unwrap()).unwrap();
        assert!((g - 1.0 / 3.0).abs() < 1e-15);
        // Reference values from independent 2D quadrature in double precision.
        let a = gamma_closed(&LevySpec::additive(1.0, 0.5).unwrap()).unwrap();
        assert!((a - 0.204_568_546_29).abs() < 1e-9, "{a}");
        let b = gamma_closed(&LevySpec::additive(0.5, 0.25).unwrap()).unwrap();
        assert!((b - 0.431_993_697_77).abs() < 1e-9, "{b}");
    }

    #[test]
    fn gamma_numeric_examples() {
        let cfg = QuadratureConfig::default();
        let g = gamma_numeric(&LevySpec::gamma(1.0).unwrap(), &cfg).unwrap();
        assert!((g - 0.5).abs() < 1e-6, "{g}");
        let spec = LevySpec::additive(1.0, 0.5).unwrap();
        let a = gamma_numeric(&spec, &cfg).unwrap();
        assert!((a - gamma_closed(&spec).unwrap()).abs() < 1e-6);
        let z1 = gamma_numeric(&LevySpec::additive(1.0, 1.0).unwrap(), &cfg).unwrap();
        assert!(z1.abs() < 1e-8);
    }

    #[test]
    fn gamma_numeric_handles_slow_tails() {
        // Small θ leaves the integrand with a u^{-1-θ} tail.
        let cfg = QuadratureConfig::default();
        for (theta, z) in [(0.1, 0.25), (0.5, 0.25), (0.5, 0.75), (0.1, 0.0)] {
            let spec = LevySpec::additive(theta, z).unwrap();
            let n = gamma_numeric(&spec, &cfg).unwrap();
            let c = gamma_closed(&spec).unwrap();
            assert!((n - c).abs() < 1e-7, "theta {theta}, z {z}: {n} vs {c}");
        }
        // Mass 100 with z = 0 is the equal-jump case, 1/101.
        let big = gamma_closed(&LevySpec::additive(100.0, 1e-12).unwrap()).unwrap();
        assert!((big - 1.0 / 101.0).abs() < 1e-9, "{big}");
    }

    #[test]
    fn inverse_gaussian_gamma_numeric_equals_beta() {
        let spec = LevySpec::inv_gauss(1.5).unwrap();
        let g = gamma_numeric(&spec, &QuadratureConfig::default()).unwrap();
        let b = beta_closed(&spec).unwrap();
        assert!((g - b).abs() < 1e-6, "{g} vs {b}");
    }

    #[test]
    fn observable_correlations() {
        let spec = LevySpec::gamma(1.0).unwrap();
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 1.0).unwrap();
        assert!((corr_observables(&spec, &g0).unwrap().1 - 0.5).abs() < 1e-15);
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.0).unwrap();
        assert_eq!(corr_observables(&spec, &g0).unwrap().1, 0.0);
    }

    #[test]
    fn set_correlation_examples() {
        let spec = LevySpec::gamma(1.0).unwrap();
        let a = Interval::below(0.3);
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.0).unwrap();
        assert!(corr_measures(&spec, &g0, a, a).unwrap().abs() < 1e-12);
        let g1 = BaseMeasure::bivariate(0.0, 1.0, 1.0).unwrap();
        assert!((corr_measures(&spec, &g1, a, a).unwrap() - 1.0).abs() < 1e-10);

        let rho: f64 = -0.99;
        let g = BaseMeasure::bivariate(0.0, 1.0, rho).unwrap();
        let half = Interval::below(0.0);
        let oracle = (0.25 + rho.asin() / (2.0 * PI) - 0.25) / 0.25;
        let v = corr_measures(&spec, &g, half, half).unwrap();
        assert!(v < 0.0 && (v - oracle).abs() < 1e-10);

        let sym = Interval::new(-0.7, 0.7);
        for r in [0.3, 0.8] {
            let at = |rho: f64, set: Interval| {
                corr_measures(&spec, &BaseMeasure::bivariate(0.0, 1.0, rho).unwrap(), set, set).unwrap()
            };
            // Odd in ρ₀ for the half line at the mean, even for a centred interval.
            assert!((at(r, half) + at(-r, half)).abs() < 1e-10);
            assert!((at(r, sym) - at(-r, sym)).abs() < 1e-10);
        }
        assert!(corr_measures(&spec, &g, Interval::below(f64::INFINITY), a).is_err());
    }

    #[test]
    fn hdp_examples() {
        assert_eq!(hdp_dependence(1.0, 1.0).unwrap(), (0.75, 0.5));
        let (b, g) = hdp_dependence(2.0, 3.0).unwrap();
        assert!((b - 0.5).abs() < 1e-15 && (g - 0.25).abs() < 1e-15);
        assert!(hdp_dependence(1.0, 1e12).unwrap().1 < 1e-11);
        assert!(hdp_dependence(0.0, 1.0).is_err());
    }

    #[test]
    fn truncation_rule() {
        // (1/2)^20 < 1e-6 < (1/2)^19
        assert_eq!(required_atoms(1.0), 20);
    }

    #[test]
    fn diagonal_hyper_ties_equal_cross_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g0 = BaseMeasure::diagonal(0.0, 1.0).unwrap();
        let spec = LevySpec::gamma(1.0).unwrap();
        let rep = mc_dependence_oracle(&spec, &g0, 20, 5_000, &mut rng).unwrap();
        assert_eq!(rep.cross_tie.unwrap(), rep.gamma);
    }

    #[test]
    fn additive_oracle_matches_closed_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.5).unwrap();
        let spec = LevySpec::additive(1.0, 0.5).unwrap();
        let rep = mc_dependence_oracle(&spec, &g0, 40, 40_000, &mut rng).unwrap();
        let se = rep.mc_stderr.unwrap();
        assert!((rep.gamma - gamma_closed(&spec).unwrap()).abs() < 3.0 * se.gamma);
        assert!((rep.beta - 0.5).abs() < 3.0 * se.beta);
    }

    #[test]
    fn oracle_rejects_short_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g0 = BaseMeasure::bivariate(0.0, 1.0, 0.5).unwrap();
        let spec = LevySpec::gamma(1.0).unwrap();
        assert!(mc_dependence_oracle(&spec, &g0, 5, 100, &mut rng).is_err());
    }
}
