//! Ferguson–Klass draws of the pair of random measures given the latent
//! variables: the tilted completely random vector plus fixed jumps at the
//! cluster locations.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::Serialize;

use crate::base_measure::{Atom, BaseMeasure};
use crate::error::{invalid, FurbiError, Result};
use crate::levy::{LevyFamily, LevySpec};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Below this log-jump the tail integral is evaluated by its small-jump asymptote.
const LN_TINY: f64 = -600.0;

/// A cluster carrying `counts` observations per group at a fixed location.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCluster {
    pub counts: [usize; 2],
    pub location: Atom,
}

/// Latent variables the draw conditions on. `u = (0, 0)` with no clusters
/// gives a prior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FkContext {
    pub u: [f64; 2],
    pub clusters: Vec<FixedCluster>,
}

impl FkContext {
    pub fn prior() -> Self {
        Self { u: [0.0, 0.0], clusters: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedJump {
    pub counts: [usize; 2],
    pub location: Atom,
    pub jumps: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkDraw {
    /// Random jumps, per component in decreasing order.
    pub jumps: Vec<[f64; 2]>,
    pub atoms: Vec<Atom>,
    pub fixed: Vec<FixedJump>,
    pub truncation: usize,
    /// Expected mass left out by the truncation, per group.
    pub residual: [f64; 2],
}

/// The four blocks of a normalized measure: random part, shared clusters,
/// own-only clusters and other-only clusters. Nonnegative, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockWeights {
    pub random: f64,
    pub shared: f64,
    pub own: f64,
    pub other: f64,
}

impl FkDraw {
    /// Total random (non-fixed) mass per group.
    pub fn random_totals(&self) -> [f64; 2] {
        let mut t = [0.0; 2];
        for j in &self.jumps {
            t[0] += j[0];
            t[1] += j[1];
        }
        t
    }

    pub fn block_weights(&self, g: usize) -> BlockWeights {
        let other = 1 - g;
        let mut b = BlockWeights { random: self.random_totals()[g], shared: 0.0, own: 0.0, other: 0.0 };
        for f in &self.fixed {
            let j = f.jumps[g];
            match (f.counts[g] > 0, f.counts[other] > 0) {
                (true, true) => b.shared += j,
                (true, false) => b.own += j,
                _ => b.other += j,
            }
        }
        let total = b.random + b.shared + b.own + b.other;
        if total > 0.0 {
            b.random /= total;
            b.shared /= total;
            b.own /= total;
            b.other /= total;
        }
        b
    }

    /// Normalized weights of every atom (random atoms first, then fixed) for group `g`.
    pub fn normalized(&self, g: usize) -> Vec<f64> {
        let mut w: Vec<f64> = self.jumps.iter().map(|j| j[g]).chain(self.fixed.iter().map(|f| f.jumps[g])).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        }
        w
    }
}

/// One Poisson-driven component of the random part: `mass · ν` tilted by
/// `tilt`, placing its jumps on the groups in `share`.
struct Component {
    mass: f64,
    tilt: f64,
    share: [bool; 2],
}

fn ln_tail(spec: &LevySpec, tilt: f64, t: f64) -> f64 {
    if t > LN_TINY {
        return spec.tail_mass(tilt, t.exp()).ln();
    }
    match spec.family {
        LevyFamily::GammaEqualJumps | LevyFamily::AdditiveGamma => (-EULER_GAMMA - (1.0 + tilt).ln() - t).ln(),
        // √c Γ(-1/2, cs)/√(2π) ~ √c · 2 (cs)^{-1/2} / √(2π).
        LevyFamily::InvGaussEqualJumps => (2.0 / (2.0 * std::f64::consts::PI).sqrt()).ln() - 0.5 * t,
    }
}

/// Log-jump `t` solving `mass · tail(e^t) = level`, searching below `hi`.
fn invert(spec: &LevySpec, c: &Component, level: f64, hi: f64) -> Result<f64> {
    let target = (level / c.mass).ln();
    let f = |t: f64| ln_tail(spec, c.tilt, t) - target;
    let mut hi = hi;
    while f(hi) > 0.0 {
        hi += 2.0;
        if hi > 50.0 {
            return Err(FurbiError::TailInversion { level, reason: "no upper bracket".into() });
        }
    }
    let mut lo = hi - 1.0;
    let mut width = 1.0;
    while f(lo) < 0.0 {
        width *= 2.0;
        lo = hi - width;
        if lo < -1e6 {
            return Ok(f64::NEG_INFINITY);
        }
    }
    // f is decreasing in t: f(lo) >= 0 >= f(hi). Bisection on a secant guess.
    let (mut flo, mut fhi) = (f(lo), f(hi));
    for _ in 0..200 {
        let mut t = lo + (hi - lo) * flo / (flo - fhi);
        if !(t > lo && t < hi) || !t.is_finite() {
            t = 0.5 * (lo + hi);
        }
        let ft = f(t);
        if ft.abs() < 1e-13 || (hi - lo) < 1e-13 {
            return Ok(t);
        }
        if ft > 0.0 {
            lo = t;
            flo = ft;
        } else {
            hi = t;
            fhi = ft;
        }
        // Keep the secant from stalling on one side.
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Err(FurbiError::TailInversion { level, reason: "bracketing did not converge".into() })
}

fn components(spec: &LevySpec, u: [f64; 2]) -> Vec<Component> {
    let s = u[0] + u[1];
    match spec.family {
        LevyFamily::GammaEqualJumps | LevyFamily::InvGaussEqualJumps => {
            vec![Component { mass: spec.theta, tilt: s, share: [true, true] }]
        }
        LevyFamily::AdditiveGamma => {
            let (own, common) = (spec.theta * spec.z, spec.theta * (1.0 - spec.z));
            [
                Component { mass: own, tilt: u[0], share: [true, false] },
                Component { mass: own, tilt: u[1], share: [false, true] },
                Component { mass: common, tilt: s, share: [true, true] },
            ]
            .into_iter()
            .filter(|c| c.mass > 0.0)
            .collect()
        }
    }
}

/// Draws the random measures given `ctx`, keeping the `m` largest jumps of
/// every Poisson component.
pub fn ferguson_klass_draw<R: Rng + ?Sized>(
    spec: &LevySpec,
    g0: &BaseMeasure,
    ctx: &FkContext,
    m: usize,
    rng: &mut R,
) -> Result<FkDraw> {
    spec.validate()?;
    if m == 0 {
        return Err(invalid("m", "truncation must be positive"));
    }
    if ctx.u.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(invalid("u", "must be finite and nonnegative"));
    }
    let mut jumps = Vec::new();
    let mut atoms = Vec::new();
    let mut residual = [0.0; 2];
    for c in components(spec, ctx.u) {
        let mut xi = 0.0;
        let mut hi: f64 = 10.0;
        let mut last: f64 = 0.0;
        for _ in 0..m {
            xi += rng.sample::<f64, _>(Exp1);
            let t = if hi.is_finite() { invert(spec, &c, xi, hi)? } else { f64::NEG_INFINITY };
            let s = t.exp();
            hi = t.min(hi);
            last = s;
            jumps.push([if c.share[0] { s } else { 0.0 }, if c.share[1] { s } else { 0.0 }]);
            atoms.push(g0.sample_pair(rng));
        }
        // Bound on the expected mass of the dropped jumps, ∫_0^{s_M} s ν(ds).
        let bound = match spec.family {
            LevyFamily::InvGaussEqualJumps => c.mass * 2.0 * last.sqrt() / (2.0 * std::f64::consts::PI).sqrt(),
            _ => c.mass * last,
        };
        for g in 0..2 {
            if c.share[g] {
                residual[g] += bound;
            }
        }
    }
    let mut fixed = Vec::with_capacity(ctx.clusters.len());
    let total_u = ctx.u[0] + ctx.u[1];
    for cl in &ctx.clusters {
        let [n, mm] = cl.counts;
        if n + mm == 0 {
            return Err(invalid("clusters", "a fixed location needs at least one observation"));
        }
        let (shape, rate, share) = match spec.family {
            LevyFamily::GammaEqualJumps | LevyFamily::InvGaussEqualJumps => {
                let (a, b) = spec.fixed_jump_law(n + mm, total_u);
                (a, b, [true, true])
            }
            LevyFamily::AdditiveGamma => {
                if n > 0 && mm > 0 {
                    ((n + mm) as f64, 1.0 + total_u, [true, true])
                } else {
                    let (g, k) = if n > 0 { (0, n) } else { (1, mm) };
                    let kf = k as f64;
                    let ln_own = if spec.z > 0.0 { spec.z.ln() - kf * ctx.u[g].ln_1p() } else { f64::NEG_INFINITY };
                    let ln_common =
                        if spec.z < 1.0 { (1.0 - spec.z).ln() - kf * total_u.ln_1p() } else { f64::NEG_INFINITY };
                    let p_own = 1.0 / (1.0 + (ln_common - ln_own).exp());
                    if rng.random::<f64>() < p_own {
                        let mut share = [false; 2];
                        share[g] = true;
                        (kf, 1.0 + ctx.u[g], share)
                    } else {
                        (kf, 1.0 + total_u, [true, true])
                    }
                }
            }
        };
        let j: f64 = Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng);
        fixed.push(FixedJump {
            counts: cl.counts,
            location: cl.location.clone(),
            jumps: [if share[0] { j } else { 0.0 }, if share[1] { j } else { 0.0 }],
        });
    }
    Ok(FkDraw { jumps, atoms, fixed, truncation: m, residual })
}
