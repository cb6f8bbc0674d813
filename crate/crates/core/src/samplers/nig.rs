//! Location-scale Gaussian kernels with a normal-inverse-gamma pair base
//! measure. Each cluster carries a materialized atom `(x, σ_w², y, σ_v²)`;
//! group `g` observes side `group_side[g]` of it.
//!
//! Opening a cluster uses the Student-t marginal and then draws the atom
//! from its posterior given the first member; the other side is drawn from
//! the base measure's conditional, so a later join from another group is a
//! hyper-tie at an already materialized companion.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::base_measure::{sample_inv_gamma, BaseMeasure, NigAtom, NigParams};
use crate::error::{invalid, Result};
use crate::samplers::adapt::RwScale;
use crate::samplers::gaussian::reflect;
use crate::samplers::{AtomModel, HyperPriors};
use crate::special::{ln_normal, ln_student_t};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SideStats {
    pub n: usize,
    pub sum: f64,
    pub sumsq: f64,
}

impl SideStats {
    /// `Σ (w - c)²` over the members.
    fn ss_about(&self, c: f64) -> f64 {
        (self.sumsq - 2.0 * c * self.sum + self.n as f64 * c * c).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NigStats {
    pub atom: Option<NigAtom>,
    pub side: [SideStats; 2],
}

#[derive(Debug, Clone, Copy)]
struct Side {
    mean: f64,
    lambda: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Clone)]
pub struct NigAtoms {
    pub mean: [f64; 2],
    pub nig: NigParams,
    pub rho0: f64,
    pub group_side: Vec<usize>,
    /// Whether atoms carry both sides. Single-side models never draw companions.
    pub paired: bool,
    rho_scale: RwScale,
    refresh_steps: usize,
}

impl NigAtoms {
    pub fn new(mean: [f64; 2], nig: NigParams, rho0: f64, group_side: Vec<usize>, paired: bool) -> Result<Self> {
        let pos = [nig.lambda1, nig.lambda2, nig.alpha1, nig.alpha2, nig.beta1, nig.beta2];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("nig", "all NIG hyperparameters must be positive"));
        }
        if !(rho0 > -1.0 && rho0 < 1.0) {
            return Err(invalid("rho0", "must lie in (-1, 1)"));
        }
        if group_side.is_empty() || group_side.iter().any(|&s| s > 1 || (s == 1 && !paired)) {
            return Err(invalid("group_side", "sides are 0 or 1, and side 1 needs paired atoms"));
        }
        Ok(Self {
            mean,
            nig,
            rho0,
            group_side,
            paired,
            rho_scale: RwScale::new(0.2),
            refresh_steps: 2,
        })
    }

    /// Two groups observing the two sides of a paired NIG base measure.
    pub fn from_base(g0: &BaseMeasure) -> Result<Self> {
        let nig = g0.nig.ok_or_else(|| invalid("g0", "needs NIG hyperparameters"))?;
        Self::new([g0.mean[0], g0.mean[1]], nig, g0.rho0(), vec![0, 1], true)
    }

    /// One group observing side 0 only.
    pub fn single(mean: f64, nig: NigParams) -> Result<Self> {
        Self::new([mean, mean], nig, 0.0, vec![0], false)
    }

    fn side(&self, s: usize) -> Side {
        let p = &self.nig;
        if s == 0 {
            Side { mean: self.mean[0], lambda: p.lambda1, alpha: p.alpha1, beta: p.beta1 }
        } else {
            Side { mean: self.mean[1], lambda: p.lambda2, alpha: p.alpha2, beta: p.beta2 }
        }
    }

    fn loc_var(atom: &NigAtom, s: usize) -> (f64, f64) {
        if s == 0 {
            (atom.x, atom.var_x)
        } else {
            (atom.y, atom.var_y)
        }
    }

    fn standardized(&self, atom: &NigAtom, s: usize) -> f64 {
        let sd = self.side(s);
        let (loc, var) = Self::loc_var(atom, s);
        (loc - sd.mean) * sd.lambda.sqrt() / var.sqrt()
    }

    /// Exact NIG posterior draw for one side given its members.
    fn draw_side<R: Rng + ?Sized>(&self, s: usize, st: &SideStats, rng: &mut R) -> (f64, f64) {
        let sd = self.side(s);
        let n = st.n as f64;
        let lam = sd.lambda + n;
        let (ss, dev) = if st.n > 0 {
            let mean = st.sum / n;
            (st.ss_about(mean), mean - sd.mean)
        } else {
            (0.0, 0.0)
        };
        let m = (sd.lambda * sd.mean + st.sum) / lam;
        let alpha = sd.alpha + 0.5 * n;
        let beta = sd.beta + 0.5 * ss + 0.5 * sd.lambda * n * dev * dev / lam;
        let var = sample_inv_gamma(alpha, beta, rng);
        let loc = m + (var / lam).sqrt() * rng.sample::<f64, _>(StandardNormal);
        (loc, var)
    }

    /// Draws side `1 - s` from the base measure's conditional given side `s`.
    fn draw_companion<R: Rng + ?Sized>(&self, atom: &mut NigAtom, s: usize, rng: &mut R) {
        let t = 1 - s;
        let sd = self.side(t);
        let z = self.standardized(atom, s);
        let var = sample_inv_gamma(sd.alpha, sd.beta, rng);
        let eps: f64 = rng.sample(StandardNormal);
        let r = self.rho0;
        let loc = sd.mean + (var / sd.lambda).sqrt() * (r * z + (1.0 - r * r).sqrt() * eps);
        if t == 0 {
            atom.x = loc;
            atom.var_x = var;
        } else {
            atom.y = loc;
            atom.var_y = var;
        }
    }

    fn ln_coupling(&self, atom: &NigAtom, rho: f64) -> f64 {
        let z1 = self.standardized(atom, 0);
        let z2 = self.standardized(atom, 1);
        -0.5 * (1.0 - rho * rho).ln() - (rho * rho * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / (2.0 * (1.0 - rho * rho))
    }

    fn refresh_tied<R: Rng + ?Sized>(&self, stats: &mut NigStats, rng: &mut R) {
        let mut atom = stats.atom.expect("tied cluster has an atom");
        let (s0, s1) = (self.side(0), self.side(1));
        let [st0, st1] = stats.side;
        let r = self.rho0;
        for _ in 0..self.refresh_steps {
            // Locations given variances: bivariate Gaussian conjugate update.
            let (a, b) = ((atom.var_x / s0.lambda).sqrt(), (atom.var_y / s1.lambda).sqrt());
            let det = a * a * b * b * (1.0 - r * r);
            let (p00, p01, p11) = (b * b / det, -r * a * b / det, a * a / det);
            let (q00, q11) = (p00 + st0.n as f64 / atom.var_x, p11 + st1.n as f64 / atom.var_y);
            let h0 = p00 * s0.mean + p01 * s1.mean + st0.sum / atom.var_x;
            let h1 = p01 * s0.mean + p11 * s1.mean + st1.sum / atom.var_y;
            let qdet = q00 * q11 - p01 * p01;
            let (c00, c01, c11) = (q11 / qdet, -p01 / qdet, q00 / qdet);
            let (m0, m1) = (c00 * h0 + c01 * h1, c01 * h0 + c11 * h1);
            let l00 = c00.sqrt();
            let l10 = c01 / l00;
            let l11 = (c11 - l10 * l10).max(0.0).sqrt();
            let (e0, e1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            atom.x = m0 + l00 * e0;
            atom.y = m1 + l10 * e0 + l11 * e1;

            // Variances: independence Metropolis with the uncorrelated
            // conditionals as proposal; the ratio reduces to the coupling term.
            let prop_x = sample_inv_gamma(
                s0.alpha + 0.5 * (st0.n as f64 + 1.0),
                s0.beta + 0.5 * (st0.ss_about(atom.x) + s0.lambda * (atom.x - s0.mean).powi(2)),
                rng,
            );
            let prop_y = sample_inv_gamma(
                s1.alpha + 0.5 * (st1.n as f64 + 1.0),
                s1.beta + 0.5 * (st1.ss_about(atom.y) + s1.lambda * (atom.y - s1.mean).powi(2)),
                rng,
            );
            let proposal = NigAtom { var_x: prop_x, var_y: prop_y, ..atom };
            let ln_ratio = self.ln_coupling(&proposal, r) - self.ln_coupling(&atom, r);
            if ln_ratio >= 0.0 || rng.random::<f64>().ln() < ln_ratio {
                atom = proposal;
            }
        }
        stats.atom = Some(atom);
    }
}

impl AtomModel for NigAtoms {
    type Stats = NigStats;

    fn n_groups(&self) -> usize {
        self.group_side.len()
    }

    fn row_len(&self, _g: usize) -> usize {
        1
    }

    fn empty_stats(&self) -> NigStats {
        NigStats { atom: None, side: [SideStats::default(); 2] }
    }

    fn ln_pred_new(&self, g: usize, row: &[f64]) -> f64 {
        let sd = self.side(self.group_side[g]);
        let scale2 = sd.beta * (1.0 + sd.lambda) / (sd.alpha * sd.lambda);
        ln_student_t(row[0], 2.0 * sd.alpha, sd.mean, scale2)
    }

    fn ln_pred_join(&self, stats: &NigStats, g: usize, row: &[f64]) -> f64 {
        let atom = stats.atom.as_ref().expect("occupied cluster has an atom");
        let (loc, var) = Self::loc_var(atom, self.group_side[g]);
        ln_normal(row[0], loc, var)
    }

    fn add<R: Rng + ?Sized>(&self, stats: &mut NigStats, g: usize, row: &[f64], rng: &mut R) {
        let s = self.group_side[g];
        let w = row[0];
        let st = &mut stats.side[s];
        st.n += 1;
        st.sum += w;
        st.sumsq += w * w;
        if stats.atom.is_none() {
            let single = SideStats { n: 1, sum: w, sumsq: w * w };
            let (loc, var) = self.draw_side(s, &single, rng);
            let mut atom = NigAtom { x: loc, var_x: var, y: loc, var_y: var };
            if self.paired {
                self.draw_companion(&mut atom, s, rng);
            }
            stats.atom = Some(atom);
        }
    }

    fn remove(&self, stats: &mut NigStats, g: usize, row: &[f64]) {
        let s = self.group_side[g];
        let w = row[0];
        let st = &mut stats.side[s];
        st.n -= 1;
        st.sum -= w;
        st.sumsq -= w * w;
        if st.n == 0 {
            *st = SideStats::default();
        }
        if stats.side.iter().all(|s| s.n == 0) {
            stats.atom = None;
        }
    }

    fn refresh<R: Rng + ?Sized>(&self, stats: &mut NigStats, rng: &mut R) {
        let occupied = [stats.side[0].n > 0, stats.side[1].n > 0];
        match occupied {
            [true, true] => self.refresh_tied(stats, rng),
            [false, false] => stats.atom = None,
            _ => {
                let s = if occupied[0] { 0 } else { 1 };
                let (loc, var) = self.draw_side(s, &stats.side[s], rng);
                let mut atom = NigAtom { x: loc, var_x: var, y: loc, var_y: var };
                if s == 1 {
                    atom = NigAtom { y: loc, var_y: var, ..atom };
                }
                if self.paired {
                    self.draw_companion(&mut atom, s, rng);
                }
                stats.atom = Some(atom);
            }
        }
    }

    fn update_hyper<R: Rng + ?Sized>(&mut self, clusters: &mut [NigStats], priors: &HyperPriors, rng: &mut R) {
        if !priors.rho_uniform || !self.paired {
            return;
        }
        let atoms: Vec<NigAtom> = clusters.iter().filter_map(|s| s.atom).collect();
        let target = |m: &Self, rho: f64| atoms.iter().map(|a| m.ln_coupling(a, rho)).sum::<f64>();
        let cur = self.rho0;
        let prop = reflect(cur + self.rho_scale.step() * rng.sample::<f64, _>(StandardNormal), -1.0, 1.0);
        let ok = prop.abs() < 1.0 && {
            let r = target(self, prop) - target(self, cur);
            r >= 0.0 || rng.random::<f64>().ln() < r
        };
        if ok {
            self.rho0 = prop;
        }
        self.rho_scale.record(ok);
    }

    fn hyper_values(&self) -> (Vec<f64>, Vec<f64>) {
        if self.paired {
            (vec![self.rho0], Vec::new())
        } else {
            (Vec::new(), Vec::new())
        }
    }

    fn freeze_adaptation(&mut self) {
        self.rho_scale.freeze();
    }

    fn merge_sides(&self, a: &NigStats, b: &NigStats) -> Option<(NigStats, f64)> {
        if !self.paired {
            return None;
        }
        let (a, b) = match (a.side[0].n > 0, a.side[1].n > 0, b.side[0].n > 0, b.side[1].n > 0) {
            (true, false, false, true) => (a, b),
            (false, true, true, false) => (b, a),
            _ => return None,
        };
        let (ax, bx) = (a.atom?, b.atom?);
        let atom = NigAtom { x: ax.x, var_x: ax.var_x, y: bx.y, var_y: bx.var_y };
        // Variances and marginal location laws cancel; the standardized
        // locations' correlation term is what remains.
        let ratio = self.ln_coupling(&atom, self.rho0);
        Some((NigStats { atom: Some(atom), side: [a.side[0], b.side[1]] }, ratio))
    }

    fn split_sides<R: Rng + ?Sized>(&self, c: &NigStats, rng: &mut R) -> Option<(NigStats, NigStats, f64)> {
        if !self.paired || c.side[0].n == 0 || c.side[1].n == 0 {
            return None;
        }
        let atom = c.atom?;
        let mut a = atom;
        self.draw_companion(&mut a, 0, rng);
        let mut b = atom;
        self.draw_companion(&mut b, 1, rng);
        let empty = SideStats::default();
        Some((
            NigStats { atom: Some(a), side: [c.side[0], empty] },
            NigStats { atom: Some(b), side: [empty, c.side[1]] },
            -self.ln_coupling(&atom, self.rho0),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(rho: f64) -> NigAtoms {
        NigAtoms::new([0.0, 0.0], NigParams::symmetric(1.0, 2.0, 4.0), rho, vec![0, 1], true).unwrap()
    }

    #[test]
    fn student_t_marginal_integrates_the_kernel() {
        // Monte Carlo average of N(w | x, σ²) over the prior matches the t density.
        let m = model(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = 0.7;
        let n = 200_000;
        let empty = SideStats::default();
        let mut acc = 0.0;
        for _ in 0..n {
            let (loc, var) = m.draw_side(0, &empty, &mut rng);
            acc += ln_normal(w, loc, var).exp();
        }
        let mc = acc / n as f64;
        let exact = m.ln_pred_new(0, &[w]).exp();
        assert!((mc - exact).abs() < 0.01 * exact, "{mc} vs {exact}");
    }

    #[test]
    fn companion_draws_have_the_base_correlation_of_standardized_locations() {
        let m = model(-0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let empty = SideStats::default();
        let n = 50_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, var_x) = m.draw_side(0, &empty, &mut rng);
            let mut a = NigAtom { x, var_x, y: 0.0, var_y: 1.0 };
            m.draw_companion(&mut a, 0, &mut rng);
            let (z1, z2) = (m.standardized(&a, 0), m.standardized(&a, 1));
            sxy += z1 * z2;
            sxx += z1 * z1;
            syy += z2 * z2;
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!((r + 0.7).abs() < 0.02, "{r}");
    }

    #[test]
    fn tied_refresh_leaves_the_prior_invariant_without_data() {
        // No members on either side but forced through the tied update: the
        // base measure must be preserved.
        let m = model(0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let empty = SideStats::default();
        let n = 40_000;
        let (mut mean_y, mut corr) = (0.0, 0.0);
        for _ in 0..n {
            let (x, var_x) = m.draw_side(0, &empty, &mut rng);
            let mut a = NigAtom { x, var_x, y: 0.0, var_y: 1.0 };
            m.draw_companion(&mut a, 0, &mut rng);
            let mut s = NigStats { atom: Some(a), side: [SideStats::default(); 2] };
            m.refresh_tied(&mut s, &mut rng);
            let a = s.atom.unwrap();
            mean_y += a.var_y;
            corr += m.standardized(&a, 0) * m.standardized(&a, 1);
        }
        // E[σ²] = β/(α-1) = 4, E[z1 z2] = ρ.
        assert!((mean_y / n as f64 - 4.0).abs() < 0.25, "{}", mean_y / n as f64);
        assert!((corr / n as f64 - 0.6).abs() < 0.03, "{}", corr / n as f64);
    }

    #[test]
    fn empty_cluster_drops_its_atom() {
        let m = model(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = m.empty_stats();
        m.add(&mut s, 1, &[0.3], &mut rng);
        assert!(s.atom.is_some());
        m.remove(&mut s, 1, &[0.3]);
        assert!(s.atom.is_none());
    }
}
