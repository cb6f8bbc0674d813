//! Marginal Gibbs sampler for mixtures driven by a vector of dependent
//! normalized measures, for any number of groups.
//!
//! Atoms are handled by an [`AtomModel`]. An observation from group `g`
//! joins cluster `c` with weight `τ(n_c + e_g, U) / τ(n_c, U)` times its
//! predictive density given the cluster, or opens a new cluster with weight
//! `θ τ(e_g, U)` times the base-measure predictive. Joining a cluster that so
//! far only holds other groups' observations creates a hyper-tie; the
//! predictive then integrates over the companion coordinate given the
//! cluster's atom.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FurbiError, Result};
use crate::latent::LabelArrays;
use crate::levy::{LevyFamily, LevySpec};
use crate::samplers::adapt::RwScale;
use crate::samplers::gaussian::reflect;
use crate::samplers::trace::TraceRow;
use crate::samplers::{AtomModel, HyperPriors};
use crate::special::log_sum_exp;

/// How the latent `U` vector is refreshed each sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UUpdate {
    /// Adaptive random-walk Metropolis on `log U`.
    #[default]
    Metropolis,
    /// Exact draw, available for gamma equal jumps only: the direction is
    /// Dirichlet in the group sizes and `S/(1+S)` is `Beta(N, θ)` for `S = ΣU`.
    ExactGamma,
}

/// Position of a cluster relative to the group an observation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterKind {
    /// Only members from the observation's own group.
    Own,
    /// Members from the observation's group and at least one other.
    Shared,
    /// Members from other groups only; joining creates a hyper-tie.
    Other,
}

/// Normalized conditional predictive weights for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveWeights {
    pub base: f64,
    /// `(cluster index, kind, weight)`.
    pub clusters: Vec<(usize, ClusterKind, f64)>,
}

impl PredictiveWeights {
    pub fn total(&self) -> f64 {
        self.base + self.clusters.iter().map(|c| c.2).sum::<f64>()
    }

    pub fn kind_total(&self, kind: ClusterKind) -> f64 {
        self.clusters.iter().filter(|c| c.1 == kind).map(|c| c.2).sum()
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorState<S> {
    pub spec: LevySpec,
    /// Per group, per observation: cluster index.
    pub labels: Vec<Vec<usize>>,
    /// Per cluster, per group: number of members.
    pub counts: Vec<Vec<usize>>,
    pub stats: Vec<S>,
    pub u: Vec<f64>,
    pub iteration: usize,
    ln_tau: Vec<f64>,
}

impl<S> PosteriorState<S> {
    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.counts.iter().filter(|c| c.iter().any(|&n| n > 0)).count()
    }

    pub fn group_size(&self, g: usize) -> usize {
        self.labels[g].len()
    }

    /// Number of distinct values in group `g`.
    pub fn group_clusters(&self, g: usize) -> usize {
        self.counts.iter().filter(|c| c[g] > 0).count()
    }

    /// Number of clusters with members from at least two groups.
    pub fn n_shared(&self) -> usize {
        self.counts.iter().filter(|c| c.iter().filter(|&&n| n > 0).count() >= 2).count()
    }

    pub fn kind(&self, cluster: usize, g: usize) -> ClusterKind {
        let own = self.counts[cluster][g] > 0;
        let other = self.counts[cluster].iter().enumerate().any(|(h, &n)| h != g && n > 0);
        match (own, other) {
            (true, false) => ClusterKind::Own,
            (true, true) => ClusterKind::Shared,
            _ => ClusterKind::Other,
        }
    }

    /// The two-group label arrays.
    pub fn label_arrays(&self) -> Result<LabelArrays> {
        if self.labels.len() != 2 {
            return Err(FurbiError::Unsupported(format!(
                "label arrays describe two groups, state has {}",
                self.labels.len()
            )));
        }
        Ok(LabelArrays {
            c_x: self.labels[0].clone(),
            c_y: self.labels[1].clone(),
        })
    }

    /// Labels of all observations, groups concatenated in order.
    pub fn flat_labels(&self) -> Vec<usize> {
        self.labels.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSampler<M: AtomModel> {
    pub model: M,
    pub priors: HyperPriors,
    pub state: PosteriorState<M::Stats>,
    pub burn_in: usize,
    pub u_update: UUpdate,
    /// Merge/split proposals between one-sided and shared clusters per
    /// sweep (two groups, models that support them).
    pub side_moves: usize,
    data: Vec<Vec<Vec<f64>>>,
    u_scales: Vec<RwScale>,
    u_joint: RwScale,
    theta_scale: RwScale,
    z_scale: RwScale,
    ln_pred: Vec<Vec<f64>>,
    free: Vec<usize>,
    scratch: Vec<usize>,
    ln_w: Vec<f64>,
    ln_prior: Vec<f64>,
    cand: Vec<usize>,
}

const NEW: usize = usize::MAX;

impl<M: AtomModel> MixtureSampler<M> {
    /// Builds a sampler and allocates the data sequentially from the
    /// predictive scheme.
    pub fn new<R: Rng + ?Sized>(
        spec: LevySpec,
        model: M,
        data: Vec<Vec<Vec<f64>>>,
        priors: HyperPriors,
        rng: &mut R,
    ) -> Result<Self> {
        let mut s = Self::empty(spec, model, data, priors)?;
        for g in 0..s.data.len() {
            for i in 0..s.data[g].len() {
                s.place(g, i, rng);
            }
        }
        s.compact();
        Ok(s)
    }

    /// Builds a sampler from given labels (any integers; equal labels across
    /// groups mark hyper-ties) and a given `U`.
    pub fn from_labels<R: Rng + ?Sized>(
        spec: LevySpec,
        model: M,
        data: Vec<Vec<Vec<f64>>>,
        labels: &[Vec<usize>],
        u: Vec<f64>,
        priors: HyperPriors,
        rng: &mut R,
    ) -> Result<Self> {
        let mut s = Self::empty(spec, model, data, priors)?;
        if labels.len() != s.data.len() || labels.iter().zip(&s.data).any(|(l, d)| l.len() != d.len()) {
            return Err(invalid("labels", "label shape does not match the data"));
        }
        if u.len() != s.data.len() || u.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("u", "needs one finite nonnegative value per group"));
        }
        s.state.u = u;
        let g_count = s.data.len();
        let mut map: Vec<(usize, usize)> = Vec::new();
        for g in 0..g_count {
            for i in 0..s.data[g].len() {
                let lab = labels[g][i];
                let c = match map.iter().find(|(l, _)| *l == lab) {
                    Some(&(_, c)) => c,
                    None => {
                        let c = s.open_cluster();
                        map.push((lab, c));
                        c
                    }
                };
                s.insert(g, i, c, rng);
            }
        }
        s.compact();
        Ok(s)
    }

    fn empty(spec: LevySpec, model: M, data: Vec<Vec<Vec<f64>>>, priors: HyperPriors) -> Result<Self> {
        spec.validate()?;
        let g_count = model.n_groups();
        if data.len() != g_count {
            return Err(FurbiError::Data(format!("model has {g_count} groups, data has {}", data.len())));
        }
        for (g, rows) in data.iter().enumerate() {
            for (i, r) in rows.iter().enumerate() {
                if r.len() != model.row_len(g) {
                    return Err(FurbiError::Data(format!(
                        "group {g} row {i}: expected {} values, found {}",
                        model.row_len(g),
                        r.len()
                    )));
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(FurbiError::Data(format!("group {g} row {i}: non-finite value")));
                }
            }
        }
        if priors.z_uniform && spec.family != LevyFamily::AdditiveGamma {
            return Err(FurbiError::Unsupported("a prior on z needs the additive family".into()));
        }
        let u = data.iter().map(|d| d.len() as f64 / spec.theta).collect();
        Ok(Self {
            model,
            priors,
            state: PosteriorState {
                spec,
                labels: data.iter().map(|d| vec![NEW; d.len()]).collect(),
                counts: Vec::new(),
                stats: Vec::new(),
                u,
                iteration: 0,
                ln_tau: Vec::new(),
            },
            burn_in: 0,
            u_update: UUpdate::Metropolis,
            side_moves: 10,
            u_scales: vec![RwScale::new(0.5); g_count],
            u_joint: RwScale::new(0.3),
            theta_scale: RwScale::new(0.5),
            z_scale: RwScale::new(0.2),
            ln_pred: data.iter().map(|d| vec![f64::NAN; d.len()]).collect(),
            free: Vec::new(),
            scratch: vec![0; g_count],
            ln_w: Vec::new(),
            ln_prior: Vec::new(),
            cand: Vec::new(),
            data,
        })
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_u_update(mut self, u_update: UUpdate) -> Result<Self> {
        if u_update == UUpdate::ExactGamma && self.state.spec.family != LevyFamily::GammaEqualJumps {
            return Err(FurbiError::Unsupported("exact U draws need gamma equal jumps".into()));
        }
        self.u_update = u_update;
        Ok(self)
    }

    pub fn data(&self) -> &[Vec<Vec<f64>>] {
        &self.data
    }

    /// Replaces the observations, keeping labels, and rebuilds cluster statistics.
    pub fn replace_data<R: Rng + ?Sized>(&mut self, data: Vec<Vec<Vec<f64>>>, rng: &mut R) -> Result<()> {
        if data.len() != self.data.len() || data.iter().zip(&self.data).any(|(a, b)| a.len() != b.len()) {
            return Err(FurbiError::Data("replacement data must keep the group sizes".into()));
        }
        self.data = data;
        for s in &mut self.state.stats {
            *s = self.model.empty_stats();
        }
        for g in 0..self.data.len() {
            for i in 0..self.data[g].len() {
                let c = self.state.labels[g][i];
                self.model.add(&mut self.state.stats[c], g, &self.data[g][i], rng);
            }
        }
        Ok(())
    }

    /// Log conditional predictive density of each observation given the rest
    /// of the state, recorded when the observation was last reallocated.
    pub fn ln_predictive_last(&self) -> &[Vec<f64>] {
        &self.ln_pred
    }

    /// One full sweep: every group's observations in random order, group by
    /// group, then atom refresh, then `U`, then hyperparameters.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut order = Vec::new();
        for g in 0..self.data.len() {
            order.clear();
            order.extend(0..self.data[g].len());
            order.shuffle(rng);
            for &i in &order {
                self.reallocate(g, i, rng);
            }
        }
        self.compact();
        for s in &mut self.state.stats {
            self.model.refresh(s, rng);
        }
        if self.data.len() == 2 {
            for _ in 0..self.side_moves {
                self.merge_split(rng);
            }
            self.compact();
        }
        self.update_u(rng);
        self.update_theta(rng);
        self.update_z(rng);
        self.model.update_hyper(&mut self.state.stats, &self.priors, rng);
        self.state.iteration += 1;
        if self.state.iteration == self.burn_in {
            self.freeze_adaptation();
        }
    }

    pub fn freeze_adaptation(&mut self) {
        for s in &mut self.u_scales {
            s.freeze();
        }
        self.u_joint.freeze();
        self.theta_scale.freeze();
        self.z_scale.freeze();
        self.model.freeze_adaptation();
    }

    /// Acceptance rate of the joint `log U` move since adaptation was frozen.
    pub fn u_acceptance(&self) -> f64 {
        self.u_joint.acceptance()
    }

    fn open_cluster(&mut self) -> usize {
        let g_count = self.data.len();
        match self.free.pop() {
            Some(c) => {
                self.state.stats[c] = self.model.empty_stats();
                c
            }
            None => {
                self.state.counts.push(vec![0; g_count]);
                self.state.stats.push(self.model.empty_stats());
                self.state.ln_tau.push(f64::NAN);
                self.state.counts.len() - 1
            }
        }
    }

    fn insert<R: Rng + ?Sized>(&mut self, g: usize, i: usize, c: usize, rng: &mut R) {
        let st = &mut self.state;
        st.counts[c][g] += 1;
        self.model.add(&mut st.stats[c], g, &self.data[g][i], rng);
        st.ln_tau[c] = st.spec.ln_tau_vec(&st.counts[c], &st.u);
        st.labels[g][i] = c;
    }

    fn detach(&mut self, g: usize, i: usize) {
        let st = &mut self.state;
        let c = st.labels[g][i];
        st.counts[c][g] -= 1;
        self.model.remove(&mut st.stats[c], g, &self.data[g][i]);
        if st.counts[c].iter().all(|&n| n == 0) {
            st.ln_tau[c] = f64::NAN;
            self.free.push(c);
        } else {
            st.ln_tau[c] = st.spec.ln_tau_vec(&st.counts[c], &st.u);
        }
        st.labels[g][i] = NEW;
    }

    fn reallocate<R: Rng + ?Sized>(&mut self, g: usize, i: usize, rng: &mut R) {
        self.detach(g, i);
        self.place(g, i, rng);
    }

    /// Fills the log weights for an observation of group `g` (not currently
    /// allocated). The last candidate is a new cluster.
    fn fill_weights(&mut self, g: usize, row: Option<&[f64]>) {
        let st = &self.state;
        self.ln_w.clear();
        self.ln_prior.clear();
        self.cand.clear();
        for c in 0..st.counts.len() {
            if st.counts[c].iter().all(|&n| n == 0) {
                continue;
            }
            self.scratch.copy_from_slice(&st.counts[c]);
            self.scratch[g] += 1;
            let lp = st.spec.ln_tau_vec(&self.scratch, &st.u) - st.ln_tau[c];
            let lk = row.map_or(0.0, |r| self.model.ln_pred_join(&st.stats[c], g, r));
            self.ln_prior.push(lp);
            self.ln_w.push(lp + lk);
            self.cand.push(c);
        }
        self.scratch.iter_mut().for_each(|v| *v = 0);
        self.scratch[g] = 1;
        let lp = st.spec.theta.ln() + st.spec.ln_tau_vec(&self.scratch, &st.u);
        let lk = row.map_or(0.0, |r| self.model.ln_pred_new(g, r));
        self.ln_prior.push(lp);
        self.ln_w.push(lp + lk);
        self.cand.push(NEW);
    }

    fn place<R: Rng + ?Sized>(&mut self, g: usize, i: usize, rng: &mut R) {
        let row = std::mem::take(&mut self.data[g][i]);
        self.fill_weights(g, Some(&row));
        self.data[g][i] = row;
        let total = log_sum_exp(&self.ln_w);
        self.ln_pred[g][i] = total - log_sum_exp(&self.ln_prior);
        let pick = sample_log_weights(&self.ln_w, total, rng);
        let c = match self.cand[pick] {
            NEW => self.open_cluster(),
            c => c,
        };
        self.insert(g, i, c, rng);
    }

    /// Removes empty clusters and relabels by first appearance, group by group.
    fn compact(&mut self) {
        let st = &mut self.state;
        let k = st.counts.len();
        let mut map = vec![NEW; k];
        let mut order = Vec::with_capacity(k);
        for labels in &st.labels {
            for &l in labels {
                if map[l] == NEW {
                    map[l] = order.len();
                    order.push(l);
                }
            }
        }
        for labels in &mut st.labels {
            for l in labels.iter_mut() {
                *l = map[*l];
            }
        }
        let mut counts: Vec<Option<Vec<usize>>> = std::mem::take(&mut st.counts).into_iter().map(Some).collect();
        let mut stats: Vec<Option<M::Stats>> = std::mem::take(&mut st.stats).into_iter().map(Some).collect();
        st.counts = order.iter().map(|&c| counts[c].take().expect("each cluster moved once")).collect();
        st.stats = order.iter().map(|&c| stats[c].take().expect("each cluster moved once")).collect();
        st.ln_tau = st.counts.iter().map(|n| st.spec.ln_tau_vec(n, &st.u)).collect();
        self.free.clear();
    }

    /// Metropolis–Hastings move between a pair of one-sided clusters (one per
    /// group) and a single shared cluster keeping both atoms' own sides.
    fn merge_split<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let st = &self.state;
        let live = |c: &Vec<usize>| c.iter().any(|&n| n > 0);
        let only = |g: usize| -> Vec<usize> {
            (0..st.counts.len()).filter(|&c| st.counts[c][g] > 0 && st.counts[c][1 - g] == 0).collect()
        };
        let (k0, k1) = (only(0), only(1));
        let shared: Vec<usize> =
            (0..st.counts.len()).filter(|&c| live(&st.counts[c]) && st.counts[c].iter().all(|&n| n > 0)).collect();
        let spec = st.spec;
        let ln_theta = spec.theta.ln();
        if rng.random::<f64>() < 0.5 {
            if k0.is_empty() || k1.is_empty() {
                return;
            }
            let a = k0[rng.random_range(0..k0.len())];
            let b = k1[rng.random_range(0..k1.len())];
            let Some((merged, ratio)) = self.model.merge_sides(&st.stats[a], &st.stats[b]) else {
                return;
            };
            let joint = vec![st.counts[a][0], st.counts[b][1]];
            let ln_r = spec.ln_tau_vec(&joint, &st.u) - ln_theta - st.ln_tau[a] - st.ln_tau[b]
                + ratio
                + ((k0.len() * k1.len()) as f64).ln()
                - ((shared.len() + 1) as f64).ln();
            if accept(ln_r, rng) {
                let st = &mut self.state;
                for l in st.labels[1].iter_mut().filter(|l| **l == b) {
                    *l = a;
                }
                st.ln_tau[a] = spec.ln_tau_vec(&joint, &st.u);
                st.counts[a] = joint;
                st.stats[a] = merged;
                st.counts[b] = vec![0, 0];
                st.stats[b] = self.model.empty_stats();
                st.ln_tau[b] = f64::NAN;
                self.free.push(b);
            }
        } else {
            if shared.is_empty() {
                return;
            }
            let c = shared[rng.random_range(0..shared.len())];
            let Some((part0, part1, ratio)) = self.model.split_sides(&st.stats[c], rng) else {
                return;
            };
            let (n0, n1) = (vec![st.counts[c][0], 0], vec![0, st.counts[c][1]]);
            let (t0, t1) = (spec.ln_tau_vec(&n0, &st.u), spec.ln_tau_vec(&n1, &st.u));
            let ln_r = ln_theta + t0 + t1 - st.ln_tau[c] + ratio + (shared.len() as f64).ln()
                - (((k0.len() + 1) * (k1.len() + 1)) as f64).ln();
            if accept(ln_r, rng) {
                let d = self.open_cluster();
                let st = &mut self.state;
                for l in st.labels[1].iter_mut().filter(|l| **l == c) {
                    *l = d;
                }
                st.counts[c] = n0;
                st.stats[c] = part0;
                st.ln_tau[c] = t0;
                st.counts[d] = n1;
                st.stats[d] = part1;
                st.ln_tau[d] = t1;
            }
        }
    }

    fn ln_u_target(&self, u: &[f64], spec: &LevySpec) -> f64 {
        let st = &self.state;
        let mut t = -spec.psi_b_unchecked(u);
        for (g, &ug) in u.iter().enumerate() {
            let n = st.labels[g].len();
            if n > 0 {
                // (n_g - 1) log u_g plus the log-scale Jacobian.
                t += n as f64 * ug.ln();
            }
        }
        for c in &st.counts {
            t += spec.ln_tau_vec(c, u);
        }
        t
    }

    /// One update of `U` targeting `∏ u_g^{n_g-1} ∏_c τ(n_c, u) e^{-ψ_b(u)}`.
    pub fn update_u<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let occupied: Vec<usize> = (0..self.data.len()).filter(|&g| !self.data[g].is_empty()).collect();
        let spec = self.state.spec;
        match self.u_update {
            UUpdate::ExactGamma => {
                let total: usize = occupied.iter().map(|&g| self.data[g].len()).sum();
                let b: f64 = Beta::new(total as f64, spec.theta).expect("positive parameters").sample(rng);
                let s = b / (1.0 - b);
                let draws: Vec<f64> = occupied
                    .iter()
                    .map(|&g| Gamma::new(self.data[g].len() as f64, 1.0).expect("positive shape").sample(rng))
                    .collect();
                let sum: f64 = draws.iter().sum();
                for (&g, d) in occupied.iter().zip(draws) {
                    self.state.u[g] = s * d / sum;
                }
            }
            UUpdate::Metropolis => {
                let mut cur = self.ln_u_target(&self.state.u, &spec);
                let mut prop = self.state.u.clone();
                for &g in &occupied {
                    prop.copy_from_slice(&self.state.u);
                    prop[g] *= (self.u_scales[g].step() * rng.sample::<f64, _>(StandardNormal)).exp();
                    let t = self.ln_u_target(&prop, &spec);
                    let ok = accept(t - cur, rng);
                    if ok {
                        self.state.u.copy_from_slice(&prop);
                        cur = t;
                    }
                    self.u_scales[g].record(ok);
                }
                prop.copy_from_slice(&self.state.u);
                let shift = (self.u_joint.step() * rng.sample::<f64, _>(StandardNormal)).exp();
                for &g in &occupied {
                    prop[g] *= shift;
                }
                let t = self.ln_u_target(&prop, &spec);
                let ok = accept(t - cur, rng);
                if ok {
                    self.state.u.copy_from_slice(&prop);
                }
                self.u_joint.record(ok);
            }
        }
        let st = &mut self.state;
        for (c, lt) in st.counts.iter().zip(st.ln_tau.iter_mut()) {
            *lt = st.spec.ln_tau_vec(c, &st.u);
        }
    }

    fn update_theta<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let Some(prior) = self.priors.theta else { return };
        let k = self.state.counts.len() as f64;
        let u = self.state.u.clone();
        let spec = self.state.spec;
        let target = |th: f64| {
            (prior.shape + k) * th.ln() - prior.rate * th - spec.with_theta(th).psi_b_unchecked(&u)
        };
        let th = spec.theta;
        let prop = th * (self.theta_scale.step() * rng.sample::<f64, _>(StandardNormal)).exp();
        let ok = accept(target(prop) - target(th), rng);
        if ok {
            self.state.spec = spec.with_theta(prop);
        }
        self.theta_scale.record(ok);
    }

    fn update_z<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if !self.priors.z_uniform {
            return;
        }
        let spec = self.state.spec;
        let target = |z: f64| {
            let s = spec.with_z(z);
            let mut t = -s.psi_b_unchecked(&self.state.u);
            for c in &self.state.counts {
                t += s.ln_tau_vec(c, &self.state.u);
            }
            t
        };
        let prop = reflect(spec.z + self.z_scale.step() * rng.sample::<f64, _>(StandardNormal), 0.0, 1.0);
        let ok = accept(target(prop) - target(spec.z), rng);
        if ok {
            self.state.spec = spec.with_z(prop);
            let st = &mut self.state;
            for (c, lt) in st.counts.iter().zip(st.ln_tau.iter_mut()) {
                *lt = st.spec.ln_tau_vec(c, &st.u);
            }
        }
        self.z_scale.record(ok);
    }

    /// Normalized weights for the next observation of group `g`, before
    /// seeing its value.
    pub fn predictive_weights(&mut self, g: usize) -> PredictiveWeights {
        self.fill_weights(g, None);
        let total = log_sum_exp(&self.ln_w);
        let mut clusters = Vec::with_capacity(self.cand.len());
        let mut base = 0.0;
        for (&c, &w) in self.cand.iter().zip(&self.ln_w) {
            let p = (w - total).exp();
            if c == NEW {
                base = p;
            } else {
                clusters.push((c, self.state.kind(c, g), p));
            }
        }
        PredictiveWeights { base, clusters }
    }

    /// Conditional predictive density of a new scalar observation of group
    /// `g` at each grid point.
    pub fn predictive_density(&mut self, g: usize, grid: &[f64]) -> Vec<f64> {
        let w = self.predictive_weights(g);
        grid.iter()
            .map(|&x| {
                let mut d = w.base * self.model.ln_pred_new(g, &[x]).exp();
                for &(c, _, p) in &w.clusters {
                    d += p * self.model.ln_pred_join(&self.state.stats[c], g, &[x]).exp();
                }
                d
            })
            .collect()
    }

    pub fn trace_row(&self) -> TraceRow {
        let st = &self.state;
        let (rhos, variances) = self.model.hyper_values();
        TraceRow {
            iteration: st.iteration,
            n_clusters: st.n_clusters(),
            group_clusters: (0..st.n_groups()).map(|g| st.group_clusters(g)).collect(),
            shared: st.n_shared(),
            u: st.u.clone(),
            theta: st.spec.theta,
            z: st.spec.z,
            rhos,
            variances,
        }
    }
}

fn accept<R: Rng + ?Sized>(ln_ratio: f64, rng: &mut R) -> bool {
    ln_ratio >= 0.0 || rng.random::<f64>().ln() < ln_ratio
}

/// Index drawn with probability proportional to `exp(ln_w)`; `total` is the
/// log of the sum.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(ln_w: &[f64], total: f64, rng: &mut R) -> usize {
    let mut target: f64 = rng.random::<f64>();
    for (k, &w) in ln_w.iter().enumerate() {
        target -= (w - total).exp();
        if target < 0.0 {
            return k;
        }
    }
    ln_w.iter().rposition(|w| w.is_finite()).unwrap_or(ln_w.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::{beta_closed, gamma_closed};
    use crate::latent::{labels_to_structure, validate};
    use crate::samplers::GaussianAtoms;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_group_model(rho: f64) -> GaussianAtoms {
        GaussianAtoms::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![rho], vec![1.0, 1.0], vec![vec![0], vec![1]]).unwrap()
    }

    fn toy_data() -> Vec<Vec<Vec<f64>>> {
        vec![
            vec![vec![2.0], vec![2.2], vec![-1.0], vec![2.1]],
            vec![vec![-2.0], vec![-2.1], vec![0.5]],
        ]
    }

    #[test]
    fn weights_are_normalized_and_match_crp_for_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = LevySpec::gamma(1.5).unwrap();
        let mut s = MixtureSampler::new(spec, two_group_model(0.3), toy_data(), HyperPriors::default(), &mut rng).unwrap();
        for _ in 0..5 {
            s.sweep(&mut rng);
        }
        for g in 0..2 {
            let w = s.predictive_weights(g);
            assert!((w.total() - 1.0).abs() < 1e-12);
            assert!(w.base >= 0.0 && w.clusters.iter().all(|c| c.2 >= 0.0));
            // Gamma equal jumps: weights are n_c/(N+θ) and θ/(N+θ) whatever U is.
            let n_total = 7.0;
            assert!((w.base - 1.5 / (n_total + 1.5)).abs() < 1e-12);
            for &(c, _, p) in &w.clusters {
                let n: usize = s.state.counts[c].iter().sum();
                assert!((p - n as f64 / (n_total + 1.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn side_merge_split_keeps_the_posterior() {
        // Same chain with and without the merge/split move: mean numbers of
        // clusters and shared clusters must agree.
        use crate::base_measure::NigParams;
        use crate::eval::batch_means_se;
        use crate::samplers::NigAtoms;
        let data = vec![
            vec![vec![-1.0], vec![-0.8], vec![1.2]],
            vec![vec![0.9], vec![1.1], vec![-1.0]],
        ];
        let run = |moves: usize, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = NigAtoms::new([0.0, 0.0], NigParams::symmetric(1.0, 2.0, 1.0), -0.8, vec![0, 1], true).unwrap();
            let spec = LevySpec::additive(1.0, 0.5).unwrap();
            let mut s = MixtureSampler::new(spec, model, data.clone(), HyperPriors::default(), &mut rng).unwrap();
            s.side_moves = moves;
            let (mut k, mut sh) = (Vec::new(), Vec::new());
            for _ in 0..100_000 {
                s.sweep(&mut rng);
                k.push(s.state.n_clusters() as f64);
                sh.push(s.state.n_shared() as f64);
            }
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            (m(&k), batch_means_se(&k, 50).unwrap(), m(&sh), batch_means_se(&sh, 50).unwrap())
        };
        let a = run(0, 11);
        let b = run(10, 12);
        assert!((a.0 - b.0).abs() < 4.0 * (a.1 * a.1 + b.1 * b.1).sqrt(), "{a:?} {b:?}");
        assert!((a.2 - b.2).abs() < 4.0 * (a.3 * a.3 + b.3 * b.3).sqrt(), "{a:?} {b:?}");
    }

    #[test]
    fn additive_with_z_one_never_shares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = LevySpec::additive(1.0, 1.0).unwrap();
        let mut s = MixtureSampler::new(spec, two_group_model(0.9), toy_data(), HyperPriors::default(), &mut rng).unwrap();
        for _ in 0..50 {
            s.sweep(&mut rng);
            assert_eq!(s.state.n_shared(), 0);
            let w = s.predictive_weights(0);
            assert_eq!(w.kind_total(ClusterKind::Other), 0.0);
        }
    }

    #[test]
    fn sweeps_keep_compatible_structures_and_consistent_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = LevySpec::additive(1.0, 0.4).unwrap();
        let priors = HyperPriors { z_uniform: true, rho_uniform: true, theta: Some(crate::samplers::GammaPrior::new(1.0, 1.0)), kernel_var: None };
        let mut s = MixtureSampler::new(spec, two_group_model(0.0), toy_data(), priors, &mut rng).unwrap();
        for _ in 0..100 {
            s.sweep(&mut rng);
            let l = s.state.label_arrays().unwrap();
            validate(&labels_to_structure(&l)).unwrap();
            let mut counts = vec![vec![0; 2]; s.state.counts.len()];
            for g in 0..2 {
                for &c in &s.state.labels[g] {
                    counts[c][g] += 1;
                }
            }
            assert_eq!(counts, s.state.counts);
            assert!(s.state.u.iter().all(|&u| u > 0.0));
            assert!(s.state.spec.z >= 0.0 && s.state.spec.z <= 1.0);
        }
    }

    #[test]
    fn exact_u_matches_metropolis_in_mean() {
        // Single group of size 3, one cluster: U has density u^2 (1+u)^{-3-θ}.
        // With θ = 3 the mean is n/(θ-1) = 1.5.
        let spec = LevySpec::gamma(3.0).unwrap();
        let model = GaussianAtoms::new(vec![0.0], vec![1.0], vec![], vec![1.0], vec![vec![0]]).unwrap();
        let data = vec![vec![vec![0.0], vec![0.1], vec![0.2]]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = MixtureSampler::from_labels(spec, model, data, &[vec![0, 0, 0]], vec![1.0], HyperPriors::default(), &mut rng)
            .unwrap();
        let mut exact = s.clone().with_u_update(UUpdate::ExactGamma).unwrap();
        let (mut a, mut b) = (0.0, 0.0);
        let n = 40_000;
        for _ in 0..2000 {
            s.update_u(&mut rng);
        }
        for _ in 0..n {
            s.update_u(&mut rng);
            exact.update_u(&mut rng);
            a += s.state.u[0];
            b += exact.state.u[0];
        }
        assert!((b / n as f64 - 1.5).abs() < 0.05, "exact mean {}", b / n as f64);
        assert!((a / n as f64 - 1.5).abs() < 0.15, "metropolis mean {}", a / n as f64);
    }

    #[test]
    fn prior_sweeps_tie_with_probability_beta_and_gamma() {
        // No likelihood: two X observations tie with probability β, one X
        // and one Y with probability γ.
        use crate::samplers::NoLikelihood;
        let spec = LevySpec::additive(1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = NoLikelihood { groups: 2 };
        let mut within = MixtureSampler::new(spec, model, NoLikelihood::data(&[2, 0]), HyperPriors::default(), &mut rng).unwrap();
        let mut across = MixtureSampler::new(spec, model, NoLikelihood::data(&[1, 1]), HyperPriors::default(), &mut rng).unwrap();
        let n = 100_000;
        let (mut w, mut a) = (0.0, 0.0);
        for _ in 0..n {
            within.sweep(&mut rng);
            across.sweep(&mut rng);
            w += (within.state.n_clusters() == 1) as u8 as f64;
            a += (across.state.n_shared() == 1) as u8 as f64;
        }
        let beta = beta_closed(&spec).unwrap();
        let gamma = gamma_closed(&spec).unwrap();
        assert!((w / n as f64 - beta).abs() < 0.01, "{} vs {beta}", w / n as f64);
        assert!((a / n as f64 - gamma).abs() < 0.01, "{} vs {gamma}", a / n as f64);
    }

    #[test]
    fn from_labels_rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = LevySpec::gamma(1.0).unwrap();
        let r = MixtureSampler::from_labels(spec, two_group_model(0.0), toy_data(), &[vec![0; 4]], vec![1.0, 1.0], HyperPriors::default(), &mut rng);
        assert!(r.is_err());
    }
}
