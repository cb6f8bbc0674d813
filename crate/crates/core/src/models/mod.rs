//! Assembled model configurations: validation, wiring of spec, base measure,
//! kernel and sampler, and multi-chain runs that collect traces, density
//! grids, per-observation predictive ordinates and partitions.

pub mod data;
pub mod generators;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_measure::{BaseFamily, BaseMeasure, NigParams};
use crate::error::{invalid, FurbiError, Result};
use crate::levy::{LevyFamily, LevySpec};
use crate::samplers::{
    BlockedGibbs, GammaPrior, GaussianAtoms, HyperPriors, MixtureSampler, NigAtoms, TraceRow, UUpdate,
};

pub use data::{missing_pattern_split, recombine, standardize_columns, Dataset, Standardization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoSampleGaussianKnownVar,
    TwoSampleNig,
    MultiGroupGaussian,
    MissingDataClustering,
    /// All groups pooled into one exchangeable sample with a DP mixture.
    ExchangeableBaseline,
    /// An independent DP mixture per group.
    IndependentBaseline,
}

impl ModelKind {
    pub fn is_baseline(self) -> bool {
        matches!(self, ModelKind::ExchangeableBaseline | ModelKind::IndependentBaseline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// Gaussian kernel with a given variance per coordinate (the starting
    /// value when a kernel-variance prior is set).
    Gaussian { variance: f64 },
    /// Gaussian kernel whose mean and variance are both atom coordinates.
    GaussianNig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerChoice {
    #[default]
    Marginal,
    Blocked { truncation: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    /// Total sweeps, burn-in included.
    pub iters: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
}

fn one() -> usize {
    1
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { iters: 2000, burn_in: 500, thin: 1, seed: 0, chains: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub spec: LevySpec,
    pub g0: BaseMeasure,
    pub kernel: Kernel,
    #[serde(default)]
    pub hyperpriors: HyperPriors,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub sampler: SamplerChoice,
    #[serde(default)]
    pub u_update: UUpdate,
    /// Standardize each scalar group before fitting. Matrix inputs are
    /// standardized per column when they are read.
    #[serde(default)]
    pub standardize: bool,
}

impl ModelConfig {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.g0.validate()?;
        let m = &self.mcmc;
        if m.iters == 0 || m.burn_in >= m.iters {
            return Err(invalid("mcmc", "need iters > burn_in"));
        }
        if m.thin == 0 || m.chains == 0 {
            return Err(invalid("mcmc", "thin and chains must be positive"));
        }
        if let Kernel::Gaussian { variance } = self.kernel {
            if !(variance > 0.0 && variance.is_finite()) {
                return Err(invalid("kernel.variance", "must be positive"));
            }
        }
        for p in [self.hyperpriors.theta, self.hyperpriors.kernel_var].into_iter().flatten() {
            if !(p.shape > 0.0 && p.rate > 0.0) {
                return Err(invalid("hyperpriors", "gamma priors need positive shape and rate"));
            }
        }
        let nig = matches!(self.kernel, Kernel::GaussianNig);
        let family = self.g0.family;
        let ok = match self.model {
            ModelKind::TwoSampleGaussianKnownVar => !nig && family == BaseFamily::BivariateGaussian,
            ModelKind::TwoSampleNig => nig && family == BaseFamily::NormalInvGammaPair,
            ModelKind::MultiGroupGaussian => !nig && family == BaseFamily::MultivariateGaussianCorr,
            ModelKind::MissingDataClustering => !nig && family == BaseFamily::MissingDataDegenerate,
            ModelKind::ExchangeableBaseline | ModelKind::IndependentBaseline => {
                if nig {
                    family == BaseFamily::NormalInvGammaPair
                } else {
                    family != BaseFamily::NormalInvGammaPair
                }
            }
        };
        if !ok {
            return Err(FurbiError::Unsupported(format!(
                "{:?} with kernel {:?} and base measure {:?} is not a supported conjugate combination",
                self.model, self.kernel, family
            )));
        }
        if let SamplerChoice::Blocked { truncation } = self.sampler {
            if truncation < 1 {
                return Err(invalid("sampler.truncation", "needs at least one atom"));
            }
            if nig {
                return Err(FurbiError::Unsupported("the blocked sampler covers Gaussian kernels only".into()));
            }
            let gamma = self.spec.family == LevyFamily::GammaEqualJumps || self.model.is_baseline();
            if !gamma || self.hyperpriors.z_uniform {
                return Err(FurbiError::Unsupported("the blocked sampler covers gamma equal jumps only".into()));
            }
        }
        if self.u_update == UUpdate::ExactGamma && self.spec.family != LevyFamily::GammaEqualJumps && !self.model.is_baseline() {
            return Err(FurbiError::Unsupported("exact U draws need gamma equal jumps".into()));
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        data.validate()?;
        let g = data.n_groups();
        let scalar = data.groups.iter().flatten().all(|r| r.len() == 1);
        let dim = self.g0.latent_dim();
        match self.model {
            ModelKind::TwoSampleGaussianKnownVar | ModelKind::TwoSampleNig if g != 2 => {
                Err(FurbiError::Data(format!("two-sample model needs 2 groups, data has {g}")))
            }
            ModelKind::MultiGroupGaussian if g < 2 || g != dim => {
                Err(FurbiError::Data(format!("base measure has {dim} coordinates, data has {g} groups (need at least 2)")))
            }
            ModelKind::MissingDataClustering => match &data.patterns {
                None => Err(FurbiError::Data("missing-data clustering needs a missing-pattern split".into())),
                Some(p) if p.iter().flatten().any(|&j| j >= dim) => {
                    Err(FurbiError::Data(format!("observed columns exceed the base measure dimension {dim}")))
                }
                Some(_) => Ok(()),
            },
            ModelKind::MultiGroupGaussian => Ok(()),
            _ if !scalar => Err(FurbiError::Data(format!("{:?} needs scalar observations", self.model))),
            _ => Ok(()),
        }
    }
}

/// One sampler over some of the dataset's groups.
#[derive(Debug, Clone)]
pub enum Engine {
    Gauss(MixtureSampler<GaussianAtoms>),
    Nig(MixtureSampler<NigAtoms>),
    Blocked(BlockedGibbs),
}

impl Engine {
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self {
            Engine::Gauss(s) => s.sweep(rng),
            Engine::Nig(s) => s.sweep(rng),
            Engine::Blocked(s) => s.sweep(rng),
        }
    }

    pub fn trace_row(&self) -> TraceRow {
        match self {
            Engine::Gauss(s) => s.trace_row(),
            Engine::Nig(s) => s.trace_row(),
            Engine::Blocked(s) => s.trace_row(),
        }
    }

    /// Labels per group; equal labels across groups mean a shared atom.
    pub fn labels(&self) -> Vec<Vec<usize>> {
        match self {
            Engine::Gauss(s) => s.state.labels.clone(),
            Engine::Nig(s) => s.state.labels.clone(),
            Engine::Blocked(s) => s.state.labels.clone(),
        }
    }

    /// Per group, per observation: the log density used for predictive
    /// ordinates at the current state.
    pub fn ln_pred(&self) -> Vec<Vec<f64>> {
        match self {
            Engine::Gauss(s) => s.ln_predictive_last().to_vec(),
            Engine::Nig(s) => s.ln_predictive_last().to_vec(),
            Engine::Blocked(s) => s
                .data()
                .iter()
                .enumerate()
                .map(|(g, rows)| rows.iter().map(|r| s.ln_mixture_density(g, r)).collect())
                .collect(),
        }
    }

    pub fn density(&mut self, g: usize, grid: &[f64]) -> Vec<f64> {
        match self {
            Engine::Gauss(s) => s.predictive_density(g, grid),
            Engine::Nig(s) => s.predictive_density(g, grid),
            Engine::Blocked(s) => s.predictive_density(g, grid),
        }
    }
}

/// Where an original group lives: engine, group inside it, and offset of
/// its first observation within that engine group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub unit: usize,
    pub group: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct Runnable {
    pub units: Vec<Engine>,
    pub slots: Vec<Slot>,
    sizes: Vec<usize>,
}

impl Runnable {
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for u in &mut self.units {
            u.sweep(rng);
        }
    }

    pub fn traces(&self) -> Vec<TraceRow> {
        self.units.iter().map(|u| u.trace_row()).collect()
    }

    /// Cluster labels of all observations in dataset order. Labels of
    /// different engines never coincide.
    pub fn labels(&self) -> Vec<usize> {
        let per_unit: Vec<Vec<Vec<usize>>> = self.units.iter().map(|u| u.labels()).collect();
        let mut base = vec![0usize; self.units.len()];
        for k in 1..per_unit.len() {
            let max = per_unit[k - 1].iter().flatten().max().map_or(0, |m| m + 1);
            base[k] = base[k - 1] + max;
        }
        let mut out = Vec::with_capacity(self.sizes.iter().sum());
        for (s, &n) in self.slots.iter().zip(&self.sizes) {
            let l = &per_unit[s.unit][s.group];
            out.extend(l[s.offset..s.offset + n].iter().map(|&x| x + base[s.unit]));
        }
        out
    }

    /// Per-observation log predictive densities in dataset order.
    pub fn ln_pred(&self) -> Vec<f64> {
        let per_unit: Vec<Vec<Vec<f64>>> = self.units.iter().map(|u| u.ln_pred()).collect();
        let mut out = Vec::with_capacity(self.sizes.iter().sum());
        for (s, &n) in self.slots.iter().zip(&self.sizes) {
            out.extend_from_slice(&per_unit[s.unit][s.group][s.offset..s.offset + n]);
        }
        out
    }

    /// Predictive density of a new observation of original group `g` on the
    /// model's (possibly standardized) scale.
    pub fn density(&mut self, g: usize, grid: &[f64]) -> Vec<f64> {
        let s = self.slots[g];
        self.units[s.unit].density(s.group, grid)
    }
}

fn gaussian_kernel_var(kernel: &Kernel) -> f64 {
    match kernel {
        Kernel::Gaussian { variance } => *variance,
        Kernel::GaussianNig => 1.0,
    }
}

/// Wires a validated configuration and its data into samplers.
pub fn build<R: Rng + ?Sized>(config: &ModelConfig, data: &Dataset, rng: &mut R) -> Result<Runnable> {
    config.validate()?;
    config.check_data(data)?;
    let sizes = data.sizes();
    let kv = gaussian_kernel_var(&config.kernel);
    let mut priors = config.hyperpriors;
    let burn = config.mcmc.burn_in;
    let single_slots = |n: usize| (0..n).map(|g| Slot { unit: 0, group: g, offset: 0 }).collect::<Vec<_>>();

    if config.model.is_baseline() {
        priors.z_uniform = false;
        priors.rho_uniform = false;
        let dp = LevySpec::gamma(config.spec.theta)?;
        let pooled = config.model == ModelKind::ExchangeableBaseline;
        let parts: Vec<Vec<Vec<Vec<f64>>>> = if pooled {
            vec![vec![data.groups.iter().flatten().cloned().collect()]]
        } else {
            data.groups.iter().map(|g| vec![g.clone()]).collect()
        };
        let mut units = Vec::with_capacity(parts.len());
        for part in parts {
            units.push(single_dp(config, dp, part, priors, kv, rng)?);
        }
        let slots = if pooled {
            let mut off = 0;
            sizes
                .iter()
                .map(|&n| {
                    let s = Slot { unit: 0, group: 0, offset: off };
                    off += n;
                    s
                })
                .collect()
        } else {
            (0..sizes.len()).map(|g| Slot { unit: g, group: 0, offset: 0 }).collect()
        };
        return Ok(Runnable { units, slots, sizes });
    }

    let groups = data.groups.clone();
    let unit = match config.kernel {
        Kernel::GaussianNig => {
            let model = NigAtoms::from_base(&config.g0)?;
            let s = MixtureSampler::new(config.spec, model, groups, priors, rng)?.with_burn_in(burn);
            Engine::Nig(s.with_u_update(config.u_update)?)
        }
        Kernel::Gaussian { .. } => {
            let model = match config.model {
                ModelKind::MissingDataClustering => {
                    let g0 = &config.g0;
                    let d = g0.latent_dim();
                    let coords = data.patterns.clone().expect("checked above");
                    GaussianAtoms::new(g0.mean.clone(), g0.scale.clone(), g0.upper_rhos(), vec![kv; d], coords)?
                }
                _ => GaussianAtoms::from_base(&config.g0, kv, groups.len())?,
            };
            match config.sampler {
                SamplerChoice::Blocked { truncation } => Engine::Blocked(
                    BlockedGibbs::new(config.spec.theta, model, groups, truncation, priors, rng)?.with_burn_in(burn),
                ),
                SamplerChoice::Marginal => {
                    let s = MixtureSampler::new(config.spec, model, groups, priors, rng)?.with_burn_in(burn);
                    Engine::Gauss(s.with_u_update(config.u_update)?)
                }
            }
        }
    };
    Ok(Runnable { units: vec![unit], slots: single_slots(sizes.len()), sizes })
}

fn single_dp<R: Rng + ?Sized>(
    config: &ModelConfig,
    dp: LevySpec,
    part: Vec<Vec<Vec<f64>>>,
    priors: HyperPriors,
    kv: f64,
    rng: &mut R,
) -> Result<Engine> {
    let g0 = &config.g0;
    let burn = config.mcmc.burn_in;
    Ok(match config.kernel {
        Kernel::GaussianNig => {
            let nig = g0.nig.ok_or_else(|| invalid("g0", "needs NIG hyperparameters"))?;
            let model = NigAtoms::single(g0.mean[0], nig)?;
            Engine::Nig(MixtureSampler::new(dp, model, part, priors, rng)?.with_burn_in(burn).with_u_update(config.u_update)?)
        }
        Kernel::Gaussian { .. } => {
            let model = GaussianAtoms::new(vec![g0.mean[0]], vec![g0.scale[0]], vec![], vec![kv], vec![vec![0]])?;
            match config.sampler {
                SamplerChoice::Blocked { truncation } => {
                    Engine::Blocked(BlockedGibbs::new(dp.theta, model, part, truncation, priors, rng)?.with_burn_in(burn))
                }
                SamplerChoice::Marginal => Engine::Gauss(
                    MixtureSampler::new(dp, model, part, priors, rng)?.with_burn_in(burn).with_u_update(config.u_update)?,
                ),
            }
        }
    })
}

/// What a run records at every kept iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Grid on the raw data scale for predictive densities of scalar groups.
    pub grid: Option<Vec<f64>>,
    /// Groups whose densities are recorded (all when empty).
    #[serde(default)]
    pub density_groups: Vec<usize>,
    #[serde(default)]
    pub partitions: bool,
    #[serde(default)]
    pub ln_pred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainOutput {
    pub chain: usize,
    /// Per kept iteration, one row per engine.
    pub traces: Vec<Vec<TraceRow>>,
    /// Per recorded group, per kept iteration: density on the raw scale.
    pub density: Vec<Vec<Vec<f64>>>,
    /// Per kept iteration, per observation in dataset order.
    pub ln_pred: Vec<Vec<f64>>,
    pub partitions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub grid: Option<Vec<f64>>,
    pub density_groups: Vec<usize>,
    pub transform: Option<Standardization>,
    pub chains: Vec<ChainOutput>,
}

impl RunOutput {
    /// Kept iterations of every chain, concatenated.
    pub fn pooled_partitions(&self) -> Vec<Vec<usize>> {
        self.chains.iter().flat_map(|c| c.partitions.iter().cloned()).collect()
    }

    pub fn pooled_ln_pred(&self) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.ln_pred.iter().cloned()).collect()
    }

    /// Density draws of the `k`-th recorded group from every chain.
    pub fn pooled_density(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.density[k].iter().cloned()).collect()
    }
}

/// Applies the configured preprocessing.
pub fn prepare(config: &ModelConfig, data: Dataset) -> Result<Dataset> {
    if config.standardize && data.transform.is_none() && data.patterns.is_none() {
        data.standardize_groups()
    } else {
        Ok(data)
    }
}

/// Random stream of chain `chain` for a seed.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs one chain on prepared data.
pub fn run_chain(config: &ModelConfig, data: &Dataset, options: &RunOptions, chain: usize) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.mcmc.seed, chain);
    let mut runnable = build(config, data, &mut rng)?;
    let groups = density_groups(options, data);
    let scaled: Vec<(Vec<f64>, f64)> = match &options.grid {
        Some(grid) => groups
            .iter()
            .map(|&g| match &data.transform {
                Some(t) if data.patterns.is_none() => {
                    (grid.iter().map(|&x| (x - t.center[g]) / t.scale[g]).collect(), t.density_factor(g))
                }
                _ => (grid.clone(), 1.0),
            })
            .collect(),
        None => Vec::new(),
    };
    let m = &config.mcmc;
    let kept = (m.iters - m.burn_in).div_ceil(m.thin);
    let mut out = ChainOutput {
        chain,
        traces: Vec::with_capacity(kept),
        density: vec![Vec::with_capacity(kept); scaled.len()],
        ln_pred: Vec::new(),
        partitions: Vec::new(),
    };
    for it in 0..m.iters {
        runnable.sweep(&mut rng);
        if it < m.burn_in || (it - m.burn_in) % m.thin != 0 {
            continue;
        }
        out.traces.push(runnable.traces());
        for (k, (&g, (grid, factor))) in groups.iter().zip(&scaled).enumerate() {
            let d = runnable.density(g, grid);
            out.density[k].push(d.into_iter().map(|v| v * factor).collect());
        }
        if options.ln_pred {
            out.ln_pred.push(runnable.ln_pred());
        }
        if options.partitions {
            out.partitions.push(runnable.labels());
        }
    }
    Ok(out)
}

fn density_groups(options: &RunOptions, data: &Dataset) -> Vec<usize> {
    if options.grid.is_none() || data.groups.iter().flatten().any(|r| r.len() != 1) {
        return Vec::new();
    }
    if options.density_groups.is_empty() {
        (0..data.n_groups()).collect()
    } else {
        options.density_groups.clone()
    }
}

/// Prepares the data and runs all chains in parallel.
pub fn run(config: &ModelConfig, data: Dataset, options: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let data = prepare(config, data)?;
    if options.density_groups.iter().any(|&g| g >= data.n_groups()) {
        return Err(invalid("density_groups", "refers to a group that does not exist"));
    }
    if let Some(grid) = &options.grid {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid", "must be strictly increasing with at least two points"));
        }
    }
    let chains = (0..config.mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(config, &data, options, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        grid: options.grid.clone(),
        density_groups: density_groups(options, &data),
        transform: data.transform.clone(),
        chains,
    })
}

/// Configurations of the bundled experiments.
pub mod presets {
    use super::*;

    /// Two Gaussian samples with known unit kernel variance and a DP(1)
    /// marginal with `N(0, 1)` atoms. The dependent version uses equal jumps
    /// and `ρ₀ ~ Unif(-1, 1)`.
    pub fn two_sample_gaussian(model: ModelKind) -> ModelConfig {
        ModelConfig {
            model,
            spec: LevySpec::gamma(1.0).expect("valid"),
            g0: BaseMeasure::bivariate(0.0, 1.0, 0.0).expect("valid"),
            kernel: Kernel::Gaussian { variance: 1.0 },
            hyperpriors: HyperPriors { rho_uniform: model == ModelKind::TwoSampleGaussianKnownVar, ..Default::default() },
            mcmc: McmcConfig::default(),
            sampler: SamplerChoice::Marginal,
            u_update: UUpdate::Metropolis,
            standardize: false,
        }
    }

    /// Three Gaussian samples sharing atoms through a trivariate base measure
    /// with free correlations.
    pub fn three_group() -> ModelConfig {
        ModelConfig {
            model: ModelKind::MultiGroupGaussian,
            g0: BaseMeasure::multivariate(3, 0.0, 1.0, &[0.0, 0.0, 0.0]).expect("valid"),
            hyperpriors: HyperPriors { rho_uniform: true, ..Default::default() },
            ..two_sample_gaussian(ModelKind::TwoSampleGaussianKnownVar)
        }
    }

    /// Location-scale mixtures for two standardized samples: additive jumps
    /// with `z ~ Unif(0, 1)`, `θ ~ Gamma(1, 1)`, NIG atoms with
    /// `λ = 1, α = 2, β = 4`. `rho0 = None` puts a uniform prior on `ρ₀`.
    pub fn paired_nig(model: ModelKind, rho0: Option<f64>) -> ModelConfig {
        let dependent = !model.is_baseline();
        ModelConfig {
            model,
            spec: LevySpec::additive(1.0, 0.5).expect("valid"),
            g0: BaseMeasure::nig_pair(0.0, rho0.unwrap_or(0.0), NigParams::symmetric(1.0, 2.0, 4.0)).expect("valid"),
            kernel: Kernel::GaussianNig,
            hyperpriors: HyperPriors {
                theta: Some(GammaPrior::new(1.0, 1.0)),
                z_uniform: dependent,
                rho_uniform: dependent && rho0.is_none(),
                kernel_var: None,
            },
            mcmc: McmcConfig::default(),
            sampler: SamplerChoice::Marginal,
            u_update: UUpdate::Metropolis,
            standardize: true,
        }
    }

    /// Clustering of `columns`-variate standardized data split by missing
    /// pattern: equal gamma jumps with `θ = 0.1`, unit-scale atoms with free
    /// correlations and `Gamma(3, 3)` priors on the kernel variances.
    pub fn missing_data(columns: usize) -> ModelConfig {
        let rhos = vec![0.0; columns * (columns - 1) / 2];
        ModelConfig {
            model: ModelKind::MissingDataClustering,
            spec: LevySpec::gamma(0.1).expect("valid"),
            g0: BaseMeasure::missing_data(vec![0.0; columns], vec![1.0; columns], &rhos).expect("valid"),
            kernel: Kernel::Gaussian { variance: 1.0 },
            hyperpriors: HyperPriors {
                theta: None,
                z_uniform: false,
                rho_uniform: true,
                kernel_var: Some(GammaPrior::new(3.0, 3.0)),
            },
            mcmc: McmcConfig::default(),
            sampler: SamplerChoice::Marginal,
            u_update: UUpdate::Metropolis,
            standardize: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn small(mut c: ModelConfig) -> ModelConfig {
        c.mcmc = McmcConfig { iters: 30, burn_in: 10, thin: 2, seed: 5, chains: 2 };
        c
    }

    #[test]
    fn unsupported_pairs_are_rejected() {
        let mut c = presets::two_sample_gaussian(ModelKind::TwoSampleGaussianKnownVar);
        c.kernel = Kernel::GaussianNig;
        assert!(matches!(c.validate(), Err(FurbiError::Unsupported(_))));
        let mut c = presets::paired_nig(ModelKind::TwoSampleNig, None);
        c.sampler = SamplerChoice::Blocked { truncation: 10 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn two_sample_models_need_two_groups() {
        let c = presets::two_sample_gaussian(ModelKind::TwoSampleGaussianKnownVar);
        let d = Dataset::from_samples(vec![vec![1.0], vec![2.0], vec![3.0]]);
        assert!(build(&c, &d, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn runs_are_deterministic_and_shaped() {
        let c = small(presets::two_sample_gaussian(ModelKind::TwoSampleGaussianKnownVar));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = generators::two_sample_density(-10.0, 5, 8, &mut rng);
        let opts = RunOptions { grid: Some(vec![-1.0, 0.0, 1.0]), density_groups: vec![0], partitions: true, ln_pred: true };
        let a = run(&c, d.clone(), &opts).unwrap();
        let b = run(&c, d, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chains.len(), 2);
        assert_eq!(a.chains[0].traces.len(), 10);
        assert_eq!(a.chains[0].density[0][0].len(), 3);
        assert_eq!(a.chains[0].partitions[0].len(), 13);
        assert!(a.pooled_ln_pred().iter().flatten().all(|v| v.is_finite()));
        assert_ne!(a.chains[0].traces, a.chains[1].traces);
    }

    #[test]
    fn independent_baseline_labels_never_cross_groups() {
        let c = small(presets::two_sample_gaussian(ModelKind::IndependentBaseline));
        let d = Dataset::from_samples(vec![vec![0.0, 0.1], vec![0.0, 0.2, 0.1]]);
        let mut r = build(&c, &d, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for _ in 0..5 {
            r.sweep(&mut ChaCha8Rng::seed_from_u64(3));
            let l = r.labels();
            assert!(l[..2].iter().all(|a| !l[2..].contains(a)));
        }
    }

    #[test]
    fn config_round_trips_through_serde() {
        let c = presets::missing_data(3);
        let s = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }
}
