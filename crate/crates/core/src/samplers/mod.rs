//! Posterior and predictive sampling: the marginal mixture Gibbs sampler for
//! any number of groups, the blocked stick-breaking sampler, Ferguson–Klass
//! draws of the random measures, and trace output.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub mod adapt;
pub mod blocked;
pub mod fk;
pub mod gaussian;
pub mod mixture;
pub mod nig;
pub mod prior;
pub mod trace;

pub use blocked::{BlockedGibbs, BlockedState};
pub use fk::{ferguson_klass_draw, FkContext, FkDraw};
pub use gaussian::{GaussStats, GaussianAtoms};
pub use mixture::{ClusterKind, MixtureSampler, PosteriorState, PredictiveWeights, UUpdate};
pub use nig::{NigAtoms, NigStats};
pub use prior::NoLikelihood;
pub use trace::{TraceRow, TraceWriter};

/// Gamma prior with shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Which hyperparameters are updated, and under which priors. Anything left
/// unset stays fixed at its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperPriors {
    /// Gamma prior on the total mass `θ`.
    #[serde(default)]
    pub theta: Option<GammaPrior>,
    /// Uniform prior on the additive weight `z`.
    #[serde(default)]
    pub z_uniform: bool,
    /// Uniform prior on the base-measure correlations, truncated to positive
    /// definite matrices.
    #[serde(default)]
    pub rho_uniform: bool,
    /// Gamma prior on each kernel variance (Gaussian kernels with shared
    /// per-coordinate variance).
    #[serde(default)]
    pub kernel_var: Option<GammaPrior>,
}

/// A conjugate kernel/base pair as seen by the mixture sampler: predictive
/// densities for joining an existing cluster or opening a new one, plus the
/// bookkeeping to move observations between clusters.
pub trait AtomModel: Clone + Send + Sync {
    type Stats: Clone + Send + Sync + std::fmt::Debug;

    fn n_groups(&self) -> usize;

    /// Number of values in an observation from group `g`.
    fn row_len(&self, g: usize) -> usize;

    fn empty_stats(&self) -> Self::Stats;

    /// `log ∫ f(row | x) P_g(dx)` under the base measure's marginal for group `g`.
    fn ln_pred_new(&self, g: usize, row: &[f64]) -> f64;

    /// Log density of `row` given the cluster's current members (or atom).
    fn ln_pred_join(&self, stats: &Self::Stats, g: usize, row: &[f64]) -> f64;

    fn add<R: Rng + ?Sized>(&self, stats: &mut Self::Stats, g: usize, row: &[f64], rng: &mut R);

    fn remove(&self, stats: &mut Self::Stats, g: usize, row: &[f64]);

    /// Redraws any materialized atom from its full conditional.
    fn refresh<R: Rng + ?Sized>(&self, stats: &mut Self::Stats, rng: &mut R);

    fn update_hyper<R: Rng + ?Sized>(&mut self, clusters: &mut [Self::Stats], priors: &HyperPriors, rng: &mut R);

    /// Current base-measure correlations and kernel (or atom) variances, for traces.
    fn hyper_values(&self) -> (Vec<f64>, Vec<f64>);

    fn freeze_adaptation(&mut self);

    /// Joins a cluster with members on one side only and a cluster with
    /// members on the other side only into one shared atom that keeps each
    /// cluster's own side. Returns the merged statistics and the log ratio
    /// of the base density of the joined atom to the product of the two
    /// side marginals. `None` when the model has no such move.
    fn merge_sides(&self, _a: &Self::Stats, _b: &Self::Stats) -> Option<(Self::Stats, f64)> {
        None
    }

    /// Inverse of [`AtomModel::merge_sides`]: splits a shared cluster by
    /// side, drawing each part's companion from the base conditional.
    fn split_sides<R: Rng + ?Sized>(
        &self,
        _c: &Self::Stats,
        _rng: &mut R,
    ) -> Option<(Self::Stats, Self::Stats, f64)> {
        None
    }
}
