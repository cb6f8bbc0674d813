//! An atom model without likelihood, for simulating the latent partition
//! and `U` under the prior.

use rand::Rng;

use crate::samplers::{AtomModel, HyperPriors};

/// Every observation is an empty row and every predictive density is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoLikelihood {
    pub groups: usize,
}

impl NoLikelihood {
    /// Empty rows for the given group sizes.
    pub fn data(sizes: &[usize]) -> Vec<Vec<Vec<f64>>> {
        sizes.iter().map(|&n| vec![Vec::new(); n]).collect()
    }
}

impl AtomModel for NoLikelihood {
    type Stats = ();

    fn n_groups(&self) -> usize {
        self.groups
    }

    fn row_len(&self, _g: usize) -> usize {
        0
    }

    fn empty_stats(&self) {}

    fn ln_pred_new(&self, _g: usize, _row: &[f64]) -> f64 {
        0.0
    }

    fn ln_pred_join(&self, _stats: &(), _g: usize, _row: &[f64]) -> f64 {
        0.0
    }

    fn add<R: Rng + ?Sized>(&self, _stats: &mut (), _g: usize, _row: &[f64], _rng: &mut R) {}

    fn remove(&self, _stats: &mut (), _g: usize, _row: &[f64]) {}

    fn refresh<R: Rng + ?Sized>(&self, _stats: &mut (), _rng: &mut R) {}

    fn update_hyper<R: Rng + ?Sized>(&mut self, _clusters: &mut [()], _priors: &HyperPriors, _rng: &mut R) {}

    fn hyper_values(&self) -> (Vec<f64>, Vec<f64>) {
        (Vec::new(), Vec::new())
    }

    fn freeze_adaptation(&mut self) {}
}
