//! Hyper-tie structures: partial matchings between the distinct values of two
//! samples, and their label-array encoding.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::base_measure::{BaseFamily, BaseMeasure};
use crate::error::{FurbiError, Result};
use crate::levy::LevySpec;
use crate::quadrature::{integrate_half_line, integrate_posneg_2d, QuadratureConfig};

/// Largest number of structures [`enumerate_structures`] will produce.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// A compatible hyper-tie structure. Index 0 stands for "no partner";
/// distinct values are numbered from 1. Pairs are kept sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HyperTieState {
    pub k: usize,
    pub c: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Multiplicity of each X value (length `k`), if known.
    pub n: Vec<usize>,
    /// Multiplicity of each Y value (length `c`), if known.
    pub m: Vec<usize>,
}

impl HyperTieState {
    pub fn new(k: usize, c: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        Self {
            k,
            c,
            pairs,
            n: Vec::new(),
            m: Vec::new(),
        }
    }

    pub fn with_multiplicities(mut self, n: Vec<usize>, m: Vec<usize>) -> Self {
        self.n = n;
        self.m = m;
        self
    }

    /// Pairs with both coordinates present.
    pub fn tied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied().filter(|&(i, j)| i != 0 && j != 0)
    }

    pub fn x_only(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().filter(|p| p.1 == 0).map(|p| p.0)
    }

    pub fn y_only(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().filter(|p| p.0 == 0).map(|p| p.1)
    }

    pub fn n_tied(&self) -> usize {
        self.tied().count()
    }
}

/// Checks the three compatibility clauses; the first violation is reported.
pub fn validate(p: &HyperTieState) -> Result<()> {
    let mut seen_i = vec![0usize; p.k + 1];
    let mut seen_j = vec![0usize; p.c + 1];
    for &(i, j) in &p.pairs {
        if i > p.k || j > p.c {
            return Err(FurbiError::IncompatibleStructure(format!(
                "pair ({i}, {j}) is out of range for k = {}, c = {}",
                p.k, p.c
            )));
        }
        seen_i[i] += 1;
        seen_j[j] += 1;
    }
    if let Some(i) = (1..=p.k).find(|&i| seen_i[i] != 1) {
        return Err(FurbiError::IncompatibleStructure(format!(
            "X value {i} appears in {} pairs instead of exactly one",
            seen_i[i]
        )));
    }
    if let Some(j) = (1..=p.c).find(|&j| seen_j[j] != 1) {
        return Err(FurbiError::IncompatibleStructure(format!(
            "Y value {j} appears in {} pairs instead of exactly one",
            seen_j[j]
        )));
    }
    if p.pairs.contains(&(0, 0)) {
        return Err(FurbiError::IncompatibleStructure(
            "pair (0, 0) refers to neither sample".into(),
        ));
    }
    Ok(())
}

/// `Σ_j C(k, j) C(c, j) j!`, the number of partial matchings.
pub fn count_structures(k: usize, c: usize) -> u128 {
    let mut total: u128 = 0;
    let mut term: u128 = 1; // C(k,0) C(c,0) 0!
    for j in 0..=k.min(c) {
        total = total.saturating_add(term);
        // term_{j+1} = term_j (k-j)(c-j) / (j+1), exact in integers
        term = match term
            .checked_mul((k - j) as u128)
            .and_then(|t| t.checked_mul((c - j) as u128))
        {
            Some(t) => t / ((j + 1) as u128),
            None => return u128::MAX,
        };
    }
    total
}

/// Every compatible structure for `k` X values and `c` Y values.
pub fn enumerate_structures(k: usize, c: usize) -> Result<Vec<HyperTieState>> {
    if k + c == 0 {
        return Err(FurbiError::Domain("need at least one distinct value".into()));
    }
    let count = count_structures(k, c);
    if count > ENUMERATION_LIMIT {
        return Err(FurbiError::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut used = vec![false; c + 1];
    let mut current = Vec::with_capacity(k + c);
    extend(1, k, c, &mut used, &mut current, &mut out);
    Ok(out)
}

fn extend(
    i: usize,
    k: usize,
    c: usize,
    used: &mut [bool],
    current: &mut Vec<(usize, usize)>,
    out: &mut Vec<HyperTieState>,
) {
    if i > k {
        let mut pairs = current.clone();
        pairs.extend((1..=c).filter(|&j| !used[j]).map(|j| (0, j)));
        out.push(HyperTieState::new(k, c, pairs));
        return;
    }
    for j in 0..=c {
        if j > 0 && used[j] {
            continue;
        }
        if j > 0 {
            used[j] = true;
        }
        current.push((i, j));
        extend(i + 1, k, c, used, current, out);
        current.pop();
        if j > 0 {
            used[j] = false;
        }
    }
}

/// Cluster labels for each X and each Y observation. A label used in both
/// arrays marks a hyper-tie.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelArrays {
    pub c_x: Vec<usize>,
    pub c_y: Vec<usize>,
}

impl LabelArrays {
    /// Relabels to `0..K` in order of first appearance, X block first.
    pub fn compact(&mut self) {
        let mut map = HashMap::new();
        for l in self.c_x.iter_mut().chain(self.c_y.iter_mut()) {
            let next = map.len();
            *l = *map.entry(*l).or_insert(next);
        }
    }

    pub fn n_clusters(&self) -> usize {
        let mut labels: Vec<usize> = self.c_x.iter().chain(&self.c_y).copied().collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }
}

/// The structure induced by label arrays. X values are numbered by first
/// appearance in `c_x`, Y values by first appearance in `c_y`.
pub fn labels_to_structure(l: &LabelArrays) -> HyperTieState {
    let (x_order, n) = first_appearance(&l.c_x);
    let (y_order, m) = first_appearance(&l.c_y);
    let y_index: HashMap<usize, usize> = y_order.iter().enumerate().map(|(j, &lab)| (lab, j + 1)).collect();
    let mut pairs = Vec::with_capacity(x_order.len() + y_order.len());
    let mut matched = vec![false; y_order.len() + 1];
    for (i, lab) in x_order.iter().enumerate() {
        match y_index.get(lab) {
            Some(&j) => {
                matched[j] = true;
                pairs.push((i + 1, j));
            }
            None => pairs.push((i + 1, 0)),
        }
    }
    pairs.extend((1..=y_order.len()).filter(|&j| !matched[j]).map(|j| (0, j)));
    HyperTieState::new(x_order.len(), y_order.len(), pairs).with_multiplicities(n, m)
}

fn first_appearance(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut order = Vec::new();
    let mut pos: HashMap<usize, usize> = HashMap::new();
    let mut counts = Vec::new();
    for &l in labels {
        let idx = *pos.entry(l).or_insert_with(|| {
            order.push(l);
            counts.push(0);
            order.len() - 1
        });
        counts[idx] += 1;
    }
    (order, counts)
}

/// Label arrays realizing a structure: X observations grouped by value in
/// order, then Y observations. Multiplicities default to one.
pub fn structure_to_labels(p: &HyperTieState) -> LabelArrays {
    let n = if p.n.len() == p.k { p.n.clone() } else { vec![1; p.k] };
    let m = if p.m.len() == p.c { p.m.clone() } else { vec![1; p.c] };
    let mut x_label = vec![0; p.k + 1];
    let mut y_label = vec![0; p.c + 1];
    for (label, &(i, j)) in p.pairs.iter().enumerate() {
        x_label[i] = label;
        y_label[j] = label;
    }
    let c_x = (1..=p.k).flat_map(|i| std::iter::repeat_n(x_label[i], n[i - 1])).collect();
    let c_y = (1..=p.c).flat_map(|j| std::iter::repeat_n(y_label[j], m[j - 1])).collect();
    let mut l = LabelArrays { c_x, c_y };
    l.compact();
    l
}

/// An unnormalized mass measured against a reference of the given dimension.
/// Masses of different dimension are not comparable: the lowest-dimensional
/// nonzero mass dominates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionedMass {
    pub dim: usize,
    pub value: f64,
}

/// Normalizes a set of masses, keeping only the lowest reference dimension
/// that carries positive mass.
pub fn normalize_masses(masses: &[DimensionedMass]) -> Vec<f64> {
    let dim = masses.iter().filter(|m| m.value > 0.0).map(|m| m.dim).min();
    let Some(dim) = dim else {
        return vec![0.0; masses.len()];
    };
    let total: f64 = masses.iter().filter(|m| m.dim == dim).map(|m| m.value).sum();
    masses
        .iter()
        .map(|m| if m.dim == dim { m.value / total } else { 0.0 })
        .collect()
}

/// Unnormalized posterior mass of a structure given the distinct values
/// `x_star`, `y_star` and the multiplicities stored in `p`:
///
/// `θ^{|p|} ∏ g_{i,j} · ∬ u₁^{n-1} u₂^{m-1} ∏ τ_{n_i, m_j}(u) e^{-ψ_b(u)} du`.
pub fn structure_mass(
    p: &HyperTieState,
    spec: &LevySpec,
    g0: &BaseMeasure,
    x_star: &[f64],
    y_star: &[f64],
    cfg: &QuadratureConfig,
) -> Result<DimensionedMass> {
    validate(p)?;
    if x_star.len() != p.k || y_star.len() != p.c || p.n.len() != p.k || p.m.len() != p.c {
        return Err(FurbiError::IncompatibleStructure(
            "values and multiplicities must match k and c".into(),
        ));
    }
    if p.n.iter().chain(&p.m).any(|&v| v == 0) {
        return Err(FurbiError::IncompatibleStructure("multiplicities must be positive".into()));
    }
    let pair_dim = match g0.family {
        BaseFamily::DiagonalDegenerate => 1,
        BaseFamily::BivariateGaussian | BaseFamily::MultivariateGaussianCorr => 2,
        _ => {
            return Err(FurbiError::Unsupported(
                "structure masses need a scalar Gaussian or diagonal base measure".into(),
            ))
        }
    };
    let mut dim = 0;
    let mut density = 1.0;
    for &(i, j) in &p.pairs {
        density *= match (i, j) {
            (i, 0) => {
                dim += 1;
                g0.p0_density(x_star[i - 1])
            }
            (0, j) => {
                dim += 1;
                g0.p0_density(y_star[j - 1])
            }
            (i, j) => {
                dim += pair_dim;
                g0.g0_density(x_star[i - 1], y_star[j - 1])
            }
        };
    }
    if density == 0.0 {
        return Ok(DimensionedMass { dim, value: 0.0 });
    }
    let counts: Vec<[usize; 2]> = p
        .pairs
        .iter()
        .map(|&(i, j)| {
            [
                if i == 0 { 0 } else { p.n[i - 1] },
                if j == 0 { 0 } else { p.m[j - 1] },
            ]
        })
        .collect();
    let n: usize = p.n.iter().sum();
    let m: usize = p.m.iter().sum();
    let log_integrand = |u1: f64, u2: f64| -> f64 {
        let u = [u1, u2];
        let mut acc = -spec.psi_b_unchecked(&u);
        if n > 0 {
            acc += (n as f64 - 1.0) * u1.ln();
        }
        if m > 0 {
            acc += (m as f64 - 1.0) * u2.ln();
        }
        for cnt in &counts {
            acc += spec.ln_tau_vec(cnt, &u);
        }
        acc
    };
    let integral = match (n > 0, m > 0) {
        (true, true) => integrate_posneg_2d(|a, b| log_integrand(a, b).exp(), cfg)?.value,
        (true, false) => integrate_half_line(|a| log_integrand(a, 0.0).exp(), cfg)?.value,
        (false, true) => integrate_half_line(|b| log_integrand(0.0, b).exp(), cfg)?.value,
        (false, false) => 1.0,
    };
    let value = spec.theta.powi(p.pairs.len() as i32) * density * integral;
    Ok(DimensionedMass { dim, value })
}
