//! Grouped datasets, the split of a matrix with missing entries into
//! samples by missing pattern, and standardization.

use serde::{Deserialize, Serialize};

use crate::error::{FurbiError, Result};

/// Affine transform applied to the raw values: `(x - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Maps a standardized value of slot `k` back to the raw scale.
    pub fn invert(&self, k: usize, v: f64) -> f64 {
        v * self.scale[k] + self.center[k]
    }

    /// Density on the raw scale from a density on the standardized scale.
    pub fn density_factor(&self, k: usize) -> f64 {
        1.0 / self.scale[k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Per group, per observation: the observed values.
    pub groups: Vec<Vec<Vec<f64>>>,
    pub names: Vec<String>,
    /// Observed coordinates of each group, when groups come from missing patterns.
    pub patterns: Option<Vec<Vec<usize>>>,
    /// Original row index of each observation, when known.
    pub rows: Option<Vec<Vec<usize>>>,
    /// Per group (scalar data) or per column (missing-pattern data).
    pub transform: Option<Standardization>,
}

impl Dataset {
    /// Scalar samples, one per group.
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Self {
        let names = (0..samples.len()).map(|g| format!("group_{g}")).collect();
        Self {
            groups: samples.into_iter().map(|s| s.into_iter().map(|v| vec![v]).collect()).collect(),
            names,
            patterns: None,
            rows: None,
            transform: None,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    pub fn n_obs(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    /// Values of a scalar group.
    pub fn scalar(&self, g: usize) -> Vec<f64> {
        self.groups[g].iter().map(|r| r[0]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.n_obs() == 0 {
            return Err(FurbiError::Data("dataset is empty".into()));
        }
        for (g, rows) in self.groups.iter().enumerate() {
            for (i, r) in rows.iter().enumerate() {
                if r.is_empty() || r.iter().any(|v| !v.is_finite()) {
                    return Err(FurbiError::Data(format!("group {g}, observation {i}: empty or non-finite row")));
                }
            }
        }
        Ok(())
    }

    /// Standardizes each scalar group to mean 0 and unit variance.
    pub fn standardize_groups(mut self) -> Result<Self> {
        if self.groups.iter().any(|g| g.iter().any(|r| r.len() != 1)) {
            return Err(FurbiError::Data("group standardization needs scalar observations".into()));
        }
        let mut center = Vec::new();
        let mut scale = Vec::new();
        for rows in &mut self.groups {
            let (m, s) = mean_sd(rows.iter().map(|r| r[0]));
            for r in rows.iter_mut() {
                r[0] = (r[0] - m) / s;
            }
            center.push(m);
            scale.push(s);
        }
        self.transform = Some(Standardization { center, scale });
        Ok(self)
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let m = values.clone().sum::<f64>() / n;
    let v = values.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    let s = v.sqrt();
    (m, if s > 0.0 { s } else { 1.0 })
}

/// Standardizes each column of a matrix with missing entries over its
/// observed values.
pub fn standardize_columns(matrix: &mut [Vec<Option<f64>>]) -> Standardization {
    let p = matrix.first().map_or(0, |r| r.len());
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = matrix.iter().filter_map(|r| r[j]).collect();
        let (m, s) = mean_sd(col.iter().copied());
        for r in matrix.iter_mut() {
            if let Some(v) = r[j].as_mut() {
                *v = (*v - m) / s;
            }
        }
        center.push(m);
        scale.push(s);
    }
    Standardization { center, scale }
}

/// Splits rows into samples by their set of missing columns. Groups are
/// ordered by number of missing entries, then by the missing column set;
/// rows keep their original order within a group.
pub fn missing_pattern_split(matrix: &[Vec<Option<f64>>]) -> Result<Dataset> {
    let p = matrix.first().map_or(0, |r| r.len());
    if p < 2 {
        return Err(FurbiError::Data("missing-pattern split needs at least two columns".into()));
    }
    let mut keyed: Vec<(Vec<usize>, usize)> = Vec::with_capacity(matrix.len());
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != p {
            return Err(FurbiError::Data(format!("row {i} has {} columns, expected {p}", row.len())));
        }
        let missing: Vec<usize> = (0..p).filter(|&j| row[j].is_none()).collect();
        if missing.len() == p {
            return Err(FurbiError::Data(format!("row {i} has no observed entries")));
        }
        if row.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FurbiError::Data(format!("row {i} has a non-finite value")));
        }
        keyed.push((missing, i));
    }
    keyed.sort_by(|a, b| (a.0.len(), &a.0, a.1).cmp(&(b.0.len(), &b.0, b.1)));
    let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut patterns: Vec<Vec<usize>> = Vec::new();
    let mut names = Vec::new();
    let mut last: Option<&Vec<usize>> = None;
    for (missing, i) in &keyed {
        if last != Some(missing) {
            let observed: Vec<usize> = (0..p).filter(|j| !missing.contains(j)).collect();
            names.push(if missing.is_empty() {
                "complete".to_string()
            } else {
                format!("missing_{}", missing.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join("_"))
            });
            patterns.push(observed);
            groups.push(Vec::new());
            rows.push(Vec::new());
            last = Some(missing);
        }
        groups.last_mut().expect("group opened").push(matrix[*i].iter().flatten().copied().collect());
        rows.last_mut().expect("group opened").push(*i);
    }
    Ok(Dataset { groups, names, patterns: Some(patterns), rows: Some(rows), transform: None })
}

/// Rebuilds the matrix rows `(original index, values with gaps)` from a
/// missing-pattern split, in original row order.
pub fn recombine(data: &Dataset, columns: usize) -> Result<Vec<(usize, Vec<Option<f64>>)>> {
    let (Some(patterns), Some(rows)) = (&data.patterns, &data.rows) else {
        return Err(FurbiError::Data("dataset was not built from missing patterns".into()));
    };
    let mut out = Vec::with_capacity(data.n_obs());
    for ((obs, pat), idx) in data.groups.iter().zip(patterns).zip(rows) {
        for (r, &i) in obs.iter().zip(idx) {
            let mut full = vec![None; columns];
            for (&j, &v) in pat.iter().zip(r) {
                full[j] = Some(v);
            }
            out.push((i, full));
        }
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out)
}
