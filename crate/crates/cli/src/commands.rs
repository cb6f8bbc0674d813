use std::collections::BTreeMap;
use std::path::Path;

use furbi::dependence::{
    beta_numeric, dependence_report, gamma_numeric, hdp_dependence, mc_dependence_oracle, DependenceReport,
};
use furbi::eval::{cpo_summary, ess, rand_index, vi_point_estimate, DensityGrid, MetricReport};
use furbi::models::{self, ModelConfig, ModelKind, RunOptions, RunOutput};
use furbi::quadrature::QuadratureConfig;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::{read_matrix, read_scalar, Ingested};
use crate::output::{slug, svg_chart, trace_table, OutDir, Series};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, model: &mut ModelConfig) {
        if let Some(s) = self.seed {
            model.mcmc.seed = s;
        }
        if let Some(n) = self.iters {
            model.mcmc.iters = n;
        }
        if let Some(b) = self.burn_in {
            model.mcmc.burn_in = b;
        }
    }
}

#[derive(Debug, Serialize)]
pub struct QuadratureCheck {
    pub beta: f64,
    pub gamma: f64,
    pub beta_diff: f64,
    pub gamma_diff: f64,
}

#[derive(Debug, Serialize)]
pub struct HdpReport {
    pub theta: f64,
    pub theta0: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Serialize)]
pub struct DependenceOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<DependenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<DependenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hdp: Option<HdpReport>,
}

pub fn dependence(cfg: &RunConfig, seed: Option<u64>) -> CliResult<DependenceOutput> {
    let dep = cfg
        .dependence
        .as_ref()
        .ok_or_else(|| CliError::Config("the dependence command needs a [dependence] section".into()))?;
    let mut out = DependenceOutput { closed_form: None, quadrature: None, monte_carlo: None, hdp: None };
    if let Some(spec) = &dep.spec {
        let g0 = dep
            .g0
            .as_ref()
            .ok_or_else(|| CliError::Config("dependence.spec needs dependence.g0".into()))?;
        spec.validate()?;
        g0.validate()?;
        let closed = dependence_report(spec, g0)?;
        if dep.quadrature {
            let q = QuadratureConfig::default();
            let beta = beta_numeric(spec, &q)?;
            let gamma = gamma_numeric(spec, &q)?;
            out.quadrature = Some(QuadratureCheck {
                beta,
                gamma,
                beta_diff: (beta - closed.beta).abs(),
                gamma_diff: (gamma - closed.gamma).abs(),
            });
        }
        if let Some(mc) = dep.monte_carlo {
            let mut rng = models::chain_rng(seed.unwrap_or(0), 0);
            out.monte_carlo = Some(mc_dependence_oracle(spec, g0, mc.atoms, mc.replicates, &mut rng)?);
        }
        out.closed_form = Some(closed);
    } else if dep.g0.is_some() || dep.monte_carlo.is_some() {
        return Err(CliError::Config("dependence.g0 and dependence.monte_carlo need dependence.spec".into()));
    }
    if let Some(h) = dep.hdp {
        let (beta, gamma) = hdp_dependence(h.theta, h.theta0)?;
        out.hdp = Some(HdpReport { theta: h.theta, theta0: h.theta0, beta, gamma });
    }
    if out.closed_form.is_none() && out.hdp.is_none() {
        return Err(CliError::Config("dependence needs `spec` and `g0`, or `hdp`".into()));
    }
    Ok(out)
}

pub fn ingest(cfg: &RunConfig, model: &ModelConfig) -> CliResult<Ingested> {
    let input = cfg.io.input.as_ref().ok_or_else(|| CliError::Config("io.input is required for fit".into()))?;
    if model.model == ModelKind::MissingDataClustering {
        read_matrix(input, &cfg.io, model.standardize)
    } else {
        read_scalar(input, &cfg.io)
    }
}

/// Mean of the summed cluster counts over every kept iteration.
pub fn mean_clusters(out: &RunOutput) -> f64 {
    let counts: Vec<f64> = out
        .chains
        .iter()
        .flat_map(|c| c.traces.iter().map(|t| t.iter().map(|r| r.n_clusters).sum::<usize>() as f64))
        .collect();
    counts.iter().sum::<f64>() / counts.len().max(1) as f64
}

fn ess_map(out: &RunOutput) -> BTreeMap<String, furbi::eval::Ess> {
    let mut map = BTreeMap::new();
    let Some(c) = out.chains.first() else { return map };
    let Some(first) = c.traces.first() else { return map };
    for (u, row) in first.iter().enumerate() {
        let header = row.header();
        for (j, name) in header.iter().enumerate().skip(1) {
            let series: Vec<f64> =
                c.traces.iter().filter_map(|t| t[u].values()[j].parse::<f64>().ok()).collect();
            if let Ok(e) = ess(&series) {
                let key = if first.len() > 1 { format!("unit{u}.{name}") } else { name.clone() };
                map.insert(key, e);
            }
        }
    }
    map
}

/// Every `len / cap`-th element so that at most `cap` remain.
fn thin_to<T: Clone>(v: &[T], cap: usize) -> Vec<T> {
    if v.len() <= cap || cap == 0 {
        return v.to_vec();
    }
    let step = v.len().div_ceil(cap);
    v.iter().step_by(step).cloned().collect()
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub output: String,
    pub files: Vec<String>,
    pub metrics: MetricReport,
}

pub fn fit(cfg: &RunConfig, out_dir: &Path) -> CliResult<FitSummary> {
    let model = cfg.model.clone().ok_or_else(|| CliError::Config("fit needs a [model] section".into()))?;
    model.validate()?;
    let ing = ingest(cfg, &model)?;
    let scalar = ing.data.patterns.is_none();
    let grid = match (&cfg.report.grid, scalar) {
        (Some(g), true) => Some(g.points()?),
        _ => None,
    };
    let options = RunOptions { grid: grid.clone(), density_groups: Vec::new(), partitions: true, ln_pred: true };
    let out = models::run(&model, ing.data.clone(), &options)?;

    let mut dir = OutDir::create(out_dir)?;
    let mut resolved = cfg.clone();
    resolved.model = Some(model.clone());
    resolved.io.output = Some(out_dir.to_path_buf());
    if let Some(input) = &resolved.io.input {
        resolved.io.input = Some(std::fs::canonicalize(input)?);
    }
    let manifest = format!("# Resolved configuration; rerun with `furbi fit --config <this file>`.\n{}", resolved.to_toml()?);
    dir.text("manifest.toml", &manifest)?;

    if let Some((header, rows)) = trace_table(&out) {
        dir.csv("trace.csv", &header, rows)?;
    }

    // Partitions in input row order.
    let to_rows = |labels: &[usize]| {
        let mut v = vec![0usize; ing.rows];
        for (i, &r) in ing.order.iter().enumerate() {
            v[r] = labels[i];
        }
        v
    };
    let header: Vec<String> =
        ["chain", "sample"].iter().map(|s| s.to_string()).chain((0..ing.rows).map(|r| format!("row_{r}"))).collect();
    let rows = out.chains.iter().flat_map(|c| {
        c.partitions.iter().enumerate().map(move |(s, p)| {
            let mut cells = vec![c.chain.to_string(), s.to_string()];
            cells.extend(to_rows(p).iter().map(|l| l.to_string()));
            cells
        })
    });
    dir.csv("partitions.csv", &header, rows.collect::<Vec<_>>())?;

    let mut metrics = MetricReport { mean_clusters: Some(mean_clusters(&out)), ess: ess_map(&out), ..Default::default() };
    let pooled = thin_to(&out.pooled_partitions(), cfg.report.vi_samples);
    if !pooled.is_empty() {
        let (_, est) = vi_point_estimate(&pooled)?;
        let est = to_rows(&est);
        metrics.vi_clusters = Some(furbi::eval::canonical(&est).into_iter().max().map_or(0, |m| m + 1));
        if let Some(truth) = &ing.truth {
            metrics.rand_index = Some(rand_index(&est, truth)?);
        }
        let group_of = {
            let mut g = vec![String::new(); ing.rows];
            let mut k = 0;
            for (gi, obs) in ing.data.groups.iter().enumerate() {
                for _ in obs {
                    g[ing.order[k]] = ing.data.names[gi].clone();
                    k += 1;
                }
            }
            g
        };
        let mut header = vec!["row", "group", "cluster"];
        if ing.truth.is_some() {
            header.push("truth");
        }
        let rows = (0..ing.rows).map(|r| {
            let mut cells = vec![r.to_string(), group_of[r].clone(), est[r].to_string()];
            if let Some(t) = &ing.truth {
                cells.push(t[r].to_string());
            }
            cells
        });
        dir.csv("clusters.csv", &header, rows.collect::<Vec<_>>())?;
        metrics.vi_estimate = Some(est);
    }
    let ln_pred = out.pooled_ln_pred();
    if !ln_pred.is_empty() {
        let cpo = cpo_summary(&ln_pred)?;
        metrics.alcpo = Some(cpo.alcpo);
        metrics.mlcpo = Some(cpo.mlcpo);
        metrics.cpo_excluded = cpo.excluded;
    }

    if let Some(grid) = &out.grid {
        let mut curves = Vec::new();
        for (k, &g) in out.density_groups.iter().enumerate() {
            let dg = DensityGrid::new(grid.clone(), out.pooled_density(k))?;
            let name = &ing.data.names[g];
            let rows = dg.summary().into_iter().map(|r| r.iter().map(|v| v.to_string()).collect());
            dir.csv(&format!("density_{}.csv", slug(name)), &["x", "mean", "q05", "q95"], rows)?;
            curves.push(Series::line(name.clone(), grid.iter().copied().zip(dg.mean()).collect()));
        }
        dir.text("density.svg", &svg_chart("Posterior predictive densities", "x", "density", &curves))?;
    }
    if let Some(c) = out.chains.first() {
        let k: Vec<(f64, f64)> = c
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| (i as f64, t.iter().map(|r| r.n_clusters).sum::<usize>() as f64))
            .collect();
        dir.text("clusters_trace.svg", &svg_chart("Number of clusters (chain 0)", "kept sample", "clusters", &[Series::line("clusters", k)]))?;
    }
    dir.json("metrics.json", &metrics)?;
    // The point estimate is in clusters.csv and metrics.json; keep the summary short.
    metrics.vi_estimate = None;
    Ok(FitSummary { output: out_dir.display().to_string(), files: dir.written, metrics })
}
