use super::common::*;
use super::lambda_sweep::binomial_z;
use super::svg::{LinePlot, Series};
use crate::analytic::{wendel_gaussian_limit, wendel_probability};
use crate::dataset::sample_isotropic;
use crate::error::Result;
use crate::separability::is_separable;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Monte Carlo separable fraction against the exact count and its Gaussian limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WendelConfig {
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub trials: usize,
    pub sigma: f64,
    pub base_seed: u64,
    pub workers: usize,
}

impl Default for WendelConfig {
    fn default() -> Self {
        Self {
            ns: vec![20, 40],
            ds: vec![5, 10, 15, 20, 21, 25, 30, 40, 50],
            trials: 10_000,
            sigma: 1.0,
            base_seed: 1,
            workers: 0,
        }
    }
}

impl WendelConfig {
    pub fn validate(&self) -> Result<()> {
        require(!self.ns.is_empty() && !self.ds.is_empty(), "n and d grids must be nonempty")?;
        require(self.ns.iter().chain(&self.ds).all(|&v| v >= 1), "n and d must be >= 1")?;
        require(self.trials >= 1, "trials must be >= 1")?;
        ensure_positive("sigma", self.sigma)
    }
}

pub(super) fn run(mut cfg: WendelConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    overrides.apply(&mut cfg.base_seed, &mut cfg.workers);
    cfg.validate()?;
    let seeds = seed_list(cfg.base_seed, cfg.trials);
    write_config_echo(dir, "wendel", &cfg, &seeds)?;
    let cells: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| cfg.ds.iter().map(move |&d| (n, d))).collect();
    let mut tasks = Vec::with_capacity(cells.len() * cfg.trials);
    for (k, _) in cells.iter().enumerate() {
        for &s in &seeds {
            tasks.push((k, stream_seed(s, Stream::Cell(k as u64))));
        }
    }
    let outcomes = par_map(cfg.workers, &tasks, |&(k, seed)| -> Result<bool> {
        let (n, d) = cells[k];
        is_separable(&sample_isotropic(n, d, cfg.sigma, seed)?)
    })?;

    let mut report = RunReport::new("wendel", dir);
    let mut hits = vec![0usize; cells.len()];
    let mut decided = vec![0usize; cells.len()];
    for (&(k, _), r) in tasks.iter().zip(outcomes) {
        match r {
            Ok(sep) => {
                decided[k] += 1;
                hits[k] += sep as usize;
            }
            Err(_) => report.failures += 1,
        }
    }
    let mut rows = Vec::new();
    let mut plot = LinePlot::new("separable fraction", "lambda = d/N", "fraction");
    for (color, &n) in cfg.ns.iter().enumerate() {
        let mut measured = Vec::new();
        let mut exact_line = Vec::new();
        for (k, &(cn, d)) in cells.iter().enumerate() {
            if cn != n {
                continue;
            }
            report.cells += 1;
            let lambda = d as f64 / n as f64;
            let frac = hits[k] as f64 / decided[k].max(1) as f64;
            let exact = wendel_probability(n as u64, d as u64)?;
            let limit = wendel_gaussian_limit(lambda, d as f64)?;
            let stderr = (exact * (1.0 - exact) / decided[k].max(1) as f64).sqrt();
            rows.push(vec![
                n.to_string(),
                d.to_string(),
                fmt(lambda),
                decided[k].to_string(),
                hits[k].to_string(),
                fmt(frac),
                fmt(stderr),
                fmt(exact),
                fmt(limit),
                fmt(binomial_z(frac, exact, decided[k].max(1))),
            ]);
            measured.push((lambda, frac));
            exact_line.push((lambda, exact));
        }
        exact_line.sort_by(|a, b| a.0.total_cmp(&b.0));
        plot.series.push(Series::line(format!("N={n} Monte Carlo"), measured, color).markers());
        plot.series.push(Series::line(format!("N={n} exact"), exact_line, color));
    }
    write_table(&dir.join("summary.csv"), &HEADER, &rows)?;
    write_text(&dir.join("separable.svg"), &plot.render())?;
    Ok(report)
}

const HEADER: [&str; 10] = [
    "n",
    "d",
    "lambda",
    "trials",
    "separable",
    "empirical",
    "stderr",
    "exact",
    "gaussian_limit",
    "z",
];
