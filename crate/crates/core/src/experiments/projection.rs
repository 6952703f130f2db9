use super::common::*;
use super::svg::{LinePlot, Series};
use crate::dataset::{sample_isotropic, Dataset};
use crate::error::Result;
use crate::separability::{is_separable, margin_qp, s_infinity};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Distribution of `Ŝ·xᵢ` for the max-margin or bias-free minimizer direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
    pub bins: usize,
    pub base_seed: u64,
    pub seeds: usize,
    pub workers: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.05, 0.3, 0.45, 0.475, 0.49, 0.8],
            n: 400,
            sigma: 1.0,
            bins: 40,
            base_seed: 1,
            seeds: 5,
            workers: 0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid("lambda", &self.lambdas, |l| l > 0.0 && l.is_finite())?;
        require(self.n >= 1, "n must be >= 1")?;
        require(self.bins >= 1, "bins must be >= 1")?;
        require(self.seeds >= 1, "seeds must be >= 1")?;
        ensure_positive("sigma", self.sigma)
    }
}

/// Projections of every sample onto a unit direction.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Projections {
    pub separable: bool,
    pub margin: Option<f64>,
    pub values: Vec<f64>,
}

impl Projections {
    pub fn of(data: &Dataset) -> Result<Self> {
        let (separable, margin, dir) = if is_separable(data)? {
            let m = margin_qp(data)?;
            (true, Some(m.margin), m.s_star)
        } else {
            (false, None, s_infinity(data)?.s)
        };
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = data
            .rows()
            .map(|x| x.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / norm)
            .collect();
        Ok(Self {
            separable,
            margin,
            values,
        })
    }

    pub fn fraction_positive(&self) -> f64 {
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(lo, hi, count)` over equal-width bins spanning the data.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        let (lo, hi) = (self.min(), self.max());
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &v in &self.values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
            .collect()
    }
}

struct Task {
    lambda: f64,
    seed: u64,
    color: usize,
}

pub(super) fn run(mut cfg: ProjectionConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    overrides.apply(&mut cfg.base_seed, &mut cfg.workers);
    cfg.validate()?;
    let seeds = seed_list(cfg.base_seed, cfg.seeds);
    write_config_echo(dir, "projection-hist", &cfg, &seeds)?;
    let tasks: Vec<Task> = cfg
        .lambdas
        .iter()
        .enumerate()
        .flat_map(|(color, &lambda)| seeds.iter().map(move |&seed| Task { lambda, seed, color }))
        .collect();
    let results = par_map(cfg.workers, &tasks, |t| -> Result<Projections> {
        let d = dimension_for(t.lambda, cfg.n);
        let data = sample_isotropic(cfg.n, d, cfg.sigma, stream_seed(t.seed, Stream::Data))?;
        Projections::of(&data)
    })?;

    let mut report = RunReport::new("projection-hist", dir);
    let mut table = Vec::new();
    let mut hist_plot = LinePlot::new("projections onto the limiting direction", "S.x / |S|", "count");
    // separable seeds have no positive projections and are excluded from the aggregate
    let mut by_lambda: Vec<Vec<f64>> = vec![Vec::new(); cfg.lambdas.len()];
    let mut excluded = vec![0usize; cfg.lambdas.len()];
    for (t, r) in tasks.iter().zip(results) {
        report.cells += 1;
        let id = format!("lambda_{}_seed_{}", t.lambda, t.seed);
        let p = match r {
            Ok(p) => p,
            Err(e) => {
                report.failures += 1;
                table.push(vec![
                    id,
                    fmt(t.lambda),
                    t.seed.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]);
                continue;
            }
        };
        let hist = p.histogram(cfg.bins);
        let rows: Vec<Vec<String>> = hist
            .iter()
            .map(|&(lo, hi, c)| vec![fmt(lo), fmt(hi), c.to_string()])
            .collect();
        write_table(&dir.join(&id).join("histogram.csv"), &["bin_lo", "bin_hi", "count"], &rows)?;
        let frac = p.fraction_positive();
        if p.separable {
            excluded[t.color] += 1;
        } else {
            by_lambda[t.color].push(frac);
        }
        table.push(vec![
            id,
            fmt(t.lambda),
            t.seed.to_string(),
            p.separable.to_string(),
            fmt_opt(p.margin),
            fmt_opt(p.margin.map(|m| -m)),
            fmt(p.max()),
            fmt(p.min()),
            fmt(frac),
            String::new(),
        ]);
        if t.seed == cfg.base_seed {
            let pts = hist.iter().map(|&(lo, hi, c)| (0.5 * (lo + hi), c as f64)).collect();
            hist_plot.series.push(Series::line(format!("lambda={}", t.lambda), pts, t.color));
        }
    }
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &table)?;

    let mut agg = Vec::new();
    let mut frac_line = Vec::new();
    for ((&lambda, fracs), skipped) in cfg.lambdas.iter().zip(&by_lambda).zip(&excluded) {
        let (m, e) = mean_stderr(fracs);
        agg.push(vec![fmt(lambda), fracs.len().to_string(), skipped.to_string(), fmt(m), fmt(e)]);
        frac_line.push((lambda, m));
    }
    write_table(
        &dir.join("fraction_positive.csv"),
        &[
            "lambda",
            "inseparable_seeds",
            "separable_excluded",
            "fraction_positive_mean",
            "fraction_positive_stderr",
        ],
        &agg,
    )?;
    let frac_plot = LinePlot::new("fraction of positive projections, inseparable seeds", "lambda", "fraction")
        .with(Series::line("mean", frac_line, 0).markers());
    write_text(&dir.join("histogram.svg"), &hist_plot.render())?;
    write_text(&dir.join("fraction_positive.svg"), &frac_plot.render())?;
    Ok(report)
}

const SUMMARY_HEADER: [&str; 10] = [
    "cell",
    "lambda",
    "seed",
    "separable",
    "margin",
    "minus_margin",
    "max_projection",
    "min_projection",
    "fraction_positive",
    "failure",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_sample() {
        let p = Projections {
            separable: false,
            margin: None,
            values: vec![-1.0, -0.5, 0.0, 0.25, 1.0],
        };
        let h = p.histogram(4);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 5);
        assert_eq!((h[2].2, h[3].2), (2, 1));
        assert_eq!(p.fraction_positive(), 0.4);
    }
}
