use super::common::*;
use super::svg::{LinePlot, Series};
use crate::dataset::{
    label_by_quantile, sample_generalized, sample_isotropic, sample_two_gaussians, Dataset, DistributionKind,
    TwoGaussiansSpec,
};
use crate::dynamics::{default_init, grokking_time_rows, run as train, GenEvaluator, GrokCriterion, TrajectoryRow};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Two-Gaussians, quantile-labelled and alternative-distribution runs with empirical gen metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtensionsConfig {
    pub n: usize,
    pub n_test: usize,
    pub accuracy_threshold: f64,
    /// Minimum dip and rise of the seed-averaged log gen loss that count as non-monotone.
    pub dip_threshold: f64,
    pub two_gaussians: Option<TwoGaussiansGroup>,
    pub quantile: Option<QuantileGroup>,
    pub distributions: Option<DistributionsGroup>,
    pub base_seed: u64,
    pub seeds: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoGaussiansGroup {
    /// Ratio of the perpendicular dimension to `n`.
    pub lambda: f64,
    pub mu: f64,
    pub sigma_b: f64,
    pub sigma_as: Vec<f64>,
    pub fit_bias: bool,
    pub optimizer: OptimizerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantileGroup {
    pub lambda: f64,
    pub sigma: f64,
    pub rs: Vec<f64>,
    pub optimizer: OptimizerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionsGroup {
    pub lambda: f64,
    pub variants: Vec<DistributionVariant>,
    pub optimizer: OptimizerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionVariant {
    pub name: String,
    pub distribution: DistributionKind,
}

impl Default for TwoGaussiansGroup {
    fn default() -> Self {
        Self {
            lambda: 0.48,
            mu: 0.2,
            sigma_b: 1.0,
            sigma_as: vec![0.0, 0.01, 0.05, 0.1],
            fit_bias: false,
            optimizer: OptimizerSpec::gradient_flow(0.1, 1e10),
        }
    }
}

impl Default for QuantileGroup {
    fn default() -> Self {
        Self {
            lambda: 0.48,
            sigma: 5.0,
            rs: vec![1.0, 0.99, 0.95],
            optimizer: OptimizerSpec::gradient_flow(0.01, 1e10),
        }
    }
}

impl Default for DistributionsGroup {
    fn default() -> Self {
        let variant = |name: &str, distribution| DistributionVariant {
            name: name.into(),
            distribution,
        };
        Self {
            lambda: 0.45,
            variants: vec![
                variant("isotropic", DistributionKind::Isotropic { sigma: 5.0 }),
                variant(
                    "power_law",
                    DistributionKind::PowerLawCov {
                        alpha: 1.5,
                        total_variance: 1800.0,
                    },
                ),
                variant(
                    "mixture",
                    DistributionKind::PerCoordinateMixture {
                        mu_mix: 1.0,
                        sigma_mix: 0.25,
                        scale: 5.0,
                    },
                ),
            ],
            optimizer: OptimizerSpec::gradient_flow(0.01, 1e10),
        }
    }
}

impl Default for ExtensionsConfig {
    fn default() -> Self {
        Self {
            n: 400,
            n_test: 10_000,
            accuracy_threshold: 0.9,
            dip_threshold: 0.01,
            two_gaussians: Some(TwoGaussiansGroup::default()),
            quantile: Some(QuantileGroup::default()),
            distributions: Some(DistributionsGroup::default()),
            base_seed: 1,
            seeds: 5,
            workers: 0,
        }
    }
}

impl ExtensionsConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.n >= 2 && self.n.is_multiple_of(2), "n must be even and >= 2")?;
        require(self.n_test >= 2 && self.n_test.is_multiple_of(2), "n_test must be even and >= 2")?;
        require(self.seeds >= 1, "seeds must be >= 1")?;
        require(
            self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0,
            "accuracy_threshold must lie in (0, 1]",
        )?;
        require(self.dip_threshold >= 0.0, "dip_threshold must be >= 0")?;
        let lambda_ok = |l: f64| l > 0.0 && l.is_finite();
        if let Some(g) = &self.two_gaussians {
            require(lambda_ok(g.lambda), "two_gaussians lambda must be > 0")?;
            check_grid("sigma_a", &g.sigma_as, |s| s >= 0.0 && s.is_finite())?;
            ensure_positive("mu", g.mu)?;
            ensure_positive("sigma_b", g.sigma_b)?;
            g.optimizer.validate()?;
        }
        if let Some(g) = &self.quantile {
            require(lambda_ok(g.lambda), "quantile lambda must be > 0")?;
            check_grid("r", &g.rs, |r| r > 0.0 && r <= 1.0)?;
            ensure_positive("sigma", g.sigma)?;
            g.optimizer.validate()?;
        }
        if let Some(g) = &self.distributions {
            require(lambda_ok(g.lambda), "distributions lambda must be > 0")?;
            require(!g.variants.is_empty(), "distribution variants are empty")?;
            g.optimizer.validate()?;
        }
        require(
            self.two_gaussians.is_some() || self.quantile.is_some() || self.distributions.is_some(),
            "no extension group enabled",
        )
    }

    fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        if let Some(g) = &self.two_gaussians {
            let d = dimension_for(g.lambda, self.n);
            for &sigma_a in &g.sigma_as {
                out.push(Variant {
                    group: "two_gaussians",
                    name: format!("two_gaussians_sigma_a_{sigma_a}"),
                    parameter: sigma_a,
                    source: Source::TwoGaussians(TwoGaussiansSpec {
                        mu: g.mu,
                        sigma_a,
                        sigma_b: g.sigma_b,
                        dim: d + 1,
                    }),
                    fit_bias: g.fit_bias,
                    optimizer: g.optimizer.clone(),
                });
            }
        }
        if let Some(g) = &self.quantile {
            let d = dimension_for(g.lambda, self.n);
            for &r in &g.rs {
                out.push(Variant {
                    group: "quantile",
                    name: format!("quantile_r_{r}"),
                    parameter: r,
                    source: Source::Quantile { d, sigma: g.sigma, r },
                    fit_bias: true,
                    optimizer: g.optimizer.clone(),
                });
            }
        }
        if let Some(g) = &self.distributions {
            let d = dimension_for(g.lambda, self.n);
            for v in &g.variants {
                out.push(Variant {
                    group: "distributions",
                    name: format!("distribution_{}", v.name),
                    parameter: g.lambda,
                    source: Source::Generalized { d, kind: v.distribution },
                    fit_bias: true,
                    optimizer: g.optimizer.clone(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Source {
    TwoGaussians(TwoGaussiansSpec),
    Quantile { d: usize, sigma: f64, r: f64 },
    Generalized { d: usize, kind: DistributionKind },
}

impl Source {
    fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        match *self {
            Source::TwoGaussians(spec) => sample_two_gaussians(spec, n, seed),
            Source::Quantile { d, sigma, r } => label_by_quantile(&sample_isotropic(n, d, sigma, seed)?, r),
            Source::Generalized { d, kind } => sample_generalized(kind, n, d, seed),
        }
    }
}

#[derive(Debug, Clone)]
struct Variant {
    group: &'static str,
    name: String,
    parameter: f64,
    source: Source,
    fit_bias: bool,
    optimizer: OptimizerSpec,
}

pub(super) fn run(mut cfg: ExtensionsConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    overrides.apply(&mut cfg.base_seed, &mut cfg.workers);
    cfg.validate()?;
    let seeds = seed_list(cfg.base_seed, cfg.seeds);
    write_config_echo(dir, "extensions", &cfg, &seeds)?;
    let variants = cfg.variants();
    let tasks: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results = par_map(cfg.workers, &tasks, |&(v, seed)| -> Result<(Vec<TrajectoryRow>, Option<String>)> {
        let var = &variants[v];
        let data = var.source.sample(cfg.n, stream_seed(seed, Stream::Data))?;
        let test = var.source.sample(cfg.n_test, stream_seed(seed, Stream::Test))?;
        let mut opt = var.optimizer.config();
        opt.fit_bias = var.fit_bias;
        opt.evaluator = GenEvaluator::TestSet(Arc::new(test));
        let traj = train(&data, &default_init(data.d(), stream_seed(seed, Stream::Init)), &opt)?;
        write_rows(&dir.join(format!("{}_seed_{seed}", var.name)).join("trajectory.csv"), &traj.rows)?;
        Ok((traj.rows, traj.abort))
    })?;

    let mut report = RunReport::new("extensions", dir);
    let mut runs: Vec<Vec<Vec<TrajectoryRow>>> = vec![Vec::new(); variants.len()];
    let mut aborted = vec![0usize; variants.len()];
    for (&(v, seed), r) in tasks.iter().zip(results) {
        let (rows, abort) = r?;
        report.cells += 1;
        if let Some(reason) = abort {
            aborted[v] += 1;
            report.aborted.push((format!("{}_seed_{seed}", variants[v].name), reason));
        }
        runs[v].push(rows);
    }

    let criterion = GrokCriterion::Accuracy {
        level: cfg.accuracy_threshold,
    };
    let means: Vec<Vec<TrajectoryRow>> = runs
        .iter()
        .map(|rs| average_rows(&rs.iter().map(Vec::as_slice).collect::<Vec<_>>()))
        .collect();
    let mut table = Vec::new();
    for (v, var) in variants.iter().enumerate() {
        let mean = &means[v];
        write_rows(&dir.join(&var.name).join("trajectory.csv"), mean)?;
        let gen: Vec<f64> = mean.iter().map(|r| r.log_gen_loss).collect();
        let (dip, rise) = dip_rise(&gen);
        let nonmonotone = dip >= cfg.dip_threshold && rise >= cfg.dip_threshold;
        let train_mono = runs[v].iter().all(|r| train_loss_monotone(r));
        let finals: Vec<f64> = runs[v].iter().filter_map(|r| r.last()).map(|r| r.gen_acc).collect();
        let (acc_mean, acc_err) = mean_stderr(&finals);
        let g = grokking_time_rows(mean, criterion);
        let reference = variants.iter().position(|o| o.group == var.group).map(|k| &means[k]);
        let gap = reference.map(|r| {
            r.iter()
                .zip(mean)
                .map(|(a, b)| (a.gen_acc - b.gen_acc).abs())
                .fold(0.0, f64::max)
        });
        table.push(vec![
            var.group.to_string(),
            var.name.clone(),
            fmt(var.parameter),
            runs[v].len().to_string(),
            aborted[v].to_string(),
            fmt(dip),
            fmt(rise),
            nonmonotone.to_string(),
            train_mono.to_string(),
            fmt(acc_mean),
            fmt(acc_err),
            fmt_opt(late_log_slope(mean, 1.0, |r| r.log_gen_loss)),
            fmt_opt(g.t_train),
            fmt_opt(g.t_gen),
            fmt_opt(g.delta),
            fmt_opt(gap),
        ]);
    }
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &table)?;

    for group in ["two_gaussians", "quantile", "distributions"] {
        let members: Vec<usize> = (0..variants.len()).filter(|&v| variants[v].group == group).collect();
        if members.is_empty() {
            continue;
        }
        let mut loss = LinePlot::new(format!("{group}: seed-averaged loss"), "t", "log10 loss").log_x();
        let mut acc = LinePlot::new(format!("{group}: seed-averaged accuracy"), "t", "accuracy").log_x();
        for (color, &v) in members.iter().enumerate() {
            let rows = &means[v];
            let name = &variants[v].name;
            loss.series.push(Series::line(format!("train {name}"), series(rows, |r| log10_loss(r.log_train_loss)), color));
            loss.series.push(Series::line("", series(rows, |r| log10_loss(r.log_gen_loss)), color).dashed());
            acc.series.push(Series::line(format!("train {name}"), series(rows, |r| r.train_acc), color));
            acc.series.push(Series::line("", series(rows, |r| r.gen_acc), color).dashed());
        }
        write_text(&dir.join(format!("{group}_loss.svg")), &loss.render())?;
        write_text(&dir.join(format!("{group}_accuracy.svg")), &acc.render())?;
    }
    Ok(report)
}

const SUMMARY_HEADER: [&str; 16] = [
    "group",
    "variant",
    "parameter",
    "seeds",
    "aborted",
    "gen_loss_dip",
    "gen_loss_rise",
    "nonmonotone_gen_loss",
    "train_loss_monotone",
    "final_gen_acc_mean",
    "final_gen_acc_stderr",
    "late_gen_loss_log_slope",
    "t_train",
    "t_gen",
    "grok_delta",
    "max_gen_acc_gap_to_group_reference",
];
