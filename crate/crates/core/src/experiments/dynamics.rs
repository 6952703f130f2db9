use super::common::*;
use super::svg::{LinePlot, Series};
use crate::analytic::limiting_accuracy_from_margin;
use crate::dataset::sample_isotropic;
use crate::dynamics::{default_init, grokking_time, run as train, GenEvaluator, GrokCriterion, Trajectory};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Full training runs over a λ grid on isotropic data with constant labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
    pub optimizer: OptimizerSpec,
    pub accuracy_threshold: f64,
    /// Gen metrics from a held-out sample of this size instead of the closed form.
    pub n_test: Option<usize>,
    pub base_seed: u64,
    pub seeds: usize,
    pub workers: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.05, 0.48, 0.52],
            n: 400,
            sigma: 5.0,
            optimizer: OptimizerSpec::gradient_flow(0.01, 1e12),
            accuracy_threshold: 0.9,
            n_test: None,
            base_seed: 1,
            seeds: 1,
            workers: 0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid("lambda", &self.lambdas, |l| l > 0.0 && l.is_finite())?;
        require(self.n >= 1, "n must be >= 1")?;
        require(self.seeds >= 1, "seeds must be >= 1")?;
        require(self.n_test != Some(0), "n_test must be >= 1")?;
        require(
            self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0,
            "accuracy_threshold must lie in (0, 1]",
        )?;
        ensure_positive("sigma", self.sigma)?;
        self.optimizer.validate()
    }
}

struct Cell {
    id: String,
    lambda: f64,
    seed: u64,
    color: usize,
}

struct Outcome {
    traj: Trajectory,
    geometry: Geometry,
    d: usize,
}

pub(super) fn run(mut cfg: DynamicsConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    overrides.apply(&mut cfg.base_seed, &mut cfg.workers);
    cfg.validate()?;
    let seeds = seed_list(cfg.base_seed, cfg.seeds);
    let cells: Vec<Cell> = cfg
        .lambdas
        .iter()
        .enumerate()
        .flat_map(|(k, &lambda)| {
            seeds.iter().map(move |&seed| Cell {
                id: format!("lambda_{lambda}_seed_{seed}"),
                lambda,
                seed,
                color: k,
            })
        })
        .collect();
    write_config_echo(dir, "dynamics", &cfg, &seeds)?;

    let results = par_map(cfg.workers, &cells, |c| -> Result<Outcome> {
        let d = dimension_for(c.lambda, cfg.n);
        let data = sample_isotropic(cfg.n, d, cfg.sigma, stream_seed(c.seed, Stream::Data))?;
        let mut opt = cfg.optimizer.config();
        if let Some(nt) = cfg.n_test {
            let test = sample_isotropic(nt, d, cfg.sigma, stream_seed(c.seed, Stream::Test))?;
            opt.evaluator = GenEvaluator::TestSet(Arc::new(test));
        }
        let traj = train(&data, &default_init(d, stream_seed(c.seed, Stream::Init)), &opt)?;
        write_rows(&dir.join(&c.id).join("trajectory.csv"), &traj.rows)?;
        Ok(Outcome {
            traj,
            geometry: Geometry::of(&data)?,
            d,
        })
    })?;

    let mut report = RunReport::new("dynamics", dir);
    let criterion = GrokCriterion::Accuracy {
        level: cfg.accuracy_threshold,
    };
    let mut table = Vec::new();
    let mut loss = LinePlot::new("loss", "t", "log10 loss").log_x();
    let mut acc = LinePlot::new("accuracy", "t", "accuracy").log_x();
    let mut bias = LinePlot::new("bias", "t", "b").log_x();
    let mut snorm = LinePlot::new("weight norm", "t", "|S|").log_x();
    for (c, res) in cells.iter().zip(results) {
        let out = res?;
        report.cells += 1;
        if let Some(reason) = &out.traj.abort {
            report.aborted.push((c.id.clone(), reason.clone()));
        }
        let rows = &out.traj.rows;
        let last = out.traj.last();
        let g = grokking_time(&out.traj, criterion);
        let geo = out.geometry;
        let predicted_acc = geo.margin.map(|m| limiting_accuracy_from_margin(m, cfg.sigma)).transpose()?;
        let (pb, ps) = geo.predicted_slopes();
        table.push(vec![
            c.id.clone(),
            fmt(c.lambda),
            c.seed.to_string(),
            cfg.n.to_string(),
            out.d.to_string(),
            geo.separable.to_string(),
            fmt_opt(geo.margin),
            fmt_opt(geo.s_infinity),
            fmt_opt(g.t_train),
            fmt_opt(g.t_gen),
            fmt_opt(g.delta),
            fmt(last.t),
            fmt(last.s_norm),
            fmt(last.b),
            fmt(last.gen_acc),
            fmt_opt(predicted_acc),
            fmt(last.b / last.s_norm),
            fmt_opt(geo.margin.map(|m| -1.0 / m)),
            fmt_opt(late_log_slope(rows, 2.0, |r| r.b)),
            fmt(pb),
            fmt_opt(late_log_slope(rows, 2.0, |r| r.s_norm)),
            fmt(ps),
            out.traj.abort.clone().unwrap_or_default(),
        ]);
        let label = |s: &str| {
            if c.seed == cfg.base_seed {
                format!("{s} lambda={}", c.lambda)
            } else {
                String::new()
            }
        };
        loss.series.push(Series::line(label("train"), series(rows, |r| log10_loss(r.log_train_loss)), c.color));
        loss.series.push(Series::line(label("gen"), series(rows, |r| log10_loss(r.log_gen_loss)), c.color).dashed());
        acc.series.push(Series::line(label("train"), series(rows, |r| r.train_acc), c.color));
        acc.series.push(Series::line(label("gen"), series(rows, |r| r.gen_acc), c.color).dashed());
        bias.series.push(Series::line(label(""), series(rows, |r| r.b), c.color));
        snorm.series.push(Series::line(label(""), series(rows, |r| r.s_norm), c.color));
    }
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &table)?;
    write_text(&dir.join("loss.svg"), &loss.render())?;
    write_text(&dir.join("accuracy.svg"), &acc.render())?;
    write_text(&dir.join("bias.svg"), &bias.render())?;
    write_text(&dir.join("snorm.svg"), &snorm.render())?;
    Ok(report)
}

const SUMMARY_HEADER: [&str; 23] = [
    "cell",
    "lambda",
    "seed",
    "n",
    "d",
    "separable",
    "margin",
    "s_infinity_norm",
    "t_train",
    "t_gen",
    "grok_delta",
    "final_t",
    "final_s_norm",
    "final_b",
    "final_gen_acc",
    "predicted_gen_acc",
    "b_over_s_norm",
    "predicted_b_over_s_norm",
    "b_log_slope",
    "predicted_b_log_slope",
    "s_norm_log_slope",
    "predicted_s_norm_log_slope",
    "abort",
];
