use super::common::*;
use super::svg::Heatmap;
use crate::dataset::sample_isotropic;
use crate::dynamics::{default_init, grokking_time, run as train, GrokCriterion, GrokkingTimes};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Grokking time over a λ × σ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrokHeatmapConfig {
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub n: usize,
    pub optimizer: OptimizerSpec,
    pub accuracy_threshold: f64,
    pub base_seed: u64,
    pub seeds: usize,
    pub workers: usize,
}

impl Default for GrokHeatmapConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.3, 0.4, 0.45, 0.475],
            sigmas: vec![1.0, 2.0, 5.0, 10.0],
            n: 400,
            optimizer: OptimizerSpec::gradient_flow(0.01, 1e12),
            accuracy_threshold: 0.95,
            base_seed: 1,
            seeds: 3,
            workers: 0,
        }
    }
}

impl GrokHeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid("lambda", &self.lambdas, |l| l > 0.0 && l.is_finite())?;
        check_grid("sigma", &self.sigmas, |s| s > 0.0 && s.is_finite())?;
        require(self.n >= 1, "n must be >= 1")?;
        require(self.seeds >= 1, "seeds must be >= 1")?;
        require(
            self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0,
            "accuracy_threshold must lie in (0, 1]",
        )?;
        self.optimizer.validate()
    }
}

struct Task {
    lambda: f64,
    sigma: f64,
    seed: u64,
}

impl Task {
    fn id(&self) -> String {
        format!("lambda_{}_sigma_{}_seed_{}", self.lambda, self.sigma, self.seed)
    }
}

pub(super) fn run(mut cfg: GrokHeatmapConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    overrides.apply(&mut cfg.base_seed, &mut cfg.workers);
    cfg.validate()?;
    let seeds = seed_list(cfg.base_seed, cfg.seeds);
    write_config_echo(dir, "grok-heatmap", &cfg, &seeds)?;
    let mut tasks = Vec::new();
    for &lambda in &cfg.lambdas {
        for &sigma in &cfg.sigmas {
            for &seed in &seeds {
                tasks.push(Task { lambda, sigma, seed });
            }
        }
    }
    let criterion = GrokCriterion::Accuracy {
        level: cfg.accuracy_threshold,
    };
    let results = par_map(cfg.workers, &tasks, |t| -> Result<(GrokkingTimes, Option<String>)> {
        let d = dimension_for(t.lambda, cfg.n);
        let data = sample_isotropic(cfg.n, d, t.sigma, stream_seed(t.seed, Stream::Data))?;
        let traj = train(&data, &default_init(d, stream_seed(t.seed, Stream::Init)), &cfg.optimizer.config())?;
        write_rows(&dir.join(t.id()).join("trajectory.csv"), &traj.rows)?;
        Ok((grokking_time(&traj, criterion), traj.abort))
    })?;

    let mut report = RunReport::new("grok-heatmap", dir);
    let mut by_task = Vec::with_capacity(tasks.len());
    for (t, r) in tasks.iter().zip(results) {
        let (g, abort) = r?;
        report.cells += 1;
        if let Some(reason) = abort {
            report.aborted.push((t.id(), reason));
        }
        by_task.push(g);
    }

    let mut summary = Vec::new();
    let mut matrix = Vec::new();
    let mut values = Vec::new();
    for &lambda in &cfg.lambdas {
        let mut matrix_row = vec![fmt(lambda)];
        let mut value_row = Vec::new();
        for &sigma in &cfg.sigmas {
            let gs: Vec<&GrokkingTimes> = tasks
                .iter()
                .zip(&by_task)
                .filter(|(t, _)| t.lambda == lambda && t.sigma == sigma)
                .map(|(_, g)| g)
                .collect();
            let deltas: Vec<f64> = gs.iter().filter_map(|g| g.delta).collect();
            let censored = gs.len() - deltas.len();
            let t_train: Vec<f64> = gs.iter().filter_map(|g| g.t_train).collect();
            let t_gen: Vec<f64> = gs.iter().filter_map(|g| g.t_gen).collect();
            let (mean, err) = mean_stderr(&deltas);
            // a cell with any censored seed has no finite mean
            let cell = (censored == 0).then_some(mean);
            summary.push(vec![
                fmt(lambda),
                fmt(sigma),
                gs.len().to_string(),
                deltas.len().to_string(),
                censored.to_string(),
                if censored == 0 { "ok" } else { "censored" }.to_string(),
                fmt_opt(cell),
                fmt_opt(cell.map(|_| err)),
                fmt(mean_stderr(&t_train).0),
                fmt_opt((censored == 0).then(|| mean_stderr(&t_gen).0)),
            ]);
            matrix_row.push(cell.map_or_else(|| "censored".to_string(), fmt));
            value_row.push(cell.map(|m| (1.0 + m.max(0.0)).log10()));
        }
        matrix.push(matrix_row);
        values.push(value_row);
    }
    let mut header = vec!["lambda".to_string()];
    header.extend(cfg.sigmas.iter().map(|s| format!("sigma_{s}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("matrix.csv"), &header, &matrix)?;
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &summary)?;
    let svg = Heatmap {
        title: format!("grokking time to gen accuracy {}", cfg.accuracy_threshold),
        x_label: "sigma".into(),
        y_label: "lambda".into(),
        x_ticks: cfg.sigmas.iter().map(|s| fmt(*s)).collect(),
        y_ticks: cfg.lambdas.iter().map(|l| fmt(*l)).collect(),
        values,
        value_label: "log10(1 + t_gen - t_train)".into(),
    };
    write_text(&dir.join("heatmap.svg"), &svg.render())?;
    Ok(report)
}

const SUMMARY_HEADER: [&str; 10] = [
    "lambda",
    "sigma",
    "seeds",
    "crossed",
    "censored",
    "status",
    "grok_delta_mean",
    "grok_delta_stderr",
    "t_train_mean",
    "t_gen_mean",
];
