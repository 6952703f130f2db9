use super::common::*;
use super::svg::{LinePlot, Series};
use crate::analytic::{limiting_accuracy_from_margin, wendel_probability};
use crate::dataset::sample_isotropic;
use crate::dynamics::{default_init, grokking_time, run as train, GrokCriterion, GrokkingTimes};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Seed-averaged separability, margin, `‖S∞‖` and limiting-accuracy statistics over λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSweepConfig {
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
    pub seeds: usize,
    /// Training runs for the first `dynamics_seeds` seeds of every λ; `null` skips them.
    pub dynamics: Option<OptimizerSpec>,
    pub dynamics_seeds: usize,
    pub accuracy_threshold: f64,
    pub base_seed: u64,
    pub workers: usize,
}

impl Default for LambdaSweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.3, 0.4, 0.45, 0.475, 0.6, 0.8],
            n: 400,
            sigma: 5.0,
            seeds: 100,
            dynamics: Some(OptimizerSpec::gradient_flow(0.01, 1e12)),
            dynamics_seeds: 10,
            accuracy_threshold: 0.9,
            base_seed: 1,
            workers: 0,
        }
    }
}

impl LambdaSweepConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid("lambda", &self.lambdas, |l| l > 0.0 && l.is_finite())?;
        require(self.n >= 1, "n must be >= 1")?;
        require(self.seeds >= 1, "seeds must be >= 1")?;
        require(
            self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0,
            "accuracy_threshold must lie in (0, 1]",
        )?;
        ensure_positive("sigma", self.sigma)?;
        if let Some(spec) = &self.dynamics {
            spec.validate()?;
        }
        Ok(())
    }
}

struct Task {
    lambda: f64,
    seed: u64,
    index: usize,
}

#[derive(Default)]
struct SeedResult {
    geometry: Option<Geometry>,
    predicted_acc: Option<f64>,
    measured_acc: Option<f64>,
    grok: Option<GrokkingTimes>,
    abort: Option<(String, String)>,
    failure: Option<String>,
}

pub(super) fn run(mut cfg: LambdaSweepConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    overrides.apply(&mut cfg.base_seed, &mut cfg.workers);
    cfg.validate()?;
    let seeds = seed_list(cfg.base_seed, cfg.seeds);
    write_config_echo(dir, "lambda-sweep", &cfg, &seeds)?;
    let tasks: Vec<Task> = cfg
        .lambdas
        .iter()
        .flat_map(|&lambda| seeds.iter().enumerate().map(move |(index, &seed)| Task { lambda, seed, index }))
        .collect();
    let criterion = GrokCriterion::Accuracy {
        level: cfg.accuracy_threshold,
    };

    let results = par_map(cfg.workers, &tasks, |task| {
        let mut out = SeedResult::default();
        if let Err(e) = evaluate(&cfg, task, criterion, dir, &mut out) {
            out.failure = Some(e.to_string());
        }
        out
    })?;

    let mut report = RunReport::new("lambda-sweep", dir);
    let mut seed_rows = Vec::new();
    for (task, r) in tasks.iter().zip(&results) {
        report.cells += 1;
        report.failures += r.failure.is_some() as usize;
        if let Some(a) = &r.abort {
            report.aborted.push(a.clone());
        }
        let geo = r.geometry;
        seed_rows.push(vec![
            fmt(task.lambda),
            task.seed.to_string(),
            geo.map_or_else(String::new, |g| g.separable.to_string()),
            fmt_opt(geo.and_then(|g| g.margin)),
            fmt_opt(geo.and_then(|g| g.s_infinity)),
            fmt_opt(r.predicted_acc),
            fmt_opt(r.measured_acc),
            fmt_opt(r.grok.and_then(|g| g.t_train)),
            fmt_opt(r.grok.and_then(|g| g.t_gen)),
            fmt_opt(r.grok.and_then(|g| g.delta)),
            r.failure.clone().unwrap_or_default(),
        ]);
    }
    write_table(&dir.join("seeds.csv"), &SEED_HEADER, &seed_rows)?;

    let d_of = |l: f64| dimension_for(l, cfg.n);
    let mut summary = Vec::new();
    let mut plots = Plots::default();
    for &lambda in &cfg.lambdas {
        let rs: Vec<&SeedResult> = tasks
            .iter()
            .zip(&results)
            .filter(|(t, _)| t.lambda == lambda)
            .map(|(_, r)| r)
            .collect();
        let total = rs.len();
        let failures = rs.iter().filter(|r| r.failure.is_some()).count();
        let geos: Vec<Geometry> = rs.iter().filter_map(|r| r.geometry).collect();
        let separable = geos.iter().filter(|g| g.separable).count();
        let decided = geos.len();
        let frac = separable as f64 / decided.max(1) as f64;
        let d = d_of(lambda);
        let exact = wendel_probability(cfg.n as u64, d as u64)?;
        let z = binomial_z(frac, exact, decided);
        let s_inf: Vec<f64> = geos.iter().filter_map(|g| g.s_infinity).collect();
        let margins: Vec<f64> = geos.iter().filter_map(|g| g.margin).collect();
        let predicted: Vec<f64> = rs.iter().filter_map(|r| r.predicted_acc).collect();
        let measured: Vec<f64> = rs
            .iter()
            .filter(|r| r.predicted_acc.is_some())
            .filter_map(|r| r.measured_acc)
            .collect();
        let paired: Vec<f64> = rs
            .iter()
            .filter_map(|r| Some(r.measured_acc? - r.predicted_acc?))
            .collect();
        let groks: Vec<&GrokkingTimes> = rs.iter().filter_map(|r| r.grok.as_ref()).collect();
        let deltas: Vec<f64> = groks.iter().filter_map(|g| g.delta).collect();
        let (s_mean, s_err) = mean_stderr(&s_inf);
        let (m_mean, m_err) = mean_stderr(&margins);
        let (p_mean, _) = mean_stderr(&predicted);
        let (a_mean, a_err) = mean_stderr(&measured);
        let (diff_mean, diff_err) = mean_stderr(&paired);
        let (g_mean, g_err) = mean_stderr(&deltas);
        summary.push(vec![
            fmt(lambda),
            d.to_string(),
            total.to_string(),
            failures.to_string(),
            separable.to_string(),
            fmt(frac),
            fmt(exact),
            fmt(z),
            s_inf.len().to_string(),
            (total - s_inf.len()).to_string(),
            fmt(s_mean),
            fmt(s_err),
            fmt(m_mean),
            fmt(m_err),
            fmt(p_mean),
            fmt(a_mean),
            fmt(a_err),
            fmt(diff_mean),
            fmt(diff_err),
            groks.len().to_string(),
            (groks.len() - deltas.len()).to_string(),
            fmt(g_mean),
            fmt(g_err),
        ]);
        plots.push(lambda, frac, exact, s_mean, p_mean, a_mean, g_mean);
    }
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &summary)?;
    plots.write(dir)?;
    Ok(report)
}

fn evaluate(cfg: &LambdaSweepConfig, task: &Task, criterion: GrokCriterion, dir: &Path, out: &mut SeedResult) -> Result<()> {
    let d = dimension_for(task.lambda, cfg.n);
    let data = sample_isotropic(cfg.n, d, cfg.sigma, stream_seed(task.seed, Stream::Data))?;
    let geo = Geometry::of(&data)?;
    out.geometry = Some(geo);
    out.predicted_acc = geo.margin.map(|m| limiting_accuracy_from_margin(m, cfg.sigma)).transpose()?;
    let Some(spec) = &cfg.dynamics else {
        return Ok(());
    };
    if task.index >= cfg.dynamics_seeds {
        return Ok(());
    }
    let id = format!("lambda_{}_seed_{}", task.lambda, task.seed);
    let traj = train(&data, &default_init(d, stream_seed(task.seed, Stream::Init)), &spec.config())?;
    write_rows(&dir.join(&id).join("trajectory.csv"), &traj.rows)?;
    if let Some(reason) = &traj.abort {
        out.abort = Some((id, reason.clone()));
    }
    out.measured_acc = Some(traj.last().gen_acc);
    out.grok = Some(grokking_time(&traj, criterion));
    Ok(())
}

/// `(p̂ − p)/√(p(1−p)/n)`; zero when a degenerate `p` is matched exactly.
pub(super) fn binomial_z(empirical: f64, p: f64, trials: usize) -> f64 {
    let var = p * (1.0 - p) / trials as f64;
    if var > 0.0 {
        (empirical - p) / var.sqrt()
    } else if empirical == p {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Default)]
struct Plots {
    separable: Vec<(f64, f64)>,
    wendel: Vec<(f64, f64)>,
    s_inf: Vec<(f64, f64)>,
    predicted: Vec<(f64, f64)>,
    measured: Vec<(f64, f64)>,
    grok: Vec<(f64, f64)>,
}

impl Plots {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, lambda: f64, frac: f64, exact: f64, s_inf: f64, predicted: f64, measured: f64, grok: f64) {
        self.separable.push((lambda, frac));
        self.wendel.push((lambda, exact));
        self.s_inf.push((lambda, s_inf));
        self.predicted.push((lambda, predicted));
        self.measured.push((lambda, measured));
        self.grok.push((lambda, grok));
    }

    fn write(self, dir: &Path) -> Result<()> {
        let sep = LinePlot::new("separable fraction", "lambda", "fraction")
            .with(Series::line("measured", self.separable, 0).markers())
            .with(Series::line("exact", self.wendel, 1));
        let s = LinePlot::new("norm of the bias-free minimizer", "lambda", "|S_inf|")
            .log_y()
            .with(Series::line("mean", self.s_inf, 0));
        let acc = LinePlot::new("limiting accuracy", "lambda", "gen accuracy")
            .with(Series::line("measured", self.measured, 0).markers())
            .with(Series::line("predicted", self.predicted, 1));
        let grok = LinePlot::new("grokking time", "lambda", "t_gen - t_train")
            .log_y()
            .with(Series::line("mean", self.grok, 0));
        write_text(&dir.join("separable.svg"), &sep.render())?;
        write_text(&dir.join("s_infinity.svg"), &s.render())?;
        write_text(&dir.join("accuracy.svg"), &acc.render())?;
        write_text(&dir.join("grokking.svg"), &grok.render())
    }
}

const SEED_HEADER: [&str; 11] = [
    "lambda",
    "seed",
    "separable",
    "margin",
    "s_infinity_norm",
    "predicted_acc",
    "measured_acc",
    "t_train",
    "t_gen",
    "grok_delta",
    "failure",
];

const SUMMARY_HEADER: [&str; 23] = [
    "lambda",
    "d",
    "seeds",
    "failures",
    "separable",
    "separable_fraction",
    "wendel_exact",
    "wendel_z",
    "s_infinity_included",
    "s_infinity_excluded",
    "s_infinity_mean",
    "s_infinity_stderr",
    "margin_mean",
    "margin_stderr",
    "predicted_acc_mean",
    "measured_acc_mean",
    "measured_acc_stderr",
    "acc_error_mean",
    "acc_error_stderr",
    "grok_runs",
    "grok_censored",
    "grok_delta_mean",
    "grok_delta_stderr",
];
