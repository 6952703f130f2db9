use super::common::*;
use super::svg::{LinePlot, Series};
use crate::analytic::limiting_accuracy_from_margin;
use crate::dynamics::GrokCriterion;
use crate::error::{Error, Result};
use crate::ode::Tolerances;
use crate::toymodel::{grokking_prediction, toy_ode, toy_s_infinity, Regime, ToyConfig, ToyHorizon, ToySolution};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Two-point model trajectories over λ plus the grokking-time regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyExperimentConfig {
    pub lambdas: Vec<f64>,
    pub sigma: f64,
    pub eta: f64,
    pub s0: f64,
    pub b0: f64,
    /// Integrate until `ln(1 + t)` reaches this value.
    pub log_t_max: f64,
    /// Natural log of the loss level that defines the grokking times.
    pub grok_log_epsilon: f64,
    /// Decades of `t` used for the late-time slope fit.
    pub fit_decades: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub regression: Option<ToyRegression>,
    pub workers: usize,
}

/// Loss-threshold grokking times over gaps `1 − 2λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyRegression {
    pub gaps: Vec<f64>,
    pub sigma: f64,
    pub eta: f64,
    /// Natural log of the loss threshold.
    pub log_epsilon: f64,
    pub log_t_max: f64,
}

impl Default for ToyRegression {
    fn default() -> Self {
        Self {
            gaps: (0..7).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect(),
            sigma: 20.0,
            eta: 0.01,
            log_epsilon: -50.0 * std::f64::consts::LN_10,
            log_t_max: 200.0,
        }
    }
}

impl Default for ToyExperimentConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.05, 0.25, 0.45, 0.49, 0.5, 0.55, 0.8],
            sigma: 5.0,
            eta: 0.01,
            s0: 0.0,
            b0: 0.0,
            log_t_max: 60.0,
            grok_log_epsilon: -5.0 * std::f64::consts::LN_10,
            fit_decades: 10.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            regression: Some(ToyRegression::default()),
            workers: 0,
        }
    }
}

impl ToyExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid("lambda", &self.lambdas, |l| (0.0..=1.0).contains(&l))?;
        for &l in &self.lambdas {
            ToyConfig::new(l, self.sigma, self.eta, self.s0, self.b0).map_err(config_error)?;
        }
        require(self.log_t_max > 0.0 && self.log_t_max <= 700.0, "log_t_max must lie in (0, 700]")?;
        require(self.fit_decades > 0.0, "fit_decades must be > 0")?;
        require(self.grok_log_epsilon.is_finite(), "grok_log_epsilon must be finite")?;
        ensure_positive("rel_tol", self.rel_tol)?;
        ensure_positive("abs_tol", self.abs_tol)?;
        if let Some(r) = &self.regression {
            check_grid("gap", &r.gaps, |g| g > 0.0 && g < 1.0)?;
            ensure_positive("regression sigma", r.sigma)?;
            ensure_positive("regression eta", r.eta)?;
            require(r.log_epsilon.is_finite(), "log_epsilon must be finite")?;
            require(r.log_t_max > 0.0 && r.log_t_max <= 700.0, "regression log_t_max must lie in (0, 700]")?;
        }
        Ok(())
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel: self.rel_tol,
            abs: self.abs_tol,
        }
    }
}

pub(super) fn run(mut cfg: ToyExperimentConfig, dir: &Path, overrides: &Overrides) -> Result<RunReport> {
    let mut unused_seed = 0;
    overrides.apply(&mut unused_seed, &mut cfg.workers);
    cfg.validate()?;
    write_config_echo(dir, "toy", &cfg, &[])?;
    let tol = cfg.tolerances();
    let sols = par_map(cfg.workers, &cfg.lambdas, |&lambda| -> Result<ToySolution> {
        let tc = ToyConfig::new(lambda, cfg.sigma, cfg.eta, cfg.s0, cfg.b0)?;
        let sol = toy_ode(&tc, tol, ToyHorizon::LogT(cfg.log_t_max))?;
        write_atomic(&dir.join(format!("lambda_{lambda}")).join("trajectory.csv"), |w| sol.write_csv(w))?;
        Ok(sol)
    })?;

    let mut report = RunReport::new("toy", dir);
    let criterion = GrokCriterion::Loss {
        log_level: cfg.grok_log_epsilon,
    };
    let mut table = Vec::new();
    let mut loss = LinePlot::new("toy model loss", "t", "log10 loss").log_x();
    let mut acc = LinePlot::new("toy model accuracy", "t", "accuracy").log_x();
    for (k, (&lambda, sol)) in cfg.lambdas.iter().zip(sols).enumerate() {
        let sol = sol?;
        report.cells += 1;
        let rows = sol.rows();
        let last = *rows.last().ok_or_else(|| Error::Degenerate("empty toy trajectory".into()))?;
        let g = grokking_time_of(&sol, criterion);
        let margin = (sol.regime == Regime::Separable).then_some(cfg.sigma * (2.0 * lambda - 1.0));
        let (pb, ps) = match margin {
            Some(m) => (Some(-1.0 / (1.0 + m * m)), Some(m / (1.0 + m * m))),
            None if lambda < 0.5 => (Some(-1.0), Some(0.0)),
            None => (None, None),
        };
        let s_limit = (lambda < 0.5).then(|| toy_s_infinity(lambda).map(|s| s / cfg.sigma)).transpose()?;
        let predicted_acc = margin.map(|m| limiting_accuracy_from_margin(m, cfg.sigma)).transpose()?;
        table.push(vec![
            fmt(lambda),
            regime_name(sol.regime).into(),
            fmt(last.t.ln_1p()),
            fmt(last.s_norm),
            fmt_opt(s_limit),
            fmt(last.b),
            fmt_opt(late_log_slope(&rows, cfg.fit_decades, |r| r.b)),
            fmt_opt(pb),
            fmt_opt(late_log_slope(&rows, cfg.fit_decades, |r| r.s_norm)),
            fmt_opt(ps),
            fmt(last.gen_acc),
            fmt_opt(predicted_acc),
            fmt_opt(g.0),
            fmt_opt(g.1),
            fmt_opt(g.0.zip(g.1).map(|(a, b)| b - a)),
        ]);
        let label = format!("lambda={lambda}");
        loss.series.push(Series::line(format!("train {label}"), series(&rows, |r| log10_loss(r.log_train_loss)), k));
        loss.series.push(Series::line("", series(&rows, |r| log10_loss(r.log_gen_loss)), k).dashed());
        acc.series.push(Series::line(format!("train {label}"), series(&rows, |r| r.train_acc), k));
        acc.series.push(Series::line("", series(&rows, |r| r.gen_acc), k).dashed());
    }
    write_table(&dir.join("summary.csv"), &SUMMARY_HEADER, &table)?;
    write_text(&dir.join("loss.svg"), &loss.render())?;
    write_text(&dir.join("accuracy.svg"), &acc.render())?;

    if let Some(reg) = &cfg.regression {
        regression(reg, tol, cfg.workers, dir)?;
    }
    Ok(report)
}

fn grokking_time_of(sol: &ToySolution, criterion: GrokCriterion) -> (Option<f64>, Option<f64>) {
    let g = sol.grokking_time(criterion);
    (g.t_train, g.t_gen)
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Inseparable => "inseparable",
        Regime::Critical => "critical",
        Regime::Separable => "separable",
    }
}

/// Result of the grokking-time regression.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

fn regression(reg: &ToyRegression, tol: Tolerances, workers: usize, dir: &Path) -> Result<RegressionFit> {
    let criterion = GrokCriterion::Loss {
        log_level: reg.log_epsilon,
    };
    let rows = par_map(workers, &reg.gaps, |&gap| -> Result<Vec<f64>> {
        let lambda = 0.5 * (1.0 - gap);
        let tc = ToyConfig::new(lambda, reg.sigma, reg.eta, 0.0, 0.0)?;
        let sol = toy_ode(&tc, tol, ToyHorizon::LogT(reg.log_t_max))?;
        let g = sol.grokking_time(criterion);
        let p = grokking_prediction(lambda, reg.eta, reg.log_epsilon)?;
        let (tt, tg) = (g.t_train.unwrap_or(f64::NAN), g.t_gen.unwrap_or(f64::NAN));
        Ok(vec![
            gap,
            lambda,
            gap.ln().abs(),
            tt.ln(),
            tg.ln(),
            (tg / tt).ln().sqrt(),
            p.log_t_train,
            p.log_t_gen,
            (p.log_t_gen - p.log_t_train).sqrt(),
        ])
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[2], r[5])).filter(|p| p.1.is_finite()).collect();
    let fit = least_squares(&pts);
    let table: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| fmt(*v)).collect()).collect();
    write_table(&dir.join("grok_regression.csv"), &REGRESSION_HEADER, &table)?;
    write_table(
        &dir.join("grok_regression_fit.csv"),
        &["slope", "intercept", "points", "reference_slope"],
        &[vec![
            fmt(fit.slope),
            fmt(fit.intercept),
            fit.points.to_string(),
            fmt(std::f64::consts::FRAC_1_SQRT_2),
        ]],
    )?;
    let predicted: Vec<(f64, f64)> = rows.iter().map(|r| (r[2], r[8])).collect();
    let plot = LinePlot::new("grokking time regression", "|ln(1 - 2 lambda)|", "sqrt(ln(t_gen / t_train))")
        .with(Series::line("measured", pts, 0).markers())
        .with(Series::line("predicted", predicted, 1));
    write_text(&dir.join("grok_regression.svg"), &plot.render())?;
    Ok(fit)
}

pub(crate) fn least_squares(pts: &[(f64, f64)]) -> RegressionFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    RegressionFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    }
}

const SUMMARY_HEADER: [&str; 15] = [
    "lambda",
    "regime",
    "final_log1p_t",
    "final_s_norm",
    "s_infinity",
    "final_b",
    "b_log_slope",
    "predicted_b_log_slope",
    "s_norm_log_slope",
    "predicted_s_norm_log_slope",
    "final_gen_acc",
    "predicted_limit_acc",
    "t_train",
    "t_gen",
    "grok_delta",
];

const REGRESSION_HEADER: [&str; 9] = [
    "gap",
    "lambda",
    "abs_log_gap",
    "log_t_train",
    "log_t_gen",
    "sqrt_log_ratio",
    "predicted_log_t_train",
    "predicted_log_t_gen",
    "predicted_sqrt_log_ratio",
];
