//! Two-point, one-dimensional model: `x₁ = −σ`, `x₂ = σ(1 − 2λ)`, constant labels and loss
//! `½(e^{Sx₁+b} + e^{Sx₂+b})`.
//!
//! Internally everything runs in the normalized variable `S̃ = σS` with points `−1` and
//! `1 − 2λ`; the spatial rate becomes `ησ²` while the bias keeps rate `η`.

use crate::analytic::{gen_accuracy, GenMetricsInput};
use crate::dynamics::{grokking_time_rows, write_rows_csv, GrokCriterion, GrokkingTimes, TrajectoryRow};
use crate::error::{invalid, Error, Result};
use crate::ode::{Dopri5, Tolerances};
use crate::special::log_add_exp;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, LN_2, SQRT_2};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub lambda: f64,
    pub sigma: f64,
    pub eta: f64,
    pub s0: f64,
    pub b0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Inseparable,
    Critical,
    Separable,
}

impl Regime {
    pub fn of(lambda: f64) -> Self {
        if lambda < 0.5 {
            Regime::Inseparable
        } else if lambda == 0.5 {
            Regime::Critical
        } else {
            Regime::Separable
        }
    }
}

impl ToyConfig {
    pub fn new(lambda: f64, sigma: f64, eta: f64, s0: f64, b0: f64) -> Result<Self> {
        let cfg = Self { lambda, sigma, eta, s0, b0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite and > 0, got {}", self.sigma)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("eta must be finite and > 0, got {}", self.eta)));
        }
        if !self.s0.is_finite() || !self.b0.is_finite() {
            return Err(invalid("initial conditions must be finite"));
        }
        Ok(())
    }

    pub fn x1(&self) -> f64 {
        -self.sigma
    }

    pub fn x2(&self) -> f64 {
        self.sigma * (1.0 - 2.0 * self.lambda)
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.lambda)
    }

    /// Normalized second point `1 − 2λ`.
    fn xn(&self) -> f64 {
        1.0 - 2.0 * self.lambda
    }

    /// Spatial rate `ησ²`.
    fn kappa(&self) -> f64 {
        self.eta * self.sigma * self.sigma
    }
}

/// `S∞ = ln(1 − 2λ) / (2(λ − 1))` at `σ = 1`; divide by `σ` for general scale.
pub fn toy_s_infinity(lambda: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&lambda) {
        return Err(invalid(format!("S_inf exists for lambda in [0, 1/2), got {lambda}")));
    }
    Ok((-(-2.0 * lambda).ln_1p() / (2.0 * (1.0 - lambda))).abs())
}

/// Principal branch of the Lambert W function.
pub fn lambert_w0(x: f64) -> Result<f64> {
    const BRANCH: f64 = -1.0 / E;
    if x.is_nan() || x < BRANCH {
        return Err(Error::Domain(format!("lambert_w0 needs x >= -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x > 1e300 {
        return Ok(lambert_w0_of_exp(x.ln()));
    }
    let mut w = if x < -0.32 {
        // expansion about the branch point
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        0.5 * x.ln_1p() + 0.25 * x / (1.0 + x)
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 || w == -1.0 {
            break;
        }
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).max(-1.0);
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// `W₀(e^l)`, usable when `e^l` overflows: Newton on `w + ln w = l`.
pub fn lambert_w0_of_exp(l: f64) -> f64 {
    if l < 690.0 {
        return lambert_w0(l.exp()).expect("argument is positive");
    }
    let mut w = l - l.ln();
    for _ in 0..50 {
        let f = w + w.ln() - l;
        let step = f / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}

/// The three exactly solvable configurations, labelled by the normalized second point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedFormCase {
    /// `x₂ = 1`, `λ = 0`.
    A,
    /// `x₂ = 0`, `λ = ½`.
    B,
    /// `x₂ = −1`, `λ = 1`.
    C,
}

impl ClosedFormCase {
    pub fn lambda(self) -> f64 {
        match self {
            ClosedFormCase::A => 0.0,
            ClosedFormCase::B => 0.5,
            ClosedFormCase::C => 1.0,
        }
    }
}

/// One state along a toy trajectory. `s` is the unnormalized weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyPoint {
    pub tau: f64,
    /// `ln(1 + t)`; carries `t` past the double range.
    pub log1p_t: f64,
    pub s: f64,
    pub b: f64,
}

impl ToyPoint {
    pub fn t(&self) -> f64 {
        self.log1p_t.exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ToySource {
    ClosedForm(ClosedFormCase),
    Ode,
}

#[derive(Debug, Clone)]
pub struct ToySolution {
    pub config: ToyConfig,
    pub regime: Regime,
    pub source: ToySource,
    pub points: Vec<ToyPoint>,
}

fn ln_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp()).ln_1p() - LN_2
}

fn ln_tanh(x: f64) -> f64 {
    let e = (-2.0 * x).exp();
    (-e).ln_1p() - e.ln_1p()
}

/// Exact solution for one of [`ClosedFormCase`].
#[derive(Debug, Clone, Copy)]
pub struct ClosedForm {
    pub case: ClosedFormCase,
    pub config: ToyConfig,
    /// `atanh(e^{S̃₀})`, case A only.
    theta0: f64,
}

pub fn closed_form(case: ClosedFormCase, cfg: &ToyConfig) -> Result<ClosedForm> {
    let mut config = *cfg;
    config.lambda = case.lambda();
    config.validate()?;
    let sn0 = config.sigma * config.s0;
    let theta0 = if case == ClosedFormCase::A {
        if sn0 >= 0.0 {
            return Err(Error::Domain(format!("case A needs S0 < 0 so that atanh(e^S0) exists, got {}", config.s0)));
        }
        // atanh(u) = ½ ln((1 + u)/(1 − u)) with 1 − u = −expm1(S̃₀)
        0.5 * (sn0.exp().ln_1p() - (-sn0.exp_m1()).ln())
    } else {
        0.0
    };
    Ok(ClosedForm { case, config, theta0 })
}

impl ClosedForm {
    fn unit_sigma(&self) -> Result<()> {
        if self.config.sigma != 1.0 {
            return Err(invalid("the t <-> tau maps are closed-form only at sigma = 1"));
        }
        Ok(())
    }

    /// Normalized weight and bias at conformal time `tau`.
    fn normalized(&self, tau: f64) -> (f64, f64) {
        let c = &self.config;
        let (k, s2) = (c.kappa(), c.sigma * c.sigma);
        let (sn0, b0) = (c.sigma * c.s0, c.b0);
        match self.case {
            ClosedFormCase::A => {
                let theta = 0.5 * k * tau + self.theta0;
                let sn = ln_tanh(theta);
                let b = b0 - (ln_sinh(2.0 * theta) - ln_sinh(2.0 * self.theta0)) / s2;
                (sn, b)
            }
            ClosedFormCase::B => {
                let sn = log_add_exp(sn0, (0.5 * k * tau).ln());
                (sn, b0 - (sn - sn0) / s2 - 0.5 * c.eta * tau)
            }
            ClosedFormCase::C => {
                let sn = sn0 + (k * tau * (-sn0).exp()).ln_1p();
                (sn, b0 - (sn - sn0) / s2)
            }
        }
    }

    pub fn at_tau(&self, tau: f64) -> ToyPoint {
        let (sn, b) = self.normalized(tau);
        let log1p_t = self.t_of_tau(tau).map_or(f64::NAN, f64::ln_1p);
        ToyPoint {
            tau,
            log1p_t,
            s: sn / self.config.sigma,
            b,
        }
    }

    /// `t(τ) = ∫ e^{−b} dτ`, at `σ = 1`.
    pub fn t_of_tau(&self, tau: f64) -> Result<f64> {
        self.unit_sigma()?;
        let c = &self.config;
        let (eta, s0, b0) = (c.eta, c.s0, c.b0);
        Ok(match self.case {
            ClosedFormCase::A => {
                let th0 = 2.0 * self.theta0;
                let th = eta * tau + th0;
                (-b0).exp() * (th.cosh() - th0.cosh()) / (eta * th0.sinh())
            }
            ClosedFormCase::B => {
                let k = 0.5 * eta;
                let am1 = s0.exp_m1();
                ((k * tau).exp() * (am1 + k * tau) - am1) / (k * (s0 + b0).exp())
            }
            ClosedFormCase::C => (-b0).exp() * (tau + 0.5 * eta * tau * tau * (-s0).exp()),
        })
    }

    /// Inverse of [`ClosedForm::t_of_tau`]; case B goes through `W₀`.
    pub fn tau_of_t(&self, t: f64) -> Result<f64> {
        self.unit_sigma()?;
        if !(t >= 0.0) {
            return Err(invalid(format!("t must be >= 0, got {t}")));
        }
        let c = &self.config;
        let (eta, s0, b0) = (c.eta, c.s0, c.b0);
        Ok(match self.case {
            ClosedFormCase::A => {
                let th0 = 2.0 * self.theta0;
                let th = (th0.cosh() + eta * t * b0.exp() * th0.sinh()).acosh();
                (th - th0) / eta
            }
            ClosedFormCase::B => {
                let k = 0.5 * eta;
                let am1 = s0.exp_m1();
                let inner = k * t * (s0 + b0).exp() + am1;
                let w = if inner > 1e300 {
                    lambert_w0_of_exp(am1 + inner.ln())
                } else {
                    lambert_w0(inner * am1.exp())?
                };
                (w - am1) / k
            }
            ClosedFormCase::C => {
                let te = t * b0.exp();
                2.0 * te / (1.0 + (1.0 + 2.0 * eta * (-s0).exp() * te).sqrt())
            }
        })
    }

    pub fn at_t(&self, t: f64) -> Result<ToyPoint> {
        let tau = self.tau_of_t(t)?;
        let mut p = self.at_tau(tau);
        p.log1p_t = t.ln_1p();
        Ok(p)
    }

    pub fn solution(&self, taus: &[f64]) -> ToySolution {
        ToySolution {
            config: self.config,
            regime: self.config.regime(),
            source: ToySource::ClosedForm(self.case),
            points: taus.iter().map(|&tau| self.at_tau(tau)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ToyHorizon {
    Tau(f64),
    /// Stop once `ln(1 + t)` reaches this value.
    LogT(f64),
}

/// Conformal-time drift `(dS̃/dτ, db/dτ)` in normalized variables.
fn drift(cfg: &ToyConfig, sn: f64) -> (f64, f64) {
    let x = cfg.xn();
    let (ex, em) = ((sn * x).exp(), (-sn).exp());
    (-0.5 * cfg.kappa() * (x * ex - em), -0.5 * cfg.eta * (ex + em))
}

/// Integrate the toy gradient flow in conformal time, recording every accepted step.
pub fn toy_ode(cfg: &ToyConfig, tol: Tolerances, horizon: ToyHorizon) -> Result<ToySolution> {
    cfg.validate()?;
    let tau_end = match horizon {
        ToyHorizon::Tau(v) if v > 0.0 && v.is_finite() => v,
        ToyHorizon::LogT(v) if v > 0.0 && v <= 700.0 => f64::INFINITY,
        other => return Err(invalid(format!("bad horizon {other:?}"))),
    };
    let sigma = cfg.sigma;
    let mut rhs = |_tau: f64, y: &[f64], dy: &mut [f64]| {
        let (ds, db) = drift(cfg, y[0]);
        dy[0] = ds;
        dy[1] = db;
        dy[2] = (-y[1] - y[2]).exp();
    };
    let mut ode = Dopri5::new(0.0, vec![sigma * cfg.s0, cfg.b0, 0.0], tol);
    let mut points = vec![ToyPoint {
        tau: 0.0,
        log1p_t: 0.0,
        s: cfg.s0,
        b: cfg.b0,
    }];
    loop {
        ode.step(tau_end, &mut rhs)?;
        let y = ode.y();
        points.push(ToyPoint {
            tau: ode.t(),
            log1p_t: y[2],
            s: y[0] / sigma,
            b: y[1],
        });
        let done = match horizon {
            ToyHorizon::Tau(v) => ode.t() >= v,
            ToyHorizon::LogT(v) => y[2] >= v,
        };
        if done {
            break;
        }
    }
    Ok(ToySolution {
        config: *cfg,
        regime: cfg.regime(),
        source: ToySource::Ode,
        points,
    })
}

impl ToySolution {
    /// Trajectory rows: train metrics on the two points, gen metrics for `N(0, σ²)` inputs.
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let c = &self.config;
        let xs = [-1.0, c.xn()];
        self.points
            .iter()
            .map(|p| {
                let sn = c.sigma * p.s;
                let log_train_loss = p.b + log_add_exp(sn * xs[0], sn * xs[1]) - LN_2;
                let train_acc = xs.iter().filter(|&&x| sn * x + p.b <= 0.0).count() as f64 / 2.0;
                let gen_acc = GenMetricsInput::new(p.s.abs(), p.b, c.sigma).map_or(f64::NAN, |g| gen_accuracy(&g));
                TrajectoryRow {
                    t: p.t(),
                    tau: p.tau,
                    s_norm: p.s.abs(),
                    b: p.b,
                    log_train_loss,
                    train_acc,
                    log_gen_loss: p.b + 0.5 * sn * sn,
                    gen_acc,
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows_csv(&self.rows(), w)
    }

    pub fn grokking_time(&self, criterion: GrokCriterion) -> GrokkingTimes {
        grokking_time_rows(&self.rows(), criterion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptotics {
    pub regime: Regime,
    /// `2λ − 1` when separable.
    pub margin: Option<f64>,
    /// Late-time slope of `b` against `log t`.
    pub b_log_coefficient: f64,
    /// Late-time slope of `‖S‖` against `log t` (zero when it converges or grows sub-logarithmically).
    pub s_log_coefficient: f64,
    /// Limit of `‖S‖` when it exists.
    pub s_limit: Option<f64>,
}

/// Predicted late-time behavior at `σ = 1`.
pub fn asymptotics(lambda: f64) -> Result<Asymptotics> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let regime = Regime::of(lambda);
    Ok(match regime {
        Regime::Inseparable => Asymptotics {
            regime,
            margin: None,
            b_log_coefficient: -1.0,
            s_log_coefficient: 0.0,
            s_limit: Some(toy_s_infinity(lambda)?),
        },
        Regime::Critical => Asymptotics {
            regime,
            margin: None,
            b_log_coefficient: -1.0,
            s_log_coefficient: 0.0,
            s_limit: None,
        },
        Regime::Separable => {
            let m = 2.0 * lambda - 1.0;
            let d = 1.0 + m * m;
            Asymptotics {
                regime,
                margin: Some(m),
                b_log_coefficient: -1.0 / d,
                s_log_coefficient: m / d,
                s_limit: None,
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateSlopes {
    pub b: f64,
    pub s: f64,
    pub points: usize,
}

/// Least-squares slopes of `b` and `‖S‖` against `log t` over the last `decades` decades.
pub fn fit_late_slopes(sol: &ToySolution, decades: f64) -> Result<LateSlopes> {
    let end = sol.points.last().map_or(0.0, |p| p.log1p_t);
    let start = end - decades * std::f64::consts::LN_10;
    let pts: Vec<&ToyPoint> = sol.points.iter().filter(|p| p.log1p_t >= start && p.log1p_t > 0.0).collect();
    if pts.len() < 3 || start <= 0.0 {
        return Err(invalid("run too short for a late-time fit"));
    }
    let slope = |f: &dyn Fn(&ToyPoint) -> f64| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.log1p_t).sum::<f64>() / n;
        let my = pts.iter().map(|p| f(p)).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.log1p_t - mx) * (f(p) - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.log1p_t - mx).powi(2)).sum();
        sxy / sxx
    };
    Ok(LateSlopes {
        b: slope(&|p| p.b),
        s: slope(&|p| p.s.abs()),
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrokPrediction {
    pub log_t_train: f64,
    pub log_t_gen: f64,
    /// `|ln(1 − 2λ)| / √2`, the predicted `√(ln(t_gen / t_train))` up to the `ln 2` offset.
    pub slope_check: f64,
}

/// Loss-threshold grokking times, with the threshold given as `ln ε`.
pub fn grokking_prediction(lambda: f64, eta: f64, log_epsilon: f64) -> Result<GrokPrediction> {
    if !(0.0..0.5).contains(&lambda) {
        return Err(invalid(format!("prediction needs lambda in [0, 1/2), got {lambda}")));
    }
    if !(eta > 0.0) {
        return Err(invalid("eta must be > 0"));
    }
    let l = (-2.0 * lambda).ln_1p();
    let log_t_train = -eta.ln() - log_epsilon;
    Ok(GrokPrediction {
        log_t_train,
        log_t_gen: log_t_train + LN_2 + 0.5 * l * l,
        slope_check: l.abs() / SQRT_2,
    })
}

/// Predicted constant offset `−(1/x₁) ln|x₁/x₂|` of the weight from its divergent part.
pub fn subleading_correction(x1: f64, x2: f64) -> Result<f64> {
    if !(x1 < 0.0) {
        return Err(invalid(format!("x1 must be < 0, got {x1}")));
    }
    if x2 == 0.0 || !x2.is_finite() {
        return Err(invalid("x2 must be finite and nonzero"));
    }
    Ok(-(x1 / x2).abs().ln() / x1)
}
