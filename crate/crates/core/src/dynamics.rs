//! Training dynamics: gradient descent, Adam and gradient flow, with trajectories recorded
//! on a geometric time grid.
//!
//! Gradient flow integrates `dS/dt = −η∇_S L`, `db/dt = −η ∂_b L` together with the conformal
//! time `dτ/dt = e^b`. Once `b` falls below a switch level the integration continues in `τ`
//! (with `ln(1 + t)` carried as a state variable), which keeps the late-time problem well
//! scaled when `e^b` is far below the smallest double.

use crate::analytic::{self, GenMetricsInput};
use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::model::{empirical_accuracy, gradient_scaled, log_empirical_loss, LossKind, Weights};
use crate::ode::{Dopri5, Tolerances};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Gd {
        eta: f64,
    },
    Adam {
        eta: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    GradientFlow {
        eta: f64,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
        #[serde(default = "default_abs_tol")]
        abs_tol: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

fn default_rel_tol() -> f64 {
    Tolerances::default().rel
}

fn default_abs_tol() -> f64 {
    Tolerances::default().abs
}

impl OptimizerKind {
    pub fn eta(&self) -> f64 {
        match *self {
            OptimizerKind::Gd { eta } | OptimizerKind::Adam { eta, .. } | OptimizerKind::GradientFlow { eta, .. } => eta,
        }
    }

    pub fn gradient_flow(eta: f64) -> Self {
        let tol = Tolerances::default();
        OptimizerKind::GradientFlow {
            eta,
            rel_tol: tol.rel,
            abs_tol: tol.abs,
        }
    }

    /// The settings used for the plateau experiment: β₁ = 0.8, β₂ = 0.9.
    pub fn adam(eta: f64) -> Self {
        OptimizerKind::Adam {
            eta,
            beta1: 0.8,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// How generalization metrics are computed for each recorded row.
#[derive(Debug, Clone, Default)]
pub enum GenEvaluator {
    /// Closed form when the training data comes from an isotropic Gaussian, otherwise none.
    #[default]
    Auto,
    /// Closed form for isotropic Gaussian inputs of the given scale.
    Analytic { sigma: f64 },
    /// Empirical metrics on a held-out sample.
    TestSet(Arc<Dataset>),
    /// Gen columns are NaN.
    Off,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub loss: LossKind,
    /// Horizon in units of `t` (gradient steps for the discrete optimizers).
    pub max_time: f64,
    /// Ratio between consecutive record times.
    pub record_factor: f64,
    /// First nonzero record time.
    pub record_start: f64,
    /// Explicit record times, replacing the geometric grid.
    pub record_times: Option<Vec<f64>>,
    /// Train the bias; when false `b` stays at its initial value.
    pub fit_bias: bool,
    /// Gradient flow switches to conformal-time integration once `b` drops below this.
    pub tau_switch_b: f64,
    pub evaluator: GenEvaluator,
    /// Keep the weights at every record.
    pub keep_weights: bool,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, loss: LossKind, max_time: f64) -> Self {
        Self {
            kind,
            loss,
            max_time,
            record_factor: 1.1,
            record_start: 1.0,
            record_times: None,
            fit_bias: true,
            tau_switch_b: -600.0,
            evaluator: GenEvaluator::Auto,
            keep_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            OptimizerKind::Gd { eta } => {
                if !(eta >= 0.0) || !eta.is_finite() {
                    return Err(invalid(format!("eta must be finite and >= 0, got {eta}")));
                }
            }
            OptimizerKind::Adam { eta, beta1, beta2, eps } => {
                if !(eta > 0.0) {
                    return Err(invalid(format!("eta must be > 0, got {eta}")));
                }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(invalid("adam betas must lie in [0, 1)"));
                }
                if !(eps > 0.0) {
                    return Err(invalid("adam eps must be > 0"));
                }
            }
            OptimizerKind::GradientFlow { eta, rel_tol, abs_tol } => {
                if !(eta > 0.0) || !eta.is_finite() {
                    return Err(invalid(format!("eta must be finite and > 0, got {eta}")));
                }
                if !(rel_tol > 0.0) || !(abs_tol > 0.0) {
                    return Err(invalid("integrator tolerances must be > 0"));
                }
            }
        }
        if !(self.max_time > 0.0) || !self.max_time.is_finite() {
            return Err(invalid(format!("max_time must be finite and > 0, got {}", self.max_time)));
        }
        if !(self.record_factor > 1.0) {
            return Err(invalid("record_factor must be > 1"));
        }
        if !(self.record_start > 0.0) {
            return Err(invalid("record_start must be > 0"));
        }
        if let Some(times) = &self.record_times {
            if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !(*t >= 0.0)) {
                return Err(invalid("record_times must be nonnegative and strictly increasing"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub tau: f64,
    pub s_norm: f64,
    pub b: f64,
    pub log_train_loss: f64,
    pub train_acc: f64,
    pub log_gen_loss: f64,
    pub gen_acc: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub init: Weights,
    pub final_weights: Weights,
    /// Weights at each row, when requested.
    pub snapshots: Vec<Weights>,
    pub config: OptimizerConfig,
    /// Why the run stopped early, if it did.
    pub abort: Option<String>,
}

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t",
    "tau",
    "s_norm",
    "b",
    "log_train_loss",
    "train_acc",
    "log_gen_loss",
    "gen_acc",
];

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has at least the initial row")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows_csv(&self.rows, w)
    }
}

/// Write rows under [`TRAJECTORY_HEADER`] with 17 significant digits.
pub fn write_rows_csv<W: Write>(rows: &[TrajectoryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        let vals = [r.t, r.tau, r.s_norm, r.b, r.log_train_loss, r.train_acc, r.log_gen_loss, r.gen_acc];
        out.write_record(vals.iter().map(|v| format!("{v:.16e}")))?;
    }
    out.flush()?;
    Ok(())
}

/// `‖S₀‖ = 0.1` in a uniformly random direction, `b₀ = 0`.
pub fn default_init(d: usize, seed: u64) -> Weights {
    let mut rng = SeededRng::new(seed);
    let s = rng.unit_vector(d).into_iter().map(|v| 0.1 * v).collect();
    Weights::new(s, 0.0)
}

enum ResolvedGen<'a> {
    Analytic(f64),
    TestSet(&'a Dataset),
    Off,
}

struct Recorder<'a> {
    data: &'a Dataset,
    loss: LossKind,
    gen: ResolvedGen<'a>,
    keep: bool,
    rows: Vec<TrajectoryRow>,
    snapshots: Vec<Weights>,
}

impl<'a> Recorder<'a> {
    fn new(data: &'a Dataset, cfg: &'a OptimizerConfig) -> Result<Self> {
        let gen = match &cfg.evaluator {
            GenEvaluator::Auto => match data.meta.generator.isotropic_sigma() {
                Some(sigma) if data.constant_labels() => ResolvedGen::Analytic(sigma),
                _ => ResolvedGen::Off,
            },
            GenEvaluator::Analytic { sigma } => {
                if !(*sigma > 0.0) {
                    return Err(invalid("analytic gen metrics need sigma > 0"));
                }
                ResolvedGen::Analytic(*sigma)
            }
            GenEvaluator::TestSet(test) => {
                if test.d() != data.d() {
                    return Err(Error::DimensionMismatch { expected: data.d(), got: test.d() });
                }
                ResolvedGen::TestSet(test.as_ref())
            }
            GenEvaluator::Off => ResolvedGen::Off,
        };
        Ok(Self {
            data,
            loss: cfg.loss,
            gen,
            keep: cfg.keep_weights,
            rows: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    fn record(&mut self, t: f64, tau: f64, w: &Weights) -> Result<()> {
        let s_norm = w.s_norm();
        let log_train_loss = log_empirical_loss(self.data, w, self.loss)?;
        if !s_norm.is_finite() || !log_train_loss.is_finite() {
            return Err(Error::NonFinite(format!("state overflowed at t = {t}")));
        }
        let train_acc = empirical_accuracy(self.data, w)?;
        let (log_gen_loss, gen_acc) = match &self.gen {
            ResolvedGen::Analytic(sigma) => {
                let input = GenMetricsInput::new(s_norm, w.b, *sigma)?;
                let lg = match self.loss {
                    LossKind::CrossEntropy => analytic::log_gen_loss(&input),
                    // E e^{σ‖S‖y + b} = e^{b + σ²‖S‖²/2}
                    LossKind::Exponential => w.b + 0.5 * input.spread().powi(2),
                };
                (lg, analytic::gen_accuracy(&input))
            }
            ResolvedGen::TestSet(test) => (
                log_empirical_loss(test, w, self.loss)?,
                empirical_accuracy(test, w)?,
            ),
            ResolvedGen::Off => (f64::NAN, f64::NAN),
        };
        self.rows.push(TrajectoryRow {
            t,
            tau,
            s_norm,
            b: w.b,
            log_train_loss,
            train_acc,
            log_gen_loss,
            gen_acc,
        });
        if self.keep {
            self.snapshots.push(w.clone());
        }
        Ok(())
    }
}

/// Record times after `t = 0`.
struct Schedule {
    explicit: Option<Vec<f64>>,
    index: usize,
    next: f64,
    factor: f64,
}

impl Schedule {
    fn new(cfg: &OptimizerConfig) -> Self {
        let explicit: Option<Vec<f64>> = cfg
            .record_times
            .as_ref()
            .map(|v| v.iter().copied().filter(|&t| t > 0.0 && t <= cfg.max_time).collect());
        let next = match &explicit {
            Some(v) => v.first().copied().unwrap_or(f64::INFINITY),
            None => cfg.record_start.min(cfg.max_time),
        };
        Self {
            explicit,
            index: 0,
            next,
            factor: cfg.record_factor,
        }
    }

    /// Move past `t`; the final horizon is always a record point.
    fn advance_past(&mut self, t: f64, max_time: f64) {
        while self.next <= t {
            self.next = match &self.explicit {
                Some(v) => {
                    self.index += 1;
                    v.get(self.index).copied().unwrap_or(f64::INFINITY)
                }
                None => {
                    let n = self.next * self.factor;
                    if self.next < max_time && n > max_time {
                        max_time
                    } else {
                        n
                    }
                }
            };
        }
    }

    fn wants_initial(&self) -> bool {
        true
    }
}

/// Train from `w0` and record the trajectory.
pub fn run(data: &Dataset, w0: &Weights, cfg: &OptimizerConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if w0.dim() != data.d() {
        return Err(Error::DimensionMismatch { expected: data.d(), got: w0.dim() });
    }
    if !w0.is_finite() {
        return Err(invalid("initial weights must be finite"));
    }
    let mut rec = Recorder::new(data, cfg)?;
    let mut sched = Schedule::new(cfg);
    if sched.wants_initial() {
        rec.record(0.0, 0.0, w0)?;
    }
    let outcome = match cfg.kind {
        OptimizerKind::Gd { eta } => run_discrete(data, w0, cfg, &mut rec, &mut sched, Discrete::Gd { eta }),
        OptimizerKind::Adam { eta, beta1, beta2, eps } => run_discrete(
            data,
            w0,
            cfg,
            &mut rec,
            &mut sched,
            Discrete::Adam { eta, beta1, beta2, eps },
        ),
        OptimizerKind::GradientFlow { eta, rel_tol, abs_tol } => run_flow(
            data,
            w0,
            cfg,
            eta,
            Tolerances { rel: rel_tol, abs: abs_tol },
            &mut rec,
            &mut sched,
        ),
    };
    let (final_weights, abort) = match outcome {
        Ok(w) => (w, None),
        Err((w, e)) => (w, Some(e.to_string())),
    };
    Ok(Trajectory {
        rows: rec.rows,
        init: w0.clone(),
        final_weights,
        snapshots: rec.snapshots,
        config: cfg.clone(),
        abort,
    })
}

#[derive(Clone, Copy)]
enum Discrete {
    Gd { eta: f64 },
    Adam { eta: f64, beta1: f64, beta2: f64, eps: f64 },
}

type Outcome = std::result::Result<Weights, (Weights, Error)>;

fn run_discrete(
    data: &Dataset,
    w0: &Weights,
    cfg: &OptimizerConfig,
    rec: &mut Recorder,
    sched: &mut Schedule,
    opt: Discrete,
) -> Outcome {
    let d = data.d();
    let steps = cfg.max_time.floor() as u64;
    let mut w = w0.clone();
    let mut tau = 0.0;
    let mut m = vec![0.0; d + 1];
    let mut v = vec![0.0; d + 1];
    for k in 1..=steps {
        let (gs, gb) = match gradient_scaled(data, &w, cfg.loss, 0.0) {
            Ok(g) => g,
            Err(e) => return Err((w, e)),
        };
        let gb = if cfg.fit_bias { gb } else { 0.0 };
        tau += w.b.exp();
        let mut next = w.clone();
        match opt {
            Discrete::Gd { eta } => {
                next.s.iter_mut().zip(&gs).for_each(|(s, g)| *s -= eta * g);
                next.b -= eta * gb;
            }
            Discrete::Adam { eta, beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(k.min(i32::MAX as u64) as i32);
                let c2 = 1.0 - beta2.powi(k.min(i32::MAX as u64) as i32);
                for (j, g) in gs.iter().chain(std::iter::once(&gb)).enumerate() {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                    let step = eta * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    if j < d {
                        next.s[j] -= step;
                    } else if cfg.fit_bias {
                        next.b -= step;
                    }
                }
            }
        }
        if !next.is_finite() {
            return Err((w, Error::NonFinite(format!("weights became non-finite at step {k}"))));
        }
        w = next;
        let t = k as f64;
        if t >= sched.next || k == steps {
            if let Err(e) = rec.record(t, tau, &w) {
                return Err((w, e));
            }
            sched.advance_past(t, cfg.max_time);
        }
    }
    Ok(w)
}

fn run_flow(
    data: &Dataset,
    w0: &Weights,
    cfg: &OptimizerConfig,
    eta: f64,
    tol: Tolerances,
    rec: &mut Recorder,
    sched: &mut Schedule,
) -> Outcome {
    let d = data.d();
    let loss = cfg.loss;
    let fit_bias = cfg.fit_bias;
    let mut w = w0.clone();
    // t-mode state: (S, b, τ)
    let mut y0 = w0.s.clone();
    y0.push(w0.b);
    y0.push(0.0);
    let mut ode = Dopri5::new(0.0, y0, tol);
    let mut scratch = Weights::zeros(d);
    let mut rhs_t = |_t: f64, y: &[f64], dy: &mut [f64]| {
        scratch.s.copy_from_slice(&y[..d]);
        scratch.b = y[d];
        match gradient_scaled(data, &scratch, loss, 0.0) {
            Ok((gs, gb)) => {
                for j in 0..d {
                    dy[j] = -eta * gs[j];
                }
                dy[d] = if fit_bias { -eta * gb } else { 0.0 };
            }
            Err(_) => dy.iter_mut().for_each(|v| *v = f64::NAN),
        }
        dy[d + 1] = y[d].exp();
    };
    let mut switched = false;
    while ode.t() < cfg.max_time {
        let limit = sched.next.min(cfg.max_time);
        if let Err(e) = ode.step(limit, &mut rhs_t) {
            return Err((w, e));
        }
        let y = ode.y();
        w.s.copy_from_slice(&y[..d]);
        w.b = y[d];
        let t = ode.t();
        if t >= sched.next || t >= cfg.max_time {
            if let Err(e) = rec.record(t, y[d + 1], &w) {
                return Err((w, e));
            }
            sched.advance_past(t, cfg.max_time);
        }
        if fit_bias && w.b < cfg.tau_switch_b {
            switched = true;
            break;
        }
    }
    if !switched {
        return Ok(w);
    }

    // τ-mode state: (S, b, q = ln(1 + t)); the right-hand side is the t-mode one times e^{−b}
    let tau0 = ode.y()[d + 1];
    let mut y0 = w.s.clone();
    y0.push(w.b);
    y0.push(ode.t().ln_1p());
    let mut ode = Dopri5::new(tau0, y0, tol);
    let mut rhs_tau = |_tau: f64, y: &[f64], dy: &mut [f64]| {
        scratch.s.copy_from_slice(&y[..d]);
        scratch.b = y[d];
        match gradient_scaled(data, &scratch, loss, y[d]) {
            Ok((gs, gb)) => {
                for j in 0..d {
                    dy[j] = -eta * gs[j];
                }
                dy[d] = -eta * gb;
            }
            Err(_) => dy.iter_mut().for_each(|v| *v = f64::NAN),
        }
        dy[d + 1] = (-y[d] - y[d + 1]).exp();
    };
    let q_max = cfg.max_time.ln_1p();
    loop {
        let q = ode.y()[d + 1];
        if q >= q_max * (1.0 - 1e-15) {
            break;
        }
        let q_target = sched.next.min(cfg.max_time).ln_1p();
        let rate = (-ode.y()[d] - q).exp();
        // aim at the τ where q reaches its next record value, assuming q grows linearly
        let aim = ode.t() + ((q_target - q) / rate).max(1e-9 * ode.t().abs()).max(1e-300);
        if let Err(e) = ode.step(aim, &mut rhs_tau) {
            return Err((w, e));
        }
        let y = ode.y();
        w.s.copy_from_slice(&y[..d]);
        w.b = y[d];
        let qn = y[d + 1];
        if qn >= q_target * (1.0 - 1e-14) {
            let t = qn.exp_m1();
            if let Err(e) = rec.record(t, ode.t(), &w) {
                return Err((w, e));
            }
            sched.advance_past(t, cfg.max_time);
        }
    }
    Ok(w)
}

/// Recompute `τ` by trapezoidal accumulation of `e^{b}` over the recorded rows.
pub fn conformal_time(traj: &Trajectory) -> Trajectory {
    let mut out = traj.clone();
    let mut tau = 0.0;
    if let Some(first) = out.rows.first_mut() {
        first.tau = 0.0;
    }
    for k in 1..out.rows.len() {
        let (a, b) = (traj.rows[k - 1], traj.rows[k]);
        tau += 0.5 * (b.t - a.t) * (a.b.exp() + b.b.exp());
        out.rows[k].tau = tau;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// `max_k ‖S_bias(τ_k) − S_nobias(t = τ_k)‖`.
    pub max_deviation: f64,
    pub matched_points: usize,
}

/// Compare the biased exponential-loss flow, reparameterized by conformal time, with the
/// bias-free flow from the same `S₀`.
pub fn conformal_equivalence_check(data: &Dataset, w0: &Weights, cfg: &OptimizerConfig) -> Result<EquivalenceReport> {
    if cfg.loss != LossKind::Exponential {
        return Err(invalid("conformal equivalence holds for the exponential loss"));
    }
    if !matches!(cfg.kind, OptimizerKind::GradientFlow { .. }) {
        return Err(invalid("conformal equivalence is a gradient-flow statement"));
    }
    let mut with_bias = cfg.clone();
    with_bias.fit_bias = true;
    with_bias.keep_weights = true;
    with_bias.evaluator = GenEvaluator::Off;
    let biased = run(data, w0, &with_bias)?;
    if let Some(reason) = &biased.abort {
        return Err(Error::Divergence(format!("biased run aborted: {reason}")));
    }
    let taus: Vec<f64> = biased.rows.iter().map(|r| r.tau).collect();
    let mut times: Vec<f64> = Vec::with_capacity(taus.len());
    for &u in &taus {
        if u > 0.0 && times.last().is_none_or(|&p| u > p) {
            times.push(u);
        }
    }
    let horizon = *times.last().ok_or_else(|| invalid("biased run recorded no progress"))?;
    let mut free = cfg.clone();
    free.fit_bias = false;
    free.keep_weights = true;
    free.evaluator = GenEvaluator::Off;
    free.max_time = horizon;
    free.record_times = Some(times);
    let w_free = Weights::new(w0.s.clone(), w0.b);
    let unbiased = run(data, &w_free, &free)?;
    if let Some(reason) = &unbiased.abort {
        return Err(Error::Divergence(format!("bias-free run aborted: {reason}")));
    }
    let mut max_dev = 0.0f64;
    let mut matched = 0;
    for (row, snap) in biased.rows.iter().zip(&biased.snapshots) {
        if let Some(j) = unbiased.rows.iter().position(|r| r.t == row.tau) {
            let other = &unbiased.snapshots[j];
            let dev = snap
                .s
                .iter()
                .zip(&other.s)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            max_dev = max_dev.max(dev);
            matched += 1;
        }
    }
    Ok(EquivalenceReport {
        max_deviation: max_dev,
        matched_points: matched,
    })
}

/// Checks `e^{b(t)} ≥ 1/(e^{−b₀} + ηCt)` at every row and that the final conformal time exceeds
/// the integral of that bound, `ln(1 + ηC t e^{b₀})/(ηC)`.
pub fn conformal_divergence_check(traj: &Trajectory, loss_bound: f64) -> Result<bool> {
    if !(loss_bound > 0.0) {
        return Err(invalid("loss bound must be > 0"));
    }
    let eta = traj.config.kind.eta();
    let b0 = traj.rows.first().map_or(traj.init.b, |r| r.b);
    let ec = eta * loss_bound;
    let slack = 1e-9;
    for r in &traj.rows {
        // log-domain form of e^{b} ≥ 1/(e^{−b₀} + ηCt)
        let rhs = -crate::special::log_add_exp(-b0, (ec * r.t).ln());
        if r.b < rhs - slack * rhs.abs().max(1.0) {
            return Ok(false);
        }
    }
    let last = traj.last();
    let predicted = (ec * last.t * b0.exp()).ln_1p() / ec;
    Ok(last.tau >= predicted * (1.0 - 1e-8))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrokCriterion {
    /// First time the accuracy reaches `level`.
    Accuracy { level: f64 },
    /// First time the natural log of the loss drops to `log_level`.
    Loss { log_level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrokkingTimes {
    /// `None` when the series never crosses.
    pub t_train: Option<f64>,
    pub t_gen: Option<f64>,
    pub delta: Option<f64>,
    pub criterion: GrokCriterion,
}

fn first_crossing(rows: &[TrajectoryRow], value: impl Fn(&TrajectoryRow) -> f64, criterion: GrokCriterion) -> Option<f64> {
    let crossed = |v: f64| match criterion {
        GrokCriterion::Accuracy { level } => v >= level,
        GrokCriterion::Loss { log_level } => v <= log_level,
    };
    let level = match criterion {
        GrokCriterion::Accuracy { level } => level,
        GrokCriterion::Loss { log_level } => log_level,
    };
    let k = rows.iter().position(|r| crossed(value(r)))?;
    if k == 0 {
        return Some(rows[0].t);
    }
    let (a, b) = (&rows[k - 1], &rows[k]);
    let (va, vb) = (value(a), value(b));
    let frac = if vb == va { 1.0 } else { ((level - va) / (vb - va)).clamp(0.0, 1.0) };
    let t = match criterion {
        GrokCriterion::Loss { .. } if a.t > 0.0 => (a.t.ln() + frac * (b.t.ln() - a.t.ln())).exp(),
        _ => a.t + frac * (b.t - a.t),
    };
    Some(t)
}

/// First crossing times of the train and gen series; losses are interpolated linearly in
/// `(log t, log loss)`, accuracies linearly in `t`.
pub fn grokking_time(traj: &Trajectory, criterion: GrokCriterion) -> GrokkingTimes {
    grokking_time_rows(&traj.rows, criterion)
}

type Metric = fn(&TrajectoryRow) -> f64;

pub fn grokking_time_rows(rows: &[TrajectoryRow], criterion: GrokCriterion) -> GrokkingTimes {
    let (train, gen): (Metric, Metric) = match criterion {
        GrokCriterion::Accuracy { .. } => (|r| r.train_acc, |r| r.gen_acc),
        GrokCriterion::Loss { .. } => (|r| r.log_train_loss, |r| r.log_gen_loss),
    };
    let t_train = first_crossing(rows, train, criterion);
    let t_gen = first_crossing(rows, gen, criterion);
    let delta = match (t_train, t_gen) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    GrokkingTimes {
        t_train,
        t_gen,
        delta,
        criterion,
    }
}
