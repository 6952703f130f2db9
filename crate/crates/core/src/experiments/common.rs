use crate::dynamics::{OptimizerConfig, OptimizerKind, TrajectoryRow};
use crate::error::{invalid, Error, Result};
use crate::model::LossKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub(crate) fn apply(&self, base_seed: &mut u64, workers: &mut usize) {
        if let Some(s) = self.seed {
            *base_seed = s;
        }
        if let Some(w) = self.workers {
            *workers = w;
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub dir: PathBuf,
    pub cells: usize,
    /// `(cell id, reason)` for every trajectory that stopped on a numerical error.
    pub aborted: Vec<(String, String)>,
    /// Per-seed failures that were recorded and skipped.
    pub failures: usize,
}

impl RunReport {
    pub(crate) fn new(experiment: &str, dir: &Path) -> Self {
        Self {
            experiment: experiment.into(),
            dir: dir.to_path_buf(),
            ..Default::default()
        }
    }
}

/// Optimizer block of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub method: OptimizerKind,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default = "default_record_factor")]
    pub record_factor: f64,
}

fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}

fn default_max_time() -> f64 {
    1e12
}

fn default_record_factor() -> f64 {
    1.1
}

impl OptimizerSpec {
    pub fn gradient_flow(eta: f64, max_time: f64) -> Self {
        Self {
            method: OptimizerKind::gradient_flow(eta),
            loss: default_loss(),
            max_time,
            record_factor: default_record_factor(),
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(self.method, self.loss, self.max_time);
        cfg.record_factor = self.record_factor;
        cfg
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.config().validate().map_err(config_error)
    }
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Test,
    /// Extra stream keyed by a cell index.
    Cell(u64),
}

/// SplitMix64 of `seed` mixed with a per-stream constant.
pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    let tag = match stream {
        Stream::Data => 1,
        Stream::Init => 2,
        Stream::Test => 3,
        Stream::Cell(k) => 16 + k,
    };
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Parameter problems in a config are config errors.
pub(crate) fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter(msg) => Error::Config(msg),
        other => other,
    }
}

pub(crate) fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

pub(crate) fn check_grid(name: &str, grid: &[f64], valid: impl Fn(f64) -> bool) -> Result<()> {
    require(!grid.is_empty(), &format!("{name} grid is empty"))?;
    if let Some(v) = grid.iter().find(|v| !valid(**v)) {
        return Err(Error::Config(format!("{name} value {v} is out of range")));
    }
    Ok(())
}

pub(crate) fn dimension_for(lambda: f64, n: usize) -> usize {
    ((lambda * n as f64).round() as usize).max(1)
}

/// Map `f` over `items` on a pool of `workers` threads (`0` = one per core), preserving order.
pub(crate) fn par_map<T: Sync, R: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// Write through a temporary file and rename into place.
pub(crate) fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut w = BufWriter::new(File::create(&tmp)?);
    body(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

/// Header plus string records.
pub(crate) fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for r in rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    })
}

pub(crate) fn write_rows(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    write_atomic(path, |w| crate::dynamics::write_rows_csv(rows, w))
}

/// Echo of the resolved config and the seeds it expands to.
pub(crate) fn write_config_echo<C: Serialize>(dir: &Path, experiment: &str, cfg: &C, seeds: &[u64]) -> Result<()> {
    let doc = serde_json::json!({
        "experiment": experiment,
        "config": cfg,
        "seeds": seeds,
        "seed_protocol": "seed_i = base_seed + i; data, init and test streams are splitmix64(seed_i ^ k * 0x9e3779b97f4a7c15) for k = 1, 2, 3",
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    write_text(&dir.join("config.json"), &(text + "\n"))
}

/// Shortest round-trip text, scientific outside `[1e-4, 1e16)`.
pub(crate) fn fmt(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt)
}

/// Mean and standard error; the error is NaN below two samples.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares slope of `value` against `ln t` over rows within `decades` of the last time.
pub fn late_log_slope(rows: &[TrajectoryRow], decades: f64, value: impl Fn(&TrajectoryRow) -> f64) -> Option<f64> {
    let t_end = rows.last()?.t;
    let t_start = t_end / 10f64.powf(decades);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0.0 && r.t >= t_start)
        .map(|r| (r.t.ln(), value(r)))
        .filter(|p| p.1.is_finite())
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Largest `(dip, rise)` pair of a series: a drop from an earlier peak followed by a climb
/// to a later peak, maximizing the smaller of the two.
pub fn dip_rise(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mut suffix_max = vec![f64::NEG_INFINITY; n + 1];
    for j in (0..n).rev() {
        suffix_max[j] = suffix_max[j + 1].max(values[j]);
    }
    let mut best = (0.0, 0.0);
    let mut run_max = f64::NEG_INFINITY;
    for (j, &g) in values.iter().enumerate() {
        if !g.is_finite() {
            continue;
        }
        run_max = run_max.max(g);
        let (dip, rise) = (run_max - g, suffix_max[j + 1] - g);
        if dip.min(rise) > f64::min(best.0, best.1) {
            best = (dip, rise);
        }
    }
    best
}

/// Log train loss never increases beyond rounding.
pub fn train_loss_monotone(rows: &[TrajectoryRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].log_train_loss <= w[0].log_train_loss + 1e-9 * w[0].log_train_loss.abs().max(1.0))
}

/// Field-wise mean of equally gridded runs, truncated to the shortest.
pub(crate) fn average_rows(runs: &[&[TrajectoryRow]]) -> Vec<TrajectoryRow> {
    let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let k = runs.len() as f64;
    (0..len)
        .map(|i| {
            let mut m = TrajectoryRow {
                t: 0.0,
                tau: 0.0,
                s_norm: 0.0,
                b: 0.0,
                log_train_loss: 0.0,
                train_acc: 0.0,
                log_gen_loss: 0.0,
                gen_acc: 0.0,
            };
            for run in runs {
                let r = &run[i];
                m.t += r.t / k;
                m.tau += r.tau / k;
                m.s_norm += r.s_norm / k;
                m.b += r.b / k;
                m.log_train_loss += r.log_train_loss / k;
                m.train_acc += r.train_acc / k;
                m.log_gen_loss += r.log_gen_loss / k;
                m.gen_acc += r.gen_acc / k;
            }
            m
        })
        .collect()
}

/// Rows with `t > 0` mapped through `f`, for log-x plots.
pub(crate) fn series(rows: &[TrajectoryRow], f: impl Fn(&TrajectoryRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r.t > 0.0).map(|r| (r.t, f(r))).collect()
}

pub(crate) fn log10_loss(log_loss: f64) -> f64 {
    log_loss / std::f64::consts::LN_10
}

pub(crate) fn ensure_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(invalid(format!("{name} must be finite and > 0, got {v}"))))
    }
}

/// Separability of a constant-label sample with its margin or bias-free minimizer norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Geometry {
    pub separable: bool,
    pub margin: Option<f64>,
    pub s_infinity: Option<f64>,
}

impl Geometry {
    pub fn of(data: &crate::dataset::Dataset) -> Result<Self> {
        use crate::separability::{is_separable, margin_qp, s_infinity};
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if is_separable(data)? {
            let m = margin_qp(data)?;
            Ok(Self {
                separable: true,
                margin: Some(m.margin),
                s_infinity: None,
            })
        } else {
            let s = s_infinity(data)?;
            Ok(Self {
                separable: false,
                margin: None,
                s_infinity: Some(norm(&s.s)),
            })
        }
    }

    /// Late-time `ln t` slopes of `(b, ‖S‖)`.
    pub fn predicted_slopes(&self) -> (f64, f64) {
        match self.margin {
            Some(m) => (-1.0 / (1.0 + m * m), m / (1.0 + m * m)),
            None => (-1.0, 0.0),
        }
    }
}
