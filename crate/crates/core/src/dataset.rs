//! Synthetic datasets: isotropic Gaussians, the two-Gaussians model, its reduction to a
//! bias model, the generalized input distributions and quantile labelling.

use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::special::normal_quantile;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Parameters of the two-Gaussians model in `dim` (= d+1) dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussiansSpec {
    pub mu: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub dim: usize,
}

impl TwoGaussiansSpec {
    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(invalid(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.sigma_a >= 0.0) {
            return Err(invalid(format!("sigma_a must be >= 0, got {}", self.sigma_a)));
        }
        if !(self.sigma_b > 0.0) {
            return Err(invalid(format!("sigma_b must be > 0, got {}", self.sigma_b)));
        }
        if self.dim < 2 {
            return Err(invalid("two-gaussians model needs dim >= 2"));
        }
        Ok(())
    }
}

/// Symmetric input distributions with constant labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionKind {
    Isotropic { sigma: f64 },
    /// Diagonal covariance with variances `v_k ∝ k^{-alpha}` summing to `total_variance`.
    PowerLawCov { alpha: f64, total_variance: f64 },
    /// Each coordinate is `scale · (±mu_mix + sigma_mix·z)`.
    PerCoordinateMixture { mu_mix: f64, sigma_mix: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    Isotropic { sigma: f64 },
    TwoGaussians(TwoGaussiansSpec),
    Generalized(DistributionKind),
    /// Output of [`reduce_to_bias_model`]; rows are isotropic with std `sigma_b / mu`.
    Reduced { mu: f64, sigma_b: f64 },
    /// Isotropic rows relabelled by a threshold on the first coordinate.
    QuantileLabeled { sigma: f64, r: f64, threshold: f64 },
    Custom,
}

impl Generator {
    /// Standard deviation of an isotropic Gaussian generator, when that is what produced the rows.
    pub fn isotropic_sigma(&self) -> Option<f64> {
        match *self {
            Generator::Isotropic { sigma } => Some(sigma),
            Generator::Generalized(DistributionKind::Isotropic { sigma }) => Some(sigma),
            Generator::Reduced { mu, sigma_b } => Some(sigma_b / mu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: Generator,
    pub seed: Option<u64>,
}

/// `n × d` samples (row-major) with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    samples: Vec<f64>,
    labels: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Vec<f64>, n: usize, d: usize, labels: Vec<f64>, meta: DatasetMeta) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid(format!("dataset needs n >= 1 and d >= 1, got n={n} d={d}")));
        }
        if samples.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: samples.len(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("samples contain non-finite entries"));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(invalid("labels must be +1 or -1"));
        }
        Ok(Self {
            n,
            d,
            samples,
            labels,
            meta,
        })
    }

    /// Rows with the constant label −1.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("ragged rows"));
        }
        let samples = rows.iter().flatten().copied().collect();
        Self::new(
            samples,
            n,
            d,
            vec![-1.0; n],
            DatasetMeta {
                generator: Generator::Custom,
                seed: None,
            },
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `d / N`.
    pub fn lambda(&self) -> f64 {
        self.d as f64 / self.n as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.d)
    }

    pub fn constant_labels(&self) -> bool {
        self.labels.iter().all(|&y| y == -1.0)
    }

    /// Every sample multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Dataset {
        Dataset {
            samples: self.samples.iter().map(|v| v * c).collect(),
            meta: DatasetMeta {
                generator: Generator::Custom,
                seed: self.meta.seed,
            },
            ..self.clone()
        }
    }

    /// Rows `y_i x_i` with all labels set to −1, so that `ℓ(-y f)` becomes the constant-label loss.
    /// Only meaningful for models without a bias.
    pub fn label_folded(&self) -> Dataset {
        let mut samples = self.samples.clone();
        for (row, &y) in samples.chunks_exact_mut(self.d).zip(&self.labels) {
            if y == 1.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
        Dataset {
            samples,
            labels: vec![-1.0; self.n],
            ..self.clone()
        }
    }

    /// CSV with header `x1,...,xd,label`, 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.d).map(|k| format!("x{k}")).collect();
        header.push("label".into());
        out.write_record(&header)?;
        for (row, &y) in self.rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            rec.push(format!("{}", y as i32));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_counts(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    if d == 0 {
        return Err(invalid("d must be >= 1"));
    }
    Ok(())
}

/// `n` i.i.d. rows from `N(0, σ² I_d)`, all labelled −1.
pub fn sample_isotropic(n: usize, d: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    check_counts(n, d)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let mut rng = SeededRng::new(seed);
    let samples = (0..n * d).map(|_| sigma * rng.normal()).collect();
    Dataset::new(
        samples,
        n,
        d,
        vec![-1.0; n],
        DatasetMeta {
            generator: Generator::Isotropic { sigma },
            seed: Some(seed),
        },
    )
}

/// Balanced two-Gaussians sample: `n/2` rows around `+μ e₁` labelled +1 and `n/2`
/// around `−μ e₁` labelled −1, so that the first coordinate of row `i` is `y_i μ + σ_A z`.
pub fn sample_two_gaussians(spec: TwoGaussiansSpec, n: usize, seed: u64) -> Result<Dataset> {
    if !n.is_multiple_of(2) {
        return Err(invalid(format!("balanced two-gaussians sample needs even n, got {n}")));
    }
    sample_two_gaussians_counts(spec, n / 2, n / 2, seed)
}

/// Two-Gaussians sample with explicit per-class counts.
pub fn sample_two_gaussians_counts(spec: TwoGaussiansSpec, n_pos: usize, n_neg: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let n = n_pos + n_neg;
    check_counts(n, spec.dim)?;
    let mut rng = SeededRng::new(seed);
    let mut samples = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i < n_pos { 1.0 } else { -1.0 };
        samples.push(y * spec.mu + spec.sigma_a * rng.normal());
        for _ in 1..spec.dim {
            samples.push(spec.sigma_b * rng.normal());
        }
        labels.push(y);
    }
    Dataset::new(
        samples,
        n,
        spec.dim,
        labels,
        DatasetMeta {
            generator: Generator::TwoGaussians(spec),
            seed: Some(seed),
        },
    )
}

/// Map the `d+1`-dimensional no-bias two-Gaussians problem (σ_A = 0) onto the
/// `d`-dimensional constant-label problem with bias.
///
/// Row `(y μ, x₂, …, x_{d+1})` becomes `y (x₂, …, x_{d+1}) / μ` with label −1. The returned
/// factor `μ²` multiplies the learning rate of the reduced problem. Weights map as
/// `b = −μ S₁`, `S̄ = −μ (S₂, …, S_{d+1})`.
pub fn reduce_to_bias_model(data: &Dataset, mu: f64) -> Result<(Dataset, f64)> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be > 0, got {mu}")));
    }
    if data.d() < 2 {
        return Err(Error::ReductionInvalid("need at least two columns".into()));
    }
    let d = data.d() - 1;
    let tol = 1e-12 * mu.max(1.0);
    let mut samples = Vec::with_capacity(data.n() * d);
    for (i, (row, &y)) in data.rows().zip(data.labels()).enumerate() {
        if (row[0] - y * mu).abs() > tol {
            return Err(Error::ReductionInvalid(format!(
                "row {i}: first coordinate {} differs from y·mu = {}",
                row[0],
                y * mu
            )));
        }
        samples.extend(row[1..].iter().map(|v| y * v / mu));
    }
    let sigma_b = match &data.meta.generator {
        Generator::TwoGaussians(spec) => spec.sigma_b,
        _ => f64::NAN,
    };
    let generator = if sigma_b.is_finite() {
        Generator::Reduced { mu, sigma_b }
    } else {
        Generator::Custom
    };
    let reduced = Dataset::new(
        samples,
        data.n(),
        d,
        vec![-1.0; data.n()],
        DatasetMeta {
            generator,
            seed: data.meta.seed,
        },
    )?;
    Ok((reduced, mu * mu))
}

/// Rows from one of the symmetric generalized distributions, all labelled −1.
pub fn sample_generalized(kind: DistributionKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    check_counts(n, d)?;
    let mut rng = SeededRng::new(seed);
    let samples: Vec<f64> = match kind {
        DistributionKind::Isotropic { sigma } => {
            if !(sigma > 0.0) {
                return Err(invalid("isotropic sigma must be > 0"));
            }
            (0..n * d).map(|_| sigma * rng.normal()).collect()
        }
        DistributionKind::PowerLawCov { alpha, total_variance } => {
            if !(alpha > 0.0) || !(total_variance > 0.0) {
                return Err(invalid("power-law alpha and total variance must be > 0"));
            }
            let raw: Vec<f64> = (1..=d).map(|k| (k as f64).powf(-alpha)).collect();
            let norm: f64 = raw.iter().sum();
            let stds: Vec<f64> = raw.iter().map(|v| (v * total_variance / norm).sqrt()).collect();
            (0..n)
                .flat_map(|_| stds.iter().map(|s| s * rng.normal()).collect::<Vec<_>>())
                .collect()
        }
        DistributionKind::PerCoordinateMixture { mu_mix, sigma_mix, scale } => {
            if !(mu_mix > 0.0) || !(sigma_mix > 0.0) || !(scale > 0.0) {
                return Err(invalid("mixture parameters must be > 0"));
            }
            (0..n * d)
                .map(|_| {
                    let centre = if rng.coin() { mu_mix } else { -mu_mix };
                    scale * (centre + sigma_mix * rng.normal())
                })
                .collect()
        }
    };
    Dataset::new(
        samples,
        n,
        d,
        vec![-1.0; n],
        DatasetMeta {
            generator: Generator::Generalized(kind),
            seed: Some(seed),
        },
    )
}

/// Relabel isotropic data: label −1 iff `x₁ > σ·Q(1−r)`, so a fraction `r` gets −1.
pub fn label_by_quantile(data: &Dataset, r: f64) -> Result<Dataset> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(invalid(format!("label fraction r must lie in (0, 1], got {r}")));
    }
    let sigma = data
        .meta
        .generator
        .isotropic_sigma()
        .ok_or_else(|| invalid("quantile labelling needs isotropic Gaussian data"))?;
    let threshold = if r == 1.0 {
        f64::NEG_INFINITY
    } else {
        sigma * normal_quantile(1.0 - r)
    };
    let labels = data
        .rows()
        .map(|row| if row[0] > threshold { -1.0 } else { 1.0 })
        .collect();
    Dataset::new(
        data.samples.clone(),
        data.n(),
        data.d(),
        labels,
        DatasetMeta {
            generator: Generator::QuantileLabeled { sigma, r, threshold },
            seed: data.meta.seed,
        },
    )
}
