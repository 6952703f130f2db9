//! Population metrics of the linear model on isotropic Gaussian inputs, Wendel's
//! separability probability, and the accuracy integral for threshold labels.

use crate::error::{invalid, Result};
use crate::quadrature::{adaptive_simpson, GaussHermite};
use crate::special::{erf, log_softplus, sigmoid, softplus, LogSum};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// `‖S‖`, `b` and the input scale `σ`: everything the population metrics depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenMetricsInput {
    pub s_norm: f64,
    pub b: f64,
    pub sigma: f64,
}

impl GenMetricsInput {
    pub fn new(s_norm: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(s_norm >= 0.0) || !s_norm.is_finite() {
            return Err(invalid(format!("s_norm must be finite and >= 0, got {s_norm}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite and > 0, got {sigma}")));
        }
        if b.is_nan() {
            return Err(invalid("b is NaN"));
        }
        Ok(Self { s_norm, b, sigma })
    }

    /// Standard deviation of the logit, `σ‖S‖`.
    pub fn spread(&self) -> f64 {
        self.sigma * self.s_norm
    }
}

/// Above this logit spread the 128-point Hermite rule no longer resolves the kink of the
/// softplus and the adaptive path takes over.
const HERMITE_MAX_SPREAD: f64 = 2.0;

/// `E_{y~N(0,1)} log(1 + e^{σ‖S‖y + b})`.
pub fn gen_loss(input: &GenMetricsInput) -> f64 {
    if input.s_norm == 0.0 {
        return softplus(input.b);
    }
    log_gen_loss(input).exp()
}

/// Natural log of [`gen_loss`], finite even when the loss is far below the smallest double.
pub fn log_gen_loss(input: &GenMetricsInput) -> f64 {
    let s = input.spread();
    let b = input.b;
    if s == 0.0 {
        return log_softplus(b);
    }
    if s <= HERMITE_MAX_SPREAD {
        let gh = GaussHermite::standard();
        let mut acc = LogSum::new();
        for (&x, &lw) in gh.nodes.iter().zip(&gh.log_weights) {
            acc.add(lw + log_softplus(s * SQRT_2 * x + b));
        }
        return acc.value() - 0.5 * PI.ln();
    }
    log_expectation_adaptive(s, b)
}

/// `h(y) = log softplus(s y + b) − y²/2` is strictly concave, so the integrand has a
/// single peak. Locate it, rescale by its height and integrate a window around it.
fn log_expectation_adaptive(s: f64, b: f64) -> f64 {
    let h = |y: f64| log_softplus(s * y + b) - 0.5 * y * y;
    let dh = |y: f64| {
        let z = s * y + b;
        // d/dz log softplus(z) = sigmoid(z) / softplus(z), which tends to 1 as z → −∞
        let ratio = if z < -30.0 { 1.0 } else { sigmoid(z) / softplus(z) };
        s * ratio - y
    };
    // h'(0) > 0 and h'(s) <= 0
    let (mut lo, mut hi) = (0.0, s);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dh(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    let peak = 0.5 * (lo + hi);
    let hmax = h(peak);
    let f = |y: f64| (h(y) - hmax).exp();
    // h(y) <= hmax − (y − peak)²/2, so ±40 leaves e^{-800}
    let (a, c) = (peak - 40.0, peak + 40.0);
    let mut cuts = vec![a, peak, c];
    let kink = -b / s;
    if kink > a && kink < c {
        cuts.push(kink);
    }
    // subdivide so narrow features are seen by the first Simpson pass
    let width = 1.0 / s.max(1.0);
    for k in -8..=8 {
        let y = peak + k as f64 * width;
        if y > a && y < c {
            cuts.push(y);
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let tol = 1e-14 * width;
    let integral: f64 = cuts
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], tol))
        .sum();
    hmax + integral.ln() - 0.5 * (2.0 * PI).ln()
}

/// `½[1 − erf(b / (√2 σ‖S‖))]`; at `‖S‖ = 0` this is `Θ(−b)` with `Θ(0) = 1`.
pub fn gen_accuracy(input: &GenMetricsInput) -> f64 {
    if input.s_norm == 0.0 {
        return if input.b <= 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * (1.0 - erf(input.b / (SQRT_2 * input.spread())))
}

/// Limiting accuracy of the max-margin solution: `½[1 + erf(1/(σ M √2))]`.
pub fn limiting_accuracy_from_margin(margin: f64, sigma: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(invalid(format!("margin must be > 0, got {margin}")));
    }
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(0.5 * (1.0 + erf(1.0 / (sigma * margin * SQRT_2))))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let (n, k) = (n as f64, k as f64);
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// Probability that `n` symmetric points in general position in `R^d` are separable from the
/// origin: `2^{-(n-1)} Σ_{k<d} C(n-1, k)`.
pub fn wendel_probability(n: u64, d: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("wendel probability needs n >= 1"));
    }
    if d >= n {
        return Ok(1.0);
    }
    if d == 0 {
        return Ok(0.0);
    }
    let m = n - 1;
    if m < 100 {
        // exact integer binomials
        let mut c = 1u128;
        let mut sum = 0u128;
        for k in 0..d as u128 {
            sum += c;
            c = c * (m as u128 - k) / (k + 1);
        }
        return Ok(sum as f64 / 2f64.powi(m as i32));
    }
    let shift = m as f64 * std::f64::consts::LN_2;
    // sum the shorter tail and complement if needed
    let p = if d - 1 <= m / 2 {
        let mut acc = LogSum::new();
        (0..d).for_each(|k| acc.add(ln_choose(m, k)));
        (acc.value() - shift).exp()
    } else {
        let mut acc = LogSum::new();
        (d..=m).for_each(|k| acc.add(ln_choose(m, k)));
        1.0 - (acc.value() - shift).exp()
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Gaussian approximation `½[1 + erf(√d (√(2λ) − 1/√(2λ)))]` to [`wendel_probability`].
pub fn wendel_gaussian_limit(lambda: f64, d: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    if !(d >= 0.0) {
        return Err(invalid(format!("d must be >= 0, got {d}")));
    }
    let r = (2.0 * lambda).sqrt();
    Ok(0.5 * (1.0 + erf(d.sqrt() * (r - 1.0 / r))))
}

/// `½[1 + E_{x₁~N(0,σ²)} sign(x₁ − μ) erf((S₁x₁ + b)/(√2 σ ‖S_⊥‖))]`.
///
/// This is the accuracy when the class `x₁ > μ` is the one predicted by a positive logit.
pub fn discriminative_accuracy(s1: f64, perp_norm: f64, b: f64, sigma: f64, mu: f64) -> Result<f64> {
    if !(perp_norm > 0.0) {
        return Err(invalid(format!("perp_norm must be > 0, got {perp_norm}")));
    }
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let norm = 1.0 / ((2.0 * PI).sqrt() * sigma);
    let denom = SQRT_2 * sigma * perp_norm;
    let g = |x: f64| norm * (-0.5 * (x / sigma).powi(2)).exp() * erf((s1 * x + b) / denom);
    let (lo, hi) = (-8.0 * sigma, 8.0 * sigma);
    let split = mu.clamp(lo, hi);
    let integrate = |a: f64, c: f64| -> f64 {
        if c <= a {
            return 0.0;
        }
        let mut cuts: Vec<f64> = (0..=16).map(|k| a + (c - a) * k as f64 / 16.0).collect();
        if s1 != 0.0 {
            let zero = -b / s1;
            if zero > a && zero < c {
                cuts.push(zero);
            }
        }
        cuts.sort_by(|x, y| x.total_cmp(y));
        cuts.windows(2).map(|w| adaptive_simpson(&g, w[0], w[1], 1e-9 / 32.0)).sum()
    };
    let value = integrate(split, hi) - integrate(lo, split);
    Ok((0.5 * (1.0 + value)).clamp(0.0, 1.0))
}

/// Accuracy on quantile-labelled isotropic data, where label −1 means `x₁ > σ Q(1 − r)` and a
/// positive logit predicts +1.
pub fn quantile_label_accuracy(s1: f64, perp_norm: f64, b: f64, sigma: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid(format!("label fraction r must lie in (0, 1), got {r}")));
    }
    let mu = sigma * crate::special::normal_quantile(1.0 - r);
    discriminative_accuracy(-s1, perp_norm, -b, sigma, mu)
}
