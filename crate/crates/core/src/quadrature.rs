//! Gauss–Hermite rules and adaptive Simpson integration.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and log-weights of an `n`-point Gauss–Hermite rule for the weight `e^{-x^2}`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence, with the classical
    /// asymptotic starting guesses for the largest roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let m = n.div_ceil(2);
        let mut nodes = vec![0.0; n];
        let mut log_w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let lw = 2f64.ln() - 2.0 * pp.abs().ln();
            log_w[i] = lw;
            log_w[n - 1 - i] = lw;
        }
        Self {
            nodes,
            log_weights: log_w,
        }
    }

    /// Shared 128-point rule.
    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(128))
    }

    /// Standard-normal expectation E[g(Y)].
    pub fn normal_expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        let scale = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(&x, &lw)| lw.exp() * g(std::f64::consts::SQRT_2 * x))
            .sum::<f64>()
            / scale
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // integrands carry rounding noise; never ask for more than the precision of the result
    let floor = 16.0 * f64::EPSILON * whole.abs();
    simpson_step(f, a, b, fa, fm, fb, whole, tol, floor, 40)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || !delta.is_finite() || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    let tol = (0.5 * tol).max(floor);
    simpson_step(f, a, m, fa, flm, fm, left, tol, floor, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol, floor, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_moments() {
        let gh = GaussHermite::standard();
        assert_eq!(gh.nodes.len(), 128);
        let m0 = gh.normal_expectation(|_| 1.0);
        let m2 = gh.normal_expectation(|y| y * y);
        let m4 = gh.normal_expectation(|y| y.powi(4));
        assert!((m0 - 1.0).abs() < 1e-13, "{m0}");
        assert!((m2 - 1.0).abs() < 1e-12, "{m2}");
        assert!((m4 - 3.0).abs() < 1e-11, "{m4}");
        // moment generating function E[e^{sY}] = e^{s^2/2}
        let s = 3.0;
        let mgf = gh.normal_expectation(|y| (s * y).exp());
        assert!((mgf / (s * s / 2.0).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_rule_matches_known_nodes() {
        let gh = GaussHermite::new(2);
        assert!((gh.nodes[0] - 0.5f64.sqrt()).abs() < 1e-14);
        let w = gh.log_weights[0].exp();
        assert!((w - PI.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-11);
        let g = adaptive_simpson(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-13);
        assert!((g - PI.sqrt()).abs() < 1e-11);
    }
}
