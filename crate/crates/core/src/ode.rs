//! Adaptive Dormand–Prince 5(4) integrator with per-component error control.
//!
//! The stepper is stateful: callers repeatedly ask it to [`Dopri5::advance_to`] a target
//! time and the final step is clamped so the target is hit exactly. Step sizes grow
//! geometrically while the error estimate allows it, which is what lets a gradient flow
//! be followed from `t = 1` out to `t = 1e15` in a few thousand steps.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub tol: Tolerances,
    pub max_steps: usize,
    pub h_max: f64,
    t: f64,
    y: Vec<f64>,
    h: f64,
    k1: Vec<f64>,
    fresh: bool,
    steps: usize,
    rejected: usize,
    // scratch
    k: [Vec<f64>; 6],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl Dopri5 {
    pub fn new(t0: f64, y0: Vec<f64>, tol: Tolerances) -> Self {
        let n = y0.len();
        Self {
            tol,
            max_steps: 5_000_000,
            h_max: f64::INFINITY,
            t: t0,
            h: 0.0,
            k1: vec![0.0; n],
            fresh: true,
            steps: 0,
            rejected: 0,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            y: y0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Derivative at the current state (valid after the first step or `advance_to`).
    pub fn derivative(&self) -> &[f64] {
        &self.k1
    }

    fn err_norm(&self, y: &[f64], ynew: &[f64], err: &[f64]) -> f64 {
        let n = y.len().max(1) as f64;
        let s: f64 = y
            .iter()
            .zip(ynew)
            .zip(err)
            .map(|((a, b), e)| {
                let sc = self.tol.abs + self.tol.rel * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    fn initial_step<F>(&mut self, f: &mut F, direction_span: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.y.len();
        let scale: Vec<f64> = self
            .y
            .iter()
            .map(|v| self.tol.abs + self.tol.rel * v.abs())
            .collect();
        let d0 = (self.y.iter().zip(&scale).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (self.k1.iter().zip(&scale).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(direction_span.abs());
        for i in 0..n {
            self.ytmp[i] = self.y[i] + h0 * self.k1[i];
        }
        let mut f1 = vec![0.0; n];
        f(self.t + h0, &self.ytmp, &mut f1);
        let d2 = (f1
            .iter()
            .zip(&self.k1)
            .zip(&scale)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        let h = (100.0 * h0).min(h1);
        self.h = if h.is_finite() && h > 0.0 { h } else { 1e-6 };
    }

    /// Integrate until `t_end`, landing on it exactly.
    pub fn advance_to<F>(&mut self, t_end: f64, f: &mut F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        while self.t < t_end {
            self.step(t_end, f)?;
        }
        Ok(())
    }

    /// Take one accepted step, never passing `t_limit`.
    pub fn step<F>(&mut self, t_limit: f64, f: &mut F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.y.len();
        if self.fresh {
            let (t, y) = (self.t, self.y.clone());
            f(t, &y, &mut self.k1);
            if self.k1.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("derivative at t={t}")));
            }
            self.initial_step(f, t_limit - self.t);
            self.fresh = false;
        }
        let mut reject_streak = 0usize;
        loop {
            if self.steps + self.rejected >= self.max_steps {
                return Err(Error::NonConvergence {
                    what: format!("ode integration stalled at t={}", self.t),
                    iterations: self.max_steps,
                });
            }
            let remaining = t_limit - self.t;
            let mut h = self.h.min(self.h_max);
            let clamped = h >= remaining;
            if clamped {
                h = remaining;
            }
            if h <= self.t.abs() * 1e-15 || h <= 1e-300 {
                return Err(Error::NonFinite(format!("step size underflow at t={}", self.t)));
            }
            let t = self.t;
            let y = &self.y;
            let [k2, k3, k4, k5, k6, k7] = &mut self.k;
            let k1 = &self.k1;
            let ytmp = &mut self.ytmp;
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, ytmp, k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, ytmp, k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, ytmp, k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, ytmp, k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, ytmp, k6);
            let ynew = &mut self.ynew;
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, ynew, k7);
            let mut err = vec![0.0; n];
            let mut finite = true;
            for i in 0..n {
                err[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                finite &= ynew[i].is_finite() && k7[i].is_finite() && err[i].is_finite();
            }
            let en = if finite {
                self.err_norm(&self.y, &self.ynew, &err)
            } else {
                f64::INFINITY
            };
            if en <= 1.0 {
                self.steps += 1;
                self.t = if clamped { t_limit } else { t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                std::mem::swap(&mut self.k1, &mut self.k[5]);
                let fac = if en == 0.0 { 10.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 10.0) };
                let fac = if reject_streak > 0 { fac.min(1.0) } else { fac };
                // a clamped step says nothing about how large the natural step is
                if !clamped || h * fac > self.h {
                    self.h = h * fac;
                }
                return Ok(());
            }
            self.rejected += 1;
            reject_streak += 1;
            let fac = if en.is_finite() { (0.9 * en.powf(-0.2)).clamp(0.1, 1.0) } else { 0.1 };
            self.h = h * fac;
        }
    }
}
