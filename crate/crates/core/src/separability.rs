//! Separability from the origin, the hard-margin solution, the finite exponential-loss
//! minimizer of inseparable data, and the near-separability norm bound.
//!
//! Everything here works with the constant-label convention: a dataset is separable when
//! some `S` has `S·xᵢ < 0` for every row. Datasets with mixed labels are folded first
//! (rows with label +1 are negated), which turns `yᵢ S·xᵢ > 0` into the same condition.

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::lp::{self, LpOutcome};
use crate::model::dot;
use crate::special::LogSum;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Outcome of [`decide_separability`]; serializes to a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub separable: bool,
    pub margin: Option<f64>,
    pub s_star: Option<Vec<f64>>,
    pub s_infinity: Option<Vec<f64>>,
    /// Dual multipliers of the margin problem.
    #[serde(rename = "alpha")]
    pub dual_cert: Option<Vec<f64>>,
    /// `pᵢ ∝ e^{S∞·xᵢ}`, a convex combination of the rows equal to the origin.
    #[serde(rename = "p_weights")]
    pub convex_weights: Option<Vec<f64>>,
}

impl SeparabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginSolution {
    pub s_star: Vec<f64>,
    pub margin: f64,
    pub alpha: Vec<f64>,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SInfinity {
    pub s: Vec<f64>,
    pub p_weights: Vec<f64>,
    pub iterations: usize,
    /// `‖Σ pᵢ xᵢ‖` at the returned point.
    pub residual: f64,
}

/// Unit vector in `(S, b)` space that the iterates of a separable run align with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSvm {
    pub direction: Vec<f64>,
}

impl ExtendedSvm {
    pub fn spatial(&self) -> &[f64] {
        &self.direction[..self.direction.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.direction[self.direction.len() - 1]
    }
}

/// Rows in constant-label form, after rejecting points at the origin.
fn folded_rows(data: &Dataset) -> Result<Dataset> {
    let folded = data.label_folded();
    if let Some(i) = folded.rows().position(|x| x.iter().all(|&v| v == 0.0)) {
        return Err(Error::Degenerate(format!("sample {i} sits at the origin")));
    }
    Ok(folded)
}

fn hull_weights(data: &Dataset) -> Result<Option<Vec<f64>>> {
    lp::origin_in_hull(data.samples(), data.n(), data.d())
        .map_err(|msg| Error::Degenerate(format!("hull membership program failed: {msg}")))
}

pub fn is_separable(data: &Dataset) -> Result<bool> {
    let folded = folded_rows(data)?;
    Ok(hull_weights(&folded)?.is_none())
}

/// Full report: the margin solution when separable, `S∞` and its convex weights otherwise.
pub fn decide_separability(data: &Dataset) -> Result<SeparabilityReport> {
    let folded = folded_rows(data)?;
    if hull_weights(&folded)?.is_some() {
        let sol = s_infinity_folded(&folded)?;
        Ok(SeparabilityReport {
            separable: false,
            margin: None,
            s_star: None,
            s_infinity: Some(sol.s),
            dual_cert: None,
            convex_weights: Some(sol.p_weights),
        })
    } else {
        let sol = margin_qp_folded(&folded)?;
        Ok(SeparabilityReport {
            separable: true,
            margin: Some(sol.margin),
            s_star: Some(sol.s_star),
            s_infinity: None,
            dual_cert: Some(sol.alpha),
            convex_weights: None,
        })
    }
}

const KKT_TOL: f64 = 1e-10;
const DIVERGENCE_CAP: f64 = 1e12;
const MAX_SWEEPS: usize = 500;
const POLISH_EVERY: usize = 25;

/// `argmin ‖S‖² s.t. S·xᵢ ≤ −1`, with `M = 1/‖S*‖`.
///
/// Dual coordinate ascent on `max_{α≥0} Σαᵢ − ½‖Σαᵢxᵢ‖²`, with periodic exact solves of the
/// equality-constrained problem on the current support set.
pub fn margin_qp(data: &Dataset) -> Result<MarginSolution> {
    let folded = folded_rows(data)?;
    if hull_weights(&folded)?.is_some() {
        return Err(Error::Infeasible("origin lies in the convex hull of the data".into()));
    }
    margin_qp_folded(&folded)
}

fn kkt_violation(alpha: &[f64], grad: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(grad)
        .map(|(&a, &g)| if a > 0.0 { g.abs() } else { g.max(0.0) })
        .fold(0.0, f64::max)
}

fn margin_qp_folded(data: &Dataset) -> Result<MarginSolution> {
    let (n, d) = (data.n(), data.d());
    let sq: Vec<f64> = data.rows().map(|x| dot(x, x)).collect();
    let row_norms: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
    let mut alpha = vec![0.0; n];
    let mut s = vec![0.0; d];
    let mut grad = vec![1.0; n];
    for sweep in 1..=MAX_SWEEPS {
        for (i, x) in data.rows().enumerate() {
            let g = 1.0 + dot(&s, x);
            let new = (alpha[i] + g / sq[i]).max(0.0);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                s.iter_mut().zip(x).for_each(|(sv, xv)| *sv -= delta * xv);
            }
        }
        let amax = alpha.iter().fold(0.0f64, |m, &a| m.max(a));
        let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&s, &s);
        if amax > DIVERGENCE_CAP || dual > DIVERGENCE_CAP {
            return Err(Error::Infeasible(format!("dual objective diverged after {sweep} sweeps")));
        }
        // recompute S from scratch occasionally so incremental drift cannot accumulate
        if sweep % POLISH_EVERY == 0 {
            s = combine(data, &alpha);
            if let Some((a2, s2)) = polish_support(data, &alpha, &row_norms) {
                alpha = a2;
                s = s2;
            }
        }
        for (g, x) in grad.iter_mut().zip(data.rows()) {
            *g = 1.0 + dot(&s, x);
        }
        if kkt_violation(&alpha, &grad) < kkt_tol(&alpha, &row_norms) {
            return Ok(MarginSolution {
                margin: 1.0 / dot(&s, &s).sqrt(),
                s_star: s,
                alpha,
                sweeps: sweep,
            });
        }
    }
    // near-critical instances make coordinate ascent crawl; the nearest-point iteration is exact
    if let Some(lambda) = nearest_hull_point(data) {
        let p = combine(data, &lambda);
        let pp = dot(&p, &p);
        let alpha: Vec<f64> = lambda.iter().map(|l| l / pp).collect();
        let s = combine(data, &alpha);
        let grad: Vec<f64> = data.rows().map(|x| 1.0 + dot(&s, x)).collect();
        if kkt_violation(&alpha, &grad) < kkt_tol(&alpha, &row_norms) {
            return Ok(MarginSolution {
                margin: 1.0 / dot(&s, &s).sqrt(),
                s_star: s,
                alpha,
                sweeps: MAX_SWEEPS,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "margin dual coordinate ascent and nearest-point fallback".into(),
        iterations: MAX_SWEEPS,
    })
}

/// KKT tolerance: `KKT_TOL`, or the rounding level of `S·xᵢ` when that is larger.
fn kkt_tol(alpha: &[f64], row_norms: &[f64]) -> f64 {
    let mass: f64 = alpha.iter().zip(row_norms).map(|(a, r)| a * r).sum();
    let rmax = row_norms.iter().copied().fold(0.0, f64::max);
    KKT_TOL.max(16.0 * f64::EPSILON * mass * rmax)
}

/// Wolfe's nearest-point iteration: convex weights of the point of the rows' hull closest to
/// the origin. `None` if an affine subproblem is singular or the iteration does not settle.
fn nearest_hull_point(data: &Dataset) -> Option<Vec<f64>> {
    let n = data.n();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(data.row(i), data.row(j)));
    let scale = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let start = (0..n).min_by(|&i, &j| gram[(i, i)].total_cmp(&gram[(j, j)]))?;
    let mut corral = vec![start];
    let mut w = vec![1.0];
    let full = |corral: &[usize], w: &[f64]| {
        let mut out = vec![0.0; n];
        for (&k, &wk) in corral.iter().zip(w) {
            out[k] = wk;
        }
        out
    };
    for _ in 0..50 * n {
        let xp: Vec<f64> = (0..n)
            .map(|i| corral.iter().zip(&w).map(|(&k, &wk)| wk * gram[(k, i)]).sum())
            .collect();
        let xx: f64 = corral.iter().zip(&w).map(|(&k, &wk)| wk * xp[k]).sum();
        let (j, xpj) = xp
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        if xpj >= xx - 1e-15 * scale || corral.contains(&j) {
            return Some(full(&corral, &w));
        }
        corral.push(j);
        w.push(0.0);
        loop {
            let u = affine_minimizer(&gram, &corral, scale)?;
            if u.iter().all(|&v| v > 0.0) {
                w = u;
                break;
            }
            let theta = w
                .iter()
                .zip(&u)
                .filter(|(_, &ui)| ui <= 0.0)
                .map(|(&wi, &ui)| wi / (wi - ui))
                .fold(1.0, f64::min);
            let stepped: Vec<f64> = w.iter().zip(&u).map(|(&wi, &ui)| wi + theta * (ui - wi)).collect();
            // drop the blocking point exactly, plus anything that rounded to zero
            let blocking = w
                .iter()
                .zip(&u)
                .enumerate()
                .filter(|(_, (_, &ui))| ui <= 0.0)
                .min_by(|a, b| {
                    let ta = a.1 .0 / (a.1 .0 - a.1 .1);
                    let tb = b.1 .0 / (b.1 .0 - b.1 .1);
                    ta.total_cmp(&tb)
                })
                .map(|(k, _)| k)?;
            let keep: Vec<usize> = (0..corral.len()).filter(|&k| k != blocking && stepped[k] > 0.0).collect();
            corral = keep.iter().map(|&k| corral[k]).collect();
            w = keep.iter().map(|&k| stepped[k]).collect();
            let total: f64 = w.iter().sum();
            if corral.is_empty() || !(total > 0.0) {
                return None;
            }
            w.iter_mut().for_each(|v| *v /= total);
        }
    }
    None
}

/// Weights summing to one that minimize `‖Σ uₖ x_{corral[k]}‖` over the affine hull.
fn affine_minimizer(gram: &DMatrix<f64>, corral: &[usize], shift: f64) -> Option<Vec<f64>> {
    let k = corral.len();
    // adding a constant to every Gram entry leaves the affine problem unchanged and makes it definite
    let g = DMatrix::from_fn(k, k, |r, c| gram[(corral[r], corral[c])] + shift);
    let z = g.cholesky()?.solve(&DVector::from_element(k, 1.0));
    let total: f64 = z.iter().sum();
    if !(total.is_finite() && total != 0.0) {
        return None;
    }
    Some(z.iter().map(|v| v / total).collect())
}

/// `S = −Σ αᵢ xᵢ`.
fn combine(data: &Dataset, alpha: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; data.d()];
    for (x, &a) in data.rows().zip(alpha) {
        if a != 0.0 {
            s.iter_mut().zip(x).for_each(|(sv, xv)| *sv -= a * xv);
        }
    }
    s
}

/// Lawson–Hanson active-set iteration for `min ½αᵀGα − Σα, α ≥ 0`, warm-started from the
/// support of `alpha`. Returns `None` if a subproblem is singular or the iteration stalls.
fn polish_support(data: &Dataset, alpha: &[f64], row_norms: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = data.n();
    let gram = |i: usize, j: usize| dot(data.row(i), data.row(j));
    let mut a: Vec<f64> = alpha.to_vec();
    let mut passive: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    // any α ≥ 0 is dual feasible, so keep only the d largest multipliers as the warm start
    if passive.len() > data.d() {
        passive.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
        passive.truncate(data.d());
        let keep: Vec<bool> = (0..n).map(|i| passive.contains(&i)).collect();
        a.iter_mut().zip(&keep).for_each(|(v, &k)| if !k { *v = 0.0 });
    }
    let solve_passive = |passive: &[usize]| -> Option<Vec<f64>> {
        let k = passive.len();
        let g = DMatrix::from_fn(k, k, |r, c| gram(passive[r], passive[c]));
        let sol = g.cholesky()?.solve(&DVector::from_element(k, 1.0));
        Some(sol.iter().copied().collect())
    };
    for _ in 0..4 * n {
        // inner loop: move towards the unconstrained optimum on the passive set
        for _ in 0..=n {
            if passive.is_empty() {
                break;
            }
            let z = solve_passive(&passive)?;
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in passive.iter().zip(&z) {
                    a[i] = v;
                }
                break;
            }
            let mut theta = 1.0f64;
            for (&i, &v) in passive.iter().zip(&z) {
                if v <= 0.0 {
                    theta = theta.min(a[i] / (a[i] - v));
                }
            }
            for (&i, &v) in passive.iter().zip(&z) {
                a[i] += theta * (v - a[i]);
            }
            passive.retain(|&i| a[i] > 1e-300);
            for (i, ai) in a.iter_mut().enumerate() {
                if !passive.contains(&i) {
                    *ai = 0.0;
                }
            }
        }
        let s = combine(data, &a);
        let grad: Vec<f64> = data.rows().map(|x| 1.0 + dot(&s, x)).collect();
        let tol = kkt_tol(&a, row_norms);
        if kkt_violation(&a, &grad) < tol {
            return Some((a, s));
        }
        let (j, gj) = (0..n)
            .filter(|i| !passive.contains(i))
            .map(|i| (i, grad[i]))
            .fold((usize::MAX, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if j == usize::MAX || gj <= tol {
            // the passive solve itself is not accurate enough
            return None;
        }
        passive.push(j);
        if passive.len() > data.d() {
            return None;
        }
    }
    None
}

const NEWTON_MAX_ITERS: usize = 500;

/// The minimizer of `(1/N) Σ e^{S·xᵢ}` for data whose convex hull contains the origin.
pub fn s_infinity(data: &Dataset) -> Result<SInfinity> {
    let folded = folded_rows(data)?;
    if hull_weights(&folded)?.is_none() {
        return Err(Error::Divergence(
            "data is separable from the origin; the exponential loss has no finite minimizer".into(),
        ));
    }
    s_infinity_folded(&folded)
}

/// `(F, p)` with `F(S) = log Σ e^{S·xᵢ}` and `p` the softmax weights.
fn log_partition(data: &Dataset, s: &[f64]) -> (f64, Vec<f64>) {
    let z: Vec<f64> = data.rows().map(|x| dot(s, x)).collect();
    let mut acc = LogSum::new();
    z.iter().for_each(|&v| acc.add(v));
    let f = acc.value();
    (f, z.iter().map(|&v| (v - f).exp()).collect())
}

fn weighted_mean(data: &Dataset, p: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; data.d()];
    for (x, &w) in data.rows().zip(p) {
        m.iter_mut().zip(x).for_each(|(mv, xv)| *mv += w * xv);
    }
    m
}

fn s_infinity_folded(data: &Dataset) -> Result<SInfinity> {
    let d = data.d();
    let scale = data.rows().map(|x| dot(x, x).sqrt()).fold(0.0, f64::max);
    let target = 1e-13 * scale.max(1.0);
    let cap = 1e6 / scale;
    let mut s = vec![0.0; d];
    let (mut f, mut p) = log_partition(data, &s);
    let mut best_resid = f64::INFINITY;
    for iter in 0..NEWTON_MAX_ITERS {
        let g = weighted_mean(data, &p);
        let resid = dot(&g, &g).sqrt();
        best_resid = best_resid.min(resid);
        if resid == 0.0 {
            return Ok(SInfinity {
                s,
                p_weights: p,
                iterations: iter,
                residual: resid,
            });
        }
        // covariance of the rows under p
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (x, &w) in data.rows().zip(&p) {
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let wa = w * (x[a] - g[a]);
                for b in a..d {
                    h[(a, b)] += wa * (x[b] - g[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        let gv = DVector::from_column_slice(&g);
        let newton = h.clone().cholesky().and_then(|c| {
            let diag_min = c.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            let diag_max = c.l().diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // condition number of H is the squared ratio of Cholesky diagonals, roughly
            ((diag_max / diag_min).powi(2) < 1e12).then(|| c.solve(&gv))
        });
        let dir: Vec<f64> = match &newton {
            Some(step) => step.iter().map(|v| -v).collect(),
            None => g.iter().map(|v| -v).collect(),
        };
        // a small gradient can still hide a sizable step when the hull is nearly flat, so
        // converge on the Newton step as well
        let step_small = newton.is_none() || dot(&dir, &dir).sqrt() <= 1e-13 * dot(&s, &s).sqrt().max(1.0);
        if resid <= target && step_small {
            return Ok(SInfinity {
                s,
                p_weights: p,
                iterations: iter,
                residual: resid,
            });
        }
        let slope = dot(&g, &dir);
        if !(slope < 0.0) {
            break;
        }
        let full: Vec<f64> = s.iter().zip(&dir).map(|(a, b)| a + b).collect();
        if -slope < 1e-10 * f.abs().max(1.0) {
            // the decrease of F is below rounding; judge the full step by the residual
            let (ft, pt) = log_partition(data, &full);
            let gt = weighted_mean(data, &pt);
            if dot(&gt, &gt).sqrt() >= resid {
                break;
            }
            s = full;
            f = ft;
            p = pt;
        } else {
            // Armijo backtracking
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = s.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let (ft, pt) = log_partition(data, &trial);
                if ft <= f + 1e-4 * t * slope {
                    s = trial;
                    f = ft;
                    p = pt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if dot(&s, &s).sqrt() > cap {
            return Err(Error::Divergence(format!(
                "‖S‖ exceeded {cap:e} while minimizing; the data looks separable"
            )));
        }
    }
    // line search stalls at rounding level; accept if the first-order condition holds
    let g = weighted_mean(data, &p);
    let resid = dot(&g, &g).sqrt();
    if resid <= 1e-8 * scale.min(1.0) {
        return Ok(SInfinity {
            s,
            p_weights: p,
            iterations: NEWTON_MAX_ITERS,
            residual: resid,
        });
    }
    Err(Error::NonConvergence {
        what: format!("exponential-loss minimizer (residual {resid:e}, best {best_resid:e})"),
        iterations: NEWTON_MAX_ITERS,
    })
}

/// Unit vector proportional to `(M² S*, −1)` when separable and `(0, −1)` otherwise.
pub fn extended_svm(data: &Dataset) -> Result<ExtendedSvm> {
    let folded = folded_rows(data)?;
    let mut direction = vec![0.0; data.d() + 1];
    if hull_weights(&folded)?.is_some() {
        direction[data.d()] = -1.0;
        return Ok(ExtendedSvm { direction });
    }
    let sol = margin_qp_folded(&folded)?;
    let m2 = sol.margin * sol.margin;
    for (dst, s) in direction.iter_mut().zip(&sol.s_star) {
        *dst = m2 * s;
    }
    direction[data.d()] = -1.0;
    let norm = dot(&direction, &direction).sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    Ok(ExtendedSvm { direction })
}

/// Lower bound `(1/D) log((1−ε)/ε · (n−k)/k)` on `‖S∞‖` when the origin is `ε`-close to a
/// facet spanned by `k` of the `n` points.
pub fn epsilon_bound(epsilon: f64, diameter: f64, n: usize, k: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(diameter > 0.0) {
        return Err(invalid(format!("diameter must be > 0, got {diameter}")));
    }
    if k == 0 || k >= n {
        return Err(invalid(format!("need 1 <= k < n, got k={k} n={n}")));
    }
    let ratio = (1.0 - epsilon) / epsilon * (n - k) as f64 / k as f64;
    Ok(ratio.ln() / diameter)
}

/// `max_{i,j} ‖xᵢ − xⱼ‖`.
pub fn diameter(data: &Dataset) -> f64 {
    let mut best = 0.0f64;
    for i in 0..data.n() {
        for j in i + 1..data.n() {
            let d2: f64 = data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// The facet a near-separable instance leans on and how close the origin is to it.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetCloseness {
    /// Rows with positive projection on `S∞`.
    pub facet: Vec<usize>,
    /// One minus the smallest total weight any convex representation of the origin puts on
    /// the facet.
    pub epsilon: f64,
}

/// Estimate `(k, ε)` for the norm bound: the facet is the set of rows with `S∞·xᵢ > 0`, and
/// `ε = 1 − min Σ_{facet} qᵢ` over `q ≥ 0, Σq = 1, Σ qᵢxᵢ = 0`, solved as a linear program.
pub fn facet_closeness(data: &Dataset, s_inf: &[f64]) -> Result<FacetCloseness> {
    let folded = folded_rows(data)?;
    let (n, d) = (folded.n(), folded.d());
    if s_inf.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: s_inf.len() });
    }
    let facet: Vec<usize> = (0..n).filter(|&i| dot(s_inf, folded.row(i)) > 0.0).collect();
    if facet.is_empty() || facet.len() == n {
        return Err(Error::Degenerate("no proper facet: S∞ does not split the rows".into()));
    }
    let m = d + 1;
    let mut a = vec![0.0; m * n];
    for i in 0..n {
        for k in 0..d {
            a[k * n + i] = folded.row(i)[k];
        }
        a[d * n + i] = 1.0;
    }
    let mut b = vec![0.0; m];
    b[d] = 1.0;
    let mut c = vec![0.0; n];
    facet.iter().for_each(|&i| c[i] = 1.0);
    match lp::solve(&a, &b, &c, m, n) {
        LpOutcome::Optimal { objective, .. } => Ok(FacetCloseness {
            facet,
            epsilon: (1.0 - objective).max(0.0),
        }),
        LpOutcome::Infeasible => Err(Error::Infeasible("origin is outside the convex hull".into())),
        LpOutcome::Unbounded => Err(Error::Degenerate("facet program unbounded".into())),
        LpOutcome::Failed(msg) => Err(Error::Degenerate(format!("facet program failed: {msg}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_isotropic;

    fn rows(r: &[&[f64]]) -> Dataset {
        Dataset::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn one_dimensional_cases() {
        let insep = decide_separability(&rows(&[&[-1.0], &[0.5]])).unwrap();
        assert!(!insep.separable);
        let s = insep.s_infinity.unwrap()[0];
        assert!((s - 2.0 / 3.0 * 2f64.ln()).abs() < 1e-12, "{s}");

        let sep = decide_separability(&rows(&[&[-1.0], &[-0.5]])).unwrap();
        assert!(sep.separable);
        assert!((sep.margin.unwrap() - 0.5).abs() < 1e-12);
        assert!((sep.s_star.unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn origin_point_is_degenerate() {
        assert!(matches!(
            decide_separability(&rows(&[&[0.0, 0.0], &[1.0, 2.0]])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn toy_pair_margin() {
        for lambda in [0.6, 0.8, 0.95] {
            let x2 = -(2.0 * lambda - 1.0);
            let sol = margin_qp(&rows(&[&[-1.0], &[x2]])).unwrap();
            assert!((sol.margin - (2.0 * lambda - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_point_matches_coordinate_ascent() {
        // square with corners (1, ±1), (3, ±1): nearest hull point is (1, 0)
        let sq = rows(&[&[1.0, 1.0], &[1.0, -1.0], &[3.0, 1.0], &[3.0, -1.0]]);
        let lam = nearest_hull_point(&sq).unwrap();
        let p = combine(&sq, &lam);
        assert!((p[0] + 1.0).abs() < 1e-14 && p[1].abs() < 1e-14, "{p:?}");
        for seed in 0..5 {
            let data = sample_isotropic(40, 30, 1.0, seed).unwrap();
            let folded = folded_rows(&data).unwrap();
            let ca = margin_qp(&data).unwrap();
            let lam = nearest_hull_point(&folded).unwrap();
            assert!(lam.iter().all(|&l| l >= 0.0) && (lam.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let p = combine(&folded, &lam);
            let m = dot(&p, &p).sqrt();
            assert!((m / ca.margin - 1.0).abs() < 1e-8, "seed {seed}: {m} vs {}", ca.margin);
        }
    }

    #[test]
    fn duplicates_leave_margin_unchanged() {
        let a = margin_qp(&rows(&[&[-1.0, 0.2], &[-0.3, -1.0], &[-2.0, 1.0]])).unwrap();
        let b = margin_qp(&rows(&[&[-1.0, 0.2], &[-0.3, -1.0], &[-0.3, -1.0], &[-2.0, 1.0]])).unwrap();
        assert!((a.margin - b.margin).abs() < 1e-10);
    }

    #[test]
    fn margin_qp_reports_infeasible() {
        assert!(matches!(margin_qp(&rows(&[&[-1.0], &[0.5]])), Err(Error::Infeasible(_))));
    }

    #[test]
    fn symmetric_pair_has_zero_minimizer() {
        let sol = s_infinity(&rows(&[&[1.0, -2.0], &[-1.0, 2.0], &[0.5, 0.5], &[-0.5, -0.5]])).unwrap();
        assert!(sol.s.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn s_infinity_rejects_separable_data() {
        assert!(matches!(s_infinity(&rows(&[&[-1.0], &[-0.5]])), Err(Error::Divergence(_))));
    }

    #[test]
    fn convex_weights_certificate() {
        let data = sample_isotropic(60, 20, 1.0, 3).unwrap();
        let rep = decide_separability(&data).unwrap();
        assert!(!rep.separable);
        let p = rep.convex_weights.unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
        let m = weighted_mean(&data, &p);
        assert!(dot(&m, &m).sqrt() < 1e-8 * diameter(&data));
    }

    #[test]
    fn extended_direction() {
        let data = rows(&[&[-1.0], &[-0.6]]);
        let svm = extended_svm(&data).unwrap();
        let m = 0.6;
        assert!(svm.bias() < 0.0);
        let ratio = svm.bias() / svm.spatial()[0].abs();
        assert!((ratio + 1.0 / m).abs() < 1e-8, "{ratio}");
        assert_eq!(extended_svm(&rows(&[&[-1.0], &[0.5]])).unwrap().direction, vec![0.0, -1.0]);
    }

    #[test]
    fn bound_arithmetic() {
        assert!(epsilon_bound(0.5, 1.0, 4, 2).unwrap().abs() < 1e-15);
        let v = epsilon_bound(1e-3, 2.0, 3, 1).unwrap();
        assert!((v - 0.5 * (999.0f64 * 2.0).ln()).abs() < 1e-12);
        assert!((v - 3.8005).abs() < 1e-3);
        assert!(epsilon_bound(0.0, 1.0, 3, 1).is_err());
        assert!(epsilon_bound(0.1, 1.0, 3, 3).is_err());
        assert!(epsilon_bound(0.1, 0.0, 3, 1).is_err());
    }

    #[test]
    fn facet_estimate_on_line() {
        let eps = 1e-2;
        let data = rows(&[&[-1.0], &[eps]]);
        let s = s_infinity(&data).unwrap().s;
        let fc = facet_closeness(&data, &s).unwrap();
        assert_eq!(fc.facet, vec![1]);
        assert!((fc.epsilon - eps / (1.0 + eps)).abs() < 1e-12);
    }

    #[test]
    fn report_json_keys() {
        let rep = decide_separability(&rows(&[&[-1.0], &[-0.5]])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(keys, ["alpha", "margin", "p_weights", "s_infinity", "s_star", "separable"]);
        assert!(obj["s_infinity"].is_null());
    }
}
