//! Linear programs in standard form `min c·x  s.t.  A x = b, x ≥ 0`, solved with `microlp`.
//!
//! Used for exact convex-hull membership (is the origin a convex combination of the
//! samples?) and for the facet-weight program in the near-separability bound.

use microlp::{ComparisonOp, Error as LpError, OptimizationDirection, Problem, SolveOutcome};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    /// The solver stopped for a numerical reason.
    Failed(String),
}

/// Solve `min c·x  s.t.  A x = b, x ≥ 0`. `a` is row-major `m × n`.
pub fn solve(a: &[f64], b: &[f64], c: &[f64], m: usize, n: usize) -> LpOutcome {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = c.iter().map(|&ci| problem.add_var(ci, (0.0, f64::INFINITY))).collect();
    for r in 0..m {
        let row = &a[r * n..(r + 1) * n];
        let terms: Vec<_> = vars
            .iter()
            .zip(row)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&var, &v)| (var, v))
            .collect();
        problem.add_constraint(terms, ComparisonOp::Eq, b[r]);
    }
    match problem.solve() {
        Ok(SolveOutcome::Solution(sol)) => {
            let x: Vec<f64> = vars.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
            let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
            LpOutcome::Optimal { x, objective }
        }
        Ok(SolveOutcome::Interrupted(_)) => LpOutcome::Failed("solve interrupted".into()),
        Err(LpError::Infeasible) => LpOutcome::Infeasible,
        Err(LpError::Unbounded) => LpOutcome::Unbounded,
        Err(e) => LpOutcome::Failed(e.to_string()),
    }
}

/// Convex weights `p ≥ 0, Σp = 1, Σ p_i x_i = 0` if the origin lies in the convex hull of
/// the rows of `points` (`n × d`, row-major), `None` if it does not, and an error message if
/// the solver gave up.
pub fn origin_in_hull(points: &[f64], n: usize, d: usize) -> Result<Option<Vec<f64>>, String> {
    let m = d + 1;
    let mut a = vec![0.0; m * n];
    for i in 0..n {
        for k in 0..d {
            a[k * n + i] = points[i * d + k];
        }
        a[d * n + i] = 1.0;
    }
    let mut b = vec![0.0; m];
    b[d] = 1.0;
    match solve(&a, &b, &vec![0.0; n], m, n) {
        LpOutcome::Optimal { x, .. } => Ok(Some(x)),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err("feasibility program reported unbounded".into()),
        LpOutcome::Failed(msg) => Err(msg),
    }
}
