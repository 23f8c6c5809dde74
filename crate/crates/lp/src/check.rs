//! Independent verification of a candidate primal solution against the
//! original problem data. Used by tests and by the scenario runner to confirm
//! that what the solver returned actually satisfies the model it was given.

use crate::{Error, LinearProgram, Sense};

/// Outcome of checking a primal vector against a problem.
#[derive(Debug, Clone)]
pub struct CheckReport {
    /// Largest relative constraint violation, measured per row as the amount
    /// by which the activity breaches the right-hand side in the infeasible
    /// direction for the row's sense, divided by `1 + |rhs|`.
    pub max_row_violation: f64,
    /// Name of the row attaining `max_row_violation`, if any row exists.
    pub worst_row: Option<String>,
    /// Largest relative bound violation over all columns.
    pub max_bound_violation: f64,
    /// Name of the column attaining `max_bound_violation`.
    pub worst_col: Option<String>,
    /// Objective value of the candidate point.
    pub objective: f64,
    /// True when every violation is within the tolerance the check ran with.
    pub pass: bool,
}

/// Evaluates `primal` against `lp`, reporting worst-case violations relative
/// to a tolerance. The check is deliberately independent of the solver: it
/// recomputes activities from the raw triplets.
pub fn check_solution(lp: &LinearProgram, primal: &[f64], tol: f64) -> Result<CheckReport, Error> {
    if primal.len() != lp.num_cols() {
        return Err(Error::InvalidProblem(format!(
            "primal has {} entries, problem has {} columns",
            primal.len(),
            lp.num_cols()
        )));
    }
    let activity = lp.row_activity(primal);
    let mut max_row = 0.0f64;
    let mut worst_row = None;
    for i in 0..lp.num_rows() {
        let rhs = lp.rhs[i];
        let act = activity[i];
        let breach = match lp.row_sense[i] {
            Sense::Le => act - rhs,
            Sense::Ge => rhs - act,
            Sense::Eq => (act - rhs).abs(),
        };
        let rel = breach.max(0.0) / (1.0 + rhs.abs());
        if rel > max_row {
            max_row = rel;
            worst_row = Some(lp.row_names[i].clone());
        }
    }
    let mut max_bound = 0.0f64;
    let mut worst_col = None;
    for j in 0..lp.num_cols() {
        let x = primal[j];
        let below = lp.col_lower[j] - x;
        let above = x - lp.col_upper[j];
        let breach = below.max(above).max(0.0);
        let scale = 1.0
            + if below > above {
                lp.col_lower[j].abs()
            } else {
                lp.col_upper[j].abs()
            };
        let rel = if breach > 0.0 { breach / scale } else { 0.0 };
        if rel > max_bound {
            max_bound = rel;
            worst_col = Some(lp.col_names[j].clone());
        }
    }
    Ok(CheckReport {
        max_row_violation: max_row,
        worst_row,
        max_bound_violation: max_bound,
        worst_col,
        objective: lp.objective_value(primal),
        pass: max_row <= tol && max_bound <= tol,
    })
}

/// Lagrangian dual bound from a row-dual vector: every feasible point's
/// objective is at least
/// `y.b + sum_j min over [lo_j, hi_j] of (c_j - y.A_j) x_j`,
/// provided `y` respects the senses (nonpositive on <= rows, nonnegative on
/// >= rows). Entries with the wrong sign are clamped to zero first, so the
/// returned value is a valid bound for any input. Returns negative infinity
/// when some term is unbounded below, in which case the duals certify
/// nothing. At an exact optimum the bound meets the primal objective (strong
/// duality), making this a sharp check of solver duals.
pub fn dual_bound(lp: &LinearProgram, dual: &[f64]) -> Result<f64, Error> {
    if dual.len() != lp.num_rows() {
        return Err(Error::InvalidProblem(format!(
            "dual has {} entries, problem has {} rows",
            dual.len(),
            lp.num_rows()
        )));
    }
    let y: Vec<f64> = dual
        .iter()
        .enumerate()
        .map(|(i, &v)| match lp.row_sense[i] {
            Sense::Le => v.min(0.0),
            Sense::Ge => v.max(0.0),
            Sense::Eq => v,
        })
        .collect();
    // reduced cost per column under these duals
    let mut reduced = lp.objective.clone();
    for &(r, c, v) in &lp.triplets {
        reduced[c] -= y[r] * v;
    }
    let mut bound = lp.objective_offset;
    for (i, &yi) in y.iter().enumerate() {
        bound += yi * lp.rhs[i];
    }
    for j in 0..lp.num_cols() {
        let d = reduced[j];
        let term = if d > 0.0 {
            d * lp.col_lower[j]
        } else if d < 0.0 {
            d * lp.col_upper[j]
        } else {
            0.0
        };
        if term == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        bound += term;
    }
    Ok(bound)
}
