//! Exhaustive reference solver for small problems.
//!
//! Every vertex of the feasible region is a basic solution, so on a problem
//! with a handful of variables and rows the optimum can be found by trying
//! every basis of the standard-form system and keeping the best feasible one.
//! Unboundedness is decided exactly from recession directions: the problem is
//! unbounded iff it is feasible and some basis admits a cost-improving ray.
//! The implementation shares nothing with the simplex code on purpose — it is
//! the independent check the iterative solver is compared against.

use crate::{Error, LinearProgram, Sense, Status};

const MAX_COLS: usize = 8;
const MAX_ROWS: usize = 10;
const MAX_BASES: u128 = 2_000_000;
const MAX_BOX_ENUM: usize = 12;
const EPS: f64 = 1e-9;

/// Result of the exhaustive search.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub status: Status,
    /// Objective at the best vertex, when one exists.
    pub objective: Option<f64>,
    /// An optimal point in the original variables, when one exists.
    pub primal: Option<Vec<f64>>,
}

/// How one standard-form column maps back to the original variables.
enum StdCol {
    /// x_orig = shift + t
    Shifted { orig: usize, shift: f64 },
    /// x_orig = shift - t
    Reflected { orig: usize, shift: f64 },
    /// positive part of a free variable: x_orig = t_pos - t_neg
    SplitPos { orig: usize },
    SplitNeg { orig: usize },
    /// row slack or equality placeholder; no original variable
    Aux,
}

struct StdForm {
    m: usize,
    cols: Vec<Vec<f64>>, // dense column vectors, length m
    cost: Vec<f64>,
    upper: Vec<f64>, // lower bounds are all zero
    b: Vec<f64>,
    offset: f64,
    map: Vec<StdCol>,
}

/// Solves `lp` by enumerating all bases of its standard form. Refuses
/// problems beyond a small size so it cannot be mistaken for a solver.
pub fn brute_force_oracle(lp: &LinearProgram, tol: f64) -> Result<OracleResult, Error> {
    lp.validate()?;
    let n = lp.num_cols();
    let m = lp.num_rows();
    if n > MAX_COLS || m > MAX_ROWS {
        return Err(Error::TooLarge(format!(
            "oracle handles at most {} columns and {} rows, got {}x{}",
            MAX_COLS, MAX_ROWS, m, n
        )));
    }
    let sf = standardize(lp);
    let total = sf.cols.len();
    if choose(total as u128, sf.m as u128) > MAX_BASES {
        return Err(Error::TooLarge(format!(
            "{} choose {} bases is beyond the enumeration budget",
            total, sf.m
        )));
    }
    let boxed_total = sf
        .upper
        .iter()
        .filter(|&&u| u.is_finite() && u > EPS)
        .count();
    if boxed_total > MAX_BOX_ENUM {
        return Err(Error::TooLarge(format!(
            "{} finite-upper columns is beyond the bound-assignment budget",
            boxed_total
        )));
    }

    let mut best: Option<(f64, Vec<f64>)> = None; // (objective, std x)
    let mut feasible = false;
    let mut improving_ray = false;

    let mut subset: Vec<usize> = (0..sf.m).collect();
    loop {
        visit_basis(&sf, &subset, tol, &mut best, &mut feasible, &mut improving_ray);
        if !next_subset(&mut subset, total, sf.m) {
            break;
        }
    }

    if !feasible {
        return Ok(OracleResult {
            status: Status::Infeasible,
            objective: None,
            primal: None,
        });
    }
    if improving_ray {
        return Ok(OracleResult {
            status: Status::Unbounded,
            objective: None,
            primal: None,
        });
    }
    let (obj, xs) = best.expect("feasible implies a best vertex");
    // Map the standard-form point back to the original variables.
    let mut x = vec![0.0; n];
    for (j, map) in sf.map.iter().enumerate() {
        match *map {
            StdCol::Shifted { orig, shift } => x[orig] = shift + xs[j],
            StdCol::Reflected { orig, shift } => x[orig] = shift - xs[j],
            StdCol::SplitPos { orig } => x[orig] += xs[j],
            StdCol::SplitNeg { orig } => x[orig] -= xs[j],
            StdCol::Aux => {}
        }
    }
    Ok(OracleResult {
        status: Status::Optimal,
        objective: Some(obj),
        primal: Some(x),
    })
}

/// Rewrites the problem as min c.t + offset, A t = b, 0 <= t <= upper.
fn standardize(lp: &LinearProgram) -> StdForm {
    let n = lp.num_cols();
    let m = lp.num_rows();
    // Dense original columns.
    let mut acols = vec![vec![0.0; m]; n];
    for &(r, c, v) in &lp.triplets {
        acols[c][r] += v;
    }
    let mut sf = StdForm {
        m,
        cols: Vec::new(),
        cost: Vec::new(),
        upper: Vec::new(),
        b: lp.rhs.clone(),
        offset: lp.objective_offset,
        map: Vec::new(),
    };
    for j in 0..n {
        let (lo, hi) = (lp.col_lower[j], lp.col_upper[j]);
        let c = lp.objective[j];
        if lo.is_finite() {
            // x = lo + t, t in [0, hi - lo]
            if lo != 0.0 {
                for i in 0..m {
                    sf.b[i] -= acols[j][i] * lo;
                }
                sf.offset += c * lo;
            }
            sf.cols.push(acols[j].clone());
            sf.cost.push(c);
            sf.upper.push(hi - lo);
            sf.map.push(StdCol::Shifted { orig: j, shift: lo });
        } else if hi.is_finite() {
            // x = hi - t, t in [0, inf)
            for i in 0..m {
                sf.b[i] -= acols[j][i] * hi;
            }
            sf.offset += c * hi;
            sf.cols.push(acols[j].iter().map(|v| -v).collect());
            sf.cost.push(-c);
            sf.upper.push(f64::INFINITY);
            sf.map.push(StdCol::Reflected { orig: j, shift: hi });
        } else {
            // free: x = t_pos - t_neg
            sf.cols.push(acols[j].clone());
            sf.cost.push(c);
            sf.upper.push(f64::INFINITY);
            sf.map.push(StdCol::SplitPos { orig: j });
            sf.cols.push(acols[j].iter().map(|v| -v).collect());
            sf.cost.push(-c);
            sf.upper.push(f64::INFINITY);
            sf.map.push(StdCol::SplitNeg { orig: j });
        }
    }
    for i in 0..m {
        let mut e = vec![0.0; m];
        let up = match lp.row_sense[i] {
            Sense::Le => {
                e[i] = 1.0;
                f64::INFINITY
            }
            Sense::Ge => {
                e[i] = -1.0;
                f64::INFINITY
            }
            Sense::Eq => {
                // Fixed-at-zero placeholder keeps every row coverable by some
                // basis even when the structural columns are rank deficient.
                e[i] = 1.0;
                0.0
            }
        };
        sf.cols.push(e);
        sf.cost.push(0.0);
        sf.upper.push(up);
        sf.map.push(StdCol::Aux);
    }
    sf
}

/// Evaluates one basis: every assignment of the boxed nonbasic columns for
/// feasible vertices, plus the recession-ray test for unboundedness.
fn visit_basis(
    sf: &StdForm,
    subset: &[usize],
    tol: f64,
    best: &mut Option<(f64, Vec<f64>)>,
    feasible: &mut bool,
    improving_ray: &mut bool,
) {
    let m = sf.m;
    let mut bmat = vec![0.0; m * m]; // column-major
    for (k, &j) in subset.iter().enumerate() {
        bmat[k * m..(k + 1) * m].copy_from_slice(&sf.cols[j]);
    }
    let lu = match DenseLu::factor(bmat, m) {
        Some(lu) => lu,
        None => return, // singular basis: not a vertex candidate
    };
    let in_basis: Vec<bool> = {
        let mut f = vec![false; sf.cols.len()];
        for &j in subset {
            f[j] = true;
        }
        f
    };

    // Recession rays do not depend on b, only on the basis.
    if !*improving_ray {
        let cb: Vec<f64> = subset.iter().map(|&j| sf.cost[j]).collect();
        for j in 0..sf.cols.len() {
            if in_basis[j] || sf.upper[j].is_finite() {
                continue;
            }
            let w = lu.solve(&sf.cols[j]);
            let ray_cost = sf.cost[j] - dot(&cb, &w);
            if ray_cost >= -EPS {
                continue;
            }
            let mut ok = true;
            for (k, &wk) in w.iter().enumerate() {
                if wk > EPS {
                    ok = false; // basic value would decrease through zero
                    break;
                }
                if wk < -EPS && sf.upper[subset[k]].is_finite() {
                    ok = false; // basic value would increase through its cap
                    break;
                }
            }
            if ok {
                *improving_ray = true;
                break;
            }
        }
    }

    // Boxed nonbasic columns may sit at either end.
    let boxed: Vec<usize> = (0..sf.cols.len())
        .filter(|&j| !in_basis[j] && sf.upper[j].is_finite() && sf.upper[j] > EPS)
        .collect();
    let combos: usize = 1 << boxed.len();
    for mask in 0..combos {
        let mut rhs = sf.b.clone();
        let mut obj_nb = 0.0;
        for (bit, &j) in boxed.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                let u = sf.upper[j];
                for i in 0..m {
                    rhs[i] -= sf.cols[j][i] * u;
                }
                obj_nb += sf.cost[j] * u;
            }
        }
        let xb = lu.solve(&rhs);
        let mut ok = true;
        for (k, &v) in xb.iter().enumerate() {
            let u = sf.upper[subset[k]];
            if v < -tol || v > u + tol {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        *feasible = true;
        let obj = sf.offset
            + obj_nb
            + subset
                .iter()
                .zip(&xb)
                .map(|(&j, &v)| sf.cost[j] * v)
                .sum::<f64>();
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            let mut xs = vec![0.0; sf.cols.len()];
            for (bit, &j) in boxed.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    xs[j] = sf.upper[j];
                }
            }
            for (k, &j) in subset.iter().enumerate() {
                xs[j] = xb[k].clamp(0.0, sf.upper[j]);
            }
            *best = Some((obj, xs));
        }
    }
}

/// Advances `subset` to the next lexicographic m-combination of 0..total.
fn next_subset(subset: &mut [usize], total: usize, m: usize) -> bool {
    if m == 0 {
        return false;
    }
    let mut i = m;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if subset[i] < total - (m - i) {
            subset[i] += 1;
            for k in i + 1..m {
                subset[k] = subset[k - 1] + 1;
            }
            return true;
        }
    }
}

fn choose(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense LU with partial pivoting, column-major storage.
struct DenseLu {
    m: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(mut a: Vec<f64>, m: usize) -> Option<DenseLu> {
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            // pivot search in column k, rows k..
            let mut p = k;
            let mut pa = a[k * m + k].abs();
            for r in k + 1..m {
                let v = a[k * m + r].abs();
                if v > pa {
                    pa = v;
                    p = r;
                }
            }
            if pa < 1e-11 {
                return None;
            }
            if p != k {
                perm.swap(k, p);
                for c in 0..m {
                    a.swap(c * m + k, c * m + p);
                }
            }
            let piv = a[k * m + k];
            for r in k + 1..m {
                let l = a[k * m + r] / piv;
                a[k * m + r] = l;
                if l != 0.0 {
                    for c in k + 1..m {
                        a[c * m + r] -= l * a[c * m + k];
                    }
                }
            }
        }
        Some(DenseLu { m, lu: a, perm })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for k in 0..m {
            let xk = x[k];
            if xk != 0.0 {
                for r in k + 1..m {
                    x[r] -= self.lu[k * m + r] * xk;
                }
            }
        }
        for k in (0..m).rev() {
            let mut v = x[k];
            for c in k + 1..m {
                v -= self.lu[c * m + k] * x[c];
            }
            x[k] = v / self.lu[k * m + k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_known_optimum() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, f64::INFINITY, 2.0);
        let y = lp.add_col("y", 0.0, f64::INFINITY, 3.0);
        lp.add_row("r1", Sense::Ge, 4.0, &[(x, 1.0), (y, 1.0)]);
        lp.add_row("r2", Sense::Ge, 6.0, &[(x, 1.0), (y, 3.0)]);
        let r = brute_force_oracle(&lp, 1e-7).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective.unwrap() - 9.0).abs() < 1e-9);
        let p = r.primal.unwrap();
        assert!((p[0] - 3.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, 1.0, 1.0);
        lp.add_row("r", Sense::Ge, 2.0, &[(x, 1.0)]);
        let r = brute_force_oracle(&lp, 1e-7).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn detects_unbounded_via_free_variable() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = lp.add_col("y", 0.0, f64::INFINITY, 0.0);
        lp.add_row("r", Sense::Le, 5.0, &[(x, 1.0), (y, 1.0)]);
        let r = brute_force_oracle(&lp, 1e-7).unwrap();
        assert_eq!(r.status, Status::Unbounded);
    }

    #[test]
    fn bounded_by_caps_not_unbounded() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, 3.0, -1.0);
        lp.add_row("r", Sense::Le, 10.0, &[(x, 1.0)]);
        let r = brute_force_oracle(&lp, 1e-7).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective.unwrap() + 3.0).abs() < 1e-9);
    }

    #[test]
    fn equality_with_negative_lower() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", -5.0, 5.0, 1.0);
        let y = lp.add_col("y", -5.0, 5.0, -1.0);
        lp.add_row("r", Sense::Eq, 1.0, &[(x, 1.0), (y, 1.0)]);
        let r = brute_force_oracle(&lp, 1e-7).unwrap();
        assert_eq!(r.status, Status::Optimal);
        // x at -5, y = 6 > 5 infeasible; optimum: y = 5, x = -4, obj -9.
        assert!((r.objective.unwrap() + 9.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities_still_solved() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, f64::INFINITY, 1.0);
        lp.add_row("r1", Sense::Eq, 1.0, &[(x, 1.0)]);
        lp.add_row("r2", Sense::Eq, 1.0, &[(x, 1.0)]);
        let r = brute_force_oracle(&lp, 1e-7).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn refuses_large_problems() {
        let mut lp = LinearProgram::new("t");
        for j in 0..9 {
            lp.add_col(&format!("x{}", j), 0.0, 1.0, 1.0);
        }
        assert!(matches!(
            brute_force_oracle(&lp, 1e-7),
            Err(Error::TooLarge(_))
        ));
    }
}
