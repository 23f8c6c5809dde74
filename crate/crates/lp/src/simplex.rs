//! Revised primal simplex with bounded variables.
//!
//! The problem is brought to computational form by appending one logical
//! column per row (`a.x + s = b`, with the sign of `s` constrained by the row
//! sense), optionally scaling each row to unit maximum absolute coefficient.
//! Phase 1 minimises the total bound violation of the basic variables with a
//! composite cost vector recomputed every iteration; phase 2 minimises the
//! true objective. Entering variables are picked by Devex-weighted reduced
//! cost, with the reference framework reset at phase changes. Degenerate
//! plateaus escalate in two steps: first the phase-2 costs are perturbed by
//! tiny deterministic amounts (undone before any terminal claim), then the
//! rule falls back to Bland's smallest-index selection, which cannot cycle
//! and reverts once the objective moves again. Every tie-break is
//! deterministic, so a given problem always produces the same iteration
//! sequence.

use crate::factor::{ColMatrix, Factorization};
use crate::{LinearProgram, Sense, Solution, SolveOptions, SolveStats, Status};

/// Iteration tracing to stderr, enabled by setting GRIDPLAN_LP_TRACE=1.
fn trace_summary_enabled() -> bool {
    static ON: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *ON.get_or_init(|| std::env::var_os("GRIDPLAN_LP_TRACE").is_some())
}

fn trace_enabled() -> bool {
    static ON: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *ON.get_or_init(|| std::env::var_os("GRIDPLAN_LP_TRACE").is_some_and(|v| v == "1"))
}

const REFACTOR_EVERY: usize = 100;
const STALL_LIMIT: usize = 300;
const PERTURB_AFTER: usize = 50;
const STALL_EPS: f64 = 1e-10;
// Ceiling for the internal bound-violation classification. Much tighter than
// the user-facing feasibility tolerance: the long-step ratio test
// deliberately pushes basics across bounds and relies on the debris being
// flagged for repair, so only genuine numerical noise may fall below the
// line. The worker uses min(feasibility_tol, this).
const VIOL_EPS_CAP: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE_REL: f64 = 1e-9;
const RATIO_TIE_ABS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeAtZero,
}

struct Worker {
    m: usize,
    n_total: usize,
    mat: ColMatrix,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    row_scale: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    factor: Factorization,
    // violation bookkeeping per basis position
    viol: Vec<f64>,
    n_infeas: usize,
    total_infeas: f64,
    viol_eps: f64,
    feas_tol: f64,
    opt_tol: f64,
    // Devex reference weights, one per variable, >= 1.
    devex: Vec<f64>,
    // True costs squirrelled away while a perturbation is active.
    cost_orig: Option<Vec<f64>>,
    // scratch
    w_pos: Vec<f64>,
    w_nnz: Vec<usize>,
    y_rows: Vec<f64>,
    c_pos: Vec<f64>,
    scratch: Vec<f64>,
    e_work: Vec<f64>,
    rho: Vec<f64>,
    stats: SolveStats,
}

enum Pricing {
    Entering { var: usize, dir: f64, reduced: f64 },
    None,
}

enum Ratio {
    BoundFlip { t: f64 },
    Pivot { t: f64, pos: usize, to_upper: bool },
    Unblocked,
}

pub(crate) fn solve(lp: &LinearProgram, options: &SolveOptions) -> Solution {
    let start = std::time::Instant::now();
    let mut w = Worker::new(lp, options);
    let max_iter = if options.max_iterations == 0 {
        20_000.max(40 * (w.n_total + w.m))
    } else {
        options.max_iterations
    };

    let mut bland = false;
    let mut stall = 0usize;
    let mut perturb_used = false;
    let mut last_phase1: Option<bool> = None;
    // Set when the factorization is fresh and x has been recomputed from it;
    // cleared by every pivot. Terminal claims are only made in a clean state.
    let mut clean = w.stats.iterations == 0;

    let status = loop {
        if w.stats.iterations >= max_iter {
            break Status::IterationLimit;
        }
        if w.factor.needs_refactor(REFACTOR_EVERY) {
            w.refactor();
            clean = true;
        }
        let phase1 = w.n_infeas > 0;
        if last_phase1 != Some(phase1) {
            // The pricing reference framework belongs to one phase's costs.
            w.reset_devex();
            stall = 0;
            bland = false;
            last_phase1 = Some(phase1);
        }
        w.load_costs(phase1);
        w.price_duals();

        let pricing = w.choose_entering(phase1, bland);
        let (var, dir, reduced) = match pricing {
            Pricing::None => {
                if !clean {
                    // Recheck against a fresh factorization before declaring.
                    w.refactor();
                    clean = true;
                    continue;
                }
                if w.restore_costs() {
                    // Optimal only for the perturbed costs: reprice against
                    // the real ones and keep going.
                    w.refactor();
                    clean = true;
                    stall = 0;
                    bland = false;
                    continue;
                }
                if phase1 {
                    if w.forgive_debris() {
                        // The violation sum is at its minimum and every
                        // residual is below the user tolerance: that is
                        // feasibility, up to the precision the arithmetic
                        // can deliver. Move on to phase 2.
                        continue;
                    }
                    break Status::Infeasible;
                }
                break Status::Optimal;
            }
            Pricing::Entering { var, dir, reduced } => (var, dir, reduced),
        };

        let (rows, vals) = w.mat.col(var);
        // Reborrow dance: ftran needs &mut factor plus the column slices.
        let (rows, vals) = (rows.to_vec(), vals.to_vec());
        w.clear_w();
        {
            let Worker {
                factor, w_pos, w_nnz, ..
            } = &mut w;
            factor.ftran_sparse(&rows, &vals, w_pos, w_nnz);
        }

        if trace_enabled() {
            eprintln!(
                "iter {} phase{} var {} dir {} d {:.6e} infeas {} obj~{:.6e}",
                w.stats.iterations,
                if phase1 { 1 } else { 2 },
                var,
                dir,
                reduced,
                w.n_infeas,
                lp.objective_value(&w.x[..lp.num_cols()]),
            );
        }
        let ratio = if phase1 && !bland {
            // The long-step variant needs no anti-cycling help; under
            // Bland's rule the plain first-blocker test keeps its guarantee.
            w.ratio_test_long(var, dir, reduced)
        } else {
            w.ratio_test(var, dir, phase1, bland)
        };
        if trace_enabled() {
            match &ratio {
                Ratio::Unblocked => eprintln!("  unblocked"),
                Ratio::BoundFlip { t } => eprintln!("  flip t {:.6e}", t),
                Ratio::Pivot { t, pos, to_upper } => eprintln!(
                    "  pivot t {:.6e} pos {} leaving {} to_upper {} xb {:.6e} w {:.6e}",
                    t,
                    pos,
                    w.basis[*pos],
                    to_upper,
                    w.x[w.basis[*pos]],
                    w.w_pos[*pos]
                ),
            }
        }
        let step = match ratio {
            Ratio::Unblocked => {
                if !clean {
                    w.refactor();
                    clean = true;
                    continue;
                }
                if w.restore_costs() {
                    // A ray that only pays off under the perturbation is not
                    // evidence of unboundedness; recheck with real costs.
                    w.refactor();
                    clean = true;
                    stall = 0;
                    bland = false;
                    continue;
                }
                if phase1 {
                    if w.forgive_debris() {
                        continue;
                    }
                    // A strictly improving, unblocked phase-1 direction cannot
                    // exist (the infeasibility sum is bounded below by zero);
                    // reaching this arm means numerics have broken down badly.
                    break Status::IterationLimit;
                }
                break Status::Unbounded;
            }
            Ratio::BoundFlip { t } => {
                w.apply_step(var, dir, t, None);
                clean = false;
                t
            }
            Ratio::Pivot { t, pos, to_upper } => {
                w.update_devex(var, pos);
                w.apply_step(var, dir, t, Some((pos, to_upper)));
                clean = false;
                t
            }
        };

        w.stats.iterations += 1;
        if phase1 {
            w.stats.phase1_iterations += 1;
        }
        if w.stats.iterations % 5000 == 0 && trace_summary_enabled() {
            let total_viol: f64 = w.viol.iter().sum();
            eprintln!(
                "[lp] iter {} phase{} infeas {} sum_viol {:.6e} stall {} bland {} step {:.3e}",
                w.stats.iterations,
                if phase1 { 1 } else { 2 },
                w.n_infeas,
                total_viol,
                stall,
                bland,
                step,
            );
        }
        // Stall detection: the objective (either phase's) improves by about
        // |reduced cost| * step per iteration; a long run of near-zero steps
        // means degeneracy. First escalation perturbs the phase-2 costs to
        // break the ties, second falls back to Bland's rule.
        let progress = reduced.abs() * step;
        if progress <= STALL_EPS {
            stall += 1;
            if !phase1 && !perturb_used && stall >= PERTURB_AFTER {
                w.perturb_costs();
                perturb_used = true;
                stall = 0;
            } else if stall >= STALL_LIMIT && !bland {
                bland = true;
                w.stats.bland_engaged = true;
            }
        } else {
            stall = 0;
            bland = false;
        }
    };

    // An iteration-limit exit can leave a perturbation active.
    w.restore_costs();
    let objective = lp.objective_value(&w.x[..lp.num_cols()]);
    // Duals from the phase-2 cost vector, mapped back through row scaling.
    w.load_costs(false);
    w.price_duals();
    let dual: Vec<f64> = (0..w.m).map(|i| w.y_rows[i] * w.row_scale[i]).collect();
    w.stats.wall = start.elapsed();

    Solution {
        status,
        objective,
        primal: w.x[..lp.num_cols()].to_vec(),
        dual,
        stats: w.stats,
    }
}

impl Worker {
    fn new(lp: &LinearProgram, options: &SolveOptions) -> Worker {
        let n = lp.num_cols();
        let m = lp.num_rows();
        let n_total = n + m;

        let mut row_scale = vec![1.0f64; m];
        if options.scale {
            let mut row_max = vec![0.0f64; m];
            for &(r, _, v) in &lp.triplets {
                row_max[r] = row_max[r].max(v.abs());
            }
            for i in 0..m {
                if row_max[i] > 0.0 {
                    row_scale[i] = 1.0 / row_max[i];
                }
            }
        }

        // Column-compressed matrix over structural then logical columns.
        let mut tri: Vec<(usize, usize, f64)> = lp.triplets.clone();
        tri.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = Vec::with_capacity(n_total + 1);
        let mut rows = Vec::with_capacity(tri.len() + m);
        let mut vals = Vec::with_capacity(tri.len() + m);
        col_ptr.push(0);
        let mut it = tri.iter().peekable();
        for j in 0..n {
            let mut last_row = usize::MAX;
            while let Some(&&(r, c, v)) = it.peek() {
                if c != j {
                    break;
                }
                it.next();
                let sv = v * row_scale[r];
                if r == last_row {
                    // merge duplicates on the fly
                    let k = vals.len() - 1;
                    vals[k] += sv;
                } else {
                    rows.push(r);
                    vals.push(sv);
                    last_row = r;
                }
            }
            col_ptr.push(rows.len());
        }
        for i in 0..m {
            rows.push(i);
            vals.push(1.0);
            col_ptr.push(rows.len());
        }
        let mat = ColMatrix {
            m,
            col_ptr,
            rows,
            vals,
        };

        let mut cost = Vec::with_capacity(n_total);
        cost.extend_from_slice(&lp.objective);
        cost.resize(n_total, 0.0);

        let mut lower = Vec::with_capacity(n_total);
        let mut upper = Vec::with_capacity(n_total);
        lower.extend_from_slice(&lp.col_lower);
        upper.extend_from_slice(&lp.col_upper);
        for i in 0..m {
            match lp.row_sense[i] {
                Sense::Le => {
                    lower.push(0.0);
                    upper.push(f64::INFINITY);
                }
                Sense::Ge => {
                    lower.push(f64::NEG_INFINITY);
                    upper.push(0.0);
                }
                Sense::Eq => {
                    lower.push(0.0);
                    upper.push(0.0);
                }
            }
        }

        let rhs: Vec<f64> = lp.rhs.iter().enumerate().map(|(i, &b)| b * row_scale[i]).collect();

        let mut x = vec![0.0; n_total];
        let mut state = vec![VarState::AtLower; n_total];
        for j in 0..n {
            if lower[j].is_finite() {
                x[j] = lower[j];
                state[j] = VarState::AtLower;
            } else if upper[j].is_finite() {
                x[j] = upper[j];
                state[j] = VarState::AtUpper;
            } else {
                x[j] = 0.0;
                state[j] = VarState::FreeAtZero;
            }
        }
        let basis: Vec<usize> = (0..m).map(|i| n + i).collect();
        for (pos, &v) in basis.iter().enumerate() {
            state[v] = VarState::Basic(pos);
        }

        let factor = Factorization::build(&mat, &basis);
        let mut w = Worker {
            m,
            n_total,
            mat,
            cost,
            lower,
            upper,
            rhs,
            row_scale,
            x,
            state,
            basis,
            factor,
            viol: vec![0.0; m],
            n_infeas: 0,
            total_infeas: 0.0,
            viol_eps: options.feasibility_tol.min(VIOL_EPS_CAP),
            feas_tol: options.feasibility_tol,
            opt_tol: options.optimality_tol,
            devex: vec![1.0; n_total],
            cost_orig: None,
            w_pos: vec![0.0; m],
            w_nnz: Vec::new(),
            y_rows: vec![0.0; m],
            c_pos: vec![0.0; m],
            scratch: vec![0.0; m],
            e_work: vec![0.0; m],
            rho: vec![0.0; m],
            stats: SolveStats::default(),
        };
        w.recompute_basics();
        w
    }

    fn clear_w(&mut self) {
        for &p in &self.w_nnz {
            self.w_pos[p] = 0.0;
        }
        self.w_nnz.clear();
    }

    /// Rebuilds the factorization from the current basis, applies any basis
    /// repairs it reports, and recomputes basic values and violations.
    fn refactor(&mut self) {
        self.factor = Factorization::build(&self.mat, &self.basis);
        self.stats.refactorizations += 1;
        let repairs = std::mem::take(&mut self.factor.replaced);
        for (pos, row) in repairs {
            let out = self.basis[pos];
            self.state[out] = if self.lower[out].is_finite() {
                self.x[out] = self.lower[out];
                VarState::AtLower
            } else if self.upper[out].is_finite() {
                self.x[out] = self.upper[out];
                VarState::AtUpper
            } else {
                self.x[out] = 0.0;
                VarState::FreeAtZero
            };
            let logical = self.n_total - self.m + row;
            self.basis[pos] = logical;
            self.state[logical] = VarState::Basic(pos);
        }
        self.recompute_basics();
    }

    /// Solves for all basic values from scratch and rebuilds the violation
    /// accounting.
    fn recompute_basics(&mut self) {
        // rhs' = b - N x_N in row space.
        let mut rhs = self.rhs.clone();
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                let (rows, vals) = self.mat.col(j);
                for (&r, &v) in rows.iter().zip(vals) {
                    rhs[r] -= v * xj;
                }
            }
        }
        self.clear_w();
        {
            let Worker {
                factor,
                w_pos,
                w_nnz,
                ..
            } = self;
            factor.ftran_dense(&rhs, w_pos, w_nnz);
        }
        for pos in 0..self.m {
            self.x[self.basis[pos]] = self.w_pos[pos];
        }
        self.clear_w();
        self.n_infeas = 0;
        self.total_infeas = 0.0;
        for pos in 0..self.m {
            self.viol[pos] = 0.0;
            self.update_violation(pos);
        }
    }

    /// When every remaining bound violation is below the user feasibility
    /// tolerance, writes the whole ledger off as numerical debris and
    /// returns true. Phase 1 keeps repair pressure on violations far below
    /// that tolerance (see `VIOL_EPS_CAP`), so without this release valve a
    /// residual it cannot reduce any further would read as infeasibility.
    fn forgive_debris(&mut self) -> bool {
        let worst = self.viol.iter().cloned().fold(0.0f64, f64::max);
        if worst > self.feas_tol {
            return false;
        }
        for v in &mut self.viol {
            *v = 0.0;
        }
        self.n_infeas = 0;
        true
    }

    /// Refreshes the violation entry of one basis position.
    fn update_violation(&mut self, pos: usize) {
        let v = self.basis[pos];
        let xv = self.x[v];
        let below = self.lower[v] - xv;
        let above = xv - self.upper[v];
        let raw = if below > 0.0 {
            below
        } else if above > 0.0 {
            above
        } else {
            0.0
        };
        let old = self.viol[pos];
        let new = if raw > self.viol_eps { raw } else { 0.0 };
        if old > 0.0 && new == 0.0 {
            self.n_infeas -= 1;
        } else if old == 0.0 && new > 0.0 {
            self.n_infeas += 1;
        }
        self.total_infeas += new - old;
        self.viol[pos] = new;
    }

    /// Loads the phase-appropriate cost of each basic variable into c_pos.
    fn load_costs(&mut self, phase1: bool) {
        for pos in 0..self.m {
            let v = self.basis[pos];
            self.c_pos[pos] = if phase1 {
                let xv = self.x[v];
                if xv < self.lower[v] - self.viol_eps {
                    -1.0
                } else if xv > self.upper[v] + self.viol_eps {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[v]
            };
        }
    }

    fn price_duals(&mut self) {
        let Worker {
            factor,
            c_pos,
            y_rows,
            scratch,
            ..
        } = self;
        factor.btran_dense(c_pos, y_rows, scratch);
    }

    /// Returns every Devex weight to the fresh reference framework.
    fn reset_devex(&mut self) {
        for w in &mut self.devex {
            *w = 1.0;
        }
    }

    /// Forrest-Goldfarb Devex weight update for a basis exchange: entering
    /// variable `entering`, leaving basis position `pos`. Must run before the
    /// exchange is applied; needs the entering column in `w_pos`.
    fn update_devex(&mut self, entering: usize, pos: usize) {
        let alpha_q = self.w_pos[pos];
        if alpha_q.abs() <= PIVOT_TOL {
            return;
        }
        let gamma = self.devex[entering].max(1.0);
        let ref_scale = gamma / (alpha_q * alpha_q);
        // Pivot row of the inverse: rho = B^-T e_pos, alpha_rj = rho . A_j.
        self.e_work[pos] = 1.0;
        {
            let Worker {
                factor,
                e_work,
                rho,
                scratch,
                ..
            } = self;
            factor.btran_dense(e_work, rho, scratch);
        }
        self.e_work[pos] = 0.0;
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_))
                || j == entering
                || self.lower[j] == self.upper[j]
            {
                continue;
            }
            let (rows, vals) = self.mat.col(j);
            let mut dot = 0.0;
            for (&r, &v) in rows.iter().zip(vals) {
                dot += self.rho[r] * v;
            }
            if dot != 0.0 {
                let cand = ref_scale * dot * dot;
                if cand > self.devex[j] {
                    self.devex[j] = cand;
                }
            }
        }
        let leaving = self.basis[pos];
        self.devex[leaving] = ref_scale.max(1.0);
    }

    /// Adds a tiny deterministic relief to every movable cost so that
    /// degenerate ties break. Signs keep nonbasic variables attracted to the
    /// bound they currently sit on.
    fn perturb_costs(&mut self) {
        let orig = self.cost.clone();
        for j in 0..self.n_total {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            // splitmix64 of the column index: reproducible noise in [0, 1).
            let mut z = (j as u64).wrapping_add(0x9e3779b97f4a7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            let r = (z >> 11) as f64 / (1u64 << 53) as f64;
            let eps = 1e-5 * (1.0 + self.cost[j].abs()) * (0.5 + 0.5 * r);
            match self.state[j] {
                VarState::AtUpper => self.cost[j] -= eps,
                _ => self.cost[j] += eps,
            }
        }
        self.cost_orig = Some(orig);
    }

    /// Undoes `perturb_costs`. Returns whether a perturbation was active.
    fn restore_costs(&mut self) -> bool {
        match self.cost_orig.take() {
            Some(orig) => {
                self.cost = orig;
                true
            }
            None => false,
        }
    }

    /// Devex pricing (or Bland's rule): scans all nonbasic columns for the
    /// best weighted reduced cost. Phase-1 nonbasic costs are zero.
    fn choose_entering(&self, phase1: bool, bland: bool) -> Pricing {
        let mut best: Option<(f64, usize, f64, f64)> = None; // (score, var, dir, d)
        for j in 0..self.n_total {
            let (dir, d) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => {
                    if self.lower[j] == self.upper[j] {
                        continue; // fixed
                    }
                    let d = self.reduced_cost(j, phase1);
                    if d < -self.opt_tol {
                        (1.0, d)
                    } else {
                        continue;
                    }
                }
                VarState::AtUpper => {
                    if self.lower[j] == self.upper[j] {
                        continue; // fixed
                    }
                    let d = self.reduced_cost(j, phase1);
                    if d > self.opt_tol {
                        (-1.0, d)
                    } else {
                        continue;
                    }
                }
                VarState::FreeAtZero => {
                    let d = self.reduced_cost(j, phase1);
                    if d < -self.opt_tol {
                        (1.0, d)
                    } else if d > self.opt_tol {
                        (-1.0, d)
                    } else {
                        continue;
                    }
                }
            };
            if bland {
                return Pricing::Entering {
                    var: j,
                    dir,
                    reduced: d,
                };
            }
            let score = d * d / self.devex[j];
            if best.map_or(true, |(s, _, _, _)| score > s) {
                best = Some((score, j, dir, d));
            }
        }
        match best {
            Some((_, var, dir, d)) => Pricing::Entering {
                var,
                dir,
                reduced: d,
            },
            None => Pricing::None,
        }
    }

    fn reduced_cost(&self, j: usize, phase1: bool) -> f64 {
        let cj = if phase1 { 0.0 } else { self.cost[j] };
        let (rows, vals) = self.mat.col(j);
        let mut dot = 0.0;
        for (&r, &v) in rows.iter().zip(vals) {
            dot += self.y_rows[r] * v;
        }
        cj - dot
    }

    /// Phase-1 long-step ratio test: walks the breakpoints of the piecewise
    /// linear total-violation function in increasing step order, letting
    /// feasible basics cross their bounds while the aggregate slope still
    /// improves, and pivots where the slope turns non-negative. Within the
    /// final cluster of near-equal breakpoints the largest pivot element
    /// wins, which both stabilises the factorization and works as an
    /// anti-degeneracy rule: a cluster at step zero is resolved in one
    /// exchange instead of one micro-pivot per member.
    fn ratio_test_long(&self, var: usize, dir: f64, reduced: f64) -> Ratio {
        let tol = self.viol_eps;
        let span = self.upper[var] - self.lower[var];
        let t_flip = if span.is_finite() { span } else { f64::INFINITY };
        // (t, slope gain, pos, to_upper, |w|)
        let mut bps: Vec<(f64, f64, usize, bool, f64)> = Vec::with_capacity(self.w_nnz.len());
        for &pos in &self.w_nnz {
            let wv = self.w_pos[pos];
            if wv.abs() <= PIVOT_TOL {
                continue;
            }
            let rate = -dir * wv;
            let bvar = self.basis[pos];
            let xv = self.x[bvar];
            // Every bound ahead of the motion is a slope repair of |rate|:
            // an infeasible basic crossing into feasibility stops hurting,
            // and crossing out at the far bound starts hurting again. An
            // equality logical contributes both at the same step.
            let mut push = |target: f64, to_upper: bool| {
                if !target.is_finite() {
                    return;
                }
                let t = ((target - xv) / rate).max(0.0);
                if t <= t_flip {
                    bps.push((t, rate.abs(), pos, to_upper, wv.abs()));
                }
            };
            if rate > 0.0 {
                if xv > self.upper[bvar] + tol {
                    // Above and rising: both bounds lie behind the motion.
                } else if xv < self.lower[bvar] - tol {
                    push(self.lower[bvar], false);
                    push(self.upper[bvar], true);
                } else {
                    push(self.upper[bvar], true);
                }
            } else if xv < self.lower[bvar] - tol {
                // Below and falling: nothing ahead.
            } else if xv > self.upper[bvar] + tol {
                push(self.upper[bvar], true);
                push(self.lower[bvar], false);
            } else {
                push(self.lower[bvar], false);
            }
        }
        if bps.is_empty() {
            return if t_flip.is_finite() {
                Ratio::BoundFlip { t: t_flip }
            } else {
                Ratio::Unblocked
            };
        }
        bps.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.2.cmp(&b.2))
        });
        let mut slope = -reduced.abs();
        let mut stop = None;
        for (k, bp) in bps.iter().enumerate() {
            slope += bp.1;
            if slope >= 0.0 {
                stop = Some(k);
                break;
            }
        }
        let Some(k) = stop else {
            // Slope stays improving through every crossing.
            return if t_flip.is_finite() {
                Ratio::BoundFlip { t: t_flip }
            } else {
                Ratio::Unblocked
            };
        };
        // Largest pivot among the swept breakpoints with essentially the
        // same step as the stopper.
        let t_k = bps[k].0;
        let window = t_k * RATIO_TIE_REL + RATIO_TIE_ABS;
        let mut choice = k;
        for (i, bp) in bps.iter().enumerate().take(k) {
            if bp.0 >= t_k - window && bp.4 > bps[choice].4 {
                choice = i;
            }
        }
        let (_, _, pos, to_upper, _) = bps[choice];
        let bvar = self.basis[pos];
        let rate = -dir * self.w_pos[pos];
        let target = if to_upper {
            self.upper[bvar]
        } else {
            self.lower[bvar]
        };
        let t = ((target - self.x[bvar]) / rate).max(0.0);
        Ratio::Pivot { t, pos, to_upper }
    }

    /// Bounded-variable ratio test along +/- the entering column.
    ///
    /// In phase 1 a basic variable that is outside a bound blocks when it
    /// *reaches* the violated bound (it becomes feasible there), and one that
    /// is moving further away from its violated side does not block at all;
    /// the aggregate slope already prices that in.
    fn ratio_test(&self, var: usize, dir: f64, phase1: bool, bland: bool) -> Ratio {
        let tol = self.viol_eps;
        let span = self.upper[var] - self.lower[var];
        let mut best_t = if span.is_finite() { span } else { f64::INFINITY };
        let mut best: Option<(usize, bool, f64)> = None; // (pos, to_upper, |w|)
        for &pos in &self.w_nnz {
            let wv = self.w_pos[pos];
            if wv.abs() <= PIVOT_TOL {
                continue;
            }
            let rate = -dir * wv; // d x_basic[pos] / dt
            let bvar = self.basis[pos];
            let xv = self.x[bvar];
            let (target, to_upper) = if rate > 0.0 {
                if phase1 && xv < self.lower[bvar] - tol {
                    (self.lower[bvar], false)
                } else if phase1 && xv > self.upper[bvar] + tol {
                    continue; // above and rising: priced into the slope
                } else if self.upper[bvar].is_finite() {
                    // In phase 2 this also catches a basic fractionally above
                    // its bound (forgiven debris): it blocks at step zero
                    // rather than drifting further out.
                    (self.upper[bvar], true)
                } else {
                    continue;
                }
            } else {
                if phase1 && xv > self.upper[bvar] + tol {
                    (self.upper[bvar], true)
                } else if phase1 && xv < self.lower[bvar] - tol {
                    continue;
                } else if self.lower[bvar].is_finite() {
                    (self.lower[bvar], false)
                } else {
                    continue;
                }
            };
            let mut t = (target - xv) / rate;
            if t < 0.0 {
                t = 0.0; // numeric drift just beyond a bound
            }
            let tie = t <= best_t * (1.0 + RATIO_TIE_REL) + RATIO_TIE_ABS;
            let strictly_better = t < best_t - (best_t * RATIO_TIE_REL + RATIO_TIE_ABS);
            let better = match best {
                None => t < best_t || tie && best_t.is_infinite(),
                Some((bpos, _, babs)) => {
                    if strictly_better {
                        true
                    } else if tie {
                        if bland {
                            self.basis[pos] < self.basis[bpos]
                        } else {
                            wv.abs() > babs
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best_t = best_t.min(t);
                best = Some((pos, to_upper, wv.abs()));
            }
        }
        match best {
            Some((pos, to_upper, _)) => {
                // Recompute the exact step for the chosen blocker so that it
                // lands exactly on its bound.
                let bvar = self.basis[pos];
                let rate = -dir * self.w_pos[pos];
                let target = if to_upper {
                    self.upper[bvar]
                } else {
                    self.lower[bvar]
                };
                let t = ((target - self.x[bvar]) / rate).max(0.0);
                Ratio::Pivot { t, pos, to_upper }
            }
            None => {
                if best_t.is_finite() {
                    Ratio::BoundFlip { t: best_t }
                } else {
                    Ratio::Unblocked
                }
            }
        }
    }

    /// Applies a step of length `t` along the entering direction, either as a
    /// bound flip or as a basis exchange at `pivot`.
    fn apply_step(&mut self, var: usize, dir: f64, t: f64, pivot: Option<(usize, bool)>) {
        if t != 0.0 {
            for i in 0..self.w_nnz.len() {
                let pos = self.w_nnz[i];
                let wv = self.w_pos[pos];
                if wv != 0.0 {
                    self.x[self.basis[pos]] -= dir * t * wv;
                }
            }
        }
        match pivot {
            None => {
                // Bound flip: land exactly on the opposite bound.
                self.x[var] = match self.state[var] {
                    VarState::AtLower => {
                        self.state[var] = VarState::AtUpper;
                        self.upper[var]
                    }
                    VarState::AtUpper => {
                        self.state[var] = VarState::AtLower;
                        self.lower[var]
                    }
                    _ => unreachable!("bound flip requires a bounded nonbasic"),
                };
                for i in 0..self.w_nnz.len() {
                    let pos = self.w_nnz[i];
                    self.update_violation(pos);
                }
            }
            Some((pos, to_upper)) => {
                let leaving = self.basis[pos];
                // Snap the leaving variable exactly onto its bound.
                if to_upper {
                    self.x[leaving] = self.upper[leaving];
                    self.state[leaving] = VarState::AtUpper;
                } else {
                    self.x[leaving] = self.lower[leaving];
                    self.state[leaving] = VarState::AtLower;
                }
                self.x[var] += dir * t;
                self.basis[pos] = var;
                self.state[var] = VarState::Basic(pos);
                {
                    let Worker {
                        factor,
                        w_pos,
                        w_nnz,
                        ..
                    } = self;
                    factor.push_update(w_pos, w_nnz, pos);
                }
                for i in 0..self.w_nnz.len() {
                    let pos = self.w_nnz[i];
                    self.update_violation(pos);
                }
            }
        }
        self.clear_w();
    }

}
