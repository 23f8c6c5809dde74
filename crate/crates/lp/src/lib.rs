//! Desk-scale linear programming toolkit.
//!
//! The centrepiece is [`solve`], a revised primal simplex method with bounded
//! variables, row scaling and a Bland's-rule fallback for degenerate stalls.
//! Around it sit:
//!
//! * [`LinearProgram`], a sparse triplet representation with named rows and
//!   columns,
//! * [`mps`], a fixed-column interchange writer and companion reader,
//! * [`check`], an arithmetic audit of a claimed solution against the raw
//!   problem data,
//! * [`oracle`], a brute-force vertex enumerator used to cross-check the
//!   simplex on small problems,
//! * [`binio`], a compact binary serialisation for shipping models between
//!   the `run`, `solve` and `export` subcommands.
//!
//! Everything here is deterministic: identical inputs produce identical
//! iteration sequences, identical solutions and identical output bytes.

use std::collections::HashSet;
use std::fmt;

pub mod binio;
pub mod check;
pub mod mps;
pub mod oracle;
mod factor;
mod simplex;

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Eq => write!(f, "="),
            Sense::Ge => write!(f, ">="),
        }
    }
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Optimal => write!(f, "optimal"),
            Status::Infeasible => write!(f, "infeasible"),
            Status::Unbounded => write!(f, "unbounded"),
            Status::IterationLimit => write!(f, "iteration_limit"),
        }
    }
}

/// Errors surfaced by this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The problem data violates a structural requirement (bad dimension,
    /// non-finite coefficient, duplicate name, unknown index).
    InvalidProblem(String),
    /// An interchange file could not be parsed.
    Parse(String),
    /// An I/O failure while reading or writing a model file.
    Io(String),
    /// A size limit was exceeded (the brute-force oracle refuses large inputs).
    TooLarge(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidProblem(msg) => write!(f, "invalid problem: {}", msg),
            Error::Parse(msg) => write!(f, "parse error: {}", msg),
            Error::Io(msg) => write!(f, "io error: {}", msg),
            Error::TooLarge(msg) => write!(f, "input too large: {}", msg),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// A sparse linear program in triplet form.
///
/// The objective is always minimised. Rows carry a sense and a right-hand
/// side; columns carry bounds and an objective coefficient. Coefficients are
/// stored as `(row, col, value)` triplets; [`LinearProgram::canonicalize`]
/// sorts them and merges duplicates, and the solver does so implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub name: String,
    /// Objective coefficient per column.
    pub objective: Vec<f64>,
    /// Constant added to the objective value (not part of the matrix).
    pub objective_offset: f64,
    /// Matrix entries as (row, col, value).
    pub triplets: Vec<(usize, usize, f64)>,
    pub row_sense: Vec<Sense>,
    pub rhs: Vec<f64>,
    /// Lower bound per column; `f64::NEG_INFINITY` when free below.
    pub col_lower: Vec<f64>,
    /// Upper bound per column; `f64::INFINITY` when free above.
    pub col_upper: Vec<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

impl LinearProgram {
    /// An empty minimisation problem with the given name.
    pub fn new(name: &str) -> Self {
        LinearProgram {
            name: name.to_string(),
            objective: Vec::new(),
            objective_offset: 0.0,
            triplets: Vec::new(),
            row_sense: Vec::new(),
            rhs: Vec::new(),
            col_lower: Vec::new(),
            col_upper: Vec::new(),
            row_names: Vec::new(),
            col_names: Vec::new(),
        }
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Adds a column and returns its index.
    pub fn add_col(&mut self, name: &str, lower: f64, upper: f64, obj: f64) -> usize {
        self.objective.push(obj);
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.col_names.push(name.to_string());
        self.objective.len() - 1
    }

    /// Adds a row with the given terms and returns its index.
    pub fn add_row(&mut self, name: &str, sense: Sense, rhs: f64, terms: &[(usize, f64)]) -> usize {
        let row = self.rhs.len();
        self.row_sense.push(sense);
        self.rhs.push(rhs);
        self.row_names.push(name.to_string());
        for &(col, v) in terms {
            self.triplets.push((row, col, v));
        }
        row
    }

    /// Sorts triplets by (row, col), merges duplicates by summation and drops
    /// exact zeros. Structural invariant for the interchange writer and the
    /// solver alike.
    pub fn canonicalize(&mut self) {
        self.triplets
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for &(r, c, v) in &self.triplets {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|&(_, _, v)| v != 0.0);
        self.triplets = out;
    }

    /// Structural validation: consistent dimensions, finite data, in-range
    /// indices, unique names, lower <= upper on every column.
    pub fn validate(&self) -> Result<(), Error> {
        let n = self.num_cols();
        let m = self.num_rows();
        if self.col_lower.len() != n || self.col_upper.len() != n || self.col_names.len() != n {
            return Err(Error::InvalidProblem(
                "column arrays have inconsistent lengths".into(),
            ));
        }
        if self.row_sense.len() != m || self.row_names.len() != m {
            return Err(Error::InvalidProblem(
                "row arrays have inconsistent lengths".into(),
            ));
        }
        for (j, &c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "objective coefficient of column '{}' is not finite",
                    self.col_names[j]
                )));
            }
        }
        if !self.objective_offset.is_finite() {
            return Err(Error::InvalidProblem("objective offset is not finite".into()));
        }
        for (i, &b) in self.rhs.iter().enumerate() {
            if !b.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "rhs of row '{}' is not finite",
                    self.row_names[i]
                )));
            }
        }
        for j in 0..n {
            let (lo, hi) = (self.col_lower[j], self.col_upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidProblem(format!(
                    "bounds of column '{}' are malformed",
                    self.col_names[j]
                )));
            }
            if lo > hi {
                return Err(Error::InvalidProblem(format!(
                    "column '{}' has lower bound {} above upper bound {}",
                    self.col_names[j], lo, hi
                )));
            }
        }
        for &(r, c, v) in &self.triplets {
            if r >= m || c >= n {
                return Err(Error::InvalidProblem(format!(
                    "triplet ({}, {}) outside {}x{} matrix",
                    r, c, m, n
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "coefficient at row '{}', column '{}' is not finite",
                    self.row_names[r], self.col_names[c]
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &self.row_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidProblem(format!("duplicate row name '{}'", name)));
            }
        }
        let mut seen = HashSet::new();
        for name in &self.col_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidProblem(format!(
                    "duplicate column name '{}'",
                    name
                )));
            }
        }
        Ok(())
    }

    /// Row activities `A x` for a full assignment of column values.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for &(r, c, v) in &self.triplets {
            act[r] += v * x[c];
        }
        act
    }

    /// Objective value `c . x` plus the offset.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut obj = self.objective_offset;
        for (j, &c) in self.objective.iter().enumerate() {
            obj += c * x[j];
        }
        obj
    }

    /// True when both problems have the same shape, senses, bounds, rhs,
    /// objective and canonical coefficient lists. Names are ignored, which is
    /// what makes the comparison useful after a round trip through the
    /// interchange format and its name mangling.
    pub fn structurally_equal(&self, other: &LinearProgram, tol: f64) -> bool {
        if self.num_cols() != other.num_cols() || self.num_rows() != other.num_rows() {
            return false;
        }
        let close = |a: f64, b: f64| {
            if a.is_infinite() || b.is_infinite() {
                a == b
            } else {
                (a - b).abs() <= tol * 1.0f64.max(a.abs().max(b.abs()))
            }
        };
        if self.row_sense != other.row_sense {
            return false;
        }
        for j in 0..self.num_cols() {
            if !close(self.objective[j], other.objective[j])
                || !close(self.col_lower[j], other.col_lower[j])
                || !close(self.col_upper[j], other.col_upper[j])
            {
                return false;
            }
        }
        for i in 0..self.num_rows() {
            if !close(self.rhs[i], other.rhs[i]) {
                return false;
            }
        }
        let mut a = self.clone();
        a.canonicalize();
        let mut b = other.clone();
        b.canonicalize();
        if a.triplets.len() != b.triplets.len() {
            return false;
        }
        a.triplets
            .iter()
            .zip(b.triplets.iter())
            .all(|(&(r1, c1, v1), &(r2, c2, v2))| r1 == r2 && c1 == c2 && close(v1, v2))
    }

    /// Writes a human-readable listing (objective, rows with named terms,
    /// bounds) for audits. Ordering follows the stored row and column order.
    pub fn write_dump<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut lp = self.clone();
        lp.canonicalize();
        writeln!(w, "problem {}", lp.name)?;
        writeln!(w, "minimize")?;
        let mut first = true;
        for (j, &c) in lp.objective.iter().enumerate() {
            if c != 0.0 {
                writeln!(w, "  {} {} {}", if first { " " } else { "+" }, c, lp.col_names[j])?;
                first = false;
            }
        }
        if lp.objective_offset != 0.0 {
            writeln!(w, "  + {}", lp.objective_offset)?;
        }
        if first && lp.objective_offset == 0.0 {
            writeln!(w, "  0")?;
        }
        writeln!(w, "subject to")?;
        // Group canonical triplets by row.
        let mut terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_rows()];
        for &(r, c, v) in &lp.triplets {
            terms[r].push((c, v));
        }
        for i in 0..lp.num_rows() {
            let mut line = format!("  {}:", lp.row_names[i]);
            if terms[i].is_empty() {
                line.push_str(" 0");
            }
            for &(c, v) in &terms[i] {
                line.push_str(&format!(" {} {} {}", if v < 0.0 { "-" } else { "+" }, v.abs(), lp.col_names[c]));
            }
            writeln!(w, "{} {} {}", line, lp.row_sense[i], lp.rhs[i])?;
        }
        writeln!(w, "bounds")?;
        for j in 0..lp.num_cols() {
            writeln!(
                w,
                "  {} <= {} <= {}",
                lp.col_lower[j], lp.col_names[j], lp.col_upper[j]
            )?;
        }
        Ok(())
    }

    /// [`write_dump`](Self::write_dump) into a string, for error messages.
    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("dump is utf-8")
    }
}

/// Solver tunables. `Default` matches the documented tolerances.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Primal feasibility tolerance on bound violations.
    pub feasibility_tol: f64,
    /// Dual tolerance on reduced costs when declaring optimality.
    pub optimality_tol: f64,
    /// Hard cap on simplex iterations across both phases.
    pub max_iterations: usize,
    /// Scale each row to unit maximum absolute coefficient before solving.
    pub scale: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            max_iterations: 0, // 0 means "choose from problem size"
            scale: true,
        }
    }
}

/// Result of a solve: classification, objective, primal values per column,
/// dual values per row and iteration statistics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub stats: SolveStats,
}

/// Bookkeeping from a solve.
#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub refactorizations: usize,
    pub bland_engaged: bool,
    pub wall: std::time::Duration,
}

/// Solves the program with the revised simplex method.
///
/// The input is validated first; structural defects surface as
/// [`Error::InvalidProblem`] rather than a bogus solution. Bound-inverted
/// columns (`lower > upper`) are rejected by validation, so an `Infeasible`
/// status always refers to genuine constraint conflict.
pub fn solve(lp: &LinearProgram, options: &SolveOptions) -> Result<Solution, Error> {
    lp.validate()?;
    Ok(simplex::solve(lp, options))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_merges_and_sorts() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_col("y", 0.0, f64::INFINITY, 1.0);
        lp.add_row("r0", Sense::Le, 1.0, &[(y, 2.0), (x, 1.0), (y, 3.0)]);
        lp.canonicalize();
        assert_eq!(lp.triplets, vec![(0, 0, 1.0), (0, 1, 5.0)]);
    }

    #[test]
    fn canonicalize_drops_cancelled_terms() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, 1.0, 0.0);
        lp.add_row("r0", Sense::Eq, 0.0, &[(x, 2.0), (x, -2.0)]);
        lp.canonicalize();
        assert!(lp.triplets.is_empty());
    }

    #[test]
    fn validate_rejects_duplicate_names() {
        let mut lp = LinearProgram::new("t");
        lp.add_col("x", 0.0, 1.0, 0.0);
        lp.add_col("x", 0.0, 1.0, 0.0);
        assert!(matches!(lp.validate(), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn validate_rejects_inverted_bounds() {
        let mut lp = LinearProgram::new("t");
        lp.add_col("x", 2.0, 1.0, 0.0);
        assert!(matches!(lp.validate(), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn validate_rejects_non_finite_coefficients() {
        let mut lp = LinearProgram::new("t");
        let x = lp.add_col("x", 0.0, 1.0, 0.0);
        lp.add_row("r0", Sense::Le, 1.0, &[(x, f64::NAN)]);
        assert!(matches!(lp.validate(), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn structural_equality_ignores_names() {
        let mut a = LinearProgram::new("a");
        let x = a.add_col("x", 0.0, 1.0, 2.0);
        a.add_row("r", Sense::Ge, 0.5, &[(x, 1.0)]);
        let mut b = LinearProgram::new("b");
        let y = b.add_col("C0000001", 0.0, 1.0, 2.0);
        b.add_row("R0000001", Sense::Ge, 0.5, &[(y, 1.0)]);
        assert!(a.structurally_equal(&b, 1e-12));
    }
}
