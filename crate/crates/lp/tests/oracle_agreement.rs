//! Cross-validation of the iterative solver against the exhaustive oracle on
//! a corpus of small random problems, with format round-trips on the side.
//! The two solution paths share no code: disagreement means a real bug in one
//! of them, so nothing here is allowed to fall back or retry.

use gridplan_lp::check::check_solution;
use gridplan_lp::oracle::brute_force_oracle;
use gridplan_lp::{binio, mps, solve, LinearProgram, Sense, SolveOptions, Status};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Draws coefficients from a small grid: degenerate and redundant geometry is
/// common on grids, which is exactly the hard case worth hammering.
fn grid_value(rng: &mut StdRng) -> f64 {
    (rng.gen_range(-16..=16) as f64) * 0.25
}

fn push_row(lp: &mut LinearProgram, rng: &mut StdRng, sense: Sense, rhs: f64) {
    let n = lp.num_cols();
    let i = lp.add_row(&format!("r{}", lp.num_rows()), sense, rhs, &[]);
    for j in 0..n {
        if rng.gen_bool(0.7) {
            let v = grid_value(rng);
            if v != 0.0 {
                lp.triplets.push((i, j, v));
            }
        }
    }
}

/// Nonnegative costs over nonnegative variables: bounded below by zero, so
/// never unbounded, and usually feasible. The bulk of the corpus.
fn benign_problem(rng: &mut StdRng, case: usize) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=6);
    let mut lp = LinearProgram::new(&format!("benign{}", case));
    for j in 0..n {
        let hi = if rng.gen_bool(0.3) {
            rng.gen_range(1..=16) as f64 * 0.25
        } else {
            f64::INFINITY
        };
        let c = rng.gen_range(0..=16) as f64 * 0.25;
        lp.add_col(&format!("x{}", j), 0.0, hi, c);
    }
    for _ in 0..m {
        let (sense, rhs) = match rng.gen_range(0..10) {
            0..=6 => (Sense::Le, rng.gen_range(0..=16) as f64 * 0.25),
            7..=8 => (Sense::Ge, rng.gen_range(-8..=4) as f64 * 0.25),
            _ => (Sense::Eq, rng.gen_range(0..=8) as f64 * 0.25),
        };
        push_row(&mut lp, rng, sense, rhs);
    }
    lp
}

/// Anything goes: free variables, negative costs, equalities. This flavor
/// supplies the infeasible and unbounded outcomes.
fn wild_problem(rng: &mut StdRng, case: usize) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(0..=6);
    let mut lp = LinearProgram::new(&format!("wild{}", case));
    for j in 0..n {
        let (lo, hi) = match rng.gen_range(0..10) {
            0 => (f64::NEG_INFINITY, f64::INFINITY),
            1 => (f64::NEG_INFINITY, grid_value(rng)),
            2..=4 => {
                let a = grid_value(rng);
                let b = grid_value(rng);
                (a.min(b), a.max(b))
            }
            _ => (0.0, f64::INFINITY),
        };
        lp.add_col(&format!("x{}", j), lo, hi, grid_value(rng));
    }
    for _ in 0..m {
        let sense = match rng.gen_range(0..4) {
            0 => Sense::Ge,
            1 => Sense::Eq,
            _ => Sense::Le,
        };
        let rhs = grid_value(rng);
        push_row(&mut lp, rng, sense, rhs);
    }
    lp
}

/// Every variable boxed: never unbounded, feasibility hinges on the rows.
fn boxed_problem(rng: &mut StdRng, case: usize) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=6);
    let mut lp = LinearProgram::new(&format!("boxed{}", case));
    for j in 0..n {
        let a = grid_value(rng);
        let b = grid_value(rng);
        lp.add_col(&format!("x{}", j), a.min(b), a.max(b), grid_value(rng));
    }
    for _ in 0..m {
        let sense = match rng.gen_range(0..5) {
            0 => Sense::Ge,
            1 => Sense::Eq,
            _ => Sense::Le,
        };
        let rhs = grid_value(rng);
        push_row(&mut lp, rng, sense, rhs);
    }
    lp
}

fn random_problem(rng: &mut StdRng, case: usize) -> LinearProgram {
    match case % 10 {
        0..=5 => benign_problem(rng, case),
        6..=7 => wild_problem(rng, case),
        _ => boxed_problem(rng, case),
    }
}

#[test]
fn solver_agrees_with_oracle_on_random_corpus() {
    let mut rng = StdRng::seed_from_u64(0x5eed_cafe);
    let start = std::time::Instant::now();
    let mut counts = [0usize; 3]; // optimal, infeasible, unbounded
    let cases = 150;
    for case in 0..cases {
        let lp = random_problem(&mut rng, case);
        let reference = brute_force_oracle(&lp, 1e-7)
            .unwrap_or_else(|e| panic!("oracle refused case {}: {}", case, e));
        let sol = solve(&lp, &SolveOptions::default())
            .unwrap_or_else(|e| panic!("solver failed case {}: {}", case, e));
        assert_eq!(
            sol.status, reference.status,
            "status mismatch on case {}:\n{}",
            case,
            lp.dump_string()
        );
        match sol.status {
            Status::Optimal => {
                counts[0] += 1;
                let want = reference.objective.unwrap();
                let got = sol.objective;
                let rel = (got - want).abs() / want.abs().max(1.0);
                assert!(
                    rel < 1e-6,
                    "objective mismatch on case {}: solver {} oracle {}\n{}",
                    case,
                    got,
                    want,
                    lp.dump_string()
                );
                let report = check_solution(&lp, &sol.primal, 1e-6).unwrap();
                assert!(
                    report.pass,
                    "solver point infeasible on case {}: {:?}",
                    case, report
                );
            }
            Status::Infeasible => counts[1] += 1,
            Status::Unbounded => counts[2] += 1,
            Status::IterationLimit => panic!("iteration limit on tiny case {}", case),
        }
    }
    // The corpus must actually exercise all three outcomes.
    assert!(counts[0] >= 60, "too few optimal cases: {:?}", counts);
    assert!(counts[1] >= 10, "too few infeasible cases: {:?}", counts);
    assert!(counts[2] >= 5, "too few unbounded cases: {:?}", counts);
    assert!(
        start.elapsed().as_secs_f64() < 5.0,
        "corpus took {:?}",
        start.elapsed()
    );
}

#[test]
fn formats_round_trip_on_random_corpus() {
    let mut rng = StdRng::seed_from_u64(0x0f0f_0f0f);
    for case in 0..60 {
        let lp = random_problem(&mut rng, case);
        let text = mps::write_mps(&lp);
        let from_mps = mps::read_mps(&text)
            .unwrap_or_else(|e| panic!("mps reread failed on case {}: {}\n{}", case, e, text));
        assert!(
            lp.structurally_equal(&from_mps, 1e-9),
            "mps round trip changed case {}:\n{}",
            case,
            text
        );
        let mut buf = Vec::new();
        binio::write_lp(&lp, &mut buf).unwrap();
        let from_bin = binio::read_lp(&mut buf.as_slice()).unwrap();
        assert!(
            lp.structurally_equal(&from_bin, 0.0),
            "binary round trip changed case {}",
            case
        );
    }
}

#[test]
fn solving_reread_mps_gives_same_objective() {
    let mut rng = StdRng::seed_from_u64(42);
    let mut checked = 0;
    for case in 0..40 {
        let lp = benign_problem(&mut rng, case);
        let direct = solve(&lp, &SolveOptions::default()).unwrap();
        if direct.status != Status::Optimal {
            continue;
        }
        let back = mps::read_mps(&mps::write_mps(&lp)).unwrap();
        let via = solve(&back, &SolveOptions::default()).unwrap();
        assert_eq!(via.status, Status::Optimal, "case {}", case);
        let rel = (via.objective - direct.objective).abs() / direct.objective.abs().max(1.0);
        assert!(rel < 1e-6, "case {}: {} vs {}", case, via.objective, direct.objective);
        checked += 1;
    }
    assert!(checked >= 10, "only {} optimal cases", checked);
}
