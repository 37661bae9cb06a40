//! Cross-checks the solver against two independent oracles on randomly
//! generated instances:
//!
//! * LP relaxations are compared against brute-force vertex enumeration
//!   (choose n active constraints, solve the square system, keep the best
//!   feasible point — a bounded feasible region always has an optimal
//!   vertex);
//! * full MILPs are compared against [`milp::brute_force_solve`], which
//!   enumerates every binary assignment.
//!
//! All instances use small integer data over bounded variables, so the
//! statuses are limited to optimal/infeasible and near-singular corner cases
//! stay rare and cleanly detectable.

use milp::{
    brute_force_solve, solve, solve_lp_relaxation, LinExpr, MilpProblem, Relation, SolveStatus,
    SolverConfig,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Gaussian elimination with partial pivoting; `None` when the system is
/// singular (pivot below 1e-8).
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot_row][col].abs() < 1e-8 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col].clone();
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / pivot[col];
            if factor == 0.0 {
                continue;
            }
            for (entry, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *entry -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// A random LP/MILP instance with every variable bounded.
struct Instance {
    problem: MilpProblem,
    /// Dense rows (coeffs, rel, rhs) including nothing for bounds.
    rows: Vec<(Vec<f64>, Relation, f64)>,
    objective: Vec<f64>,
    uppers: Vec<f64>,
}

fn random_instance(rng: &mut StdRng, num_cont: usize, num_bin: usize, num_rows: usize) -> Instance {
    let n = num_cont + num_bin;
    let mut builder = MilpProblem::builder();
    let mut uppers = Vec::new();
    for j in 0..num_cont {
        let ub = rng.gen_range(1..=8) as f64;
        builder.add_continuous(format!("x{j}"), Some(ub));
        uppers.push(ub);
    }
    for j in 0..num_bin {
        builder.add_binary(format!("b{j}"));
        uppers.push(1.0);
    }
    let mut rows = Vec::new();
    for r in 0..num_rows {
        let coeffs: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.4) {
                    0.0
                } else {
                    rng.gen_range(-3..=3) as f64
                }
            })
            .collect();
        let rel = match rng.gen_range(0..5) {
            0 => Relation::Ge,
            1 => Relation::Eq,
            _ => Relation::Le,
        };
        let rhs = rng.gen_range(-6..=10) as f64;
        let mut expr = LinExpr::new();
        for (j, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                expr.add(j, c);
            }
        }
        builder.add_constraint(format!("r{r}"), expr, rel, rhs);
        rows.push((coeffs, rel, rhs));
    }
    let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let mut obj = LinExpr::new();
    for (j, &c) in objective.iter().enumerate() {
        if c != 0.0 {
            obj.add(j, c);
        }
    }
    builder.set_objective(obj);
    Instance {
        problem: builder.build().unwrap(),
        rows,
        objective,
        uppers,
    }
}

/// Vertex-enumeration oracle for a bounded LP: minimum objective over all
/// feasible basic points, or `None` when no combination yields a feasible
/// point (infeasible).
fn vertex_oracle(inst: &Instance) -> Option<f64> {
    let n = inst.uppers.len();
    // Constraint pool: the rows plus both bounds of every variable.
    let mut pool: Vec<(Vec<f64>, Relation, f64)> = inst.rows.clone();
    for j in 0..n {
        let mut lo = vec![0.0; n];
        lo[j] = 1.0;
        pool.push((lo.clone(), Relation::Ge, 0.0));
        lo[j] = 1.0;
        pool.push((lo, Relation::Le, inst.uppers[j]));
    }
    let feasible = |x: &[f64]| {
        pool.iter().all(|(coeffs, rel, rhs)| {
            let activity: f64 = coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
            let tol = 1e-7 * (1.0 + rhs.abs());
            match rel {
                Relation::Le => activity <= rhs + tol,
                Relation::Ge => activity >= rhs - tol,
                Relation::Eq => (activity - rhs).abs() <= tol,
            }
        })
    };

    let mut best: Option<f64> = None;
    let mut active = vec![0usize; n];
    // Iterate over all n-subsets of the pool via a manual combination walk.
    fn combinations(
        pool_len: usize,
        k: usize,
        start: usize,
        active: &mut Vec<usize>,
        depth: usize,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if depth == k {
            visit(active);
            return;
        }
        for i in start..pool_len {
            active[depth] = i;
            combinations(pool_len, k, i + 1, active, depth + 1, visit);
        }
    }
    let mut visit = |chosen: &[usize]| {
        let a: Vec<Vec<f64>> = chosen.iter().map(|&i| pool[i].0.clone()).collect();
        let b: Vec<f64> = chosen.iter().map(|&i| pool[i].2).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let obj: f64 = inst.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    };
    combinations(pool.len(), n, 0, &mut active, 0, &mut visit);
    best
}

#[test]
fn lp_relaxation_matches_vertex_enumeration() {
    let mut rng = StdRng::seed_from_u64(0x5ea1);
    let mut optimal = 0;
    let mut infeasible = 0;
    for case in 0..300 {
        let num_cont = rng.gen_range(1..=4);
        let num_bin = rng.gen_range(0..=2);
        let num_rows = rng.gen_range(1..=5);
        let inst = random_instance(&mut rng, num_cont, num_bin, num_rows);
        let got = solve_lp_relaxation(&inst.problem).expect("relaxation solve");
        match vertex_oracle(&inst) {
            Some(oracle_obj) => {
                assert_eq!(
                    got.status,
                    SolveStatus::Optimal,
                    "case {case}: oracle found a feasible vertex\n{}",
                    inst.problem.to_lp_text()
                );
                let tol = 1e-6 * (1.0 + oracle_obj.abs());
                assert!(
                    (got.objective - oracle_obj).abs() <= tol,
                    "case {case}: simplex {} vs oracle {oracle_obj}\n{}",
                    got.objective,
                    inst.problem.to_lp_text()
                );
                // The relaxation's own point must satisfy the relaxed problem.
                let violations: Vec<_> = inst
                    .problem
                    .check_feasible(&got.values, 1e-7)
                    .into_iter()
                    .filter(|v| !matches!(v, milp::Violation::NonIntegral { .. }))
                    .collect();
                assert!(violations.is_empty(), "case {case}: {violations:?}");
                optimal += 1;
            }
            None => {
                assert_eq!(
                    got.status,
                    SolveStatus::Infeasible,
                    "case {case}: oracle found no feasible vertex\n{}",
                    inst.problem.to_lp_text()
                );
                infeasible += 1;
            }
        }
    }
    // The corpus should exercise both outcomes substantially.
    assert!(optimal >= 80, "only {optimal} optimal cases");
    assert!(infeasible >= 30, "only {infeasible} infeasible cases");
}

#[test]
fn branch_and_bound_matches_brute_force() {
    let mut rng = StdRng::seed_from_u64(0xb4b);
    let cfg = SolverConfig::default();
    let mut optimal = 0;
    for case in 0..200 {
        let num_cont = rng.gen_range(0..=3);
        let num_bin = rng.gen_range(1..=8);
        let num_rows = rng.gen_range(1..=6);
        let inst = random_instance(&mut rng, num_cont, num_bin, num_rows);
        let got = solve(&inst.problem, &cfg).expect("solve");
        let expected = brute_force_solve(&inst.problem).expect("brute force");
        assert_eq!(got.status, expected.status, "case {case}");
        if got.status == SolveStatus::Optimal {
            optimal += 1;
            assert!(
                (got.objective - expected.objective).abs() <= 1e-6,
                "case {case}: solve {} vs brute force {}\n{}",
                got.objective,
                expected.objective,
                inst.problem.to_lp_text()
            );
            // Sandwich: relaxation bound <= integer optimum.
            let relaxed = solve_lp_relaxation(&inst.problem).expect("relaxation");
            assert!(
                relaxed.objective <= got.objective + 1e-9,
                "case {case}: relaxation {} above integer optimum {}",
                relaxed.objective,
                got.objective
            );
            let violations = inst.problem.check_feasible(&got.values, 1e-7);
            assert!(violations.is_empty(), "case {case}: {violations:?}");
        }
    }
    assert!(optimal >= 60, "only {optimal} optimal cases");
}

#[test]
fn solves_are_deterministic_across_runs() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..40 {
        let inst = random_instance(&mut rng, 2, 4, 4);
        let a = solve(&inst.problem, &SolverConfig::default()).expect("solve");
        let b = solve(&inst.problem, &SolverConfig::default()).expect("solve");
        assert_eq!(a.status, b.status);
        assert_eq!(a.values, b.values);
        assert!(a.objective.to_bits() == b.objective.to_bits() || a.values.is_empty());
    }
}
