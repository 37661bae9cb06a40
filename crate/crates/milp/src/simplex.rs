//! Dense bounded-variable two-phase primal simplex.
//!
//! Every variable carries an interval `[lower, upper]` (upper may be
//! infinite); nonbasic variables rest at one of their bounds and the tableau
//! tracks the values of basic variables directly. Pivots follow Bland's
//! smallest-index rule — entering variable with the lowest id among those
//! with a favourable reduced cost, leaving variable with the lowest id among
//! the blocking ones — which prevents cycling and makes the pivot path (and
//! therefore the reported solution) fully deterministic.
//!
//! Phase 1 minimizes the sum of artificial variables added to rows that do
//! not admit a slack starting basis; phase 2 minimizes the caller's
//! objective. Artificial variables are never allowed to re-enter the basis,
//! and redundant rows discovered at the end of phase 1 are zeroed out in
//! place, which leaves them inert for the rest of the solve.

use crate::problem::Relation;

/// Pivot coefficients smaller than this are treated as zero.
const PIVOT_EPS: f64 = 1e-9;
/// Reduced costs within this tolerance of zero do not trigger a pivot.
const DUAL_EPS: f64 = 1e-9;
/// Two ratio-test limits within this relative distance count as tied.
const RATIO_TIE_EPS: f64 = 1e-12;

/// A linear program in the solver's internal form: minimize `objective * x`
/// subject to the rows, with `lower[j] <= x[j] <= upper[j]`.
///
/// Lower bounds must be finite; upper bounds may be `f64::INFINITY`.
#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal { values: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Numerical failure: the pivot count exceeded its safety cap.
#[derive(Debug, Clone, Copy)]
pub(crate) struct IterationLimit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    /// `rows x cols` coefficient matrix, kept equal to `B^-1 A` by pivoting.
    t: Vec<Vec<f64>>,
    /// Current value of the basic variable of each row.
    beta: Vec<f64>,
    /// Column of the basic variable of each row.
    basis: Vec<usize>,
    state: Vec<ColState>,
    /// Shifted upper bound of each column (lower bounds are all zero).
    ub: Vec<f64>,
    /// Columns at or past this index are artificial and may never enter.
    first_artificial: usize,
    iterations: usize,
    max_iterations: usize,
}

enum StepResult {
    Pivoted,
    PhaseOptimal,
    Unbounded,
}

impl Tableau {
    fn bound_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::AtLower => 0.0,
            ColState::AtUpper => self.ub[j],
            ColState::Basic => unreachable!("basic column has no bound value"),
        }
    }

    /// One simplex iteration against the reduced-cost row `d`.
    fn step(&mut self, d: &mut [f64]) -> Result<StepResult, IterationLimit> {
        // Entering variable: Bland's rule, smallest eligible column id.
        let entering = d[..self.first_artificial]
            .iter()
            .zip(&self.state)
            .enumerate()
            .find_map(|(j, (&dj, state))| match state {
                ColState::AtLower if dj < -DUAL_EPS => Some((j, 1.0)),
                ColState::AtUpper if dj > DUAL_EPS => Some((j, -1.0)),
                _ => None,
            });
        let Some((j, dir)) = entering else {
            return Ok(StepResult::PhaseOptimal);
        };

        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(IterationLimit);
        }

        // Ratio test: how far can the entering variable move from its bound?
        // Blocking candidates are the basic variables that hit a bound plus
        // the entering variable hitting its own opposite bound; ties are
        // broken by the smallest blocking variable id (Bland again).
        let mut t_best = f64::INFINITY;
        let mut blocker: Option<(usize, Option<usize>)> = None; // (var id, row)
        if self.ub[j].is_finite() {
            t_best = self.ub[j];
            blocker = Some((j, None));
        }
        for i in 0..self.t.len() {
            let a = dir * self.t[i][j];
            let limit = if a > PIVOT_EPS {
                (self.beta[i] / a).max(0.0)
            } else if a < -PIVOT_EPS && self.ub[self.basis[i]].is_finite() {
                ((self.ub[self.basis[i]] - self.beta[i]) / -a).max(0.0)
            } else {
                continue;
            };
            let (better, wins_tie) = if t_best.is_infinite() {
                (true, false)
            } else {
                let tie = (limit - t_best).abs() <= RATIO_TIE_EPS * (1.0 + t_best.abs());
                let current = blocker.map_or(usize::MAX, |(v, _)| v);
                (limit < t_best && !tie, tie && self.basis[i] < current)
            };
            if better || wins_tie {
                t_best = t_best.min(limit);
                blocker = Some((self.basis[i], Some(i)));
            }
        }

        let Some((_, row)) = blocker else {
            return Ok(StepResult::Unbounded);
        };
        let t_move = t_best;

        match row {
            None => {
                // Bound flip: the entering variable travels to its other
                // bound without any basis change.
                for i in 0..self.t.len() {
                    self.beta[i] -= dir * t_move * self.t[i][j];
                }
                self.state[j] = match self.state[j] {
                    ColState::AtLower => ColState::AtUpper,
                    ColState::AtUpper => ColState::AtLower,
                    ColState::Basic => unreachable!(),
                };
            }
            Some(r) => {
                let entering_value = self.bound_value(j) + dir * t_move;
                for i in 0..self.t.len() {
                    if i != r {
                        self.beta[i] -= dir * t_move * self.t[i][j];
                    }
                }
                let leaving = self.basis[r];
                // Which bound did the leaving variable hit?
                self.state[leaving] = if dir * self.t[r][j] > 0.0 {
                    ColState::AtLower
                } else {
                    ColState::AtUpper
                };
                self.eliminate(r, j, d);
                self.basis[r] = j;
                self.state[j] = ColState::Basic;
                self.beta[r] = entering_value;
            }
        }
        Ok(StepResult::Pivoted)
    }

    /// Gaussian elimination making column `j` a unit column at row `r`,
    /// updating the reduced-cost row alongside.
    fn eliminate(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let pivot = self.t[r][j];
        let mut pivot_row = std::mem::take(&mut self.t[r]);
        if pivot != 1.0 {
            for v in pivot_row.iter_mut() {
                *v /= pivot;
            }
        }
        pivot_row[j] = 1.0;
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[j];
            if factor != 0.0 {
                for (rv, pv) in row.iter_mut().zip(&pivot_row) {
                    *rv -= factor * pv;
                }
                row[j] = 0.0;
            }
        }
        let dj = d[j];
        if dj != 0.0 {
            for (dv, pv) in d.iter_mut().zip(&pivot_row) {
                *dv -= dj * pv;
            }
            d[j] = 0.0;
        }
        self.t[r] = pivot_row;
    }

    /// Runs simplex iterations until the phase is optimal or unbounded.
    fn run(&mut self, d: &mut [f64]) -> Result<StepResult, IterationLimit> {
        loop {
            match self.step(d)? {
                StepResult::Pivoted => continue,
                other => return Ok(other),
            }
        }
    }

    /// Reduced costs `c - c_B B^-1 A` for an arbitrary cost vector over the
    /// columns (entries beyond `costs.len()` are treated as zero cost).
    fn reduced_costs(&self, costs: &[f64]) -> Vec<f64> {
        let cols = self.ub.len();
        let cost = |j: usize| costs.get(j).copied().unwrap_or(0.0);
        let mut d: Vec<f64> = (0..cols).map(cost).collect();
        for (i, row) in self.t.iter().enumerate() {
            let cb = cost(self.basis[i]);
            if cb == 0.0 {
                continue;
            }
            for (dv, tv) in d.iter_mut().zip(row) {
                *dv -= cb * tv;
            }
        }
        for i in 0..self.t.len() {
            d[self.basis[i]] = 0.0;
        }
        d
    }
}

/// Solves the LP with the two-phase bounded-variable simplex.
pub(crate) fn solve_lp(lp: &LpProblem) -> Result<LpOutcome, IterationLimit> {
    let n = lp.objective.len();
    for j in 0..n {
        if lp.lower[j] > lp.upper[j] {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // Shift structural variables by their lower bound so every column lives
    // in [0, ub]; normalize rows to <= / = form with nonnegative rhs.
    struct NormRow {
        coeffs: Vec<f64>,
        rhs: f64,
        slack_sign: f64, // 0.0 when the row is an equality
    }
    let mut norm_rows = Vec::with_capacity(lp.rows.len());
    for row in &lp.rows {
        let mut coeffs = vec![0.0; n];
        for &(v, c) in &row.coeffs {
            coeffs[v] += c;
        }
        let mut rhs = row.rhs
            - coeffs
                .iter()
                .zip(&lp.lower)
                .map(|(c, l)| c * l)
                .sum::<f64>();
        let mut slack_sign = match row.rel {
            Relation::Le => 1.0,
            Relation::Ge => {
                for c in coeffs.iter_mut() {
                    *c = -*c;
                }
                rhs = -rhs;
                1.0
            }
            Relation::Eq => 0.0,
        };
        if rhs < 0.0 {
            for c in coeffs.iter_mut() {
                *c = -*c;
            }
            rhs = -rhs;
            slack_sign = -slack_sign;
        }
        norm_rows.push(NormRow {
            coeffs,
            rhs,
            slack_sign,
        });
    }

    let m = norm_rows.len();
    let num_slacks = norm_rows.iter().filter(|r| r.slack_sign != 0.0).count();
    let needs_artificial: Vec<bool> = norm_rows.iter().map(|r| r.slack_sign <= 0.0).collect();
    let num_artificials = needs_artificial.iter().filter(|&&a| a).count();
    let cols = n + num_slacks + num_artificials;
    let first_artificial = n + num_slacks;

    let mut tab = Tableau {
        t: vec![vec![0.0; cols]; m],
        beta: vec![0.0; m],
        basis: vec![0; m],
        state: vec![ColState::AtLower; cols],
        ub: Vec::with_capacity(cols),
        first_artificial,
        iterations: 0,
        max_iterations: 20_000 + 200 * (m + cols),
    };
    tab.ub.extend((0..n).map(|j| lp.upper[j] - lp.lower[j]));
    tab.ub.extend(std::iter::repeat_n(f64::INFINITY, cols - n));

    let mut slack_idx = n;
    let mut art_idx = first_artificial;
    for (i, row) in norm_rows.iter().enumerate() {
        tab.t[i][..n].copy_from_slice(&row.coeffs);
        if row.slack_sign != 0.0 {
            tab.t[i][slack_idx] = row.slack_sign;
            slack_idx += 1;
        }
        let basic_col = if needs_artificial[i] {
            art_idx += 1;
            tab.t[i][art_idx - 1] = 1.0;
            art_idx - 1
        } else {
            slack_idx - 1
        };
        tab.basis[i] = basic_col;
        tab.state[basic_col] = ColState::Basic;
        tab.beta[i] = row.rhs;
    }

    // Phase 1: minimize the sum of artificials.
    if num_artificials > 0 {
        let mut phase1_cost = vec![0.0; cols];
        for c in phase1_cost.iter_mut().skip(first_artificial) {
            *c = 1.0;
        }
        let mut d = tab.reduced_costs(&phase1_cost);
        match tab.run(&mut d)? {
            StepResult::PhaseOptimal => {}
            // The phase-1 objective is bounded below by zero, so an
            // unbounded report here can only be a numerical breakdown.
            StepResult::Unbounded => return Err(IterationLimit),
            StepResult::Pivoted => unreachable!(),
        }
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= first_artificial)
            .map(|i| tab.beta[i].max(0.0))
            .sum();
        let scale: f64 = 1.0 + norm_rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-7 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive surviving artificials out of the basis with degenerate
        // pivots where possible; rows that admit no pivot are redundant and
        // get zeroed so they stay inert.
        for r in 0..m {
            if tab.basis[r] < first_artificial {
                continue;
            }
            let entering = (0..first_artificial)
                .find(|&j| tab.state[j] != ColState::Basic && tab.t[r][j].abs() > PIVOT_EPS);
            match entering {
                Some(j) => {
                    let value = tab.bound_value(j);
                    let leaving = tab.basis[r];
                    tab.state[leaving] = ColState::AtLower;
                    let mut dummy = vec![0.0; cols];
                    tab.eliminate(r, j, &mut dummy);
                    tab.basis[r] = j;
                    tab.state[j] = ColState::Basic;
                    tab.beta[r] = value;
                }
                None => {
                    let keep = tab.basis[r];
                    for v in tab.t[r].iter_mut() {
                        *v = 0.0;
                    }
                    tab.t[r][keep] = 1.0;
                    tab.beta[r] = 0.0;
                }
            }
        }
    }

    // Phase 2: minimize the real objective.
    let mut d = tab.reduced_costs(&lp.objective);
    match tab.run(&mut d)? {
        StepResult::PhaseOptimal => {}
        StepResult::Unbounded => return Ok(LpOutcome::Unbounded),
        StepResult::Pivoted => unreachable!(),
    }

    // Extract structural values, undoing the lower-bound shift.
    let mut values = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            values[b] = tab.beta[i];
        }
    }
    for (j, value) in values.iter_mut().enumerate() {
        if tab.state[j] == ColState::AtUpper {
            *value = tab.ub[j];
        }
        let v = lp.lower[j] + *value;
        *value = v.clamp(lp.lower[j], lp.upper[j]);
    }
    let objective = values.iter().zip(&lp.objective).map(|(x, c)| c * x).sum();
    Ok(LpOutcome::Optimal { values, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[(usize, f64)], rel: Relation, rhs: f64) -> LpRow {
        LpRow {
            coeffs: coeffs.to_vec(),
            rel,
            rhs,
        }
    }

    fn optimal(lp: &LpProblem) -> (Vec<f64>, f64) {
        match solve_lp(lp).expect("no iteration limit") {
            LpOutcome::Optimal { values, objective } => (values, objective),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn empty_problem_is_optimal_at_zero() {
        let lp = LpProblem {
            objective: vec![],
            rows: vec![],
            lower: vec![],
            upper: vec![],
        };
        let (values, obj) = optimal(&lp);
        assert!(values.is_empty());
        assert_eq!(obj, 0.0);
    }

    #[test]
    fn two_variable_vertex_optimum() {
        // min -4x - 3y  s.t.  2x + y <= 10,  x + 3y <= 15,  x,y >= 0.
        // Optimum at the intersection (3, 4) with objective -24.
        let lp = LpProblem {
            objective: vec![-4.0, -3.0],
            rows: vec![
                row(&[(0, 2.0), (1, 1.0)], Relation::Le, 10.0),
                row(&[(0, 1.0), (1, 3.0)], Relation::Le, 15.0),
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let (values, obj) = optimal(&lp);
        assert!((values[0] - 3.0).abs() < 1e-9);
        assert!((values[1] - 4.0).abs() < 1e-9);
        assert!((obj + 24.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y  s.t.  x + y >= 4,  x - y = 1  ->  x = 2.5, y = 1.5.
        let lp = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![
                row(&[(0, 1.0), (1, 1.0)], Relation::Ge, 4.0),
                row(&[(0, 1.0), (1, -1.0)], Relation::Eq, 1.0),
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let (values, obj) = optimal(&lp);
        assert!((values[0] - 2.5).abs() < 1e-9);
        assert!((values[1] - 1.5).abs() < 1e-9);
        assert!((obj - 4.0).abs() < 1e-9);
    }

    #[test]
    fn upper_bounds_without_rows() {
        // min -x - 2y with x <= 3, y <= 5: both at their upper bounds.
        let lp = LpProblem {
            objective: vec![-1.0, -2.0],
            rows: vec![],
            lower: vec![0.0, 0.0],
            upper: vec![3.0, 5.0],
        };
        let (values, obj) = optimal(&lp);
        assert_eq!(values, vec![3.0, 5.0]);
        assert_eq!(obj, -13.0);
    }

    #[test]
    fn nonzero_lower_bounds_shift_correctly() {
        // min x + y with x >= 2, y in [1, 4], x + y >= 5.
        let lp = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Relation::Ge, 5.0)],
            lower: vec![2.0, 1.0],
            upper: vec![f64::INFINITY, 4.0],
        };
        let (values, obj) = optimal(&lp);
        assert!((obj - 5.0).abs() < 1e-9);
        assert!(values[0] >= 2.0 - 1e-9 && values[1] >= 1.0 - 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let lp = LpProblem {
            objective: vec![0.0],
            rows: vec![
                row(&[(0, 1.0)], Relation::Le, 1.0),
                row(&[(0, 1.0)], Relation::Ge, 2.0),
            ],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        assert!(matches!(solve_lp(&lp).unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let lp = LpProblem {
            objective: vec![-1.0],
            rows: vec![row(&[(0, 1.0)], Relation::Ge, 1.0)],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        assert!(matches!(solve_lp(&lp).unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn fixed_variable_via_equal_bounds() {
        let lp = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Relation::Ge, 3.0)],
            lower: vec![2.0, 0.0],
            upper: vec![2.0, f64::INFINITY],
        };
        let (values, obj) = optimal(&lp);
        assert_eq!(values[0], 2.0);
        assert!((values[1] - 1.0).abs() < 1e-9);
        assert!((obj - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LpProblem {
            objective: vec![0.0],
            rows: vec![],
            lower: vec![1.0],
            upper: vec![0.5],
        };
        assert!(matches!(solve_lp(&lp).unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn redundant_equalities_are_harmless() {
        // The same equality twice plus a scaled copy.
        let lp = LpProblem {
            objective: vec![1.0, 2.0],
            rows: vec![
                row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 4.0),
                row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 4.0),
                row(&[(0, 2.0), (1, 2.0)], Relation::Eq, 8.0),
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let (values, obj) = optimal(&lp);
        assert!((values[0] - 4.0).abs() < 1e-9);
        assert!(values[1].abs() < 1e-9);
        assert!((obj - 4.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Several constraints active at the optimum.
        let lp = LpProblem {
            objective: vec![-1.0, -1.0],
            rows: vec![
                row(&[(0, 1.0)], Relation::Le, 1.0),
                row(&[(1, 1.0)], Relation::Le, 1.0),
                row(&[(0, 1.0), (1, 1.0)], Relation::Le, 2.0),
                row(&[(0, 1.0), (1, 2.0)], Relation::Le, 3.0),
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let (values, obj) = optimal(&lp);
        assert!((values[0] - 1.0).abs() < 1e-9);
        assert!((values[1] - 1.0).abs() < 1e-9);
        assert!((obj + 2.0).abs() < 1e-9);
    }

    #[test]
    fn equality_with_zero_rhs_and_no_real_pivot() {
        // 0*x = 0 is a fully redundant row that keeps its artificial.
        let lp = LpProblem {
            objective: vec![1.0],
            rows: vec![
                row(&[(0, 0.0)], Relation::Eq, 0.0),
                row(&[(0, 1.0)], Relation::Ge, 2.0),
            ],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        let (values, obj) = optimal(&lp);
        assert!((values[0] - 2.0).abs() < 1e-9);
        assert!((obj - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bound_flip_path() {
        // min -x - 10y  s.t.  x + y <= 6, x <= 5, y <= 4 (as variable bounds).
        // Optimum x = 2, y = 4 reached via a bound flip on y.
        let lp = LpProblem {
            objective: vec![-1.0, -10.0],
            rows: vec![row(&[(0, 1.0), (1, 1.0)], Relation::Le, 6.0)],
            lower: vec![0.0, 0.0],
            upper: vec![5.0, 4.0],
        };
        let (values, obj) = optimal(&lp);
        assert!((values[0] - 2.0).abs() < 1e-9);
        assert!((values[1] - 4.0).abs() < 1e-9);
        assert!((obj + 42.0).abs() < 1e-9);
    }
}
