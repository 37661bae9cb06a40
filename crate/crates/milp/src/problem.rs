//! Problem construction: variables, linear expressions, constraints and the
//! validated [`MilpProblem`] container.

use std::fmt;

use thiserror::Error;

/// Index of a decision variable within a [`MilpProblem`].
pub type VarId = usize;

/// Domain of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarDomain {
    /// Continuous variable `0 <= x <= upper`; `None` means unbounded above.
    Continuous { upper: Option<f64> },
    /// Binary variable taking values in `{0, 1}`.
    Binary,
}

/// A named decision variable.
#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub domain: VarDomain,
}

/// Sparse linear expression `sum(coef * var)`.
///
/// Repeated mentions of the same variable are allowed and are summed when the
/// expression is evaluated.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Single-term expression `coef * var`.
    pub fn term(var: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(var, coef)],
        }
    }

    /// Appends `coef * var` to the expression.
    pub fn add(&mut self, var: VarId, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates the expression against a full assignment of variable values.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Collapses repeated variables into a dense coefficient vector.
    pub(crate) fn densify(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(v, c) in &self.terms {
            out[v] += c;
        }
        out
    }
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => write!(f, "<="),
            Relation::Eq => write!(f, "="),
            Relation::Ge => write!(f, ">="),
        }
    }
}

/// A named linear constraint `expr rel rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub rel: Relation,
    pub rhs: f64,
}

/// Error raised while building a problem.
#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error(
        "{context} references variable index {index}, but only {count} variables are declared"
    )]
    UnknownVariable {
        context: String,
        index: usize,
        count: usize,
    },
    #[error("{context} contains a non-finite coefficient")]
    NonFinite { context: String },
    #[error("variable {name:?} has invalid upper bound {upper}")]
    InvalidBound { name: String, upper: f64 },
}

/// Incremental builder for [`MilpProblem`].
///
/// Variables are declared first and referenced by the returned [`VarId`];
/// `build` validates that every expression only mentions declared variables
/// and that all numeric data is finite.
#[derive(Debug, Default)]
pub struct ProblemBuilder {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
}

impl ProblemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a continuous variable `0 <= x <= upper` and returns its id.
    pub fn add_continuous(&mut self, name: impl Into<String>, upper: Option<f64>) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            domain: VarDomain::Continuous { upper },
        });
        self.vars.len() - 1
    }

    /// Declares a binary variable and returns its id.
    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            domain: VarDomain::Binary,
        });
        self.vars.len() - 1
    }

    /// Adds a named constraint `expr rel rhs`.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        rel: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            expr,
            rel,
            rhs,
        });
    }

    /// Sets the (minimization) objective.
    pub fn set_objective(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// Validates and freezes the problem.
    pub fn build(self) -> Result<MilpProblem, BuildError> {
        let n = self.vars.len();
        let check_expr = |expr: &LinExpr, context: &str| -> Result<(), BuildError> {
            for &(v, c) in expr.terms() {
                if v >= n {
                    return Err(BuildError::UnknownVariable {
                        context: context.to_string(),
                        index: v,
                        count: n,
                    });
                }
                if !c.is_finite() {
                    return Err(BuildError::NonFinite {
                        context: context.to_string(),
                    });
                }
            }
            Ok(())
        };
        for var in &self.vars {
            if let VarDomain::Continuous { upper: Some(u) } = var.domain {
                if !u.is_finite() || u < 0.0 {
                    return Err(BuildError::InvalidBound {
                        name: var.name.clone(),
                        upper: u,
                    });
                }
            }
        }
        check_expr(&self.objective, "objective")?;
        for c in &self.constraints {
            check_expr(&c.expr, &format!("constraint {:?}", c.name))?;
            if !c.rhs.is_finite() {
                return Err(BuildError::NonFinite {
                    context: format!("constraint {:?} right-hand side", c.name),
                });
            }
        }
        Ok(MilpProblem {
            vars: self.vars,
            constraints: self.constraints,
            objective: self.objective,
        })
    }
}

/// A validated minimization problem over continuous and binary variables.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
}

impl MilpProblem {
    pub fn builder() -> ProblemBuilder {
        ProblemBuilder::new()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    /// Ids of all binary variables, in declaration order.
    pub fn binary_ids(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.domain == VarDomain::Binary)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks a full assignment against bounds, constraints and integrality.
    ///
    /// Constraint activities are compared with a scaled tolerance
    /// `tol * (1 + |rhs|)`; binaries must be integral within `tol`.
    pub fn check_feasible(&self, values: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if values.len() != self.vars.len() {
            out.push(Violation::WrongLength {
                expected: self.vars.len(),
                actual: values.len(),
            });
            return out;
        }
        for (i, var) in self.vars.iter().enumerate() {
            let x = values[i];
            let (lo, hi) = match var.domain {
                VarDomain::Continuous { upper } => (0.0, upper.unwrap_or(f64::INFINITY)),
                VarDomain::Binary => (0.0, 1.0),
            };
            if x < lo - tol || x > hi + tol {
                out.push(Violation::Bound {
                    var: var.name.clone(),
                    value: x,
                    lower: lo,
                    upper: hi,
                });
            }
            if var.domain == VarDomain::Binary && (x - x.round()).abs() > tol {
                out.push(Violation::NonIntegral {
                    var: var.name.clone(),
                    value: x,
                });
            }
        }
        for c in &self.constraints {
            let activity = c.expr.eval(values);
            let slack = tol * (1.0 + c.rhs.abs());
            let violated = match c.rel {
                Relation::Le => activity > c.rhs + slack,
                Relation::Ge => activity < c.rhs - slack,
                Relation::Eq => (activity - c.rhs).abs() > slack,
            };
            if violated {
                out.push(Violation::Constraint {
                    name: c.name.clone(),
                    activity,
                    rel: c.rel,
                    rhs: c.rhs,
                });
            }
        }
        out
    }
}

/// A single feasibility violation reported by [`MilpProblem::check_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    WrongLength {
        expected: usize,
        actual: usize,
    },
    Bound {
        var: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    NonIntegral {
        var: String,
        value: f64,
    },
    Constraint {
        name: String,
        activity: f64,
        rel: Relation,
        rhs: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, actual } => {
                write!(f, "assignment has {actual} values, expected {expected}")
            }
            Violation::Bound {
                var,
                value,
                lower,
                upper,
            } => write!(f, "variable {var} = {value} outside [{lower}, {upper}]"),
            Violation::NonIntegral { var, value } => {
                write!(f, "binary variable {var} = {value} is not integral")
            }
            Violation::Constraint {
                name,
                activity,
                rel,
                rhs,
            } => write!(f, "constraint {name}: activity {activity} !{rel} {rhs}"),
        }
    }
}

/// Result status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
            SolveStatus::Unbounded => write!(f, "unbounded"),
        }
    }
}

/// Solution of a MILP or LP relaxation.
///
/// `values` holds one entry per declared variable and is empty unless the
/// status is [`SolveStatus::Optimal`]. For non-optimal statuses `objective` is
/// `+inf` (infeasible) or `-inf` (unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
}

impl MilpSolution {
    pub fn optimal(values: Vec<f64>, objective: f64) -> Self {
        Self {
            status: SolveStatus::Optimal,
            values,
            objective,
        }
    }

    pub fn infeasible() -> Self {
        Self {
            status: SolveStatus::Infeasible,
            values: Vec::new(),
            objective: f64::INFINITY,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            status: SolveStatus::Unbounded,
            values: Vec::new(),
            objective: f64::NEG_INFINITY,
        }
    }
}

/// Deterministic rule for choosing the branching variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchRule {
    /// Branch on the fractional binary closest to 0.5; ties go to the lowest
    /// variable id.
    #[default]
    MostFractional,
    /// Branch on the fractional binary with the lowest variable id.
    FirstFractional,
}

/// Tuning knobs for [`crate::solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Scaled feasibility tolerance used when verifying solutions.
    pub feasibility_tol: f64,
    /// A binary counts as integral when within this distance of 0 or 1.
    pub integrality_tol: f64,
    /// Maximum number of branch-and-bound nodes to explore.
    pub node_limit: usize,
    pub branch_rule: BranchRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            integrality_tol: 1e-6,
            node_limit: 200_000,
            branch_rule: BranchRule::MostFractional,
        }
    }
}
