//! Plain-text rendering of a problem for inspection and debugging.

use std::fmt::Write;

use crate::problem::{LinExpr, MilpProblem, VarDomain};

fn push_expr(out: &mut String, p: &MilpProblem, expr: &LinExpr) {
    let mut first = true;
    for &(var, coef) in expr.terms() {
        if coef == 0.0 {
            continue;
        }
        let name = &p.vars()[var].name;
        let magnitude = coef.abs();
        if first {
            if coef < 0.0 {
                out.push('-');
            }
            first = false;
        } else if coef < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        if magnitude == 1.0 {
            out.push_str(name);
        } else {
            let _ = write!(out, "{magnitude} {name}");
        }
    }
    if first {
        out.push('0');
    }
}

/// Renders objective, constraints, bounds and integrality as structured
/// text, one section per heading.
pub fn to_lp_text(p: &MilpProblem) -> String {
    let mut out = String::new();
    out.push_str("minimize\n  ");
    push_expr(&mut out, p, p.objective());
    out.push_str("\nsubject to\n");
    for c in p.constraints() {
        let _ = write!(out, "  {}: ", c.name);
        push_expr(&mut out, p, &c.expr);
        let _ = writeln!(out, " {} {}", c.rel, c.rhs);
    }
    out.push_str("bounds\n");
    for v in p.vars() {
        match v.domain {
            VarDomain::Continuous { upper: Some(u) } => {
                let _ = writeln!(out, "  0 <= {} <= {}", v.name, u);
            }
            VarDomain::Continuous { upper: None } => {
                let _ = writeln!(out, "  0 <= {}", v.name);
            }
            VarDomain::Binary => {}
        }
    }
    let binaries: Vec<&str> = p
        .vars()
        .iter()
        .filter(|v| v.domain == VarDomain::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("binaries\n");
        for name in binaries {
            let _ = writeln!(out, "  {name}");
        }
    }
    out
}

impl MilpProblem {
    /// See [`to_lp_text`].
    pub fn to_lp_text(&self) -> String {
        to_lp_text(self)
    }
}
