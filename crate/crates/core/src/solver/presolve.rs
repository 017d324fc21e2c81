//! Big-M coefficient tightening.
//!
//! For a row `rest + c*y <= b` with `y` in {0, 1}, the activity of `rest`
//! is bounded by the variable boxes. Whenever one side of the disjunction
//! is slack by more than that bound, the coefficient and the right-hand
//! side are shrunk to the tightest values that keep the integral points
//! unchanged.

use crate::program::{ConicProgram, LinExpr, Sense, VarId, VarKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PresolveStats {
    pub rows_tightened: usize,
}

fn is_indicator(p: &ConicProgram, v: VarId) -> bool {
    let var = p.var(v);
    let unit = var.lower == 0.0 && var.upper == 1.0;
    unit && (var.kind == VarKind::Binary || var.implied_integral)
}

/// Largest value of `expr` without the term at `skip`, over the variable boxes.
fn max_activity(p: &ConicProgram, expr: &LinExpr, skip: usize) -> f64 {
    expr.terms
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != skip)
        .map(|(_, &(v, a))| {
            let var = p.var(v);
            if a > 0.0 {
                a * var.upper
            } else {
                a * var.lower
            }
        })
        .sum::<f64>()
        + expr.constant
}

/// Tightens `<=` and `>=` rows in place. Integral solutions are unaffected.
pub fn tighten_big_m(program: &mut ConicProgram) -> PresolveStats {
    let mut stats = PresolveStats::default();
    for r in 0..program.rows.len() {
        let (mut expr, mut rhs) = {
            let row = &program.rows[r];
            match row.sense {
                Sense::Eq => continue,
                Sense::Le => (row.expr.clone(), row.rhs),
                Sense::Ge => (row.expr.scaled(-1.0), -row.rhs),
            }
        };
        let mut changed = false;
        for k in 0..expr.terms.len() {
            let (v, c) = expr.terms[k];
            if !is_indicator(program, v) {
                continue;
            }
            let max_rest = max_activity(program, &expr, k);
            if !max_rest.is_finite() {
                continue;
            }
            let tol = 1e-9 * (1.0 + rhs.abs());
            if c > 0.0 && rhs > max_rest + tol {
                let d = rhs - max_rest;
                expr.terms[k].1 = c - d;
                rhs = max_rest;
                changed = true;
            } else if c < 0.0 && rhs - c > max_rest + tol {
                expr.terms[k].1 = rhs - max_rest;
                changed = true;
            }
        }
        if changed {
            stats.rows_tightened += 1;
            let row = &mut program.rows[r];
            if row.sense == Sense::Ge {
                row.expr = expr.scaled(-1.0);
                row.rhs = -rhs;
            } else {
                row.expr = expr;
                row.rhs = rhs;
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::LinearRow;

    #[test]
    fn big_m_shrinks_to_box() {
        let mut p = ConicProgram::default();
        let x = p.add_var("x", VarKind::Continuous, 0.0, 2.0);
        let y = p.add_var("y", VarKind::Binary, 0.0, 1.0);
        // x <= 1000 y
        p.add_row(LinearRow::new("m", LinExpr::var(x).add(y, -1000.0), Sense::Le, 0.0));
        // x - 1000 (1 - y) <= 1, i.e. x + 1000 y <= 1001
        p.add_row(LinearRow::new("n", LinExpr::var(x).add(y, 1000.0), Sense::Le, 1001.0));
        let s = tighten_big_m(&mut p);
        assert_eq!(s.rows_tightened, 2);
        assert_eq!(p.rows[0].expr.terms[1].1, -2.0);
        assert_eq!(p.rows[1].expr.terms[1].1, 1.0);
        assert_eq!(p.rows[1].rhs, 2.0);
        // Same integral feasibility.
        for xv in [0.0, 0.5, 1.0, 1.5, 2.0] {
            for yv in [0.0, 1.0] {
                let before = xv <= 1000.0 * yv && xv + 1000.0 * yv <= 1001.0;
                let after = p.rows.iter().all(|r| r.violation(&[xv, yv]) <= 1e-12);
                assert_eq!(before, after, "x={xv} y={yv}");
            }
        }
    }
}
