//! Continuous relaxation of a [`ConicProgram`] under partial assignments.
//!
//! Fixed variables are substituted out before the problem reaches the
//! engine, rows left without free variables are checked directly, and the
//! engine's answer is re-checked against the original rows and cones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::engine::{ClarabelEngine, ConeBlock, ConicEngine, EngineStatus, StandardForm};
use crate::error::{Error, Result};
use crate::program::{ConicProgram, LinExpr, LinearRow, Sense, VarId};

/// Feasibility slack accepted on rows that lost all their free variables.
const CONSTANT_ROW_TOL: f64 = 1e-7;

/// Bound overrides, keyed by variable. A fixing is a range with `lo == hi`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fixings {
    bounds: BTreeMap<VarId, (f64, f64)>,
}

impl Fixings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.bounds.insert(v, (value, value));
    }

    pub fn restrict(&mut self, v: VarId, lo: f64, hi: f64) {
        self.bounds.insert(v, (lo, hi));
    }

    pub fn get(&self, v: VarId) -> Option<(f64, f64)> {
        self.bounds.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, (f64, f64))> + '_ {
        self.bounds.iter().map(|(&v, &b)| (v, b))
    }

    pub fn extend(&mut self, other: &Fixings) {
        for (v, b) in other.iter() {
            self.bounds.insert(v, b);
        }
    }

    /// Effective bounds of every variable; fails if a fixing leaves the original bounds.
    pub fn apply(&self, program: &ConicProgram) -> Result<Vec<(f64, f64)>> {
        let mut out: Vec<(f64, f64)> = program.variables.iter().map(|v| (v.lower, v.upper)).collect();
        for (&v, &(lo, hi)) in &self.bounds {
            let var = program
                .variables
                .get(v.0)
                .ok_or_else(|| Error::Precondition(format!("fixing references missing variable {v}")))?;
            if lo > hi || lo < var.lower - 1e-9 || hi > var.upper + 1e-9 || lo.is_nan() || hi.is_nan() {
                return Err(Error::Precondition(format!(
                    "fixing [{lo}, {hi}] of `{}` violates its bounds [{}, {}]",
                    var.name, var.lower, var.upper
                )));
            }
            out[v.0] = (lo.max(var.lower), hi.min(var.upper));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationResult {
    pub status: RelaxStatus,
    /// Full primal vector; fixed variables hold their fixed value.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest row, cone or bound violation of `x` in the original program.
    pub residual: f64,
    pub iterations: u32,
}

impl RelaxationResult {
    fn without_solution(status: RelaxStatus, n: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            residual: f64::NAN,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == RelaxStatus::Optimal
    }
}

/// A program, an objective and extra rows, ready to be solved under many bound sets.
pub struct Relaxer<'a> {
    pub program: &'a ConicProgram,
    pub objective: LinExpr,
    pub extra: Vec<LinearRow>,
    pub engine: &'a dyn ConicEngine,
    /// Residual above which an engine "optimal" answer is not trusted.
    pub residual_limit: f64,
    /// Residual below which an answer is returned without further attempts.
    pub residual_target: f64,
}

impl<'a> Relaxer<'a> {
    pub fn new(program: &'a ConicProgram, engine: &'a dyn ConicEngine) -> Self {
        Self {
            program,
            objective: program.objective_expr(),
            extra: Vec::new(),
            engine,
            residual_limit: 1e-6,
            residual_target: 1e-6,
        }
    }

    pub fn residual(&self, x: &[f64], bounds: &[(f64, f64)]) -> f64 {
        let b = bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &xi)| (lo - xi).max(xi - hi).max(0.0))
            .fold(0.0, f64::max);
        let extra = self.extra.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        b.max(extra).max(self.program.max_violation(x))
    }

    pub fn solve(&self, bounds: &[(f64, f64)]) -> RelaxationResult {
        let n = self.program.variables.len();
        let fixed_value = |j: usize| {
            let (lo, hi) = bounds[j];
            (hi - lo <= 1e-12).then_some(0.5 * (lo + hi))
        };
        let mut col = vec![usize::MAX; n];
        let mut free = Vec::new();
        let mut x0 = vec![0.0; n];
        for j in 0..n {
            if bounds[j].0 > bounds[j].1 + 1e-12 {
                return RelaxationResult::without_solution(RelaxStatus::Infeasible, n);
            }
            match fixed_value(j) {
                Some(v) => x0[j] = v,
                None => {
                    col[j] = free.len();
                    free.push(j);
                }
            }
        }

        // Affine expression over free columns plus constant.
        let reduce = |e: &LinExpr| -> (Vec<(usize, f64)>, f64) {
            let mut c = e.constant;
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(e.terms.len());
            for &(v, a) in &e.terms {
                if col[v.0] == usize::MAX {
                    c += a * x0[v.0];
                } else {
                    terms.push((col[v.0], a));
                }
            }
            terms.sort_by_key(|t| t.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
            for (k, a) in terms {
                match merged.last_mut() {
                    Some(last) if last.0 == k => last.1 += a,
                    _ => merged.push((k, a)),
                }
            }
            merged.retain(|t| t.1 != 0.0);
            (merged, c)
        };

        let rows = self.program.rows.iter().chain(&self.extra);
        let mut zero: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut nonneg: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for r in rows {
            let (terms, c) = reduce(&r.expr);
            if terms.is_empty() {
                let lhs = c;
                let bad = match r.sense {
                    Sense::Le => lhs - r.rhs > CONSTANT_ROW_TOL,
                    Sense::Ge => r.rhs - lhs > CONSTANT_ROW_TOL,
                    Sense::Eq => (lhs - r.rhs).abs() > CONSTANT_ROW_TOL,
                };
                if bad {
                    return RelaxationResult::without_solution(RelaxStatus::Infeasible, n);
                }
                continue;
            }
            match r.sense {
                Sense::Eq => zero.push((terms, r.rhs - c)),
                Sense::Le => nonneg.push((terms, r.rhs - c)),
                Sense::Ge => nonneg.push((terms.into_iter().map(|(k, a)| (k, -a)).collect(), c - r.rhs)),
            }
        }
        for (k, &j) in free.iter().enumerate() {
            let (lo, hi) = bounds[j];
            if lo.is_finite() {
                nonneg.push((vec![(k, -1.0)], -lo));
            }
            if hi.is_finite() {
                nonneg.push((vec![(k, 1.0)], hi));
            }
        }
        let mut cones: Vec<Vec<(Vec<(usize, f64)>, f64)>> = Vec::new();
        for c in &self.program.cones {
            let mut entries = vec![reduce(&c.head)];
            entries.extend(c.tail.iter().map(reduce));
            if entries.iter().all(|(t, _)| t.is_empty()) {
                let norm = entries[1..].iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                if norm - entries[0].1 > CONSTANT_ROW_TOL {
                    return RelaxationResult::without_solution(RelaxStatus::Infeasible, n);
                }
                continue;
            }
            cones.push(entries);
        }

        let (obj_terms, obj_const) = reduce(&self.objective);
        if free.is_empty() {
            let residual = self.residual(&x0, bounds);
            let status = if residual <= self.residual_limit {
                RelaxStatus::Optimal
            } else {
                RelaxStatus::Infeasible
            };
            return RelaxationResult {
                status,
                objective: obj_const,
                x: x0,
                residual,
                iterations: 0,
            };
        }

        let mut form = StandardForm {
            n: free.len(),
            c: vec![0.0; free.len()],
            ..Default::default()
        };
        for (k, a) in obj_terms {
            form.c[k] = a;
        }
        let push_row = |form: &mut StandardForm, terms: &[(usize, f64)], b: f64| {
            let r = form.b.len();
            for &(k, a) in terms {
                form.rows.push(r);
                form.cols.push(k);
                form.vals.push(a);
            }
            form.b.push(b);
        };
        for (t, b) in &zero {
            push_row(&mut form, t, *b);
        }
        for (t, b) in &nonneg {
            push_row(&mut form, t, *b);
        }
        if !zero.is_empty() {
            form.cones.push(ConeBlock::Zero(zero.len()));
        }
        if !nonneg.is_empty() {
            form.cones.push(ConeBlock::Nonnegative(nonneg.len()));
        }
        for entries in &cones {
            // s = b - A x equals the cone entry `terms . x + c`.
            for (t, c) in entries {
                let neg: Vec<(usize, f64)> = t.iter().map(|&(k, a)| (k, -a)).collect();
                push_row(&mut form, &neg, *c);
            }
            form.cones.push(ConeBlock::SecondOrder(entries.len()));
        }

        let mut last = RelaxationResult::without_solution(RelaxStatus::NumericFailure, n);
        let mut accepted: Option<RelaxationResult> = None;
        for attempt in 0..self.engine.attempts().max(1) {
            let r = self.engine.solve(&form, attempt);
            let mut x = x0.clone();
            for (k, &j) in free.iter().enumerate() {
                x[j] = r.x[k];
            }
            let status = match r.status {
                EngineStatus::Optimal => RelaxStatus::Optimal,
                EngineStatus::Infeasible => RelaxStatus::Infeasible,
                EngineStatus::Unbounded => RelaxStatus::Unbounded,
                EngineStatus::NumericFailure => RelaxStatus::NumericFailure,
            };
            let residual = self.residual(&x, bounds);
            let objective = self.objective.eval(&x);
            let result = RelaxationResult {
                status,
                x,
                objective,
                residual,
                iterations: r.iterations,
            };
            match status {
                RelaxStatus::Optimal if residual <= self.residual_target => return result,
                RelaxStatus::Optimal if residual <= self.residual_limit => {
                    if accepted.as_ref().is_none_or(|a| residual < a.residual) {
                        accepted = Some(result);
                    }
                }
                RelaxStatus::Optimal => {
                    last = RelaxationResult {
                        status: RelaxStatus::NumericFailure,
                        ..result
                    }
                }
                RelaxStatus::Infeasible | RelaxStatus::Unbounded if accepted.is_none() => return result,
                _ => last = result,
            }
        }
        accepted.unwrap_or(last)
    }
}

/// Continuous optimum of `program` (its current objective mode) with
/// integrality dropped and `fixings` applied.
pub fn solve_relaxation(program: &ConicProgram, fixings: &Fixings) -> Result<RelaxationResult> {
    let bounds = fixings.apply(program)?;
    let engine = ClarabelEngine::default();
    Ok(Relaxer::new(program, &engine).solve(&bounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{Cone, ObjectiveTerm, Stage, VarKind};

    /// min -x - y  s.t. ||(x, y)|| <= 1 + z, z binary, x + y <= 1.2 + 10 z
    fn toy() -> ConicProgram {
        let mut p = ConicProgram::default();
        p.stages.push(Stage {
            name: "s".into(),
            discrete: true,
        });
        let x = p.add_var("x", VarKind::Continuous, -5.0, 5.0);
        let y = p.add_var("y", VarKind::Continuous, -5.0, 5.0);
        let z = p.add_var("z", VarKind::Binary, 0.0, 1.0);
        p.cones.push(Cone {
            name: "c".into(),
            head: LinExpr::constant(1.0).add(z, 1.0),
            tail: vec![LinExpr::var(x), LinExpr::var(y)],
        });
        p.add_row(LinearRow::new("r", LinExpr::var(x).add(y, 1.0).add(z, -10.0), Sense::Le, 1.2));
        p.objective.push(ObjectiveTerm {
            name: "o".into(),
            expr: LinExpr::term(x, -1.0).add(y, -1.0),
            weight: 1.0,
            norm: 1.0,
            stage: 0,
        });
        p
    }

    #[test]
    fn fixing_zero_gives_row_limited_optimum() {
        let p = toy();
        let mut f = Fixings::new();
        f.fix(VarId(2), 0.0);
        let r = solve_relaxation(&p, &f).unwrap();
        assert_eq!(r.status, RelaxStatus::Optimal);
        assert!((r.objective + 1.2).abs() < 1e-7, "{}", r.objective);
        assert!(r.residual < 1e-7);
    }

    #[test]
    fn fixing_one_opens_the_cone() {
        let p = toy();
        let mut f = Fixings::new();
        f.fix(VarId(2), 1.0);
        let r = solve_relaxation(&p, &f).unwrap();
        assert!((r.objective + 2.0 * 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn bound_violating_fixing_is_a_precondition_error() {
        let p = toy();
        let mut f = Fixings::new();
        f.fix(VarId(2), 2.0);
        assert!(matches!(solve_relaxation(&p, &f), Err(Error::Precondition(_))));
    }

    #[test]
    fn contradictory_fixings_are_infeasible() {
        let p = toy();
        let mut f = Fixings::new();
        f.fix(VarId(0), 1.0);
        f.fix(VarId(1), 1.0);
        f.fix(VarId(2), 0.0);
        let r = solve_relaxation(&p, &f).unwrap();
        assert_eq!(r.status, RelaxStatus::Infeasible);
    }
}
