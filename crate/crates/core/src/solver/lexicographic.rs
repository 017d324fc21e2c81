//! Staged optimization with the epsilon-constraint method, and the
//! continuous evaluation of a fixed discrete plan.

use std::time::Instant;

use super::bnb::{search, SearchOutcome, StageSearch};
use super::engine::ClarabelEngine;
use super::relaxation::{Fixings, Relaxer};
use super::{Solution, SolveLog, SolveStatus, SolverConfig, StageMode};
use crate::error::Result;
use crate::program::{ConicProgram, LinExpr, LinearRow, Sense};

/// Continuous optimum of a fixed plan.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEvaluation {
    pub feasible: bool,
    pub x: Vec<f64>,
    pub stage_values: Vec<f64>,
    pub residual: f64,
}

/// Objectives handled in sequence by `mode`: every stage on its own, or the
/// weighted discrete stages first and the continuous stages afterwards.
fn stage_sequence(program: &ConicProgram, mode: StageMode) -> Vec<(String, LinExpr)> {
    let n = program.stages.len();
    match mode {
        StageMode::Lexicographic => (0..n).map(|k| (program.stages[k].name.clone(), program.stage_expr(k))).collect(),
        StageMode::Weighted => {
            let mut seq = vec![("weighted".to_string(), weighted_expr(program))];
            for k in (0..n).filter(|&k| !program.stages[k].discrete) {
                seq.push((program.stages[k].name.clone(), program.stage_expr(k)));
            }
            seq
        }
    }
}

fn weighted_expr(program: &ConicProgram) -> LinExpr {
    let mut e = LinExpr::new();
    for (k, st) in program.stages.iter().enumerate() {
        if st.discrete {
            let w = program.stage_weights.get(k).copied().unwrap_or(0.0);
            if w != 0.0 {
                e.add_scaled(&program.stage_expr(k), w);
            }
        }
    }
    e.compact();
    e
}

fn eps_row(name: &str, expr: &LinExpr, value: f64, eps: f64) -> LinearRow {
    let mut e = expr.clone();
    let rhs = value + eps * value.abs().max(1.0) - e.constant;
    e.constant = 0.0;
    LinearRow::new(format!("keep[{name}]"), e, Sense::Le, rhs)
}

/// Fixes `plan` and optimizes the continuous variables stage by stage.
pub fn evaluate_plan(program: &ConicProgram, plan: &Fixings, config: &SolverConfig) -> Result<PlanEvaluation> {
    let bounds = plan.apply(program)?;
    let engine = ClarabelEngine::default();
    let mut relaxer = Relaxer::new(program, &engine);
    relaxer.residual_target = config.feas_tol * 0.1;
    let mut last: Option<Vec<f64>> = None;
    for (name, expr) in stage_sequence(program, config.mode) {
        relaxer.objective = expr.clone();
        let r = relaxer.solve(&bounds);
        if !r.is_optimal() {
            if last.is_none() {
                return Ok(PlanEvaluation {
                    feasible: false,
                    x: r.x,
                    stage_values: Vec::new(),
                    residual: f64::NAN,
                });
            }
            // A later stage could not improve; keep the previous point.
            log::warn!("stage `{name}` failed on a fixed plan ({:?}); keeping the previous point", r.status);
            break;
        }
        relaxer.extra.push(eps_row(&name, &expr, r.objective, config.stage_eps));
        last = Some(r.x);
    }
    let x = last.unwrap_or_default();
    let residual = program.max_violation(&x);
    Ok(PlanEvaluation {
        feasible: true,
        stage_values: (0..program.stages.len()).map(|k| program.stage_value(k, &x)).collect(),
        x,
        residual,
    })
}

fn merge(log: &mut SolveLog, out: &SearchOutcome) {
    log.nodes.extend(out.log.nodes.iter().cloned());
    log.notes.extend(out.log.notes.iter().cloned());
}

/// Solves the discrete stages in order (or once, weighted), then evaluates
/// the winning plan over every stage.
pub fn solve_lexicographic(program: &ConicProgram, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let mut log = SolveLog::default();
    let mut nodes = 0;
    let mut gap: f64 = 0.0;
    let mut limited = false;
    let discrete: Vec<usize> = (0..program.stages.len()).filter(|&k| program.stages[k].discrete).collect();

    let mut searches: Vec<(String, LinExpr)> = match config.mode {
        StageMode::Lexicographic => discrete.iter().map(|&k| (program.stages[k].name.clone(), program.stage_expr(k))).collect(),
        StageMode::Weighted => vec![("weighted".into(), weighted_expr(program))],
    };
    if searches.is_empty() && !program.discrete_vars().is_empty() {
        searches.push(("feasibility".into(), LinExpr::new()));
    }
    let mut extra = Vec::new();
    let mut seeds = Vec::new();
    let mut plan = Fixings::new();
    let mut objective = f64::NAN;
    let count = searches.len();
    for (j, (name, expr)) in searches.into_iter().enumerate() {
        let s = StageSearch {
            program,
            objective: expr.clone(),
            extra: extra.clone(),
            collect_ties: j + 1 == count,
            seeds: std::mem::take(&mut seeds),
            label: name.clone(),
        };
        let out = search(&s, config)?;
        merge(&mut log, &out);
        nodes += out.nodes;
        gap = gap.max(out.gap);
        limited |= out.status == SolveStatus::LimitFeasible;
        let Some(best) = out.best else {
            let mut sol = Solution::infeasible(out.status, program.variables.len());
            sol.nodes = nodes;
            sol.log = log;
            sol.wall_time = start.elapsed().as_secs_f64();
            return Ok(sol);
        };
        log::info!("stage `{name}`: {:.9e} after {} nodes", best.value, out.nodes);
        extra.push(eps_row(&name, &expr, best.value, config.stage_eps));
        objective = best.value;
        seeds.push(best.plan.clone());
        plan = best.plan;
    }

    let eval = evaluate_plan(program, &plan, config)?;
    if !eval.feasible {
        log.notes.push("winning plan failed its continuous evaluation".into());
        let mut sol = Solution::infeasible(SolveStatus::Infeasible, program.variables.len());
        sol.nodes = nodes;
        sol.log = log;
        return Ok(sol);
    }
    if count == 0 {
        objective = eval.stage_values.first().copied().unwrap_or(0.0);
    }
    Ok(Solution {
        status: if limited { SolveStatus::LimitFeasible } else { SolveStatus::Optimal },
        x: eval.x,
        objective,
        stage_values: eval.stage_values,
        gap,
        nodes,
        wall_time: start.elapsed().as_secs_f64(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{ObjectiveTerm, Stage, VarId, VarKind};

    /// Two plans with equal first-stage value; the second stage separates them.
    fn tie_program() -> ConicProgram {
        let mut p = ConicProgram::default();
        for (name, d) in [("a", true), ("b", true)] {
            p.stages.push(Stage {
                name: name.into(),
                discrete: d,
            });
        }
        let y1 = p.add_var("y1", VarKind::Binary, 0.0, 1.0);
        let y2 = p.add_var("y2", VarKind::Binary, 0.0, 1.0);
        p.add_row(LinearRow::new("one", LinExpr::var(y1).add(y2, 1.0), Sense::Eq, 1.0));
        p.objective.push(ObjectiveTerm {
            name: "first".into(),
            expr: LinExpr::constant(1.0),
            weight: 1.0,
            norm: 1.0,
            stage: 0,
        });
        p.objective.push(ObjectiveTerm {
            name: "second".into(),
            expr: LinExpr::term(y1, 2.0).add(y2, 1.0),
            weight: 1.0,
            norm: 1.0,
            stage: 1,
        });
        p.stage_weights = vec![1.0, 1.0];
        p
    }

    #[test]
    fn second_stage_breaks_first_stage_tie() {
        let p = tie_program();
        let s = solve_lexicographic(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.value(VarId(1)) - 1.0).abs() < 1e-6);
        assert!((s.stage_values[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equal_values_pick_smallest_vector() {
        let mut p = tie_program();
        p.objective[1].expr = LinExpr::term(VarId(0), 1.0).add(VarId(1), 1.0);
        let s = solve_lexicographic(&p, &SolverConfig::default()).unwrap();
        // (0, 1) < (1, 0)
        assert!(s.value(VarId(0)).abs() < 1e-6);
    }

    #[test]
    fn weighted_mode_trades_stages() {
        // Lexicographic keeps y1 (first stage 0 vs 0.1); weights 1:100 prefer y2.
        let mut p = tie_program();
        p.objective[0].expr = LinExpr::term(VarId(1), 0.1);
        p.objective[1].expr = LinExpr::term(VarId(0), 1.0);
        p.stage_weights = vec![1.0, 100.0];
        let lex = solve_lexicographic(&p, &SolverConfig::default()).unwrap();
        assert!((lex.value(VarId(0)) - 1.0).abs() < 1e-6);
        let cfg = SolverConfig {
            mode: StageMode::Weighted,
            ..SolverConfig::default()
        };
        let w = solve_lexicographic(&p, &cfg).unwrap();
        assert!((w.value(VarId(1)) - 1.0).abs() < 1e-6);
    }
}
