//! Best-bound branch and bound over the discrete and implied-integral variables.
//!
//! Open nodes are taken from the heap in batches of fixed size and the
//! batch is relaxed concurrently; results are merged in node order, so the
//! search does not depend on the number of threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::trace;
use rayon::prelude::*;

use super::engine::ClarabelEngine;
use super::relaxation::{Fixings, RelaxStatus, RelaxationResult, Relaxer};
use super::{NodeRecord, Solution, SolveLog, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::program::{ConicProgram, LinExpr, LinearRow, VarId};

const BATCH: usize = 8;
const HEURISTIC_PERIOD: usize = 64;

/// One optimization over the discrete space.
pub(crate) struct StageSearch<'a> {
    pub program: &'a ConicProgram,
    pub objective: LinExpr,
    pub extra: Vec<LinearRow>,
    /// Keep every incumbent within `tie_tol` of the best and pick the
    /// lexicographically smallest discrete vector among them.
    pub collect_ties: bool,
    /// Complete plans tried as initial incumbents.
    pub seeds: Vec<Fixings>,
    pub label: String,
}

#[derive(Clone, Debug)]
pub(crate) struct Incumbent {
    pub value: f64,
    pub x: Vec<f64>,
    /// Rounded discrete variables in program order.
    pub key: Vec<f64>,
    /// Rounded discrete and implied-integral variables.
    pub plan: Fixings,
}

pub(crate) struct SearchOutcome {
    pub status: SolveStatus,
    pub best: Option<Incumbent>,
    pub gap: f64,
    pub nodes: usize,
    pub log: SolveLog,
}

#[derive(Clone, Debug)]
struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    changes: Vec<(VarId, f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Reversed so that the max-heap yields the smallest bound, then the smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

enum Branch {
    Var(VarId, f64),
    Sos { left_zero: Vec<VarId>, right_zero: Vec<VarId> },
}

struct Search<'a> {
    s: &'a StageSearch<'a>,
    cfg: &'a SolverConfig,
    relaxer: Relaxer<'a>,
    root: Vec<(f64, f64)>,
    /// Discrete variables followed by implied-integral ones.
    integral: Vec<VarId>,
    discrete: Vec<VarId>,
    /// For each variable, the SOS1 group it belongs to.
    sos_of: Vec<Option<usize>>,
    incumbents: Vec<Incumbent>,
}

impl<'a> Search<'a> {
    fn best_value(&self) -> Option<f64> {
        self.incumbents.iter().map(|i| i.value).min_by(f64::total_cmp)
    }

    fn prunable(&self, bound: f64) -> bool {
        match self.best_value() {
            None => false,
            Some(best) if self.s.collect_ties => bound > best + self.cfg.tie_tol,
            Some(best) => bound >= best - (self.cfg.gap * best.abs()).max(self.cfg.abs_gap),
        }
    }

    fn bounds_of(&self, changes: &[(VarId, f64, f64)]) -> Vec<(f64, f64)> {
        let mut b = self.root.clone();
        for &(v, lo, hi) in changes {
            b[v.0] = (lo, hi);
        }
        b
    }

    fn frac(&self, x: f64) -> f64 {
        let f = (x - x.round()).abs();
        if f <= self.cfg.int_tol {
            0.0
        } else {
            f
        }
    }

    fn sos_nonzero(&self, g: usize, x: &[f64]) -> Vec<usize> {
        let sos = &self.s.program.sos1[g];
        (0..sos.vars.len()).filter(|&k| x[sos.vars[k].0].abs() > self.cfg.int_tol).collect()
    }

    /// Most fractional candidate, smallest index on ties; `None` when integral.
    fn choose_branch(&self, x: &[f64]) -> Option<Branch> {
        let mut best: Option<(f64, usize, Branch)> = None;
        let offer = |score: f64, index: usize, b: Branch, best: &mut Option<(f64, usize, Branch)>| {
            let better = match best {
                None => true,
                Some((s, i, _)) => score > *s || (score == *s && index < *i),
            };
            if better {
                *best = Some((score, index, b));
            }
        };
        let mut grouped = vec![false; self.s.program.sos1.len()];
        for &v in &self.integral {
            let xv = x[v.0];
            if let Some(g) = self.sos_of[v.0] {
                if grouped[g] {
                    continue;
                }
                let nz = self.sos_nonzero(g, x);
                if nz.len() >= 2 {
                    grouped[g] = true;
                    let sos = &self.s.program.sos1[g];
                    let score = nz.iter().map(|&k| self.frac(x[sos.vars[k].0])).fold(0.0, f64::max).max(0.5);
                    let index = sos.vars.iter().map(|v| v.0).min().unwrap_or(v.0);
                    offer(score, index, self.sos_split(g, x), &mut best);
                    continue;
                }
            }
            let f = self.frac(xv);
            if f > 0.0 {
                offer(0.5 - (f - 0.5).abs(), v.0, Branch::Var(v, xv), &mut best);
            }
        }
        best.map(|(_, _, b)| b)
    }

    fn sos_split(&self, g: usize, x: &[f64]) -> Branch {
        let sos = &self.s.program.sos1[g];
        let mut order: Vec<usize> = (0..sos.vars.len()).collect();
        order.sort_by(|&a, &b| sos.weights[a].total_cmp(&sos.weights[b]).then(a.cmp(&b)));
        let vals: Vec<f64> = order.iter().map(|&k| x[sos.vars[k].0].max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        let avg = order.iter().zip(&vals).map(|(&k, v)| sos.weights[k] * v).sum::<f64>() / total;
        let nz: Vec<usize> = (0..order.len()).filter(|&p| vals[p] > self.cfg.int_tol).collect();
        // Positions [0, cut) form the left part.
        let mut cut = order.iter().take_while(|&&k| sos.weights[k] <= avg).count();
        let left_has = nz.iter().any(|&p| p < cut);
        let right_has = nz.iter().any(|&p| p >= cut);
        if !(left_has && right_has) {
            cut = nz[nz.len() / 2 - 1] + 1;
        }
        let left: Vec<VarId> = order[..cut].iter().map(|&k| sos.vars[k]).collect();
        let right: Vec<VarId> = order[cut..].iter().map(|&k| sos.vars[k]).collect();
        Branch::Sos {
            left_zero: right,
            right_zero: left,
        }
    }

    fn incumbent_from(&self, r: &RelaxationResult) -> Incumbent {
        let mut plan = Fixings::new();
        for &v in &self.integral {
            plan.fix(v, r.x[v.0].round());
        }
        Incumbent {
            value: r.objective,
            x: r.x.clone(),
            key: self.discrete.iter().map(|v| r.x[v.0].round()).collect(),
            plan,
        }
    }

    fn offer_incumbent(&mut self, inc: Incumbent) {
        if self.s.collect_ties {
            self.incumbents.push(inc);
            return;
        }
        match self.best_value() {
            Some(b) if inc.value >= b => {}
            _ => self.incumbents = vec![inc],
        }
    }

    /// Solves with the plan implied by rounding `x`; returns an incumbent if it is feasible and integral.
    fn round_and_solve(&self, bounds: &[(f64, f64)], x: &[f64]) -> Option<Incumbent> {
        let mut b = bounds.to_vec();
        let mut done = vec![false; self.s.program.sos1.len()];
        for &v in &self.discrete {
            if let Some(g) = self.sos_of[v.0] {
                if !done[g] {
                    done[g] = true;
                    let sos = &self.s.program.sos1[g];
                    let pick = (0..sos.vars.len())
                        .max_by(|&a, &c| x[sos.vars[a].0].total_cmp(&x[sos.vars[c].0]).then(c.cmp(&a)))
                        .expect("SOS1 groups are nonempty");
                    for (k, m) in sos.vars.iter().enumerate() {
                        let val: f64 = if k == pick { 1.0 } else { 0.0 };
                        let (lo, hi) = b[m.0];
                        b[m.0] = (val.clamp(lo, hi), val.clamp(lo, hi));
                    }
                }
                continue;
            }
            let (lo, hi) = b[v.0];
            let val = x[v.0].round().clamp(lo, hi);
            b[v.0] = (val, val);
        }
        let r = self.relaxer.solve(&b);
        (r.is_optimal() && self.choose_branch(&r.x).is_none()).then(|| self.incumbent_from(&r))
    }

    fn global_gap(&self, open_bound: f64) -> f64 {
        match self.best_value() {
            None => f64::INFINITY,
            Some(best) => {
                let diff = (best - open_bound).max(0.0);
                if diff <= self.cfg.abs_gap {
                    0.0
                } else {
                    diff / best.abs().max(1e-9)
                }
            }
        }
    }
}

pub(crate) fn search(s: &StageSearch<'_>, cfg: &SolverConfig) -> Result<SearchOutcome> {
    let start = Instant::now();
    let engine = ClarabelEngine::default();
    let program = s.program;
    let mut relaxer = Relaxer::new(program, &engine);
    relaxer.objective = s.objective.clone();
    relaxer.extra = s.extra.clone();
    let mut sos_of = vec![None; program.variables.len()];
    for (g, sos) in program.sos1.iter().enumerate() {
        for v in &sos.vars {
            sos_of[v.0] = Some(g);
        }
    }
    let discrete = program.discrete_vars();
    let mut integral = discrete.clone();
    integral.extend(
        (0..program.variables.len())
            .filter(|&j| program.variables[j].implied_integral && !program.variables[j].kind.is_discrete())
            .map(VarId),
    );
    let mut st = Search {
        s,
        cfg,
        relaxer,
        root: program.variables.iter().map(|v| (v.lower, v.upper)).collect(),
        integral,
        discrete,
        sos_of,
        incumbents: Vec::new(),
    };
    let mut log = SolveLog::default();

    // Seeds.
    let seeded: Vec<Option<Incumbent>> = s
        .seeds
        .iter()
        .map(|seed| {
            let mut b = st.root.clone();
            for (v, (lo, hi)) in seed.iter() {
                b[v.0] = (lo, hi);
            }
            let r = st.relaxer.solve(&b);
            (r.is_optimal() && st.choose_branch(&r.x).is_none()).then(|| st.incumbent_from(&r))
        })
        .collect();
    for inc in seeded.into_iter().flatten() {
        st.offer_incumbent(inc);
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        depth: 0,
        bound: f64::NEG_INFINITY,
        changes: Vec::new(),
    });
    let mut next_id = 1;
    let mut evaluated = 0usize;
    let mut limited = false;
    let mut numeric_drops = 0usize;

    while !heap.is_empty() {
        if evaluated >= cfg.node_limit || cfg.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() > t) {
            limited = true;
            break;
        }
        let mut batch = Vec::with_capacity(BATCH);
        while batch.len() < BATCH {
            match heap.pop() {
                Some(n) if st.prunable(n.bound) => continue,
                Some(n) => batch.push(n),
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        let solve_one = |n: &Node| {
            let b = st.bounds_of(&n.changes);
            let r = st.relaxer.solve(&b);
            (b, r)
        };
        let results: Vec<(Vec<(f64, f64)>, RelaxationResult)> = if cfg.parallel {
            batch.par_iter().map(solve_one).collect()
        } else {
            batch.iter().map(solve_one).collect()
        };
        for (node, (bounds, r)) in batch.into_iter().zip(results) {
            evaluated += 1;
            let mut bound = f64::INFINITY;
            match r.status {
                RelaxStatus::Unbounded => {
                    return Err(Error::Solver(format!("{}: relaxation is unbounded", s.label)));
                }
                RelaxStatus::Infeasible => {}
                RelaxStatus::NumericFailure => {
                    bound = node.bound;
                    let pick = st.integral.iter().copied().find(|v| bounds[v.0].0 < bounds[v.0].1);
                    match pick {
                        Some(v) => {
                            let (lo, hi) = bounds[v.0];
                            let mid = (0.5 * (lo + hi)).floor();
                            for (clo, chi) in [(lo, mid), (mid + 1.0, hi)] {
                                let mut changes = node.changes.clone();
                                changes.push((v, clo, chi));
                                heap.push(Node {
                                    id: next_id,
                                    depth: node.depth + 1,
                                    bound: node.bound,
                                    changes,
                                });
                                next_id += 1;
                            }
                        }
                        None => {
                            numeric_drops += 1;
                            log.notes.push(format!(
                                "{}: node {} dropped after numeric failure with every integral variable fixed",
                                s.label, node.id
                            ));
                        }
                    }
                }
                RelaxStatus::Optimal => {
                    bound = r.objective.max(node.bound);
                    if !st.prunable(bound) {
                        match st.choose_branch(&r.x) {
                            None => {
                                let inc = st.incumbent_from(&r);
                                st.offer_incumbent(inc);
                            }
                            Some(branch) => {
                                if node.id == 0 || evaluated.is_multiple_of(HEURISTIC_PERIOD) {
                                    if let Some(inc) = st.round_and_solve(&bounds, &r.x) {
                                        st.offer_incumbent(inc);
                                    }
                                }
                                let kids: Vec<Vec<(VarId, f64, f64)>> = match branch {
                                    Branch::Var(v, xv) => {
                                        let (lo, hi) = bounds[v.0];
                                        vec![vec![(v, lo, xv.floor())], vec![(v, xv.ceil(), hi)]]
                                    }
                                    Branch::Sos { left_zero, right_zero } => vec![
                                        left_zero.into_iter().map(|v| (v, 0.0, 0.0)).collect(),
                                        right_zero.into_iter().map(|v| (v, 0.0, 0.0)).collect(),
                                    ],
                                };
                                for extra in kids {
                                    let mut changes = node.changes.clone();
                                    changes.extend(extra);
                                    heap.push(Node {
                                        id: next_id,
                                        depth: node.depth + 1,
                                        bound,
                                        changes,
                                    });
                                    next_id += 1;
                                }
                            }
                        }
                    }
                }
            }
            let open = heap.peek().map_or(f64::INFINITY, |n| n.bound).min(bound);
            let rec = NodeRecord {
                stage: s.label.clone(),
                id: node.id,
                depth: node.depth,
                bound,
                incumbent: st.best_value(),
                gap: st.best_value().map(|_| st.global_gap(open)),
            };
            trace!(
                "{} node {} depth {} bound {:.9e} incumbent {:?} gap {:?}",
                rec.stage,
                rec.id,
                rec.depth,
                rec.bound,
                rec.incumbent,
                rec.gap
            );
            log.nodes.push(rec);
        }
    }

    let open_bound = heap
        .iter()
        .filter(|n| !st.prunable(n.bound))
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    let gap = st.global_gap(open_bound);
    if numeric_drops > 0 {
        log.notes.push(format!("{}: {numeric_drops} nodes lost to numeric failures", s.label));
    }
    let best = select_best(std::mem::take(&mut st.incumbents), cfg.tie_tol);
    let status = match (&best, limited && open_bound.is_finite()) {
        (Some(_), false) => SolveStatus::Optimal,
        (Some(_), true) => SolveStatus::LimitFeasible,
        (None, false) => SolveStatus::Infeasible,
        (None, true) => SolveStatus::LimitInfeasible,
    };
    Ok(SearchOutcome {
        status,
        best,
        gap: if status == SolveStatus::Optimal { gap.min(cfg.gap) } else { gap },
        nodes: evaluated,
        log,
    })
}

/// Smallest value, then the lexicographically smallest discrete vector among
/// incumbents within `tie_tol` of it.
pub(crate) fn select_best(incumbents: Vec<Incumbent>, tie_tol: f64) -> Option<Incumbent> {
    let best = incumbents.iter().map(|i| i.value).min_by(f64::total_cmp)?;
    incumbents
        .into_iter()
        .filter(|i| i.value <= best + tie_tol)
        .min_by(|a, b| compare_keys(&a.key, &b.key))
}

pub(crate) fn compare_keys(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Branch and bound on the program's own objective.
pub fn branch_and_bound(program: &ConicProgram, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let s = StageSearch {
        program,
        objective: program.objective_expr(),
        extra: Vec::new(),
        collect_ties: true,
        seeds: Vec::new(),
        label: "bnb".into(),
    };
    let out = search(&s, config)?;
    let mut sol = match out.best {
        Some(inc) => Solution {
            status: out.status,
            objective: inc.value,
            stage_values: (0..program.stages.len()).map(|k| program.stage_value(k, &inc.x)).collect(),
            x: inc.x,
            gap: out.gap,
            nodes: out.nodes,
            wall_time: 0.0,
            log: out.log,
        },
        None => {
            let mut s = Solution::infeasible(out.status, program.variables.len());
            s.nodes = out.nodes;
            s.log = out.log;
            s
        }
    };
    sol.wall_time = start.elapsed().as_secs_f64();
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{ObjectiveTerm, Sense, Sos1, Stage, VarKind};

    fn knapsack() -> ConicProgram {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 4 (binaries) -> a, c: value 8
        let mut p = ConicProgram::default();
        p.stages.push(Stage {
            name: "k".into(),
            discrete: true,
        });
        let a = p.add_var("a", VarKind::Binary, 0.0, 1.0);
        let b = p.add_var("b", VarKind::Binary, 0.0, 1.0);
        let c = p.add_var("c", VarKind::Binary, 0.0, 1.0);
        p.add_row(LinearRow::new("cap", LinExpr::term(a, 2.0).add(b, 3.0).add(c, 1.0), Sense::Le, 4.0));
        p.objective.push(ObjectiveTerm {
            name: "v".into(),
            expr: LinExpr::term(a, -5.0).add(b, -4.0).add(c, -3.0),
            weight: 1.0,
            norm: 1.0,
            stage: 0,
        });
        p
    }

    #[test]
    fn knapsack_optimum() {
        let p = knapsack();
        let s = branch_and_bound(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 8.0).abs() < 1e-6);
        assert_eq!(s.discrete_plan(&p).iter().map(|x| x.1).collect::<Vec<_>>(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn no_integers_is_one_relaxation() {
        let mut p = ConicProgram::default();
        p.stages.push(Stage {
            name: "c".into(),
            discrete: false,
        });
        let x = p.add_var("x", VarKind::Continuous, 1.5, 3.0);
        p.objective.push(ObjectiveTerm {
            name: "v".into(),
            expr: LinExpr::var(x),
            weight: 1.0,
            norm: 1.0,
            stage: 0,
        });
        let s = branch_and_bound(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.nodes, 1);
        assert!((s.objective - 1.5).abs() < 1e-7);
    }

    #[test]
    fn infeasible_toy() {
        let mut p = knapsack();
        p.add_row(LinearRow::new("all", LinExpr::var(VarId(0)).add(VarId(1), 1.0), Sense::Ge, 2.0));
        let s = branch_and_bound(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn sos_group_branching() {
        // Pick one level k in {-2..2} minimizing (k - 0.4)^2 proxy |k - 0.4| via t >= +-(sum k d - 0.4)
        let mut p = ConicProgram::default();
        p.stages.push(Stage {
            name: "s".into(),
            discrete: true,
        });
        let ds: Vec<VarId> = (-2..=2).map(|k| p.add_var(format!("d{k}"), VarKind::Binary, 0.0, 1.0)).collect();
        let t = p.add_var("t", VarKind::Continuous, 0.0, 10.0);
        let mut one = LinExpr::new();
        let mut lvl = LinExpr::new();
        for (k, &d) in (-2..=2).zip(&ds) {
            one.push(d, 1.0);
            lvl.push(d, k as f64);
        }
        p.add_row(LinearRow::new("one", one, Sense::Eq, 1.0));
        p.add_row(LinearRow::new("up", lvl.clone().add(t, -1.0), Sense::Le, 0.4));
        p.add_row(LinearRow::new("dn", lvl.scaled(-1.0).add(t, -1.0), Sense::Le, -0.4));
        p.sos1.push(Sos1 {
            name: "g".into(),
            vars: ds.clone(),
            weights: (-2..=2).map(|k| k as f64).collect(),
        });
        p.objective.push(ObjectiveTerm {
            name: "t".into(),
            expr: LinExpr::var(t),
            weight: 1.0,
            norm: 1.0,
            stage: 0,
        });
        let s = branch_and_bound(&p, &SolverConfig::default()).unwrap();
        assert!((s.objective - 0.4).abs() < 1e-6);
        assert!((s.value(ds[2]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let p = knapsack();
        let a = branch_and_bound(&p, &SolverConfig::default()).unwrap();
        let b = branch_and_bound(
            &p,
            &SolverConfig {
                parallel: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.discrete_plan(&p), b.discrete_plan(&p));
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert_eq!(a.nodes, b.nodes);
    }
}
