//! Mixed-integer conic solver: relaxation engine, presolve, branch and
//! bound with SOS1 branching, lexicographic staging and OLTC tap rounding.

mod bnb;
pub mod engine;
mod lexicographic;
pub mod presolve;
pub mod relaxation;
mod rounding;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::program::{ConicProgram, VarId};

pub use bnb::branch_and_bound;
pub(crate) use bnb::compare_keys;
pub use engine::{ClarabelEngine, ConicEngine};
pub use lexicographic::{evaluate_plan, solve_lexicographic};
pub use presolve::tighten_big_m;
pub use relaxation::{solve_relaxation, Fixings, RelaxStatus, RelaxationResult};
pub use rounding::{round_oltc_taps, round_tap};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMode {
    #[default]
    #[serde(alias = "lex")]
    Lexicographic,
    Weighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub int_tol: f64,
    /// Relative optimality gap.
    pub gap: f64,
    /// Absolute optimality gap, used when the incumbent is near zero.
    pub abs_gap: f64,
    pub node_limit: usize,
    /// Seconds per branch-and-bound run.
    pub time_limit: Option<f64>,
    pub mode: StageMode,
    /// Slack granted to earlier stage objectives in later stages.
    pub stage_eps: f64,
    /// Objective values within this distance count as ties.
    pub tie_tol: f64,
    pub parallel: bool,
    pub presolve: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            int_tol: 1e-5,
            gap: 1e-6,
            abs_gap: 1e-7,
            node_limit: 200_000,
            time_limit: None,
            mode: StageMode::Lexicographic,
            stage_eps: 1e-6,
            tie_tol: 1e-6,
            parallel: true,
            presolve: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feas_tol", self.feas_tol),
            ("int_tol", self.int_tol),
            ("stage_eps", self.stage_eps),
            ("tie_tol", self.tie_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Precondition(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.gap) || self.abs_gap < 0.0 {
            return Err(Error::Precondition("gap must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// A limit stopped the search; the incumbent is returned with its gap.
    LimitFeasible,
    Infeasible,
    /// A limit stopped the search before any incumbent was found.
    LimitInfeasible,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::LimitFeasible)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub stage: String,
    pub id: usize,
    pub depth: usize,
    pub bound: f64,
    pub incumbent: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub stage_values: Vec<f64>,
    pub nodes: usize,
    pub wall_time: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub nodes: Vec<NodeRecord>,
    pub notes: Vec<String>,
}

impl SolveLog {
    /// One line per node: stage, id, depth, bound, incumbent, gap.
    pub fn node_lines(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let inc = n.incumbent.map_or("-".to_string(), |v| format!("{v:.9e}"));
            let gap = n.gap.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(
                out,
                "{}\tnode {}\tdepth {}\tbound {:.9e}\tincumbent {}\tgap {}",
                n.stage, n.id, n.depth, n.bound, inc, gap
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Value of the objective that was optimized last.
    pub objective: f64,
    /// Value of every stage objective at `x`.
    pub stage_values: Vec<f64>,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: f64,
    pub log: SolveLog,
}

impl Solution {
    pub(crate) fn infeasible(status: SolveStatus, n: usize) -> Self {
        Self {
            status,
            x: vec![f64::NAN; n],
            objective: f64::NAN,
            stage_values: Vec::new(),
            gap: f64::INFINITY,
            nodes: 0,
            wall_time: 0.0,
            log: SolveLog::default(),
        }
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    /// Rounded values of every discrete variable, in program order.
    pub fn discrete_plan(&self, program: &ConicProgram) -> Vec<(VarId, f64)> {
        program
            .discrete_vars()
            .into_iter()
            .map(|v| (v, self.x[v.0].round()))
            .collect()
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            status: self.status,
            stage_values: self.stage_values.clone(),
            nodes: self.nodes,
            wall_time: self.wall_time,
            gap: self.gap,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("summary serializes")
    }
}

/// Presolves, solves the staged program and rounds the OLTC ratios.
pub fn solve(built: &crate::builder::BuiltProgram, case: &crate::topology::RestorationCase, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut work = built.program.clone();
    if config.presolve {
        let s = tighten_big_m(&mut work);
        log::debug!("presolve tightened {} rows", s.rows_tightened);
    }
    let staged = solve_lexicographic(&work, config)?;
    if !staged.status.has_solution() {
        let mut s = staged;
        s.wall_time = start.elapsed().as_secs_f64();
        return Ok(s);
    }
    let mut out = round_oltc_taps(&staged, built, case, config)?;
    out.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}
