//! End-to-end pipeline: fault isolation, model assembly, solve, verification
//! and a tabular report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{assemble, BuildConfig, BuiltProgram, STAGE_RESTORATION};
use crate::error::{Error, Result};
use crate::grid::{load_grid, Grid, RegulatorKind};
use crate::program::VarId;
use crate::solver::{self, evaluate_plan, Fixings, Solution, SolveStatus, SolverConfig, StageMode};
use crate::state::RestorationState;
use crate::topology::{isolate_fault, FaultSpec, RestorationCase, SwitchRole};
use crate::verify::{self, BruteCaps, VerificationReport, VerifyOptions};

/// Everything a run can be configured with; every field has a default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub build: BuildConfig,
    pub solver: SolverConfig,
    pub verify: VerifyOptions,
    pub brute: BruteCaps,
    /// Per-node load priority overrides, by node id.
    pub priorities: BTreeMap<String, f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn with_mode(mut self, mode: StageMode) -> Self {
        self.solver.mode = mode;
        self
    }

    /// Grid with the priority overrides applied.
    pub fn apply(&self, grid: &Grid) -> Result<Grid> {
        if self.priorities.is_empty() {
            return Ok(grid.clone());
        }
        let mut doc = grid.to_document();
        for (id, &p) in &self.priorities {
            let node = doc
                .nodes
                .iter_mut()
                .find(|n| &n.id == id)
                .ok_or_else(|| Error::UnknownId {
                    kind: "node",
                    id: id.clone(),
                })?;
            node.priority = p;
        }
        Grid::from_document(doc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Open,
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Tie,
    Sectionalizer,
    LoadBreaker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchAction {
    pub action: Action,
    pub kind: DeviceKind,
    /// Line id, or node id for a load breaker.
    pub device: String,
    pub remote: bool,
}

impl SwitchAction {
    pub fn describe(&self) -> String {
        let verb = match self.action {
            Action::Open => "Open",
            Action::Close => "Close",
        };
        let what = match self.kind {
            DeviceKind::Tie => "tie",
            DeviceKind::Sectionalizer => "switch",
            DeviceKind::LoadBreaker => "load breaker",
        };
        let how = if self.remote { "remote" } else { "manual" };
        format!("{verb} {what} {} ({how})", self.device)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapSetting {
    pub kind: RegulatorKind,
    pub location: String,
    pub tap: i64,
    pub initial: i64,
    /// Voltage ratio of an OLTC or SVR, `1 + tap * sigma`.
    pub ratio: Option<f64>,
    /// Reactive output of a CB per step.
    pub q: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgSeries {
    pub node: String,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationReport {
    pub fault_id: String,
    pub faulted_line: String,
    pub hours: Vec<usize>,
    pub status: SolveStatus,
    pub mode: StageMode,
    /// Opened to clear the fault; not restoration actions.
    pub isolation: Vec<String>,
    /// Opens before closes, remote before manual within each group.
    pub switching: Vec<SwitchAction>,
    /// Off-outage nodes left de-energized.
    pub isolated_nodes: Vec<String>,
    /// Energized nodes whose load breaker is open.
    pub rejected_loads: Vec<String>,
    /// Curtailed active energy, p.u. hours.
    pub ens: f64,
    /// Curtailed active energy weighted by load priority.
    pub ens_weighted: f64,
    /// Sum of the current deviation variables over lines and steps.
    pub current_deviation: f64,
    pub taps: Vec<TapSetting>,
    pub dgs: Vec<DgSeries>,
    pub stage_values: Vec<f64>,
    pub nodes: usize,
    pub wall_time: f64,
    pub verification: Option<VerificationReport>,
    /// Discrete decisions by variable name, enough to re-evaluate the plan.
    pub plan: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl RestorationReport {
    pub fn solved(&self) -> bool {
        self.status.has_solution()
    }

    pub fn verified(&self) -> bool {
        self.verification.as_ref().is_some_and(VerificationReport::pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Switching sequence as one line of text.
    pub fn sequence(&self) -> String {
        if self.switching.is_empty() {
            return "-".into();
        }
        self.switching.iter().map(SwitchAction::describe).collect::<Vec<_>>().join("; ")
    }

    /// Regulator settings that differ from the pre-fault ones.
    pub fn settings(&self) -> String {
        let changed: Vec<String> = self
            .taps
            .iter()
            .filter(|t| t.tap != t.initial)
            .map(|t| {
                let name = match t.kind {
                    RegulatorKind::Oltc => "OLTC",
                    RegulatorKind::Svr => "SVR",
                    RegulatorKind::Cb => "CB",
                };
                match t.ratio {
                    Some(r) => format!("{name} {} tap {:+} (ratio {r:.4})", t.location, t.tap),
                    None => format!("{name} {} tap {:+}", t.location, t.tap),
                }
            })
            .collect();
        if changed.is_empty() {
            "-".into()
        } else {
            changed.join("; ")
        }
    }

    pub fn verdict(&self) -> String {
        self.verification.as_ref().map_or("not run".into(), VerificationReport::verdict)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} [{}] {:?}: {} | ENS {:.4} p.u.h | current deviation {:.4} | {} | {:.2} s | {}",
            self.fault_id,
            self.faulted_line,
            self.status,
            self.sequence(),
            self.ens,
            self.current_deviation,
            self.settings(),
            self.wall_time,
            self.verdict()
        )
    }

    pub fn table_row(&self) -> TableRow {
        TableRow {
            scenario: self.fault_id.clone(),
            fault_location: self.faulted_line.clone(),
            switching_sequence: self.sequence(),
            ens: self.ens,
            total_current_deviation: self.current_deviation,
            regulation_settings: self.settings(),
            computation_time: self.wall_time,
            verification: self.verdict(),
        }
    }
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(rename = "Simulation scenario")]
    pub scenario: String,
    #[serde(rename = "Fault location")]
    pub fault_location: String,
    #[serde(rename = "Sequence of switching")]
    pub switching_sequence: String,
    #[serde(rename = "ENS (p.u.)")]
    pub ens: f64,
    #[serde(rename = "Total current deviation (p.u.)")]
    pub total_current_deviation: f64,
    #[serde(rename = "Optimal setting of voltage regulation devices")]
    pub regulation_settings: String,
    #[serde(rename = "Computation time (sec)")]
    pub computation_time: f64,
    #[serde(rename = "Verification")]
    pub verification: String,
}

pub fn write_table<W: std::io::Write>(reports: &[RestorationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r.table_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_csv(reports: &[RestorationReport]) -> String {
    let mut buf = Vec::new();
    write_table(reports, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Case, program and solution of one fault, kept for further checks.
pub struct Solved {
    pub case: RestorationCase,
    pub built: BuiltProgram,
    pub solution: Solution,
    pub report: RestorationReport,
}

/// Isolates the fault and assembles the program.
pub fn prepare(grid: &Grid, fault: &FaultSpec, config: &RunConfig) -> Result<(RestorationCase, BuiltProgram)> {
    let grid = Arc::new(config.apply(grid)?);
    let case = isolate_fault(grid, &fault.faulted_line, &fault.hours())?;
    let built = assemble(&case, &config.build)?;
    Ok((case, built))
}

/// Full pipeline for one fault, keeping the intermediate objects.
pub fn solve_full(grid: &Grid, fault: &FaultSpec, config: &RunConfig) -> Result<Solved> {
    let start = Instant::now();
    let (case, built) = prepare(grid, fault, config)?;
    let solution = solver::solve(&built, &case, &config.solver)?;
    let verification = solution
        .status
        .has_solution()
        .then(|| verify::verify_solution(&built, &case, &solution, &config.verify));
    let mut report = build_report(fault, &case, &built, &solution, config.solver.mode, verification);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Solved {
        case,
        built,
        solution,
        report,
    })
}

pub fn solve_case(grid: &Grid, fault: &FaultSpec, config: &RunConfig) -> Result<RestorationReport> {
    Ok(solve_full(grid, fault, config)?.report)
}

fn read_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

/// Reads the grid, fault and optional config files and runs the pipeline.
pub fn run(grid_path: &Path, fault_path: &Path, config_path: Option<&Path>) -> Result<RestorationReport> {
    let grid = load_grid(grid_path)?;
    let fault = FaultSpec::load(fault_path)?;
    let config = read_config(config_path)?;
    solve_case(&grid, &fault, &config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub reports: Vec<RestorationReport>,
    pub warnings: Vec<String>,
}

impl BatchReport {
    pub fn table_csv(&self) -> String {
        table_csv(&self.reports)
    }
}

/// Runs every fault of the list concurrently; repeated labels keep their
/// first occurrence.
pub fn run_batch(grid: &Grid, faults: &[FaultSpec], config: &RunConfig) -> Result<BatchReport> {
    if faults.is_empty() {
        return Err(Error::Fault("empty fault list".into()));
    }
    let mut seen = BTreeSet::new();
    let mut warnings = Vec::new();
    let mut unique = Vec::new();
    for f in faults {
        if seen.insert(f.label()) {
            unique.push(f.clone());
        } else {
            let w = format!("duplicate fault id `{}` skipped", f.label());
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let reports = unique
        .par_iter()
        .map(|f| solve_case(grid, f, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport { reports, warnings })
}

pub fn run_batch_files(grid_path: &Path, faults_path: &Path, config_path: Option<&Path>) -> Result<BatchReport> {
    let grid = load_grid(grid_path)?;
    let faults = FaultSpec::parse_list(&std::fs::read_to_string(faults_path)?)?;
    run_batch(&grid, &faults, &read_config(config_path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub lexicographic: RestorationReport,
    pub weighted: RestorationReport,
    pub identical: bool,
    /// Decisions that differ, as `name: lex -> weighted`.
    pub differences: Vec<String>,
}

/// Solves in both stage modes and compares the discrete plans.
pub fn compare_modes(grid: &Grid, fault: &FaultSpec, config: &RunConfig) -> Result<ModeComparison> {
    let lex = solve_case(grid, fault, &config.clone().with_mode(StageMode::Lexicographic))?;
    let weighted = solve_case(grid, fault, &config.clone().with_mode(StageMode::Weighted))?;
    let mut differences = Vec::new();
    let names: BTreeSet<&String> = lex.plan.keys().chain(weighted.plan.keys()).collect();
    for name in names {
        let a = lex.plan.get(name).copied();
        let b = weighted.plan.get(name).copied();
        if a != b {
            let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v}"));
            differences.push(format!("{name}: {} -> {}", show(a), show(b)));
        }
    }
    Ok(ModeComparison {
        identical: differences.is_empty() && lex.status == weighted.status,
        lexicographic: lex,
        weighted,
        differences,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub report: RestorationReport,
    pub oracle_found: bool,
    pub oracle_stage_values: Vec<f64>,
    /// Relative gap per stage, `|solver - oracle| / max(1, |oracle|)`.
    pub gaps: Vec<f64>,
    pub same_plan: bool,
    pub candidates: usize,
    pub evaluated: usize,
    pub oracle_time: f64,
}

impl OracleComparison {
    /// Agreement within the pinned tolerances (restoration 1e-6, switching
    /// 1e-6, operation 1e-5) with the same discrete plan.
    pub fn agrees(&self) -> bool {
        let tol = [1e-6, 1e-6, 1e-5];
        if !self.oracle_found {
            return !self.report.solved();
        }
        self.same_plan && self.gaps.iter().zip(tol).all(|(g, t)| *g <= t)
    }
}

/// Solves the fault and checks the result against exhaustive enumeration.
pub fn compare_with_oracle(grid: &Grid, fault: &FaultSpec, config: &RunConfig) -> Result<OracleComparison> {
    let solved = solve_full(grid, fault, config)?;
    let start = Instant::now();
    let oracle = verify::brute_force(&solved.built, &solved.case, &config.brute, &config.solver)?;
    let oracle_time = start.elapsed().as_secs_f64();
    let key: Vec<f64> = solved.solution.discrete_plan(&solved.built.program).iter().map(|p| p.1).collect();
    let mut report = solved.report;
    let (found, values, gaps, same) = match &oracle.best {
        Some(best) => {
            let gaps = verify::stage_gaps(&report.stage_values, &best.stage_values);
            (true, best.stage_values.clone(), gaps, report.solved() && best.key == key)
        }
        None => (false, Vec::new(), Vec::new(), !report.solved()),
    };
    if let Some(v) = report.verification.as_mut() {
        v.oracle_gap = Some(gaps.clone());
    }
    Ok(OracleComparison {
        report,
        oracle_found: found,
        oracle_stage_values: values,
        gaps,
        same_plan: same,
        candidates: oracle.candidates,
        evaluated: oracle.evaluated,
        oracle_time,
    })
}

/// Re-evaluates a saved plan on a freshly built program and verifies it.
pub fn verify_plan(grid: &Grid, fault: &FaultSpec, plan: &BTreeMap<String, f64>, config: &RunConfig) -> Result<RestorationReport> {
    let start = Instant::now();
    let (case, built) = prepare(grid, fault, config)?;
    let by_name: BTreeMap<&str, VarId> = built
        .program
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| (v.name.as_str(), VarId(j)))
        .collect();
    let mut fix = Fixings::new();
    for (name, &value) in plan {
        let v = by_name.get(name.as_str()).ok_or_else(|| Error::UnknownId {
            kind: "variable",
            id: name.clone(),
        })?;
        fix.fix(*v, value);
    }
    let eval = evaluate_plan(&built.program, &fix, &config.solver)?;
    let mut solution = Solution {
        status: if eval.feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible },
        objective: eval.stage_values.get(STAGE_RESTORATION).copied().unwrap_or(f64::NAN),
        stage_values: eval.stage_values,
        x: eval.x,
        gap: 0.0,
        nodes: 0,
        wall_time: 0.0,
        log: Default::default(),
    };
    if !eval.feasible {
        solution.x = vec![f64::NAN; built.program.variables.len()];
        solution.stage_values.clear();
    }
    let verification = eval
        .feasible
        .then(|| verify::verify_solution(&built, &case, &solution, &config.verify));
    let mut report = build_report(fault, &case, &built, &solution, config.solver.mode, verification);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

fn build_report(
    fault: &FaultSpec,
    case: &RestorationCase,
    built: &BuiltProgram,
    solution: &Solution,
    mode: StageMode,
    verification: Option<VerificationReport>,
) -> RestorationReport {
    let grid = case.grid.as_ref();
    let net = grid.network();
    let mut report = RestorationReport {
        fault_id: fault.label(),
        faulted_line: fault.faulted_line.clone(),
        hours: case.horizon.clone(),
        status: solution.status,
        mode,
        isolation: case.isolation_switches.iter().map(|&l| net.lines[l].id.clone()).collect(),
        switching: Vec::new(),
        isolated_nodes: Vec::new(),
        rejected_loads: Vec::new(),
        ens: 0.0,
        ens_weighted: 0.0,
        current_deviation: 0.0,
        taps: Vec::new(),
        dgs: Vec::new(),
        stage_values: solution.stage_values.clone(),
        nodes: solution.nodes,
        wall_time: solution.wall_time,
        verification,
        plan: BTreeMap::new(),
        warnings: built.warnings.clone(),
    };
    if !solution.status.has_solution() {
        return report;
    }
    let ix = &built.index;
    let x = &solution.x;
    let st = RestorationState::extract(case, ix, x);

    let remote = |l: usize| net.lines[l].switch.as_ref().is_some_and(|s| s.remote);
    for (&l, &y) in &ix.y {
        if y_is_tie(case, l) && x[y.0] > 0.5 {
            report.switching.push(SwitchAction {
                action: Action::Close,
                kind: DeviceKind::Tie,
                device: net.lines[l].id.clone(),
                remote: remote(l),
            });
        }
    }
    for (&l, &s) in &ix.s {
        if x[s.0] > 0.5 {
            report.switching.push(SwitchAction {
                action: Action::Open,
                kind: DeviceKind::Sectionalizer,
                device: net.lines[l].id.clone(),
                remote: remote(l),
            });
        }
    }
    for (&i, &b) in &ix.b {
        if x[b.0] > 0.5 {
            report.switching.push(SwitchAction {
                action: Action::Open,
                kind: DeviceKind::LoadBreaker,
                device: net.nodes[i].id.clone(),
                remote: false,
            });
        }
    }
    report
        .switching
        .sort_by(|a, b| a.action.cmp(&b.action).then(b.remote.cmp(&a.remote)).then(a.device.cmp(&b.device)));

    for &i in &case.outage_nodes {
        if !st.node_on[i] {
            report.isolated_nodes.push(net.nodes[i].id.clone());
        } else if !st.served[i] && ix.pd.contains_key(&(i, 0)) {
            report.rejected_loads.push(net.nodes[i].id.clone());
        }
    }
    for (&(i, _), &pc) in &ix.pcur {
        let p = x[pc.0].max(0.0);
        let prio = grid.node_data(i).map_or(1.0, |n| n.priority);
        report.ens += p;
        report.ens_weighted += prio * p;
    }
    report.current_deviation = ix.f_star.values().map(|v| x[v.0].max(0.0)).sum();

    for (r, reg) in grid.regulators.iter().enumerate() {
        let tap = st.taps[&r];
        let q = (reg.kind == RegulatorKind::Cb && case.cbs.contains(&r))
            .then(|| st.qcb.iter().map(|row| row[r]).collect());
        report.taps.push(TapSetting {
            kind: reg.kind,
            location: reg.location.clone(),
            tap,
            initial: reg.initial_tap(),
            ratio: (reg.kind != RegulatorKind::Cb).then_some(1.0 + tap as f64 * reg.sigma),
            q,
        });
    }
    for &d in &case.dgs {
        report.dgs.push(DgSeries {
            node: grid.dgs[d].node.clone(),
            p: st.pinj.iter().map(|row| row[d]).collect(),
            q: st.qinj.iter().map(|row| row[d]).collect(),
        });
    }
    for (j, v) in built.program.variables.iter().enumerate() {
        let alpha = ix.alpha.values().any(|a| a.0 == j);
        if v.kind.is_discrete() || v.implied_integral {
            report.plan.insert(v.name.clone(), x[j].round());
        } else if alpha {
            report.plan.insert(v.name.clone(), x[j]);
        }
    }
    report
}

fn y_is_tie(case: &RestorationCase, l: usize) -> bool {
    matches!(
        case.switch_role(l),
        Some(SwitchRole::Available) | Some(SwitchRole::InternalTie)
    )
}
