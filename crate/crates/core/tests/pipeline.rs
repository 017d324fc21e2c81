use restoration::fixtures;
use restoration::runner::{self, Action, RestorationReport, RunConfig};
use restoration::solver::{SolveStatus, StageMode};
use restoration::topology::FaultSpec;
use restoration::Error;

fn two_hours(line: &str) -> FaultSpec {
    FaultSpec::new(line, 18, 19)
}

#[test]
fn d12_report_round_trips_through_json() {
    let report = runner::solve_case(&fixtures::d12(), &two_hours("1-2"), &RunConfig::default()).unwrap();
    assert_eq!(report.status, SolveStatus::Optimal);
    assert!(report.verified(), "{}", report.verdict());
    assert_eq!(report.hours, vec![18, 19]);
    assert_eq!(report.isolation, vec!["1-2".to_string()]);
    let back = RestorationReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn d12_fault_1_2_closes_the_tie_and_serves_everything() {
    let report = runner::solve_case(&fixtures::d12(), &two_hours("1-2"), &RunConfig::default()).unwrap();
    assert_eq!(report.switching.len(), 1);
    assert_eq!(report.switching[0].device, "6-7");
    assert_eq!(report.switching[0].action, Action::Close);
    assert!(report.ens.abs() < 1e-6);
    assert!(report.isolated_nodes.is_empty() && report.rejected_loads.is_empty());
    assert!(report.summary_line().contains("Close tie 6-7"));
}

#[test]
fn opens_are_listed_before_closes() {
    let report = runner::solve_case(&fixtures::d12_starved(), &two_hours("1-2"), &RunConfig::default()).unwrap();
    let actions: Vec<Action> = report.switching.iter().map(|s| s.action).collect();
    let mut sorted = actions.clone();
    sorted.sort();
    assert_eq!(actions, sorted);
    assert!(actions.contains(&Action::Open) && actions.contains(&Action::Close));
}

#[test]
fn saved_plan_re_evaluates_to_the_same_values() {
    let config = RunConfig::default();
    let fault = two_hours("1-2");
    let report = runner::solve_case(&fixtures::d12_starved(), &fault, &config).unwrap();
    let again = runner::verify_plan(&fixtures::d12_starved(), &fault, &report.plan, &config).unwrap();
    assert!(again.verified());
    assert_eq!(again.switching, report.switching);
    for (a, b) in again.stage_values.iter().zip(&report.stage_values).take(3) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn unknown_plan_variable_is_rejected() {
    let mut plan = std::collections::BTreeMap::new();
    plan.insert("Y[no-such-line]".to_string(), 1.0);
    let err = runner::verify_plan(&fixtures::d12(), &two_hours("1-2"), &plan, &RunConfig::default()).unwrap_err();
    assert!(matches!(err, Error::UnknownId { .. }));
}

#[test]
fn batch_skips_duplicates_and_writes_table() {
    let mut faults = fixtures::d12_faults();
    faults.push(faults[0].clone());
    let batch = runner::run_batch(&fixtures::d12(), &faults, &RunConfig::default()).unwrap();
    assert_eq!(batch.reports.len(), 3);
    assert_eq!(batch.warnings.len(), 1);
    let csv = batch.table_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "Simulation scenario,Fault location,Sequence of switching,ENS (p.u.),Total current deviation (p.u.),\
         Optimal setting of voltage regulation devices,Computation time (sec),Verification"
    );
    let ids: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["F1", "F2", "F3"]);
}

#[test]
fn empty_batch_is_an_error() {
    assert!(runner::run_batch(&fixtures::d12(), &[], &RunConfig::default()).is_err());
}

#[test]
fn unknown_faulted_line_is_an_error() {
    assert!(runner::solve_case(&fixtures::d12(), &two_hours("1-12"), &RunConfig::default()).is_err());
}

#[test]
fn config_file_and_priority_overrides() {
    let config = RunConfig::parse(r#"{"solver": {"mode": "weighted"}, "priorities": {"2": 5.0}}"#).unwrap();
    assert_eq!(config.solver.mode, StageMode::Weighted);
    let grid = config.apply(&fixtures::d12()).unwrap();
    let n2 = grid.network().node("2").unwrap();
    assert_eq!(grid.node_data(n2).unwrap().priority, 5.0);

    let bad = RunConfig::parse(r#"{"priorities": {"99": 1.0}}"#).unwrap();
    assert!(bad.apply(&fixtures::d12()).is_err());
    assert!(RunConfig::parse("{not json").is_err());
}

#[test]
fn modes_agree_on_d12() {
    let cmp = runner::compare_modes(&fixtures::d12(), &two_hours("3-4"), &RunConfig::default()).unwrap();
    assert!(cmp.identical, "{:?}", cmp.differences);
    assert_eq!(cmp.lexicographic.mode, StageMode::Lexicographic);
    assert_eq!(cmp.weighted.mode, StageMode::Weighted);
}

#[test]
fn files_on_disk_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    let fault = dir.path().join("fault.json");
    let config = dir.path().join("config.json");
    std::fs::write(&grid, fixtures::d12().to_json()).unwrap();
    std::fs::write(&fault, serde_json::to_string(&two_hours("3-4")).unwrap()).unwrap();
    std::fs::write(&config, "{}").unwrap();
    let report = runner::run(&grid, &fault, Some(&config)).unwrap();
    assert!(report.verified());

    let faults = dir.path().join("faults.json");
    std::fs::write(&faults, fixtures::D12_FAULTS_JSON).unwrap();
    let batch = runner::run_batch_files(&grid, &faults, None).unwrap();
    assert_eq!(batch.reports.len(), 3);
}
