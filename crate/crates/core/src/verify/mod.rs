//! Independent checks of a restoration plan: graph radiality, cone
//! tightness, exact AC re-simulation and exhaustive enumeration.

mod ac;
mod brute;
mod exactness;
mod radiality;
pub mod random;

use serde::{Deserialize, Serialize};

pub use ac::{resimulate_ac, AcReport, SweepOptions};
pub use brute::{brute_force, BruteBest, BruteCaps, BruteForceResult};
pub use exactness::{check_cone_exactness, ConeAudit, ConeResidual};
pub use radiality::{check_radiality, IsolatedComponent, RadialityReport, ISOLATION_TOL};
pub use random::{random_instance, RandomInstance, RandomOptions};

use crate::builder::BuiltProgram;
use crate::solver::Solution;
use crate::state::RestorationState;
use crate::topology::RestorationCase;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub cone_tol: f64,
    /// Largest accepted voltage mismatch against the AC sweep, p.u.
    pub ac_tol: f64,
    pub sweep: SweepOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            cone_tol: 1e-5,
            ac_tol: 5e-4,
            sweep: SweepOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcSummary {
    pub voltage_mismatch: f64,
    pub flow_mismatch: f64,
    pub current_mismatch: f64,
    pub iterations: usize,
    /// Voltage mismatch against a sweep using the model's linear voltage drop.
    pub model_voltage_mismatch: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub radiality: RadialityReport,
    pub cone_residual_max: f64,
    pub cone_flagged: Vec<ConeResidual>,
    /// `None` when the sweep failed; the reason is in `ac_error`.
    pub ac: Option<AcSummary>,
    pub ac_error: Option<String>,
    /// Relative objective gap to exhaustive enumeration, per stage, when run.
    pub oracle_gap: Option<Vec<f64>>,
    pub cone_tol: f64,
    pub ac_tol: f64,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.radiality.pass
            && self.cone_flagged.is_empty()
            && self.ac.as_ref().is_some_and(|a| a.voltage_mismatch <= self.ac_tol)
    }

    /// One-word verdict and the failing checks.
    pub fn verdict(&self) -> String {
        if self.pass() {
            return "pass".into();
        }
        let mut parts = Vec::new();
        if !self.radiality.pass {
            parts.push("radiality");
        }
        if !self.cone_flagged.is_empty() {
            parts.push("cone");
        }
        if !self.ac.as_ref().is_some_and(|a| a.voltage_mismatch <= self.ac_tol) {
            parts.push("ac");
        }
        format!("fail({})", parts.join("+"))
    }
}

/// Runs the radiality, cone and AC checks on a solved plan.
pub fn verify_solution(built: &BuiltProgram, case: &RestorationCase, solution: &Solution, opts: &VerifyOptions) -> VerificationReport {
    let state = RestorationState::extract(case, &built.index, &solution.x);
    verify_state(&state, case, opts)
}

pub fn verify_state(state: &RestorationState, case: &RestorationCase, opts: &VerifyOptions) -> VerificationReport {
    let radiality = check_radiality(state, case);
    let cones = check_cone_exactness(state, case, opts.cone_tol);
    let linear = SweepOptions {
        quadratic_drop: false,
        ..opts.sweep
    };
    let model = resimulate_ac(state, case, &linear).ok().map(|r| r.voltage_mismatch);
    let (ac, ac_error) = match resimulate_ac(state, case, &opts.sweep) {
        Ok(r) => (
            Some(AcSummary {
                voltage_mismatch: r.voltage_mismatch,
                flow_mismatch: r.flow_mismatch,
                current_mismatch: r.current_mismatch,
                iterations: r.iterations,
                model_voltage_mismatch: model,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    VerificationReport {
        radiality,
        cone_residual_max: cones.worst(),
        cone_flagged: cones.flagged,
        ac,
        ac_error,
        oracle_gap: None,
        cone_tol: opts.cone_tol,
        ac_tol: opts.ac_tol,
    }
}

/// Relative difference `|a - b| / max(1, |b|)` per stage.
pub fn stage_gaps(solver: &[f64], oracle: &[f64]) -> Vec<f64> {
    solver
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::builder::{assemble, BuildConfig};
    use crate::error::Error;
    use crate::grid::parse_grid;
    use crate::solver::{solve, SolveStatus, SolverConfig};
    use crate::topology::isolate_fault;

    /// Feeders 1-2-3 and 4-5-6 with ties 3-6 and 2-5.
    const TWO_FEEDERS: &str = r#"{
      "nodes": [
        {"id": "1", "kind": "substation"},
        {"id": "2", "kind": "load", "base_load_p": 0.1, "base_load_q": 0.05, "kp": 0.5, "kq": 0.5},
        {"id": "3", "kind": "load", "base_load_p": 0.15, "base_load_q": 0.05},
        {"id": "4", "kind": "substation"},
        {"id": "5", "kind": "load", "base_load_p": 0.1, "base_load_q": 0.04},
        {"id": "6", "kind": "load", "base_load_p": 0.05, "base_load_q": 0.02}
      ],
      "lines": [
        {"id": "1-2", "from": "1", "to": "2", "r": 0.01, "x": 0.02, "f_max": 2.0, "f_thr": 1.0,
         "switch": {"kind": "sectionalizing", "remote": false, "weight": 1.0, "normally_open": false}},
        {"id": "2-3", "from": "2", "to": "3", "r": 0.01, "x": 0.02, "f_max": 2.0, "f_thr": 1.0,
         "switch": {"kind": "sectionalizing", "remote": true, "weight": 0.5, "normally_open": false}},
        {"id": "4-5", "from": "4", "to": "5", "r": 0.01, "x": 0.02, "f_max": 2.0, "f_thr": 1.0},
        {"id": "5-6", "from": "5", "to": "6", "r": 0.01, "x": 0.02, "f_max": 2.0, "f_thr": 1.0},
        {"id": "3-6", "from": "3", "to": "6", "r": 0.01, "x": 0.02, "f_max": 2.0, "f_thr": 1.0,
         "switch": {"kind": "tie", "remote": true, "weight": 0.5, "normally_open": true}},
        {"id": "2-5", "from": "2", "to": "5", "r": 0.02, "x": 0.03, "f_max": 2.0, "f_thr": 1.0,
         "switch": {"kind": "tie", "remote": false, "weight": 1.0, "normally_open": true}}
      ]
    }"#;

    fn solved() -> (RestorationCase, BuiltProgram, crate::solver::Solution) {
        let grid = Arc::new(parse_grid(TWO_FEEDERS).unwrap());
        let case = isolate_fault(grid, "1-2", &[18]).unwrap();
        let built = assemble(&case, &BuildConfig::default()).unwrap();
        let sol = solve(&built, &case, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        (case, built, sol)
    }

    fn line(case: &RestorationCase, id: &str) -> usize {
        case.grid.network().line(id).unwrap()
    }

    #[test]
    fn solved_plan_passes_every_check() {
        let (case, built, sol) = solved();
        let rep = verify_solution(&built, &case, &sol, &VerifyOptions::default());
        assert!(rep.pass(), "{}", rep.verdict());
        assert!(rep.cone_residual_max <= 1e-6);
        let ac = rep.ac.unwrap();
        assert!(ac.model_voltage_mismatch.unwrap() <= 1e-5);
        assert!(ac.iterations >= 2);
    }

    #[test]
    fn inflated_current_is_flagged() {
        let (case, built, sol) = solved();
        let mut st = RestorationState::extract(&case, &built.index, &sol.x);
        let l = *case.lines.iter().find(|&&l| st.line_on[l]).unwrap();
        st.f[0][l] += 0.01;
        let audit = check_cone_exactness(&st, &case, 1e-5);
        assert!(!audit.pass());
        assert_eq!(audit.flagged[0].line, case.grid.network().lines[l].id);
    }

    #[test]
    fn closing_both_ties_breaks_radiality() {
        let (case, built, sol) = solved();
        let mut st = RestorationState::extract(&case, &built.index, &sol.x);
        for id in ["3-6", "2-5", "2-3"] {
            let l = line(&case, id);
            st.line_on[l] = true;
            st.y.insert(l, 1.0);
        }
        let rep = check_radiality(&st, &case);
        assert!(!rep.pass);
        assert!(!rep.issues.is_empty());
    }

    #[test]
    fn unreachable_energized_node_fails_the_sweep() {
        let (case, built, sol) = solved();
        let mut st = RestorationState::extract(&case, &built.index, &sol.x);
        for id in ["3-6", "2-5"] {
            st.line_on[line(&case, id)] = false;
        }
        assert!(matches!(resimulate_ac(&st, &case, &SweepOptions::default()), Err(Error::Verification(_))));
        assert!(!check_radiality(&st, &case).pass);
    }

    #[test]
    fn sweep_without_load_is_flat() {
        let (case, built, sol) = solved();
        let mut st = RestorationState::extract(&case, &built.index, &sol.x);
        for row in st.p0.iter_mut().chain(st.q0.iter_mut()) {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        let rep = resimulate_ac(&st, &case, &SweepOptions::default()).unwrap();
        let net = case.grid.network();
        for &i in case.nodes.iter().filter(|&&i| st.node_on[i]) {
            assert!((rep.voltages[0][i] - 1.0).abs() < 1e-12, "node {}", net.nodes[i].id);
        }
    }

    #[test]
    fn oracle_matches_branch_and_bound() {
        let (case, built, sol) = solved();
        let cfg = SolverConfig::default();
        let res = brute_force(&built, &case, &BruteCaps::default(), &cfg).unwrap();
        assert_eq!(res.switch_configs, 8);
        let best = res.best.unwrap();
        let key: Vec<f64> = sol.discrete_plan(&built.program).iter().map(|p| p.1).collect();
        assert_eq!(best.key, key);
        for g in stage_gaps(&sol.stage_values, &best.stage_values) {
            assert!(g <= 1e-6);
        }
    }

    #[test]
    fn graph_filter_keeps_the_optimum() {
        let (case, built, _) = solved();
        let cfg = SolverConfig::default();
        let on = brute_force(&built, &case, &BruteCaps::default(), &cfg).unwrap();
        let caps = BruteCaps {
            filter: false,
            ..BruteCaps::default()
        };
        let off = brute_force(&built, &case, &caps, &cfg).unwrap();
        assert!(on.valid_configs < off.valid_configs);
        assert_eq!(on.best.unwrap().key, off.best.unwrap().key);
    }

    #[test]
    fn candidate_cap_is_enforced() {
        let (case, built, _) = solved();
        let caps = BruteCaps {
            max_combos: 2,
            ..BruteCaps::default()
        };
        let err = brute_force(&built, &case, &caps, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn random_instances_are_reproducible() {
        let opts = RandomOptions::default();
        let a = random_instance(7, &opts);
        let b = random_instance(7, &opts);
        assert_eq!(a.grid.to_json(), b.grid.to_json());
        assert_eq!(a.fault, b.fault);
        assert_ne!(random_instance(8, &opts).grid.to_json(), a.grid.to_json());
    }
}
