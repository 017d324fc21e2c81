use std::sync::Arc;

use proptest::prelude::*;

use restoration::builder::{assemble, BuildConfig};
use restoration::grid::parse_grid;
use restoration::runner::{self, Action, RunConfig};
use restoration::solver::round_tap;
use restoration::topology::isolate_fault;
use restoration::verify::{random_instance, RandomOptions};

proptest! {
    #[test]
    fn rounded_tap_is_nearest_and_in_range(ratio in -6.0f64..6.0, n in 1i64..8, tap0 in -2i64..=2) {
        let tap = round_tap(ratio, n, tap0);
        prop_assert!((-n..=n).contains(&tap));
        if ratio.abs() <= n as f64 {
            prop_assert!((tap as f64 - ratio).abs() <= 0.5 + 1e-12);
        } else {
            prop_assert_eq!(tap, ratio.signum() as i64 * n);
        }
    }

    #[test]
    fn random_grids_round_trip_through_json(seed in 0u64..10_000) {
        let inst = random_instance(seed, &RandomOptions::default());
        let text = inst.grid.to_json();
        let back = parse_grid(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        prop_assert!(inst.grid.nodes.len() <= 20);
    }

    #[test]
    fn assembly_is_deterministic(seed in 0u64..10_000) {
        let inst = random_instance(seed, &RandomOptions::default());
        let build = || {
            let case = isolate_fault(Arc::new(inst.grid.clone()), &inst.fault.faulted_line, &inst.fault.hours()).unwrap();
            assemble(&case, &BuildConfig::default()).unwrap().program.to_text()
        };
        prop_assert_eq!(build(), build());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solved_plans_are_consistent(seed in 10_000u64..20_000) {
        let inst = random_instance(seed, &RandomOptions::default());
        let r = runner::solve_case(&inst.grid, &inst.fault, &RunConfig::default()).unwrap();
        prop_assert!(r.solved());
        let v = r.verification.as_ref().unwrap();
        prop_assert!(v.radiality.pass, "{:?}", v.radiality.issues);
        prop_assert!(v.cone_residual_max <= 1e-5);
        prop_assert!(r.ens >= -1e-9);
        prop_assert!(r.ens_weighted + 1e-9 >= r.ens);
        // Opens first, and within each group remote before manual.
        let order: Vec<(Action, bool)> = r.switching.iter().map(|s| (s.action, !s.remote)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(order, sorted);
        // A load is reported either isolated or rejected, never both.
        for n in &r.isolated_nodes {
            prop_assert!(!r.rejected_loads.contains(n));
        }
    }
}
