//! Re-simulates a plan with a backward/forward sweep, once with the exact
//! voltage drop and once with the optimization model's linear one.

use std::sync::Arc;

use restoration::builder::{assemble, BuildConfig};
use restoration::fixtures;
use restoration::solver::{solve, SolverConfig};
use restoration::state::RestorationState;
use restoration::topology::isolate_fault;
use restoration::verify::{check_cone_exactness, resimulate_ac, SweepOptions};

fn main() -> restoration::Result<()> {
    let grid = Arc::new(fixtures::d12());
    let case = isolate_fault(grid, "1-2", &[18, 19])?;
    let built = assemble(&case, &BuildConfig::default())?;
    let solution = solve(&built, &case, &SolverConfig::default())?;
    let state = RestorationState::extract(&case, &built.index, &solution.x);

    let cones = check_cone_exactness(&state, &case, 1e-5);
    println!("{} cones checked, worst residual {:.2e}", cones.checked, cones.worst());

    for quadratic_drop in [true, false] {
        let opts = SweepOptions {
            quadratic_drop,
            ..SweepOptions::default()
        };
        let ac = resimulate_ac(&state, &case, &opts)?;
        println!(
            "quadratic drop {quadratic_drop}: voltage mismatch {:.2e} p.u. at node {:?} hour {:?}, flow {:.2e}, current {:.2e}, {} iterations",
            ac.voltage_mismatch, ac.worst_node, ac.worst_hour, ac.flow_mismatch, ac.current_mismatch, ac.iterations
        );
    }
    Ok(())
}
