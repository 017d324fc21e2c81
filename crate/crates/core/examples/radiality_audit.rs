//! Radiality check of a solved plan, then of a tampered copy with an extra
//! closed tie.

use std::sync::Arc;

use restoration::builder::{assemble, BuildConfig};
use restoration::fixtures;
use restoration::solver::{solve, SolverConfig};
use restoration::state::RestorationState;
use restoration::topology::isolate_fault;
use restoration::verify::check_radiality;

fn main() -> restoration::Result<()> {
    let grid = Arc::new(fixtures::d12_twin_ties());
    let case = isolate_fault(grid, "1-2", &[18, 19])?;
    let built = assemble(&case, &BuildConfig::default())?;
    let solution = solve(&built, &case, &SolverConfig::default())?;
    let mut state = RestorationState::extract(&case, &built.index, &solution.x);

    let report = check_radiality(&state, &case);
    println!(
        "solved plan: pass {} ({} nodes, {} lines, {} sources)",
        report.pass, report.energized_nodes, report.energized_lines, report.sources
    );

    for id in ["6-7", "6-7b"] {
        let l = case.grid.network().line(id).expect("tie exists");
        state.line_on[l] = true;
        state.y.insert(l, 1.0);
    }
    let report = check_radiality(&state, &case);
    println!("both ties closed: pass {}", report.pass);
    for issue in &report.issues {
        println!("  {issue}");
    }
    Ok(())
}
