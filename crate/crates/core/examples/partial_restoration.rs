//! A capacity-limited restoring feeder: part of the off-outage area stays
//! dark, cut off by a sectionalizer rather than by load breakers.

use restoration::fixtures;
use restoration::runner::{self, RunConfig};
use restoration::topology::FaultSpec;

fn main() -> restoration::Result<()> {
    env_logger::init();
    let fault = FaultSpec::new("1-2", 18, 19);
    let report = runner::solve_case(&fixtures::d12_starved(), &fault, &RunConfig::default())?;
    println!("{}", report.summary_line());
    println!("isolated nodes: {:?}", report.isolated_nodes);
    println!("rejected loads: {:?}", report.rejected_loads);
    println!("ENS {:.4} p.u.h, priority-weighted {:.4}", report.ens, report.ens_weighted);

    // Same grid with priorities raised at the isolated nodes.
    let mut config = RunConfig::default();
    for id in &report.isolated_nodes {
        config.priorities.insert(id.clone(), 50.0);
    }
    let favoured = runner::solve_case(&fixtures::d12_starved(), &fault, &config)?;
    println!("with priority 50 on {:?}: {}", report.isolated_nodes, favoured.summary_line());
    Ok(())
}
