//! Full-day restoration of the 12-node test system after a fault on 1-2.

use restoration::{fixtures, runner};

fn main() -> restoration::Result<()> {
    env_logger::init();
    let report = runner::solve_case(&fixtures::d12(), &fixtures::d12_fault_1_2(), &Default::default())?;
    println!("{}", report.summary_line());
    println!("isolation switches: {:?}", report.isolation);
    for action in &report.switching {
        println!("  {}", action.describe());
    }
    for tap in &report.taps {
        println!("  {:?} at {}: tap {} (was {})", tap.kind, tap.location, tap.tap, tap.initial);
    }
    for dg in &report.dgs {
        let p: Vec<String> = dg.p.iter().map(|p| format!("{p:.3}")).collect();
        println!("  DG {} P: {}", dg.node, p.join(" "));
    }
    println!("stage values: {:?}", report.stage_values);
    Ok(())
}
