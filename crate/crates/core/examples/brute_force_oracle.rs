//! Branch-and-bound against exhaustive enumeration on seeded random systems.
//!
//! Usage: `cargo run --release --example brute_force_oracle -- [first_seed] [count]`

use restoration::runner::{self, RunConfig};
use restoration::verify::{random_instance, RandomOptions};

fn main() -> restoration::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("seed"));
    let first = args.next().unwrap_or(0);
    let count = args.next().unwrap_or(5);
    let config = RunConfig::default();
    for seed in first..first + count {
        let inst = random_instance(seed, &RandomOptions::default());
        let c = runner::compare_with_oracle(&inst.grid, &inst.fault, &config)?;
        println!(
            "seed {seed:>4}: {:>2} nodes, fault {:<6} solver {:.2} s / oracle {:.2} s ({} candidates, {} solved) gaps {:?} same plan {}",
            inst.grid.nodes.len(),
            inst.fault.faulted_line,
            c.report.wall_time,
            c.oracle_time,
            c.candidates,
            c.evaluated,
            c.gaps,
            c.same_plan
        );
    }
    Ok(())
}
