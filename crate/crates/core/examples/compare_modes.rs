//! Lexicographic against weighted-sum staging on the bundled variants.

use restoration::fixtures;
use restoration::runner::{self, RunConfig};
use restoration::topology::FaultSpec;

fn main() -> restoration::Result<()> {
    let fault = FaultSpec::new("1-2", 18, 19);
    let grids = [
        ("D12", fixtures::d12()),
        ("starved", fixtures::d12_starved()),
        ("priority", fixtures::d12_priority()),
    ];
    for (name, grid) in grids {
        let cmp = runner::compare_modes(&grid, &fault, &RunConfig::default())?;
        println!("{name}: plans identical {}", cmp.identical);
        println!("  lexicographic {:?}", cmp.lexicographic.stage_values);
        println!("  weighted      {:?}", cmp.weighted.stage_values);
        for d in &cmp.differences {
            println!("  {d}");
        }
    }
    Ok(())
}
