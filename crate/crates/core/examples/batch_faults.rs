//! Runs the bundled fault list and prints the summary table as CSV.

use restoration::fixtures;
use restoration::runner::{self, RunConfig};

fn main() -> restoration::Result<()> {
    env_logger::init();
    let batch = runner::run_batch(&fixtures::d12(), &fixtures::d12_faults(), &RunConfig::default())?;
    for w in &batch.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", batch.table_csv());
    Ok(())
}
