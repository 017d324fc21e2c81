//! Prints the assembled program for a small case: sizes, then the full
//! text listing of variables, rows, cones and objective terms.

use std::sync::Arc;

use restoration::builder::{assemble, BuildConfig};
use restoration::fixtures;
use restoration::topology::isolate_fault;

fn main() -> restoration::Result<()> {
    let grid = Arc::new(fixtures::d12());
    let case = isolate_fault(grid, "3-4", &[18])?;
    let built = assemble(&case, &BuildConfig::default())?;
    eprintln!("{:?}", built.program.stats());
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", built.program.to_text());
    Ok(())
}
