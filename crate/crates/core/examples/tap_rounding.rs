//! Snapping relaxed OLTC ratios to tap positions and the error of the
//! linear ratio model used for squared voltages.

use restoration::fixtures;
use restoration::runner::{self, RunConfig};
use restoration::solver::round_tap;

fn main() -> restoration::Result<()> {
    let (sigma, n) = (0.00625, 4);
    for ratio in [3.84, 2.75, 2.5, -1.2, 5.3] {
        println!("relaxed {ratio:+.2} sigma -> tap {:+}", round_tap(ratio, n, 0));
    }
    println!("tap  (1+k s)^2   1+2 k s   error");
    for k in -n..=n {
        let exact = (1.0 + k as f64 * sigma).powi(2);
        let linear = 1.0 + 2.0 * k as f64 * sigma;
        println!("{k:+}   {exact:.6}   {linear:.6}   {:.2e}", (exact - linear).abs());
    }

    let report = runner::solve_case(&fixtures::d12(), &fixtures::d12_fault_1_2(), &RunConfig::default())?;
    println!("D12 fault 1-2 settings: {}", report.settings());
    Ok(())
}
