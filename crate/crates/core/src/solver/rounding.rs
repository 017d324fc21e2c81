//! Snapping relaxed OLTC ratios to their tap grid.

use super::lexicographic::evaluate_plan;
use super::relaxation::Fixings;
use super::{Solution, SolverConfig};
use crate::builder::BuiltProgram;
use crate::error::{Error, Result};
use crate::topology::RestorationCase;

/// Nearest tap to a relaxed position `ratio = alpha / sigma`, clamped to
/// `[-n, n]`. An exact half rounds toward the pre-fault tap `tap0`.
pub fn round_tap(ratio: f64, n: i64, tap0: i64) -> i64 {
    let lo = ratio.floor();
    let frac = ratio - lo;
    let lo = lo as i64;
    let tap = if (frac - 0.5).abs() < 1e-9 {
        if (lo - tap0).abs() <= (lo + 1 - tap0).abs() {
            lo
        } else {
            lo + 1
        }
    } else {
        ratio.round() as i64
    };
    tap.clamp(-n, n)
}

/// The other neighbouring tap of `ratio`, used when the nearest one fails.
fn second_tap(ratio: f64, nearest: i64, n: i64) -> i64 {
    let other = if ratio >= nearest as f64 { nearest + 1 } else { nearest - 1 };
    if (-n..=n).contains(&other) {
        other
    } else {
        (nearest - (other - nearest)).clamp(-n, n)
    }
}

/// Rounds every free OLTC ratio, fixes all discrete variables and re-solves
/// the continuous stages on the original program. Falls back to the
/// second-nearest tap of one regulator at a time, then of all of them.
pub fn round_oltc_taps(
    solution: &Solution,
    built: &BuiltProgram,
    case: &RestorationCase,
    config: &SolverConfig,
) -> Result<Solution> {
    let program = &built.program;
    let mut plan = Fixings::new();
    for (j, v) in program.variables.iter().enumerate() {
        if v.kind.is_discrete() || v.implied_integral {
            plan.fix(crate::program::VarId(j), solution.x[j].round().clamp(v.lower, v.upper));
        }
    }
    let grid = case.grid.as_ref();
    // (alpha var, sigma, nearest, second)
    let mut oltc = Vec::new();
    for (&r, &a) in &built.index.alpha {
        let var = program.var(a);
        if var.is_fixed() {
            continue;
        }
        let reg = &grid.regulators[r];
        let n = i64::from(reg.n_steps);
        let ratio = solution.x[a.0] / reg.sigma;
        let tap0 = reg.initial_tap();
        let nearest = round_tap(ratio, n, tap0);
        oltc.push((a, reg.sigma, nearest, second_tap(ratio, nearest, n)));
    }

    let mut attempts: Vec<Vec<i64>> = vec![oltc.iter().map(|o| o.2).collect()];
    for k in 0..oltc.len() {
        let mut t: Vec<i64> = oltc.iter().map(|o| o.2).collect();
        t[k] = oltc[k].3;
        attempts.push(t);
    }
    if oltc.len() > 1 {
        attempts.push(oltc.iter().map(|o| o.3).collect());
    }
    let mut tried = Vec::new();
    for taps in attempts {
        let mut fx = plan.clone();
        for (o, &tap) in oltc.iter().zip(&taps) {
            fx.fix(o.0, tap as f64 * o.1);
        }
        let eval = evaluate_plan(program, &fx, config)?;
        if eval.feasible {
            let mut out = solution.clone();
            out.x = eval.x;
            out.stage_values = eval.stage_values;
            if !oltc.is_empty() {
                out.log.notes.push(format!("OLTC taps {taps:?}"));
            }
            return Ok(out);
        }
        tried.push(taps);
    }
    Err(Error::Solver(format!(
        "continuous re-solve infeasible for every rounded OLTC setting tried: {tried:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_taps() {
        assert_eq!(round_tap(3.84, 4, 0), 4);
        assert_eq!(round_tap(2.75, 4, 0), 3);
        assert_eq!(round_tap(-5.2, 4, 0), -4);
        assert_eq!(round_tap(1.0, 4, 1), 1);
    }

    #[test]
    fn half_rounds_toward_initial_tap() {
        assert_eq!(round_tap(2.5, 4, 0), 2);
        assert_eq!(round_tap(2.5, 4, 4), 3);
        assert_eq!(round_tap(-1.5, 4, 0), -1);
        assert_eq!(round_tap(-1.5, 4, -3), -2);
    }

    #[test]
    fn second_choice_stays_in_range() {
        assert_eq!(second_tap(3.84, 4, 4), 3);
        assert_eq!(second_tap(2.75, 3, 4), 2);
        assert_eq!(second_tap(2.2, 2, 4), 3);
    }
}
