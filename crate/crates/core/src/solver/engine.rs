//! Continuous conic engine contract and the embedded interior-point backend.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

/// Cone block of a [`StandardForm`], in row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeBlock {
    Zero(usize),
    Nonnegative(usize),
    /// `(t, x)` with `||x|| <= t`; the dimension counts `t`.
    SecondOrder(usize),
}

/// `min c'x  s.t.  A x + s = b,  s in K`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StandardForm {
    pub n: usize,
    pub c: Vec<f64>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeBlock>,
}

impl StandardForm {
    pub fn m(&self) -> usize {
        self.b.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineResult {
    pub status: EngineStatus,
    pub x: Vec<f64>,
    pub iterations: u32,
}

pub trait ConicEngine: Send + Sync {
    fn name(&self) -> &str;

    /// Solves `form`. `attempt` > 0 asks for alternative settings after a failure.
    fn solve(&self, form: &StandardForm, attempt: usize) -> EngineResult;

    /// Number of alternative setting profiles available.
    fn attempts(&self) -> usize {
        1
    }
}

/// Primal-dual interior-point engine backed by the `clarabel` crate.
#[derive(Clone, Debug)]
pub struct ClarabelEngine {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelEngine {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iter: 200,
        }
    }
}

impl ConicEngine for ClarabelEngine {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn attempts(&self) -> usize {
        3
    }

    fn solve(&self, form: &StandardForm, attempt: usize) -> EngineResult {
        let n = form.n;
        let p = CscMatrix::<f64>::zeros((n, n));
        let a = CscMatrix::new_from_triplets(
            form.m(),
            n,
            form.rows.clone(),
            form.cols.clone(),
            form.vals.clone(),
        );
        let cones: Vec<SupportedConeT<f64>> = form
            .cones
            .iter()
            .map(|c| match *c {
                ConeBlock::Zero(k) => SupportedConeT::ZeroConeT(k),
                ConeBlock::Nonnegative(k) => SupportedConeT::NonnegativeConeT(k),
                ConeBlock::SecondOrder(k) => SupportedConeT::SecondOrderConeT(k),
            })
            .collect();
        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tolerance)
            .tol_gap_rel(self.tolerance)
            .tol_feas(self.tolerance);
        match attempt {
            0 => {}
            1 => {
                // Tighter stopping rule for answers whose residual was not trusted.
                builder
                    .max_iter(2 * self.max_iter)
                    .tol_gap_abs(self.tolerance * 1e-2)
                    .tol_gap_rel(self.tolerance * 1e-2)
                    .tol_feas(self.tolerance * 1e-2)
                    .tol_ktratio(1e-9);
            }
            _ => {
                builder
                    .max_iter(2 * self.max_iter)
                    .equilibrate_enable(false)
                    .static_regularization_constant(1e-7)
                    .tol_gap_abs(self.tolerance * 10.0)
                    .tol_gap_rel(self.tolerance * 10.0)
                    .tol_feas(self.tolerance * 10.0);
            }
        }
        let settings = builder.build().expect("valid settings");
        let mut solver = match DefaultSolver::new(&p, &form.c, &a, &form.b, &cones, settings) {
            Ok(s) => s,
            Err(_) => {
                return EngineResult {
                    status: EngineStatus::NumericFailure,
                    x: vec![0.0; n],
                    iterations: 0,
                }
            }
        };
        solver.solve();
        let status = match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => EngineStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => EngineStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => EngineStatus::Unbounded,
            _ => EngineStatus::NumericFailure,
        };
        EngineResult {
            status,
            x: solver.solution.x.clone(),
            iterations: solver.solution.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_socp() {
        // min -x - y  s.t. ||(x, y)|| <= 1
        let form = StandardForm {
            n: 2,
            c: vec![-1.0, -1.0],
            rows: vec![1, 2],
            cols: vec![0, 1],
            vals: vec![-1.0, -1.0],
            b: vec![1.0, 0.0, 0.0],
            cones: vec![ConeBlock::SecondOrder(3)],
        };
        let r = ClarabelEngine::default().solve(&form, 0);
        assert_eq!(r.status, EngineStatus::Optimal);
        let h = 0.5f64.sqrt();
        assert!((r.x[0] - h).abs() < 1e-7 && (r.x[1] - h).abs() < 1e-7);
    }
}
