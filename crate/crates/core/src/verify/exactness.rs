//! Tightness of the current cones at a solution.

use serde::{Deserialize, Serialize};

use crate::state::RestorationState;
use crate::topology::RestorationCase;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeResidual {
    pub line: String,
    pub hour: usize,
    /// `F V_from - (p^2 + q^2)`.
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConeAudit {
    pub tol: f64,
    pub max_residual: f64,
    pub min_residual: f64,
    /// Lines whose cone is slack by more than `tol`, or violated by more than `tol`.
    pub flagged: Vec<ConeResidual>,
    pub checked: usize,
}

impl ConeAudit {
    pub fn pass(&self) -> bool {
        self.flagged.is_empty()
    }

    /// Largest absolute residual.
    pub fn worst(&self) -> f64 {
        self.max_residual.abs().max(self.min_residual.abs())
    }
}

/// Residual of every energized line and step.
pub fn check_cone_exactness(state: &RestorationState, case: &RestorationCase, tol: f64) -> ConeAudit {
    let net = case.grid.network();
    let mut audit = ConeAudit {
        tol,
        ..Default::default()
    };
    for t in 0..state.steps() {
        for &l in case.lines.iter().filter(|&&l| state.line_on[l]) {
            let line = &net.lines[l];
            let (f, p, q) = (state.f[t][l], state.p[t][l], state.q[t][l]);
            let residual = f * state.v[t][line.from] - (p * p + q * q);
            audit.checked += 1;
            audit.max_residual = audit.max_residual.max(residual);
            audit.min_residual = audit.min_residual.min(residual);
            if residual.abs() > tol {
                audit.flagged.push(ConeResidual {
                    line: line.id.clone(),
                    hour: state.hours[t],
                    residual,
                });
            }
        }
    }
    audit
}
