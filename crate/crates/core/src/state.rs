//! Network-level view of a solution vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::builder::VariableIndex;
use crate::grid::RegulatorKind;
use crate::topology::RestorationCase;

/// Values are indexed `[step][network index]`; entries outside the
/// restoration case are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationState {
    pub hours: Vec<usize>,
    pub node_on: Vec<bool>,
    pub line_on: Vec<bool>,
    /// Load connected (L = 1) or outside the off-outage area.
    pub served: Vec<bool>,
    pub y: BTreeMap<usize, f64>,
    pub s: BTreeMap<usize, f64>,
    pub b: BTreeMap<usize, f64>,
    pub v: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub pd: Vec<Vec<f64>>,
    pub qd: Vec<Vec<f64>>,
    pub pcur: Vec<Vec<f64>>,
    pub qcur: Vec<Vec<f64>>,
    /// Demand at 1 p.u. voltage, as seen by the load model.
    pub p0: Vec<Vec<f64>>,
    pub q0: Vec<Vec<f64>>,
    /// `[step][dg]`
    pub pinj: Vec<Vec<f64>>,
    pub qinj: Vec<Vec<f64>>,
    /// `[step][regulator]`
    pub qcb: Vec<Vec<f64>>,
    /// Tap position per regulator index (OLTC ratio in steps of sigma).
    pub taps: BTreeMap<usize, i64>,
    /// Relaxed or rounded OLTC ratio offset per regulator index.
    pub alpha: BTreeMap<usize, f64>,
}

impl RestorationState {
    pub fn extract(case: &RestorationCase, ix: &VariableIndex, x: &[f64]) -> Self {
        let grid = case.grid.as_ref();
        let net = grid.network();
        let (nn, nl, steps) = (net.node_count(), net.line_count(), ix.steps());
        let at = |v: crate::program::VarId| x[v.0];
        let mut node_on = vec![false; nn];
        for &i in &case.nodes {
            node_on[i] = ix.x_node.get(&i).is_none_or(|&v| at(v) > 0.5);
        }
        let mut line_on = vec![false; nl];
        for &l in &case.lines {
            line_on[l] = ix.x_line_expr(l).eval(x) > 0.5;
        }
        let mut served = vec![false; nn];
        for &i in &case.nodes {
            served[i] = ix.l.get(&i).is_none_or(|&v| at(v) > 0.5);
        }
        let grab = |m: &BTreeMap<usize, crate::program::VarId>| m.iter().map(|(&k, &v)| (k, at(v))).collect();
        let timed = |m: &BTreeMap<(usize, usize), crate::program::VarId>, width: usize| {
            let mut out = vec![vec![0.0; width]; steps];
            for (&(k, t), &v) in m {
                out[t][k] = at(v);
            }
            out
        };
        let mut p0 = vec![vec![0.0; nn]; steps];
        let mut q0 = vec![vec![0.0; nn]; steps];
        for (&(i, t), &(p, q)) in &ix.nominal {
            p0[t][i] = p;
            q0[t][i] = q;
        }
        let mut taps = BTreeMap::new();
        let mut alpha = BTreeMap::new();
        for (&r, &a) in &ix.alpha {
            let reg = &grid.regulators[r];
            alpha.insert(r, at(a));
            taps.insert(r, (at(a) / reg.sigma).round() as i64);
        }
        for (&r, &d) in &ix.tap {
            taps.insert(r, at(d).round() as i64);
        }
        // Regulators outside the case keep their pre-fault setting.
        for (r, reg) in grid.regulators.iter().enumerate() {
            if let std::collections::btree_map::Entry::Vacant(e) = taps.entry(r) {
                e.insert(reg.initial_tap());
                if reg.kind == RegulatorKind::Oltc {
                    alpha.insert(r, reg.initial);
                }
            }
        }
        Self {
            hours: ix.hours.clone(),
            node_on,
            line_on,
            served,
            y: grab(&ix.y),
            s: grab(&ix.s),
            b: grab(&ix.b),
            v: timed(&ix.v, nn),
            f: timed(&ix.f, nl),
            p: timed(&ix.p, nl),
            q: timed(&ix.q, nl),
            pd: timed(&ix.pd, nn),
            qd: timed(&ix.qd, nn),
            pcur: timed(&ix.pcur, nn),
            qcur: timed(&ix.qcur, nn),
            p0,
            q0,
            pinj: timed(&ix.pinj, grid.dgs.len()),
            qinj: timed(&ix.qinj, grid.dgs.len()),
            qcb: timed(&ix.qcb, grid.regulators.len()),
            taps,
            alpha,
        }
    }

    pub fn steps(&self) -> usize {
        self.hours.len()
    }

    /// Served active power at node `i`, step `t`.
    pub fn served_p(&self, i: usize, t: usize) -> f64 {
        self.pd[t][i] - self.pcur[t][i]
    }

    pub fn served_q(&self, i: usize, t: usize) -> f64 {
        self.qd[t][i] - self.qcur[t][i]
    }
}
