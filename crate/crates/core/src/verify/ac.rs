//! Exact branch-flow re-simulation of a fixed plan.
//!
//! Topology, taps, load connection, DG dispatch and capacitor output are
//! taken from the solution; voltages, flows and losses are recomputed with
//! a backward/forward sweep that keeps the `(r^2 + x^2) l` voltage term and
//! the voltage-dependent loads.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::NodeKind;
use crate::state::RestorationState;
use crate::topology::RestorationCase;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the `(r^2 + x^2) l` term of the voltage drop. Without it the
    /// sweep solves the optimization model's own linear drop, which isolates
    /// the error of the cone relaxation from that of the drop approximation.
    pub quadratic_drop: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            quadratic_drop: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcReport {
    /// Max |V_solver - V_exact| over energized nodes, in p.u. magnitude.
    pub voltage_mismatch: f64,
    /// Max |p|, |q| difference at the `from` end of energized lines.
    pub flow_mismatch: f64,
    /// Max difference of the squared current.
    pub current_mismatch: f64,
    pub worst_node: Option<String>,
    pub worst_hour: Option<usize>,
    pub iterations: usize,
    /// Exact voltage magnitudes, `[step][node]`.
    pub voltages: Vec<Vec<f64>>,
}

/// Energized trees of one step: BFS order and the line to each node's parent.
struct Forest {
    order: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
    root: Vec<usize>,
}

fn forest(state: &RestorationState, case: &RestorationCase) -> Result<Forest> {
    let net = case.grid.network();
    let n = net.node_count();
    let mut parent = vec![None; n];
    let mut root = vec![usize::MAX; n];
    let mut order = Vec::new();
    for &s in case.substations.iter().filter(|&&s| state.node_on[s]) {
        root[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(l, w) in net.incident(u) {
                if !case.contains_line(l) || !state.line_on[l] || root[w] != usize::MAX {
                    continue;
                }
                root[w] = s;
                parent[w] = Some((l, u));
                queue.push_back(w);
            }
        }
    }
    if let Some(&i) = case.nodes.iter().find(|&&i| state.node_on[i] && root[i] == usize::MAX) {
        return Err(Error::Verification(format!(
            "energized node {} is not connected to a substation",
            net.nodes[i].id
        )));
    }
    Ok(Forest { order, parent, root })
}

/// Runs the sweep at every step and compares with the solver values.
pub fn resimulate_ac(state: &RestorationState, case: &RestorationCase, opts: &SweepOptions) -> Result<AcReport> {
    let grid = case.grid.as_ref();
    let net = grid.network();
    let n = net.node_count();
    let fr = forest(state, case)?;
    let quad = if opts.quadratic_drop { 1.0 } else { 0.0 };
    let mut rep = AcReport::default();

    let dg_node: Vec<(usize, usize)> = case
        .dgs
        .iter()
        .map(|&d| (d, net.node(&grid.dgs[d].node).expect("validated")))
        .collect();
    let cb_node: Vec<(usize, usize)> = case
        .cbs
        .iter()
        .map(|&r| (r, net.node(&grid.regulators[r].location).expect("validated")))
        .collect();

    for t in 0..state.steps() {
        let mut v = vec![0.0; n];
        for &i in &fr.order {
            v[i] = state.v[t][fr.root[i]];
        }
        // Fixed injections.
        let mut gen_p = vec![0.0; n];
        let mut gen_q = vec![0.0; n];
        for &(d, i) in &dg_node {
            gen_p[i] += state.pinj[t][d];
            gen_q[i] += state.qinj[t][d];
        }
        for &(r, i) in &cb_node {
            gen_q[i] += state.qcb[t][r];
        }

        let mut send_p = vec![0.0; n];
        let mut send_q = vec![0.0; n];
        let mut ell = vec![0.0; n];
        let mut converged = false;
        let mut change = f64::INFINITY;
        for it in 1..=opts.max_iter {
            // Backward: power entering each node from its parent.
            let mut acc_p = vec![0.0; n];
            let mut acc_q = vec![0.0; n];
            for &i in fr.order.iter().rev() {
                let (kp, kq) = grid.node_data(i).map_or((0.0, 0.0), |d| (d.kp, d.kq));
                let (lp, lq) = if state.served[i] {
                    (
                        state.p0[t][i] * (1.0 + kp / 2.0 * (v[i] - 1.0)),
                        state.q0[t][i] * (1.0 + kq / 2.0 * (v[i] - 1.0)),
                    )
                } else {
                    (0.0, 0.0)
                };
                let pr = acc_p[i] + lp - gen_p[i];
                let qr = acc_q[i] + lq - gen_q[i];
                if let Some((l, u)) = fr.parent[i] {
                    let line = &net.lines[l];
                    let cur = if v[i] > 0.0 { (pr * pr + qr * qr) / v[i] } else { 0.0 };
                    ell[i] = cur;
                    send_p[i] = pr + line.r * cur;
                    send_q[i] = qr + line.x * cur;
                    acc_p[u] += send_p[i];
                    acc_q[u] += send_q[i];
                }
            }
            // Forward: voltages from the roots down.
            change = 0.0f64;
            for &i in &fr.order {
                let Some((l, u)) = fr.parent[i] else { continue };
                let line = &net.lines[l];
                let new = match line.ratio_link {
                    Some(r) => {
                        let reg = &grid.regulators[r];
                        let k = 1.0 + 2.0 * reg.sigma * state.taps[&r] as f64;
                        if u == line.from {
                            v[u] * k
                        } else {
                            v[u] / k
                        }
                    }
                    None => {
                        // Written with the flow at the `from` end, as in the model.
                        let z2 = quad * (line.r * line.r + line.x * line.x) * ell[i];
                        if u == line.from {
                            v[u] - 2.0 * (line.r * send_p[i] + line.x * send_q[i]) + z2
                        } else {
                            let (pf, qf) = (line.r * ell[i] - send_p[i], line.x * ell[i] - send_q[i]);
                            v[u] + 2.0 * (line.r * pf + line.x * qf) - z2
                        }
                    }
                };
                change = change.max((new - v[i]).abs());
                v[i] = new;
            }
            rep.iterations = rep.iterations.max(it);
            if change < opts.tol {
                converged = true;
                break;
            }
            if !change.is_finite() || v.iter().any(|x| *x < 0.0) {
                break;
            }
        }
        if !converged {
            return Err(Error::SweepDiverged {
                iterations: opts.max_iter,
                last_change: change,
            });
        }

        let mut mags = vec![0.0; n];
        for &i in &fr.order {
            mags[i] = v[i].sqrt();
            if net.nodes[i].kind == NodeKind::Substation {
                continue;
            }
            let d = (mags[i] - state.v[t][i].max(0.0).sqrt()).abs();
            if d > rep.voltage_mismatch {
                rep.voltage_mismatch = d;
                rep.worst_node = Some(net.nodes[i].id.clone());
                rep.worst_hour = Some(state.hours[t]);
            }
            if let Some((l, u)) = fr.parent[i] {
                let line = &net.lines[l];
                // Solver flows are measured at `from`, positive towards `to`.
                let (pf, qf) = if u == line.from {
                    (send_p[i], send_q[i])
                } else {
                    (-(send_p[i] - line.r * ell[i]), -(send_q[i] - line.x * ell[i]))
                };
                let fm = (pf - state.p[t][l]).abs().max((qf - state.q[t][l]).abs());
                rep.flow_mismatch = rep.flow_mismatch.max(fm);
                rep.current_mismatch = rep.current_mismatch.max((ell[i] - state.f[t][l]).abs());
            }
        }
        rep.voltages.push(mags);
    }
    Ok(rep)
}
