//! Graph check of the energized configuration.

use serde::{Deserialize, Serialize};

use crate::grid::{NodeKind, UnionFind};
use crate::state::RestorationState;
use crate::topology::{RestorationCase, SwitchRole};

/// Tolerance on quantities that must vanish in de-energized parts.
pub const ISOLATION_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolatedComponent {
    pub nodes: Vec<String>,
    /// Largest |F|, |p| or |q| on lines touching the component.
    pub flow_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialityReport {
    pub pass: bool,
    pub issues: Vec<String>,
    pub offending_lines: Vec<String>,
    pub isolated: Vec<IsolatedComponent>,
    pub energized_nodes: usize,
    pub energized_lines: usize,
    pub sources: usize,
}

/// Energized lines form a forest, each tree holding exactly one substation;
/// de-energized parts carry no flow, no voltage, no served load and no
/// operated device.
pub fn check_radiality(state: &RestorationState, case: &RestorationCase) -> RadialityReport {
    let grid = case.grid.as_ref();
    let net = grid.network();
    let mut rep = RadialityReport::default();
    let mut uf = UnionFind::new(net.node_count());
    let steps = state.steps();

    for &l in &case.lines {
        let line = &net.lines[l];
        if state.line_on[l] {
            rep.energized_lines += 1;
            if !state.node_on[line.from] || !state.node_on[line.to] {
                rep.issues.push(format!("energized line {} touches a dead node", line.id));
                rep.offending_lines.push(line.id.clone());
            }
            if !uf.union(line.from, line.to) {
                rep.issues.push(format!("closing {} creates a loop", line.id));
                rep.offending_lines.push(line.id.clone());
            }
        } else {
            let flow = (0..steps)
                .map(|t| state.f[t][l].abs().max(state.p[t][l].abs()).max(state.q[t][l].abs()))
                .fold(0.0, f64::max);
            if flow > ISOLATION_TOL {
                rep.issues.push(format!("open line {} carries flow {flow:.3e}", line.id));
                rep.offending_lines.push(line.id.clone());
            }
            if state.y.get(&l).is_some_and(|&y| y > ISOLATION_TOL) {
                rep.issues.push(format!("open line {} has Y = 1", line.id));
                rep.offending_lines.push(line.id.clone());
            }
        }
    }

    let mut sources_in = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for &i in &case.nodes {
        if state.node_on[i] {
            rep.energized_nodes += 1;
            let root = uf.find(i);
            let entry = sources_in.entry(root).or_default();
            if net.nodes[i].kind == NodeKind::Substation {
                entry.push(i);
            }
        }
    }
    for subs in sources_in.values() {
        match subs.len() {
            1 => rep.sources += 1,
            0 => rep.issues.push("an energized component has no source".into()),
            k => rep.issues.push(format!(
                "an energized component holds {k} sources: {}",
                subs.iter().map(|&s| net.nodes[s].id.as_str()).collect::<Vec<_>>().join(", ")
            )),
        }
    }
    if rep.energized_lines + rep.sources != rep.energized_nodes && rep.issues.is_empty() {
        rep.issues.push(format!(
            "{} energized lines for {} nodes and {} sources",
            rep.energized_lines, rep.energized_nodes, rep.sources
        ));
    }

    // Isolated areas.
    let mut dead_uf = UnionFind::new(net.node_count());
    for &l in &case.lines {
        let line = &net.lines[l];
        if !state.node_on[line.from] && !state.node_on[line.to] && net.lines[l].normally_closed() {
            dead_uf.union(line.from, line.to);
        }
    }
    let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for &i in &case.nodes {
        if !state.node_on[i] {
            groups.entry(dead_uf.find(i)).or_default().push(i);
            let v = (0..steps).map(|t| state.v[t][i].abs()).fold(0.0, f64::max);
            if v > ISOLATION_TOL {
                rep.issues.push(format!("dead node {} has voltage {v:.3e}", net.nodes[i].id));
            }
            let served = (0..steps)
                .map(|t| state.served_p(i, t).abs().max(state.served_q(i, t).abs()))
                .fold(0.0, f64::max);
            if served > ISOLATION_TOL {
                rep.issues.push(format!("dead node {} serves load {served:.3e}", net.nodes[i].id));
            }
            if state.b.get(&i).is_some_and(|&b| b > ISOLATION_TOL) {
                rep.issues.push(format!("breaker of dead node {} is operated", net.nodes[i].id));
            }
        }
    }
    for (&l, &s) in &state.s {
        let line = &net.lines[l];
        if case.switch_role(l) == Some(SwitchRole::InternalSectionalizing)
            && !state.node_on[line.from]
            && !state.node_on[line.to]
            && s > ISOLATION_TOL
        {
            rep.issues.push(format!("switch {} inside an isolated area is operated", line.id));
            rep.offending_lines.push(line.id.clone());
        }
    }
    for nodes in groups.into_values() {
        let flow_norm = nodes
            .iter()
            .flat_map(|&i| net.incident(i).iter().map(|&(l, _)| l))
            .filter(|&l| case.contains_line(l))
            .flat_map(|l| (0..steps).map(move |t| (l, t)))
            .map(|(l, t)| state.f[t][l].abs().max(state.p[t][l].abs()).max(state.q[t][l].abs()))
            .fold(0.0, f64::max);
        rep.isolated.push(IsolatedComponent {
            nodes: nodes.iter().map(|&i| net.nodes[i].id.clone()).collect(),
            flow_norm,
        });
    }
    rep.offending_lines.sort();
    rep.offending_lines.dedup();
    rep.pass = rep.issues.is_empty();
    rep
}
