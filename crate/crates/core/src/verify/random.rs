//! Seeded random test systems for the oracle and radiality suites.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, GridDocument, GridLimits, Line, Node, NodeKind, Regulator, RegulatorKind, Switch, SwitchKind};
use crate::topology::{isolate_fault, FaultSpec};

/// Line classes as `(r, x, f_max)`.
const LINE_CLASSES: [(f64, f64, f64); 3] = [(0.003, 0.006, 3.0), (0.008, 0.012, 2.0), (0.015, 0.02, 1.5)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomOptions {
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub max_ties: usize,
    /// Upper bound on switched lines of the off-outage area.
    pub max_switches: usize,
    /// Lower bound on switched lines of the off-outage area.
    pub min_switches: usize,
    /// Upper bound on load nodes of the off-outage area.
    pub max_outage_loads: usize,
    pub horizon: [usize; 2],
}

impl Default for RandomOptions {
    fn default() -> Self {
        Self {
            min_nodes: 6,
            max_nodes: 20,
            max_ties: 3,
            max_switches: 10,
            min_switches: 3,
            max_outage_loads: 12,
            horizon: [18, 19],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub seed: u64,
    pub grid: Grid,
    pub fault: FaultSpec,
}

fn node(id: usize, kind: NodeKind) -> Node {
    Node {
        id: id.to_string(),
        kind,
        base_load_p: 0.0,
        base_load_q: 0.0,
        kp: 0.0,
        kq: 0.0,
        priority: 1.0,
        breaker_weight: 1.0,
        profile: None,
        rating: None,
    }
}

fn switch(rng: &mut ChaCha8Rng, kind: SwitchKind) -> Switch {
    let remote = rng.gen_bool(0.5);
    Switch {
        kind,
        remote,
        weight: if remote { 1.0 } else { 2.0 },
        normally_open: kind == SwitchKind::Tie,
    }
}

fn draw_grid(rng: &mut ChaCha8Rng, opts: &RandomOptions) -> GridDocument {
    let feeders = rng.gen_range(2..=3);
    let total = rng.gen_range(opts.min_nodes.max(3 * feeders)..=opts.max_nodes);
    // Every feeder gets a substation and at least two more nodes.
    let mut sizes = vec![3usize; feeders];
    for _ in 0..total - 3 * feeders {
        let f = rng.gen_range(0..feeders);
        sizes[f] += 1;
    }

    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for &size in &sizes {
        let base = nodes.len() + 1;
        let mut ids = vec![base];
        nodes.push(node(base, NodeKind::Substation));
        for k in 1..size {
            let id = base + k;
            let mut n = node(id, NodeKind::Load);
            n.base_load_p = rng.gen_range(0.01..=0.2);
            n.base_load_q = n.base_load_p * rng.gen_range(0.3..=0.6);
            n.kp = rng.gen_range(0.0..=1.0);
            n.kq = rng.gen_range(0.0..=1.0);
            if rng.gen_bool(0.2) {
                n.priority = 10.0;
            }
            nodes.push(n);
            let parent = ids[rng.gen_range(k.saturating_sub(3)..k)];
            let (r, x, f_max) = LINE_CLASSES[rng.gen_range(0..LINE_CLASSES.len())];
            let switched = k == 1 || rng.gen_bool(0.4);
            lines.push(Line {
                id: format!("{parent}-{id}"),
                from: parent.to_string(),
                to: id.to_string(),
                r,
                x,
                f_max,
                f_thr: f_max / 2.0,
                switch: switched.then(|| switch(rng, SwitchKind::Sectionalizing)),
                is_virtual_regulator_link: false,
            });
            ids.push(id);
        }
        members.push(ids);
    }

    let ties = rng.gen_range(1..=opts.max_ties);
    let mut used = std::collections::BTreeSet::new();
    for _ in 0..ties {
        let a = rng.gen_range(0..feeders);
        let mut b = rng.gen_range(0..feeders - 1);
        if b >= a {
            b += 1;
        }
        let u = *members[a][1..].choose(rng).expect("feeders have load nodes");
        let v = *members[b][1..].choose(rng).expect("feeders have load nodes");
        if !used.insert((u.min(v), u.max(v))) {
            continue;
        }
        let (r, x, f_max) = LINE_CLASSES[rng.gen_range(0..LINE_CLASSES.len())];
        lines.push(Line {
            id: format!("T{u}-{v}"),
            from: u.to_string(),
            to: v.to_string(),
            r,
            x,
            f_max,
            f_thr: f_max / 2.0,
            switch: Some(switch(rng, SwitchKind::Tie)),
            is_virtual_regulator_link: false,
        });
    }

    let mut regulators = Vec::new();
    if rng.gen_bool(0.5) {
        let loads: Vec<usize> = members.iter().flat_map(|m| m[1..].iter().copied()).collect();
        regulators.push(Regulator {
            kind: RegulatorKind::Cb,
            location: loads.choose(rng).expect("load nodes exist").to_string(),
            sigma: 0.0,
            n_steps: rng.gen_range(1..=2),
            initial: 0.0,
            dq_step: 0.05,
            zp: [0.0; 2],
            zs: [0.0; 2],
        });
    }
    GridDocument {
        nodes,
        lines,
        regulators,
        dgs: Vec::new(),
        limits: GridLimits::default(),
        profiles: BTreeMap::new(),
    }
}

/// Draws grids until one has a fault whose off-outage area is reachable
/// through a tie and small enough for exhaustive enumeration. The same seed
/// always gives the same instance.
pub fn random_instance(seed: u64, opts: &RandomOptions) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours: Vec<usize> = (opts.horizon[0]..=opts.horizon[1]).collect();
    loop {
        let doc = draw_grid(&mut rng, opts);
        let grid = match Grid::from_document(doc) {
            Ok(g) => Arc::new(g),
            Err(e) => {
                log::debug!("discarding random grid: {e}");
                continue;
            }
        };
        let mut order: Vec<usize> = (0..grid.network().line_count())
            .filter(|&l| !grid.network().lines[l].is_tie())
            .collect();
        order.shuffle(&mut rng);
        for l in order {
            let id = grid.network().lines[l].id.clone();
            let Ok(case) = isolate_fault(grid.clone(), &id, &hours) else { continue };
            let loads = case
                .outage_nodes
                .iter()
                .filter(|&&i| grid.network().nodes[i].kind == NodeKind::Load)
                .count();
            if case.outage_nodes.is_empty()
                || case.available_ties.is_empty()
                || case.switched_lines().len() > opts.max_switches
                || case.switched_lines().len() < opts.min_switches
                || loads > opts.max_outage_loads
            {
                continue;
            }
            let grid = Arc::try_unwrap(grid).unwrap_or_else(|g| (*g).clone());
            let mut fault = FaultSpec::new(id, opts.horizon[0], opts.horizon[1]);
            fault.id = Some(format!("R{seed}"));
            return RandomInstance { seed, grid, fault };
        }
    }
}
