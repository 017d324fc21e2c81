//! Zones, fault isolation and the restoration border.
//!
//! A zone is a connected set of nodes once every switched line is removed;
//! it is the smallest unit that can be energized. [`isolate_fault`] derives
//! the off-outage area, the available feeders and tie-switches and the node
//! and line sets the optimization model is built over.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, NodeKind, RegulatorKind};

pub type ZoneId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Zone {
    pub nodes: Vec<usize>,
    /// Unswitched lines with both endpoints in the zone.
    pub lines: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZonePartition {
    pub zones: Vec<Zone>,
    pub node_zone: Vec<ZoneId>,
    /// `None` for switched lines, which never lie inside a zone.
    pub line_zone: Vec<Option<ZoneId>>,
}

impl ZonePartition {
    /// Indicator A_{i,p}.
    pub fn node_in_zone(&self, node: usize, zone: ZoneId) -> bool {
        self.node_zone[node] == zone
    }

    /// Indicator A_{ij,p}.
    pub fn line_in_zone(&self, line: usize, zone: ZoneId) -> bool {
        self.line_zone[line] == Some(zone)
    }
}

/// Connected components of the network after deleting all switched lines.
/// Zones are numbered by their lowest node index.
pub fn compute_zones(grid: &Grid) -> ZonePartition {
    let net = grid.network();
    let n = net.node_count();
    let mut node_zone = vec![usize::MAX; n];
    let mut zones = Vec::new();
    for start in 0..n {
        if node_zone[start] != usize::MAX {
            continue;
        }
        let id = zones.len();
        let mut nodes = vec![start];
        node_zone[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(l, w) in net.incident(v) {
                if net.lines[l].is_switched() || node_zone[w] != usize::MAX {
                    continue;
                }
                node_zone[w] = id;
                nodes.push(w);
                queue.push_back(w);
            }
        }
        nodes.sort_unstable();
        zones.push(Zone {
            nodes,
            lines: Vec::new(),
        });
    }
    let line_zone: Vec<Option<ZoneId>> = net
        .lines
        .iter()
        .map(|l| (!l.is_switched()).then(|| node_zone[l.from]))
        .collect();
    for (l, z) in line_zone.iter().enumerate() {
        if let Some(z) = z {
            zones[*z].lines.push(l);
        }
    }
    ZonePartition {
        zones,
        node_zone,
        line_zone,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchRole {
    /// Tie with one end in the off-outage area and the other on a healthy feeder.
    Available,
    /// Tie with both ends in the off-outage area.
    InternalTie,
    /// Sectionalizer with both ends in the off-outage area.
    InternalSectionalizing,
}

fn default_horizon() -> [usize; 2] {
    [8, 22]
}

/// Fault description file: `{faulted_line, horizon: [start_hour, end_hour]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub faulted_line: String,
    /// Inclusive hour range of the restorative period.
    #[serde(default = "default_horizon")]
    pub horizon: [usize; 2],
}

impl FaultSpec {
    pub fn new(faulted_line: impl Into<String>, start_hour: usize, end_hour: usize) -> Self {
        Self {
            id: None,
            faulted_line: faulted_line.into(),
            horizon: [start_hour, end_hour],
        }
    }

    pub fn hours(&self) -> Vec<usize> {
        (self.horizon[0]..=self.horizon[1]).collect()
    }

    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.faulted_line.clone())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: FaultSpec = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        let specs: Vec<FaultSpec> =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        for s in &specs {
            s.check()?;
        }
        Ok(specs)
    }

    fn check(&self) -> Result<()> {
        let [a, b] = self.horizon;
        if a > b || b >= crate::grid::HOURS_PER_DAY {
            return Err(Error::Schema(format!(
                "horizon [{a}, {b}] must satisfy start <= end <= 23"
            )));
        }
        Ok(())
    }
}

/// Fault-derived sets the restoration model is built over. All indices
/// refer to the expanded [`crate::grid::Network`].
#[derive(Clone, Debug)]
pub struct RestorationCase {
    pub grid: Arc<Grid>,
    pub faulted_line: usize,
    pub horizon: Vec<usize>,
    pub zones: ZonePartition,
    /// N: healthy nodes of the faulted and available feeders.
    pub nodes: Vec<usize>,
    /// N*: off-outage nodes.
    pub outage_nodes: Vec<usize>,
    /// Z*: zones of the off-outage area.
    pub outage_zones: Vec<ZoneId>,
    /// W: healthy lines of the involved feeders, plus the operable ties.
    pub lines: Vec<usize>,
    /// W*: off-outage lines plus tie lines.
    pub outage_lines: Vec<usize>,
    pub available_ties: Vec<usize>,
    pub internal_ties: Vec<usize>,
    pub internal_sectionalizers: Vec<usize>,
    pub virtual_sources: Vec<usize>,
    /// Nodes inside the faulted zone (only when the faulted line carries no switch).
    pub dead_nodes: Vec<usize>,
    /// Switched lines opened to isolate the fault (not counted as restoration actions).
    pub isolation_switches: Vec<usize>,
    pub faulted_feeder: usize,
    pub available_feeders: Vec<usize>,
    /// Substation nodes in N.
    pub substations: Vec<usize>,
    /// Regulator indices of the OLTCs at available-feeder substations.
    pub oltcs: Vec<usize>,
    pub svrs: Vec<usize>,
    pub cbs: Vec<usize>,
    /// Indices into `grid.dgs`.
    pub dgs: Vec<usize>,
    in_nodes: Vec<bool>,
    in_outage: Vec<bool>,
    in_lines: Vec<bool>,
    in_outage_lines: Vec<bool>,
    roles: Vec<Option<SwitchRole>>,
}

impl RestorationCase {
    pub fn contains_node(&self, node: usize) -> bool {
        self.in_nodes[node]
    }

    pub fn is_outage(&self, node: usize) -> bool {
        self.in_outage[node]
    }

    pub fn contains_line(&self, line: usize) -> bool {
        self.in_lines[line]
    }

    pub fn is_outage_line(&self, line: usize) -> bool {
        self.in_outage_lines[line]
    }

    pub fn switch_role(&self, line: usize) -> Option<SwitchRole> {
        self.roles[line]
    }

    /// W_S in line-index order.
    pub fn switched_lines(&self) -> Vec<usize> {
        self.outage_lines
            .iter()
            .copied()
            .filter(|&l| self.roles[l].is_some())
            .collect()
    }

    pub fn no_restoration_path(&self) -> bool {
        self.available_ties.is_empty()
    }

    pub fn node_id(&self, node: usize) -> &str {
        &self.grid.network().nodes[node].id
    }

    pub fn line_id(&self, line: usize) -> &str {
        &self.grid.network().lines[line].id
    }
}

/// Opens the switches enclosing `faulted_line` and derives the restoration border.
pub fn isolate_fault(grid: Arc<Grid>, faulted_line: &str, horizon: &[usize]) -> Result<RestorationCase> {
    let net = grid.network();
    let n = net.node_count();
    let f = net.line(faulted_line).ok_or_else(|| Error::UnknownId {
        kind: "line",
        id: faulted_line.to_string(),
    })?;
    let fl = &net.lines[f];
    if fl.is_tie() {
        return Err(Error::Fault(format!("`{faulted_line}` is a tie line")));
    }
    if let Some(&h) = horizon.iter().find(|&&h| h >= crate::grid::HOURS_PER_DAY) {
        return Err(Error::Fault(format!("horizon hour {h} outside 0..24")));
    }
    let zones = compute_zones(&grid);

    // Pre-fault feeders: components of the closed-line graph.
    let mut feeder_of = vec![usize::MAX; n];
    for s in (0..n).filter(|&v| net.nodes[v].kind == NodeKind::Substation) {
        let mut queue = VecDeque::from([s]);
        feeder_of[s] = s;
        while let Some(v) = queue.pop_front() {
            for &(l, w) in net.incident(v) {
                if net.lines[l].normally_closed() && feeder_of[w] == usize::MAX {
                    feeder_of[w] = s;
                    queue.push_back(w);
                }
            }
        }
    }
    let faulted_feeder = feeder_of[fl.from];
    if faulted_feeder == usize::MAX {
        return Err(Error::Fault(format!("`{faulted_line}` is not on an energized feeder")));
    }

    let mut dead = vec![false; n];
    let mut removed = vec![false; net.line_count()];
    let mut isolation_switches = Vec::new();
    removed[f] = true;
    if fl.is_switched() {
        isolation_switches.push(f);
    } else {
        let z = zones.node_zone[fl.from];
        for &v in &zones.zones[z].nodes {
            dead[v] = true;
        }
        for &v in &zones.zones[z].nodes {
            for &(l, _) in net.incident(v) {
                if !removed[l] {
                    removed[l] = true;
                    if net.lines[l].is_switched() && net.lines[l].normally_closed() {
                        isolation_switches.push(l);
                    }
                }
            }
        }
        isolation_switches.sort_unstable();
        if let Some(s) = zones.zones[z]
            .nodes
            .iter()
            .find(|&&v| net.nodes[v].kind == NodeKind::Substation)
        {
            return Err(Error::Fault(format!(
                "fault on `{faulted_line}` isolates substation `{}`",
                net.nodes[*s].id
            )));
        }
    }

    // What the faulted feeder's substation still reaches.
    let mut reached = vec![false; n];
    reached[faulted_feeder] = true;
    let mut queue = VecDeque::from([faulted_feeder]);
    while let Some(v) = queue.pop_front() {
        for &(l, w) in net.incident(v) {
            if removed[l] || !net.lines[l].normally_closed() || dead[w] || reached[w] {
                continue;
            }
            reached[w] = true;
            queue.push_back(w);
        }
    }
    let in_outage: Vec<bool> = (0..n)
        .map(|v| feeder_of[v] == faulted_feeder && !dead[v] && !reached[v])
        .collect();

    let mut roles = vec![None; net.line_count()];
    let mut available_ties = Vec::new();
    let mut internal_ties = Vec::new();
    let mut internal_sectionalizers = Vec::new();
    let mut virtual_sources = BTreeSet::new();
    for (k, l) in net.lines.iter().enumerate() {
        if removed[k] || !l.is_switched() {
            continue;
        }
        let (a, b) = (in_outage[l.from], in_outage[l.to]);
        if l.is_tie() {
            if a && b {
                roles[k] = Some(SwitchRole::InternalTie);
                internal_ties.push(k);
            } else if a != b {
                let other = if a { l.to } else { l.from };
                if !dead[other] && feeder_of[other] != usize::MAX {
                    roles[k] = Some(SwitchRole::Available);
                    available_ties.push(k);
                    virtual_sources.insert(other);
                }
            }
        } else if a && b {
            roles[k] = Some(SwitchRole::InternalSectionalizing);
            internal_sectionalizers.push(k);
        }
    }
    let available_feeders: BTreeSet<usize> =
        virtual_sources.iter().map(|&v| feeder_of[v]).collect();

    let in_nodes: Vec<bool> = (0..n)
        .map(|v| {
            !dead[v]
                && feeder_of[v] != usize::MAX
                && (feeder_of[v] == faulted_feeder || available_feeders.contains(&feeder_of[v]))
        })
        .collect();
    let mut in_lines = vec![false; net.line_count()];
    let mut in_outage_lines = vec![false; net.line_count()];
    for (k, l) in net.lines.iter().enumerate() {
        if removed[k] || !in_nodes[l.from] || !in_nodes[l.to] {
            continue;
        }
        if l.normally_closed() || roles[k].is_some() {
            in_lines[k] = true;
        }
        if (in_outage[l.from] && in_outage[l.to] && l.normally_closed()) || roles[k].is_some() {
            in_outage_lines[k] = true;
        }
    }
    let pick = |mask: &[bool]| -> Vec<usize> { (0..mask.len()).filter(|&i| mask[i]).collect() };
    let nodes = pick(&in_nodes);
    let outage_nodes = pick(&in_outage);
    let outage_zones: Vec<ZoneId> = outage_nodes
        .iter()
        .map(|&v| zones.node_zone[v])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let substations: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&v| net.nodes[v].kind == NodeKind::Substation)
        .collect();
    let oltcs = available_feeders
        .iter()
        .filter_map(|&s| grid.oltc_at(s))
        .collect();
    let svrs = net
        .lines
        .iter()
        .enumerate()
        .filter(|(k, _)| in_lines[*k])
        .filter_map(|(_, l)| l.ratio_link)
        .collect();
    let cbs = grid
        .regulators
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == RegulatorKind::Cb)
        .filter(|(_, r)| net.node(&r.location).is_some_and(|v| in_nodes[v]))
        .map(|(k, _)| k)
        .collect();
    let dgs = grid
        .dgs
        .iter()
        .enumerate()
        .filter(|(_, d)| net.node(&d.node).is_some_and(|v| in_nodes[v]))
        .map(|(k, _)| k)
        .collect();

    Ok(RestorationCase {
        faulted_line: f,
        horizon: horizon.to_vec(),
        lines: pick(&in_lines),
        outage_lines: pick(&in_outage_lines),
        nodes,
        outage_nodes,
        outage_zones,
        available_ties,
        internal_ties,
        internal_sectionalizers,
        virtual_sources: virtual_sources.into_iter().collect(),
        dead_nodes: pick(&dead),
        isolation_switches,
        faulted_feeder,
        available_feeders: available_feeders.into_iter().collect(),
        substations,
        oltcs,
        svrs,
        cbs,
        dgs,
        zones,
        in_nodes,
        in_outage,
        in_lines,
        in_outage_lines,
        roles,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_grid;

    fn chain(switched: &[&str]) -> Grid {
        let sw = |id: &str| {
            if switched.contains(&id) {
                r#", "switch": {"kind": "sectionalizing", "weight": 1.0}"#
            } else {
                ""
            }
        };
        let doc = format!(
            r#"{{"nodes": [{{"id": "1", "kind": "substation"}}, {{"id": "2", "kind": "junction"}}, {{"id": "3", "kind": "junction"}}],
                "lines": [
                  {{"id": "1-2", "from": "1", "to": "2", "r": 0.01, "x": 0.01, "f_max": 1, "f_thr": 0.5{}}},
                  {{"id": "2-3", "from": "2", "to": "3", "r": 0.01, "x": 0.01, "f_max": 1, "f_thr": 0.5{}}}]}}"#,
            sw("1-2"),
            sw("2-3")
        );
        parse_grid(&doc).unwrap()
    }

    #[test]
    fn unswitched_chain_is_one_zone() {
        let z = compute_zones(&chain(&[]));
        assert_eq!(z.zones.len(), 1);
        assert_eq!(z.zones[0].nodes, vec![0, 1, 2]);
        assert_eq!(z.zones[0].lines, vec![0, 1]);
    }

    #[test]
    fn one_cut_gives_two_zones() {
        let z = compute_zones(&chain(&["2-3"]));
        assert_eq!(z.zones.len(), 2);
        assert_eq!(z.zones[0].nodes, vec![0, 1]);
        assert_eq!(z.zones[1].nodes, vec![2]);
        assert_eq!(z.line_zone, vec![Some(0), None]);
        assert!(z.node_in_zone(2, 1) && !z.line_in_zone(1, 1));
    }

    #[test]
    fn fault_on_zone_containing_substation_is_reported() {
        let g = Arc::new(chain(&["2-3"]));
        let err = isolate_fault(g, "1-2", &[8]).unwrap_err();
        assert!(err.to_string().contains("isolates substation"), "{err}");
    }

    #[test]
    fn fault_spec_parsing() {
        let s = FaultSpec::parse(r#"{"faulted_line": "1-2"}"#).unwrap();
        assert_eq!(s.hours().len(), 15);
        assert!(FaultSpec::parse(r#"{"faulted_line": "1-2", "horizon": [9, 8]}"#).is_err());
        assert!(FaultSpec::parse(r#"{"line": "1-2"}"#).is_err());
    }
}
