//! Static network description: nodes, lines, switches, voltage regulators,
//! distributed generators, limits and hourly load profiles.
//!
//! Everything is in per-unit on a 1 MVA base. A [`Grid`] is immutable once
//! built; step voltage regulators are expanded at construction time into an
//! impedance line followed by an ideal ratio link (see [`Network`]), so the
//! downstream model only ever sees ordinary lines plus ratio links.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero_pair(z: &[f64; 2]) -> bool {
    z[0] == 0.0 && z[1] == 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Substation,
    Load,
    Junction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Active demand at 1 p.u. voltage before the profile multiplier.
    #[serde(default)]
    pub base_load_p: f64,
    #[serde(default)]
    pub base_load_q: f64,
    #[serde(default)]
    pub kp: f64,
    #[serde(default)]
    pub kq: f64,
    /// Importance factor of the load.
    #[serde(default = "one")]
    pub priority: f64,
    /// Operation weight of the implicit load breaker.
    #[serde(default = "one")]
    pub breaker_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// Optional apparent-power rating of a substation transformer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    Sectionalizing,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switch {
    pub kind: SwitchKind,
    #[serde(default)]
    pub remote: bool,
    pub weight: f64,
    #[serde(default)]
    pub normally_open: bool,
}

impl Switch {
    pub fn is_tie(&self) -> bool {
        self.kind == SwitchKind::Tie
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    pub f_max: f64,
    pub f_thr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<Switch>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_virtual_regulator_link: bool,
}

impl Line {
    /// Closed in the pre-fault configuration.
    pub fn normally_closed(&self) -> bool {
        self.switch.as_ref().is_none_or(|s| !s.normally_open)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegulatorKind {
    #[serde(rename = "OLTC")]
    Oltc,
    #[serde(rename = "SVR")]
    Svr,
    #[serde(rename = "CB")]
    Cb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regulator {
    pub kind: RegulatorKind,
    /// Node id for OLTC and CB, line id for SVR.
    pub location: String,
    /// Ratio change per tap step (OLTC, SVR).
    #[serde(default)]
    pub sigma: f64,
    pub n_steps: u32,
    /// Pre-fault ratio offset for an OLTC, pre-fault tap position otherwise.
    #[serde(default)]
    pub initial: f64,
    /// Reactive power per step (CB).
    #[serde(default)]
    pub dq_step: f64,
    #[serde(default, skip_serializing_if = "is_zero_pair")]
    pub zp: [f64; 2],
    #[serde(default, skip_serializing_if = "is_zero_pair")]
    pub zs: [f64; 2],
}

impl Regulator {
    /// Pre-fault tap index. For an OLTC this is the nearest step to `initial / sigma`.
    pub fn initial_tap(&self) -> i64 {
        match self.kind {
            RegulatorKind::Oltc => (self.initial / self.sigma).round() as i64,
            _ => self.initial.round() as i64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dg {
    pub node: String,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub s_max: f64,
}

/// Per-constraint-class big-M multipliers. `None` means "derive from the grid".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BigMPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volt: Option<f64>,
    #[serde(default = "BigMPolicy::default_generic")]
    pub generic: f64,
    /// Multiplier of the energization row `Y <= M * F`.
    #[serde(default = "BigMPolicy::default_energize")]
    pub energize: f64,
}

impl BigMPolicy {
    fn default_generic() -> f64 {
        1e3
    }

    fn default_energize() -> f64 {
        1e6
    }
}

impl Default for BigMPolicy {
    fn default() -> Self {
        Self {
            flow: None,
            volt: None,
            generic: Self::default_generic(),
            energize: Self::default_energize(),
        }
    }
}

/// Big-M constants after defaults are filled in from the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BigM {
    pub flow: f64,
    pub volt: f64,
    pub generic: f64,
    pub energize: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLimits {
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub big_m_policy: BigMPolicy,
}

impl Default for GridLimits {
    fn default() -> Self {
        Self {
            v_min: 0.917,
            v_max: 1.050,
            big_m_policy: BigMPolicy::default(),
        }
    }
}

/// Serialized form of a grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDocument {
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub regulators: Vec<Regulator>,
    #[serde(default)]
    pub dgs: Vec<Dg>,
    #[serde(default)]
    pub limits: GridLimits,
    #[serde(default)]
    pub profiles: BTreeMap<String, Vec<f64>>,
}

/// Node of the expanded network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetNode {
    pub id: String,
    pub kind: NodeKind,
    /// Index into [`Grid::nodes`]; `None` for the internal node of an SVR.
    pub origin: Option<usize>,
}

/// Line of the expanded network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetLine {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub f_max: f64,
    pub f_thr: f64,
    pub switch: Option<Switch>,
    /// Set on the ideal-ratio half of an SVR; holds the regulator index.
    pub ratio_link: Option<usize>,
    /// Index into [`Grid::lines`].
    pub origin: usize,
}

impl NetLine {
    pub fn is_switched(&self) -> bool {
        self.switch.is_some()
    }

    pub fn is_tie(&self) -> bool {
        self.switch.as_ref().is_some_and(Switch::is_tie)
    }

    pub fn normally_closed(&self) -> bool {
        self.switch.as_ref().is_none_or(|s| !s.normally_open)
    }

    pub fn other(&self, node: usize) -> usize {
        if node == self.from {
            self.to
        } else {
            self.from
        }
    }
}

/// Expanded network with integer indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Network {
    pub nodes: Vec<NetNode>,
    pub lines: Vec<NetLine>,
    node_ix: HashMap<String, usize>,
    line_ix: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Network {
    pub fn node(&self, id: &str) -> Option<usize> {
        self.node_ix.get(id).copied()
    }

    pub fn line(&self, id: &str) -> Option<usize> {
        self.line_ix.get(id).copied()
    }

    /// `(line, neighbour)` pairs incident to `node`.
    pub fn incident(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDocument", into = "GridDocument")]
pub struct Grid {
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub regulators: Vec<Regulator>,
    pub dgs: Vec<Dg>,
    pub limits: GridLimits,
    pub profiles: BTreeMap<String, Vec<f64>>,
    network: Network,
}

impl TryFrom<GridDocument> for Grid {
    type Error = Error;

    fn try_from(doc: GridDocument) -> Result<Self> {
        Grid::from_document(doc)
    }
}

impl From<Grid> for GridDocument {
    fn from(g: Grid) -> Self {
        GridDocument {
            nodes: g.nodes,
            lines: g.lines,
            regulators: g.regulators,
            dgs: g.dgs,
            limits: g.limits,
            profiles: g.profiles,
        }
    }
}

/// Parses and fully validates a grid document, including the pre-fault
/// radial configuration.
pub fn parse_grid(document: &str) -> Result<Grid> {
    let doc: GridDocument =
        serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
    let grid = Grid::from_document(doc)?;
    let report = validate_radial_base(&grid);
    if !report.is_radial() {
        return Err(Error::NotRadial(report.summary()));
    }
    Ok(grid)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    parse_grid(&std::fs::read_to_string(path)?)
}

impl Grid {
    /// Checks element invariants and builds the expanded network. Radiality
    /// and connectivity are checked separately by [`validate_radial_base`].
    pub fn from_document(doc: GridDocument) -> Result<Self> {
        validate_elements(&doc)?;
        let network = expand(&doc)?;
        Ok(Grid {
            nodes: doc.nodes,
            lines: doc.lines,
            regulators: doc.regulators,
            dgs: doc.dgs,
            limits: doc.limits,
            profiles: doc.profiles,
            network,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn to_document(&self) -> GridDocument {
        self.clone().into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("grid serializes")
    }

    pub fn feeder_roots(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Substation)
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Data of a network node; `None` for SVR internal nodes.
    pub fn node_data(&self, net_node: usize) -> Option<&Node> {
        self.network.nodes[net_node].origin.map(|o| &self.nodes[o])
    }

    pub fn multiplier(&self, profile: Option<&str>, hour: usize) -> f64 {
        match profile {
            Some(name) => self.profiles[name][hour % HOURS_PER_DAY],
            None => 1.0,
        }
    }

    /// `(P0, Q0)` of a network node at an hour of the day.
    pub fn demand(&self, net_node: usize, hour: usize) -> (f64, f64) {
        match self.node_data(net_node) {
            Some(n) => {
                let m = self.multiplier(n.profile.as_deref(), hour);
                (n.base_load_p * m, n.base_load_q * m)
            }
            None => (0.0, 0.0),
        }
    }

    pub fn peak_demand(&self) -> f64 {
        (0..self.network.node_count())
            .map(|i| {
                (0..HOURS_PER_DAY)
                    .map(|h| {
                        let (p, q) = self.demand(i, h);
                        p.hypot(q)
                    })
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    pub fn big_m(&self) -> BigM {
        let policy = &self.limits.big_m_policy;
        BigM {
            flow: policy.flow.unwrap_or_else(|| (2.0 * self.peak_demand()).max(1.0)),
            volt: policy.volt.unwrap_or(self.limits.v_max * self.limits.v_max),
            generic: policy.generic,
            energize: policy.energize,
        }
    }

    pub fn oltc_at(&self, net_node: usize) -> Option<usize> {
        let id = &self.network.nodes[net_node].id;
        self.regulators
            .iter()
            .position(|r| r.kind == RegulatorKind::Oltc && &r.location == id)
    }

    pub fn cb_at(&self, net_node: usize) -> Option<usize> {
        let id = &self.network.nodes[net_node].id;
        self.regulators
            .iter()
            .position(|r| r.kind == RegulatorKind::Cb && &r.location == id)
    }

    pub fn dg_at(&self, net_node: usize) -> Option<usize> {
        let id = &self.network.nodes[net_node].id;
        self.dgs.iter().position(|d| &d.node == id)
    }
}

fn validate_elements(doc: &GridDocument) -> Result<()> {
    let mut node_ids = HashSet::new();
    for n in &doc.nodes {
        if !node_ids.insert(n.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "node",
                id: n.id.clone(),
            });
        }
        let el = || format!("node `{}`", n.id);
        if !(n.priority > 0.0) {
            return Err(Error::invariant(el(), "priority must be > 0"));
        }
        if n.kp < 0.0 || n.kq < 0.0 {
            return Err(Error::invariant(el(), "kp and kq must be >= 0"));
        }
        if n.base_load_p < 0.0 || n.base_load_q < 0.0 {
            return Err(Error::invariant(el(), "base loads must be >= 0"));
        }
        if !(n.breaker_weight > 0.0) {
            return Err(Error::invariant(el(), "breaker weight must be > 0"));
        }
        if n.kind == NodeKind::Substation && (n.base_load_p != 0.0 || n.base_load_q != 0.0) {
            return Err(Error::invariant(el(), "substation nodes carry no load"));
        }
        if let Some(r) = n.rating {
            if n.kind != NodeKind::Substation || !(r > 0.0) {
                return Err(Error::invariant(el(), "rating must be > 0 and on a substation"));
            }
        }
        if let Some(p) = &n.profile {
            if !doc.profiles.contains_key(p) {
                return Err(Error::UnknownId {
                    kind: "profile",
                    id: p.clone(),
                });
            }
        }
    }
    if !doc.nodes.iter().any(|n| n.kind == NodeKind::Substation) {
        return Err(Error::invariant("grid", "at least one substation is required"));
    }

    for (name, series) in &doc.profiles {
        if series.len() != HOURS_PER_DAY {
            return Err(Error::invariant(
                format!("profile `{name}`"),
                format!("expected {HOURS_PER_DAY} hourly multipliers, got {}", series.len()),
            ));
        }
        if series.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invariant(format!("profile `{name}`"), "multipliers must be >= 0"));
        }
    }

    let mut line_ids = HashSet::new();
    let (mut max_remote, mut min_manual) = (f64::NEG_INFINITY, f64::INFINITY);
    for l in &doc.lines {
        if !line_ids.insert(l.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "line",
                id: l.id.clone(),
            });
        }
        let el = || format!("line `{}`", l.id);
        for end in [&l.from, &l.to] {
            if !node_ids.contains(end.as_str()) {
                return Err(Error::UnknownId {
                    kind: "node",
                    id: end.clone(),
                });
            }
        }
        if l.from == l.to {
            return Err(Error::invariant(el(), "endpoints must differ"));
        }
        if l.r < 0.0 || l.x < 0.0 {
            return Err(Error::invariant(el(), "r and x must be >= 0"));
        }
        if !(l.f_thr > 0.0 && l.f_thr <= l.f_max) {
            return Err(Error::invariant(el(), "require 0 < f_thr <= f_max"));
        }
        if l.is_virtual_regulator_link && (l.r != 0.0 || l.x != 0.0) {
            return Err(Error::invariant(el(), "virtual regulator links have r = x = 0"));
        }
        if let Some(s) = &l.switch {
            if !(s.weight > 0.0) {
                return Err(Error::invariant(el(), "switch weight must be > 0"));
            }
            if s.is_tie() != s.normally_open {
                return Err(Error::invariant(el(), "a switch is normally open iff it is a tie"));
            }
            if s.remote {
                max_remote = max_remote.max(s.weight);
            } else {
                min_manual = min_manual.min(s.weight);
            }
        }
    }
    if max_remote >= min_manual {
        return Err(Error::invariant(
            "switches",
            format!("remote weights (max {max_remote}) must be below manual weights (min {min_manual})"),
        ));
    }

    let mut svr_lines = HashSet::new();
    let mut device_nodes = HashSet::new();
    for (k, r) in doc.regulators.iter().enumerate() {
        let el = || format!("regulator #{k} ({:?} at `{}`)", r.kind, r.location);
        if r.n_steps < 1 {
            return Err(Error::invariant(el(), "n_steps must be >= 1"));
        }
        let n = f64::from(r.n_steps);
        match r.kind {
            RegulatorKind::Oltc | RegulatorKind::Svr if !(r.sigma > 0.0) => {
                return Err(Error::invariant(el(), "sigma must be > 0"));
            }
            _ => {}
        }
        match r.kind {
            RegulatorKind::Oltc => {
                let node = doc.nodes.iter().find(|x| x.id == r.location).ok_or_else(|| {
                    Error::UnknownId {
                        kind: "node",
                        id: r.location.clone(),
                    }
                })?;
                if node.kind != NodeKind::Substation {
                    return Err(Error::invariant(el(), "OLTC must sit at a substation"));
                }
                if r.initial.abs() > n * r.sigma + 1e-12 {
                    return Err(Error::invariant(el(), "initial ratio outside +-n*sigma"));
                }
                if !device_nodes.insert(("oltc", r.location.as_str())) {
                    return Err(Error::invariant(el(), "two OLTCs at one node"));
                }
            }
            RegulatorKind::Cb => {
                if !node_ids.contains(r.location.as_str()) {
                    return Err(Error::UnknownId {
                        kind: "node",
                        id: r.location.clone(),
                    });
                }
                if !(r.dq_step > 0.0) {
                    return Err(Error::invariant(el(), "dq_step must be > 0"));
                }
                if r.initial.fract() != 0.0 || r.initial < 0.0 || r.initial > n {
                    return Err(Error::invariant(el(), "initial tap must be an integer in 0..=n"));
                }
                if !device_nodes.insert(("cb", r.location.as_str())) {
                    return Err(Error::invariant(el(), "two CBs at one node"));
                }
            }
            RegulatorKind::Svr => {
                let line = doc.lines.iter().find(|l| l.id == r.location).ok_or_else(|| {
                    Error::UnknownId {
                        kind: "line",
                        id: r.location.clone(),
                    }
                })?;
                if line.switch.as_ref().is_some_and(Switch::is_tie) {
                    return Err(Error::invariant(el(), "SVR cannot sit on a tie line"));
                }
                if r.initial.fract() != 0.0 || r.initial.abs() > n {
                    return Err(Error::invariant(el(), "initial tap must be an integer in -n..=n"));
                }
                if r.zp.iter().chain(&r.zs).any(|v| *v < 0.0) {
                    return Err(Error::invariant(el(), "SVR impedances must be >= 0"));
                }
                if !svr_lines.insert(r.location.as_str()) {
                    return Err(Error::invariant(el(), "two SVRs on one line"));
                }
            }
        }
    }

    let mut dg_nodes = HashSet::new();
    for d in &doc.dgs {
        let el = || format!("DG at `{}`", d.node);
        if !node_ids.contains(d.node.as_str()) {
            return Err(Error::UnknownId {
                kind: "node",
                id: d.node.clone(),
            });
        }
        if !(d.p_max >= 0.0 && d.p_max <= d.s_max) {
            return Err(Error::invariant(el(), "require 0 <= p_max <= s_max"));
        }
        if d.q_min > d.q_max {
            return Err(Error::invariant(el(), "require q_min <= q_max"));
        }
        if !dg_nodes.insert(d.node.as_str()) {
            return Err(Error::invariant(el(), "two DGs at one node"));
        }
    }

    let lim = &doc.limits;
    if !(lim.v_min > 0.0 && lim.v_min < 1.0 && lim.v_max > 1.0) {
        return Err(Error::invariant("limits", "require 0 < v_min < 1 < v_max"));
    }
    let bm = &lim.big_m_policy;
    let positive = |v: Option<f64>| v.is_none_or(|v| v > 0.0);
    if !(positive(bm.flow) && positive(bm.volt) && bm.generic > 0.0 && bm.energize > 0.0) {
        return Err(Error::invariant("big_m_policy", "multipliers must be > 0"));
    }
    Ok(())
}

fn expand(doc: &GridDocument) -> Result<Network> {
    let mut net = Network::default();
    for (k, n) in doc.nodes.iter().enumerate() {
        net.node_ix.insert(n.id.clone(), k);
        net.nodes.push(NetNode {
            id: n.id.clone(),
            kind: n.kind,
            origin: Some(k),
        });
    }
    let svr_on: HashMap<&str, usize> = doc
        .regulators
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == RegulatorKind::Svr)
        .map(|(k, r)| (r.location.as_str(), k))
        .collect();

    let mut links = Vec::new();
    for (k, l) in doc.lines.iter().enumerate() {
        let from = net.node_ix[&l.from];
        let to = net.node_ix[&l.to];
        let mut line = NetLine {
            id: l.id.clone(),
            from,
            to,
            r: l.r,
            x: l.x,
            f_max: l.f_max,
            f_thr: l.f_thr,
            switch: l.switch.clone(),
            ratio_link: None,
            origin: k,
        };
        if let Some(&reg) = svr_on.get(l.id.as_str()) {
            let r = &doc.regulators[reg];
            let mid_id = format!("{}#svr", l.id);
            if net.node_ix.contains_key(&mid_id) {
                return Err(Error::DuplicateId {
                    kind: "node",
                    id: mid_id,
                });
            }
            let mid = net.nodes.len();
            net.node_ix.insert(mid_id.clone(), mid);
            net.nodes.push(NetNode {
                id: mid_id.clone(),
                kind: NodeKind::Junction,
                origin: None,
            });
            line.to = mid;
            line.r += r.zp[0] + r.zs[0];
            line.x += r.zp[1] + r.zs[1];
            links.push(NetLine {
                id: mid_id,
                from: mid,
                to,
                r: 0.0,
                x: 0.0,
                f_max: l.f_max,
                f_thr: l.f_thr,
                switch: None,
                ratio_link: Some(reg),
                origin: k,
            });
        }
        net.line_ix.insert(line.id.clone(), net.lines.len());
        net.lines.push(line);
    }
    for link in links {
        if net.line_ix.contains_key(&link.id) {
            return Err(Error::DuplicateId {
                kind: "line",
                id: link.id,
            });
        }
        net.line_ix.insert(link.id.clone(), net.lines.len());
        net.lines.push(link);
    }
    net.adjacency = vec![Vec::new(); net.nodes.len()];
    for (k, l) in net.lines.iter().enumerate() {
        net.adjacency[l.from].push((k, l.to));
        net.adjacency[l.to].push((k, l.from));
    }
    Ok(net)
}

/// Outcome of the pre-fault radiality check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialReport {
    pub closed_lines: usize,
    /// Each entry lists the line ids of one cycle among closed lines.
    pub loops: Vec<Vec<String>>,
    /// Nodes in components without a substation.
    pub unreachable: Vec<String>,
    /// Components holding more than one substation (their substation ids).
    pub multi_source: Vec<Vec<String>>,
    /// Ties whose endpoints share a switch-free path.
    pub ties_inside_zone: Vec<String>,
}

impl RadialReport {
    pub fn is_radial(&self) -> bool {
        self.loops.is_empty()
            && self.unreachable.is_empty()
            && self.multi_source.is_empty()
            && self.ties_inside_zone.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        for l in &self.loops {
            parts.push(format!("loop through [{}]", l.join(", ")));
        }
        if !self.unreachable.is_empty() {
            parts.push(format!("unreachable nodes [{}]", self.unreachable.join(", ")));
        }
        for m in &self.multi_source {
            parts.push(format!("substations [{}] share a component", m.join(", ")));
        }
        for t in &self.ties_inside_zone {
            parts.push(format!("tie `{t}` closes a loop inside one zone"));
        }
        if parts.is_empty() {
            "radial".to_string()
        } else {
            parts.join("; ")
        }
    }
}

/// Checks that the pre-fault configuration (ties open, everything else
/// closed) is a spanning forest with one substation per component.
pub fn validate_radial_base(grid: &Grid) -> RadialReport {
    check_configuration(grid, |l| l.normally_closed())
}

/// Radiality check of an arbitrary closed-line selection on the expanded network.
pub fn check_configuration(grid: &Grid, closed: impl Fn(&NetLine) -> bool) -> RadialReport {
    let net = grid.network();
    let n = net.node_count();
    let mut report = RadialReport::default();
    // Forest adjacency grown edge by edge; a closing edge's cycle is the
    // forest path between its endpoints plus itself.
    let mut forest: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut uf = UnionFind::new(n);
    for (k, l) in net.lines.iter().enumerate() {
        if !closed(l) {
            continue;
        }
        report.closed_lines += 1;
        if uf.union(l.from, l.to) {
            forest[l.from].push((k, l.to));
            forest[l.to].push((k, l.from));
        } else {
            let mut cycle = forest_path(&forest, l.from, l.to)
                .into_iter()
                .map(|e| net.lines[e].id.clone())
                .collect::<Vec<_>>();
            cycle.push(l.id.clone());
            report.loops.push(cycle);
        }
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        members.entry(uf.find(v)).or_default().push(v);
    }
    for nodes in members.values() {
        let subs: Vec<String> = nodes
            .iter()
            .filter(|&&v| net.nodes[v].kind == NodeKind::Substation)
            .map(|&v| net.nodes[v].id.clone())
            .collect();
        match subs.len() {
            0 => report
                .unreachable
                .extend(nodes.iter().map(|&v| net.nodes[v].id.clone())),
            1 => {}
            _ => report.multi_source.push(subs),
        }
    }
    let mut zones = UnionFind::new(n);
    for l in net.lines.iter().filter(|l| !l.is_switched()) {
        zones.union(l.from, l.to);
    }
    for l in net.lines.iter().filter(|l| l.is_tie()) {
        if zones.find(l.from) == zones.find(l.to) {
            report.ties_inside_zone.push(l.id.clone());
        }
    }
    report
}

fn forest_path(forest: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; forest.len()];
    let mut seen = vec![false; forest.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &(e, w) in &forest[v] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((e, v));
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut v = to;
    while let Some((e, p)) = prev[v] {
        path.push(e);
        v = p;
    }
    path.reverse();
    path
}

#[derive(Clone, Debug)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> &'static str {
        r#"{
            "nodes": [
                {"id": "s", "kind": "substation"},
                {"id": "a", "kind": "load", "base_load_p": 0.1, "base_load_q": 0.05}
            ],
            "lines": [{"id": "s-a", "from": "s", "to": "a", "r": 0.01, "x": 0.02, "f_max": 1.0, "f_thr": 0.5}]
        }"#
    }

    #[test]
    fn smallest_legal_grid() {
        let g = parse_grid(two_node()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.lines.len(), 1);
        assert_eq!(g.limits.v_min, 0.917);
        assert_eq!(g.limits.v_max, 1.050);
        assert!(validate_radial_base(&g).is_radial());
    }

    #[test]
    fn threshold_above_rating_names_the_line() {
        let doc = two_node().replace(r#""f_thr": 0.5"#, r#""f_thr": 1.5"#);
        let err = parse_grid(&doc).unwrap_err();
        assert!(err.to_string().contains("line `s-a`"), "{err}");
    }

    #[test]
    fn duplicate_and_unknown_ids() {
        let dup = two_node().replace(r#""id": "a""#, r#""id": "s""#);
        assert!(matches!(parse_grid(&dup), Err(Error::DuplicateId { kind: "node", .. })));
        let unknown = two_node().replace(r#""to": "a""#, r#""to": "b""#);
        assert!(matches!(parse_grid(&unknown), Err(Error::UnknownId { .. })));
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let doc = two_node().replace(r#""r": 0.01, "#, "");
        assert!(matches!(parse_grid(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn substation_with_load_is_rejected() {
        let doc = two_node().replace(
            r#"{"id": "s", "kind": "substation"}"#,
            r#"{"id": "s", "kind": "substation", "base_load_p": 0.2}"#,
        );
        assert!(matches!(parse_grid(&doc), Err(Error::Invariant { .. })));
    }

    #[test]
    fn svr_expands_into_impedance_line_and_ratio_link() {
        let doc = r#"{
            "nodes": [
                {"id": "s", "kind": "substation"},
                {"id": "a", "kind": "load", "base_load_p": 0.1}
            ],
            "lines": [{"id": "s-a", "from": "s", "to": "a", "r": 0.01, "x": 0.02, "f_max": 1.0, "f_thr": 0.5}],
            "regulators": [{"kind": "SVR", "location": "s-a", "sigma": 0.00625, "n_steps": 4, "zp": [0.001, 0.002], "zs": [0.001, 0.0]}]
        }"#;
        let g = parse_grid(doc).unwrap();
        let net = g.network();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.line_count(), 2);
        let imp = &net.lines[0];
        assert!((imp.r - 0.012).abs() < 1e-15 && (imp.x - 0.022).abs() < 1e-15);
        let link = &net.lines[1];
        assert_eq!(link.ratio_link, Some(0));
        assert_eq!((link.r, link.x), (0.0, 0.0));
        assert_eq!(link.to, net.node("a").unwrap());
        // serialization keeps the file view
        let again = parse_grid(&g.to_json()).unwrap();
        assert_eq!(again, g);
        assert_eq!(again.lines.len(), 1);
    }
}
