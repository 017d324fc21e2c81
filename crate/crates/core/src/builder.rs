//! Assembly of the restoration MISOCP from a [`RestorationCase`].
//!
//! [`declare_variables`] creates every decision variable in a fixed order
//! and records it in a [`VariableIndex`]; the `build_*` functions emit the
//! constraint groups; [`assemble`] ties them together with the staged
//! objective. Stage 0 is restoration (curtailed load), stage 1 switching,
//! stage 2 operation (current deviation and tap changes) and stage 3 a
//! continuous loss tie-break that keeps the cone constraints tight once the
//! discrete plan is fixed.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BigM, Grid, Network, NodeKind, RegulatorKind};
use crate::program::{
    Cone, ConicProgram, LinExpr, LinearRow, ObjectiveMode, ObjectiveTerm, Sense, Sos1, Stage, VarId,
    VarKind,
};
use crate::topology::{RestorationCase, SwitchRole, ZoneId};

pub const STAGE_RESTORATION: usize = 0;
pub const STAGE_SWITCHING: usize = 1;
pub const STAGE_OPERATION: usize = 2;
pub const STAGE_LOSSES: usize = 3;

/// Stage weights for the single weighted solve plus the two operation sub-weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub re: f64,
    pub sw: f64,
    pub op: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            re: 1e4,
            sw: 1e2,
            op: 1.0,
            w1: 0.5,
            w2: 0.5,
        }
    }
}

/// Devices held at their pre-fault setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Freeze {
    pub oltc: bool,
    pub svr: bool,
    pub cb: bool,
}

impl Freeze {
    pub fn all() -> Self {
        Self {
            oltc: true,
            svr: true,
            cb: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub weights: Weights,
    pub freeze: Freeze,
    /// Minimum active demand of off-outage load nodes, p.u.
    pub demand_floor: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            freeze: Freeze::default(),
            demand_floor: 1e-6,
        }
    }
}

type Timed = BTreeMap<(usize, usize), VarId>;

/// Where every model symbol lives in the program. Keys are network node or
/// line indices, regulator indices into `grid.regulators`, or DG indices
/// into `grid.dgs`; timed entries add the horizon position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariableIndex {
    pub hours: Vec<usize>,
    /// Energization of switched lines (W_S).
    pub y: BTreeMap<usize, VarId>,
    /// Orientation from `from` to `to`.
    pub z_fwd: BTreeMap<usize, VarId>,
    pub z_bwd: BTreeMap<usize, VarId>,
    pub e: BTreeMap<ZoneId, VarId>,
    pub x_node: BTreeMap<usize, VarId>,
    /// Unswitched off-outage lines; switched ones use `y`.
    pub x_line: BTreeMap<usize, VarId>,
    pub l: BTreeMap<usize, VarId>,
    pub s: BTreeMap<usize, VarId>,
    pub b: BTreeMap<usize, VarId>,
    pub alpha: BTreeMap<usize, VarId>,
    /// Integer tap position of SVRs and CBs.
    pub tap: BTreeMap<usize, VarId>,
    /// SVR tap selection binaries, `(k, var)` for `k = -n..=n`.
    pub delta: BTreeMap<usize, Vec<(i64, VarId)>>,
    pub t_dev: BTreeMap<usize, VarId>,
    pub beta: Timed,
    /// `(regulator, k, step)`.
    pub bk: BTreeMap<(usize, i64, usize), VarId>,
    pub f: Timed,
    pub f_star: Timed,
    pub v: Timed,
    pub p: Timed,
    pub q: Timed,
    pub pd: Timed,
    pub qd: Timed,
    pub pcur: Timed,
    pub qcur: Timed,
    /// Voltage term of served off-outage loads, `L * (V - 1)`.
    pub w: Timed,
    pub psub: Timed,
    pub qsub: Timed,
    pub pinj: Timed,
    pub qinj: Timed,
    /// CB reactive injection keyed by regulator.
    pub qcb: Timed,
    /// `(P0, Q0)` of every node with demand, as used by the load model.
    pub nominal: BTreeMap<(usize, usize), (f64, f64)>,
}

impl VariableIndex {
    pub fn steps(&self) -> usize {
        self.hours.len()
    }

    /// X_i as an expression (constant 1 outside the off-outage area).
    pub fn x_node_expr(&self, node: usize) -> LinExpr {
        self.x_node.get(&node).map_or(LinExpr::constant(1.0), |&v| LinExpr::var(v))
    }

    /// X_ij as an expression.
    pub fn x_line_expr(&self, line: usize) -> LinExpr {
        if let Some(&y) = self.y.get(&line) {
            LinExpr::var(y)
        } else if let Some(&x) = self.x_line.get(&line) {
            LinExpr::var(x)
        } else {
            LinExpr::constant(1.0)
        }
    }

    pub fn l_expr(&self, node: usize) -> LinExpr {
        self.l.get(&node).map_or(LinExpr::constant(1.0), |&v| LinExpr::var(v))
    }

    /// Served active load `P^D - P^cur` (zero for nodes without demand).
    pub fn served_p(&self, node: usize, t: usize) -> LinExpr {
        served(&self.pd, &self.pcur, node, t)
    }

    pub fn served_q(&self, node: usize, t: usize) -> LinExpr {
        served(&self.qd, &self.qcur, node, t)
    }
}

fn served(d: &Timed, cur: &Timed, node: usize, t: usize) -> LinExpr {
    let mut e = LinExpr::new();
    if let Some(&v) = d.get(&(node, t)) {
        e.push(v, 1.0);
    }
    if let Some(&v) = cur.get(&(node, t)) {
        e.push(v, -1.0);
    }
    e
}

/// Rows, cones and SOS1 groups emitted by one builder.
#[derive(Clone, Debug, Default)]
pub struct ConstraintGroup {
    pub rows: Vec<LinearRow>,
    pub cones: Vec<Cone>,
    pub sos1: Vec<Sos1>,
    pub warnings: Vec<String>,
}

impl ConstraintGroup {
    fn row(&mut self, name: String, expr: LinExpr, sense: Sense, rhs: f64) {
        let mut expr = expr;
        expr.compact();
        let rhs = rhs - expr.constant;
        expr.constant = 0.0;
        self.rows.push(LinearRow::new(name, expr, sense, rhs));
    }

    fn extend(&mut self, other: ConstraintGroup) {
        self.rows.extend(other.rows);
        self.cones.extend(other.cones);
        self.sos1.extend(other.sos1);
        self.warnings.extend(other.warnings);
    }
}

/// Program plus the index needed to read a solution back.
#[derive(Clone, Debug)]
pub struct BuiltProgram {
    pub program: ConicProgram,
    pub index: VariableIndex,
    pub warnings: Vec<String>,
}

struct Ctx<'a> {
    case: &'a RestorationCase,
    grid: &'a Grid,
    net: &'a Network,
    cfg: &'a BuildConfig,
    m: BigM,
    v2min: f64,
    v2max: f64,
}

impl<'a> Ctx<'a> {
    fn new(case: &'a RestorationCase, cfg: &'a BuildConfig) -> Self {
        let grid = case.grid.as_ref();
        Self {
            case,
            grid,
            net: grid.network(),
            cfg,
            m: grid.big_m(),
            v2min: grid.limits.v_min.powi(2),
            v2max: grid.limits.v_max.powi(2),
        }
    }

    fn node(&self, i: usize) -> &str {
        &self.net.nodes[i].id
    }

    fn line(&self, l: usize) -> &str {
        &self.net.lines[l].id
    }

    fn hour(&self, t: usize) -> usize {
        self.case.horizon[t]
    }

    /// `(P0, Q0)` at a horizon position, with the off-outage demand floor applied.
    fn demand(&self, i: usize, t: usize) -> (f64, f64) {
        let (p, q) = self.grid.demand(i, self.hour(t));
        if self.case.is_outage(i) && self.net.nodes[i].kind == NodeKind::Load {
            (p.max(self.cfg.demand_floor), q)
        } else {
            (p, q)
        }
    }

    fn has_demand(&self, i: usize) -> bool {
        (0..self.case.horizon.len()).any(|t| {
            let (p, q) = self.demand(i, t);
            p > 0.0 || q > 0.0
        })
    }

    fn load_params(&self, i: usize) -> (f64, f64) {
        self.grid.node_data(i).map_or((0.0, 0.0), |n| (n.kp, n.kq))
    }

    fn ratio_link_of(&self, reg: usize) -> usize {
        self.net
            .lines
            .iter()
            .position(|l| l.ratio_link == Some(reg))
            .expect("SVR regulators are expanded into a ratio link")
    }

    /// Range of the load voltage term `w`.
    fn w_range(&self) -> (f64, f64) {
        (self.v2min - 1.0, self.v2max - 1.0)
    }
}

fn timed(p: &mut ConicProgram, name: String, lo: f64, hi: f64, t: usize) -> VarId {
    let v = p.add_var(name, VarKind::Continuous, lo, hi);
    p.var_mut(v).time = Some(t);
    v
}

/// Creates all variables of the model for `case`, in a deterministic order.
pub fn declare_variables(case: &RestorationCase, config: &BuildConfig) -> (ConicProgram, VariableIndex) {
    let cx = Ctx::new(case, config);
    let mut p = ConicProgram::default();
    let mut ix = VariableIndex {
        hours: case.horizon.clone(),
        ..Default::default()
    };
    let steps = case.horizon.len();
    let (net, grid) = (cx.net, cx.grid);
    let inf = f64::INFINITY;

    // Reconfiguration and switching.
    for l in case.switched_lines() {
        let id = cx.line(l);
        ix.y.insert(l, p.add_var(format!("Y[{id}]"), VarKind::Binary, 0.0, 1.0));
    }
    for l in case.switched_lines() {
        let id = cx.line(l);
        ix.z_fwd.insert(l, p.add_var(format!("Z[{id}>]"), VarKind::Continuous, 0.0, 1.0));
        ix.z_bwd.insert(l, p.add_var(format!("Z[{id}<]"), VarKind::Continuous, 0.0, 1.0));
    }
    for &z in &case.outage_zones {
        let v = p.add_var(format!("E[z{z}]"), VarKind::Continuous, 0.0, 1.0);
        p.var_mut(v).implied_integral = true;
        ix.e.insert(z, v);
    }
    for &i in &case.outage_nodes {
        let v = p.add_var(format!("X[{}]", cx.node(i)), VarKind::Continuous, 0.0, 1.0);
        p.var_mut(v).implied_integral = true;
        ix.x_node.insert(i, v);
    }
    for &l in &case.outage_lines {
        if case.switch_role(l).is_none() {
            let v = p.add_var(format!("X[{}]", cx.line(l)), VarKind::Continuous, 0.0, 1.0);
            p.var_mut(v).implied_integral = true;
            ix.x_line.insert(l, v);
        }
    }
    for &i in &case.outage_nodes {
        ix.l.insert(i, p.add_var(format!("L[{}]", cx.node(i)), VarKind::Binary, 0.0, 1.0));
    }
    for &l in &case.internal_sectionalizers {
        ix.s.insert(l, p.add_var(format!("S[{}]", cx.line(l)), VarKind::Continuous, 0.0, 1.0));
    }
    for &i in &case.outage_nodes {
        ix.b.insert(i, p.add_var(format!("B[{}]", cx.node(i)), VarKind::Continuous, 0.0, 1.0));
    }

    // Regulators.
    for &r in &case.oltcs {
        let reg = &grid.regulators[r];
        let n = f64::from(reg.n_steps);
        let (lo, hi, thi) = if config.freeze.oltc {
            (reg.initial, reg.initial, 0.0)
        } else {
            (-n * reg.sigma, n * reg.sigma, 2.0 * n)
        };
        ix.alpha.insert(r, p.add_var(format!("alpha[{}]", reg.location), VarKind::Continuous, lo, hi));
        ix.t_dev.insert(r, p.add_var(format!("T[{}]", reg.location), VarKind::Continuous, 0.0, thi));
    }
    for &r in &case.svrs {
        let reg = &grid.regulators[r];
        let n = i64::from(reg.n_steps);
        let r0 = reg.initial_tap();
        let frozen = config.freeze.svr;
        let (lo, hi) = if frozen { (r0 as f64, r0 as f64) } else { (-n as f64, n as f64) };
        ix.tap.insert(r, p.add_var(format!("dr[{}]", reg.location), VarKind::Integer, lo, hi));
        let mut group = Vec::new();
        for k in -n..=n {
            let fixed = if frozen { f64::from(u8::from(k == r0)) } else { -1.0 };
            let (lo, hi) = if fixed >= 0.0 { (fixed, fixed) } else { (0.0, 1.0) };
            group.push((k, p.add_var(format!("delta[{},{k}]", reg.location), VarKind::Binary, lo, hi)));
        }
        ix.delta.insert(r, group);
        let thi = if frozen { 0.0 } else { 2.0 * n as f64 };
        ix.t_dev.insert(r, p.add_var(format!("T[{}]", reg.location), VarKind::Continuous, 0.0, thi));
    }
    for &r in &case.cbs {
        let reg = &grid.regulators[r];
        let n = f64::from(reg.n_steps);
        let r0 = reg.initial_tap() as f64;
        let (lo, hi, thi) = if config.freeze.cb { (r0, r0, 0.0) } else { (0.0, n, n) };
        ix.tap.insert(r, p.add_var(format!("dr[{}]", reg.location), VarKind::Integer, lo, hi));
        ix.t_dev.insert(r, p.add_var(format!("T[{}]", reg.location), VarKind::Continuous, 0.0, thi));
    }

    // Time-indexed quantities.
    let oltc_nodes: BTreeMap<usize, usize> = case
        .oltcs
        .iter()
        .map(|&r| (net.node(&grid.regulators[r].location).expect("validated"), r))
        .collect();
    let (wlo, whi) = cx.w_range();
    for t in 0..steps {
        let h = cx.hour(t);
        for &l in &case.lines {
            let line = &net.lines[l];
            let id = &line.id;
            let fm2 = line.f_max * line.f_max;
            let pmax = line.f_max * grid.limits.v_max;
            ix.f.insert((l, t), timed(&mut p, format!("F[{id},t{h}]"), 0.0, fm2, t));
            ix.p.insert((l, t), timed(&mut p, format!("p[{id},t{h}]"), -pmax, pmax, t));
            ix.q.insert((l, t), timed(&mut p, format!("q[{id},t{h}]"), -pmax, pmax, t));
            if line.ratio_link.is_none() {
                ix.f_star.insert((l, t), timed(&mut p, format!("Fs[{id},t{h}]"), 0.0, fm2, t));
            }
        }
        for &i in &case.nodes {
            let id = cx.node(i);
            let (lo, hi) = if net.nodes[i].kind == NodeKind::Substation {
                match oltc_nodes.get(&i) {
                    Some(&r) if !config.freeze.oltc => {
                        let reg = &grid.regulators[r];
                        let span = 2.0 * f64::from(reg.n_steps) * reg.sigma;
                        (1.0 - span, 1.0 + span)
                    }
                    _ => {
                        let a0 = grid.oltc_at(i).map_or(0.0, |r| grid.regulators[r].initial);
                        (1.0 + 2.0 * a0, 1.0 + 2.0 * a0)
                    }
                }
            } else if case.is_outage(i) {
                (0.0, cx.v2max)
            } else {
                (cx.v2min, cx.v2max)
            };
            ix.v.insert((i, t), timed(&mut p, format!("V[{id},t{h}]"), lo, hi, t));
        }
        for &i in &case.nodes {
            if !cx.has_demand(i) {
                continue;
            }
            let id = cx.node(i).to_string();
            let (p0, q0) = cx.demand(i, t);
            ix.nominal.insert((i, t), (p0, q0));
            let (kp, kq) = cx.load_params(i);
            let outage = case.is_outage(i);
            // Demand range over the admissible voltage term.
            let range = |base: f64, k: f64| {
                let (lo, hi) = if outage { (wlo, whi) } else { (cx.v2min - 1.0, cx.v2max - 1.0) };
                let a = base * (1.0 + k / 2.0 * lo);
                let b = base * (1.0 + k / 2.0 * hi);
                (a.min(b), a.max(b))
            };
            let (plo, phi) = range(p0, kp);
            let (qlo, qhi) = range(q0, kq);
            ix.pd.insert((i, t), timed(&mut p, format!("PD[{id},t{h}]"), plo.min(p0), phi.max(p0), t));
            ix.qd.insert((i, t), timed(&mut p, format!("QD[{id},t{h}]"), qlo.min(q0), qhi.max(q0), t));
            if outage {
                ix.pcur.insert((i, t), timed(&mut p, format!("Pcur[{id},t{h}]"), 0.0, phi.max(p0), t));
                ix.qcur.insert((i, t), timed(&mut p, format!("Qcur[{id},t{h}]"), 0.0, qhi.max(q0), t));
                ix.w.insert((i, t), timed(&mut p, format!("w[{id},t{h}]"), wlo, whi, t));
            }
        }
        for &i in &case.substations {
            let id = cx.node(i);
            ix.psub.insert((i, t), timed(&mut p, format!("Psub[{id},t{h}]"), -inf, inf, t));
            ix.qsub.insert((i, t), timed(&mut p, format!("Qsub[{id},t{h}]"), -inf, inf, t));
        }
        for &d in &case.dgs {
            let dg = &grid.dgs[d];
            let node = net.node(&dg.node).expect("validated");
            let (qlo, qhi) = if case.is_outage(node) {
                (dg.q_min.min(0.0), dg.q_max.max(0.0))
            } else {
                (dg.q_min, dg.q_max)
            };
            ix.pinj.insert((d, t), timed(&mut p, format!("Pinj[{},t{h}]", dg.node), 0.0, dg.p_max, t));
            ix.qinj.insert((d, t), timed(&mut p, format!("Qinj[{},t{h}]", dg.node), qlo, qhi, t));
        }
        for &r in &case.cbs {
            let reg = &grid.regulators[r];
            let qmax = reg.dq_step * f64::from(reg.n_steps);
            ix.qcb.insert((r, t), timed(&mut p, format!("Qcb[{},t{h}]", reg.location), 0.0, qmax, t));
        }
        for &r in &case.svrs {
            let reg = &grid.regulators[r];
            let n = i64::from(reg.n_steps);
            let bmax = n as f64 * cx.v2max;
            ix.beta.insert((r, t), timed(&mut p, format!("beta[{},t{h}]", reg.location), -bmax, bmax, t));
            for k in (-n..=n).filter(|&k| k != 0) {
                let v = timed(&mut p, format!("b[{},{k},t{h}]", reg.location), 0.0, cx.v2max, t);
                ix.bk.insert((r, k, t), v);
            }
        }
    }
    (p, ix)
}

/// Radiality and energization: orientation variables, zone in-flow,
/// node/line energization and load connection.
pub fn build_reconfiguration(case: &RestorationCase, ix: &VariableIndex, config: &BuildConfig) -> ConstraintGroup {
    let cx = Ctx::new(case, config);
    let mut g = ConstraintGroup::default();
    let net = cx.net;
    for l in case.switched_lines() {
        let (y, zf, zb) = (ix.y[&l], ix.z_fwd[&l], ix.z_bwd[&l]);
        let id = cx.line(l);
        if case.switch_role(l) == Some(SwitchRole::Available) {
            let line = &net.lines[l];
            // Oriented away from the virtual source, i.e. into the off-outage area.
            let (into, out) = if case.is_outage(line.to) { (zf, zb) } else { (zb, zf) };
            g.row(format!("orient_in[{id}]"), LinExpr::var(into).add(y, -1.0), Sense::Eq, 0.0);
            g.row(format!("orient_out[{id}]"), LinExpr::var(out), Sense::Eq, 0.0);
        } else {
            g.row(
                format!("orient[{id}]"),
                LinExpr::var(zf).add(zb, 1.0).add(y, -1.0),
                Sense::Eq,
                0.0,
            );
        }
    }
    for &z in &case.outage_zones {
        let mut e = LinExpr::term(ix.e[&z], -1.0);
        for l in case.switched_lines() {
            let line = &net.lines[l];
            if case.zones.node_zone[line.to] == z && case.is_outage(line.to) {
                e.push(ix.z_fwd[&l], 1.0);
            }
            if case.zones.node_zone[line.from] == z && case.is_outage(line.from) {
                e.push(ix.z_bwd[&l], 1.0);
            }
        }
        if e.terms.len() == 1 {
            g.warnings.push(format!(
                "zone z{z} has no switched line towards a source and cannot be restored"
            ));
        }
        g.row(format!("zone_inflow[z{z}]"), e, Sense::Eq, 0.0);
    }
    let scale = 1.0 / cx.m.energize;
    for l in case.switched_lines() {
        for t in 0..ix.steps() {
            g.row(
                format!("energize[{},t{}]", cx.line(l), cx.hour(t)),
                LinExpr::term(ix.y[&l], scale).add(ix.f[&(l, t)], -1.0),
                Sense::Le,
                0.0,
            );
        }
    }
    for &i in &case.outage_nodes {
        let z = case.zones.node_zone[i];
        let id = cx.node(i);
        g.row(format!("node_on[{id}]"), LinExpr::var(ix.x_node[&i]).add(ix.e[&z], -1.0), Sense::Eq, 0.0);
        g.row(format!("load_on[{id}]"), LinExpr::var(ix.l[&i]).add(ix.x_node[&i], -1.0), Sense::Le, 0.0);
    }
    for (&l, &x) in &ix.x_line {
        let z = case.zones.line_zone[l].expect("unswitched lines lie in a zone");
        g.row(format!("line_on[{}]", cx.line(l)), LinExpr::var(x).add(ix.e[&z], -1.0), Sense::Eq, 0.0);
    }
    g
}

/// Sectionalizer and load-breaker operation indicators.
pub fn build_switching(case: &RestorationCase, ix: &VariableIndex, config: &BuildConfig) -> ConstraintGroup {
    let cx = Ctx::new(case, config);
    let mut g = ConstraintGroup::default();
    for (&l, &s) in &ix.s {
        let line = &cx.net.lines[l];
        for (end, node) in [("from", line.from), ("to", line.to)] {
            let mut e = ix.x_node_expr(node);
            e.push(ix.y[&l], -1.0);
            e.push(s, -1.0);
            g.row(format!("sec_open[{},{end}]", cx.line(l)), e, Sense::Le, 0.0);
        }
    }
    for (&i, &b) in &ix.b {
        let e = LinExpr::var(ix.x_node[&i]).add(ix.l[&i], -1.0).add(b, -1.0);
        g.row(format!("breaker[{}]", cx.node(i)), e, Sense::Le, 0.0);
    }
    g
}

/// OLTC, SVR and CB tap models.
pub fn build_regulators(case: &RestorationCase, ix: &VariableIndex, config: &BuildConfig) -> ConstraintGroup {
    let cx = Ctx::new(case, config);
    let mut g = ConstraintGroup::default();
    let (grid, net) = (cx.grid, cx.net);
    for &r in &case.oltcs {
        let reg = &grid.regulators[r];
        let node = net.node(&reg.location).expect("validated");
        let (a, tv) = (ix.alpha[&r], ix.t_dev[&r]);
        for t in 0..ix.steps() {
            g.row(
                format!("oltc_v[{},t{}]", reg.location, cx.hour(t)),
                LinExpr::var(ix.v[&(node, t)]).add(a, -2.0),
                Sense::Eq,
                1.0,
            );
        }
        let s = reg.sigma;
        g.row(
            format!("oltc_dev_up[{}]", reg.location),
            LinExpr::term(a, 1.0 / s).add(tv, -1.0),
            Sense::Le,
            1.0 + reg.initial / s,
        );
        g.row(
            format!("oltc_dev_dn[{}]", reg.location),
            LinExpr::term(a, -1.0 / s).add(tv, -1.0),
            Sense::Le,
            1.0 - reg.initial / s,
        );
    }
    for &r in &case.svrs {
        let reg = &grid.regulators[r];
        let loc = &reg.location;
        let link = cx.ratio_link_of(r);
        let (mid, to) = (net.lines[link].from, net.lines[link].to);
        let (tap, tv) = (ix.tap[&r], ix.t_dev[&r]);
        let group = &ix.delta[&r];
        let mut expand = LinExpr::var(tap);
        let mut one = LinExpr::new();
        for &(k, d) in group {
            expand.push(d, -(k as f64));
            one.push(d, 1.0);
        }
        g.row(format!("svr_tap[{loc}]"), expand, Sense::Eq, 0.0);
        g.row(format!("svr_select[{loc}]"), one, Sense::Eq, 1.0);
        g.sos1.push(Sos1 {
            name: format!("svr[{loc}]"),
            vars: group.iter().map(|&(_, d)| d).collect(),
            weights: group.iter().map(|&(k, _)| k as f64).collect(),
        });
        let r0 = reg.initial_tap() as f64;
        g.row(format!("svr_dev_up[{loc}]"), LinExpr::var(tap).add(tv, -1.0), Sense::Le, r0);
        g.row(format!("svr_dev_dn[{loc}]"), LinExpr::term(tap, -1.0).add(tv, -1.0), Sense::Le, -r0);
        let mv = cx.m.volt;
        for t in 0..ix.steps() {
            let h = cx.hour(t);
            let vi = ix.v[&(mid, t)];
            let mut beta = LinExpr::var(ix.beta[&(r, t)]);
            for &(k, d) in group.iter().filter(|(k, _)| *k != 0) {
                let b = ix.bk[&(r, k, t)];
                beta.push(b, -(k as f64));
                g.row(format!("svr_b_on[{loc},{k},t{h}]"), LinExpr::var(b).add(d, -mv), Sense::Le, 0.0);
                g.row(format!("svr_b_v[{loc},{k},t{h}]"), LinExpr::var(b).add(vi, -1.0), Sense::Le, 0.0);
                g.row(
                    format!("svr_b_lo[{loc},{k},t{h}]"),
                    LinExpr::term(b, -1.0).add(vi, 1.0).add(d, mv),
                    Sense::Le,
                    mv,
                );
            }
            g.row(format!("svr_beta[{loc},t{h}]"), beta, Sense::Eq, 0.0);
            g.row(
                format!("svr_v[{loc},t{h}]"),
                LinExpr::var(ix.v[&(to, t)]).add(vi, -1.0).add(ix.beta[&(r, t)], -2.0 * reg.sigma),
                Sense::Eq,
                0.0,
            );
        }
    }
    for &r in &case.cbs {
        let reg = &grid.regulators[r];
        let loc = &reg.location;
        let node = net.node(loc).expect("validated");
        let (tap, tv) = (ix.tap[&r], ix.t_dev[&r]);
        let r0 = reg.initial_tap() as f64;
        g.row(format!("cb_dev_up[{loc}]"), LinExpr::var(tap).add(tv, -1.0), Sense::Le, r0);
        g.row(format!("cb_dev_dn[{loc}]"), LinExpr::term(tap, -1.0).add(tv, -1.0), Sense::Le, -r0);
        let qmax = reg.dq_step * f64::from(reg.n_steps);
        for t in 0..ix.steps() {
            let h = cx.hour(t);
            let qc = ix.qcb[&(r, t)];
            match ix.x_node.get(&node) {
                None => g.row(
                    format!("cb_q[{loc},t{h}]"),
                    LinExpr::var(qc).add(tap, -reg.dq_step),
                    Sense::Eq,
                    0.0,
                ),
                Some(&x) => {
                    // The tap only acts while the node is energized.
                    g.row(
                        format!("cb_q_up[{loc},t{h}]"),
                        LinExpr::var(qc).add(tap, -reg.dq_step).add(x, qmax),
                        Sense::Le,
                        qmax,
                    );
                    g.row(
                        format!("cb_q_dn[{loc},t{h}]"),
                        LinExpr::term(qc, -1.0).add(tap, reg.dq_step).add(x, qmax),
                        Sense::Le,
                        qmax,
                    );
                    g.row(format!("cb_q_on[{loc},t{h}]"), LinExpr::var(qc).add(x, -qmax), Sense::Le, 0.0);
                }
            }
        }
    }
    g
}

/// Voltage-dependent demand. Outside the off-outage area
/// `P^D = P0 (1 + kp/2 (V - 1))`; inside it the voltage term is carried by
/// `w = L (V - 1)` so that a rejected or isolated load is curtailed at its
/// nominal demand.
pub fn build_load_model(case: &RestorationCase, ix: &VariableIndex, config: &BuildConfig) -> ConstraintGroup {
    let cx = Ctx::new(case, config);
    let mut g = ConstraintGroup::default();
    let mw = 1.0f64.max(cx.v2max - 1.0);
    for (&(i, t), &pd) in &ix.pd {
        let id = cx.node(i);
        let h = cx.hour(t);
        let (p0, q0) = cx.demand(i, t);
        let (kp, kq) = cx.load_params(i);
        let qd = ix.qd[&(i, t)];
        let v = ix.v[&(i, t)];
        match ix.w.get(&(i, t)) {
            None => {
                g.row(format!("load_p[{id},t{h}]"), LinExpr::var(pd).add(v, -p0 * kp / 2.0), Sense::Eq, p0 * (1.0 - kp / 2.0));
                g.row(format!("load_q[{id},t{h}]"), LinExpr::var(qd).add(v, -q0 * kq / 2.0), Sense::Eq, q0 * (1.0 - kq / 2.0));
            }
            Some(&w) => {
                let l = ix.l[&i];
                g.row(format!("load_p[{id},t{h}]"), LinExpr::var(pd).add(w, -p0 * kp / 2.0), Sense::Eq, p0);
                g.row(format!("load_q[{id},t{h}]"), LinExpr::var(qd).add(w, -q0 * kq / 2.0), Sense::Eq, q0);
                let (wlo, whi) = cx.w_range();
                g.row(format!("load_w_on_up[{id},t{h}]"), LinExpr::var(w).add(l, -whi), Sense::Le, 0.0);
                g.row(format!("load_w_on_dn[{id},t{h}]"), LinExpr::term(w, -1.0).add(l, wlo), Sense::Le, 0.0);
                g.row(
                    format!("load_w_up[{id},t{h}]"),
                    LinExpr::var(w).add(v, -1.0).add(l, mw),
                    Sense::Le,
                    mw - 1.0,
                );
                g.row(
                    format!("load_w_dn[{id},t{h}]"),
                    LinExpr::term(w, -1.0).add(v, 1.0).add(l, mw),
                    Sense::Le,
                    mw + 1.0,
                );
            }
        }
    }
    g
}

/// Curtailment, line limits, voltage drop, nodal balance, current cones and DG limits.
pub fn build_opf(case: &RestorationCase, ix: &VariableIndex, config: &BuildConfig) -> ConstraintGroup {
    let cx = Ctx::new(case, config);
    let mut g = ConstraintGroup::default();
    let (grid, net) = (cx.grid, cx.net);
    let m = cx.m;
    for t in 0..ix.steps() {
        let h = cx.hour(t);
        for (&(i, _), &pcur) in ix.pcur.iter().filter(|((_, tt), _)| *tt == t) {
            let id = cx.node(i);
            let l = ix.l[&i];
            for (tag, d, cur) in [("p", ix.pd[&(i, t)], pcur), ("q", ix.qd[&(i, t)], ix.qcur[&(i, t)])] {
                g.row(format!("served_{tag}_min[{id},t{h}]"), LinExpr::term(d, -1.0).add(cur, 1.0), Sense::Le, 0.0);
                g.row(
                    format!("served_{tag}_on[{id},t{h}]"),
                    LinExpr::var(d).add(cur, -1.0).add(l, -m.generic),
                    Sense::Le,
                    0.0,
                );
                g.row(format!("cur_{tag}_off[{id},t{h}]"), LinExpr::var(cur).add(l, m.generic), Sense::Le, m.generic);
            }
        }
        for &l in &case.lines {
            let line = &net.lines[l];
            let id = &line.id;
            let xl = ix.x_line_expr(l);
            let (f, p, q) = (ix.f[&(l, t)], ix.p[&(l, t)], ix.q[&(l, t)]);
            let vi = ix.v[&(line.from, t)];
            let vj = ix.v[&(line.to, t)];
            let switchable = !xl.terms.is_empty();
            if switchable {
                let mut e = LinExpr::var(f);
                e.add_scaled(&xl, -line.f_max * line.f_max);
                g.row(format!("ampacity[{id},t{h}]"), e, Sense::Le, 0.0);
                for (tag, v) in [("p", p), ("q", q)] {
                    let mut up = LinExpr::var(v);
                    up.add_scaled(&xl, -m.flow);
                    g.row(format!("flow_{tag}_up[{id},t{h}]"), up, Sense::Le, 0.0);
                    let mut dn = LinExpr::term(v, -1.0);
                    dn.add_scaled(&xl, -m.flow);
                    g.row(format!("flow_{tag}_dn[{id},t{h}]"), dn, Sense::Le, 0.0);
                }
            }
            if line.ratio_link.is_none() {
                let drop = LinExpr::var(vi).add(vj, -1.0).add(p, -2.0 * line.r).add(q, -2.0 * line.x);
                if switchable {
                    let mut up = drop.clone();
                    up.add_scaled(&xl, m.volt);
                    g.row(format!("vdrop_up[{id},t{h}]"), up, Sense::Le, m.volt);
                    let mut dn = drop.scaled(-1.0);
                    dn.add_scaled(&xl, m.volt);
                    g.row(format!("vdrop_dn[{id},t{h}]"), dn, Sense::Le, m.volt);
                } else {
                    g.row(format!("vdrop[{id},t{h}]"), drop, Sense::Eq, 0.0);
                }
                let thr2 = line.f_thr * line.f_thr;
                g.row(
                    format!("fdev[{id},t{h}]"),
                    LinExpr::var(f).add(ix.f_star[&(l, t)], -1.0),
                    Sense::Le,
                    thr2,
                );
            }
            g.cones.push(Cone {
                name: format!("current[{id},t{h}]"),
                head: LinExpr::var(f).add(vi, 1.0),
                tail: vec![
                    LinExpr::term(p, 2.0),
                    LinExpr::term(q, 2.0),
                    LinExpr::var(f).add(vi, -1.0),
                ],
            });
        }
        for &i in &case.nodes {
            let id = cx.node(i);
            let mut bp = ix.served_p(i, t);
            let mut bq = ix.served_q(i, t);
            for &(l, _) in net.incident(i) {
                if !case.contains_line(l) {
                    continue;
                }
                let line = &net.lines[l];
                let (p, q, f) = (ix.p[&(l, t)], ix.q[&(l, t)], ix.f[&(l, t)]);
                if line.from == i {
                    bp.push(p, 1.0);
                    bq.push(q, 1.0);
                } else {
                    bp.push(p, -1.0);
                    bp.push(f, line.r);
                    bq.push(q, -1.0);
                    bq.push(f, line.x);
                }
            }
            if let Some(&v) = ix.psub.get(&(i, t)) {
                bp.push(v, -1.0);
                bq.push(ix.qsub[&(i, t)], -1.0);
            }
            if let Some(d) = grid.dg_at(i).filter(|d| case.dgs.contains(d)) {
                bp.push(ix.pinj[&(d, t)], -1.0);
                bq.push(ix.qinj[&(d, t)], -1.0);
            }
            if let Some(r) = grid.cb_at(i).filter(|r| case.cbs.contains(r)) {
                bq.push(ix.qcb[&(r, t)], -1.0);
            }
            g.row(format!("balance_p[{id},t{h}]"), bp, Sense::Eq, 0.0);
            g.row(format!("balance_q[{id},t{h}]"), bq, Sense::Eq, 0.0);
            if let Some(&x) = ix.x_node.get(&i) {
                let v = ix.v[&(i, t)];
                g.row(format!("v_max[{id},t{h}]"), LinExpr::var(v).add(x, -cx.v2max), Sense::Le, 0.0);
                g.row(format!("v_min[{id},t{h}]"), LinExpr::term(v, -1.0).add(x, cx.v2min), Sense::Le, 0.0);
            }
            if let (Some(rating), Some(&ps)) = (grid.node_data(i).and_then(|n| n.rating), ix.psub.get(&(i, t))) {
                g.cones.push(Cone {
                    name: format!("sub_rating[{id},t{h}]"),
                    head: LinExpr::constant(rating),
                    tail: vec![LinExpr::var(ps), LinExpr::var(ix.qsub[&(i, t)])],
                });
            }
        }
        for &d in &case.dgs {
            let dg = &grid.dgs[d];
            let node = net.node(&dg.node).expect("validated");
            let (pi, qi) = (ix.pinj[&(d, t)], ix.qinj[&(d, t)]);
            if let Some(&x) = ix.x_node.get(&node) {
                g.row(format!("dg_p_on[{},t{h}]", dg.node), LinExpr::var(pi).add(x, -dg.p_max), Sense::Le, 0.0);
                g.row(format!("dg_q_up[{},t{h}]", dg.node), LinExpr::var(qi).add(x, -dg.q_max), Sense::Le, 0.0);
                g.row(format!("dg_q_dn[{},t{h}]", dg.node), LinExpr::term(qi, -1.0).add(x, dg.q_min), Sense::Le, 0.0);
            }
            g.cones.push(Cone {
                name: format!("dg_rating[{},t{h}]", dg.node),
                head: LinExpr::constant(dg.s_max),
                tail: vec![LinExpr::var(pi), LinExpr::var(qi)],
            });
        }
    }
    g
}

/// Staged objective terms. Each term is divided by its largest possible value.
pub fn build_objective(case: &RestorationCase, ix: &VariableIndex, config: &BuildConfig) -> (Vec<ObjectiveTerm>, Vec<String>) {
    let cx = Ctx::new(case, config);
    let (grid, net) = (cx.grid, cx.net);
    let w = config.weights;
    let mut notes = Vec::new();
    let mut norm = |name: &str, value: f64| {
        if value > 0.0 {
            value
        } else {
            notes.push(format!("objective term `{name}` has a zero normalization; using 1"));
            1.0
        }
    };

    let mut re = LinExpr::new();
    let mut re_max = 0.0;
    for (&(i, t), &pcur) in &ix.pcur {
        let prio = grid.node_data(i).map_or(1.0, |n| n.priority);
        re.push(pcur, prio);
        re.push(ix.qcur[&(i, t)], prio);
        let (p0, q0) = cx.demand(i, t);
        re_max += prio * (p0 + q0);
    }

    let mut sw = LinExpr::new();
    let mut sw_max = 0.0;
    for l in case.switched_lines() {
        let lambda = net.lines[l].switch.as_ref().map_or(1.0, |s| s.weight);
        sw_max += lambda;
        match ix.s.get(&l) {
            Some(&s) => sw.push(s, lambda),
            None => sw.push(ix.y[&l], lambda),
        }
    }
    for (&i, &b) in &ix.b {
        let lambda = grid.node_data(i).map_or(1.0, |n| n.breaker_weight);
        sw_max += lambda;
        sw.push(b, lambda);
    }

    let mut dev = LinExpr::new();
    let mut dev_max = 0.0;
    let mut loss = LinExpr::new();
    let mut loss_max = 0.0;
    for (&(l, _), &fs) in &ix.f_star {
        let line = &net.lines[l];
        dev.push(fs, 1.0);
        dev_max += line.f_max.powi(2) - line.f_thr.powi(2);
    }
    for (&(l, _), &f) in &ix.f {
        loss.push(f, 1.0);
        loss_max += net.lines[l].f_max.powi(2);
    }

    let mut taps = LinExpr::new();
    let mut taps_max = 0.0;
    for (&r, &tv) in &ix.t_dev {
        let reg = &grid.regulators[r];
        let n = f64::from(reg.n_steps);
        taps.push(tv, 1.0);
        taps_max += match reg.kind {
            RegulatorKind::Cb => n,
            _ => 2.0 * n,
        };
    }

    let terms = vec![
        ObjectiveTerm {
            name: "restoration".into(),
            norm: norm("restoration", re_max),
            expr: re,
            weight: 1.0,
            stage: STAGE_RESTORATION,
        },
        ObjectiveTerm {
            name: "switching".into(),
            norm: norm("switching", sw_max),
            expr: sw,
            weight: 1.0,
            stage: STAGE_SWITCHING,
        },
        ObjectiveTerm {
            name: "current_deviation".into(),
            norm: norm("current_deviation", dev_max),
            expr: dev,
            weight: w.w1,
            stage: STAGE_OPERATION,
        },
        ObjectiveTerm {
            name: "tap_changes".into(),
            norm: norm("tap_changes", taps_max),
            expr: taps,
            weight: w.w2,
            stage: STAGE_OPERATION,
        },
        ObjectiveTerm {
            name: "losses".into(),
            norm: norm("losses", loss_max),
            expr: loss,
            weight: 1.0,
            stage: STAGE_LOSSES,
        },
    ];
    (terms, notes)
}

/// Builds the complete program for `case`. Identical inputs give identical programs.
pub fn assemble(case: &RestorationCase, config: &BuildConfig) -> Result<BuiltProgram> {
    if case.horizon.is_empty() {
        return Err(Error::Build("empty horizon".into()));
    }
    let (mut program, index) = declare_variables(case, config);
    let mut all = ConstraintGroup::default();
    all.extend(build_reconfiguration(case, &index, config));
    all.extend(build_switching(case, &index, config));
    all.extend(build_regulators(case, &index, config));
    all.extend(build_load_model(case, &index, config));
    all.extend(build_opf(case, &index, config));
    let (objective, notes) = build_objective(case, &index, config);
    program.rows = all.rows;
    program.cones = all.cones;
    program.sos1 = all.sos1;
    program.objective = objective;
    program.stages = ["restoration", "switching", "operation", "losses"]
        .iter()
        .enumerate()
        .map(|(k, name)| Stage {
            name: name.to_string(),
            discrete: k != STAGE_LOSSES,
        })
        .collect();
    let w = config.weights;
    program.stage_weights = vec![w.re, w.sw, w.op];
    program.mode = ObjectiveMode::Stage(STAGE_RESTORATION);
    program.validate()?;
    let mut warnings = all.warnings;
    warnings.extend(notes);
    if case.no_restoration_path() {
        warnings.push("no available tie-switch: the off-outage area cannot be restored".into());
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(BuiltProgram {
        program,
        index,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_grid;
    use crate::topology::isolate_fault;
    use std::sync::Arc;

    fn stub() -> RestorationCase {
        let doc = r#"{
            "nodes": [
                {"id": "s", "kind": "substation"},
                {"id": "t", "kind": "substation"},
                {"id": "a", "kind": "load", "base_load_p": 0.1, "base_load_q": 0.05, "kp": 0.6}
            ],
            "lines": [
                {"id": "s-a", "from": "s", "to": "a", "r": 0.01, "x": 0.02, "f_max": 1, "f_thr": 0.5,
                 "switch": {"kind": "sectionalizing", "weight": 1}},
                {"id": "a-t", "from": "a", "to": "t", "r": 0.01, "x": 0.02, "f_max": 1, "f_thr": 0.5,
                 "switch": {"kind": "tie", "weight": 1, "normally_open": true}}
            ]
        }"#;
        let g = Arc::new(parse_grid(doc).unwrap());
        isolate_fault(g, "s-a", &[8, 9]).unwrap()
    }

    #[test]
    fn stub_counts() {
        let case = stub();
        let built = assemble(&case, &BuildConfig::default()).unwrap();
        let st = built.program.stats();
        // Y on the tie, L on the load.
        assert_eq!(st.binaries, 2);
        assert_eq!(st.integers, 0);
        // One line in W per step.
        assert_eq!(built.program.cones.len(), 2);
        assert_eq!(built.index.pcur.len(), 2);
    }

    #[test]
    fn assembly_is_deterministic() {
        let case = stub();
        let a = assemble(&case, &BuildConfig::default()).unwrap();
        let b = assemble(&case, &BuildConfig::default()).unwrap();
        assert_eq!(a.program, b.program);
    }

    #[test]
    fn empty_horizon_is_rejected() {
        let mut case = stub();
        case.horizon.clear();
        assert!(assemble(&case, &BuildConfig::default()).is_err());
    }
}
