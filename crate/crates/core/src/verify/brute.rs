//! Exhaustive enumeration of the discrete decisions of small cases.
//!
//! Switch states are enumerated over every switched line of the off-outage
//! area. Zone energization follows from the closed switches, so each switch
//! configuration fixes `E` and `X`; load connection is enumerated for
//! energized nodes with demand, and taps over their admissible range. The
//! restoration and switching objectives of a candidate are known without a
//! solve, so candidates are visited in that order and the continuous program
//! is solved only where it can still decide the outcome.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{BuiltProgram, STAGE_RESTORATION, STAGE_SWITCHING};
use crate::error::{Error, Result};
use crate::grid::{RegulatorKind, UnionFind};
use crate::program::VarId;
use crate::solver::{evaluate_plan, Fixings, SolverConfig, StageMode};
use crate::topology::RestorationCase;

/// Switch configurations are enumerated bit by bit; more than this many
/// switched lines is refused outright.
const MAX_SWITCHES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BruteCaps {
    /// Largest number of candidate plans accepted.
    pub max_combos: u128,
    /// Skip switch configurations whose energized zones do not form trees
    /// hanging from exactly one feeder each.
    pub filter: bool,
    pub parallel: bool,
}

impl Default for BruteCaps {
    fn default() -> Self {
        Self {
            max_combos: 1 << 20,
            filter: true,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BruteForceResult {
    /// `None` when no candidate is feasible.
    pub best: Option<BruteBest>,
    /// Switch configurations considered.
    pub switch_configs: u128,
    /// Configurations left after the graph filter.
    pub valid_configs: usize,
    /// Candidate plans (switches, loads and taps).
    pub candidates: usize,
    /// Continuous programs solved.
    pub evaluated: usize,
    pub feasible: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteBest {
    pub plan: Fixings,
    /// Discrete variables in program order.
    pub key: Vec<f64>,
    pub x: Vec<f64>,
    pub stage_values: Vec<f64>,
}

/// A tap-like decision: variable, admissible integer positions and the
/// value written into the variable per position.
#[derive(Clone, Debug)]
struct TapChoice {
    var: VarId,
    positions: Vec<i64>,
    scale: f64,
    /// SVR selection binaries, `(k, var)`.
    delta: Vec<(i64, VarId)>,
}

#[derive(Clone, Debug)]
struct Config {
    y: Vec<bool>,
    zone_on: BTreeMap<usize, bool>,
}

#[derive(Clone, Debug)]
struct Candidate {
    config: usize,
    /// Connection of the energized demand nodes of the configuration.
    loads: u64,
    taps: Vec<i64>,
    re: f64,
    sw: f64,
    key: Vec<f64>,
}

struct Enumerator<'a> {
    built: &'a BuiltProgram,
    case: &'a RestorationCase,
    switches: Vec<usize>,
    configs: Vec<Config>,
    /// Energized demand nodes per configuration.
    free_loads: Vec<Vec<usize>>,
    taps: Vec<TapChoice>,
}

impl<'a> Enumerator<'a> {
    fn new(built: &'a BuiltProgram, case: &'a RestorationCase, caps: &BruteCaps) -> Result<Self> {
        let switches = case.switched_lines();
        if switches.len() > MAX_SWITCHES {
            return Err(Error::CapExceeded {
                combos: 1u128 << switches.len(),
                cap: caps.max_combos,
            });
        }
        let configs = switch_configs(case, &switches, caps.filter);
        let ix = &built.index;
        let free_loads = configs
            .iter()
            .map(|c| {
                case.outage_nodes
                    .iter()
                    .copied()
                    .filter(|&i| c.zone_on[&case.zones.node_zone[i]] && ix.pd.contains_key(&(i, 0)))
                    .collect()
            })
            .collect();
        let program = &built.program;
        let grid = case.grid.as_ref();
        let mut taps = Vec::new();
        for (&r, &a) in &ix.alpha {
            let var = program.var(a);
            if !var.is_fixed() {
                let reg = &grid.regulators[r];
                let n = i64::from(reg.n_steps);
                taps.push(TapChoice {
                    var: a,
                    positions: (-n..=n).collect(),
                    scale: reg.sigma,
                    delta: Vec::new(),
                });
            }
        }
        for (&r, &d) in &ix.tap {
            let var = program.var(d);
            let delta = if grid.regulators[r].kind == RegulatorKind::Svr {
                ix.delta[&r].clone()
            } else {
                Vec::new()
            };
            taps.push(TapChoice {
                var: d,
                positions: (var.lower.round() as i64..=var.upper.round() as i64).collect(),
                scale: 1.0,
                delta,
            });
        }
        Ok(Self {
            built,
            case,
            switches,
            configs,
            free_loads,
            taps,
        })
    }

    fn count(&self) -> u128 {
        let taps: u128 = self.taps.iter().map(|t| t.positions.len() as u128).product();
        self.free_loads.iter().map(|f| (1u128 << f.len()) * taps).sum()
    }

    fn plan(&self, c: &Candidate) -> Fixings {
        let ix = &self.built.index;
        let cfg = &self.configs[c.config];
        let mut plan = Fixings::new();
        for (k, &l) in self.switches.iter().enumerate() {
            plan.fix(ix.y[&l], f64::from(u8::from(cfg.y[k])));
        }
        for (&z, &e) in &ix.e {
            plan.fix(e, f64::from(u8::from(cfg.zone_on[&z])));
        }
        for (&i, &x) in &ix.x_node {
            plan.fix(x, f64::from(u8::from(cfg.zone_on[&self.case.zones.node_zone[i]])));
        }
        for (&l, &x) in &ix.x_line {
            let z = self.case.zones.line_zone[l].expect("unswitched lines lie in a zone");
            plan.fix(x, f64::from(u8::from(cfg.zone_on[&z])));
        }
        let free = &self.free_loads[c.config];
        for (&i, &l) in &ix.l {
            let on = cfg.zone_on[&self.case.zones.node_zone[i]];
            let val = match free.iter().position(|&j| j == i) {
                Some(b) => (c.loads >> b) & 1 == 1,
                // Energized nodes without demand keep their breaker closed.
                None => on,
            };
            plan.fix(l, f64::from(u8::from(val)));
        }
        for (t, &pos) in self.taps.iter().zip(&c.taps) {
            plan.fix(t.var, pos as f64 * t.scale);
            for &(k, d) in &t.delta {
                plan.fix(d, f64::from(u8::from(k == pos)));
            }
        }
        plan
    }

    /// Exact restoration and switching objectives of a plan.
    fn analytic(&self, plan: &Fixings) -> (f64, f64) {
        let program = &self.built.program;
        let ix = &self.built.index;
        let mut x = vec![0.0; program.variables.len()];
        for (v, (lo, _)) in plan.iter() {
            x[v.0] = lo;
        }
        let val = |v: VarId| x[v.0];
        let mut extra = Vec::new();
        for (&(i, t), &pc) in &ix.pcur {
            if val(ix.l[&i]) < 0.5 {
                let (p0, q0) = ix.nominal[&(i, t)];
                extra.push((pc, p0));
                extra.push((ix.qcur[&(i, t)], q0));
            }
        }
        let net = self.case.grid.network();
        for (&l, &s) in &ix.s {
            let line = &net.lines[l];
            let ends = val(ix.x_node[&line.from]).max(val(ix.x_node[&line.to]));
            extra.push((s, (ends - val(ix.y[&l])).max(0.0)));
        }
        for (&i, &b) in &ix.b {
            extra.push((b, (val(ix.x_node[&i]) - val(ix.l[&i])).max(0.0)));
        }
        for (v, value) in extra {
            x[v.0] = value;
        }
        (
            program.stage_value(STAGE_RESTORATION, &x),
            program.stage_value(STAGE_SWITCHING, &x),
        )
    }

    fn candidates(&self) -> Vec<Candidate> {
        let discrete = self.built.program.discrete_vars();
        let mut out = Vec::new();
        for (ci, free) in self.free_loads.iter().enumerate() {
            for loads in 0..(1u64 << free.len()) {
                let mut taps = vec![0i64; self.taps.len()];
                loop {
                    let tap_values: Vec<i64> =
                        taps.iter().zip(&self.taps).map(|(&k, t)| t.positions[k as usize]).collect();
                    let mut c = Candidate {
                        config: ci,
                        loads,
                        taps: tap_values,
                        re: 0.0,
                        sw: 0.0,
                        key: Vec::new(),
                    };
                    let plan = self.plan(&c);
                    (c.re, c.sw) = self.analytic(&plan);
                    c.key = discrete.iter().map(|&v| plan.get(v).map_or(f64::NAN, |b| b.0)).collect();
                    out.push(c);
                    // Odometer over tap positions.
                    let mut k = 0;
                    while k < taps.len() {
                        taps[k] += 1;
                        if (taps[k] as usize) < self.taps[k].positions.len() {
                            break;
                        }
                        taps[k] = 0;
                        k += 1;
                    }
                    if k == taps.len() {
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Every switch configuration, or only those whose closed switches connect
/// the energized zones as trees with exactly one feeder each.
fn switch_configs(case: &RestorationCase, switches: &[usize], filter: bool) -> Vec<Config> {
    let net = case.grid.network();
    // Healthy parts outside the off-outage area stay connected to their feeder.
    let mut feeder = UnionFind::new(net.node_count());
    for &l in &case.lines {
        if !case.is_outage_line(l) {
            feeder.union(net.lines[l].from, net.lines[l].to);
        }
    }
    let zone_slot: BTreeMap<usize, usize> = case.outage_zones.iter().enumerate().map(|(k, &z)| (z, k)).collect();
    let nz = zone_slot.len();
    let mut feeder_slot = BTreeMap::new();
    let mut vertex = |node: usize, feeder: &mut UnionFind| -> usize {
        if case.is_outage(node) {
            zone_slot[&case.zones.node_zone[node]]
        } else {
            let root = feeder.find(node);
            let next = nz + feeder_slot.len();
            *feeder_slot.entry(root).or_insert(next)
        }
    };
    let ends: Vec<(usize, usize)> = switches
        .iter()
        .map(|&l| (vertex(net.lines[l].from, &mut feeder), vertex(net.lines[l].to, &mut feeder)))
        .collect();
    let nv = nz + feeder_slot.len();

    let mut out = Vec::new();
    for mask in 0..(1u64 << switches.len()) {
        let y: Vec<bool> = (0..switches.len()).map(|k| (mask >> k) & 1 == 1).collect();
        let mut uf = UnionFind::new(nv);
        let mut acyclic = true;
        let mut touched = vec![false; nv];
        for (k, &(a, b)) in ends.iter().enumerate() {
            if y[k] {
                acyclic &= uf.union(a, b);
                touched[a] = true;
                touched[b] = true;
            }
        }
        let mut feeders_in = vec![0usize; nv];
        for v in nz..nv {
            feeders_in[uf.find(v)] += 1;
        }
        let valid = acyclic && (0..nv).filter(|&v| touched[v]).all(|v| feeders_in[uf.find(v)] == 1);
        if filter && !valid {
            continue;
        }
        let zone_on = zone_slot
            .iter()
            .map(|(&z, &s)| (z, feeders_in[uf.find(s)] >= 1))
            .collect();
        out.push(Config { y, zone_on });
    }
    out
}

fn chunk_size(parallel: bool) -> usize {
    if parallel {
        2 * rayon::current_num_threads()
    } else {
        1
    }
}

/// Lexicographic optimum over all enumerated plans, with ties on the last
/// objective broken by the smallest discrete vector.
pub fn brute_force(built: &BuiltProgram, case: &RestorationCase, caps: &BruteCaps, config: &SolverConfig) -> Result<BruteForceResult> {
    let cfg = SolverConfig {
        mode: StageMode::Lexicographic,
        ..config.clone()
    };
    cfg.validate()?;
    let en = Enumerator::new(built, case, caps)?;
    let total = en.count();
    if total > caps.max_combos {
        return Err(Error::CapExceeded {
            combos: total,
            cap: caps.max_combos,
        });
    }
    let mut cands = en.candidates();
    let mut res = BruteForceResult {
        switch_configs: 1u128 << en.switches.len(),
        valid_configs: en.configs.len(),
        candidates: cands.len(),
        ..Default::default()
    };
    cands.sort_by(|a, b| {
        a.re.total_cmp(&b.re)
            .then(a.sw.total_cmp(&b.sw))
            .then_with(|| crate::solver::compare_keys(&a.key, &b.key))
    });

    let program = &built.program;
    let mut cache: BTreeMap<usize, Option<(Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    let run = |idx: &[usize], cache: &mut BTreeMap<usize, Option<(Vec<f64>, Vec<f64>)>>, res: &mut BruteForceResult| -> Result<()> {
        let todo: Vec<usize> = idx.iter().copied().filter(|i| !cache.contains_key(i)).collect();
        let eval = |&i: &usize| -> Result<(usize, Option<(Vec<f64>, Vec<f64>)>)> {
            let e = evaluate_plan(program, &en.plan(&cands[i]), &cfg)?;
            Ok((i, e.feasible.then_some((e.x, e.stage_values))))
        };
        let done: Vec<_> = if caps.parallel {
            todo.par_iter().map(eval).collect::<Result<_>>()?
        } else {
            todo.iter().map(eval).collect::<Result<_>>()?
        };
        for (i, r) in done {
            res.evaluated += 1;
            res.feasible += usize::from(r.is_some());
            cache.insert(i, r);
        }
        Ok(())
    };
    let chunk = chunk_size(caps.parallel);

    // Smallest restoration objective with a feasible plan.
    let mut re_best = None;
    'outer: for start in (0..cands.len()).step_by(chunk) {
        let idx: Vec<usize> = (start..(start + chunk).min(cands.len())).collect();
        run(&idx, &mut cache, &mut res)?;
        for i in idx {
            if cache[&i].is_some() {
                re_best = Some(cands[i].re);
                break 'outer;
            }
        }
    }
    let Some(re_best) = re_best else {
        return Ok(res);
    };
    let re_lim = re_best + cfg.stage_eps * re_best.abs().max(1.0);
    let mut band: Vec<usize> = (0..cands.len()).take_while(|&i| cands[i].re <= re_lim).collect();
    band.sort_by(|&a, &b| {
        cands[a].sw.total_cmp(&cands[b].sw).then_with(|| crate::solver::compare_keys(&cands[a].key, &cands[b].key))
    });

    // Smallest switching objective within the band, then every candidate that ties it.
    let mut sw_lim = f64::INFINITY;
    let mut pos = 0;
    while pos < band.len() && cands[band[pos]].sw <= sw_lim {
        let mut idx = Vec::new();
        while idx.len() < chunk && pos < band.len() && cands[band[pos]].sw <= sw_lim {
            idx.push(band[pos]);
            pos += 1;
        }
        run(&idx, &mut cache, &mut res)?;
        if sw_lim.is_infinite() {
            if let Some(&i) = idx.iter().find(|i| cache[i].is_some()) {
                let sw = cands[i].sw;
                sw_lim = sw + cfg.stage_eps * sw.abs().max(1.0);
            }
        }
    }
    let finalists: Vec<usize> = band[..pos]
        .iter()
        .copied()
        .filter(|i| cands[*i].sw <= sw_lim && cache[i].is_some())
        .collect();
    let op_of = |i: usize| {
        let (_, sv) = cache[&i].as_ref().expect("finalists are feasible");
        sv.get(crate::builder::STAGE_OPERATION).copied().unwrap_or(0.0)
    };
    let op_min = finalists.iter().map(|&i| op_of(i)).fold(f64::INFINITY, f64::min);
    let winner = finalists
        .iter()
        .copied()
        .filter(|&i| op_of(i) <= op_min + cfg.tie_tol)
        .min_by(|&a, &b| crate::solver::compare_keys(&cands[a].key, &cands[b].key).then(Ordering::Equal))
        .expect("at least one finalist");
    let (x, stage_values) = cache.remove(&winner).flatten().expect("winner is feasible");
    res.best = Some(BruteBest {
        plan: en.plan(&cands[winner]),
        key: cands[winner].key.clone(),
        x,
        stage_values,
    });
    Ok(res)
}
