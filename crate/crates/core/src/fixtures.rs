//! Bundled test systems and fault files.

use crate::grid::{parse_grid, Grid, GridDocument, Node};
use crate::topology::FaultSpec;

pub const D12_JSON: &str = include_str!("../fixtures/d12.json");
pub const D12_FAULT_1_2_JSON: &str = include_str!("../fixtures/d12_fault_1-2.json");
pub const D12_FAULT_5_6_JSON: &str = include_str!("../fixtures/d12_fault_5-6.json");
pub const D12_FAULTS_JSON: &str = include_str!("../fixtures/d12_faults.json");

/// Two five-line feeders fed from substations 1 and 12, joined by the
/// normally open tie 6-7.
pub fn d12() -> Grid {
    parse_grid(D12_JSON).expect("bundled D12 grid parses")
}

pub fn d12_fault_1_2() -> FaultSpec {
    FaultSpec::parse(D12_FAULT_1_2_JSON).expect("bundled fault parses")
}

pub fn d12_fault_5_6() -> FaultSpec {
    FaultSpec::parse(D12_FAULT_5_6_JSON).expect("bundled fault parses")
}

pub fn d12_faults() -> Vec<FaultSpec> {
    FaultSpec::parse_list(D12_FAULTS_JSON).expect("bundled fault list parses")
}

fn d12_with(edit: impl FnOnce(&mut GridDocument)) -> Grid {
    let mut doc = d12().to_document();
    edit(&mut doc);
    Grid::from_document(doc).expect("D12 variant is valid")
}

fn node_mut<'a>(doc: &'a mut GridDocument, id: &str) -> &'a mut Node {
    doc.nodes.iter_mut().find(|n| n.id == id).expect("node exists")
}

/// D12 with substation 12 rated below the demand of both feeders, a light
/// load at node 2 and a remote sectionalizer on 2-3. After fault 1-2 the
/// tie cannot carry the whole off-outage area.
pub fn d12_starved() -> Grid {
    d12_with(|doc| {
        node_mut(doc, "12").rating = Some(1.2);
        let n2 = node_mut(doc, "2");
        n2.base_load_p = 0.12;
        n2.base_load_q = 0.06;
        let sw = doc
            .lines
            .iter_mut()
            .find(|l| l.id == "2-3")
            .and_then(|l| l.switch.as_mut())
            .expect("2-3 is switched");
        sw.remote = true;
        sw.weight = 0.5;
    })
}

/// D12 with lighter priority loads at nodes 3 and 5, heavier ordinary
/// loads at 2, 4 and 6 and a rated substation 12. Shedding the priority
/// pair is the smallest curtailment in energy.
pub fn d12_priority() -> Grid {
    d12_with(|doc| {
        node_mut(doc, "12").rating = Some(1.45);
        for (id, p) in [("2", 0.3), ("3", 0.2), ("4", 0.3), ("5", 0.2), ("6", 0.3)] {
            let n = node_mut(doc, id);
            n.base_load_p = p;
            n.base_load_q = p / 2.0;
        }
    })
}

/// D12 with a second tie `6-7b` in parallel with `6-7`, identical except
/// that it is remotely controlled and cheaper to operate.
pub fn d12_twin_ties() -> Grid {
    d12_with(|doc| {
        let mut tie = doc.lines.iter().find(|l| l.id == "6-7").expect("tie exists").clone();
        tie.id = "6-7b".into();
        let sw = tie.switch.as_mut().expect("tie is switched");
        sw.remote = true;
        sw.weight = 0.5;
        doc.lines.push(tie);
    })
}
