//! The four built-in scenarios on the 11-node two-domain topology: Root 0,
//! Leaders 1 and 2, static members 3–7 and mobiles 8–10.

use crate::model::{Capability, CapabilitySet, NodeId, NodeRole, Priority, QoS, Task, TimeWindow};
use crate::sim::scenario::{
    Degradation, LinkSpec, MobilityAction, MobilityEvent, NodeSpec, Params, Scenario, TaskInjection,
};
use crate::model::CapabilityRegistry;
use crate::sim::scenario::Layout;
use crate::tsch::Slotframe;

/// 101 slots × 20 ms: one cycle is 2.02 s.
pub const FRAME: Slotframe = Slotframe { length: 101, slot_duration_ms: 20, num_channels: 16 };
pub const CYCLE: u64 = 101;

pub const ROOT: NodeId = NodeId(0);
pub const L1: NodeId = NodeId(1);
pub const L2: NodeId = NodeId(2);
pub const MOBILE_ENV: NodeId = NodeId(8);
pub const MOBILE_VISUAL: NodeId = NodeId(9);
pub const MOBILE_ACT: NodeId = NodeId(10);

pub const NAMES: [&str; 4] = ["s1_stable", "s2_stress", "s3_mobile", "s4_critical"];

const MEMBER_P: f64 = 0.95;
const MOBILE_P: f64 = 0.9;
const BACKBONE_P: f64 = 0.99;

fn caps(list: &[Capability]) -> CapabilitySet {
    list.iter().fold(CapabilitySet::EMPTY, |s, c| s.with(*c))
}

pub fn env_caps() -> CapabilitySet {
    caps(&[Capability::BasicSensing, Capability::GasSensor, Capability::TemperatureSensor])
}

pub fn visual_caps() -> CapabilitySet {
    caps(&[Capability::HdCamera, Capability::VisualInspection])
}

pub fn actuation_caps() -> CapabilitySet {
    caps(&[Capability::ManipulatorArm, Capability::Actuation])
}

/// Nodes and links shared by every scenario. Mobiles start attached when
/// `mobiles_attached`.
fn topology(background_rate: f64, mobiles_attached: bool) -> (Vec<NodeSpec>, Vec<LinkSpec>) {
    let basic = caps(&[Capability::BasicSensing]);
    let mut nodes = vec![
        NodeSpec {
            id: ROOT,
            role: NodeRole::Root,
            zone: 0,
            caps: CapabilitySet::EMPTY,
            battery: 1.0,
            parent: None,
            rate: 0.0,
            base_slots: 0,
        },
        NodeSpec { id: L1, role: NodeRole::Leader, zone: 1, base_slots: 30, ..leader() },
        NodeSpec { id: L2, role: NodeRole::Leader, zone: 2, base_slots: 18, ..leader() },
    ];
    let members = [(3, 1, 0.9), (4, 1, 0.85), (5, 1, 0.8), (6, 2, 0.9), (7, 2, 0.8)];
    for (id, zone, battery) in members {
        nodes.push(NodeSpec {
            id: NodeId(id),
            role: NodeRole::Member,
            zone,
            caps: basic,
            battery,
            parent: Some(NodeId(zone as u16)),
            rate: background_rate,
            base_slots: 0,
        });
    }
    let mobiles = [(MOBILE_ENV, L1, env_caps(), 0.85), (MOBILE_VISUAL, L2, visual_caps(), 0.7), (MOBILE_ACT, L1, actuation_caps(), 0.6)];
    for (id, home, c, battery) in mobiles {
        nodes.push(NodeSpec {
            id,
            role: NodeRole::Mobile,
            zone: home.0 as u8,
            caps: c,
            battery,
            parent: mobiles_attached.then_some(home),
            rate: if mobiles_attached { background_rate / 2.0 } else { 0.0 },
            base_slots: 0,
        });
    }

    let mut links = vec![
        LinkSpec { a: ROOT, b: L1, p: BACKBONE_P, symmetric: true },
        LinkSpec { a: ROOT, b: L2, p: BACKBONE_P, symmetric: true },
    ];
    for (id, zone, _) in members {
        links.push(LinkSpec { a: NodeId(zone as u16), b: NodeId(id), p: MEMBER_P, symmetric: true });
    }
    if mobiles_attached {
        for (id, home, _, _) in mobiles {
            links.push(LinkSpec { a: home, b: id, p: MOBILE_P, symmetric: true });
        }
    }
    (nodes, links)
}

fn leader() -> NodeSpec {
    NodeSpec {
        id: L1,
        role: NodeRole::Leader,
        zone: 1,
        caps: CapabilitySet::EMPTY,
        battery: 1.0,
        parent: None,
        rate: 0.0,
        base_slots: 0,
    }
}

#[allow(clippy::too_many_arguments)]
fn task(id: u16, inject: u64, leader: NodeId, priority: Priority, c_req: CapabilitySet, rate: f64, pdr: f64, lat_ms: u32, cycles: u64) -> TaskInjection {
    TaskInjection {
        inject,
        leader,
        task: Task {
            id,
            priority,
            qos: QoS::new(lat_ms, pdr).expect("valid QoS"),
            c_req,
            zone: leader.0 as u8,
            window: TimeWindow::new(inject, inject + cycles * CYCLE).expect("valid window"),
            rate,
            min_nodes: 1,
        },
    }
}

fn base(name: &str, duration_cycles: u64, warmup_cycles: u64, background_rate: f64, mobiles_attached: bool) -> Scenario {
    let (nodes, links) = topology(background_rate, mobiles_attached);
    Scenario {
        name: name.to_string(),
        seed: 1,
        duration: duration_cycles * CYCLE,
        warmup: warmup_cycles * CYCLE,
        strategy: None,
        slotframe: FRAME,
        t_sf: 2.02,
        layout: Layout::default(),
        registry: CapabilityRegistry::default(),
        nodes,
        links,
        tasks: Vec::new(),
        mobility: Vec::new(),
        degradations: Vec::new(),
        params: Params::default(),
    }
}

/// Stable network at 1 pkt/s with two routine tasks.
pub fn s1_stable() -> Scenario {
    let mut sc = base(NAMES[0], 60, 5, 1.0, true);
    let basic = caps(&[Capability::BasicSensing]);
    sc.tasks = vec![
        task(1, 10 * CYCLE, L1, Priority::Medium, basic, 1.0, 0.9, 2000, 10),
        task(2, 35 * CYCLE, L2, Priority::Medium, basic, 1.0, 0.9, 2000, 10),
    ];
    sc
}

/// Critical tasks at five times the S1 injection rate while two member
/// links of Leader 1 drop to p = 0.5.
pub fn s2_stress() -> Scenario {
    let mut sc = base(NAMES[1], 120, 5, 1.0, true);
    let basic = caps(&[Capability::BasicSensing]);
    sc.tasks = (0..20)
        .map(|i| task(i + 1, (10 + 5 * i as u64) * CYCLE, L1, Priority::Critical, basic, 0.75, 0.9, 1500, 10))
        .collect();
    sc.degradations = [3, 4]
        .iter()
        .map(|m| Degradation { asn: 10 * CYCLE, a: L1, b: NodeId(*m), p: 0.5, symmetric: true })
        .collect();
    sc
}

/// Three tasks that each need a mobile entering range at the injection ASN.
pub fn s3_mobile() -> Scenario {
    let mut sc = base(NAMES[2], 60, 5, 1.0, false);
    let plan = [
        (1, 10, L1, env_caps().difference(caps(&[Capability::BasicSensing])), MOBILE_ENV),
        (2, 25, L2, visual_caps(), MOBILE_VISUAL),
        (3, 40, L1, actuation_caps(), MOBILE_ACT),
    ];
    for (id, cycle, leader, need, mobile) in plan {
        let t = task(id, cycle * CYCLE, leader, Priority::High, need, 1.0, 0.9, 2000, 10);
        let leave = t.task.window.end + CYCLE;
        sc.tasks.push(t);
        sc.mobility.push(MobilityEvent { asn: cycle * CYCLE, node: mobile, action: MobilityAction::EnterRange { leader, p: MOBILE_P } });
        sc.mobility.push(MobilityEvent { asn: leave, node: mobile, action: MobilityAction::LeaveRange });
    }
    sc
}

/// A Critical task injected 4 s into the measured period of a loaded
/// network (2 pkt/s background).
pub fn s4_critical() -> Scenario {
    let mut sc = base(NAMES[3], 50, 10, 2.0, true);
    let basic = caps(&[Capability::BasicSensing]);
    sc.tasks = vec![task(1, 10 * CYCLE + 200, L1, Priority::Critical, basic, 2.0, 0.9, 1000, 15)];
    sc
}

pub fn scenario_suite() -> Vec<Scenario> {
    vec![s1_stable(), s2_stress(), s3_mobile(), s4_critical()]
}

/// Looks up a built-in by full name or short form (`s1` … `s4`).
pub fn builtin(name: &str) -> Option<Scenario> {
    scenario_suite().into_iter().find(|s| s.name == name || s.name.split('_').next() == Some(name))
}
