//! Leader machine behaviour driven frame by frame, without a network.

use monaas::codec::{CommandPayload, Frame, Payload};
use monaas::model::{Capability, CapabilitySet, LeaderDomain, NodeId, NodeState, Priority, QoS, Task, TimeWindow};
use monaas::roles::{Effect, LeaderMachine, Observation, Phase};
use monaas::scheduler::{LeaderContext, ResourcePool};
use monaas::sim::scenario::Params;
use monaas::sim::suite::{CYCLE, FRAME};

const ROOT: NodeId = NodeId(0);
const LEADER: NodeId = NodeId(1);

fn basic() -> CapabilitySet {
    CapabilitySet::EMPTY.with(Capability::BasicSensing)
}

fn leader(pool_slots: impl IntoIterator<Item = u16>) -> LeaderMachine {
    let members = [NodeId(3), NodeId(4)];
    let domain = LeaderDomain::new(LEADER, members);
    let mut ctx = LeaderContext::new(LEADER, domain, ResourcePool::new(pool_slots), 2.02);
    for m in members {
        ctx.states.insert(m, NodeState { battery: 0.9, queue_len: 0, zone: 1, capabilities: basic() });
    }
    LeaderMachine::new(LEADER, ROOT, ctx, FRAME, Params::default())
}

fn task(id: u16, caps: CapabilitySet, rate: f64) -> Task {
    Task {
        id,
        priority: Priority::High,
        qos: QoS::new(2000, 0.9).unwrap(),
        c_req: caps,
        zone: 1,
        window: TimeWindow::new(0, 10 * CYCLE).unwrap(),
        rate,
        min_nodes: 1,
    }
}

fn from_root(t: Task) -> Frame {
    Frame::new(ROOT, LEADER, 0, 0, Payload::Command(CommandPayload::TaskRequest { task: t, cells: Vec::new() }))
}

fn obs(asn: u64) -> Observation {
    Observation { cycle_start: asn % CYCLE == 0, cycle_len: CYCLE, slot_ms: 20, ..Observation::default() }
}

fn logs(fx: &[Effect]) -> Vec<&str> {
    fx.iter().filter_map(|e| if let Effect::Log { note, .. } = e { Some(note.as_str()) } else { None }).collect()
}

fn sends_to_root(fx: &[Effect]) -> Vec<&CommandPayload> {
    fx.iter()
        .filter_map(|e| match e {
            Effect::Send { dst, payload: Payload::Command(c) } if *dst == ROOT => Some(c),
            _ => None,
        })
        .collect()
}

fn recruitment_beacons(fx: &[Effect]) -> usize {
    fx.iter().filter(|e| matches!(e, Effect::Broadcast(Payload::Beacon(Some(_))))).count()
}

#[test]
fn local_task_uses_the_pool_alone() {
    let mut l = leader(10..60);
    let fx = l.handle_frame(&from_root(task(1, basic(), 1.0)), None, 0);
    assert!(sends_to_root(&fx).is_empty(), "{fx:?}");
    assert_eq!(recruitment_beacons(&fx), 0);
    let assigned: Vec<_> = fx
        .iter()
        .filter(|e| matches!(e, Effect::Send { payload: Payload::Command(CommandPayload::TaskRequest { .. }), .. }))
        .collect();
    assert_eq!(assigned.len(), 1);
    assert_eq!(l.ledger[&1].phase, Phase::Running);
}

#[test]
fn silent_root_fails_the_task_after_the_timeout() {
    let mut l = leader(10..12);
    let fx = l.handle_frame(&from_root(task(1, basic(), 1.0)), None, 5);
    assert!(matches!(sends_to_root(&fx)[..], [CommandPayload::ResourceRequest { task_id: 1, .. }]));
    let timeout = Params::default().root_timeout;
    let early = l.tick(5 + timeout - 1, &obs(5 + timeout - 1));
    assert!(!logs(&early).iter().any(|n| n.starts_with("fail")));
    let fx = l.tick(5 + timeout, &obs(5 + timeout));
    assert!(logs(&fx).contains(&"root_timeout"));
    assert!(logs(&fx).contains(&"fail;why=slots"));
    assert!(sends_to_root(&fx)
        .iter()
        .any(|c| matches!(c, CommandPayload::TaskCompletion { task_id: 1, success: false, .. })));
    assert_eq!(l.ledger[&1].phase, Phase::Failed);
}

#[test]
fn recruitment_without_joins_fails_for_capability() {
    let mut l = leader(10..60);
    let gas = CapabilitySet::EMPTY.with(Capability::GasSensor);
    let fx = l.handle_frame(&from_root(task(2, gas, 1.0)), None, 7);
    assert_eq!(recruitment_beacons(&fx), 1);
    let p = Params::default();
    let mut beacons = 1;
    let mut failed = Vec::new();
    for asn in 8..=7 + p.recruit_window {
        let fx = l.tick(asn, &obs(asn));
        beacons += recruitment_beacons(&fx);
        failed.extend(logs(&fx).into_iter().filter(|n| n.starts_with("fail")).map(str::to_string));
    }
    assert_eq!(beacons, p.recruit_beacons as usize);
    assert_eq!(failed, ["fail;why=capability"]);
    assert_eq!(l.ledger[&2].phase, Phase::Failed);
}

#[test]
fn one_plain_beacon_per_cycle() {
    let mut l = leader(10..60);
    let mut plain = 0;
    for asn in 0..100 * CYCLE {
        plain += l.tick(asn, &obs(asn)).iter().filter(|e| matches!(e, Effect::Beacon(Payload::Beacon(None)))).count();
    }
    assert_eq!(plain, 100);
}

#[test]
fn completion_reports_success_from_on_time_data() {
    let mut l = leader(10..60);
    l.handle_frame(&from_root(task(3, basic(), 1.0)), None, 0);
    let exec = l.ledger[&3].assigned_nodes[0];
    let progress = Frame::new(exec, LEADER, 50, 1, Payload::Command(CommandPayload::TaskProgress { task_id: 3, packets: 10 }));
    l.handle_frame(&progress, None, 50);
    l.ledger.get_mut(&3).unwrap().received = 9;
    let end = 10 * CYCLE;
    let fx = l.tick(end, &obs(end));
    assert!(sends_to_root(&fx)
        .iter()
        .any(|c| matches!(c, CommandPayload::TaskCompletion { task_id: 3, success: true, count: 9 })));
    assert_eq!(l.ledger[&3].phase, Phase::Completed);
}
