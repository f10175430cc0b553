//! Drives a leader through a task that its own pool cannot cover, playing the
//! root by hand.

use monaas::codec::{CommandPayload, Frame, Payload};
use monaas::model::{Capability, CapabilitySet, LeaderDomain, NodeId, NodeState, Priority, QoS, Task, TimeWindow};
use monaas::roles::{Effect, LeaderMachine};
use monaas::scheduler::{LeaderContext, ResourcePool};
use monaas::sim::scenario::Params;
use monaas::sim::suite::{CYCLE, FRAME};

const ROOT: NodeId = NodeId(0);
const LEADER: NodeId = NodeId(1);

fn show(asn: u64, fx: &[Effect]) {
    for e in fx {
        match e {
            Effect::Send { dst, payload } => println!("{asn:>5} send to {}: {payload:?}", dst.0),
            Effect::Log { note, .. } => println!("{asn:>5} log {note}"),
            _ => {}
        }
    }
}

fn main() {
    let basic = CapabilitySet::EMPTY.with(Capability::BasicSensing);
    let members = [NodeId(3), NodeId(4)];
    let mut ctx = LeaderContext::new(LEADER, LeaderDomain::new(LEADER, members), ResourcePool::new(10..14), 2.02);
    for m in members {
        ctx.states.insert(m, NodeState { battery: 0.9, queue_len: 0, zone: 1, capabilities: basic });
    }
    let mut leader = LeaderMachine::new(LEADER, ROOT, ctx, FRAME, Params::default());

    let task = Task {
        id: 1,
        priority: Priority::High,
        qos: QoS::new(2000, 0.9).unwrap(),
        c_req: basic,
        zone: 1,
        window: TimeWindow::new(0, 10 * CYCLE).unwrap(),
        rate: 1.0,
        min_nodes: 1,
    };
    let req = Frame::new(ROOT, LEADER, 0, 0, Payload::Command(CommandPayload::TaskRequest { task, cells: Vec::new() }));
    let fx = leader.handle_frame(&req, None, 0);
    show(0, &fx);

    let asked = fx.iter().find_map(|e| match e {
        Effect::Send { payload: Payload::Command(CommandPayload::ResourceRequest { count, .. }), .. } => Some(*count),
        _ => None,
    });
    if let Some(count) = asked {
        let slots = (40..40 + count).collect();
        let grant = Frame::new(ROOT, LEADER, 3, 1, Payload::Command(CommandPayload::ResourceResponse { leader: LEADER, task_id: 1, slots }));
        show(3, &leader.handle_frame(&grant, None, 3));
    }
    println!("phase {:?}, executors {:?}", leader.ledger[&1].phase, leader.ledger[&1].assigned_nodes);
}
