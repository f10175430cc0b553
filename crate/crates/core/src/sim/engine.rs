//! The slot loop. Order within a slot: scenario events, deliveries from the
//! previous slot, traffic generation, node ticks (ascending id), transmission
//! resolution, invariant checks.

use crate::model::{NodeId, NodeRole};
use crate::net::{Delivery, Flow, Net, NodeMac, SendOutcome, BACKGROUND};
use crate::scheduler::conservation_holds;
use crate::sim::metrics::{compute_metrics, MetricsReport};
use crate::sim::scenario::{MobilityAction, Scenario};
use crate::strategy::{make_strategy, Strategy, StrategyTag};
use crate::trace::TraceRecord;
use crate::tsch::{Cell, CellKind};

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: MetricsReport,
    /// Schedule dump taken after strategy initialization, before any traffic.
    pub initial_schedule: String,
    /// Schedule dump at the end of the run.
    pub schedule: String,
    /// Slots where slot conservation or collision freedom failed.
    pub violations: u64,
}

/// Builds the network every strategy starts from: nodes, links, shared and
/// EB slots, background flows.
pub fn build_net(sc: &Scenario, seed: u64) -> Net {
    let mut net = Net::new(seed, sc.slotframe, sc.t_sf, sc.params.mac);
    let root = sc.root();
    for n in &sc.nodes {
        let parent = match n.role {
            NodeRole::Root => None,
            NodeRole::Leader => Some(root),
            NodeRole::Member | NodeRole::Mobile => n.parent,
        };
        let mut mac = NodeMac::new(n.id, n.role, parent);
        mac.scanning = n.role == NodeRole::Mobile && parent.is_none();
        net.add_node(mac);
    }
    for l in &sc.links {
        if l.symmetric {
            net.links.set_symmetric(l.a, l.b, l.p).expect("validated probability");
        } else {
            net.links.set(l.a, l.b, l.p).expect("validated probability");
        }
    }
    for s in sc.shared_slots() {
        net.schedule.add_shared_slot(s);
    }
    for (node, slot) in sc.eb_assignment() {
        if net.nodes.contains_key(&node) {
            let eb = Cell {
                slot_offset: slot,
                channel_offset: 0,
                kind: CellKind::EbSlot,
                owner: node,
                peer: NodeId::BROADCAST,
                task: None,
                installed_at: 0,
            };
            net.schedule.add_cell(eb).expect("EB slots are distinct");
        }
    }
    for n in &sc.nodes {
        let Some(parent) = n.parent else { continue };
        if let Some(mut f) = Flow::new(BACKGROUND, parent, n.rate, sc.slotframe.slot_duration_ms, 0, sc.duration) {
            // stagger first packets so nodes do not generate in lockstep
            f.next = (n.id.0 as u64 * 17) % f.period;
            net.start_flow(n.id, f);
        }
    }
    net
}

/// Runs `sc` under the given strategy and seed.
pub fn run(sc: &Scenario, tag: StrategyTag, seed: u64) -> RunOutput {
    let mut strategy = make_strategy(tag);
    run_with(sc, strategy.as_mut(), seed)
}

pub fn run_with(sc: &Scenario, strategy: &mut dyn Strategy, seed: u64) -> RunOutput {
    let mut net = build_net(sc, seed);
    strategy.init(&mut net, sc);
    let initial_schedule = net.schedule.dump_csv();

    let mut tasks: Vec<_> = sc.tasks.iter().collect();
    tasks.sort_by_key(|t| (t.inject, t.task.id));
    let mut mobility: Vec<_> = sc.mobility.iter().collect();
    mobility.sort_by_key(|m| (m.asn, m.node));
    let mut degr: Vec<_> = sc.degradations.iter().collect();
    degr.sort_by_key(|d| d.asn);
    let (mut ti, mut mi, mut di) = (0, 0, 0);

    let mut pending: (Vec<Delivery>, Vec<SendOutcome>) = (Vec::new(), Vec::new());
    let mut violations = 0;
    let mut in_violation = false;

    for asn in 0..sc.duration {
        net.asn = asn;

        while di < degr.len() && degr[di].asn == asn {
            let d = degr[di];
            net.links.override_from(d.a, d.b, asn, d.p).expect("validated probability");
            if d.symmetric {
                net.links.override_from(d.b, d.a, asn, d.p).expect("validated probability");
            }
            net.evt(d.a, None, format!("degrade;peer={};p={}", d.b.0, d.p));
            di += 1;
        }
        while mi < mobility.len() && mobility[mi].asn == asn {
            let m = mobility[mi];
            match m.action {
                MobilityAction::EnterRange { leader, p } => {
                    net.links.set_symmetric(m.node, leader, p).expect("validated probability");
                    net.node_mut(m.node).scanning = true;
                    net.evt(m.node, None, format!("enter;leader={}", leader.0));
                }
                MobilityAction::LeaveRange => {
                    let flows: Vec<u16> = net.node(m.node).flows.keys().copied().collect();
                    for f in flows {
                        net.stop_flow(m.node, f);
                    }
                    net.flush(m.node, "left");
                    let peers: Vec<NodeId> = net.node_ids();
                    for p in peers {
                        net.links.remove_pair(m.node, p);
                    }
                    let mac = net.node_mut(m.node);
                    mac.scanning = false;
                    mac.parent = None;
                    net.evt(m.node, None, "leave");
                }
            }
            strategy.on_topology_change(&mut net, m);
            mi += 1;
        }
        while ti < tasks.len() && tasks[ti].inject == asn {
            let t = tasks[ti];
            net.evt(
                sc.root(),
                Some(t.task.id),
                format!("inject;leader={};prio={};end={}", t.leader.0, t.task.priority.level(), t.task.window.end),
            );
            strategy.on_task(&mut net, t);
            ti += 1;
        }

        let (deliveries, outcomes) = std::mem::take(&mut pending);
        for d in deliveries {
            strategy.on_frame(&mut net, d.node, &d.frame, d.packet.as_ref());
        }
        for o in outcomes {
            strategy.on_sent(&mut net, o.node, &o.frame, o.delivered);
        }

        net.run_flows();
        for id in net.node_ids() {
            strategy.on_tick(&mut net, id);
        }
        pending = net.resolve_slot();

        let conserved = strategy.pools().map_or(true, |v| conservation_holds(v.root, v.leaders.iter().copied()));
        let ok = conserved && net.schedule.is_collision_free();
        if !ok {
            violations += 1;
            if !in_violation {
                let what = if conserved { "collision" } else { "conservation" };
                net.evt(sc.root(), None, format!("violation;what={what}"));
            }
        }
        in_violation = !ok;
    }

    let metrics = compute_metrics(&net.trace, sc, strategy.tag(), seed);
    RunOutput { metrics, initial_schedule, schedule: net.schedule.dump_csv(), violations, trace: net.trace }
}
