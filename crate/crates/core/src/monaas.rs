//! The MonAAS strategy: per-node role machines over the shared network.

use std::collections::BTreeMap;

use crate::codec::Frame;
use crate::model::{Asn, LeaderDomain, NodeId, NodeRole, NodeState};
use crate::net::{LocalTx, Net, Packet};
use crate::roles::{Effect, LeaderMachine, NodeMachine, Observation, RootMachine};
use crate::scheduler::LeaderContext;
use crate::sim::scenario::{MobilityAction, MobilityEvent, Scenario, TaskInjection};
use crate::strategy::{PoolView, Strategy, StrategyTag};
use crate::tsch::{Cell, CellKind};

#[derive(Default)]
pub struct MonaasStrategy {
    pub root: Option<RootMachine>,
    pub leaders: BTreeMap<NodeId, LeaderMachine>,
    pub nodes: BTreeMap<NodeId, NodeMachine>,
}

/// Adds a Tx cell and its matching Rx cell to the global schedule.
pub fn reserve_pair(net: &mut Net, tx: Cell) -> bool {
    let rx = Cell { kind: CellKind::RxUnicast, owner: tx.peer, peer: tx.owner, ..tx };
    if net.schedule.add_cell(tx).is_err() {
        return false;
    }
    if net.schedule.add_cell(rx).is_err() {
        net.schedule.remove_cell(tx.owner, tx.slot_offset);
        return false;
    }
    true
}

/// Applies role-machine effects on behalf of `node`.
pub fn apply(net: &mut Net, node: NodeId, effects: Vec<Effect>) {
    for e in effects {
        match e {
            Effect::Send { dst, payload } => net.send(node, dst, payload),
            Effect::Broadcast(payload) => net.send(node, NodeId::BROADCAST, payload),
            Effect::Beacon(payload) => net.set_beacon(node, payload),
            Effect::Reserve(cells) => {
                for c in cells {
                    if !reserve_pair(net, c) {
                        net.evt(node, c.task, format!("reserve_failed;slot={};owner={}", c.slot_offset, c.owner.0));
                    }
                }
            }
            Effect::Unreserve(task) => {
                net.schedule.remove_task(task);
            }
            Effect::InstallTx { slot, cell } => net.install_tx(node, slot, cell),
            Effect::RemoveTaskTx(task) => {
                net.remove_task_tx(node, task);
            }
            Effect::StartFlow(f) => net.start_flow(node, f),
            Effect::StopFlow(task) => {
                net.stop_flow(node, task);
            }
            Effect::SetParent(p) => {
                let mac = net.node_mut(node);
                mac.parent = p;
                mac.scanning = p.is_none();
            }
            Effect::Log { task, note } => net.evt(node, task, note),
        }
    }
}

/// Observation of `node` as of the current slot.
pub fn observe(net: &Net, node: NodeId) -> Observation {
    let mac = net.node(node);
    Observation {
        generated: mac.flows.iter().map(|(t, f)| (*t, f.generated)).collect(),
        last_uplink: mac.last_uplink,
        member_l_est: BTreeMap::new(),
        background_cells: BTreeMap::new(),
        cycle_start: net.cycle_start(),
        cycle_len: net.cycle_slots(),
        slot_ms: net.frame.slot_duration_ms,
    }
}

impl MonaasStrategy {
    fn leader_of(&self, node: NodeId) -> Option<NodeId> {
        self.leaders.iter().find(|(_, l)| l.ctx.domain.contains(node)).map(|(id, _)| *id)
    }
}

impl Strategy for MonaasStrategy {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Monaas
    }

    fn init(&mut self, net: &mut Net, sc: &Scenario) {
        let (root_pool, pools) = sc.pools();
        let root = sc.root();
        self.root = Some(RootMachine::new(root, root_pool));
        let cycle = net.cycle_slots();
        for (l, pool) in pools {
            let attached = sc.attached(l);
            let statics: Vec<NodeId> =
                attached.iter().copied().filter(|n| sc.node(*n).is_some_and(|s| s.role == NodeRole::Member)).collect();
            let mut domain = LeaderDomain::new(l, statics);
            for n in &attached {
                if sc.node(*n).is_some_and(|s| s.role == NodeRole::Mobile) {
                    domain.grant_mobile(*n, Asn::MAX);
                }
            }
            let mut ctx = LeaderContext::new(l, domain, pool, sc.t_sf);
            for n in &attached {
                let s = sc.node(*n).expect("declared");
                ctx.states.insert(*n, NodeState { battery: s.battery, queue_len: 0, zone: s.zone, capabilities: s.caps });
            }
            let mut m = LeaderMachine::new(l, root, ctx, sc.slotframe, sc.params);
            for n in &attached {
                let s = sc.node(*n).expect("declared");
                if s.rate > 0.0 {
                    m.background.insert(*n, s.rate);
                }
            }
            for c in m.init_background(0) {
                reserve_pair(net, c);
                net.install_tx(c.owner, c.slot_offset, LocalTx { channel: c.channel_offset, peer: c.peer, task: None });
            }
            self.leaders.insert(l, m);
        }
        for n in &sc.nodes {
            if matches!(n.role, NodeRole::Member | NodeRole::Mobile) {
                self.nodes.insert(
                    n.id,
                    NodeMachine::new(n.id, n.role, n.caps, n.battery, n.parent, sc.params, sc.slotframe.slot_duration_ms, cycle),
                );
            }
        }
    }

    fn on_task(&mut self, net: &mut Net, injection: &TaskInjection) {
        if let Some(r) = self.root.as_mut() {
            let fx = r.assign(&injection.task, injection.leader);
            let id = r.node;
            apply(net, id, fx);
        }
    }

    fn on_topology_change(&mut self, net: &mut Net, event: &MobilityEvent) {
        if event.action == MobilityAction::LeaveRange {
            if let Some(l) = self.leader_of(event.node) {
                let fx = self.leaders.get_mut(&l).expect("leader").drop_member(event.node);
                apply(net, l, fx);
            }
            if let Some(m) = self.nodes.get_mut(&event.node) {
                let fx = m.detach();
                apply(net, event.node, fx);
                net.node_mut(event.node).scanning = false;
            }
        }
    }

    fn on_tick(&mut self, net: &mut Net, node: NodeId) {
        let asn = net.asn;
        if let Some(l) = self.leaders.get_mut(&node) {
            let mut obs = observe(net, node);
            if obs.cycle_start {
                obs.member_l_est = l.ctx.domain.members().map(|m| (m, net.node(m).l_est(node))).collect();
            }
            let fx = l.tick(asn, &obs);
            apply(net, node, fx);
        } else if let Some(m) = self.nodes.get_mut(&node) {
            let obs = observe(net, node);
            let fx = m.tick(asn, &obs);
            apply(net, node, fx);
        }
    }

    fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>) {
        let asn = net.asn;
        let fx = if let Some(l) = self.leaders.get_mut(&node) {
            l.handle_frame(frame, packet, asn)
        } else if let Some(m) = self.nodes.get_mut(&node) {
            m.handle_frame(frame, asn)
        } else if let Some(r) = self.root.as_mut().filter(|r| r.node == node) {
            r.handle_frame(frame)
        } else {
            Vec::new()
        };
        apply(net, node, fx);
    }

    fn on_sent(&mut self, net: &mut Net, node: NodeId, frame: &Frame, delivered: bool) {
        let fx = if let Some(l) = self.leaders.get_mut(&node) {
            l.on_sent(frame, delivered)
        } else if let Some(r) = self.root.as_mut().filter(|r| r.node == node) {
            r.on_sent(frame, delivered)
        } else {
            Vec::new()
        };
        apply(net, node, fx);
    }

    fn pools(&self) -> Option<PoolView<'_>> {
        let root = self.root.as_ref()?;
        Some(PoolView { root: &root.pool, leaders: self.leaders.values().map(|l| &l.ctx.pool).collect() })
    }
}
