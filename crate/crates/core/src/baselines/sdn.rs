//! SDN-like scheduling: a controller at the root owns the whole schedule.
//! Nodes report state with periodic heartbeats; on every change the
//! controller re-packs all flows and pushes the new cells over the network.

use std::collections::{BTreeMap, BTreeSet};

use crate::baselines::{channel_for, release_pair, reserve_pair, Core, Dispatch, EbPolicy, Happening, Liveness};
use crate::codec::{CellAction, CommandPayload, EventKind, Frame, Payload};
use crate::model::{Asn, NodeId, Task};
use crate::net::{LocalTx, Net, Packet};
use crate::sim::scenario::{MobilityEvent, Scenario, TaskInjection};
use crate::strategy::{Strategy, StrategyTag};
use crate::tsch::{Cell, CellKind, CellSpec};

/// One flow the controller must serve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowDemand {
    pub node: NodeId,
    pub parent: NodeId,
    pub task: Option<u16>,
    pub cells: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlannedCell {
    pub slot: u16,
    pub channel: u8,
    pub parent: NodeId,
    pub task: Option<u16>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{needed} cells requested but only {available} slots exist")]
pub struct Infeasible {
    pub needed: usize,
    pub available: usize,
}

/// Packs every flow from scratch, one cell per slot, in node then task
/// order.
pub fn sdn_control(
    slots: &BTreeSet<u16>,
    channels: u8,
    demands: &[FlowDemand],
) -> Result<BTreeMap<NodeId, Vec<PlannedCell>>, Infeasible> {
    let mut ds = demands.to_vec();
    ds.sort_by_key(|d| (d.node, d.task));
    let needed: usize = ds.iter().map(|d| d.cells).sum();
    if needed > slots.len() {
        return Err(Infeasible { needed, available: slots.len() });
    }
    let mut free = slots.iter().copied();
    let mut plan: BTreeMap<NodeId, Vec<PlannedCell>> = BTreeMap::new();
    for d in ds {
        for _ in 0..d.cells {
            let slot = free.next().expect("counted");
            plan.entry(d.node).or_default().push(PlannedCell {
                slot,
                channel: channel_for(slot, channels),
                parent: d.parent,
                task: d.task,
            });
        }
    }
    Ok(plan)
}

fn cells_for(rate: f64, t_sf: f64) -> usize {
    (rate * t_sf - 1e-9).ceil().max(0.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
struct Bound {
    task: Task,
    executor: NodeId,
    leader: NodeId,
}

#[derive(Default)]
pub struct SdnLike {
    pub core: Core,
    slots: BTreeSet<u16>,
    /// Controller view: node to leader.
    members: BTreeMap<NodeId, NodeId>,
    background: BTreeMap<NodeId, f64>,
    bound: BTreeMap<u16, Bound>,
    plan: BTreeMap<NodeId, Vec<PlannedCell>>,
    last_seen: BTreeMap<NodeId, Asn>,
    dirty: bool,
}

impl SdnLike {
    fn demands(&self) -> Vec<FlowDemand> {
        let t_sf = self.core.t_sf;
        let mut out = Vec::new();
        for (n, l) in &self.members {
            if let Some(r) = self.background.get(n) {
                out.push(FlowDemand { node: *n, parent: *l, task: None, cells: cells_for(*r, t_sf) });
            }
        }
        for (id, b) in &self.bound {
            out.push(FlowDemand { node: b.executor, parent: b.leader, task: Some(*id), cells: cells_for(b.task.rate, t_sf) });
        }
        out
    }

    fn bind_pending(&mut self, net: &mut Net) {
        let asn = net.asn;
        let ids: Vec<u16> = self.core.unbound.keys().copied().collect();
        for id in ids {
            let (task, leader) = self.core.unbound[&id].clone();
            if asn >= task.window.end {
                self.core.unbound.remove(&id);
                net.evt(self.core.root, Some(id), "complete;success=0;why=unbound");
                continue;
            }
            let nodes: Vec<NodeId> = self.members.iter().filter(|(_, l)| **l == leader).map(|(n, _)| *n).collect();
            let Some(exec) = self.core.pick_from(nodes, &task) else {
                continue;
            };
            self.core.unbound.remove(&id);
            self.bound.insert(id, Bound { task, executor: exec, leader });
            self.dirty = true;
        }
    }

    /// Re-packs and pushes every changed cell set.
    fn recompute(&mut self, net: &mut Net) {
        self.dirty = false;
        let plan = match sdn_control(&self.slots, net.frame.num_channels, &self.demands()) {
            Ok(p) => p,
            Err(e) => {
                net.evt(self.core.root, None, format!("infeasible;needed={};available={}", e.needed, e.available));
                return;
            }
        };
        let nodes: BTreeSet<NodeId> = plan.keys().chain(self.plan.keys()).copied().collect();
        let changed: Vec<NodeId> =
            nodes.into_iter().filter(|n| plan.get(n).map(Vec::as_slice) != self.plan.get(n).map(Vec::as_slice)).collect();
        for n in &changed {
            for c in self.plan.get(n).into_iter().flatten() {
                release_pair(net, *n, c.slot);
            }
        }
        let asn = net.asn;
        for n in &changed {
            for c in plan.get(n).into_iter().flatten() {
                reserve_pair(
                    net,
                    Cell {
                        slot_offset: c.slot,
                        channel_offset: c.channel,
                        kind: CellKind::TxUnicast,
                        owner: *n,
                        peer: c.parent,
                        task: c.task,
                        installed_at: asn,
                    },
                );
            }
        }
        let root = self.core.root;
        for n in &changed {
            let old: Vec<PlannedCell> = self.plan.get(n).cloned().unwrap_or_default();
            let new: Vec<PlannedCell> = plan.get(n).cloned().unwrap_or_default();
            let untagged = |v: &[PlannedCell]| v.iter().filter(|c| c.task.is_none()).copied().collect::<Vec<_>>();
            if untagged(&old) != untagged(&new) {
                let cells = untagged(&new)
                    .iter()
                    .map(|c| CellSpec { slot: c.slot, channel: c.channel, kind: CellKind::TxUnicast, peer: c.parent })
                    .collect();
                self.core.send_via(net, root, *n, Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::Install, cells }));
            }
        }
        // moved flows are pushed before any task is admitted
        for n in &changed {
            let old: Vec<PlannedCell> = self.plan.get(n).cloned().unwrap_or_default();
            let new: Vec<PlannedCell> = plan.get(n).cloned().unwrap_or_default();
            let tasks: BTreeSet<u16> = old.iter().chain(&new).filter_map(|c| c.task).collect();
            for t in tasks {
                let pick = |v: &[PlannedCell]| v.iter().filter(|c| c.task == Some(t)).map(|c| (c.slot, c.channel)).collect::<Vec<_>>();
                let cells = pick(&new);
                if cells == pick(&old) {
                    continue;
                }
                if let Some(b) = self.bound.get(&t) {
                    let task = b.task.clone();
                    self.core.send_via(net, root, *n, Payload::Command(CommandPayload::TaskRequest { task, cells }));
                }
            }
        }
        self.plan = plan;
    }

    fn housekeeping(&mut self, net: &mut Net) {
        let asn = net.asn;
        let ended: Vec<u16> = self.bound.iter().filter(|(_, b)| asn >= b.task.window.end).map(|(id, _)| *id).collect();
        for id in ended {
            self.bound.remove(&id);
            self.dirty = true;
        }
        if net.cycle_start() {
            let limit = 3 * self.core.params.sdn_heartbeat_cycles.max(1) * net.cycle_slots();
            let gone: Vec<NodeId> = self
                .members
                .keys()
                .filter(|n| self.last_seen.get(n).is_some_and(|s| *s + limit < asn))
                .copied()
                .collect();
            for n in gone {
                net.evt(self.core.root, None, format!("node_lost;node={}", n.0));
                self.members.remove(&n);
                self.last_seen.remove(&n);
                let orphaned: Vec<u16> = self.bound.iter().filter(|(_, b)| b.executor == n).map(|(id, _)| *id).collect();
                for id in orphaned {
                    let b = self.bound.remove(&id).expect("present");
                    self.core.unbound.insert(id, (b.task, b.leader));
                }
                self.dirty = true;
            }
        }
        self.bind_pending(net);
        if self.dirty {
            self.recompute(net);
        }
    }

    /// Applies a pushed cell set at a member or mobile.
    fn apply_push(&self, net: &mut Net, node: NodeId, frame: &Frame) {
        match &frame.payload {
            Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::Install, cells }) => {
                let old: Vec<u16> = net.node(node).tx_cells.iter().filter(|(_, c)| c.task.is_none()).map(|(s, _)| *s).collect();
                for s in old {
                    net.remove_tx(node, s);
                }
                for c in cells {
                    net.install_tx(node, c.slot, LocalTx { channel: c.channel, peer: c.peer, task: None });
                }
            }
            Payload::Command(CommandPayload::TaskRequest { task, cells }) => {
                let Some(parent) = self.core.parent.get(&node).copied() else {
                    return;
                };
                net.remove_task_tx(node, task.id);
                for (slot, channel) in cells {
                    net.install_tx(node, *slot, LocalTx { channel: *channel, peer: parent, task: Some(task.id) });
                }
            }
            _ => {}
        }
    }
}

impl Strategy for SdnLike {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Sdn
    }

    fn init(&mut self, net: &mut Net, sc: &Scenario) {
        let hb = sc.params.sdn_heartbeat_cycles;
        self.core = Core::new(sc, EbPolicy::Leaders, Liveness::Heartbeat(hb), Dispatch::Root, false);
        self.slots = sc.global_slots();
        for l in sc.leaders() {
            for n in sc.attached(l) {
                self.members.insert(n, l);
                self.last_seen.insert(n, 0);
                let rate = sc.node(n).map_or(0.0, |s| s.rate);
                if rate > 0.0 {
                    self.background.insert(n, rate);
                }
            }
        }
        match sdn_control(&self.slots, net.frame.num_channels, &self.demands()) {
            Ok(plan) => {
                for (n, cells) in &plan {
                    for c in cells {
                        let tx = Cell {
                            slot_offset: c.slot,
                            channel_offset: c.channel,
                            kind: CellKind::TxUnicast,
                            owner: *n,
                            peer: c.parent,
                            task: None,
                            installed_at: 0,
                        };
                        reserve_pair(net, tx);
                        net.install_tx(*n, c.slot, LocalTx { channel: c.channel, peer: c.parent, task: None });
                    }
                }
                self.plan = plan;
            }
            Err(e) => net.evt(sc.root(), None, format!("infeasible;needed={};available={}", e.needed, e.available)),
        }
    }

    fn on_task(&mut self, net: &mut Net, injection: &TaskInjection) {
        self.core.on_task(net, &injection.task, injection.leader);
        self.bind_pending(net);
    }

    fn on_topology_change(&mut self, net: &mut Net, event: &MobilityEvent) {
        if event.action == crate::sim::scenario::MobilityAction::LeaveRange {
            self.core.detach(net, event.node);
        }
    }

    fn on_tick(&mut self, net: &mut Net, node: NodeId) {
        if node == self.core.root {
            self.housekeeping(net);
        }
        self.core.on_tick(net, node);
    }

    fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>) {
        let router = node == self.core.root || self.core.leaders.contains(&node);
        if !router {
            self.apply_push(net, node, frame);
        }
        let origin = self.core.origin(frame);
        let happening = self.core.on_frame(net, node, frame, packet);
        if node != self.core.root {
            return;
        }
        if let Payload::Event(ev) = &frame.payload {
            if ev.kind == EventKind::StateChange {
                self.last_seen.insert(origin, net.asn);
            }
        }
        if let Happening::Admitted { node: joined, leader } = happening {
            self.members.insert(joined, leader);
            self.last_seen.insert(joined, net.asn);
            self.bind_pending(net);
            if self.dirty {
                self.recompute(net);
            }
        }
    }

    fn on_sent(&mut self, net: &mut Net, node: NodeId, frame: &Frame, delivered: bool) {
        self.core.on_sent(net, node, frame, delivered);
    }
}
