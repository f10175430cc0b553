//! 6TiSCH-style scheduling: cells are added and deleted one at a time through
//! two-step 6P transactions between a node and its parent, triggered by the
//! node's queue. Every associated node beacons and sends keep-alives.

use std::collections::{BTreeMap, BTreeSet};

use crate::baselines::{channel_for, release_pair, reserve_pair, Core, Dispatch, EbPolicy, Happening, Liveness};
use crate::codec::{CellAction, CommandPayload, Frame, Payload};
use crate::model::{Asn, NodeId};
use crate::net::{LocalTx, Net, Packet};
use crate::sim::scenario::{MobilityAction, MobilityEvent, Scenario, TaskInjection};
use crate::strategy::{Strategy, StrategyTag};
use crate::tsch::{Cell, CellKind, CellSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SixOp {
    Add(usize),
    Delete(usize),
}

/// What a node knows about its own uplink when it decides on 6P.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SixView {
    pub cells: usize,
    pub queue: usize,
    /// Dedicated-cell transmissions during the last cycle.
    pub used_last_cycle: u64,
    /// The link to the parent has no cells yet.
    pub new_link: bool,
}

/// Queue-driven 6P decision, one cell at a time.
pub fn sixtisch_on_demand(v: &SixView, threshold: usize) -> Option<SixOp> {
    if v.cells == 0 && (v.new_link || v.queue > 0) {
        return Some(SixOp::Add(1));
    }
    if v.queue > threshold {
        return Some(SixOp::Add(1));
    }
    if v.queue == 0 && v.cells > 1 && (v.used_last_cycle as f64) < 0.5 * v.cells as f64 {
        return Some(SixOp::Delete(1));
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
struct Pending {
    payload: Payload,
    deadline: Asn,
    tries: u8,
}

/// Two-step 6P transactions over per-leader slot partitions.
#[derive(Clone, Debug, Default)]
pub struct SixP {
    pub free: BTreeMap<NodeId, BTreeSet<u16>>,
    pending: BTreeMap<NodeId, Pending>,
    pub timeout: u64,
    pub retries: u8,
}

impl SixP {
    pub fn new(sc: &Scenario) -> Self {
        Self {
            free: sc.partition(),
            pending: BTreeMap::new(),
            timeout: sc.params.sixtisch_timeout,
            retries: sc.params.sixtisch_retries,
        }
    }

    pub fn busy(&self, node: NodeId) -> bool {
        self.pending.contains_key(&node)
    }

    /// Starts a transaction from `node` to `parent`.
    pub fn request(&mut self, net: &mut Net, node: NodeId, parent: NodeId, op: SixOp) {
        if self.busy(node) {
            return;
        }
        let payload = match op {
            SixOp::Add(n) => {
                let spec = CellSpec { slot: 0, channel: 0, kind: CellKind::TxUnicast, peer: parent };
                Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::AddRequest, cells: vec![spec; n.max(1)] })
            }
            SixOp::Delete(n) => {
                let mine: Vec<(u16, LocalTx)> = net
                    .node(node)
                    .tx_cells
                    .iter()
                    .filter(|(_, c)| c.task.is_none() && c.peer == parent)
                    .map(|(s, c)| (*s, *c))
                    .collect();
                let cells: Vec<CellSpec> = mine
                    .iter()
                    .rev()
                    .take(n)
                    .map(|(s, c)| CellSpec { slot: *s, channel: c.channel, kind: CellKind::TxUnicast, peer: parent })
                    .collect();
                if cells.is_empty() {
                    return;
                }
                for c in &cells {
                    net.remove_tx(node, c.slot);
                }
                Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::DeleteRequest, cells })
            }
        };
        net.send(node, parent, payload.clone());
        self.pending.insert(node, Pending { payload, deadline: net.asn + self.timeout, tries: 0 });
    }

    /// Retries or abandons a transaction that timed out.
    pub fn tick(&mut self, net: &mut Net, node: NodeId, parent: Option<NodeId>) {
        let Some(p) = self.pending.get_mut(&node) else {
            return;
        };
        if net.asn < p.deadline {
            return;
        }
        let Some(parent) = parent else {
            self.pending.remove(&node);
            return;
        };
        if p.tries >= self.retries {
            net.evt(node, None, format!("6p_giveup;tries={}", p.tries));
            self.pending.remove(&node);
            return;
        }
        p.tries += 1;
        p.deadline = net.asn + self.timeout;
        let (payload, tries) = (p.payload.clone(), p.tries);
        net.evt(node, None, format!("6p_retry;n={tries}"));
        net.send(node, parent, payload);
    }

    /// Handles 6P frames; returns false for anything else.
    pub fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame) -> bool {
        let src = frame.header.src;
        let Payload::Command(CommandPayload::ScheduleUpdate { action, cells }) = &frame.payload else {
            return false;
        };
        match action {
            CellAction::AddRequest => {
                let granted = self.grant(net, node, src, cells.len());
                net.send(node, src, Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::AddConfirm, cells: granted }));
            }
            CellAction::AddConfirm => {
                for c in cells {
                    net.install_tx(node, c.slot, LocalTx { channel: c.channel, peer: src, task: None });
                }
                self.pending.remove(&node);
            }
            CellAction::DeleteRequest => {
                for c in cells {
                    if release_pair(net, src, c.slot).is_some() {
                        self.free.entry(node).or_default().insert(c.slot);
                    }
                }
                net.send(node, src, Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::DeleteConfirm, cells: cells.clone() }));
            }
            CellAction::DeleteConfirm => {
                self.pending.remove(&node);
            }
            CellAction::Install | CellAction::Remove => return false,
        }
        true
    }

    fn grant(&mut self, net: &mut Net, parent: NodeId, child: NodeId, n: usize) -> Vec<CellSpec> {
        let channels = net.frame.num_channels;
        let asn = net.asn;
        let candidates: Vec<u16> = self
            .free
            .get(&parent)
            .map(|f| f.iter().copied().filter(|s| net.schedule.slot_free_for(child, parent, *s)).collect())
            .unwrap_or_default();
        let mut out = Vec::new();
        for slot in candidates.into_iter().take(n) {
            let tx = Cell {
                slot_offset: slot,
                channel_offset: channel_for(slot, channels),
                kind: CellKind::TxUnicast,
                owner: child,
                peer: parent,
                task: None,
                installed_at: asn,
            };
            if reserve_pair(net, tx) {
                self.free.entry(parent).or_default().remove(&slot);
                out.push(CellSpec { slot, channel: tx.channel_offset, kind: CellKind::TxUnicast, peer: parent });
            }
        }
        out
    }

    /// Takes back cells whose confirmation never arrived.
    pub fn on_sent(&mut self, net: &mut Net, node: NodeId, frame: &Frame, delivered: bool) {
        if delivered {
            return;
        }
        if let Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::AddConfirm, cells }) = &frame.payload {
            for c in cells {
                if release_pair(net, frame.header.dst, c.slot).is_some() {
                    self.free.entry(node).or_default().insert(c.slot);
                }
            }
        }
    }

    /// Frees every cell a departed node held.
    pub fn forget(&mut self, net: &mut Net, node: NodeId) {
        let txs: Vec<Cell> = net.schedule.node_cells(node).filter(|c| c.kind == CellKind::TxUnicast).copied().collect();
        for c in txs {
            if release_pair(net, node, c.slot_offset).is_some() {
                self.free.entry(c.peer).or_default().insert(c.slot_offset);
            }
        }
        net.node_mut(node).tx_cells.clear();
        self.pending.remove(&node);
    }
}

/// Dedicated untagged cells towards `parent`.
pub fn uplink_cells(net: &Net, node: NodeId, parent: NodeId) -> usize {
    net.node(node).tx_cells.values().filter(|c| c.task.is_none() && c.peer == parent).count()
}

#[derive(Default)]
pub struct SixTisch {
    pub core: Core,
    pub sixp: SixP,
    last_tx: BTreeMap<NodeId, u64>,
}

impl SixTisch {
    fn decide(&mut self, net: &mut Net, node: NodeId) {
        let Some(parent) = self.core.parent.get(&node).copied() else {
            return;
        };
        if self.core.leaders.contains(&node) || self.sixp.busy(node) {
            return;
        }
        let mac = net.node(node);
        let total = mac.cell_tx_total;
        let used = total - self.last_tx.insert(node, total).unwrap_or(total);
        let cells = uplink_cells(net, node, parent);
        let view = SixView { cells, queue: mac.fifo_len(), used_last_cycle: used, new_link: cells == 0 };
        if let Some(op) = sixtisch_on_demand(&view, self.core.params.sixtisch_threshold) {
            self.sixp.request(net, node, parent, op);
        }
    }
}

impl Strategy for SixTisch {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Sixtisch
    }

    fn init(&mut self, _net: &mut Net, sc: &Scenario) {
        self.core = Core::new(sc, EbPolicy::All, Liveness::KeepAlive, Dispatch::Leader, true);
        self.sixp = SixP::new(sc);
    }

    fn on_task(&mut self, net: &mut Net, injection: &TaskInjection) {
        self.core.on_task(net, &injection.task, injection.leader);
    }

    fn on_topology_change(&mut self, net: &mut Net, event: &MobilityEvent) {
        if event.action == MobilityAction::LeaveRange {
            self.sixp.forget(net, event.node);
            self.core.detach(net, event.node);
        }
    }

    fn on_tick(&mut self, net: &mut Net, node: NodeId) {
        self.core.on_tick(net, node);
        let parent = self.core.parent.get(&node).copied();
        self.sixp.tick(net, node, parent);
        if net.cycle_start() {
            self.decide(net, node);
        }
    }

    fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>) {
        if self.sixp.on_frame(net, node, frame) {
            return;
        }
        if let Happening::Associated { node, leader } = self.core.on_frame(net, node, frame, packet) {
            self.sixp.request(net, node, leader, SixOp::Add(1));
        }
    }

    fn on_sent(&mut self, net: &mut Net, node: NodeId, frame: &Frame, delivered: bool) {
        self.sixp.on_sent(net, node, frame, delivered);
        self.core.on_sent(net, node, frame, delivered);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_new_link_asks_for_one_cell() {
        let v = SixView { new_link: true, ..SixView::default() };
        assert_eq!(sixtisch_on_demand(&v, 2), Some(SixOp::Add(1)));
    }

    #[test]
    fn queue_above_threshold_adds() {
        let v = SixView { cells: 2, queue: 3, used_last_cycle: 2, new_link: false };
        assert_eq!(sixtisch_on_demand(&v, 2), Some(SixOp::Add(1)));
        let v = SixView { queue: 2, ..v };
        assert_eq!(sixtisch_on_demand(&v, 2), None);
    }

    #[test]
    fn idle_cells_are_deleted_one_at_a_time() {
        let v = SixView { cells: 4, queue: 0, used_last_cycle: 1, new_link: false };
        assert_eq!(sixtisch_on_demand(&v, 2), Some(SixOp::Delete(1)));
        let v = SixView { used_last_cycle: 2, ..v };
        assert_eq!(sixtisch_on_demand(&v, 2), None);
        let v = SixView { cells: 1, used_last_cycle: 0, ..v };
        assert_eq!(sixtisch_on_demand(&v, 2), None);
    }
}
