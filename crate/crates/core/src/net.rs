//! Shared world state for one run: per-node MAC queues and local cell views,
//! traffic flows, the global schedule, link model and trace. Every strategy
//! drives the same `Net`, so metric differences come from the strategy alone.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{DataKind, Frame, FrameType, Payload, TaggedBody};
use crate::model::{Asn, NodeId, NodeRole};
use crate::trace::{Direction, TraceRecord};
use crate::tsch::{attempt_transmission, CellKind, LinkEstimator, LinkModel, Schedule, Slotframe, TxOutcome};

/// Task id carried by background (non-task) traffic.
pub const BACKGROUND: u16 = 0;

const MEDIUM_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacParams {
    /// Transmission attempts per frame before it is dropped.
    pub max_attempts: u8,
    /// Capacity of each per-node data queue.
    pub queue_cap: usize,
}

impl Default for MacParams {
    fn default() -> Self {
        Self { max_attempts: 8, queue_cap: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet {
    pub origin: NodeId,
    pub seq: u32,
    pub task: u16,
    pub gen_asn: Asn,
    pub attempts: u8,
}

impl Packet {
    pub fn tag(&self) -> String {
        format!("{}:{}", self.origin.0, self.seq)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlEntry {
    pub frame: Frame,
    pub attempts: u8,
}

/// A node's own knowledge of one of its Tx cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalTx {
    pub channel: u8,
    pub peer: NodeId,
    /// Serves only this task's queue; `None` serves the node FIFO.
    pub task: Option<u16>,
}

/// Deterministic periodic generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub task: u16,
    pub sink: NodeId,
    pub period: u64,
    pub next: Asn,
    /// First ASN at which nothing more is generated.
    pub stop: Asn,
    pub generated: u32,
}

impl Flow {
    pub fn new(task: u16, sink: NodeId, rate: f64, slot_ms: u32, start: Asn, stop: Asn) -> Option<Self> {
        if rate <= 0.0 {
            return None;
        }
        let period = ((1000.0 / rate) / slot_ms as f64).round().max(1.0) as u64;
        Some(Self { task, sink, period, next: start, stop, generated: 0 })
    }
}

#[derive(Clone, Debug)]
pub struct NodeMac {
    pub id: NodeId,
    pub role: NodeRole,
    /// Current uplink / data sink.
    pub parent: Option<NodeId>,
    /// Listens for broadcast frames (unassociated nodes looking for a network).
    pub scanning: bool,
    pub ctrl: VecDeque<ControlEntry>,
    /// Beacon waiting for the node's EB cell.
    pub beacon: Option<Frame>,
    pub queues: BTreeMap<Option<u16>, VecDeque<Packet>>,
    pub tx_cells: BTreeMap<u16, LocalTx>,
    pub flows: BTreeMap<u16, Flow>,
    pub est: BTreeMap<NodeId, LinkEstimator>,
    pub seq: u8,
    pub pkt_counter: u32,
    /// Last ASN a unicast frame towards the parent went on air.
    pub last_uplink: Option<Asn>,
    /// Packets generated since start, all flows.
    pub generated_total: u64,
    /// Tx attempts in dedicated cells since start.
    pub cell_tx_total: u64,
}

impl NodeMac {
    pub fn new(id: NodeId, role: NodeRole, parent: Option<NodeId>) -> Self {
        Self {
            id,
            role,
            parent,
            scanning: false,
            ctrl: VecDeque::new(),
            beacon: None,
            queues: BTreeMap::new(),
            tx_cells: BTreeMap::new(),
            flows: BTreeMap::new(),
            est: BTreeMap::new(),
            seq: 0,
            pkt_counter: 0,
            last_uplink: None,
            generated_total: 0,
            cell_tx_total: 0,
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn fifo_len(&self) -> usize {
        self.queues.get(&None).map_or(0, VecDeque::len)
    }

    pub fn cells_for(&self, task: Option<u16>) -> usize {
        self.tx_cells.values().filter(|c| c.task == task).count()
    }

    pub fn l_est(&self, peer: NodeId) -> f64 {
        self.est.get(&peer).map_or(1.0, LinkEstimator::l_est)
    }
}

/// Frame handed to a node at the start of the next slot.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub node: NodeId,
    pub frame: Frame,
    pub packet: Option<Packet>,
}

/// Final fate of a unicast control frame, reported to its sender.
#[derive(Clone, Debug)]
pub struct SendOutcome {
    pub node: NodeId,
    pub frame: Frame,
    pub delivered: bool,
}

#[derive(Clone, Debug)]
pub struct Net {
    pub asn: Asn,
    pub frame: Slotframe,
    /// Slotframe period in seconds used by demand estimation.
    pub t_sf: f64,
    pub params: MacParams,
    pub schedule: Schedule,
    pub links: LinkModel,
    pub nodes: BTreeMap<NodeId, NodeMac>,
    pub trace: Vec<TraceRecord>,
    rngs: BTreeMap<NodeId, ChaCha8Rng>,
    medium: ChaCha8Rng,
    seed: u64,
}

impl Net {
    pub fn new(seed: u64, frame: Slotframe, t_sf: f64, params: MacParams) -> Self {
        let mut medium = ChaCha8Rng::seed_from_u64(seed);
        medium.set_stream(MEDIUM_STREAM);
        Self {
            asn: 0,
            frame,
            t_sf,
            params,
            schedule: Schedule::new(frame),
            links: LinkModel::new(),
            nodes: BTreeMap::new(),
            trace: Vec::new(),
            rngs: BTreeMap::new(),
            medium,
            seed,
        }
    }

    pub fn add_node(&mut self, mac: NodeMac) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(mac.id.0 as u64);
        self.rngs.insert(mac.id, rng);
        self.nodes.insert(mac.id, mac);
    }

    pub fn node(&self, id: NodeId) -> &NodeMac {
        &self.nodes[&id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeMac {
        self.nodes.get_mut(&id).expect("declared node")
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    /// The per-node random stream.
    pub fn rng(&mut self, id: NodeId) -> &mut ChaCha8Rng {
        self.rngs.get_mut(&id).expect("declared node")
    }

    pub fn cycle(&self) -> u64 {
        self.asn / self.frame.length as u64
    }

    /// `true` on the first slot of each slotframe cycle.
    pub fn cycle_start(&self) -> bool {
        self.asn % self.frame.length as u64 == 0
    }

    pub fn cycle_slots(&self) -> u64 {
        self.frame.length as u64
    }

    pub fn evt(&mut self, node: NodeId, task: Option<u16>, note: impl Into<String>) {
        self.trace.push(TraceRecord::event(self.asn, node, task, note.into()));
    }

    fn next_seq(&mut self, src: NodeId) -> u8 {
        let n = self.node_mut(src);
        n.seq = n.seq.wrapping_add(1);
        n.seq
    }

    /// Queues a control frame for the shared slots.
    pub fn send(&mut self, src: NodeId, dst: NodeId, payload: Payload) {
        let seq = self.next_seq(src);
        let frame = Frame::new(src, dst, self.asn, seq, payload);
        self.trace.push(TraceRecord::frame(self.asn, src, Direction::Out, &frame, format!("dst={}", dst.0)));
        self.node_mut(src).ctrl.push_back(ControlEntry { frame, attempts: 0 });
    }

    /// Sets the frame sent in the node's next EB cell.
    pub fn set_beacon(&mut self, src: NodeId, payload: Payload) {
        let seq = self.next_seq(src);
        let frame = Frame::new(src, NodeId::BROADCAST, self.asn, seq, payload);
        self.node_mut(src).beacon = Some(frame);
    }

    pub fn has_pending(&self, src: NodeId, pred: impl Fn(&Frame) -> bool) -> bool {
        self.node(src).ctrl.iter().any(|e| pred(&e.frame))
    }

    pub fn start_flow(&mut self, node: NodeId, flow: Flow) {
        self.evt(node, Some(flow.task), format!("flow_start;sink={};period={};stop={}", flow.sink.0, flow.period, flow.stop));
        self.node_mut(node).flows.insert(flow.task, flow);
    }

    pub fn stop_flow(&mut self, node: NodeId, task: u16) -> Option<Flow> {
        self.node_mut(node).flows.remove(&task)
    }

    pub fn install_tx(&mut self, node: NodeId, slot: u16, cell: LocalTx) {
        let task = cell.task;
        if let Some(old) = self.node(node).tx_cells.get(&slot).filter(|c| c.task != task) {
            let note = format!("cell_replaced;slot={slot};old_task={}", old.task.unwrap_or(0));
            self.evt(node, task, note);
        }
        let n = self.node_mut(node);
        n.tx_cells.insert(slot, cell);
        if let Some(t) = task {
            // packets already waiting in the FIFO move to the task's queue
            let fifo = n.queues.entry(None).or_default();
            let (mine, rest): (VecDeque<Packet>, VecDeque<Packet>) = fifo.drain(..).partition(|p| p.task == t);
            *fifo = rest;
            n.queues.entry(Some(t)).or_default().extend(mine);
        }
    }

    pub fn remove_tx(&mut self, node: NodeId, slot: u16) -> Option<LocalTx> {
        let removed = self.node_mut(node).tx_cells.remove(&slot)?;
        if let Some(t) = removed.task {
            self.rehome_queue(node, t);
        }
        Some(removed)
    }

    /// Drops every local Tx cell of `task` at `node`; leftovers go to the FIFO.
    pub fn remove_task_tx(&mut self, node: NodeId, task: u16) -> usize {
        let n = self.node_mut(node);
        let before = n.tx_cells.len();
        n.tx_cells.retain(|_, c| c.task != Some(task));
        let removed = before - n.tx_cells.len();
        self.rehome_queue(node, task);
        removed
    }

    fn rehome_queue(&mut self, node: NodeId, task: u16) {
        let cap = self.params.queue_cap;
        let n = self.node_mut(node);
        if n.cells_for(Some(task)) > 0 {
            return;
        }
        let Some(q) = n.queues.remove(&Some(task)) else { return };
        let fifo = n.queues.entry(None).or_default();
        let mut dropped = Vec::new();
        for p in q {
            if fifo.len() < cap {
                fifo.push_back(p);
            } else {
                dropped.push(p);
            }
        }
        for p in dropped {
            self.drop_packet(node, &p, "overflow");
        }
    }

    fn data_frame(&self, src: NodeId, dst: NodeId, p: &Packet) -> Frame {
        let body = TaggedBody { kind: DataKind::Sensor, task_id: p.task, body: p.seq.to_be_bytes().to_vec() };
        Frame::new(src, dst, self.asn, (p.seq & 0xFF) as u8, Payload::Data(body))
    }

    fn drop_packet(&mut self, node: NodeId, p: &Packet, why: &str) {
        let f = self.data_frame(node, node, p);
        self.trace.push(TraceRecord::frame(self.asn, node, Direction::Drop, &f, format!("pkt={};why={why}", p.tag())));
    }

    /// Generates one packet for `task` at `node`.
    pub fn generate(&mut self, node: NodeId, task: u16, sink: NodeId) -> bool {
        let cap = self.params.queue_cap;
        let asn = self.asn;
        let n = self.node_mut(node);
        n.pkt_counter += 1;
        n.generated_total += 1;
        let p = Packet { origin: node, seq: n.pkt_counter, task, gen_asn: asn, attempts: 0 };
        let key = if n.cells_for(Some(task)) > 0 { Some(task) } else { None };
        let full = n.queues.get(&key).map_or(0, VecDeque::len) >= cap;
        if !full {
            n.queues.entry(key).or_default().push_back(p);
        }
        let f = self.data_frame(node, sink, &p);
        self.trace.push(TraceRecord::frame(asn, node, Direction::Out, &f, format!("pkt={};dst={}", p.tag(), sink.0)));
        if full {
            self.drop_packet(node, &p, "overflow");
        }
        !full
    }

    /// Fires every flow due at the current ASN.
    pub fn run_flows(&mut self) {
        let asn = self.asn;
        let ids = self.node_ids();
        for id in ids {
            let due: Vec<(u16, NodeId)> = self.nodes[&id]
                .flows
                .values()
                .filter(|f| f.next <= asn && asn < f.stop)
                .map(|f| (f.task, f.sink))
                .collect();
            for (task, sink) in due {
                self.generate(id, task, sink);
                let f = self.node_mut(id).flows.get_mut(&task).expect("flow");
                f.generated += 1;
                f.next = asn + f.period;
            }
        }
    }

    /// Discards a node's queued traffic (e.g. on leaving the network).
    pub fn flush(&mut self, node: NodeId, why: &str) {
        let n = self.node_mut(node);
        let pkts: Vec<Packet> = n.queues.values_mut().flat_map(|q| q.drain(..)).collect();
        n.ctrl.clear();
        n.beacon = None;
        for p in pkts {
            self.drop_packet(node, &p, why);
        }
    }

    /// Resolves all transmissions of the current slot. Returns frames to hand
    /// over at the next slot and final outcomes of unicast control frames.
    pub fn resolve_slot(&mut self) -> (Vec<Delivery>, Vec<SendOutcome>) {
        let asn = self.asn;
        let slot = self.frame.slot_offset(asn);
        let mut txs: Vec<PendingTx> = Vec::new();

        for (id, n) in &self.nodes {
            if let Some(cell) = self.schedule.cell_at(*id, slot) {
                if cell.kind == CellKind::EbSlot {
                    if let Some(f) = &n.beacon {
                        txs.push(PendingTx {
                            src: *id,
                            frame: f.clone(),
                            channel: self.frame.physical_channel(asn, cell.channel_offset),
                            source: TxSource::Beacon,
                        });
                    }
                    continue;
                }
            }
            if let Some(c) = n.tx_cells.get(&slot) {
                if let Some(p) = n.queues.get(&c.task).and_then(VecDeque::front) {
                    txs.push(PendingTx {
                        src: *id,
                        frame: self.data_frame(*id, c.peer, p),
                        channel: self.frame.physical_channel(asn, c.channel),
                        source: TxSource::Data { key: c.task, channel_offset: c.channel, packet: *p },
                    });
                }
            }
        }

        if self.schedule.is_shared(slot) {
            let busy: BTreeSet<NodeId> = txs.iter().map(|t| t.src).collect();
            let contenders: Vec<NodeId> = self
                .nodes
                .iter()
                .filter(|(id, n)| !n.ctrl.is_empty() && !busy.contains(id))
                .map(|(id, _)| *id)
                .collect();
            if !contenders.is_empty() {
                let w = contenders[self.medium.gen_range(0..contenders.len())];
                let f = self.nodes[&w].ctrl.front().expect("non-empty").frame.clone();
                txs.push(PendingTx { src: w, frame: f, channel: self.frame.physical_channel(asn, 0), source: TxSource::Shared });
            }
        }

        let mut per_channel: BTreeMap<u8, usize> = BTreeMap::new();
        for t in &txs {
            *per_channel.entry(t.channel).or_default() += 1;
        }
        let transmitting: BTreeSet<NodeId> = txs.iter().map(|t| t.src).collect();

        let mut deliveries = Vec::new();
        let mut outcomes = Vec::new();
        for t in txs {
            let collided = per_channel[&t.channel] > 1;
            let dst = t.frame.header.dst;
            let where_ = match t.source {
                TxSource::Beacon => "eb",
                TxSource::Shared => "shared",
                TxSource::Data { .. } => "cell",
            };
            if dst.is_broadcast() {
                self.trace.push(TraceRecord::frame(asn, t.src, Direction::Tx, &t.frame, format!("dst=bcast;via={where_}")));
                let listeners: Vec<NodeId> = self
                    .nodes
                    .iter()
                    .filter(|(id, n)| n.scanning && **id != t.src && !transmitting.contains(id) && self.links.has_link(t.src, **id))
                    .map(|(id, _)| *id)
                    .collect();
                for l in listeners {
                    let ok = !collided
                        && attempt_transmission(&self.links, t.src, l, asn, self.rngs.get_mut(&t.src).expect("rng"))
                            .is_ok_and(|o| o == TxOutcome::Delivered);
                    if ok {
                        self.trace.push(TraceRecord::frame(asn, l, Direction::Rx, &t.frame, format!("src={}", t.src.0)));
                        deliveries.push(Delivery { node: l, frame: t.frame.clone(), packet: None });
                    }
                }
                match t.source {
                    TxSource::Beacon => self.node_mut(t.src).beacon = None,
                    _ => {
                        self.node_mut(t.src).ctrl.pop_front();
                    }
                }
                continue;
            }

            let attempt = match &t.source {
                TxSource::Data { packet, .. } => packet.attempts + 1,
                _ => self.nodes[&t.src].ctrl.front().map_or(1, |e| e.attempts + 1),
            };
            let pkt_note = match &t.source {
                TxSource::Data { packet, .. } => format!(";pkt={}", packet.tag()),
                _ => String::new(),
            };
            self.trace.push(TraceRecord::frame(
                asn,
                t.src,
                Direction::Tx,
                &t.frame,
                format!("dst={};attempt={attempt};via={where_}{pkt_note}", dst.0),
            ));
            if matches!(t.source, TxSource::Data { .. }) {
                self.node_mut(t.src).cell_tx_total += 1;
            }
            if self.nodes[&t.src].parent == Some(dst) {
                self.node_mut(t.src).last_uplink = Some(asn);
            }

            let listening = match &t.source {
                TxSource::Data { channel_offset, .. } => {
                    !transmitting.contains(&dst)
                        && self.schedule.cell_at(dst, slot).is_some_and(|c| {
                            c.kind == CellKind::RxUnicast && c.peer == t.src && c.channel_offset == *channel_offset
                        })
                }
                _ => self.nodes.contains_key(&dst) && !transmitting.contains(&dst),
            };
            let outcome = if !listening {
                Err("deaf")
            } else if collided {
                Err("collision")
            } else {
                match attempt_transmission(&self.links, t.src, dst, asn, self.rngs.get_mut(&t.src).expect("rng")) {
                    Ok(TxOutcome::Delivered) => Ok(()),
                    Ok(TxOutcome::Lost) => Err("link"),
                    Err(_) => Err("nolink"),
                }
            };
            let est_outcome = if outcome.is_ok() { TxOutcome::Delivered } else { TxOutcome::Lost };
            self.node_mut(t.src).est.entry(dst).or_default().update(est_outcome);

            match outcome {
                Ok(()) => {
                    self.trace.push(TraceRecord::frame(asn, dst, Direction::Rx, &t.frame, format!("src={}{pkt_note}", t.src.0)));
                    match t.source {
                        TxSource::Data { key, packet, .. } => {
                            self.node_mut(t.src).queues.get_mut(&key).expect("queue").pop_front();
                            deliveries.push(Delivery { node: dst, frame: t.frame, packet: Some(packet) });
                        }
                        _ => {
                            self.node_mut(t.src).ctrl.pop_front();
                            deliveries.push(Delivery { node: dst, frame: t.frame.clone(), packet: None });
                            outcomes.push(SendOutcome { node: t.src, frame: t.frame, delivered: true });
                        }
                    }
                }
                Err(why) => {
                    let listen = if listening { 1 } else { 0 };
                    self.trace.push(TraceRecord::frame(
                        asn,
                        t.src,
                        Direction::Lost,
                        &t.frame,
                        format!("dst={};why={why};listening={listen}{pkt_note}", dst.0),
                    ));
                    let max = self.params.max_attempts;
                    match t.source {
                        TxSource::Data { key, .. } => {
                            let q = self.node_mut(t.src).queues.get_mut(&key).expect("queue");
                            let head = q.front_mut().expect("head");
                            head.attempts += 1;
                            if head.attempts >= max {
                                let p = q.pop_front().expect("head");
                                self.drop_packet(t.src, &p, "retries");
                            }
                        }
                        _ => {
                            let n = self.node_mut(t.src);
                            let head = n.ctrl.front_mut().expect("head");
                            head.attempts += 1;
                            if head.attempts >= max {
                                let e = n.ctrl.pop_front().expect("head");
                                self.trace.push(TraceRecord::frame(
                                    asn,
                                    t.src,
                                    Direction::Drop,
                                    &e.frame,
                                    format!("dst={};why=retries", dst.0),
                                ));
                                outcomes.push(SendOutcome { node: t.src, frame: e.frame, delivered: false });
                            }
                        }
                    }
                }
            }
        }
        (deliveries, outcomes)
    }

    /// Transmission attempts of `ft` so far.
    pub fn frame_type_count(&self, ft: FrameType) -> usize {
        self.trace.iter().filter(|r| r.direction == Direction::Tx && r.frame_type == Some(ft)).count()
    }
}

#[derive(Clone, Copy, Debug)]
enum TxSource {
    Beacon,
    Shared,
    Data { key: Option<u16>, channel_offset: u8, packet: Packet },
}

#[derive(Clone, Debug)]
struct PendingTx {
    src: NodeId,
    frame: Frame,
    channel: u8,
    source: TxSource,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CommandPayload;
    use crate::tsch::Cell;

    fn net() -> Net {
        let frame = Slotframe { length: 8, slot_duration_ms: 20, num_channels: 16 };
        let mut n = Net::new(1, frame, 0.16, MacParams::default());
        n.add_node(NodeMac::new(NodeId(0), NodeRole::Root, None));
        n.add_node(NodeMac::new(NodeId(1), NodeRole::Leader, Some(NodeId(0))));
        n.add_node(NodeMac::new(NodeId(3), NodeRole::Member, Some(NodeId(1))));
        n.links.set_symmetric(NodeId(0), NodeId(1), 1.0).unwrap();
        n.links.set_symmetric(NodeId(1), NodeId(3), 1.0).unwrap();
        n.schedule.add_shared_slot(0);
        n
    }

    fn cell_pair(n: &mut Net, slot: u16, ch: u8) {
        let tx = Cell { slot_offset: slot, channel_offset: ch, kind: CellKind::TxUnicast, owner: NodeId(3), peer: NodeId(1), task: None, installed_at: 0 };
        n.schedule.add_cell(tx).unwrap();
        n.schedule.add_cell(Cell { kind: CellKind::RxUnicast, owner: NodeId(1), peer: NodeId(3), ..tx }).unwrap();
        n.install_tx(NodeId(3), slot, LocalTx { channel: ch, peer: NodeId(1), task: None });
    }

    #[test]
    fn data_flows_through_dedicated_cell() {
        let mut n = net();
        cell_pair(&mut n, 2, 1);
        n.generate(NodeId(3), BACKGROUND, NodeId(1));
        n.asn = 2;
        let (d, o) = n.resolve_slot();
        assert_eq!(d.len(), 1);
        assert!(o.is_empty());
        assert_eq!(d[0].node, NodeId(1));
        assert_eq!(d[0].packet.unwrap().seq, 1);
        assert_eq!(n.node(NodeId(3)).queue_len(), 0);
    }

    #[test]
    fn sender_with_stale_cell_is_unheard() {
        let mut n = net();
        n.install_tx(NodeId(3), 5, LocalTx { channel: 2, peer: NodeId(1), task: None });
        n.generate(NodeId(3), BACKGROUND, NodeId(1));
        for a in 0..8 {
            n.asn = 5 + a * 8;
            let (d, _) = n.resolve_slot();
            assert!(d.is_empty());
        }
        assert_eq!(n.node(NodeId(3)).queue_len(), 0);
        assert!(n.trace.iter().any(|r| r.direction == Direction::Drop && r.note.contains("why=retries")));
        assert!(n.trace.iter().any(|r| r.note.contains("why=deaf")));
    }

    #[test]
    fn control_uses_shared_slot_and_reports_outcome() {
        let mut n = net();
        n.send(NodeId(3), NodeId(1), Payload::Command(CommandPayload::MacTest { nonce: 1 }));
        n.asn = 1;
        assert!(n.resolve_slot().0.is_empty());
        n.asn = 8;
        let (d, o) = n.resolve_slot();
        assert_eq!(d.len(), 1);
        assert!(o[0].delivered);
    }

    #[test]
    fn queue_cap_drops_overflow() {
        let mut n = net();
        for _ in 0..12 {
            n.generate(NodeId(3), BACKGROUND, NodeId(1));
        }
        assert_eq!(n.node(NodeId(3)).queue_len(), 10);
        let drops = n.trace.iter().filter(|r| r.direction == Direction::Drop).count();
        assert_eq!(drops, 2);
    }

    #[test]
    fn tagged_cells_isolate_queues() {
        let mut n = net();
        n.generate(NodeId(3), BACKGROUND, NodeId(1));
        n.generate(NodeId(3), 7, NodeId(1));
        n.install_tx(NodeId(3), 3, LocalTx { channel: 1, peer: NodeId(1), task: Some(7) });
        assert_eq!(n.node(NodeId(3)).fifo_len(), 1);
        assert_eq!(n.node(NodeId(3)).queues[&Some(7)].len(), 1);
        n.remove_task_tx(NodeId(3), 7);
        assert_eq!(n.node(NodeId(3)).fifo_len(), 2);
    }

    #[test]
    fn flows_are_periodic() {
        let mut n = net();
        let f = Flow::new(BACKGROUND, NodeId(1), 1.0, 20, 0, 120).unwrap();
        assert_eq!(f.period, 50);
        n.start_flow(NodeId(3), f);
        for a in 0..200 {
            n.asn = a;
            n.run_flows();
        }
        assert_eq!(n.node(NodeId(3)).flows[&BACKGROUND].generated, 3);
    }
}
