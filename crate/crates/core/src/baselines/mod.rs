//! Comparison schedulers. [`Core`] carries what the dynamic baselines share:
//! hop-by-hop relaying through leaders, task dispatch, network joins of
//! mobile nodes, beacons and liveness traffic. Each baseline adds its own
//! cell policy on top.

pub mod ost;
pub mod sdn;
pub mod sixtisch;
pub mod static_tsch;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::codec::{CommandPayload, EventKind, Frame, Payload, TaggedBody};
use crate::model::{Asn, CapabilitySet, NodeId, NodeRole, NodeState, Task};
use crate::net::{Flow, Net, Packet};
use crate::roles::generation_stop;
use crate::scheduler::select_best;
use crate::sim::scenario::{Params, Scenario};
use crate::tsch::{Cell, CellKind};

/// Who transmits enhanced beacons.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EbPolicy {
    #[default]
    None,
    /// Cluster leaders only.
    Leaders,
    /// Root and leaders.
    Routers,
    /// Every associated node.
    All,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Liveness {
    #[default]
    None,
    /// Unsuppressed keep-alive to the parent every cycle.
    KeepAlive,
    /// State report to the root every `n` cycles, relayed by leaders.
    Heartbeat(u64),
}

/// Where tasks are bound to executors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dispatch {
    #[default]
    Leader,
    Root,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeInfo {
    pub role: NodeRole,
    pub caps: CapabilitySet,
    pub battery: f64,
    pub zone: u8,
}

/// A task as its leader sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderTask {
    pub task: Task,
    pub leader: NodeId,
    pub executor: Option<NodeId>,
    /// Task packets received within the latency bound and the window.
    pub on_time: u32,
    pub reported: u32,
    pub done: bool,
}

impl LeaderTask {
    pub fn success(&self) -> bool {
        self.reported > 0 && self.on_time as f64 >= self.task.qos.pdr_min * self.reported as f64 - 1e-9
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Running {
    stop: Asn,
    end: Asn,
    reported: u32,
    stopped: bool,
}

/// What the common layer saw that a baseline may want to react to.
#[derive(Clone, Debug, PartialEq)]
pub enum Happening {
    /// The root accepted a join; the node now belongs to `leader`.
    Admitted { node: NodeId, leader: NodeId },
    /// A node finished associating with its leader.
    Associated { node: NodeId, leader: NodeId },
    /// A task reached its executor.
    Started { node: NodeId, task: u16 },
    /// A task window closed at its leader.
    Ended { leader: NodeId, task: u16 },
    /// A frame the common layer does not handle.
    Unhandled,
}

#[derive(Clone, Debug, Default)]
pub struct Core {
    pub root: NodeId,
    pub params: Params,
    pub t_sf: f64,
    pub slot_ms: u32,
    pub cycle_len: u64,
    pub eb: EbPolicy,
    pub liveness: Liveness,
    pub dispatch: Dispatch,
    /// Mobiles must announce their capabilities before they get tasks.
    pub registration: bool,
    pub info: BTreeMap<NodeId, NodeInfo>,
    /// Current parent of every associated non-root node.
    pub parent: BTreeMap<NodeId, NodeId>,
    pub leaders: BTreeSet<NodeId>,
    /// Nodes whose capabilities their leader knows.
    pub registered: BTreeSet<NodeId>,
    pub tasks: BTreeMap<u16, LeaderTask>,
    /// Injected tasks the root has not yet bound (root dispatch only).
    pub unbound: BTreeMap<u16, (Task, NodeId)>,
    running: BTreeMap<NodeId, BTreeMap<u16, Running>>,
    joining: BTreeMap<NodeId, (NodeId, Asn)>,
    /// Leader a not-yet-associated node is joining through.
    via: BTreeMap<NodeId, NodeId>,
    /// Final destination and origin of frames in multi-hop transit.
    envelopes: HashMap<(NodeId, u8, Asn), (NodeId, NodeId)>,
}

impl Core {
    pub fn new(sc: &Scenario, eb: EbPolicy, liveness: Liveness, dispatch: Dispatch, registration: bool) -> Self {
        let mut core = Self {
            root: sc.root(),
            params: sc.params,
            t_sf: sc.t_sf,
            slot_ms: sc.slotframe.slot_duration_ms,
            cycle_len: sc.slotframe.length as u64,
            eb,
            liveness,
            dispatch,
            registration,
            leaders: sc.leaders().into_iter().collect(),
            ..Self::default()
        };
        for n in &sc.nodes {
            core.info.insert(n.id, NodeInfo { role: n.role, caps: n.caps, battery: n.battery, zone: n.zone });
            if let Some(p) = n.parent.filter(|_| n.role != NodeRole::Root) {
                core.parent.insert(n.id, p);
                core.registered.insert(n.id);
            }
        }
        for l in core.leaders.clone() {
            core.parent.insert(l, core.root);
        }
        core
    }

    pub fn children(&self, leader: NodeId) -> Vec<NodeId> {
        self.parent.iter().filter(|(_, p)| **p == leader).map(|(n, _)| *n).collect()
    }

    pub fn leader_of(&self, node: NodeId) -> Option<NodeId> {
        if self.leaders.contains(&node) {
            return Some(node);
        }
        self.parent.get(&node).copied().filter(|p| self.leaders.contains(p))
    }

    pub fn load(&self, node: NodeId) -> usize {
        self.running.get(&node).map_or(0, BTreeMap::len)
    }

    fn next_hop(&self, src: NodeId, dst: NodeId) -> NodeId {
        let leader_of = |n: NodeId| self.parent.get(&n).or_else(|| self.via.get(&n)).copied();
        if src == self.root {
            if self.leaders.contains(&dst) {
                dst
            } else {
                leader_of(dst).unwrap_or(dst)
            }
        } else if self.leaders.contains(&src) {
            if dst == self.root || leader_of(dst) == Some(src) {
                dst
            } else {
                self.root
            }
        } else {
            self.parent.get(&src).copied().unwrap_or(dst)
        }
    }

    /// Sends towards `dst` through the cluster tree.
    pub fn send_via(&mut self, net: &mut Net, src: NodeId, dst: NodeId, payload: Payload) {
        self.forward(net, src, src, dst, payload);
    }

    fn forward(&mut self, net: &mut Net, hop: NodeId, origin: NodeId, dst: NodeId, payload: Payload) {
        let next = self.next_hop(hop, dst);
        net.send(hop, next, payload);
        if next != dst || origin != hop {
            let seq = net.node(hop).seq;
            self.envelopes.insert((hop, seq, net.asn), (dst, origin));
        }
    }

    /// Original sender of a frame, looking through relays.
    pub fn origin(&self, frame: &Frame) -> NodeId {
        let h = &frame.header;
        self.envelopes.get(&(h.src, h.seq, h.asn)).map_or(h.src, |(_, o)| *o)
    }

    /// Binds a leader's pending task to its best capable child.
    pub fn try_bind(&mut self, net: &mut Net, leader: NodeId, task_id: u16) -> Option<NodeId> {
        let entry = self.tasks.get(&task_id)?;
        if entry.executor.is_some() || entry.done || net.asn >= entry.task.window.end {
            return None;
        }
        let task = entry.task.clone();
        let exec = self.pick(leader, &task)?;
        self.tasks.get_mut(&task_id).expect("present").executor = Some(exec);
        self.send_via(net, leader, exec, Payload::Command(CommandPayload::TaskRequest { task, cells: Vec::new() }));
        Some(exec)
    }

    /// Best capable node in the leader's cluster.
    pub fn pick(&self, leader: NodeId, task: &Task) -> Option<NodeId> {
        let known = self.children(leader).into_iter().filter(|n| self.registered.contains(n));
        self.pick_from(known, task)
    }

    /// Best capable node among `nodes`.
    pub fn pick_from(&self, nodes: impl IntoIterator<Item = NodeId>, task: &Task) -> Option<NodeId> {
        let cands: Vec<(NodeId, CapabilitySet, NodeState)> = nodes
            .into_iter()
            .filter_map(|n| {
                let i = self.info.get(&n)?;
                Some((n, i.caps, NodeState { battery: i.battery, queue_len: self.load(n) as u32, zone: i.zone, capabilities: i.caps }))
            })
            .filter(|(_, c, s)| c.covers(task.c_req) && s.battery >= self.params.min_battery)
            .collect();
        select_best(&cands, task.c_req, 1).into_iter().next()
    }

    /// Task arrival at the root.
    pub fn on_task(&mut self, net: &mut Net, task: &Task, leader: NodeId) {
        match self.dispatch {
            Dispatch::Leader => {
                net.send(self.root, leader, Payload::Command(CommandPayload::TaskRequest { task: task.clone(), cells: Vec::new() }));
            }
            Dispatch::Root => {
                self.unbound.insert(task.id, (task.clone(), leader));
            }
        }
    }

    fn start_task(&mut self, net: &mut Net, node: NodeId, task: &Task) -> bool {
        let asn = net.asn;
        let runs = self.running.entry(node).or_default();
        if runs.contains_key(&task.id) || asn >= task.window.end {
            return false;
        }
        let Some(parent) = self.parent.get(&node).copied() else {
            return false;
        };
        let stop = generation_stop(task, self.cycle_len);
        runs.insert(task.id, Running { stop, end: task.window.end, reported: 0, stopped: false });
        if let Some(f) = Flow::new(task.id, parent, task.rate, self.slot_ms, asn, stop) {
            net.start_flow(node, f);
        }
        true
    }

    /// Handles the frames every dynamic baseline treats alike.
    pub fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>) -> Happening {
        let h = frame.header;
        let asn = net.asn;
        if let Some((dst, origin)) = self.envelopes.remove(&(h.src, h.seq, h.asn)) {
            if dst != node {
                if let Payload::Command(CommandPayload::TaskRequest { task, .. }) = &frame.payload {
                    if self.leaders.contains(&node) {
                        self.tasks.entry(task.id).or_insert_with(|| LeaderTask {
                            task: task.clone(),
                            leader: node,
                            executor: Some(dst),
                            on_time: 0,
                            reported: 0,
                            done: false,
                        });
                    }
                }
                if let Payload::Command(CommandPayload::JoinRequest { .. }) = &frame.payload {
                    self.via.insert(origin, node);
                }
                self.forward(net, node, origin, dst, frame.payload.clone());
                return Happening::Unhandled;
            }
            // delivered end to end: keep the origin visible to the handler
            self.envelopes.insert((h.src, h.seq, h.asn), (dst, origin));
        }
        let origin = self.origin(frame);
        let out = self.handle(net, node, origin, frame, packet, asn);
        self.envelopes.remove(&(h.src, h.seq, h.asn));
        out
    }

    fn handle(
        &mut self,
        net: &mut Net,
        node: NodeId,
        origin: NodeId,
        frame: &Frame,
        packet: Option<&Packet>,
        asn: Asn,
    ) -> Happening {
        let src = frame.header.src;
        match &frame.payload {
            Payload::Data(_) => {
                if let Some(p) = packet {
                    if let Some(t) = self.tasks.get_mut(&p.task).filter(|t| t.leader == node) {
                        let lat = (asn - p.gen_asn + 1) * self.slot_ms as u64;
                        if asn < t.task.window.end && lat <= t.task.qos.lat_max_ms as u64 {
                            t.on_time += 1;
                        }
                    }
                }
                Happening::Unhandled
            }
            Payload::Beacon(None) => {
                let mac = net.node(node);
                if mac.scanning && !self.joining.contains_key(&node) && self.leaders.contains(&src) {
                    let i = self.info[&node];
                    self.joining.insert(node, (src, asn + self.params.join_timeout));
                    net.send(
                        node,
                        src,
                        Payload::Command(CommandPayload::JoinRequest {
                            task_id: 0,
                            caps: i.caps,
                            battery_pct: (i.battery * 100.0).round().clamp(0.0, 100.0) as u8,
                            credentials: 0,
                        }),
                    );
                }
                Happening::Unhandled
            }
            Payload::Command(cmd) => self.command(net, node, origin, src, cmd),
            Payload::Event(ev) if self.leaders.contains(&node) && ev.kind == EventKind::StateChange => {
                if self.parent.get(&src) == Some(&node) && self.registered.insert(src) {
                    let pending: Vec<u16> =
                        self.tasks.iter().filter(|(_, t)| t.leader == node && t.executor.is_none()).map(|(id, _)| *id).collect();
                    for t in pending {
                        self.try_bind(net, node, t);
                    }
                }
                self.send_via(net, node, self.root, frame.payload.clone());
                Happening::Unhandled
            }
            _ => Happening::Unhandled,
        }
    }

    fn command(&mut self, net: &mut Net, node: NodeId, origin: NodeId, src: NodeId, cmd: &CommandPayload) -> Happening {
        match cmd {
            CommandPayload::TaskRequest { task, .. } => {
                if self.leaders.contains(&node) && src == self.root {
                    self.tasks.entry(task.id).or_insert_with(|| LeaderTask {
                        task: task.clone(),
                        leader: node,
                        executor: None,
                        on_time: 0,
                        reported: 0,
                        done: false,
                    });
                    self.try_bind(net, node, task.id);
                    Happening::Unhandled
                } else if self.parent.contains_key(&node) && self.start_task(net, node, task) {
                    Happening::Started { node, task: task.id }
                } else {
                    Happening::Unhandled
                }
            }
            CommandPayload::TaskProgress { task_id, packets } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.reported = t.reported.max(*packets as u32);
                }
                Happening::Unhandled
            }
            CommandPayload::JoinRequest { caps, battery_pct, .. } if node == self.root => {
                let leader = self.via.get(&origin).copied().unwrap_or(src);
                if let Some(i) = self.info.get_mut(&origin) {
                    i.caps = *caps;
                    i.battery = *battery_pct as f64 / 100.0;
                }
                self.send_via(net, node, origin, Payload::Command(CommandPayload::Acknowledgment { task_id: 0, accepted: true }));
                Happening::Admitted { node: origin, leader }
            }
            CommandPayload::JoinRequest { .. } if self.leaders.contains(&node) => {
                self.via.insert(src, node);
                self.forward(net, node, src, self.root, Payload::Command(cmd.clone()));
                Happening::Unhandled
            }
            CommandPayload::Acknowledgment { accepted, .. } => match self.joining.get(&node).copied() {
                Some((leader, _)) if leader == src => {
                    self.joining.remove(&node);
                    self.via.remove(&node);
                    if !*accepted {
                        return Happening::Unhandled;
                    }
                    self.parent.insert(node, leader);
                    let mac = net.node_mut(node);
                    mac.parent = Some(leader);
                    mac.scanning = false;
                    net.evt(node, None, format!("joined;leader={}", leader.0));
                    if self.registration {
                        let caps = self.info[&node].caps;
                        net.send(
                            node,
                            leader,
                            Payload::Event(TaggedBody {
                                kind: EventKind::StateChange,
                                task_id: 0,
                                body: caps.bits().to_le_bytes().to_vec(),
                            }),
                        );
                    } else {
                        self.registered.insert(node);
                    }
                    Happening::Associated { node, leader }
                }
                _ => Happening::Unhandled,
            },
            _ => Happening::Unhandled,
        }
    }

    /// Per-slot housekeeping for `node`.
    pub fn on_tick(&mut self, net: &mut Net, node: NodeId) -> Vec<Happening> {
        let asn = net.asn;
        let mut out = Vec::new();
        let cycle = net.cycle();
        if net.cycle_start() {
            self.beacon(net, node);
            if cycle > 0 {
                self.liveness(net, node, cycle);
            }
        }
        if let Some((_, deadline)) = self.joining.get(&node).copied() {
            if asn >= deadline {
                self.joining.remove(&node);
                net.evt(node, None, "join_timeout");
            }
        }
        self.progress(net, node, asn);
        if self.leaders.contains(&node) {
            let ending: Vec<u16> = self
                .tasks
                .iter()
                .filter(|(_, t)| t.leader == node && !t.done && asn >= t.task.window.end)
                .map(|(id, _)| *id)
                .collect();
            for id in ending {
                let t = self.tasks.get_mut(&id).expect("present");
                t.done = true;
                let (success, count) = (t.success(), t.on_time.min(u16::MAX as u32) as u16);
                net.send(node, self.root, Payload::Command(CommandPayload::TaskCompletion { task_id: id, success, count }));
                out.push(Happening::Ended { leader: node, task: id });
            }
        }
        out
    }

    fn beacon(&mut self, net: &mut Net, node: NodeId) {
        if net.cycle() % self.params.eb_period_cycles.max(1) != 0 {
            return;
        }
        let router = node == self.root || self.leaders.contains(&node);
        let associated = self.parent.contains_key(&node);
        match self.eb {
            EbPolicy::None => {}
            EbPolicy::Leaders if self.leaders.contains(&node) => net.set_beacon(node, Payload::Beacon(None)),
            EbPolicy::Routers | EbPolicy::All if router => net.set_beacon(node, Payload::Beacon(None)),
            EbPolicy::All if associated => net.send(node, NodeId::BROADCAST, Payload::Beacon(None)),
            _ => {}
        }
    }

    fn liveness(&mut self, net: &mut Net, node: NodeId, cycle: u64) {
        let Some(parent) = self.parent.get(&node).copied() else {
            return;
        };
        match self.liveness {
            Liveness::None => {}
            Liveness::KeepAlive => {
                if cycle % self.params.ka_period_cycles.max(1) == 0 {
                    net.send(node, parent, Payload::Command(CommandPayload::MacTest { nonce: cycle as u16 }));
                }
            }
            Liveness::Heartbeat(every) => {
                if cycle % every.max(1) == 0 {
                    let q = net.node(node).queue_len().min(255) as u8;
                    let body = vec![q];
                    self.send_via(
                        net,
                        node,
                        self.root,
                        Payload::Event(TaggedBody { kind: EventKind::StateChange, task_id: 0, body }),
                    );
                }
            }
        }
    }

    fn progress(&mut self, net: &mut Net, node: NodeId, asn: Asn) {
        let Some(runs) = self.running.get_mut(&node) else {
            return;
        };
        let every = self.params.progress_every.max(1);
        let parent = self.parent.get(&node).copied();
        let mut reports = Vec::new();
        let mut stopped = Vec::new();
        let mut done = Vec::new();
        for (id, r) in runs.iter_mut() {
            let generated = net.node(node).flows.get(id).map_or(r.reported, |f| f.generated);
            let finished = asn >= r.stop;
            if generated >= r.reported + every || (finished && generated > r.reported) {
                r.reported = generated;
                reports.push((*id, generated));
            }
            if finished && !r.stopped {
                r.stopped = true;
                stopped.push(*id);
            }
            if asn >= r.end {
                done.push(*id);
            }
        }
        for id in &done {
            runs.remove(id);
        }
        if let Some(p) = parent {
            for (id, g) in reports {
                net.send(node, p, Payload::Command(CommandPayload::TaskProgress { task_id: id, packets: g.min(u16::MAX as u32) as u16 }));
            }
        }
        for id in stopped {
            net.stop_flow(node, id);
        }
        for id in done {
            net.remove_task_tx(node, id);
        }
    }

    /// Re-sends task requests that exhausted their retries.
    pub fn on_sent(&mut self, net: &mut Net, node: NodeId, frame: &Frame, delivered: bool) {
        if delivered {
            return;
        }
        let h = frame.header;
        let env = self.envelopes.remove(&(h.src, h.seq, h.asn));
        if let Payload::Command(CommandPayload::TaskRequest { task, .. }) = &frame.payload {
            if net.asn < task.window.end {
                match env {
                    Some((dst, origin)) => self.forward(net, node, origin, dst, frame.payload.clone()),
                    None => net.send(node, h.dst, frame.payload.clone()),
                }
            }
        }
    }

    /// Forgets a node that left radio range.
    pub fn detach(&mut self, net: &mut Net, node: NodeId) {
        self.parent.remove(&node);
        self.registered.remove(&node);
        self.joining.remove(&node);
        self.via.remove(&node);
        if let Some(runs) = self.running.remove(&node) {
            for id in runs.into_keys() {
                net.stop_flow(node, id);
                net.remove_task_tx(node, id);
            }
        }
        let mac = net.node_mut(node);
        mac.parent = None;
        mac.scanning = false;
    }
}

/// Adds a Tx cell and the peer's Rx cell to the global schedule.
pub fn reserve_pair(net: &mut Net, tx: Cell) -> bool {
    crate::monaas::reserve_pair(net, tx)
}

/// Removes the Tx cell of `owner` at `slot` and the peer's Rx cell.
pub fn release_pair(net: &mut Net, owner: NodeId, slot: u16) -> Option<Cell> {
    let c = net.schedule.remove_cell(owner, slot)?;
    if net.schedule.cell_at(c.peer, slot).is_some_and(|rx| rx.kind == CellKind::RxUnicast && rx.peer == owner) {
        net.schedule.remove_cell(c.peer, slot);
    }
    Some(c)
}

/// Channel offset used by baseline cells in `slot`.
pub fn channel_for(slot: u16, channels: u8) -> u8 {
    1 + (slot % (channels.max(2) as u16 - 1)) as u8
}
