use std::collections::{BTreeMap, VecDeque};

use crate::codec::{CellAction, CommandPayload, Frame, Payload, RecruitmentIe};
use crate::model::{Asn, CapabilitySet, NodeId, NodeState, Priority, QoS, Task, TimeWindow};
use crate::net::{Packet, BACKGROUND};
use crate::roles::{chunk_cells, Effect, Observation, Phase, TaskLedgerEntry};
use crate::scheduler::{estimate_slots, FailureReason, JoinOffer, LeaderContext};
use crate::sim::scenario::Params;
use crate::tsch::{CellKind, CellSpec, Schedule, Slotframe};

/// In-use tag for slots on their way back to the Root.
const RELEASING: u16 = u16::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeaderState {
    Idle,
    AwaitingGrant { task: u16, deadline: Asn },
    Recruiting { task: u16, deadline: Asn },
    Executing,
}

#[derive(Clone, Debug)]
enum Stage {
    AwaitGrant { deadline: Asn },
    Recruit { deadline: Asn, offers: Vec<JoinOffer>, beacons_left: u8, next_beacon: Asn, ie: RecruitmentIe },
}

#[derive(Clone, Debug)]
struct InFlight {
    task: Task,
    stage: Stage,
    /// Dynamic slots granted for this task, returned on failure.
    granted: Vec<u16>,
}

/// Domain leader running the three-stage task admission.
#[derive(Clone, Debug)]
pub struct LeaderMachine {
    pub node: NodeId,
    pub root: NodeId,
    pub params: Params,
    pub ctx: LeaderContext,
    /// The domain's share of the schedule; mirrored into the global one.
    pub local: Schedule,
    /// Background rate per member, packets per second.
    pub background: BTreeMap<NodeId, f64>,
    pub ledger: BTreeMap<u16, TaskLedgerEntry>,
    queue: VecDeque<Task>,
    current: Option<InFlight>,
    releasing: Vec<Vec<u16>>,
}

impl LeaderMachine {
    pub fn new(node: NodeId, root: NodeId, ctx: LeaderContext, frame: Slotframe, params: Params) -> Self {
        Self {
            node,
            root,
            params,
            ctx,
            local: Schedule::new(frame),
            background: BTreeMap::new(),
            ledger: BTreeMap::new(),
            queue: VecDeque::new(),
            current: None,
            releasing: Vec::new(),
        }
    }

    pub fn state(&self) -> LeaderState {
        match &self.current {
            Some(InFlight { task, stage: Stage::AwaitGrant { deadline }, .. }) => {
                LeaderState::AwaitingGrant { task: task.id, deadline: *deadline }
            }
            Some(InFlight { task, stage: Stage::Recruit { deadline, .. }, .. }) => {
                LeaderState::Recruiting { task: task.id, deadline: *deadline }
            }
            None if self.ledger.values().any(|e| e.phase == Phase::Running) => LeaderState::Executing,
            None => LeaderState::Idle,
        }
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    fn background_task(&self, rate: f64) -> Task {
        Task {
            id: BACKGROUND,
            priority: Priority::Low,
            qos: QoS { lat_max_ms: u32::MAX, pdr_min: self.params.background_pdr },
            c_req: CapabilitySet::EMPTY,
            zone: 0,
            window: TimeWindow { start: 0, end: Asn::MAX },
            rate,
            min_nodes: 1,
        }
    }

    /// Background cells `member` needs at its current link estimate.
    pub fn background_demand(&self, member: NodeId) -> usize {
        let rate = self.background.get(&member).copied().unwrap_or(0.0);
        let l = self.ctx.link_est.get(&member).copied().unwrap_or(1.0);
        estimate_slots(&self.background_task(rate), self.ctx.t_sf, l).req_slots as usize
    }

    fn background_held(&self, member: NodeId) -> usize {
        self.local
            .node_cells(member)
            .filter(|c| c.kind == CellKind::TxUnicast && c.task.is_none())
            .count()
    }

    /// Allocates up to `n` background cells for `member` from the free pool.
    fn add_background(&mut self, member: NodeId, n: usize, asn: Asn) -> Option<Vec<crate::tsch::Cell>> {
        let free = self.ctx.pool.free();
        let avail = free.iter().filter(|s| self.local.slot_free_for(member, self.node, **s)).count();
        let n = n.min(avail);
        if n == 0 {
            return None;
        }
        let cells = self.local.allocate_cells(member, self.node, n, &free, None, asn).ok()?;
        self.ctx.pool.mark_used(cells.iter().map(|c| c.slot_offset), BACKGROUND);
        Some(cells)
    }

    /// Pre-traffic background allocation; cells are installed without frames.
    pub fn init_background(&mut self, asn: Asn) -> Vec<crate::tsch::Cell> {
        let members: Vec<NodeId> = self.background.keys().copied().collect();
        let mut out = Vec::new();
        for m in members {
            let need = self.background_demand(m);
            if let Some(c) = self.add_background(m, need, asn) {
                out.extend(c);
            }
        }
        out
    }

    pub fn handle_frame(&mut self, frame: &Frame, packet: Option<&Packet>, asn: Asn) -> Vec<Effect> {
        let src = frame.header.src;
        let mut fx = Vec::new();
        match &frame.payload {
            Payload::Data(_) => {
                if let Some(p) = packet.filter(|p| p.task != BACKGROUND) {
                    if let Some(e) = self.ledger.get_mut(&p.task) {
                        let lat = (asn - p.gen_asn + 1) * self.local.frame.slot_duration_ms as u64;
                        if asn < e.task.window.end && lat <= e.task.qos.lat_max_ms as u64 {
                            e.received += 1;
                        }
                    }
                }
            }
            Payload::Command(CommandPayload::TaskRequest { task, .. }) if src == self.root => {
                if self.ledger.contains_key(&task.id) {
                    fx.push(Effect::log(Some(task.id), "duplicate_task"));
                } else {
                    self.ledger.insert(task.id, TaskLedgerEntry::new(task.clone()));
                    self.queue.push_back(task.clone());
                    fx.extend(self.pump(asn));
                }
            }
            Payload::Command(CommandPayload::ResourceResponse { task_id, slots, .. }) if src == self.root => {
                fx.extend(self.on_grant(*task_id, slots, asn));
            }
            Payload::Command(CommandPayload::JoinRequest { task_id, caps, battery_pct, .. }) => {
                let zone = self.ctx.states.values().next().map_or(0, |s| s.zone);
                let collecting = match &mut self.current {
                    Some(InFlight { task, stage: Stage::Recruit { offers, .. }, .. }) if task.id == *task_id => {
                        let state = NodeState {
                            battery: *battery_pct as f64 / 100.0,
                            queue_len: 0,
                            zone,
                            capabilities: *caps,
                        };
                        offers.push(JoinOffer { node: src, caps: *caps, state });
                        true
                    }
                    _ => false,
                };
                if !collecting {
                    fx.push(Effect::log(Some(*task_id), format!("late_join;node={}", src.0)));
                    fx.push(Effect::Send {
                        dst: src,
                        payload: Payload::Command(CommandPayload::Acknowledgment { task_id: *task_id, accepted: false }),
                    });
                }
            }
            Payload::Command(CommandPayload::TaskProgress { task_id, packets }) => {
                if let Some(e) = self.ledger.get_mut(task_id) {
                    e.progress.insert(src, *packets as u32);
                    e.progress_reports += 1;
                }
            }
            Payload::Command(CommandPayload::ResourceResponse { .. }) | Payload::Command(CommandPayload::TaskRequest { .. }) => {
                fx.push(Effect::log(frame.payload.task_id(), format!("protocol_violation;src={}", src.0)));
            }
            _ => {}
        }
        fx
    }

    fn on_grant(&mut self, task_id: u16, slots: &[u16], asn: Asn) -> Vec<Effect> {
        let waiting = matches!(&self.current, Some(InFlight { task, stage: Stage::AwaitGrant { .. }, .. }) if task.id == task_id);
        if !waiting {
            let mut fx = vec![Effect::log(Some(task_id), "protocol_violation;why=stale_grant")];
            if !slots.is_empty() {
                self.ctx.pool.add_dynamic(slots.iter().copied(), asn);
                fx.extend(self.release_to_root(task_id, slots.to_vec()));
            }
            return fx;
        }
        let mut cur = self.current.take().expect("waiting");
        if slots.is_empty() {
            return self.fail(cur, FailureReason::Slots);
        }
        self.ctx.pool.add_dynamic(slots.iter().copied(), asn);
        let first = cur.granted.is_empty();
        cur.granted.extend_from_slice(slots);
        // the pool can shrink while the grant is in flight; top up once
        let short = self.ctx.slot_shortfall(&cur.task);
        if short > 0 && first {
            let deadline = asn + self.params.root_timeout;
            self.current = Some(InFlight { stage: Stage::AwaitGrant { deadline }, ..cur });
            return vec![Effect::Send {
                dst: self.root,
                payload: Payload::Command(CommandPayload::ResourceRequest {
                    leader: self.node,
                    task_id,
                    count: short.min(u16::MAX as usize) as u16,
                }),
            }];
        }
        let mut fx = self.stage2(cur, asn);
        fx.extend(self.pump(asn));
        fx
    }

    /// Starts queued tasks while nothing is in flight.
    fn pump(&mut self, asn: Asn) -> Vec<Effect> {
        let mut fx = Vec::new();
        while self.current.is_none() {
            let Some(task) = self.queue.pop_front() else { break };
            fx.extend(self.begin(task, asn));
        }
        fx
    }

    fn begin(&mut self, task: Task, asn: Asn) -> Vec<Effect> {
        if let Some(e) = self.ledger.get_mut(&task.id) {
            e.advance(Phase::Provisioning);
        }
        self.ctx.lease_slots = task.window.end.saturating_sub(asn);
        let short = self.ctx.slot_shortfall(&task);
        if short > 0 {
            let deadline = asn + self.params.root_timeout;
            let id = task.id;
            self.current = Some(InFlight { task, stage: Stage::AwaitGrant { deadline }, granted: Vec::new() });
            return vec![Effect::Send {
                dst: self.root,
                payload: Payload::Command(CommandPayload::ResourceRequest {
                    leader: self.node,
                    task_id: id,
                    count: short.min(u16::MAX as usize) as u16,
                }),
            }];
        }
        self.stage2(InFlight { task, stage: Stage::AwaitGrant { deadline: asn }, granted: Vec::new() }, asn)
    }

    fn recruitment_ie(&self, task: &Task, missing: CapabilitySet, asn: Asn) -> RecruitmentIe {
        RecruitmentIe {
            task_id: task.id,
            required_caps: missing,
            priority: task.priority,
            qos_pct: RecruitmentIe::pdr_pct(task.qos.pdr_min),
            zone: task.zone,
            time_window: task.window.end.saturating_sub(asn).min(u16::MAX as u64) as u16,
            credentials: ((self.node.0 as u64) << 16) | task.id as u64,
            resource_estimate: self.ctx.demand(task).req_slots.min(u16::MAX as u32) as u16,
        }
    }

    fn stage2(&mut self, cur: InFlight, asn: Asn) -> Vec<Effect> {
        let (_, missing) = self.ctx.capability_gap(&cur.task);
        match missing {
            None => self.stage3(cur, asn),
            Some(m) => {
                if let Some(e) = self.ledger.get_mut(&cur.task.id) {
                    e.advance(Phase::Recruiting);
                }
                let ie = self.recruitment_ie(&cur.task, m, asn);
                let id = cur.task.id;
                self.current = Some(InFlight {
                    stage: Stage::Recruit {
                        deadline: asn + self.params.recruit_window,
                        offers: Vec::new(),
                        beacons_left: self.params.recruit_beacons.saturating_sub(1),
                        next_beacon: asn + self.beacon_gap(),
                        ie,
                    },
                    ..cur
                });
                vec![
                    Effect::log(Some(id), format!("recruit;missing={}", m.bits())),
                    Effect::Broadcast(Payload::Beacon(Some(ie))),
                ]
            }
        }
    }

    fn beacon_gap(&self) -> Asn {
        (self.params.recruit_window / self.params.recruit_beacons.max(1) as u64).max(1)
    }

    fn stage3(&mut self, cur: InFlight, asn: Asn) -> Vec<Effect> {
        match self.ctx.allocate(&cur.task, &mut self.local, asn) {
            Err(reason) => self.fail(cur, reason),
            Ok(a) => {
                let mut fx = vec![Effect::Reserve(a.cells.iter().flatten().copied().collect())];
                for (exec, cells) in a.executors.iter().zip(&a.cells) {
                    if let Some(s) = self.ctx.states.get_mut(exec) {
                        s.queue_len += 1;
                    }
                    for chunk in chunk_cells(cells) {
                        fx.push(Effect::Send {
                            dst: *exec,
                            payload: Payload::Command(CommandPayload::TaskRequest { task: cur.task.clone(), cells: chunk }),
                        });
                    }
                }
                if let Some(e) = self.ledger.get_mut(&cur.task.id) {
                    e.advance(Phase::Running);
                    e.assigned_nodes = a.executors.clone();
                    e.cells = a.cells.into_iter().flatten().collect();
                }
                fx.push(Effect::log(Some(cur.task.id), format!("assigned;cells={};req={}", a.req_slots as usize * a.executors.len(), a.req_slots)));
                fx
            }
        }
    }

    fn fail(&mut self, cur: InFlight, reason: FailureReason) -> Vec<Effect> {
        let id = cur.task.id;
        let mut fx = vec![Effect::log(Some(id), format!("fail;why={}", reason.as_str()))];
        let pool = &self.ctx.pool;
        let back: Vec<u16> =
            cur.granted.iter().copied().filter(|s| pool.dynamic().contains_key(s) && !pool.in_use().contains_key(s)).collect();
        fx.extend(self.release_to_root(id, back));
        if let Some(e) = self.ledger.get_mut(&id) {
            e.advance(Phase::Failed);
        }
        fx.push(Effect::Send {
            dst: self.root,
            payload: Payload::Command(CommandPayload::TaskCompletion { task_id: id, success: false, count: 0 }),
        });
        fx
    }

    /// Sends dynamic slots back; they stay in the pool, unusable, until the
    /// Root has them.
    fn release_to_root(&mut self, task_id: u16, slots: Vec<u16>) -> Vec<Effect> {
        if slots.is_empty() {
            return Vec::new();
        }
        self.ctx.pool.mark_used(slots.iter().copied(), RELEASING);
        self.releasing.push(slots.clone());
        vec![Effect::Send {
            dst: self.root,
            payload: Payload::Command(CommandPayload::ResourceResponse { leader: self.node, task_id, slots }),
        }]
    }

    pub fn on_sent(&mut self, frame: &Frame, delivered: bool) -> Vec<Effect> {
        match &frame.payload {
            Payload::Command(CommandPayload::ResourceResponse { slots, .. }) => {
                if delivered {
                    if let Some(i) = self.releasing.iter().position(|r| r == slots) {
                        let r = self.releasing.remove(i);
                        self.ctx.pool.unmark(&r);
                        self.ctx.pool.take_dynamic(&r);
                    }
                    Vec::new()
                } else {
                    vec![Effect::Send { dst: frame.header.dst, payload: frame.payload.clone() }]
                }
            }
            Payload::Command(CommandPayload::TaskRequest { task, .. }) if !delivered => {
                if self.ledger.get(&task.id).is_some_and(|e| e.phase == Phase::Running) {
                    vec![Effect::Send { dst: frame.header.dst, payload: frame.payload.clone() }]
                } else {
                    Vec::new()
                }
            }
            Payload::Command(CommandPayload::ScheduleUpdate { .. }) if !delivered => {
                if self.ctx.domain.contains(frame.header.dst) {
                    vec![Effect::Send { dst: frame.header.dst, payload: frame.payload.clone() }]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn tick(&mut self, asn: Asn, obs: &Observation) -> Vec<Effect> {
        let mut fx = Vec::new();
        let cycle = asn / obs.cycle_len.max(1);
        if obs.cycle_start {
            if cycle % self.params.eb_period_cycles.max(1) == 0 {
                fx.push(Effect::Beacon(Payload::Beacon(None)));
            }
            let quiet = obs.last_uplink.map_or(true, |a| a + obs.cycle_len <= asn);
            if cycle % self.params.ka_period_cycles.max(1) == 0 && quiet && cycle > 0 {
                fx.push(Effect::Send { dst: self.root, payload: Payload::Command(CommandPayload::MacTest { nonce: cycle as u16 }) });
            }
            for (m, l) in &obs.member_l_est {
                self.ctx.link_est.insert(*m, *l);
            }
            fx.extend(self.top_up_background(asn));
        }

        if let Some(cur) = self.current.take() {
            match cur.stage {
                Stage::AwaitGrant { deadline } if asn >= deadline => {
                    fx.push(Effect::log(Some(cur.task.id), "root_timeout"));
                    fx.extend(self.fail(cur, FailureReason::Slots));
                }
                Stage::Recruit { deadline, offers, beacons_left, next_beacon, ie } => {
                    if asn >= deadline {
                        fx.extend(self.close_recruitment(cur.task, cur.granted, offers, asn));
                    } else if beacons_left > 0 && asn >= next_beacon {
                        fx.push(Effect::Broadcast(Payload::Beacon(Some(ie))));
                        self.current = Some(InFlight {
                            stage: Stage::Recruit { deadline, offers, beacons_left: beacons_left - 1, next_beacon: asn + self.beacon_gap(), ie },
                            ..cur
                        });
                    } else {
                        self.current = Some(InFlight { stage: Stage::Recruit { deadline, offers, beacons_left, next_beacon, ie }, ..cur });
                    }
                }
                stage => self.current = Some(InFlight { stage, ..cur }),
            }
        }

        let ending: Vec<u16> = self
            .ledger
            .iter()
            .filter(|(_, e)| e.phase == Phase::Running && asn >= e.task.window.end)
            .map(|(id, _)| *id)
            .collect();
        for id in ending {
            fx.extend(self.finish(id));
        }
        for n in self.ctx.domain.expire_leases(asn) {
            self.ctx.states.remove(&n);
            fx.push(Effect::log(None, format!("lease_expired;node={}", n.0)));
        }
        fx.extend(self.pump(asn));
        fx
    }

    fn top_up_background(&mut self, asn: Asn) -> Vec<Effect> {
        let members: Vec<NodeId> = self.background.keys().copied().collect();
        let mut fx = Vec::new();
        for m in members {
            if !self.ctx.domain.contains(m) {
                continue;
            }
            let need = self.background_demand(m).saturating_sub(self.background_held(m));
            if need == 0 {
                continue;
            }
            if let Some(cells) = self.add_background(m, need, asn) {
                let specs: Vec<CellSpec> = cells.iter().map(|c| c.spec()).collect();
                fx.push(Effect::Reserve(cells));
                fx.push(Effect::Send {
                    dst: m,
                    payload: Payload::Command(CommandPayload::ScheduleUpdate { action: CellAction::Install, cells: specs }),
                });
            }
        }
        fx
    }

    fn close_recruitment(&mut self, task: Task, granted: Vec<u16>, offers: Vec<JoinOffer>, asn: Asn) -> Vec<Effect> {
        let admitted = self.ctx.admit(&task, &offers, asn);
        let mut fx = Vec::new();
        let mut answered = std::collections::BTreeSet::new();
        for o in &offers {
            if !answered.insert(o.node) {
                continue;
            }
            let accepted = admitted.contains(&o.node);
            fx.push(Effect::Send {
                dst: o.node,
                payload: Payload::Command(CommandPayload::Acknowledgment { task_id: task.id, accepted }),
            });
        }
        if !admitted.is_empty() {
            let list: Vec<String> = admitted.iter().map(|n| n.0.to_string()).collect();
            fx.push(Effect::log(Some(task.id), format!("admitted;nodes={}", list.join("|"))));
        }
        let cur = InFlight { task, stage: Stage::AwaitGrant { deadline: asn }, granted };
        if self.ctx.capability_gap(&cur.task).1.is_some() {
            fx.extend(self.fail(cur, FailureReason::Capability));
        } else {
            fx.extend(self.stage3(cur, asn));
        }
        fx
    }

    /// Window end: free the task's cells and report completion.
    fn finish(&mut self, id: u16) -> Vec<Effect> {
        let mut fx = vec![Effect::Unreserve(id)];
        self.local.remove_task(id);
        self.ctx.pool.release_task(id);
        let keep: Vec<u16> = self.current.as_ref().map(|c| c.granted.clone()).unwrap_or_default();
        let idle: Vec<u16> = self
            .ctx
            .pool
            .dynamic()
            .keys()
            .copied()
            .filter(|s| !self.ctx.pool.in_use().contains_key(s) && !keep.contains(s))
            .collect();
        let e = self.ledger.get_mut(&id).expect("running task");
        e.advance(Phase::Completed);
        let success = e.success();
        let count = e.received.min(u16::MAX as u32) as u16;
        for n in e.assigned_nodes.clone() {
            if let Some(s) = self.ctx.states.get_mut(&n) {
                s.queue_len = s.queue_len.saturating_sub(1);
            }
        }
        fx.push(Effect::Send {
            dst: self.root,
            payload: Payload::Command(CommandPayload::TaskCompletion { task_id: id, success, count }),
        });
        fx.push(Effect::log(Some(id), format!("finish;success={};received={count}", success as u8)));
        fx.extend(self.release_to_root(id, idle));
        fx
    }

    /// Forgets a mobile that left radio range.
    pub fn drop_member(&mut self, node: NodeId) -> Vec<Effect> {
        let mut fx = Vec::new();
        if self.ctx.domain.release_mobile(node) {
            self.ctx.states.remove(&node);
            fx.push(Effect::log(None, format!("member_gone;node={}", node.0)));
        }
        fx
    }
}

