//! Task-driven slot demand, hierarchical resource pools, candidate ranking
//! and the three-stage leader task procedure.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::model::{capability_covers, missing_capabilities, Asn, CapabilitySet, LeaderDomain, NodeId, NodeState, Task};
use crate::tsch::{Cell, Schedule, MIN_LINK_ESTIMATE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotDemand {
    /// Packets generated per slotframe.
    pub pkt_sf: f64,
    pub retx: f64,
    pub f_p: u8,
    pub req_slots: u32,
}

/// Slots per slotframe one executor needs for `task`.
pub fn estimate_slots(task: &Task, t_sf: f64, l_est: f64) -> SlotDemand {
    let l = if l_est.is_nan() { MIN_LINK_ESTIMATE } else { l_est.clamp(MIN_LINK_ESTIMATE, 1.0) };
    let pkt_sf = task.rate.max(0.0) * t_sf.max(0.0);
    let retx = task.qos.pdr_min / l;
    let f_p = task.priority.level();
    let raw = pkt_sf * retx * f_p as f64;
    // absorb float noise so exact integers do not round up
    let req_slots = if raw <= 0.0 { 0 } else { (raw - 1e-9).ceil().max(1.0) as u32 };
    SlotDemand { pkt_sf, retx, f_p, req_slots }
}

/// A leader's slot budget: Root-preassigned base plus dynamic grants.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResourcePool {
    base: BTreeSet<u16>,
    dynamic: BTreeMap<u16, Asn>,
    in_use: BTreeMap<u16, u16>,
}

impl ResourcePool {
    pub fn new(base: impl IntoIterator<Item = u16>) -> Self {
        Self { base: base.into_iter().collect(), ..Self::default() }
    }

    pub fn base(&self) -> &BTreeSet<u16> {
        &self.base
    }

    pub fn dynamic(&self) -> &BTreeMap<u16, Asn> {
        &self.dynamic
    }

    pub fn in_use(&self) -> &BTreeMap<u16, u16> {
        &self.in_use
    }

    pub fn all(&self) -> BTreeSet<u16> {
        self.base.iter().chain(self.dynamic.keys()).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.dynamic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn free(&self) -> BTreeSet<u16> {
        self.base
            .iter()
            .chain(self.dynamic.keys())
            .copied()
            .filter(|s| !self.in_use.contains_key(s))
            .collect()
    }

    pub fn free_count(&self) -> usize {
        self.len() - self.in_use.len()
    }

    pub fn add_dynamic(&mut self, slots: impl IntoIterator<Item = u16>, asn: Asn) {
        for s in slots {
            if !self.base.contains(&s) {
                self.dynamic.insert(s, asn);
            }
        }
    }

    pub fn mark_used(&mut self, slots: impl IntoIterator<Item = u16>, task: u16) {
        for s in slots {
            debug_assert!(self.base.contains(&s) || self.dynamic.contains_key(&s));
            self.in_use.insert(s, task);
        }
    }

    pub fn slots_of(&self, task: u16) -> Vec<u16> {
        self.in_use.iter().filter(|(_, t)| **t == task).map(|(s, _)| *s).collect()
    }

    /// Frees every slot held by `task`; returns the freed offsets.
    pub fn release_task(&mut self, task: u16) -> Vec<u16> {
        let slots = self.slots_of(task);
        for s in &slots {
            self.in_use.remove(s);
        }
        slots
    }

    /// Removes and returns dynamic grants not currently in use.
    pub fn take_idle_dynamic(&mut self) -> Vec<u16> {
        let idle: Vec<u16> = self.dynamic.keys().copied().filter(|s| !self.in_use.contains_key(s)).collect();
        for s in &idle {
            self.dynamic.remove(s);
        }
        idle
    }

    /// Removes specific dynamic grants (must be idle).
    pub fn take_dynamic(&mut self, slots: &[u16]) -> Vec<u16> {
        slots
            .iter()
            .copied()
            .filter(|s| !self.in_use.contains_key(s) && self.dynamic.remove(s).is_some())
            .collect()
    }

    /// Clears the in-use mark on `slots`.
    pub fn unmark(&mut self, slots: &[u16]) {
        for s in slots {
            self.in_use.remove(s);
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.dynamic.keys().all(|s| !self.base.contains(s))
            && self.in_use.keys().all(|s| self.base.contains(s) || self.dynamic.contains_key(s))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PoolReply {
    Granted(Vec<u16>),
    Denied,
    Timeout,
}

/// The Root's view of the global data-slot space.
#[derive(Clone, Debug, PartialEq)]
pub struct RootPool {
    global: BTreeSet<u16>,
    free: BTreeSet<u16>,
}

impl RootPool {
    /// `global` minus everything handed out as leader bases.
    pub fn new(global: impl IntoIterator<Item = u16>, bases: &[&ResourcePool]) -> Self {
        let global: BTreeSet<u16> = global.into_iter().collect();
        let mut free = global.clone();
        for b in bases {
            for s in b.all() {
                free.remove(&s);
            }
        }
        Self { global, free }
    }

    pub fn global(&self) -> &BTreeSet<u16> {
        &self.global
    }

    pub fn free(&self) -> &BTreeSet<u16> {
        &self.free
    }

    /// Takes the `n` lowest free offsets, or nothing if fewer are free.
    pub fn take(&mut self, n: usize) -> Option<Vec<u16>> {
        if n == 0 || self.free.len() < n {
            return None;
        }
        let picked: Vec<u16> = self.free.iter().take(n).copied().collect();
        for s in &picked {
            self.free.remove(s);
        }
        Some(picked)
    }

    /// Removes exactly `slots` from the free set; all or nothing.
    pub fn take_exact(&mut self, slots: &[u16]) -> bool {
        if !slots.iter().all(|s| self.free.contains(s)) {
            return false;
        }
        for s in slots {
            self.free.remove(s);
        }
        true
    }

    pub fn give_back(&mut self, slots: impl IntoIterator<Item = u16>) {
        for s in slots {
            if self.global.contains(&s) {
                self.free.insert(s);
            }
        }
    }
}

pub fn pool_request(root: &mut RootPool, leader: &mut ResourcePool, additional: usize, asn: Asn) -> PoolReply {
    match root.take(additional) {
        Some(slots) => {
            leader.add_dynamic(slots.iter().copied(), asn);
            PoolReply::Granted(slots)
        }
        None => PoolReply::Denied,
    }
}

/// `|root free| + Σ|R_l| = |R_global|` with every offset owned exactly once.
pub fn conservation_holds<'a>(root: &RootPool, leaders: impl IntoIterator<Item = &'a ResourcePool>) -> bool {
    let mut seen: BTreeSet<u16> = root.free.clone();
    let mut total = seen.len();
    for l in leaders {
        if !l.is_consistent() {
            return false;
        }
        for s in l.all() {
            total += 1;
            if !seen.insert(s) {
                return false;
            }
        }
    }
    total == root.global.len() && seen == root.global
}

pub fn find_capable_nodes(
    domain: &LeaderDomain,
    states: &BTreeMap<NodeId, NodeState>,
    need: CapabilitySet,
) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = domain
        .members()
        .filter(|n| states.get(n).is_some_and(|s| capability_covers(s.capabilities, need)))
        .collect();
    out.sort();
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateScore {
    pub node: NodeId,
    pub coverage: u32,
    pub battery: f64,
    pub load: u32,
}

impl CandidateScore {
    pub fn new(node: NodeId, caps: CapabilitySet, state: &NodeState, need: CapabilitySet) -> Self {
        Self { node, coverage: caps.intersection(need).len(), battery: state.battery, load: state.queue_len }
    }

    /// `Less` means "ranks first".
    pub fn rank(&self, other: &Self) -> Ordering {
        other
            .coverage
            .cmp(&self.coverage)
            .then_with(|| other.battery.total_cmp(&self.battery))
            .then_with(|| self.load.cmp(&other.load))
            .then_with(|| self.node.cmp(&other.node))
    }
}

pub fn select_best(candidates: &[(NodeId, CapabilitySet, NodeState)], need: CapabilitySet, k: usize) -> Vec<NodeId> {
    let mut scored: Vec<CandidateScore> =
        candidates.iter().map(|(n, c, s)| CandidateScore::new(*n, *c, s, need)).collect();
    scored.sort_by(CandidateScore::rank);
    scored.into_iter().take(k).map(|c| c.node).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureReason {
    Slots,
    Capability,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Slots => "slots",
            Self::Capability => "capability",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub task_id: u16,
    pub req_slots: u32,
    pub executors: Vec<NodeId>,
    /// Tx cells per executor, in executor order.
    pub cells: Vec<Vec<Cell>>,
}

impl Assignment {
    pub fn total_cells(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskOutcome {
    Success(Assignment),
    Failure(FailureReason),
}

/// A mobile answering a recruitment beacon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JoinOffer {
    pub node: NodeId,
    pub caps: CapabilitySet,
    pub state: NodeState,
}

/// Side effects the leader put on the air, in order.
#[derive(Clone, Debug, PartialEq)]
pub enum Emission {
    RequestSlots { count: usize },
    RecruitBeacon { missing: CapabilitySet },
    Admit { node: NodeId },
    Assign { node: NodeId, cells: usize },
    ReleaseSlots { count: usize },
}

pub trait RootLink {
    fn request(&mut self, leader: NodeId, task_id: u16, count: usize) -> PoolReply;
    fn release(&mut self, leader: NodeId, slots: Vec<u16>);
}

/// Direct, lossless link used when the Root pool is in reach.
impl RootLink for RootPool {
    fn request(&mut self, _leader: NodeId, _task_id: u16, count: usize) -> PoolReply {
        match self.take(count) {
            Some(s) => PoolReply::Granted(s),
            None => PoolReply::Denied,
        }
    }

    fn release(&mut self, _leader: NodeId, slots: Vec<u16>) {
        self.give_back(slots);
    }
}

pub trait Recruiter {
    /// Broadcasts the beacon and returns offers collected in the window.
    fn recruit(&mut self, task: &Task, missing: CapabilitySet) -> Vec<JoinOffer>;
}

impl<F: FnMut(&Task, CapabilitySet) -> Vec<JoinOffer>> Recruiter for F {
    fn recruit(&mut self, task: &Task, missing: CapabilitySet) -> Vec<JoinOffer> {
        self(task, missing)
    }
}

#[derive(Clone, Debug)]
pub struct LeaderContext {
    pub leader: NodeId,
    pub domain: LeaderDomain,
    pub states: BTreeMap<NodeId, NodeState>,
    pub pool: ResourcePool,
    /// Per-member uplink quality; missing entries count as 1.0.
    pub link_est: BTreeMap<NodeId, f64>,
    pub t_sf: f64,
    pub lease_slots: Asn,
}

impl LeaderContext {
    pub fn new(leader: NodeId, domain: LeaderDomain, pool: ResourcePool, t_sf: f64) -> Self {
        Self { leader, domain, states: BTreeMap::new(), pool, link_est: BTreeMap::new(), t_sf, lease_slots: Asn::MAX }
    }

    /// Worst link estimate over the domain.
    pub fn domain_l_est(&self) -> f64 {
        self.domain
            .members()
            .map(|n| self.link_est.get(&n).copied().unwrap_or(1.0))
            .fold(1.0_f64, f64::min)
    }

    pub fn demand(&self, task: &Task) -> SlotDemand {
        estimate_slots(task, self.t_sf, self.domain_l_est())
    }

    /// Cells needed across all executors.
    pub fn total_demand(&self, task: &Task) -> usize {
        self.demand(task).req_slots as usize * task.min_nodes as usize
    }

    /// Stage 1: additional slots to request, zero if the pool suffices.
    pub fn slot_shortfall(&self, task: &Task) -> usize {
        self.total_demand(task).saturating_sub(self.pool.free_count())
    }

    /// Stage 2: capable members, and the capabilities missing from the domain.
    pub fn capability_gap(&self, task: &Task) -> (Vec<NodeId>, Option<CapabilitySet>) {
        let capable = find_capable_nodes(&self.domain, &self.states, task.c_req);
        if capable.len() >= task.min_nodes as usize {
            return (capable, None);
        }
        let caps: Vec<CapabilitySet> =
            self.domain.members().filter_map(|n| self.states.get(&n)).map(|s| s.capabilities).collect();
        let mut missing = missing_capabilities(&caps, task.c_req);
        if missing.is_empty() {
            // every capability exists but no single node has them all
            missing = task.c_req;
        }
        (capable, Some(missing))
    }

    /// Stage 2 admission: best compatible offers up to the shortfall.
    pub fn admit(&mut self, task: &Task, offers: &[JoinOffer], asn: Asn) -> Vec<NodeId> {
        let have = find_capable_nodes(&self.domain, &self.states, task.c_req).len();
        let short = (task.min_nodes as usize).saturating_sub(have);
        if short == 0 {
            return Vec::new();
        }
        let mut seen = BTreeSet::new();
        let eligible: Vec<(NodeId, CapabilitySet, NodeState)> = offers
            .iter()
            .filter(|o| capability_covers(o.caps, task.c_req) && !self.domain.contains(o.node) && seen.insert(o.node))
            .map(|o| (o.node, o.caps, o.state))
            .collect();
        let picks = select_best(&eligible, task.c_req, short);
        for n in &picks {
            let o = offers.iter().find(|o| o.node == *n).expect("picked from offers");
            self.states.insert(*n, o.state);
            self.domain.grant_mobile(*n, asn.saturating_add(self.lease_slots));
        }
        picks
    }

    /// Stage 3: pick executors and install their cells.
    pub fn allocate(&mut self, task: &Task, schedule: &mut Schedule, asn: Asn) -> Result<Assignment, FailureReason> {
        let capable = find_capable_nodes(&self.domain, &self.states, task.c_req);
        let k = task.min_nodes as usize;
        if capable.len() < k {
            return Err(FailureReason::Capability);
        }
        let cands: Vec<(NodeId, CapabilitySet, NodeState)> =
            capable.iter().map(|n| (*n, self.states[n].capabilities, self.states[n])).collect();
        let executors = select_best(&cands, task.c_req, k);
        let req = self.demand(task).req_slots as usize;
        let free = self.pool.free();
        if free.len() < req * k {
            return Err(FailureReason::Slots);
        }
        let owners: Vec<(NodeId, usize)> = executors.iter().map(|n| (*n, req)).collect();
        let cells = schedule
            .allocate_many(&owners, self.leader, &free, Some(task.id), asn)
            .map_err(|_| FailureReason::Slots)?;
        for c in cells.iter().flatten() {
            self.pool.mark_used([c.slot_offset], task.id);
        }
        Ok(Assignment { task_id: task.id, req_slots: req as u32, executors, cells })
    }

    /// Drops a task's cells and returns idle dynamic grants for the Root.
    pub fn release(&mut self, task_id: u16, schedule: &mut Schedule) -> Vec<u16> {
        schedule.remove_task(task_id);
        self.pool.release_task(task_id);
        self.pool.take_idle_dynamic()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessReport {
    pub outcome: TaskOutcome,
    pub emitted: Vec<Emission>,
    pub recruited: Vec<NodeId>,
}

/// Runs all three stages to completion against synchronous Root and
/// recruitment channels. On failure every grant from this call goes back to
/// the Root; admitted mobiles stay in the domain.
pub fn process_task<R: RootLink, M: Recruiter>(
    task: &Task,
    ctx: &mut LeaderContext,
    schedule: &mut Schedule,
    root: &mut R,
    recruiter: &mut M,
    asn: Asn,
) -> ProcessReport {
    let mut emitted = Vec::new();
    let mut granted = Vec::new();
    let shortfall = ctx.slot_shortfall(task);
    if shortfall > 0 {
        emitted.push(Emission::RequestSlots { count: shortfall });
        match root.request(ctx.leader, task.id, shortfall) {
            PoolReply::Granted(slots) if slots.len() >= shortfall => {
                ctx.pool.add_dynamic(slots.iter().copied(), asn);
                granted = slots;
            }
            PoolReply::Granted(slots) => {
                root.release(ctx.leader, slots);
                return fail(FailureReason::Slots, emitted, Vec::new());
            }
            PoolReply::Denied | PoolReply::Timeout => return fail(FailureReason::Slots, emitted, Vec::new()),
        }
    }
    let mut recruited = Vec::new();
    if let (_, Some(missing)) = ctx.capability_gap(task) {
        emitted.push(Emission::RecruitBeacon { missing });
        let offers = recruiter.recruit(task, missing);
        recruited = ctx.admit(task, &offers, asn);
        emitted.extend(recruited.iter().map(|n| Emission::Admit { node: *n }));
    }
    match ctx.allocate(task, schedule, asn) {
        Ok(a) => {
            emitted.extend(a.executors.iter().zip(&a.cells).map(|(n, c)| Emission::Assign { node: *n, cells: c.len() }));
            ProcessReport { outcome: TaskOutcome::Success(a), emitted, recruited }
        }
        Err(reason) => {
            let back = ctx.pool.take_dynamic(&granted);
            if !back.is_empty() {
                emitted.push(Emission::ReleaseSlots { count: back.len() });
                root.release(ctx.leader, back);
            }
            fail(reason, emitted, recruited)
        }
    }
}

fn fail(reason: FailureReason, emitted: Vec<Emission>, recruited: Vec<NodeId>) -> ProcessReport {
    ProcessReport { outcome: TaskOutcome::Failure(reason), emitted, recruited }
}
