use std::collections::BTreeMap;

use crate::codec::{CellAction, CommandPayload, Frame, Payload};
use crate::model::{Asn, CapabilitySet, NodeId, NodeRole};
use crate::net::{Flow, LocalTx};
use crate::roles::{generation_stop, Effect, Observation};
use crate::sim::scenario::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeState {
    /// Member with nothing to do, or an attached mobile.
    Idle,
    Executing,
    Unassociated,
    Joining { leader: NodeId, task: u16, deadline: Asn },
    Associated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Running {
    stop: Asn,
    /// Window end; task cells stay until then so the queue can drain.
    end: Asn,
    reported: u32,
    stopped: bool,
}

/// Member or mobile node: joins when recruited and executes assigned tasks.
#[derive(Clone, Debug)]
pub struct NodeMachine {
    pub node: NodeId,
    pub role: NodeRole,
    pub caps: CapabilitySet,
    pub battery: f64,
    pub parent: Option<NodeId>,
    pub params: Params,
    pub slot_ms: u32,
    pub cycle_len: u64,
    pub state: NodeState,
    /// Attached from the start; never returns to scanning after a task.
    attached_at_start: bool,
    running: BTreeMap<u16, Running>,
}

impl NodeMachine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node: NodeId,
        role: NodeRole,
        caps: CapabilitySet,
        battery: f64,
        parent: Option<NodeId>,
        params: Params,
        slot_ms: u32,
        cycle_len: u64,
    ) -> Self {
        let state = if parent.is_some() { NodeState::Idle } else { NodeState::Unassociated };
        Self {
            node,
            role,
            caps,
            battery,
            parent,
            params,
            slot_ms,
            cycle_len,
            state,
            attached_at_start: parent.is_some(),
            running: BTreeMap::new(),
        }
    }

    pub fn running_tasks(&self) -> Vec<u16> {
        self.running.keys().copied().collect()
    }

    /// Back to scanning after losing the parent.
    pub fn detach(&mut self) -> Vec<Effect> {
        let mut fx = Vec::new();
        for t in std::mem::take(&mut self.running).into_keys() {
            fx.push(Effect::StopFlow(t));
            fx.push(Effect::RemoveTaskTx(t));
        }
        self.parent = None;
        self.attached_at_start = false;
        self.state = NodeState::Unassociated;
        fx.push(Effect::SetParent(None));
        fx
    }

    pub fn handle_frame(&mut self, frame: &Frame, asn: Asn) -> Vec<Effect> {
        let src = frame.header.src;
        match &frame.payload {
            Payload::Beacon(Some(ie)) => {
                if self.state != NodeState::Unassociated {
                    return Vec::new();
                }
                if self.battery < self.params.min_battery || !self.caps.covers(ie.required_caps) {
                    return vec![Effect::log(Some(ie.task_id), format!("decline;leader={}", src.0))];
                }
                self.state = NodeState::Joining { leader: src, task: ie.task_id, deadline: asn + self.params.join_timeout };
                vec![Effect::Send {
                    dst: src,
                    payload: Payload::Command(CommandPayload::JoinRequest {
                        task_id: ie.task_id,
                        caps: self.caps,
                        battery_pct: (self.battery * 100.0).round().clamp(0.0, 100.0) as u8,
                        credentials: ie.credentials,
                    }),
                }]
            }
            Payload::Command(CommandPayload::Acknowledgment { task_id, accepted }) => match self.state {
                NodeState::Joining { leader, task, .. } if leader == src && task == *task_id => {
                    if *accepted {
                        self.parent = Some(leader);
                        self.state = NodeState::Associated;
                        vec![Effect::SetParent(Some(leader)), Effect::log(Some(*task_id), format!("joined;leader={}", leader.0))]
                    } else {
                        self.state = NodeState::Unassociated;
                        vec![Effect::log(Some(*task_id), "rejected")]
                    }
                }
                _ => vec![Effect::log(Some(*task_id), "protocol_violation;why=unexpected_ack")],
            },
            Payload::Command(CommandPayload::TaskRequest { task, cells }) => {
                if self.parent != Some(src) {
                    return vec![Effect::log(Some(task.id), "protocol_violation;why=not_parent")];
                }
                let mut fx: Vec<Effect> = cells
                    .iter()
                    .map(|(slot, channel)| Effect::InstallTx {
                        slot: *slot,
                        cell: LocalTx { channel: *channel, peer: src, task: Some(task.id) },
                    })
                    .collect();
                if !self.running.contains_key(&task.id) && asn < task.window.end {
                    let stop = generation_stop(task, self.cycle_len);
                    if let Some(f) = Flow::new(task.id, src, task.rate, self.slot_ms, asn, stop) {
                        fx.push(Effect::StartFlow(f));
                    }
                    self.running.insert(task.id, Running { stop, end: task.window.end, reported: 0, stopped: false });
                    self.state = NodeState::Executing;
                }
                fx
            }
            Payload::Command(CommandPayload::ScheduleUpdate { action, cells }) if self.parent == Some(src) => {
                match action {
                    CellAction::Install | CellAction::AddConfirm => cells
                        .iter()
                        .map(|c| Effect::InstallTx { slot: c.slot, cell: LocalTx { channel: c.channel, peer: c.peer, task: None } })
                        .collect(),
                    _ => Vec::new(),
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn tick(&mut self, asn: Asn, obs: &Observation) -> Vec<Effect> {
        let mut fx = Vec::new();
        if let NodeState::Joining { task, deadline, .. } = self.state {
            if asn >= deadline {
                self.state = NodeState::Unassociated;
                fx.push(Effect::log(Some(task), "join_timeout"));
            }
        }
        if let Some(parent) = self.parent {
            let cycle = asn / obs.cycle_len.max(1);
            let quiet = obs.last_uplink.map_or(true, |a| a + obs.cycle_len <= asn);
            if obs.cycle_start && cycle > 0 && cycle % self.params.ka_period_cycles.max(1) == 0 && quiet {
                fx.push(Effect::Send { dst: parent, payload: Payload::Command(CommandPayload::MacTest { nonce: cycle as u16 }) });
            }
        }

        let every = self.params.progress_every.max(1);
        let mut done = Vec::new();
        for (id, r) in self.running.iter_mut() {
            let generated = obs.generated.get(id).copied().unwrap_or(r.reported);
            let finished = asn >= r.stop;
            if generated >= r.reported + every || (finished && generated > r.reported) {
                r.reported = generated;
                if let Some(p) = self.parent {
                    fx.push(Effect::Send {
                        dst: p,
                        payload: Payload::Command(CommandPayload::TaskProgress { task_id: *id, packets: generated.min(u16::MAX as u32) as u16 }),
                    });
                }
            }
            if finished && !r.stopped {
                r.stopped = true;
                fx.push(Effect::StopFlow(*id));
            }
            if asn >= r.end {
                done.push(*id);
            }
        }
        for id in done {
            self.running.remove(&id);
            fx.push(Effect::RemoveTaskTx(id));
        }
        if self.running.is_empty() && self.state == NodeState::Executing {
            if self.role == NodeRole::Mobile && !self.attached_at_start {
                self.parent = None;
                self.state = NodeState::Unassociated;
                fx.push(Effect::SetParent(None));
            } else {
                self.state = NodeState::Idle;
            }
        }
        fx
    }
}
