use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{CommandPayload, Frame, Payload};
use crate::model::{NodeId, Task};
use crate::roles::{Effect, Phase, TaskLedgerEntry};
use crate::scheduler::RootPool;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootState {
    Idle,
    AwaitingCompletion,
}

/// Task dispatcher and owner of the global slot pool.
#[derive(Clone, Debug)]
pub struct RootMachine {
    pub node: NodeId,
    pub pool: RootPool,
    /// Offsets promised in grants that are still on the air.
    reserved: BTreeSet<u16>,
    pub tasks: BTreeMap<u16, (NodeId, TaskLedgerEntry)>,
}

impl RootMachine {
    pub fn new(node: NodeId, pool: RootPool) -> Self {
        Self { node, pool, reserved: BTreeSet::new(), tasks: BTreeMap::new() }
    }

    pub fn state(&self) -> RootState {
        if self.tasks.values().any(|(_, e)| !e.phase.is_terminal()) {
            RootState::AwaitingCompletion
        } else {
            RootState::Idle
        }
    }

    /// Dispatches an injected task to its leader.
    pub fn assign(&mut self, task: &Task, leader: NodeId) -> Vec<Effect> {
        self.tasks.insert(task.id, (leader, TaskLedgerEntry::new(task.clone())));
        vec![Effect::Send { dst: leader, payload: Payload::Command(CommandPayload::TaskRequest { task: task.clone(), cells: Vec::new() }) }]
    }

    pub fn handle_frame(&mut self, frame: &Frame) -> Vec<Effect> {
        let src = frame.header.src;
        let Payload::Command(cmd) = &frame.payload else {
            return Vec::new();
        };
        match cmd {
            CommandPayload::ResourceRequest { leader, task_id, count } => {
                let avail: Vec<u16> =
                    self.pool.free().iter().copied().filter(|s| !self.reserved.contains(s)).collect();
                let n = *count as usize;
                let slots: Vec<u16> = if n > 0 && avail.len() >= n { avail[..n].to_vec() } else { Vec::new() };
                self.reserved.extend(&slots);
                let note = if slots.is_empty() { format!("deny;leader={}", leader.0) } else { format!("grant;leader={};n={n}", leader.0) };
                vec![
                    Effect::log(Some(*task_id), note),
                    Effect::Send {
                        dst: src,
                        payload: Payload::Command(CommandPayload::ResourceResponse { leader: *leader, task_id: *task_id, slots }),
                    },
                ]
            }
            CommandPayload::ResourceResponse { slots, task_id, .. } => {
                self.pool.give_back(slots.iter().copied());
                vec![Effect::log(Some(*task_id), format!("returned;n={}", slots.len()))]
            }
            CommandPayload::TaskCompletion { task_id, success, .. } => match self.tasks.get_mut(task_id) {
                Some((_, e)) => {
                    e.advance(Phase::Running);
                    e.advance(if *success { Phase::Completed } else { Phase::Failed });
                    Vec::new()
                }
                None => vec![Effect::log(Some(*task_id), "protocol_violation;why=unknown_task")],
            },
            _ => Vec::new(),
        }
    }

    /// Final fate of a frame this node sent.
    pub fn on_sent(&mut self, frame: &Frame, delivered: bool) -> Vec<Effect> {
        let Payload::Command(cmd) = &frame.payload else {
            return Vec::new();
        };
        match cmd {
            CommandPayload::ResourceResponse { slots, .. } if frame.header.src == self.node => {
                for s in slots {
                    self.reserved.remove(s);
                }
                if delivered && !self.pool.take_exact(slots) {
                    return vec![Effect::log(None, "protocol_violation;why=grant_not_free")];
                }
                Vec::new()
            }
            CommandPayload::TaskRequest { .. } if !delivered => {
                vec![Effect::Send { dst: frame.header.dst, payload: frame.payload.clone() }]
            }
            _ => Vec::new(),
        }
    }
}
