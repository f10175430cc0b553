//! Per-node protocol state machines. Each machine consumes frames and ticks
//! and returns [`Effect`]s; it never touches the network directly, so the
//! same inputs always produce the same outputs.

mod leader;
mod node;
mod root;

pub use leader::{LeaderMachine, LeaderState};
pub use node::{NodeMachine, NodeState as MachineNodeState};
pub use root::{RootMachine, RootState};

use std::collections::BTreeMap;

use crate::codec::Payload;
use crate::model::{Asn, NodeId, Task};
use crate::net::{Flow, LocalTx};
use crate::tsch::Cell;

/// Most `(slot, channel)` pairs one assignment frame can carry.
pub const MAX_CELLS_PER_FRAME: usize = 24;

/// Something a machine asks the network to do.
#[derive(Clone, Debug, PartialEq)]
pub enum Effect {
    /// Unicast control frame over the shared slots.
    Send { dst: NodeId, payload: Payload },
    /// Broadcast control frame over the shared slots.
    Broadcast(Payload),
    /// Frame for the node's own EB cell.
    Beacon(Payload),
    /// Adds cells to the global schedule.
    Reserve(Vec<Cell>),
    /// Removes every global cell tagged with the task.
    Unreserve(u16),
    InstallTx { slot: u16, cell: LocalTx },
    RemoveTaskTx(u16),
    StartFlow(Flow),
    StopFlow(u16),
    /// New uplink; `None` means unassociated and scanning.
    SetParent(Option<NodeId>),
    Log { task: Option<u16>, note: String },
}

impl Effect {
    pub fn log(task: Option<u16>, note: impl Into<String>) -> Self {
        Self::Log { task, note: note.into() }
    }
}

/// Local observations a machine may read on a tick.
#[derive(Clone, Debug, Default)]
pub struct Observation {
    /// Packets generated so far per running task flow.
    pub generated: BTreeMap<u16, u32>,
    /// Last ASN a unicast frame to the parent went on air.
    pub last_uplink: Option<Asn>,
    /// Uplink estimate reported by each member (leaders only).
    pub member_l_est: BTreeMap<NodeId, f64>,
    /// Background cells each member currently holds (leaders only).
    pub background_cells: BTreeMap<NodeId, usize>,
    pub cycle_start: bool,
    /// Slots per slotframe cycle.
    pub cycle_len: u64,
    pub slot_ms: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Assigned,
    Provisioning,
    Recruiting,
    Running,
    Completed,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Completed | Self::Failed)
    }

    /// Legal forward moves; terminal phases never change.
    pub fn can_move_to(self, next: Phase) -> bool {
        use Phase::*;
        match (self, next) {
            (Completed | Failed, _) => false,
            (_, Failed) => true,
            (Assigned | Provisioning | Recruiting, Provisioning | Recruiting | Running) => true,
            (Running, Completed) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskLedgerEntry {
    pub task: Task,
    pub phase: Phase,
    pub assigned_nodes: Vec<NodeId>,
    pub cells: Vec<Cell>,
    /// Latest generated-packet count reported per executor.
    pub progress: BTreeMap<NodeId, u32>,
    pub progress_reports: u32,
    /// Task data received by the leader inside the window and latency bound.
    pub received: u32,
    pub deadline_asn: Asn,
}

impl TaskLedgerEntry {
    pub fn new(task: Task) -> Self {
        let deadline_asn = task.window.end;
        Self {
            task,
            phase: Phase::Assigned,
            assigned_nodes: Vec::new(),
            cells: Vec::new(),
            progress: BTreeMap::new(),
            progress_reports: 0,
            received: 0,
            deadline_asn,
        }
    }

    /// Moves to `next` if legal; returns whether it moved.
    pub fn advance(&mut self, next: Phase) -> bool {
        if self.phase == next {
            return true;
        }
        let ok = self.phase.can_move_to(next);
        if ok {
            self.phase = next;
        }
        ok
    }

    /// Generated packets per the latest reports.
    pub fn reported(&self) -> u32 {
        self.progress.values().sum()
    }

    pub fn success(&self) -> bool {
        let g = self.reported();
        g > 0 && self.received as f64 >= self.task.qos.pdr_min * g as f64 - 1e-9
    }
}

/// Splits an executor's cells into assignment frames.
pub fn chunk_cells(cells: &[Cell]) -> Vec<Vec<(u16, u8)>> {
    let pairs: Vec<(u16, u8)> = cells.iter().map(|c| (c.slot_offset, c.channel_offset)).collect();
    if pairs.is_empty() {
        return vec![Vec::new()];
    }
    pairs.chunks(MAX_CELLS_PER_FRAME).map(<[_]>::to_vec).collect()
}

/// Last ASN at which an executor generates task data: one cycle before the
/// window closes so the tail can drain.
pub fn generation_stop(task: &Task, cycle_len: u64) -> Asn {
    task.window.end.saturating_sub(cycle_len).max(task.window.start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_advance_monotonically() {
        use Phase::*;
        assert!(Assigned.can_move_to(Provisioning));
        assert!(Provisioning.can_move_to(Recruiting));
        assert!(Recruiting.can_move_to(Running));
        assert!(Running.can_move_to(Completed));
        assert!(!Running.can_move_to(Recruiting));
        assert!(!Completed.can_move_to(Failed));
        assert!(!Failed.can_move_to(Running));
    }

    #[test]
    fn cells_split_at_frame_limit() {
        let c = Cell {
            slot_offset: 0,
            channel_offset: 1,
            kind: crate::tsch::CellKind::TxUnicast,
            owner: NodeId(3),
            peer: NodeId(1),
            task: Some(1),
            installed_at: 0,
        };
        let cells: Vec<Cell> = (0..30).map(|i| Cell { slot_offset: i, ..c }).collect();
        let parts = chunk_cells(&cells);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 24);
        assert_eq!(parts[1].len(), 6);
    }
}
