//! Static TSCH: a schedule fixed before deployment, sized for a nominal
//! rate per node. Nothing is negotiated at run time; new tasks share the
//! executor's queue and nodes absent at design time get no cells.

use std::collections::{BTreeMap, BTreeSet};

use crate::baselines::{channel_for, reserve_pair, LeaderTask};
use crate::codec::{Frame, Payload};
use crate::model::{CapabilitySet, NodeId, NodeState};
use crate::net::{Flow, LocalTx, Net, Packet};
use crate::roles::generation_stop;
use crate::scheduler::select_best;
use crate::sim::scenario::{MobilityEvent, Scenario, TaskInjection};
use crate::strategy::{Strategy, StrategyTag};
use crate::tsch::{Cell, CellKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("leader {leader:?} needs {needed} cells but owns {available} slots")]
pub struct InfeasibleTraffic {
    pub leader: NodeId,
    pub needed: usize,
    pub available: usize,
}

/// Tx cells per node, `ceil(rate * t_sf)` each, from the parent's slot set.
pub fn static_schedule(
    children: &BTreeMap<NodeId, Vec<NodeId>>,
    partition: &BTreeMap<NodeId, BTreeSet<u16>>,
    rate: f64,
    t_sf: f64,
    channels: u8,
) -> Result<Vec<Cell>, InfeasibleTraffic> {
    let per_node = (rate * t_sf - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::new();
    for (leader, kids) in children {
        let slots = partition.get(leader).cloned().unwrap_or_default();
        let needed = per_node * kids.len();
        if needed > slots.len() {
            return Err(InfeasibleTraffic { leader: *leader, needed, available: slots.len() });
        }
        let mut it = slots.into_iter();
        for kid in kids {
            for _ in 0..per_node {
                let slot = it.next().expect("counted");
                out.push(Cell {
                    slot_offset: slot,
                    channel_offset: channel_for(slot, channels),
                    kind: CellKind::TxUnicast,
                    owner: *kid,
                    peer: *leader,
                    task: None,
                    installed_at: 0,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Default)]
pub struct StaticTsch {
    /// Nodes known at design time, per leader.
    children: BTreeMap<NodeId, Vec<NodeId>>,
    states: BTreeMap<NodeId, (CapabilitySet, NodeState)>,
    tasks: BTreeMap<u16, LeaderTask>,
    slot_ms: u32,
    cycle_len: u64,
}

impl Strategy for StaticTsch {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Static
    }

    fn init(&mut self, net: &mut Net, sc: &Scenario) {
        self.slot_ms = sc.slotframe.slot_duration_ms;
        self.cycle_len = sc.slotframe.length as u64;
        for l in sc.leaders() {
            let kids = sc.attached(l);
            for k in &kids {
                let s = sc.node(*k).expect("declared");
                self.states.insert(*k, (s.caps, NodeState { battery: s.battery, queue_len: 0, zone: s.zone, capabilities: s.caps }));
            }
            self.children.insert(l, kids);
        }
        match static_schedule(&self.children, &sc.partition(), sc.params.nominal_rate, sc.t_sf, net.frame.num_channels) {
            Ok(cells) => {
                for c in cells {
                    reserve_pair(net, c);
                    net.install_tx(c.owner, c.slot_offset, LocalTx { channel: c.channel_offset, peer: c.peer, task: None });
                }
            }
            Err(e) => net.evt(sc.root(), None, format!("infeasible;leader={};needed={};available={}", e.leader.0, e.needed, e.available)),
        }
    }

    fn on_task(&mut self, net: &mut Net, injection: &TaskInjection) {
        let task = &injection.task;
        let leader = injection.leader;
        let cands: Vec<(NodeId, CapabilitySet, NodeState)> = self
            .children
            .get(&leader)
            .into_iter()
            .flatten()
            .filter(|n| net.node(**n).parent == Some(leader))
            .filter_map(|n| self.states.get(n).map(|(c, s)| (*n, *c, *s)))
            .filter(|(_, c, _)| c.covers(task.c_req))
            .collect();
        let exec = select_best(&cands, task.c_req, 1).into_iter().next();
        self.tasks.insert(
            task.id,
            LeaderTask { task: task.clone(), leader, executor: exec, on_time: 0, reported: 0, done: false },
        );
        let Some(exec) = exec else {
            net.evt(leader, Some(task.id), "unassigned;why=capability");
            return;
        };
        if let Some((_, s)) = self.states.get_mut(&exec) {
            s.queue_len += 1;
        }
        net.evt(leader, Some(task.id), format!("assign;exec={}", exec.0));
        let stop = generation_stop(task, self.cycle_len);
        if let Some(f) = Flow::new(task.id, leader, task.rate, self.slot_ms, net.asn, stop) {
            net.start_flow(exec, f);
        }
    }

    fn on_topology_change(&mut self, _net: &mut Net, _event: &MobilityEvent) {}

    fn on_tick(&mut self, net: &mut Net, node: NodeId) {
        let asn = net.asn;
        let ending: Vec<u16> =
            self.tasks.iter().filter(|(_, t)| t.leader == node && !t.done && asn >= t.task.window.end).map(|(id, _)| *id).collect();
        for id in ending {
            let t = self.tasks.get_mut(&id).expect("present");
            t.done = true;
            if let Some(e) = t.executor {
                t.reported = net.node_mut(e).flows.get(&id).map_or(t.reported, |f| f.generated);
                net.stop_flow(e, id);
                if let Some((_, s)) = self.states.get_mut(&e) {
                    s.queue_len = s.queue_len.saturating_sub(1);
                }
            }
            let ok = self.tasks[&id].success();
            net.evt(node, Some(id), format!("complete;success={}", u8::from(ok)));
        }
        for t in self.tasks.values_mut().filter(|t| !t.done) {
            if let Some(f) = t.executor.and_then(|e| net.node(e).flows.get(&t.task.id)) {
                t.reported = f.generated;
            }
        }
    }

    fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>) {
        if let (Payload::Data(_), Some(p)) = (&frame.payload, packet) {
            if let Some(t) = self.tasks.get_mut(&p.task).filter(|t| t.leader == node) {
                let lat = (net.asn - p.gen_asn + 1) * self.slot_ms as u64;
                if net.asn < t.task.window.end && lat <= t.task.qos.lat_max_ms as u64 {
                    t.on_time += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_every_node_for_the_nominal_rate() {
        let children = BTreeMap::from([(NodeId(1), vec![NodeId(3), NodeId(4)])]);
        let partition = BTreeMap::from([(NodeId(1), (10..20).collect::<BTreeSet<u16>>())]);
        let cells = static_schedule(&children, &partition, 1.0, 2.02, 16).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells.iter().filter(|c| c.owner == NodeId(3)).count(), 3);
        let slots: BTreeSet<u16> = cells.iter().map(|c| c.slot_offset).collect();
        assert_eq!(slots.len(), 6);
    }

    #[test]
    fn refuses_more_traffic_than_slots() {
        let children = BTreeMap::from([(NodeId(1), vec![NodeId(3), NodeId(4)])]);
        let partition = BTreeMap::from([(NodeId(1), (10..14).collect::<BTreeSet<u16>>())]);
        let e = static_schedule(&children, &partition, 1.0, 2.02, 16).unwrap_err();
        assert_eq!(e, InfeasibleTraffic { leader: NodeId(1), needed: 6, available: 4 });
    }
}
