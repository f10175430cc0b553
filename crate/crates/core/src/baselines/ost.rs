//! OST-like scheduling: each node sizes its uplink from the traffic it
//! observed over a sliding window of cycles and the link estimate, then
//! negotiates the difference with its parent. Only routers beacon.

use std::collections::{BTreeMap, VecDeque};

use crate::baselines::sixtisch::{uplink_cells, SixOp, SixP};
use crate::baselines::{Core, Dispatch, EbPolicy, Liveness};
use crate::codec::Frame;
use crate::model::NodeId;
use crate::net::{Net, Packet};
use crate::sim::scenario::{MobilityAction, MobilityEvent, Scenario, TaskInjection};
use crate::strategy::{Strategy, StrategyTag};

/// Cells needed for the packets per cycle seen in `window` over a link
/// with delivery estimate `l_est`.
pub fn ost_adapt(window: &[u32], l_est: f64) -> usize {
    if window.is_empty() {
        return 0;
    }
    let per_cycle = window.iter().map(|&n| n as f64).sum::<f64>() / window.len() as f64;
    (per_cycle / l_est.clamp(0.05, 1.0) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Default)]
pub struct OstLike {
    pub core: Core,
    pub sixp: SixP,
    window: BTreeMap<NodeId, VecDeque<u32>>,
    last_gen: BTreeMap<NodeId, u64>,
}

impl OstLike {
    /// Current target for `node`, from its window.
    pub fn target(&self, net: &Net, node: NodeId) -> usize {
        let Some(parent) = self.core.parent.get(&node) else {
            return 0;
        };
        let w: Vec<u32> = self.window.get(&node).map(|w| w.iter().copied().collect()).unwrap_or_default();
        ost_adapt(&w, net.node(node).l_est(*parent))
    }

    fn adapt(&mut self, net: &mut Net, node: NodeId) {
        let Some(parent) = self.core.parent.get(&node).copied() else {
            return;
        };
        if self.core.leaders.contains(&node) {
            return;
        }
        let total = net.node(node).generated_total;
        let seen = total - self.last_gen.insert(node, total).unwrap_or(total);
        let w = self.window.entry(node).or_default();
        w.push_back(seen as u32);
        while w.len() as u64 > self.core.params.ost_window_cycles.max(1) {
            w.pop_front();
        }
        if self.sixp.busy(node) {
            return;
        }
        let target = self.target(net, node);
        let cells = uplink_cells(net, node, parent);
        if target > cells {
            self.sixp.request(net, node, parent, SixOp::Add(target - cells));
        } else if target < cells {
            self.sixp.request(net, node, parent, SixOp::Delete(cells - target));
        }
    }
}

impl Strategy for OstLike {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Ost
    }

    fn init(&mut self, _net: &mut Net, sc: &Scenario) {
        self.core = Core::new(sc, EbPolicy::Routers, Liveness::KeepAlive, Dispatch::Leader, true);
        self.sixp = SixP::new(sc);
    }

    fn on_task(&mut self, net: &mut Net, injection: &TaskInjection) {
        self.core.on_task(net, &injection.task, injection.leader);
    }

    fn on_topology_change(&mut self, net: &mut Net, event: &MobilityEvent) {
        if event.action == MobilityAction::LeaveRange {
            self.sixp.forget(net, event.node);
            self.core.detach(net, event.node);
            self.window.remove(&event.node);
            self.last_gen.remove(&event.node);
        }
    }

    fn on_tick(&mut self, net: &mut Net, node: NodeId) {
        self.core.on_tick(net, node);
        let parent = self.core.parent.get(&node).copied();
        self.sixp.tick(net, node, parent);
        if net.cycle_start() {
            self.adapt(net, node);
        }
    }

    fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>) {
        if !self.sixp.on_frame(net, node, frame) {
            self.core.on_frame(net, node, frame, packet);
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
    fn target_follows_rate_and_link() {
        assert_eq!(ost_adapt(&[], 1.0), 0);
        assert_eq!(ost_adapt(&[2, 2, 2], 1.0), 2);
        assert_eq!(ost_adapt(&[2, 2, 2], 0.5), 4);
        assert_eq!(ost_adapt(&[2, 3, 2, 3], 0.95), 3);
    }

    #[test]
    fn burst_reaches_full_target_only_after_a_window() {
        let w = 5;
        let mut win: VecDeque<u32> = VecDeque::from(vec![2; w]);
        let steady = ost_adapt(&[10; 5], 1.0);
        for k in 1..=w {
            win.push_back(10);
            win.pop_front();
            let t = ost_adapt(win.make_contiguous(), 1.0);
            if k < w {
                assert!(t < steady, "cycle {k}: {t}");
            } else {
                assert_eq!(t, steady);
            }
        }
    }
}
