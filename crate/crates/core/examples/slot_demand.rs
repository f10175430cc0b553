//! Slots per slotframe for a range of rates, priorities and link qualities.

use monaas::model::{CapabilitySet, Priority, QoS, Task, TimeWindow};
use monaas::scheduler::estimate_slots;

fn main() {
    let t_sf = 2.02;
    println!("{:>5} {:>9} {:>6} {:>8} {:>6} {:>4}", "rate", "priority", "l_est", "pkt/sf", "retx", "req");
    for priority in [Priority::Low, Priority::High, Priority::Critical] {
        for (rate, l_est) in [(0.5, 1.0), (2.0, 0.8), (2.0, 0.5)] {
            let task = Task {
                id: 1,
                priority,
                qos: QoS::new(1000, 0.9).unwrap(),
                c_req: CapabilitySet::EMPTY,
                zone: 1,
                window: TimeWindow::new(0, 1000).unwrap(),
                rate,
                min_nodes: 1,
            };
            let d = estimate_slots(&task, t_sf, l_est);
            println!("{rate:>5} {:>9} {l_est:>6} {:>8.2} {:>6.3} {:>4}", format!("{priority:?}"), d.pkt_sf, d.retx, d.req_slots);
        }
    }
}
