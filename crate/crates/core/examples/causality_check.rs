//! Checks protocol ordering rules on a trace, then on a tampered copy.

use std::collections::BTreeSet;

use monaas::codec::FrameType;
use monaas::model::NodeRole;
use monaas::sim::check::check_causality;
use monaas::sim::run;
use monaas::sim::suite::s3_mobile;
use monaas::strategy::StrategyTag;

fn main() {
    let sc = s3_mobile();
    let out = run(&sc, StrategyTag::Monaas, 1);
    let mobiles: BTreeSet<_> = sc.nodes.iter().filter(|n| n.role == NodeRole::Mobile).map(|n| n.id).collect();
    let tasks: Vec<u16> = sc.tasks.iter().map(|t| t.task.id).collect();

    let v = check_causality(&out.trace, sc.root(), &mobiles, &tasks);
    println!("{} records, {} violations", out.trace.len(), v.len());

    // drop the recruitment beacons: the joins now answer nothing
    let tampered: Vec<_> =
        out.trace.iter().filter(|r| !(r.frame_type == Some(FrameType::Beacon) && r.task_id.is_some())).cloned().collect();
    for v in check_causality(&tampered, sc.root(), &mobiles, &tasks).iter().take(5) {
        println!("  {v:?}");
    }
}
