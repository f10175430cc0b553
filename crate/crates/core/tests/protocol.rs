//! Message order for a task that needs a mobile node to join.

use monaas::codec::FrameType;
use monaas::model::NodeId;
use monaas::sim::run;
use monaas::sim::suite::{s3_mobile, L1, MOBILE_ENV, ROOT};
use monaas::strategy::StrategyTag;
use monaas::trace::{Direction, TraceRecord};

struct Step {
    name: &'static str,
    node: NodeId,
    frame_type: FrameType,
    subtype: u8,
    dst: Option<NodeId>,
}

fn step(name: &'static str, node: NodeId, frame_type: FrameType, subtype: u8, dst: Option<NodeId>) -> Step {
    Step { name, node, frame_type, subtype, dst }
}

fn dst(r: &TraceRecord) -> Option<NodeId> {
    r.note.split(';').find_map(|kv| kv.strip_prefix("dst=")).and_then(|v| v.parse().ok()).map(NodeId)
}

fn first(trace: &[TraceRecord], s: &Step) -> Option<u64> {
    trace
        .iter()
        .find(|r| {
            r.direction == Direction::Out
                && r.node == s.node
                && r.task_id == Some(1)
                && r.frame_type == Some(s.frame_type)
                && r.subtype == Some(s.subtype)
                && (s.dst.is_none() || dst(r) == s.dst)
        })
        .map(|r| r.asn)
}

#[test]
fn mobile_recruitment_follows_the_handshake() {
    let out = run(&s3_mobile(), StrategyTag::Monaas, 1);
    let steps = [
        step("task request to leader", ROOT, FrameType::Command, 0x10, Some(L1)),
        step("recruitment beacon", L1, FrameType::Beacon, 0x01, None),
        step("join request", MOBILE_ENV, FrameType::Command, 0x02, Some(L1)),
        step("join response", L1, FrameType::Command, 0x05, Some(MOBILE_ENV)),
        step("task request to mobile", L1, FrameType::Command, 0x10, Some(MOBILE_ENV)),
        step("sensor data", MOBILE_ENV, FrameType::Data, 0x01, Some(L1)),
        step("task progress", MOBILE_ENV, FrameType::Command, 0x12, Some(L1)),
        step("task completion", L1, FrameType::Command, 0x13, Some(ROOT)),
    ];
    let mut prev = 0;
    for s in &steps {
        let asn = first(&out.trace, s).unwrap_or_else(|| panic!("{} missing", s.name));
        assert!(asn >= prev, "{} at {asn} before previous step at {prev}", s.name);
        prev = asn;
    }
}
