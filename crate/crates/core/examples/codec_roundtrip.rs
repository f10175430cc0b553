//! Encodes a few frames, prints their bytes and decodes them back.

use monaas::codec::{decode, encode, CommandPayload, DataKind, Frame, Payload, RecruitmentIe, TaggedBody};
use monaas::model::{Capability, CapabilitySet, NodeId, Priority};

fn main() {
    let gas = CapabilitySet::EMPTY.with(Capability::GasSensor);
    let frames = [
        Frame::new(NodeId(1), NodeId::BROADCAST, 1018, 0, Payload::Beacon(Some(RecruitmentIe {
            task_id: 1,
            required_caps: gas,
            priority: Priority::High,
            qos_pct: 90,
            zone: 1,
            time_window: 1500,
            credentials: 0x5eed,
            resource_estimate: 9,
        }))),
        Frame::new(NodeId(8), NodeId(1), 1026, 1, Payload::Command(CommandPayload::JoinRequest {
            task_id: 1,
            caps: gas,
            battery_pct: 80,
            credentials: 0x5eed,
        })),
        Frame::new(NodeId(8), NodeId(1), 1055, 2, Payload::Data(TaggedBody { kind: DataKind::Sensor, task_id: 1, body: vec![0x01, 0x2c] })),
        Frame::new(NodeId(1), NodeId(0), 2028, 3, Payload::Command(CommandPayload::TaskCompletion { task_id: 1, success: true, count: 19 })),
    ];
    for f in &frames {
        let bytes = encode(f).expect("frame fits");
        let back = decode(&bytes).expect("valid bytes");
        assert_eq!(&back, f);
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        println!("{:?}/0x{:02x} {:>2} bytes  {hex}", f.payload.frame_type(), f.payload.subtype(), bytes.len());
    }
}
