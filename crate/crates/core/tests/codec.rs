//! Wire format: subtype table, golden bytes and randomized roundtrips.

use monaas::codec::{
    decode, encode, CellAction, CommandPayload, DataKind, EventKind, Frame, FrameType, Payload, RecruitmentIe, TaggedBody,
    MAX_BODY_LEN,
};
use monaas::model::{CapabilitySet, NodeId, Priority, QoS, Task, TimeWindow};
use monaas::tsch::{CellKind, CellSpec};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

const CASES: u32 = 10_000;

fn frame(payload: Payload) -> Frame {
    Frame::new(NodeId(1), NodeId(2), 7, 3, payload)
}

fn task() -> Task {
    Task {
        id: 5,
        priority: Priority::Critical,
        qos: QoS::new(200, 0.9).unwrap(),
        c_req: CapabilitySet::from_bits(0b0000_0110),
        zone: 1,
        window: TimeWindow::new(0, 15_000).unwrap(),
        rate: 2.0,
        min_nodes: 1,
    }
}

fn tagged<K>(kind: K) -> TaggedBody<K> {
    TaggedBody { kind, task_id: 7, body: vec![0xAB, 0xCD] }
}

/// One payload per subtype with its expected (type, subtype) bytes.
fn subtype_table() -> Vec<(Payload, u8, u8)> {
    use CommandPayload::*;
    let cmd = |c| Payload::Command(c);
    vec![
        (Payload::Beacon(None), 0x00, 0x00),
        (Payload::Beacon(Some(RecruitmentIe::default())), 0x00, 0x01),
        (Payload::Data(tagged(DataKind::Sensor)), 0x01, 0x01),
        (Payload::Data(tagged(DataKind::NodeStatus)), 0x01, 0x02),
        (Payload::Data(tagged(DataKind::Event)), 0x01, 0x03),
        (Payload::Data(tagged(DataKind::Location)), 0x01, 0x04),
        (cmd(ScheduleUpdate { action: CellAction::Install, cells: vec![] }), 0x02, 0x01),
        (cmd(JoinRequest { task_id: 1, caps: CapabilitySet::EMPTY, battery_pct: 80, credentials: 0 }), 0x02, 0x02),
        (cmd(Acknowledgment { task_id: 1, accepted: true }), 0x02, 0x05),
        (cmd(Activation { task_id: 1 }), 0x02, 0x06),
        (cmd(MacTest { nonce: 1 }), 0x02, 0x08),
        (cmd(TestResponse { nonce: 1 }), 0x02, 0x09),
        (cmd(TaskRequest { task: task(), cells: vec![] }), 0x02, 0x10),
        (cmd(TaskResponse { task_id: 1, accepted: false }), 0x02, 0x11),
        (cmd(TaskProgress { task_id: 1, packets: 3 }), 0x02, 0x12),
        (cmd(TaskCompletion { task_id: 1, success: true, count: 3 }), 0x02, 0x13),
        (cmd(ResourceRequest { leader: NodeId(1), task_id: 1, count: 4 }), 0x02, 0x14),
        (cmd(ResourceResponse { leader: NodeId(1), task_id: 1, slots: vec![9] }), 0x02, 0x15),
        (Payload::Ack, 0x03, 0x00),
        (Payload::Event(tagged(EventKind::StateChange)), 0x04, 0x01),
        (Payload::Event(tagged(EventKind::Error)), 0x04, 0x02),
        (Payload::Event(tagged(EventKind::TopologyChange)), 0x04, 0x03),
    ]
}

#[test]
fn subtype_bytes_match_the_table() {
    for (payload, t, s) in subtype_table() {
        let bytes = encode(&frame(payload.clone())).unwrap();
        assert_eq!((bytes[0], bytes[1]), (t, s), "{payload:?}");
        assert_eq!(decode(&bytes).unwrap().payload, payload);
    }
}

#[test]
fn golden_ack() {
    let bytes = encode(&frame(Payload::Ack)).unwrap();
    assert_eq!(bytes, [0x03, 0x00, 0x00, 0x01, 0x00, 0x02, 0x00, 0x00, 0x00, 0x07, 0x03]);
}

#[test]
fn golden_resource_request() {
    let f = Frame::new(
        NodeId(1),
        NodeId(0),
        0x0102_0304,
        9,
        Payload::Command(CommandPayload::ResourceRequest { leader: NodeId(1), task_id: 4, count: 19 }),
    );
    let bytes = encode(&f).unwrap();
    assert_eq!(
        bytes,
        [0x02, 0x14, 0x00, 0x01, 0x00, 0x00, 0x01, 0x02, 0x03, 0x04, 0x09, 0x00, 0x01, 0x00, 0x04, 0x00, 0x13]
    );
}

#[test]
fn golden_sensor_data() {
    let f = Frame::new(NodeId(3), NodeId(1), 42, 5, Payload::Data(tagged(DataKind::Sensor)));
    let bytes = encode(&f).unwrap();
    assert_eq!(bytes, [0x01, 0x01, 0x00, 0x03, 0x00, 0x01, 0x00, 0x00, 0x00, 0x2A, 0x05, 0x00, 0x07, 0x02, 0xAB, 0xCD]);
}

#[test]
fn golden_recruitment_beacon() {
    let ie = RecruitmentIe {
        task_id: 1,
        required_caps: CapabilitySet::from_bits(0b0000_0110),
        priority: Priority::Critical,
        qos_pct: 90,
        zone: 1,
        time_window: 1010,
        credentials: 0x0001_0001,
        resource_estimate: 19,
    };
    let f = Frame::new(NodeId(1), NodeId::BROADCAST, 100, 0, Payload::Beacon(Some(ie)));
    let bytes = encode(&f).unwrap();
    #[rustfmt::skip]
    let want = [
        0x00, 0x01, 0x00, 0x01, 0xFF, 0xFF, 0x00, 0x00, 0x00, 0x64, 0x00,
        0x00, 0x01, 0x06, 0xC0, 0x5A, 0x01, 0x03, 0xF2,
        0x00, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x01,
        0x00, 0x13,
    ];
    assert_eq!(bytes, want);
}

#[test]
fn golden_corpus_digest_is_stable() {
    let mut h = Sha256::new();
    for (payload, _, _) in subtype_table() {
        h.update(encode(&frame(payload)).unwrap());
    }
    let digest: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(digest, GOLDEN_DIGEST);
}

const GOLDEN_DIGEST: &str = "44bc55def8f636284a90553081ffe9acb0943c351d16fdf38e8fdad125691baa";

fn node() -> impl Strategy<Value = NodeId> {
    (0u16..0xFFFF).prop_map(NodeId)
}

fn header() -> impl Strategy<Value = (NodeId, NodeId, u64, u8)> {
    (node(), node(), any::<u32>().prop_map(u64::from), any::<u8>())
}

fn caps() -> impl Strategy<Value = CapabilitySet> {
    any::<u8>().prop_map(CapabilitySet::from_bits)
}

fn priority() -> impl Strategy<Value = Priority> {
    prop_oneof![Just(Priority::Low), Just(Priority::Medium), Just(Priority::High), Just(Priority::Critical)]
}

fn body() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 0..=MAX_BODY_LEN)
}

fn ie() -> impl Strategy<Value = RecruitmentIe> {
    (any::<u16>(), caps(), priority(), any::<u8>(), any::<u8>(), any::<u16>(), any::<u64>(), any::<u16>()).prop_map(
        |(task_id, required_caps, priority, qos_pct, zone, time_window, credentials, resource_estimate)| RecruitmentIe {
            task_id,
            required_caps,
            priority,
            qos_pct,
            zone,
            time_window,
            credentials,
            resource_estimate,
        },
    )
}

fn any_task() -> impl Strategy<Value = Task> {
    (any::<u16>(), priority(), any::<u32>(), 0.0f64..=1.0, caps(), any::<u8>(), any::<u64>(), any::<u64>(), 0.0f64..100.0, any::<u8>())
        .prop_map(|(id, priority, lat, pdr, c_req, zone, a, b, rate, min_nodes)| Task {
            id,
            priority,
            qos: QoS { lat_max_ms: lat, pdr_min: pdr },
            c_req,
            zone,
            window: TimeWindow::new(a.min(b), a.max(b)).unwrap(),
            rate,
            min_nodes,
        })
}

fn cell_spec() -> impl Strategy<Value = CellSpec> {
    let kind = prop_oneof![
        Just(CellKind::TxUnicast),
        Just(CellKind::RxUnicast),
        Just(CellKind::SharedBroadcast),
        Just(CellKind::EbSlot)
    ];
    (any::<u16>(), any::<u8>(), kind, node()).prop_map(|(slot, channel, kind, peer)| CellSpec { slot, channel, kind, peer })
}

fn command() -> impl Strategy<Value = CommandPayload> {
    use CommandPayload::*;
    let action = prop_oneof![
        Just(CellAction::Install),
        Just(CellAction::Remove),
        Just(CellAction::AddRequest),
        Just(CellAction::AddConfirm),
        Just(CellAction::DeleteRequest),
        Just(CellAction::DeleteConfirm)
    ];
    prop_oneof![
        (action, proptest::collection::vec(cell_spec(), 0..=19)).prop_map(|(action, cells)| ScheduleUpdate { action, cells }),
        (any::<u16>(), caps(), any::<u8>(), any::<u64>())
            .prop_map(|(task_id, caps, battery_pct, credentials)| JoinRequest { task_id, caps, battery_pct, credentials }),
        (any::<u16>(), any::<bool>()).prop_map(|(task_id, accepted)| Acknowledgment { task_id, accepted }),
        any::<u16>().prop_map(|task_id| Activation { task_id }),
        any::<u16>().prop_map(|nonce| MacTest { nonce }),
        any::<u16>().prop_map(|nonce| TestResponse { nonce }),
        (any_task(), proptest::collection::vec((any::<u16>(), any::<u8>()), 0..=24))
            .prop_map(|(task, cells)| TaskRequest { task, cells }),
        (any::<u16>(), any::<bool>()).prop_map(|(task_id, accepted)| TaskResponse { task_id, accepted }),
        (any::<u16>(), any::<u16>()).prop_map(|(task_id, packets)| TaskProgress { task_id, packets }),
        (any::<u16>(), any::<bool>(), any::<u16>())
            .prop_map(|(task_id, success, count)| TaskCompletion { task_id, success, count }),
        (node(), any::<u16>(), any::<u16>()).prop_map(|(leader, task_id, count)| ResourceRequest { leader, task_id, count }),
        (node(), any::<u16>(), proptest::collection::vec(any::<u16>(), 0..=55))
            .prop_map(|(leader, task_id, slots)| ResourceResponse { leader, task_id, slots }),
    ]
}

fn roundtrip(src: NodeId, dst: NodeId, asn: u64, seq: u8, payload: Payload) -> Result<(), TestCaseError> {
    let f = Frame::new(src, dst, asn, seq, payload);
    let bytes = encode(&f).map_err(|e| TestCaseError::fail(format!("encode: {e}")))?;
    prop_assert!(bytes.len() <= 127);
    prop_assert_eq!(decode(&bytes).map_err(|e| TestCaseError::fail(format!("decode: {e}")))?, f);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn beacons_roundtrip((src, _, asn, seq) in header(), ie in proptest::option::of(ie())) {
        roundtrip(src, NodeId::BROADCAST, asn, seq, Payload::Beacon(ie))?;
    }

    #[test]
    fn data_roundtrips((src, dst, asn, seq) in header(), task_id in any::<u16>(), body in body(), k in 0usize..4) {
        let kind = [DataKind::Sensor, DataKind::NodeStatus, DataKind::Event, DataKind::Location][k];
        roundtrip(src, dst, asn, seq, Payload::Data(TaggedBody { kind, task_id, body }))?;
    }

    #[test]
    fn commands_roundtrip((src, dst, asn, seq) in header(), c in command()) {
        prop_assert_eq!(Payload::Command(c.clone()).frame_type(), FrameType::Command);
        roundtrip(src, dst, asn, seq, Payload::Command(c))?;
    }

    #[test]
    fn acks_roundtrip((src, dst, asn, seq) in header()) {
        roundtrip(src, dst, asn, seq, Payload::Ack)?;
    }

    #[test]
    fn events_roundtrip((src, dst, asn, seq) in header(), task_id in any::<u16>(), body in body(), k in 0usize..3, bcast in any::<bool>()) {
        let kind = [EventKind::StateChange, EventKind::Error, EventKind::TopologyChange][k];
        let dst = if bcast { NodeId::BROADCAST } else { dst };
        roundtrip(src, dst, asn, seq, Payload::Event(TaggedBody { kind, task_id, body }))?;
    }
}
