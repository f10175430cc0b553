//! Bit-exact wire format for MonAAS frames.
//!
//! Every frame starts with a two-byte prefix (frame type, subtype) followed by
//! a 9-byte addressing header:
//!
//! ```text
//! 0      1        2..4  4..6  6..10      10
//! type | subtype | src | dst | asn[31:0] | seq
//! ```
//!
//! All multi-byte integers are big-endian (MSB first). The payload layout
//! depends on the frame type; see [`Payload`].

use thiserror::Error;

use crate::model::{Asn, CapabilitySet, NodeId, Priority, QoS, Task, TimeWindow};
use crate::tsch::{CellKind, CellSpec};

/// 802.15.4 PSDU budget.
pub const MAX_FRAME_LEN: usize = 127;
/// Upper bound for opaque data/event bodies.
pub const MAX_BODY_LEN: usize = 96;
pub const HEADER_LEN: usize = 11;
pub const RECRUITMENT_IE_LEN: usize = 18;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("payload does not match frame type {frame_type:?}/subtype {subtype:#04x}")]
    PayloadMismatch { frame_type: FrameType, subtype: u8 },
    #[error("encoded frame is {len} bytes, budget is {max}")]
    Oversize { len: usize, max: usize },
    #[error("broadcast destination not allowed for {0:?} frames")]
    IllegalBroadcast(FrameType),
    #[error("unknown frame type {value:#04x} at offset {offset}")]
    UnknownType { offset: usize, value: u8 },
    #[error("unknown subtype {value:#04x} for {frame_type:?} at offset {offset}")]
    UnknownSubtype { offset: usize, frame_type: FrameType, value: u8 },
    #[error("truncated frame: need {needed} more byte(s) at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("invalid field at offset {offset}: {reason}")]
    InvalidField { offset: usize, reason: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Beacon = 0x00,
    Data = 0x01,
    Command = 0x02,
    Ack = 0x03,
    Event = 0x04,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x00 => Self::Beacon,
            0x01 => Self::Data,
            0x02 => Self::Command,
            0x03 => Self::Ack,
            0x04 => Self::Event,
            _ => return None,
        })
    }

    pub fn allows_broadcast(self) -> bool {
        matches!(self, Self::Beacon | Self::Event)
    }
}

pub mod subtype {
    pub const BEACON_PLAIN: u8 = 0x00;
    pub const BEACON_RECRUITMENT: u8 = 0x01;

    pub const DATA_SENSOR: u8 = 0x01;
    pub const DATA_NODE_STATUS: u8 = 0x02;
    pub const DATA_EVENT: u8 = 0x03;
    pub const DATA_LOCATION: u8 = 0x04;

    pub const CMD_SCHEDULE_UPDATE: u8 = 0x01;
    pub const CMD_JOIN_REQUEST: u8 = 0x02;
    pub const CMD_ACKNOWLEDGMENT: u8 = 0x05;
    pub const CMD_ACTIVATION: u8 = 0x06;
    pub const CMD_MAC_TEST: u8 = 0x08;
    pub const CMD_TEST_RESPONSE: u8 = 0x09;
    pub const CMD_TASK_REQUEST: u8 = 0x10;
    pub const CMD_TASK_RESPONSE: u8 = 0x11;
    pub const CMD_TASK_PROGRESS: u8 = 0x12;
    pub const CMD_TASK_COMPLETION: u8 = 0x13;
    pub const CMD_RESOURCE_REQUEST: u8 = 0x14;
    pub const CMD_RESOURCE_RESPONSE: u8 = 0x15;

    pub const ACK_NONE: u8 = 0x00;

    pub const EVT_STATE_CHANGE: u8 = 0x01;
    pub const EVT_ERROR: u8 = 0x02;
    pub const EVT_TOPOLOGY_CHANGE: u8 = 0x03;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub subtype: u8,
    pub src: NodeId,
    pub dst: NodeId,
    /// Only the low 32 bits travel on the wire; see [`extend_asn`].
    pub asn: Asn,
    pub seq: u8,
}

/// Recruitment information element carried in enhanced beacons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct RecruitmentIe {
    pub task_id: u16,
    pub required_caps: CapabilitySet,
    pub priority: Priority,
    /// `pdr_min` as a rounded percentage.
    pub qos_pct: u8,
    pub zone: u8,
    /// Window duration in timeslots, counted from the beacon ASN.
    pub time_window: u16,
    pub credentials: u64,
    /// Timeslots the task is expected to consume.
    pub resource_estimate: u16,
}

impl RecruitmentIe {
    pub fn pdr_pct(pdr_min: f64) -> u8 {
        (pdr_min * 100.0).round().clamp(0.0, 255.0) as u8
    }

    fn write(&self, w: &mut Writer) {
        w.u16(self.task_id);
        w.u8(self.required_caps.bits());
        w.u8(self.priority.to_bits() << 6);
        w.u8(self.qos_pct);
        w.u8(self.zone);
        w.u16(self.time_window);
        w.u64(self.credentials);
        w.u16(self.resource_estimate);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let task_id = r.u16()?;
        let required_caps = CapabilitySet::from_bits(r.u8()?);
        let pr_off = r.pos;
        let pr = r.u8()?;
        if pr & 0x3F != 0 {
            return Err(CodecError::InvalidField { offset: pr_off, reason: "nonzero padding after priority" });
        }
        Ok(Self {
            task_id,
            required_caps,
            priority: Priority::from_bits(pr >> 6),
            qos_pct: r.u8()?,
            zone: r.u8()?,
            time_window: r.u16()?,
            credentials: r.u64()?,
            resource_estimate: r.u16()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum DataKind {
    Sensor = subtype::DATA_SENSOR,
    NodeStatus = subtype::DATA_NODE_STATUS,
    Event = subtype::DATA_EVENT,
    Location = subtype::DATA_LOCATION,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EventKind {
    StateChange = subtype::EVT_STATE_CHANGE,
    Error = subtype::EVT_ERROR,
    TopologyChange = subtype::EVT_TOPOLOGY_CHANGE,
}

/// Task-tagged opaque body shared by data and event frames.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TaggedBody<K> {
    pub kind: K,
    pub task_id: u16,
    pub body: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellAction {
    Install = 0,
    Remove = 1,
    AddRequest = 2,
    AddConfirm = 3,
    DeleteRequest = 4,
    DeleteConfirm = 5,
}

impl CellAction {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Self::Install,
            1 => Self::Remove,
            2 => Self::AddRequest,
            3 => Self::AddConfirm,
            4 => Self::DeleteRequest,
            5 => Self::DeleteConfirm,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CommandPayload {
    ScheduleUpdate { action: CellAction, cells: Vec<CellSpec> },
    JoinRequest { task_id: u16, caps: CapabilitySet, battery_pct: u8, credentials: u64 },
    Acknowledgment { task_id: u16, accepted: bool },
    Activation { task_id: u16 },
    MacTest { nonce: u16 },
    TestResponse { nonce: u16 },
    /// Task assignment. Root→Leader requests carry no cells; Leader→executor
    /// assignments list the executor's Tx cells as `(slot, channel)` pairs.
    TaskRequest { task: Task, cells: Vec<(u16, u8)> },
    TaskResponse { task_id: u16, accepted: bool },
    TaskProgress { task_id: u16, packets: u16 },
    TaskCompletion { task_id: u16, success: bool, count: u16 },
    ResourceRequest { leader: NodeId, task_id: u16, count: u16 },
    /// Slot transfer. From the Root this is a grant (empty = denied); towards
    /// the Root it returns slots to the free pool.
    ResourceResponse { leader: NodeId, task_id: u16, slots: Vec<u16> },
}

impl CommandPayload {
    pub fn subtype(&self) -> u8 {
        use subtype::*;
        match self {
            Self::ScheduleUpdate { .. } => CMD_SCHEDULE_UPDATE,
            Self::JoinRequest { .. } => CMD_JOIN_REQUEST,
            Self::Acknowledgment { .. } => CMD_ACKNOWLEDGMENT,
            Self::Activation { .. } => CMD_ACTIVATION,
            Self::MacTest { .. } => CMD_MAC_TEST,
            Self::TestResponse { .. } => CMD_TEST_RESPONSE,
            Self::TaskRequest { .. } => CMD_TASK_REQUEST,
            Self::TaskResponse { .. } => CMD_TASK_RESPONSE,
            Self::TaskProgress { .. } => CMD_TASK_PROGRESS,
            Self::TaskCompletion { .. } => CMD_TASK_COMPLETION,
            Self::ResourceRequest { .. } => CMD_RESOURCE_REQUEST,
            Self::ResourceResponse { .. } => CMD_RESOURCE_RESPONSE,
        }
    }

    pub fn task_id(&self) -> Option<u16> {
        match self {
            Self::ScheduleUpdate { .. } | Self::MacTest { .. } | Self::TestResponse { .. } => None,
            Self::JoinRequest { task_id, .. }
            | Self::Acknowledgment { task_id, .. }
            | Self::Activation { task_id }
            | Self::TaskResponse { task_id, .. }
            | Self::TaskProgress { task_id, .. }
            | Self::TaskCompletion { task_id, .. }
            | Self::ResourceRequest { task_id, .. }
            | Self::ResourceResponse { task_id, .. } => Some(*task_id),
            Self::TaskRequest { task, .. } => Some(task.id),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Plain enhanced beacon (`None`) or recruitment beacon (`Some`).
    Beacon(Option<RecruitmentIe>),
    Data(TaggedBody<DataKind>),
    Command(CommandPayload),
    Ack,
    Event(TaggedBody<EventKind>),
}

impl Payload {
    pub fn frame_type(&self) -> FrameType {
        match self {
            Self::Beacon(_) => FrameType::Beacon,
            Self::Data(_) => FrameType::Data,
            Self::Command(_) => FrameType::Command,
            Self::Ack => FrameType::Ack,
            Self::Event(_) => FrameType::Event,
        }
    }

    pub fn subtype(&self) -> u8 {
        match self {
            Self::Beacon(None) => subtype::BEACON_PLAIN,
            Self::Beacon(Some(_)) => subtype::BEACON_RECRUITMENT,
            Self::Data(d) => d.kind as u8,
            Self::Command(c) => c.subtype(),
            Self::Ack => subtype::ACK_NONE,
            Self::Event(e) => e.kind as u8,
        }
    }

    pub fn task_id(&self) -> Option<u16> {
        match self {
            Self::Beacon(ie) => ie.map(|ie| ie.task_id),
            Self::Data(d) => Some(d.task_id),
            Self::Command(c) => c.task_id(),
            Self::Ack => None,
            Self::Event(e) => Some(e.task_id),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub header: FrameHeader,
    pub payload: Payload,
}

impl Frame {
    /// Builds a frame whose header type/subtype agree with `payload`.
    pub fn new(src: NodeId, dst: NodeId, asn: Asn, seq: u8, payload: Payload) -> Self {
        Self {
            header: FrameHeader {
                frame_type: payload.frame_type(),
                subtype: payload.subtype(),
                src,
                dst,
                asn,
                seq,
            },
            payload,
        }
    }

    pub fn is_control(&self) -> bool {
        self.header.frame_type != FrameType::Data
    }
}

/// Reconstructs a full ASN from its 32-bit wire form, choosing the value
/// closest to `local`.
pub fn extend_asn(wire: u32, local: Asn) -> Asn {
    let base = local & !0xFFFF_FFFF;
    let candidates = [base.wrapping_sub(1 << 32), base, base + (1 << 32)];
    candidates
        .into_iter()
        .map(|b| b | wire as u64)
        .min_by_key(|c| c.abs_diff(local))
        .unwrap_or(wire as u64)
}

pub fn encode(frame: &Frame) -> Result<Vec<u8>, CodecError> {
    let h = &frame.header;
    let p = &frame.payload;
    if h.frame_type != p.frame_type() || h.subtype != p.subtype() {
        return Err(CodecError::PayloadMismatch { frame_type: h.frame_type, subtype: h.subtype });
    }
    if h.dst.is_broadcast() && !h.frame_type.allows_broadcast() {
        return Err(CodecError::IllegalBroadcast(h.frame_type));
    }
    let mut w = Writer::default();
    w.u8(h.frame_type as u8);
    w.u8(h.subtype);
    w.u16(h.src.0);
    w.u16(h.dst.0);
    w.u32(h.asn as u32);
    w.u8(h.seq);
    match p {
        Payload::Beacon(None) | Payload::Ack => {}
        Payload::Beacon(Some(ie)) => ie.write(&mut w),
        Payload::Data(d) => write_tagged(&mut w, d.task_id, &d.body)?,
        Payload::Event(e) => write_tagged(&mut w, e.task_id, &e.body)?,
        Payload::Command(c) => write_command(&mut w, c),
    }
    if w.buf.len() > MAX_FRAME_LEN {
        return Err(CodecError::Oversize { len: w.buf.len(), max: MAX_FRAME_LEN });
    }
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<Frame, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let tb = r.u8()?;
    let frame_type = FrameType::from_byte(tb).ok_or(CodecError::UnknownType { offset: 0, value: tb })?;
    let st = r.u8()?;
    let unknown_sub = CodecError::UnknownSubtype { offset: 1, frame_type, value: st };
    let src = NodeId(r.u16()?);
    let dst = NodeId(r.u16()?);
    let asn = r.u32()? as Asn;
    let seq = r.u8()?;
    let payload = match frame_type {
        FrameType::Beacon => match st {
            subtype::BEACON_PLAIN => Payload::Beacon(None),
            subtype::BEACON_RECRUITMENT => Payload::Beacon(Some(RecruitmentIe::read(&mut r)?)),
            _ => return Err(unknown_sub),
        },
        FrameType::Data => {
            let kind = match st {
                subtype::DATA_SENSOR => DataKind::Sensor,
                subtype::DATA_NODE_STATUS => DataKind::NodeStatus,
                subtype::DATA_EVENT => DataKind::Event,
                subtype::DATA_LOCATION => DataKind::Location,
                _ => return Err(unknown_sub),
            };
            let (task_id, body) = read_tagged(&mut r)?;
            Payload::Data(TaggedBody { kind, task_id, body })
        }
        FrameType::Event => {
            let kind = match st {
                subtype::EVT_STATE_CHANGE => EventKind::StateChange,
                subtype::EVT_ERROR => EventKind::Error,
                subtype::EVT_TOPOLOGY_CHANGE => EventKind::TopologyChange,
                _ => return Err(unknown_sub),
            };
            let (task_id, body) = read_tagged(&mut r)?;
            Payload::Event(TaggedBody { kind, task_id, body })
        }
        FrameType::Ack => {
            if st != subtype::ACK_NONE {
                return Err(unknown_sub);
            }
            Payload::Ack
        }
        FrameType::Command => Payload::Command(read_command(&mut r, st).map_err(|e| match e {
            ReadCmdError::Unknown => unknown_sub,
            ReadCmdError::Codec(e) => e,
        })?),
    };
    if r.pos != bytes.len() {
        return Err(CodecError::InvalidField { offset: r.pos, reason: "trailing bytes" });
    }
    Ok(Frame {
        header: FrameHeader { frame_type, subtype: st, src, dst, asn, seq },
        payload,
    })
}

fn write_tagged(w: &mut Writer, task_id: u16, body: &[u8]) -> Result<(), CodecError> {
    if body.len() > MAX_BODY_LEN {
        return Err(CodecError::Oversize { len: body.len(), max: MAX_BODY_LEN });
    }
    w.u16(task_id);
    w.u8(body.len() as u8);
    w.buf.extend_from_slice(body);
    Ok(())
}

fn read_tagged(r: &mut Reader<'_>) -> Result<(u16, Vec<u8>), CodecError> {
    let task_id = r.u16()?;
    let len_off = r.pos;
    let len = r.u8()? as usize;
    if len > MAX_BODY_LEN {
        return Err(CodecError::InvalidField { offset: len_off, reason: "body length exceeds budget" });
    }
    Ok((task_id, r.take(len)?.to_vec()))
}

fn write_task(w: &mut Writer, t: &Task) {
    w.u16(t.id);
    w.u8(t.priority.level());
    w.u32(t.qos.lat_max_ms);
    w.u64(t.qos.pdr_min.to_bits());
    w.u8(t.c_req.bits());
    w.u8(t.zone);
    w.u64(t.window.start);
    w.u64(t.window.end);
    w.u64(t.rate.to_bits());
    w.u8(t.min_nodes);
}

fn read_task(r: &mut Reader<'_>) -> Result<Task, CodecError> {
    let id = r.u16()?;
    let p_off = r.pos;
    let priority = Priority::from_level(r.u8()?)
        .map_err(|_| CodecError::InvalidField { offset: p_off, reason: "priority level" })?;
    let lat_max_ms = r.u32()?;
    let pdr_min = f64::from_bits(r.u64()?);
    let c_req = CapabilitySet::from_bits(r.u8()?);
    let zone = r.u8()?;
    let w_off = r.pos;
    let start = r.u64()?;
    let end = r.u64()?;
    let window = TimeWindow::new(start, end)
        .map_err(|_| CodecError::InvalidField { offset: w_off, reason: "window start after end" })?;
    let rate = f64::from_bits(r.u64()?);
    let min_nodes = r.u8()?;
    Ok(Task {
        id,
        priority,
        qos: QoS { lat_max_ms, pdr_min },
        c_req,
        zone,
        window,
        rate,
        min_nodes,
    })
}

fn write_command(w: &mut Writer, c: &CommandPayload) {
    use CommandPayload::*;
    match c {
        ScheduleUpdate { action, cells } => {
            w.u8(*action as u8);
            w.u8(cells.len() as u8);
            for cell in cells {
                w.u16(cell.slot);
                w.u8(cell.channel);
                w.u8(cell.kind as u8);
                w.u16(cell.peer.0);
            }
        }
        JoinRequest { task_id, caps, battery_pct, credentials } => {
            w.u16(*task_id);
            w.u8(caps.bits());
            w.u8(*battery_pct);
            w.u64(*credentials);
        }
        Acknowledgment { task_id, accepted } | TaskResponse { task_id, accepted } => {
            w.u16(*task_id);
            w.u8(*accepted as u8);
        }
        Activation { task_id } => w.u16(*task_id),
        MacTest { nonce } | TestResponse { nonce } => w.u16(*nonce),
        TaskRequest { task, cells } => {
            write_task(w, task);
            w.u8(cells.len() as u8);
            for (slot, ch) in cells {
                w.u16(*slot);
                w.u8(*ch);
            }
        }
        TaskProgress { task_id, packets } => {
            w.u16(*task_id);
            w.u16(*packets);
        }
        TaskCompletion { task_id, success, count } => {
            w.u16(*task_id);
            w.u8(*success as u8);
            w.u16(*count);
        }
        ResourceRequest { leader, task_id, count } => {
            w.u16(leader.0);
            w.u16(*task_id);
            w.u16(*count);
        }
        ResourceResponse { leader, task_id, slots } => {
            w.u16(leader.0);
            w.u16(*task_id);
            w.u8(slots.len() as u8);
            for s in slots {
                w.u16(*s);
            }
        }
    }
}

enum ReadCmdError {
    Unknown,
    Codec(CodecError),
}

impl From<CodecError> for ReadCmdError {
    fn from(e: CodecError) -> Self {
        Self::Codec(e)
    }
}

fn read_bool(r: &mut Reader<'_>) -> Result<bool, CodecError> {
    let off = r.pos;
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(CodecError::InvalidField { offset: off, reason: "boolean flag" }),
    }
}

fn read_command(r: &mut Reader<'_>, st: u8) -> Result<CommandPayload, ReadCmdError> {
    use subtype::*;
    use CommandPayload::*;
    Ok(match st {
        CMD_SCHEDULE_UPDATE => {
            let a_off = r.pos;
            let action = CellAction::from_byte(r.u8()?)
                .ok_or(CodecError::InvalidField { offset: a_off, reason: "cell action" })?;
            let n = r.u8()? as usize;
            let mut cells = Vec::with_capacity(n);
            for _ in 0..n {
                let slot = r.u16()?;
                let channel = r.u8()?;
                let k_off = r.pos;
                let kind = CellKind::from_byte(r.u8()?)
                    .ok_or(CodecError::InvalidField { offset: k_off, reason: "cell kind" })?;
                let peer = NodeId(r.u16()?);
                cells.push(CellSpec { slot, channel, kind, peer });
            }
            ScheduleUpdate { action, cells }
        }
        CMD_JOIN_REQUEST => JoinRequest {
            task_id: r.u16()?,
            caps: CapabilitySet::from_bits(r.u8()?),
            battery_pct: r.u8()?,
            credentials: r.u64()?,
        },
        CMD_ACKNOWLEDGMENT => Acknowledgment { task_id: r.u16()?, accepted: read_bool(r)? },
        CMD_ACTIVATION => Activation { task_id: r.u16()? },
        CMD_MAC_TEST => MacTest { nonce: r.u16()? },
        CMD_TEST_RESPONSE => TestResponse { nonce: r.u16()? },
        CMD_TASK_REQUEST => {
            let task = read_task(r)?;
            let n = r.u8()? as usize;
            let mut cells = Vec::with_capacity(n);
            for _ in 0..n {
                cells.push((r.u16()?, r.u8()?));
            }
            TaskRequest { task, cells }
        }
        CMD_TASK_RESPONSE => TaskResponse { task_id: r.u16()?, accepted: read_bool(r)? },
        CMD_TASK_PROGRESS => TaskProgress { task_id: r.u16()?, packets: r.u16()? },
        CMD_TASK_COMPLETION => TaskCompletion {
            task_id: r.u16()?,
            success: read_bool(r)?,
            count: r.u16()?,
        },
        CMD_RESOURCE_REQUEST => ResourceRequest {
            leader: NodeId(r.u16()?),
            task_id: r.u16()?,
            count: r.u16()?,
        },
        CMD_RESOURCE_RESPONSE => {
            let leader = NodeId(r.u16()?);
            let task_id = r.u16()?;
            let n = r.u8()? as usize;
            let mut slots = Vec::with_capacity(n);
            for _ in 0..n {
                slots.push(r.u16()?);
            }
            ResourceResponse { leader, task_id, slots }
        }
        _ => return Err(ReadCmdError::Unknown),
    })
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(CodecError::Truncated { offset: self.pos, needed: end - self.buf.len() });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Capability;

    fn hdr(payload: Payload) -> Frame {
        Frame::new(NodeId(1), NodeId(2), 7, 3, payload)
    }

    #[test]
    fn task_request_prefix() {
        let task = Task {
            id: 0x0001,
            priority: Priority::Critical,
            qos: QoS::new(200, 0.9).unwrap(),
            c_req: [Capability::GasSensor, Capability::HdCamera].into_iter().collect(),
            zone: 1,
            window: TimeWindow::new(0, 15000).unwrap(),
            rate: 2.0,
            min_nodes: 1,
        };
        let bytes = encode(&hdr(Payload::Command(CommandPayload::TaskRequest { task, cells: vec![] }))).unwrap();
        assert_eq!(&bytes[..2], &[0x02, 0x10]);
    }

    #[test]
    fn ack_prefix_and_zero_ie() {
        let bytes = encode(&hdr(Payload::Ack)).unwrap();
        assert_eq!(&bytes[..2], &[0x03, 0x00]);
        assert_eq!(bytes.len(), HEADER_LEN);

        let b = Frame::new(NodeId(1), NodeId::BROADCAST, 0, 0, Payload::Beacon(Some(RecruitmentIe::default())));
        let bytes = encode(&b).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + RECRUITMENT_IE_LEN);
        assert_eq!(&bytes[..2], &[0x00, 0x01]);
        assert!(bytes[HEADER_LEN..].iter().all(|b| *b == 0));
    }

    #[test]
    fn mismatch_and_broadcast_rules() {
        let mut f = hdr(Payload::Ack);
        f.header.subtype = 0x05;
        assert!(matches!(encode(&f), Err(CodecError::PayloadMismatch { .. })));
        let f = Frame::new(NodeId(1), NodeId::BROADCAST, 0, 0, Payload::Ack);
        assert_eq!(encode(&f), Err(CodecError::IllegalBroadcast(FrameType::Ack)));
        let body = vec![0u8; MAX_BODY_LEN + 1];
        let f = hdr(Payload::Data(TaggedBody { kind: DataKind::Sensor, task_id: 1, body }));
        assert!(matches!(encode(&f), Err(CodecError::Oversize { .. })));
    }

    #[test]
    fn decode_errors_name_offsets() {
        assert_eq!(decode(&[0x07, 0x00]), Err(CodecError::UnknownType { offset: 0, value: 0x07 }));
        let mut bytes = encode(&hdr(Payload::Ack)).unwrap();
        bytes[1] = 0x01;
        assert!(matches!(decode(&bytes), Err(CodecError::UnknownSubtype { offset: 1, .. })));
        for missing in [0x03, 0x04, 0x07] {
            let mut b = vec![0x02, missing];
            b.extend_from_slice(&[0; 9]);
            assert!(matches!(decode(&b), Err(CodecError::UnknownSubtype { value, .. }) if value == missing));
        }
        let bytes = encode(&hdr(Payload::Command(CommandPayload::Activation { task_id: 9 }))).unwrap();
        assert_eq!(
            decode(&bytes[..bytes.len() - 1]),
            Err(CodecError::Truncated { offset: HEADER_LEN, needed: 1 })
        );
        assert!(matches!(decode(&[0x02]), Err(CodecError::Truncated { offset: 1, .. })));
    }

    #[test]
    fn resource_response_roundtrip() {
        let f = Frame::new(
            NodeId::ROOT,
            NodeId(1),
            1234,
            9,
            Payload::Command(CommandPayload::ResourceResponse { leader: NodeId(1), task_id: 1, slots: (10..21).collect() }),
        );
        let bytes = encode(&f).unwrap();
        assert_eq!(&bytes[..2], &[0x02, 0x15]);
        assert_eq!(decode(&bytes).unwrap(), f);
    }

    #[test]
    fn asn_extension() {
        assert_eq!(extend_asn(5, 3), 5);
        let local = (3u64 << 32) + 10;
        assert_eq!(extend_asn(8, local), (3 << 32) + 8);
        assert_eq!(extend_asn(u32::MAX, (4u64 << 32) + 2), (3 << 32) + u32::MAX as u64);
    }
}
