//! Trace records: the single source of truth for metrics and causality
//! checks. CSV columns: `asn,node,direction,frame_type,subtype,task_id,note`.

use std::fmt;
use std::io;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{Frame, FrameType};
use crate::model::{Asn, NodeId};

pub const TRACE_HEADER: [&str; 7] = ["asn", "node", "direction", "frame_type", "subtype", "task_id", "note"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Frame queued for transmission (or data packet generated).
    Out,
    /// One transmission attempt.
    Tx,
    /// Successful reception.
    Rx,
    /// Attempt not received.
    Lost,
    /// Frame or packet discarded.
    Drop,
    /// Local event without a frame.
    Evt,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Out => "out",
            Self::Tx => "tx",
            Self::Rx => "rx",
            Self::Lost => "lost",
            Self::Drop => "drop",
            Self::Evt => "evt",
        }
    }
}

impl FromStr for Direction {
    type Err = TraceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "out" => Self::Out,
            "tx" => Self::Tx,
            "rx" => Self::Rx,
            "lost" => Self::Lost,
            "drop" => Self::Drop,
            "evt" => Self::Evt,
            _ => return Err(TraceError::Field("direction", s.to_string())),
        })
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad {0} value {1:?}")]
    Field(&'static str, String),
    #[error("trace header mismatch")]
    Header,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub asn: Asn,
    pub node: NodeId,
    pub direction: Direction,
    pub frame_type: Option<FrameType>,
    pub subtype: Option<u8>,
    pub task_id: Option<u16>,
    /// `key=value` pairs separated by `;`.
    pub note: String,
}

impl TraceRecord {
    pub fn frame(asn: Asn, node: NodeId, direction: Direction, frame: &Frame, note: String) -> Self {
        Self {
            asn,
            node,
            direction,
            frame_type: Some(frame.header.frame_type),
            subtype: Some(frame.header.subtype),
            task_id: frame.payload.task_id(),
            note,
        }
    }

    pub fn event(asn: Asn, node: NodeId, task_id: Option<u16>, note: String) -> Self {
        Self { asn, node, direction: Direction::Evt, frame_type: None, subtype: None, task_id, note }
    }

    pub fn is(&self, direction: Direction, ft: FrameType, subtype: u8) -> bool {
        self.direction == direction && self.frame_type == Some(ft) && self.subtype == Some(subtype)
    }

    pub fn is_data(&self) -> bool {
        self.frame_type == Some(FrameType::Data)
    }

    pub fn is_control(&self) -> bool {
        matches!(self.frame_type, Some(ft) if ft != FrameType::Data)
    }

    /// Value of `key` in the note.
    pub fn get(&self, key: &str) -> Option<&str> {
        note_get(&self.note, key)
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    fn fields(&self) -> [String; 7] {
        [
            self.asn.to_string(),
            self.node.0.to_string(),
            self.direction.as_str().to_string(),
            self.frame_type.map(|f| format!("0x{:02x}", f as u8)).unwrap_or_default(),
            self.subtype.map(|s| format!("0x{s:02x}")).unwrap_or_default(),
            self.task_id.map(|t| t.to_string()).unwrap_or_default(),
            self.note.clone(),
        ]
    }
}

pub fn note_get<'a>(note: &'a str, key: &str) -> Option<&'a str> {
    note.split(';').find_map(|kv| {
        let (k, v) = kv.split_once('=')?;
        (k == key).then_some(v)
    })
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.fields().join(","))
    }
}

fn parse_hex(field: &'static str, s: &str) -> Result<Option<u8>, TraceError> {
    if s.is_empty() {
        return Ok(None);
    }
    let digits = s.strip_prefix("0x").ok_or_else(|| TraceError::Field(field, s.into()))?;
    u8::from_str_radix(digits, 16).map(Some).map_err(|_| TraceError::Field(field, s.into()))
}

fn parse_num<T: FromStr>(field: &'static str, s: &str) -> Result<T, TraceError> {
    s.parse().map_err(|_| TraceError::Field(field, s.into()))
}

pub fn write_csv<W: io::Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_bytes(records: &[TraceRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory");
    buf
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(TRACE_HEADER) {
        return Err(TraceError::Header);
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let ft = parse_hex("frame_type", get(3))?
            .map(|b| FrameType::from_byte(b).ok_or_else(|| TraceError::Field("frame_type", get(3).into())))
            .transpose()?;
        let task_id = if get(5).is_empty() { None } else { Some(parse_num("task_id", get(5))?) };
        out.push(TraceRecord {
            asn: parse_num("asn", get(0))?,
            node: NodeId(parse_num("node", get(1))?),
            direction: get(2).parse()?,
            frame_type: ft,
            subtype: parse_hex("subtype", get(4))?,
            task_id,
            note: get(6).to_string(),
        });
    }
    Ok(out)
}

/// SHA-256 of the CSV serialization, hex encoded.
pub fn trace_hash(records: &[TraceRecord]) -> String {
    let digest = Sha256::digest(to_csv_bytes(records));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CommandPayload, Payload};

    #[test]
    fn csv_roundtrip() {
        let f = Frame::new(
            NodeId(1),
            NodeId(0),
            7,
            3,
            Payload::Command(CommandPayload::ResourceRequest { leader: NodeId(1), task_id: 9, count: 11 }),
        );
        let recs = vec![
            TraceRecord::frame(7, NodeId(1), Direction::Tx, &f, "dst=0;attempt=1".into()),
            TraceRecord::event(8, NodeId(0), Some(9), "inject;prio=4".into()),
        ];
        let bytes = to_csv_bytes(&recs);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("asn,node,direction,frame_type,subtype,task_id,note\n"));
        assert!(text.contains("7,1,tx,0x02,0x14,9,dst=0;attempt=1"));
        let back = read_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].get_u64("attempt"), Some(1));
        assert_eq!(back[1].get("prio"), Some("4"));
        assert_eq!(trace_hash(&recs), trace_hash(&back));
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(read_csv("a,b\n".as_bytes()), Err(TraceError::Header)));
        let bad = "asn,node,direction,frame_type,subtype,task_id,note\n1,2,sideways,,,,\n";
        assert!(read_csv(bad.as_bytes()).is_err());
    }
}
