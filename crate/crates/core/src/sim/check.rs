//! Message-ordering invariants checked over a finished trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::codec::{subtype, FrameType};
use crate::model::{Asn, NodeId};
use crate::sim::metrics::is_completion;
use crate::trace::{Direction, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    /// A grant from the Root answers an earlier request from that leader.
    GrantAfterRequest,
    /// A join request for a task follows a recruitment beacon for it.
    JoinAfterBeacon,
    /// A task assignment to a mobile follows an acknowledgment sent to it.
    AssignAfterAck,
    /// Every injected task has exactly one completion record.
    OneCompletion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub asn: Asn,
    pub task: Option<u16>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at asn {} task {:?}: {}", self.rule, self.asn, self.task, self.detail)
    }
}

fn dst(r: &TraceRecord) -> Option<NodeId> {
    r.get("dst").and_then(|d| d.parse().ok()).map(NodeId)
}

fn tx(r: &TraceRecord, sub: u8) -> bool {
    r.is(Direction::Tx, FrameType::Command, sub)
}

/// Checks every rule. `root` sends grants; `mobiles` are the nodes whose
/// assignments require a prior acknowledgment; `tasks` are the injected ids.
pub fn check_causality(
    trace: &[TraceRecord],
    root: NodeId,
    mobiles: &BTreeSet<NodeId>,
    tasks: &[u16],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut requested: BTreeSet<(NodeId, Option<u16>)> = BTreeSet::new();
    let mut beaconed: BTreeSet<u16> = BTreeSet::new();
    let mut acked: BTreeSet<NodeId> = BTreeSet::new();
    let mut completions: BTreeMap<u16, usize> = BTreeMap::new();

    for r in trace {
        if tx(r, subtype::CMD_RESOURCE_REQUEST) {
            requested.insert((r.node, r.task_id));
        } else if r.is(Direction::Tx, FrameType::Beacon, subtype::BEACON_RECRUITMENT) {
            if let Some(t) = r.task_id {
                beaconed.insert(t);
            }
        } else if tx(r, subtype::CMD_ACKNOWLEDGMENT) {
            if let Some(d) = dst(r) {
                acked.insert(d);
            }
        } else if tx(r, subtype::CMD_RESOURCE_RESPONSE) && r.node == root {
            let l = dst(r).unwrap_or(NodeId::BROADCAST);
            if !requested.contains(&(l, r.task_id)) {
                out.push(Violation {
                    rule: Rule::GrantAfterRequest,
                    asn: r.asn,
                    task: r.task_id,
                    detail: format!("grant to {l} without request"),
                });
            }
        } else if tx(r, subtype::CMD_JOIN_REQUEST) {
            if let Some(t) = r.task_id.filter(|t| *t != 0) {
                if !beaconed.contains(&t) {
                    out.push(Violation {
                        rule: Rule::JoinAfterBeacon,
                        asn: r.asn,
                        task: Some(t),
                        detail: format!("join from {} before any beacon", r.node),
                    });
                }
            }
        } else if tx(r, subtype::CMD_TASK_REQUEST) {
            if let Some(d) = dst(r).filter(|d| mobiles.contains(d)) {
                if !acked.contains(&d) {
                    out.push(Violation {
                        rule: Rule::AssignAfterAck,
                        asn: r.asn,
                        task: r.task_id,
                        detail: format!("assignment to mobile {d} before acknowledgment"),
                    });
                }
            }
        }
        if is_completion(r) {
            if let Some(t) = r.task_id {
                *completions.entry(t).or_default() += 1;
            }
        }
    }
    for t in tasks {
        let n = completions.get(t).copied().unwrap_or(0);
        if n != 1 {
            out.push(Violation {
                rule: Rule::OneCompletion,
                asn: trace.last().map_or(0, |r| r.asn),
                task: Some(*t),
                detail: format!("{n} completion records"),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CommandPayload, Frame, Payload};

    fn rec(asn: Asn, node: u16, dst: u16, p: CommandPayload) -> TraceRecord {
        let f = Frame::new(NodeId(node), NodeId(dst), asn, 0, Payload::Command(p));
        TraceRecord::frame(asn, NodeId(node), Direction::Tx, &f, format!("dst={dst};attempt=1;via=shared"))
    }

    #[test]
    fn grant_without_request_is_flagged() {
        let grant = CommandPayload::ResourceResponse { leader: NodeId(1), task_id: 4, slots: vec![9] };
        let req = CommandPayload::ResourceRequest { leader: NodeId(1), task_id: 4, count: 1 };
        let bad = vec![rec(5, 0, 1, grant.clone())];
        let v = check_causality(&bad, NodeId(0), &BTreeSet::new(), &[]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::GrantAfterRequest);
        let good = vec![rec(3, 1, 0, req), rec(5, 0, 1, grant)];
        assert!(check_causality(&good, NodeId(0), &BTreeSet::new(), &[]).is_empty());
    }

    #[test]
    fn completion_count_is_exact() {
        let done = |a| {
            let f = Frame::new(
                NodeId(1),
                NodeId(0),
                a,
                0,
                Payload::Command(CommandPayload::TaskCompletion { task_id: 2, success: true, count: 5 }),
            );
            TraceRecord::frame(a, NodeId(1), Direction::Out, &f, "dst=0".into())
        };
        assert_eq!(check_causality(&[], NodeId(0), &BTreeSet::new(), &[2]).len(), 1);
        assert!(check_causality(&[done(1)], NodeId(0), &BTreeSet::new(), &[2]).is_empty());
        assert_eq!(check_causality(&[done(1), done(2)], NodeId(0), &BTreeSet::new(), &[2]).len(), 1);
    }
}
