//! Metrics recomputed from a trace. Slots before `scenario.warmup` are
//! excluded from rates and ratios.
//!
//! `metrics.csv` column order is the field order of [`MetricsReport`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use crate::codec::{subtype, FrameType};
use crate::model::{Asn, NodeId, NodeRole};
use crate::net::BACKGROUND;
use crate::sim::scenario::Scenario;
use crate::strategy::StrategyTag;
use crate::trace::{Direction, TraceRecord};

/// Length of each window either side of the first injection used for the
/// PDR dip, in seconds.
pub const DIP_WINDOW_S: f64 = 10.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub strategy: String,
    pub seed: u64,
    /// Measured slots (duration minus warm-up).
    pub slots: u64,
    /// Delivered / attempted unicast data transmissions.
    pub pdr_hop: f64,
    /// Mean generation-to-reception delay of delivered data, ms.
    pub mac_latency_ms: f64,
    /// Same, restricted to task packets of priority High or Critical.
    pub hp_latency_ms: f64,
    /// Delivered data packets per second.
    pub throughput_pps: f64,
    /// Control transmissions over all transmissions.
    pub control_overhead: f64,
    /// Highest control transmission count in any one-second bin.
    pub control_peak_pps: f64,
    /// Awake node-slots over all node-slots.
    pub rdc: f64,
    /// Injected tasks completed with their reliability target met.
    pub tcr: f64,
    /// High-priority task packets not delivered within `lat_max`, over generated.
    pub dmr: f64,
    /// Mean activation delay over injected tasks, ms.
    pub activation_delay_ms: f64,
    /// Tasks that need a mobile node and got one sending data in time.
    pub integration_success: f64,
    /// Background PDR in the window before the first injection minus the
    /// PDR in the window after it.
    pub pdr_dip: f64,
    pub tasks_injected: u64,
    pub tasks_completed: u64,
    pub mobile_tasks: u64,
    pub data_tx: u64,
    pub data_rx: u64,
    pub control_tx: u64,
    pub violations: u64,
}

pub fn write_metrics_csv<W: io::Write>(rows: &[MetricsReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: io::Read>(input: R) -> csv::Result<Vec<MetricsReport>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Column names in order.
pub fn metrics_header() -> Vec<String> {
    let mut buf = Vec::new();
    write_metrics_csv(&[MetricsReport::default()], &mut buf).expect("in-memory write");
    let text = String::from_utf8(buf).expect("utf8");
    text.lines().next().unwrap_or_default().split(',').map(String::from).collect()
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn pkt_key(r: &TraceRecord) -> Option<(u16, u32)> {
    let (o, s) = r.get("pkt")?.split_once(':')?;
    Some((o.parse().ok()?, s.parse().ok()?))
}

/// A task's completion record: a 0x13 queued by any node, or a local
/// `complete` event for schedulers without a control plane.
pub fn is_completion(r: &TraceRecord) -> bool {
    r.is(Direction::Out, FrameType::Command, subtype::CMD_TASK_COMPLETION)
        || (r.direction == Direction::Evt && r.note.split(';').next() == Some("complete"))
}

/// First ASN a recruitment beacon for each task went on air.
pub fn first_recruitment(trace: &[TraceRecord]) -> BTreeMap<u16, Asn> {
    let mut out = BTreeMap::new();
    for r in trace {
        if r.is(Direction::Tx, FrameType::Beacon, subtype::BEACON_RECRUITMENT) {
            if let Some(t) = r.task_id {
                out.entry(t).or_insert(r.asn);
            }
        }
    }
    out
}

/// First ASN a data packet of each task was transmitted, with the sender.
pub fn first_task_data(trace: &[TraceRecord]) -> BTreeMap<u16, (Asn, NodeId)> {
    let mut out = BTreeMap::new();
    for r in trace {
        if r.direction == Direction::Tx && r.is_data() {
            if let Some(t) = r.task_id.filter(|t| *t != BACKGROUND) {
                out.entry(t).or_insert((r.asn, r.node));
            }
        }
    }
    out
}

/// Activation delay per task in slots: from the first recruitment beacon
/// (or the injection when none was sent) to the first task data frame.
/// Tasks never activated are censored at their window end.
pub fn activation_delays(trace: &[TraceRecord], sc: &Scenario) -> BTreeMap<u16, (Asn, bool)> {
    let beacons = first_recruitment(trace);
    let data = first_task_data(trace);
    sc.tasks
        .iter()
        .map(|t| {
            let start = beacons.get(&t.task.id).copied().unwrap_or(t.inject).max(t.inject);
            let censor = t.task.window.end.min(sc.duration);
            let v = match data.get(&t.task.id) {
                Some((a, _)) if *a < censor => (a.saturating_sub(start), true),
                _ => (censor.saturating_sub(start), false),
            };
            (t.task.id, v)
        })
        .collect()
}

pub fn compute_metrics(trace: &[TraceRecord], sc: &Scenario, tag: StrategyTag, seed: u64) -> MetricsReport {
    let slot_ms = sc.slotframe.slot_duration_ms as f64;
    let w = sc.warmup;
    let slots = sc.duration.saturating_sub(w);
    let seconds = slots as f64 * slot_ms / 1000.0;
    let mut m = MetricsReport {
        scenario: sc.name.clone(),
        strategy: tag.as_str().to_string(),
        seed,
        slots,
        tasks_injected: sc.tasks.len() as u64,
        ..Default::default()
    };
    if slots == 0 {
        return m;
    }

    let prio: HashMap<u16, bool> = sc.tasks.iter().map(|t| (t.task.id, t.task.priority.is_high())).collect();
    let lat_max: HashMap<u16, f64> = sc.tasks.iter().map(|t| (t.task.id, t.task.qos.lat_max_ms as f64)).collect();

    // generation ASN and task per packet
    let mut gen: HashMap<(u16, u32), (Asn, u16)> = HashMap::new();
    // first reception ASN per packet
    let mut rx: HashMap<(u16, u32), Asn> = HashMap::new();
    let mut awake: BTreeSet<(Asn, u16)> = BTreeSet::new();
    let mut ctrl_bins: BTreeMap<u64, u64> = BTreeMap::new();
    let bin_slots = (1000.0 / slot_ms).round().max(1.0) as u64;

    for r in trace {
        let key = pkt_key(r);
        match r.direction {
            Direction::Out if r.is_data() => {
                if let Some(k) = key {
                    gen.entry(k).or_insert((r.asn, r.task_id.unwrap_or(BACKGROUND)));
                }
            }
            Direction::Rx if r.is_data() => {
                if let Some(k) = key {
                    rx.entry(k).or_insert(r.asn);
                }
            }
            _ => {}
        }
        if r.asn < w {
            continue;
        }
        match r.direction {
            Direction::Tx => {
                awake.insert((r.asn, r.node.0));
                if r.is_data() {
                    m.data_tx += 1;
                } else if r.is_control() {
                    m.control_tx += 1;
                    *ctrl_bins.entry((r.asn - w) / bin_slots).or_default() += 1;
                }
            }
            Direction::Rx => {
                awake.insert((r.asn, r.node.0));
                if r.is_data() {
                    m.data_rx += 1;
                }
            }
            Direction::Lost => {
                if r.get("listening") == Some("1") {
                    if let Some(d) = r.get_u64("dst") {
                        awake.insert((r.asn, d as u16));
                    }
                }
            }
            Direction::Evt if r.note.starts_with("violation") => m.violations += 1,
            _ => {}
        }
    }

    m.pdr_hop = ratio(m.data_rx, m.data_tx);
    m.throughput_pps = m.data_rx as f64 / seconds;
    m.control_overhead = ratio(m.control_tx, m.control_tx + m.data_tx);
    m.control_peak_pps = ctrl_bins.values().copied().max().unwrap_or(0) as f64 * 1000.0 / (bin_slots as f64 * slot_ms);
    m.rdc = ratio(awake.len() as u64, sc.nodes.len() as u64 * slots);

    let mut lat = Vec::new();
    let mut hp_lat = Vec::new();
    let (mut hp_gen, mut hp_met) = (0u64, 0u64);
    for (k, (g, task)) in &gen {
        if *g < w {
            continue;
        }
        let high = prio.get(task).copied().unwrap_or(false);
        let delay = rx.get(k).map(|a| (a - g + 1) as f64 * slot_ms);
        if let Some(d) = delay {
            lat.push(d);
            if high {
                hp_lat.push(d);
            }
        }
        if high {
            hp_gen += 1;
            if delay.is_some_and(|d| d <= lat_max[task]) {
                hp_met += 1;
            }
        }
    }
    m.mac_latency_ms = mean(&lat);
    m.hp_latency_ms = mean(&hp_lat);
    m.dmr = if hp_gen == 0 { 0.0 } else { 1.0 - ratio(hp_met, hp_gen) };

    // task completion: a completion record plus the reliability target met
    // by packets received inside the window and within the latency bound
    let completed: BTreeSet<u16> = trace.iter().filter(|r| is_completion(r)).filter_map(|r| r.task_id).collect();
    let mut per_task: HashMap<u16, (u64, u64)> = HashMap::new();
    for (k, (_, task)) in &gen {
        if *task == BACKGROUND {
            continue;
        }
        let e = per_task.entry(*task).or_default();
        e.0 += 1;
        let end = sc.tasks.iter().find(|t| t.task.id == *task).map_or(Asn::MAX, |t| t.task.window.end);
        let g = gen[k].0;
        if rx.get(k).is_some_and(|a| *a < end && (a - g + 1) as f64 * slot_ms <= lat_max[task]) {
            e.1 += 1;
        }
    }
    for t in &sc.tasks {
        let (g, d) = per_task.get(&t.task.id).copied().unwrap_or_default();
        if completed.contains(&t.task.id) && g > 0 && d as f64 >= t.task.qos.pdr_min * g as f64 - 1e-9 {
            m.tasks_completed += 1;
        }
    }
    m.tcr = ratio(m.tasks_completed, m.tasks_injected);

    let delays = activation_delays(trace, sc);
    let d: Vec<f64> = delays.values().map(|(s, _)| *s as f64 * slot_ms).collect();
    m.activation_delay_ms = mean(&d);

    let static_caps: Vec<_> =
        sc.nodes.iter().filter(|n| n.role != NodeRole::Mobile).map(|n| n.caps).collect();
    let role = |n: NodeId| sc.node(n).map(|s| s.role);
    let mut ok = 0;
    for t in &sc.tasks {
        if static_caps.iter().any(|c| c.covers(t.task.c_req)) {
            continue;
        }
        m.mobile_tasks += 1;
        let hit = trace.iter().any(|r| {
            r.direction == Direction::Tx
                && r.is_data()
                && r.task_id == Some(t.task.id)
                && r.asn < t.task.window.end
                && role(r.node) == Some(NodeRole::Mobile)
        });
        if hit {
            ok += 1;
        }
    }
    m.integration_success = ratio(ok, m.mobile_tasks);

    if let Some(inject) = sc.tasks.iter().map(|t| t.inject).filter(|a| *a >= w).min() {
        // equal windows either side of the first injection; a packet counts
        // only if it arrives before its own window closes
        let span = (DIP_WINDOW_S * 1000.0 / slot_ms) as u64;
        let before = inject.saturating_sub(span);
        let after_end = inject + span;
        let (mut bg, mut bd, mut ag, mut ad) = (0u64, 0u64, 0u64, 0u64);
        for (k, (g, task)) in &gen {
            if *task != BACKGROUND || *g < before {
                continue;
            }
            if *g < inject {
                bg += 1;
                bd += rx.get(k).is_some_and(|a| *a < inject) as u64;
            } else if *g < after_end {
                ag += 1;
                ad += rx.get(k).is_some_and(|a| *a < after_end) as u64;
            }
        }
        m.pdr_dip = ratio(bd, bg) - ratio(ad, ag);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{DataKind, Frame, Payload, TaggedBody};

    fn scenario() -> Scenario {
        let text = r#"
name = "micro"
seed = 1
duration = 100
[[node]]
id = 0
role = "root"
[[node]]
id = 1
role = "leader"
[[node]]
id = 3
role = "member"
parent = 1
"#;
        Scenario::from_toml_str(text).unwrap()
    }

    fn data(seq: u32) -> Frame {
        Frame::new(NodeId(3), NodeId(1), 0, seq as u8, Payload::Data(TaggedBody { kind: DataKind::Sensor, task_id: 0, body: vec![] }))
    }

    #[test]
    fn hand_counted_micro_trace() {
        let mut t = Vec::new();
        for i in 0..10u32 {
            let f = data(i);
            let a = i as u64 * 5;
            t.push(TraceRecord::frame(a, NodeId(3), Direction::Out, &f, format!("pkt=3:{i};dst=1")));
            t.push(TraceRecord::frame(a + 1, NodeId(3), Direction::Tx, &f, format!("dst=1;attempt=1;via=cell;pkt=3:{i}")));
            if i == 2 || i == 7 {
                t.push(TraceRecord::frame(a + 1, NodeId(3), Direction::Lost, &f, format!("dst=1;why=link;listening=1;pkt=3:{i}")));
            } else {
                t.push(TraceRecord::frame(a + 1, NodeId(1), Direction::Rx, &f, format!("src=3;pkt=3:{i}")));
            }
        }
        let m = compute_metrics(&t, &scenario(), StrategyTag::Static, 1);
        assert_eq!(m.data_tx, 10);
        assert_eq!(m.data_rx, 8);
        assert!((m.pdr_hop - 0.8).abs() < 1e-12);
        assert!((m.mac_latency_ms - 40.0).abs() < 1e-9);
        // every tx wakes two nodes: 20 node-slots of 3 × 100
        assert!((m.rdc - 20.0 / 300.0).abs() < 1e-12);
        assert_eq!(m.control_tx, 0);
    }

    #[test]
    fn empty_run_is_all_zero() {
        let mut sc = scenario();
        sc.duration = 0;
        let m = compute_metrics(&[], &sc, StrategyTag::Monaas, 1);
        assert_eq!(m.pdr_hop, 0.0);
        assert_eq!(m.rdc, 0.0);
        assert_eq!(m.slots, 0);
    }

    #[test]
    fn csv_roundtrip_keeps_column_order() {
        let m = MetricsReport { scenario: "s".into(), strategy: "ost".into(), pdr_hop: 0.5, ..Default::default() };
        let mut buf = Vec::new();
        write_metrics_csv(&[m.clone()], &mut buf).unwrap();
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), vec![m]);
        let h = metrics_header();
        assert_eq!(&h[..5], ["scenario", "strategy", "seed", "slots", "pdr_hop"]);
    }
}
