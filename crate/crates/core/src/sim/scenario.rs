//! Scenario files: sectioned TOML with `[[node]]`, `[[link]]`, `[[task]]`,
//! `[[mobility]]` and `[[degrade]]` tables. Errors carry the offending field
//! path, e.g. `task[2].priority`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Asn, CapabilityRegistry, CapabilitySet, NodeId, NodeRole, Priority, QoS, Task, TimeWindow};
use crate::net::MacParams;
use crate::scheduler::{ResourcePool, RootPool};
use crate::strategy::StrategyTag;
use crate::tsch::{interleave, Slotframe};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid { path: path.into(), message: message.into() }
    }

    pub fn path(&self) -> &str {
        match self {
            Self::Invalid { path, .. } | Self::Io { path, .. } => path,
        }
    }
}

/// Protocol and baseline knobs. Every field has a default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub mac: MacParams,
    /// Slots a leader collects join requests after its first recruitment beacon.
    pub recruit_window: u64,
    /// Recruitment beacons per window.
    pub recruit_beacons: u8,
    /// Slots a leader waits for a Root grant.
    pub root_timeout: u64,
    /// Slots a mobile waits for an acknowledgment after joining.
    pub join_timeout: u64,
    pub min_battery: f64,
    pub eb_period_cycles: u64,
    pub ka_period_cycles: u64,
    /// Data packets between progress reports.
    pub progress_every: u32,
    /// Reliability target used to size background cells.
    pub background_pdr: f64,
    /// Rate a static schedule is sized for (packets per second per node).
    pub nominal_rate: f64,
    pub sixtisch_threshold: usize,
    pub sixtisch_retries: u8,
    /// Slots before an unanswered 6P request is retried.
    pub sixtisch_timeout: u64,
    pub ost_window_cycles: u64,
    pub sdn_heartbeat_cycles: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            mac: MacParams::default(),
            recruit_window: 33,
            recruit_beacons: 3,
            root_timeout: 202,
            join_timeout: 202,
            min_battery: 0.2,
            eb_period_cycles: 1,
            ka_period_cycles: 1,
            progress_every: 5,
            background_pdr: 1.0,
            nominal_rate: 1.0,
            sixtisch_threshold: 2,
            sixtisch_retries: 3,
            sixtisch_timeout: 202,
            ost_window_cycles: 5,
            sdn_heartbeat_cycles: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub zone: u8,
    pub caps: CapabilitySet,
    pub battery: f64,
    /// Leader a member or mobile is attached to at start.
    pub parent: Option<NodeId>,
    /// Background traffic, packets per second.
    pub rate: f64,
    /// Leaders only: slot offsets pre-assigned by the Root.
    pub base_slots: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub p: f64,
    pub symmetric: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskInjection {
    pub inject: Asn,
    pub leader: NodeId,
    pub task: Task,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MobilityAction {
    EnterRange { leader: NodeId, p: f64 },
    LeaveRange,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilityEvent {
    pub asn: Asn,
    pub node: NodeId,
    pub action: MobilityAction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Degradation {
    pub asn: Asn,
    pub a: NodeId,
    pub b: NodeId,
    pub p: f64,
    pub symmetric: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    /// Every slot offset divisible by this is a shared control slot.
    pub shared_every: u16,
    /// EB slot offsets, handed to leaders by ascending id, then the Root.
    pub eb_slots: Vec<u16>,
}

impl Default for Layout {
    fn default() -> Self {
        Self { shared_every: 4, eb_slots: vec![1, 2, 3] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: Asn,
    /// Slots at the start excluded from metrics.
    pub warmup: Asn,
    pub strategy: Option<StrategyTag>,
    pub slotframe: Slotframe,
    pub t_sf: f64,
    pub layout: Layout,
    pub registry: CapabilityRegistry,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub tasks: Vec<TaskInjection>,
    pub mobility: Vec<MobilityEvent>,
    pub degradations: Vec<Degradation>,
    pub params: Params,
}

impl Scenario {
    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn leaders(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.nodes.iter().filter(|n| n.role == NodeRole::Leader).map(|n| n.id).collect();
        v.sort();
        v
    }

    pub fn root(&self) -> NodeId {
        self.nodes.iter().find(|n| n.role == NodeRole::Root).map_or(NodeId::ROOT, |n| n.id)
    }

    /// Nodes attached to `leader` at start, ascending id.
    pub fn attached(&self, leader: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.nodes.iter().filter(|n| n.parent == Some(leader)).map(|n| n.id).collect();
        v.sort();
        v
    }

    pub fn shared_slots(&self) -> BTreeSet<u16> {
        let every = self.layout.shared_every.max(1);
        (0..self.slotframe.length).filter(|s| s % every == 0).collect()
    }

    /// EB slot offset per beaconing node (leaders ascending, then the Root).
    pub fn eb_assignment(&self) -> BTreeMap<NodeId, u16> {
        let mut order = self.leaders();
        order.push(self.root());
        order.into_iter().zip(self.layout.eb_slots.iter().copied()).collect()
    }

    /// Data slot offsets: everything not shared and not an EB slot.
    pub fn global_slots(&self) -> BTreeSet<u16> {
        let shared = self.shared_slots();
        (0..self.slotframe.length)
            .filter(|s| !shared.contains(s) && !self.layout.eb_slots.contains(s))
            .collect()
    }

    /// Leader base pools and the Root's pool, each spread across the frame.
    pub fn pools(&self) -> (RootPool, BTreeMap<NodeId, ResourcePool>) {
        let global = self.global_slots();
        let mut counts: Vec<(Option<NodeId>, usize)> =
            self.leaders().into_iter().map(|l| (Some(l), self.node(l).map_or(0, |s| s.base_slots))).collect();
        let based: usize = counts.iter().map(|(_, n)| n).sum();
        counts.push((None, global.len().saturating_sub(based)));
        let mut bases: BTreeMap<NodeId, Vec<u16>> = self.leaders().into_iter().map(|l| (l, Vec::new())).collect();
        for (slot, owner) in global.iter().copied().zip(interleave(&counts)) {
            if let Some(l) = owner {
                bases.get_mut(&l).expect("leader").push(slot);
            }
        }
        let leaders: BTreeMap<NodeId, ResourcePool> = bases.into_iter().map(|(l, v)| (l, ResourcePool::new(v))).collect();
        let refs: Vec<&ResourcePool> = leaders.values().collect();
        (RootPool::new(global.iter().copied(), &refs), leaders)
    }

    /// Static partition of every data slot among leaders: each base plus an
    /// even share of the Root's free pool.
    pub fn partition(&self) -> BTreeMap<NodeId, BTreeSet<u16>> {
        let (root, pools) = self.pools();
        let mut out: BTreeMap<NodeId, BTreeSet<u16>> = pools.iter().map(|(l, p)| (*l, p.all())).collect();
        let leaders: Vec<NodeId> = out.keys().copied().collect();
        if leaders.is_empty() {
            return out;
        }
        for (i, slot) in root.free().iter().enumerate() {
            out.get_mut(&leaders[i % leaders.len()]).expect("leader").insert(*slot);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::invalid(if path == "." { "<root>".to_string() } else { path }, e.into_inner().message().trim())
        })?;
        let sc = raw.build()?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&RawScenario::from_scenario(self)).expect("scenario serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    seed: u64,
    duration: u64,
    #[serde(default)]
    warmup: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategy: Option<StrategyTag>,
    #[serde(default)]
    slotframe: RawSlotframe,
    #[serde(default)]
    layout: RawLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capability_names: Option<Vec<String>>,
    #[serde(default)]
    params: Params,
    #[serde(default, rename = "node")]
    nodes: Vec<RawNode>,
    #[serde(default, rename = "link")]
    links: Vec<RawLink>,
    #[serde(default, rename = "task")]
    tasks: Vec<RawTask>,
    #[serde(default, rename = "mobility")]
    mobility: Vec<RawMobility>,
    #[serde(default, rename = "degrade")]
    degradations: Vec<RawDegrade>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSlotframe {
    length: u16,
    slot_ms: u32,
    channels: u8,
    /// Seconds; defaults to `length × slot_ms`.
    #[serde(skip_serializing_if = "Option::is_none")]
    t_sf: Option<f64>,
}

impl Default for RawSlotframe {
    fn default() -> Self {
        let d = Slotframe::default();
        Self { length: d.length, slot_ms: d.slot_duration_ms, channels: d.num_channels, t_sf: None }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawLayout {
    shared_every: u16,
    eb_slots: Vec<u16>,
}

impl Default for RawLayout {
    fn default() -> Self {
        let l = Layout::default();
        Self { shared_every: l.shared_every, eb_slots: l.eb_slots }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u16,
    role: NodeRole,
    #[serde(default)]
    zone: u8,
    #[serde(default)]
    caps: Vec<String>,
    #[serde(default = "full_battery")]
    battery: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<u16>,
    #[serde(default)]
    rate: f64,
    #[serde(default)]
    base_slots: usize,
}

fn full_battery() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    a: u16,
    b: u16,
    p: f64,
    #[serde(default = "yes")]
    symmetric: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    id: u16,
    inject: u64,
    leader: u16,
    priority: u8,
    lat_max_ms: u32,
    pdr_min: f64,
    caps: Vec<String>,
    #[serde(default)]
    zone: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<u64>,
    end: u64,
    rate: f64,
    #[serde(default = "one")]
    min_nodes: u8,
}

fn one() -> u8 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawAction {
    Enter,
    Leave,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMobility {
    asn: u64,
    node: u16,
    action: RawAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leader: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDegrade {
    asn: u64,
    a: u16,
    b: u16,
    p: f64,
    #[serde(default = "yes")]
    symmetric: bool,
}

impl RawScenario {
    fn build(self) -> Result<Scenario, ConfigError> {
        let registry = match self.capability_names {
            None => CapabilityRegistry::default(),
            Some(names) => {
                let arr: [String; 8] = names
                    .try_into()
                    .map_err(|v: Vec<String>| ConfigError::invalid("capability_names", format!("expected 8 names, got {}", v.len())))?;
                CapabilityRegistry::with_names(arr)
            }
        };
        let caps = |path: String, names: &[String]| {
            registry.parse(names.iter().map(String::as_str)).map_err(|e| ConfigError::invalid(path, e.to_string()))
        };
        let sf = Slotframe { length: self.slotframe.length, slot_duration_ms: self.slotframe.slot_ms, num_channels: self.slotframe.channels };
        let t_sf = self.slotframe.t_sf.unwrap_or(sf.cycle_ms() as f64 / 1000.0);

        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            nodes.push(NodeSpec {
                id: NodeId(n.id),
                role: n.role,
                zone: n.zone,
                caps: caps(format!("node[{i}].caps"), &n.caps)?,
                battery: n.battery,
                parent: n.parent.map(NodeId),
                rate: n.rate,
                base_slots: n.base_slots,
            });
        }
        let links = self.links.iter().map(|l| LinkSpec { a: NodeId(l.a), b: NodeId(l.b), p: l.p, symmetric: l.symmetric }).collect();
        let mut tasks = Vec::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let path = |f: &str| format!("task[{i}].{f}");
            let priority = Priority::from_level(t.priority).map_err(|e| ConfigError::invalid(path("priority"), e.to_string()))?;
            let qos = QoS::new(t.lat_max_ms, t.pdr_min).map_err(|e| ConfigError::invalid(path("qos"), e.to_string()))?;
            let start = t.start.unwrap_or(t.inject);
            let window = TimeWindow::new(start, t.end).map_err(|e| ConfigError::invalid(path("end"), e.to_string()))?;
            let task = Task {
                id: t.id,
                priority,
                qos,
                c_req: caps(path("caps"), &t.caps)?,
                zone: t.zone,
                window,
                rate: t.rate,
                min_nodes: t.min_nodes,
            };
            task.validate().map_err(|e| ConfigError::invalid(format!("task[{i}]"), e.to_string()))?;
            tasks.push(TaskInjection { inject: t.inject, leader: NodeId(t.leader), task });
        }
        let mut mobility = Vec::new();
        for (i, m) in self.mobility.iter().enumerate() {
            let action = match m.action {
                RawAction::Enter => {
                    let leader = m.leader.ok_or_else(|| ConfigError::invalid(format!("mobility[{i}].leader"), "required for enter"))?;
                    let p = m.p.ok_or_else(|| ConfigError::invalid(format!("mobility[{i}].p"), "required for enter"))?;
                    MobilityAction::EnterRange { leader: NodeId(leader), p }
                }
                RawAction::Leave => MobilityAction::LeaveRange,
            };
            mobility.push(MobilityEvent { asn: m.asn, node: NodeId(m.node), action });
        }
        let degradations = self
            .degradations
            .iter()
            .map(|d| Degradation { asn: d.asn, a: NodeId(d.a), b: NodeId(d.b), p: d.p, symmetric: d.symmetric })
            .collect();
        Ok(Scenario {
            name: self.name,
            seed: self.seed,
            duration: self.duration,
            warmup: self.warmup,
            strategy: self.strategy,
            slotframe: sf,
            t_sf,
            layout: Layout { shared_every: self.layout.shared_every, eb_slots: self.layout.eb_slots },
            registry,
            nodes,
            links,
            tasks,
            mobility,
            degradations,
            params: self.params,
        })
    }

    fn from_scenario(sc: &Scenario) -> Self {
        let names = |set: CapabilitySet| sc.registry.names_of(set).into_iter().map(String::from).collect::<Vec<_>>();
        let default_sf = sc.slotframe.cycle_ms() as f64 / 1000.0;
        Self {
            name: sc.name.clone(),
            seed: sc.seed,
            duration: sc.duration,
            warmup: sc.warmup,
            strategy: sc.strategy,
            slotframe: RawSlotframe {
                length: sc.slotframe.length,
                slot_ms: sc.slotframe.slot_duration_ms,
                channels: sc.slotframe.num_channels,
                t_sf: ((sc.t_sf - default_sf).abs() > 1e-12).then_some(sc.t_sf),
            },
            layout: RawLayout { shared_every: sc.layout.shared_every, eb_slots: sc.layout.eb_slots.clone() },
            capability_names: (sc.registry != CapabilityRegistry::default())
                .then(|| (0..8).filter_map(|b| sc.registry.name(b).map(String::from)).collect()),
            params: sc.params,
            nodes: sc
                .nodes
                .iter()
                .map(|n| RawNode {
                    id: n.id.0,
                    role: n.role,
                    zone: n.zone,
                    caps: names(n.caps),
                    battery: n.battery,
                    parent: n.parent.map(|p| p.0),
                    rate: n.rate,
                    base_slots: n.base_slots,
                })
                .collect(),
            links: sc.links.iter().map(|l| RawLink { a: l.a.0, b: l.b.0, p: l.p, symmetric: l.symmetric }).collect(),
            tasks: sc
                .tasks
                .iter()
                .map(|t| RawTask {
                    id: t.task.id,
                    inject: t.inject,
                    leader: t.leader.0,
                    priority: t.task.priority.level(),
                    lat_max_ms: t.task.qos.lat_max_ms,
                    pdr_min: t.task.qos.pdr_min,
                    caps: names(t.task.c_req),
                    zone: t.task.zone,
                    start: (t.task.window.start != t.inject).then_some(t.task.window.start),
                    end: t.task.window.end,
                    rate: t.task.rate,
                    min_nodes: t.task.min_nodes,
                })
                .collect(),
            mobility: sc
                .mobility
                .iter()
                .map(|m| match m.action {
                    MobilityAction::EnterRange { leader, p } => RawMobility {
                        asn: m.asn,
                        node: m.node.0,
                        action: RawAction::Enter,
                        leader: Some(leader.0),
                        p: Some(p),
                    },
                    MobilityAction::LeaveRange => {
                        RawMobility { asn: m.asn, node: m.node.0, action: RawAction::Leave, leader: None, p: None }
                    }
                })
                .collect(),
            degradations: sc
                .degradations
                .iter()
                .map(|d| RawDegrade { asn: d.asn, a: d.a.0, b: d.b.0, p: d.p, symmetric: d.symmetric })
                .collect(),
        }
    }
}

fn prob(path: String, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::invalid(path, format!("probability {p} outside [0, 1]")))
    }
}

fn validate(sc: &Scenario) -> Result<(), ConfigError> {
    let sf = &sc.slotframe;
    if sf.length == 0 {
        return Err(ConfigError::invalid("slotframe.length", "must be positive"));
    }
    if sf.slot_duration_ms == 0 {
        return Err(ConfigError::invalid("slotframe.slot_ms", "must be positive"));
    }
    if sf.num_channels < 2 {
        return Err(ConfigError::invalid("slotframe.channels", "need at least 2 channels"));
    }
    if !(sc.t_sf > 0.0 && sc.t_sf.is_finite()) {
        return Err(ConfigError::invalid("slotframe.t_sf", "must be positive"));
    }
    if sc.layout.shared_every == 0 {
        return Err(ConfigError::invalid("layout.shared_every", "must be positive"));
    }
    let shared = sc.shared_slots();
    for (i, s) in sc.layout.eb_slots.iter().enumerate() {
        if *s >= sf.length || shared.contains(s) {
            return Err(ConfigError::invalid(format!("layout.eb_slots[{i}]"), format!("slot {s} is out of range or shared")));
        }
    }
    if sc.warmup > sc.duration {
        return Err(ConfigError::invalid("warmup", "exceeds duration"));
    }
    if sc.params.mac.max_attempts == 0 {
        return Err(ConfigError::invalid("params.mac.max_attempts", "must be positive"));
    }

    let mut ids = BTreeSet::new();
    let mut roots = 0;
    for (i, n) in sc.nodes.iter().enumerate() {
        if n.id.is_broadcast() || !ids.insert(n.id) {
            return Err(ConfigError::invalid(format!("node[{i}].id"), format!("duplicate or reserved id {}", n.id)));
        }
        if n.role == NodeRole::Root {
            roots += 1;
            if !n.id.is_root() {
                return Err(ConfigError::invalid(format!("node[{i}].id"), "the root must have id 0"));
            }
        } else if n.id.is_root() {
            return Err(ConfigError::invalid(format!("node[{i}].id"), "id 0 is reserved for the root"));
        }
        if !(0.0..=1.0).contains(&n.battery) {
            return Err(ConfigError::invalid(format!("node[{i}].battery"), "outside [0, 1]"));
        }
        if !(n.rate >= 0.0 && n.rate.is_finite()) {
            return Err(ConfigError::invalid(format!("node[{i}].rate"), "must be non-negative"));
        }
    }
    if !sc.nodes.is_empty() && roots != 1 {
        return Err(ConfigError::invalid("node", "exactly one root is required"));
    }
    let role = |id: NodeId| sc.node(id).map(|n| n.role);
    for (i, n) in sc.nodes.iter().enumerate() {
        if let Some(p) = n.parent {
            if role(p) != Some(NodeRole::Leader) || !matches!(n.role, NodeRole::Member | NodeRole::Mobile) {
                return Err(ConfigError::invalid(format!("node[{i}].parent"), format!("{p} is not a leader or node cannot attach")));
            }
        } else if n.role == NodeRole::Member {
            return Err(ConfigError::invalid(format!("node[{i}].parent"), "members need a parent leader"));
        }
    }
    let leaders = sc.leaders();
    if sc.layout.eb_slots.len() < leaders.len() {
        return Err(ConfigError::invalid("layout.eb_slots", "fewer EB slots than leaders"));
    }
    let base: usize = leaders.iter().filter_map(|l| sc.node(*l)).map(|n| n.base_slots).sum();
    if base > sc.global_slots().len() {
        return Err(ConfigError::invalid("node.base_slots", format!("{base} base slots exceed {} data slots", sc.global_slots().len())));
    }

    for (i, l) in sc.links.iter().enumerate() {
        for (f, id) in [("a", l.a), ("b", l.b)] {
            if !ids.contains(&id) {
                return Err(ConfigError::invalid(format!("link[{i}].{f}"), format!("unknown node {id}")));
            }
        }
        prob(format!("link[{i}].p"), l.p)?;
    }
    let mut task_ids = BTreeSet::new();
    for (i, t) in sc.tasks.iter().enumerate() {
        if t.task.id == crate::net::BACKGROUND || !task_ids.insert(t.task.id) {
            return Err(ConfigError::invalid(format!("task[{i}].id"), format!("duplicate or reserved task id {}", t.task.id)));
        }
        if role(t.leader) != Some(NodeRole::Leader) {
            return Err(ConfigError::invalid(format!("task[{i}].leader"), format!("{} is not a leader", t.leader)));
        }
        if t.inject >= sc.duration {
            return Err(ConfigError::invalid(format!("task[{i}].inject"), "at or after the end of the run"));
        }
        if t.task.window.end <= t.inject {
            return Err(ConfigError::invalid(format!("task[{i}].end"), "window ends before injection"));
        }
    }
    for (i, m) in sc.mobility.iter().enumerate() {
        if role(m.node) != Some(NodeRole::Mobile) {
            return Err(ConfigError::invalid(format!("mobility[{i}].node"), format!("{} is not a mobile node", m.node)));
        }
        if m.asn >= sc.duration {
            return Err(ConfigError::invalid(format!("mobility[{i}].asn"), "at or after the end of the run"));
        }
        if let MobilityAction::EnterRange { leader, p } = m.action {
            if role(leader) != Some(NodeRole::Leader) {
                return Err(ConfigError::invalid(format!("mobility[{i}].leader"), format!("{leader} is not a leader")));
            }
            prob(format!("mobility[{i}].p"), p)?;
        }
    }
    for (i, d) in sc.degradations.iter().enumerate() {
        for (f, id) in [("a", d.a), ("b", d.b)] {
            if !ids.contains(&id) {
                return Err(ConfigError::invalid(format!("degrade[{i}].{f}"), format!("unknown node {id}")));
            }
        }
        if d.asn >= sc.duration {
            return Err(ConfigError::invalid(format!("degrade[{i}].asn"), "at or after the end of the run"));
        }
        prob(format!("degrade[{i}].p"), d.p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
name = "mini"
seed = 7
duration = 1000

[slotframe]
length = 11
slot_ms = 20
channels = 16

[[node]]
id = 0
role = "root"

[[node]]
id = 1
role = "leader"
base_slots = 3

[[node]]
id = 3
role = "member"
parent = 1
caps = ["basic_sensing"]
rate = 1.0

[[link]]
a = 0
b = 1
p = 0.99

[[link]]
a = 1
b = 3
p = 0.9

[[task]]
id = 5
inject = 100
leader = 1
priority = 4
lat_max_ms = 500
pdr_min = 0.9
caps = ["basic_sensing"]
end = 600
rate = 0.5
"#;

    #[test]
    fn parses_minimal_file() {
        let sc = Scenario::from_toml_str(MINI).unwrap();
        assert_eq!(sc.nodes.len(), 3);
        assert_eq!(sc.tasks[0].task.priority, Priority::Critical);
        assert_eq!(sc.tasks[0].task.window.start, 100);
        assert!((sc.t_sf - 0.22).abs() < 1e-12);
        assert_eq!(sc.shared_slots(), [0, 4, 8].into());
        assert_eq!(sc.global_slots(), [5, 6, 7, 9, 10].into());
        let (root, pools) = sc.pools();
        assert_eq!(pools[&NodeId(1)].base().len(), 3);
        assert_eq!(root.free().len(), 2);
    }

    #[test]
    fn toml_roundtrip() {
        let sc = Scenario::from_toml_str(MINI).unwrap();
        let again = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        assert_eq!(sc, again);
    }

    fn err_path(text: &str) -> String {
        Scenario::from_toml_str(text).unwrap_err().path().to_string()
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(err_path(&MINI.replace("priority = 4", "priority = 9")), "task[0].priority");
        assert_eq!(err_path(&MINI.replace("priority = 4", "priority = \"x\"")), "task[0].priority");
        assert_eq!(err_path(&MINI.replace("p = 0.9\n", "p = 1.9\n")), "link[1].p");
        assert_eq!(err_path(&MINI.replace("parent = 1", "parent = 4")), "node[2].parent");
        assert_eq!(err_path(&MINI.replace("[\"basic_sensing\"]\nend", "[\"laser\"]\nend")), "task[0].caps");
        assert_eq!(err_path(&MINI.replace("rate = 0.5", "rate = 0.5\nbogus = 1")), "task[0].bogus");
        let late = MINI.replace("inject = 100", "inject = 1000").replace("end = 600", "end = 1200");
        assert_eq!(err_path(&late), "task[0].inject");
    }
}
