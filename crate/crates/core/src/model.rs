//! Domain types shared by the scheduler, the protocol roles and the simulator.
//!
//! Everything here is a value object: constructors validate, nothing mutates
//! global state. Capability sets are an 8-bit vector over a fixed registry of
//! named capabilities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slot number.
pub type Asn = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid priority level {0} (expected 1..=4)")]
    PriorityLevel(u8),
    #[error("lat_max must be positive")]
    LatMax,
    #[error("pdr_min {0} outside (0, 1]")]
    PdrMin(f64),
    #[error("time window start {start} is after end {end}")]
    Window { start: Asn, end: Asn },
    #[error("task window must be non-empty")]
    EmptyWindow,
    #[error("task requires at least one capability")]
    NoCapabilities,
    #[error("task rate {0} must be finite and non-negative")]
    Rate(f64),
    #[error("task min_nodes must be at least 1")]
    MinNodes,
    #[error("battery {0} outside [0, 1]")]
    Battery(f64),
    #[error("unknown capability name `{0}`")]
    UnknownCapability(String),
    #[error("node id 0 is reserved for the root")]
    ReservedId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
    pub const BROADCAST: NodeId = NodeId(0xFFFF);

    pub fn is_root(self) -> bool {
        self == Self::ROOT
    }

    pub fn is_broadcast(self) -> bool {
        self == Self::BROADCAST
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Root,
    Leader,
    Member,
    Mobile,
}

/// One bit position of the capability vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Capability {
    BasicSensing = 0,
    GasSensor = 1,
    HdCamera = 2,
    TemperatureSensor = 3,
    ManipulatorArm = 4,
    HighSpeedReport = 5,
    VisualInspection = 6,
    Actuation = 7,
}

impl Capability {
    pub const ALL: [Capability; 8] = [
        Capability::BasicSensing,
        Capability::GasSensor,
        Capability::HdCamera,
        Capability::TemperatureSensor,
        Capability::ManipulatorArm,
        Capability::HighSpeedReport,
        Capability::VisualInspection,
        Capability::Actuation,
    ];

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        Self::ALL.get(bit as usize).copied()
    }
}

/// Names for the eight capability positions. Scenarios may rename positions;
/// the width stays fixed at 8.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityRegistry {
    names: [String; 8],
}

impl Default for CapabilityRegistry {
    fn default() -> Self {
        Self {
            names: [
                "basic_sensing",
                "gas_sensor",
                "hd_camera",
                "temperature_sensor",
                "manipulator_arm",
                "high_speed_report",
                "visual_inspection",
                "actuation",
            ]
            .map(String::from),
        }
    }
}

impl CapabilityRegistry {
    pub fn with_names(names: [String; 8]) -> Self {
        Self { names }
    }

    pub fn name(&self, bit: u8) -> Option<&str> {
        self.names.get(bit as usize).map(String::as_str)
    }

    pub fn position(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|p| p as u8)
    }

    /// Parses a list of capability names into a set.
    pub fn parse<'a, I>(&self, names: I) -> Result<CapabilitySet, ModelError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        names.into_iter().try_fold(CapabilitySet::EMPTY, |acc, n| {
            self.position(n.trim())
                .map(|bit| CapabilitySet(acc.0 | (1 << bit)))
                .ok_or_else(|| ModelError::UnknownCapability(n.to_string()))
        })
    }

    pub fn names_of(&self, set: CapabilitySet) -> Vec<&str> {
        set.bits_iter().filter_map(|b| self.name(b)).collect()
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapabilitySet(u8);

impl CapabilitySet {
    pub const EMPTY: CapabilitySet = CapabilitySet(0);

    pub const fn from_bits(bits: u8) -> Self {
        Self(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub fn with(self, cap: Capability) -> Self {
        Self(self.0 | (1 << cap.bit()))
    }

    pub fn contains(self, cap: Capability) -> bool {
        self.0 & (1 << cap.bit()) != 0
    }

    /// `true` iff `need` is a subset of `self`.
    pub fn covers(self, need: CapabilitySet) -> bool {
        need.0 & !self.0 == 0
    }

    pub fn union(self, other: CapabilitySet) -> Self {
        Self(self.0 | other.0)
    }

    pub fn intersection(self, other: CapabilitySet) -> Self {
        Self(self.0 & other.0)
    }

    pub fn difference(self, other: CapabilitySet) -> Self {
        Self(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    fn bits_iter(self) -> impl Iterator<Item = u8> {
        (0..8u8).filter(move |b| self.0 & (1 << b) != 0)
    }

    pub fn iter(self) -> impl Iterator<Item = Capability> {
        self.bits_iter().filter_map(Capability::from_bit)
    }
}

impl FromIterator<Capability> for CapabilitySet {
    fn from_iter<T: IntoIterator<Item = Capability>>(iter: T) -> Self {
        iter.into_iter().fold(Self::EMPTY, Self::with)
    }
}

impl fmt::Debug for CapabilitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

pub fn capability_covers(have: CapabilitySet, need: CapabilitySet) -> bool {
    have.covers(need)
}

/// Required capabilities that none of the given sets provide.
pub fn missing_capabilities(domain_caps: &[CapabilitySet], need: CapabilitySet) -> CapabilitySet {
    let provided = domain_caps
        .iter()
        .fold(CapabilitySet::EMPTY, |acc, c| acc.union(*c));
    need.difference(provided)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Priority {
    #[default]
    Low = 1,
    Medium = 2,
    High = 3,
    Critical = 4,
}

impl Priority {
    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Result<Self, ModelError> {
        match level {
            1 => Ok(Self::Low),
            2 => Ok(Self::Medium),
            3 => Ok(Self::High),
            4 => Ok(Self::Critical),
            other => Err(ModelError::PriorityLevel(other)),
        }
    }

    /// Two-bit wire form (`level - 1`).
    pub fn to_bits(self) -> u8 {
        self.level() - 1
    }

    pub fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0 => Self::Low,
            1 => Self::Medium,
            2 => Self::High,
            _ => Self::Critical,
        }
    }

    pub fn is_high(self) -> bool {
        self >= Self::High
    }
}

impl TryFrom<u8> for Priority {
    type Error = ModelError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::from_level(v)
    }
}

impl From<Priority> for u8 {
    fn from(p: Priority) -> u8 {
        p.level()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QoS {
    pub lat_max_ms: u32,
    pub pdr_min: f64,
}

impl QoS {
    pub fn new(lat_max_ms: u32, pdr_min: f64) -> Result<Self, ModelError> {
        let q = Self { lat_max_ms, pdr_min };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lat_max_ms == 0 {
            return Err(ModelError::LatMax);
        }
        if !(self.pdr_min > 0.0 && self.pdr_min <= 1.0) {
            return Err(ModelError::PdrMin(self.pdr_min));
        }
        Ok(())
    }
}

/// Half-open slot interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Asn,
    pub end: Asn,
}

impl TimeWindow {
    pub fn new(start: Asn, end: Asn) -> Result<Self, ModelError> {
        if start > end {
            return Err(ModelError::Window { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.start <= asn && asn < self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A unit of work: who must do what, where, when, and how well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u16,
    pub priority: Priority,
    pub qos: QoS,
    pub c_req: CapabilitySet,
    pub zone: u8,
    pub window: TimeWindow,
    /// Packets per second.
    pub rate: f64,
    pub min_nodes: u8,
}

impl Task {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.qos.validate()?;
        if self.window.start >= self.window.end {
            return Err(ModelError::EmptyWindow);
        }
        if self.c_req.is_empty() {
            return Err(ModelError::NoCapabilities);
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(ModelError::Rate(self.rate));
        }
        if self.min_nodes == 0 {
            return Err(ModelError::MinNodes);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub battery: f64,
    pub queue_len: u32,
    pub zone: u8,
    pub capabilities: CapabilitySet,
}

impl NodeState {
    pub fn new(battery: f64, zone: u8, capabilities: CapabilitySet) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&battery) {
            return Err(ModelError::Battery(battery));
        }
        Ok(Self { battery, queue_len: 0, zone, capabilities })
    }
}

/// A Leader's roster: fixed static members plus leased mobile members.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LeaderDomain {
    pub leader: NodeId,
    static_members: BTreeSet<NodeId>,
    mobile_members: BTreeMap<NodeId, Asn>,
}

impl LeaderDomain {
    pub fn new(leader: NodeId, static_members: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            leader,
            static_members: static_members.into_iter().collect(),
            mobile_members: BTreeMap::new(),
        }
    }

    pub fn static_members(&self) -> &BTreeSet<NodeId> {
        &self.static_members
    }

    pub fn mobile_members(&self) -> &BTreeMap<NodeId, Asn> {
        &self.mobile_members
    }

    /// Static then mobile members, each in ascending id order.
    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.static_members
            .iter()
            .copied()
            .chain(self.mobile_members.keys().copied())
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.static_members.contains(&node) || self.mobile_members.contains_key(&node)
    }

    /// Admits a mobile node until `lease_expiry`. An existing lease is extended,
    /// never shortened.
    pub fn grant_mobile(&mut self, node: NodeId, lease_expiry: Asn) {
        let e = self.mobile_members.entry(node).or_insert(lease_expiry);
        *e = (*e).max(lease_expiry);
    }

    pub fn release_mobile(&mut self, node: NodeId) -> bool {
        self.mobile_members.remove(&node).is_some()
    }

    /// Drops every mobile whose lease has run out at `asn`.
    pub fn expire_leases(&mut self, asn: Asn) -> Vec<NodeId> {
        let expired: Vec<NodeId> = self
            .mobile_members
            .iter()
            .filter(|(_, &exp)| exp <= asn)
            .map(|(n, _)| *n)
            .collect();
        for n in &expired {
            self.mobile_members.remove(n);
        }
        expired
    }
}

/// `true` iff no mobile node is a member of two domains.
pub fn mobile_sets_disjoint<'a>(domains: impl IntoIterator<Item = &'a LeaderDomain>) -> bool {
    let mut seen = BTreeSet::new();
    domains
        .into_iter()
        .flat_map(|d| d.mobile_members.keys())
        .all(|n| seen.insert(*n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Capability::*;

    fn set(caps: &[Capability]) -> CapabilitySet {
        caps.iter().copied().collect()
    }

    #[test]
    fn covers_examples() {
        let agv = set(&[GasSensor, HdCamera, ManipulatorArm]);
        assert!(capability_covers(agv, set(&[GasSensor, HdCamera])));
        assert!(capability_covers(CapabilitySet::EMPTY, CapabilitySet::EMPTY));
        assert!(!capability_covers(set(&[BasicSensing]), set(&[GasSensor])));
    }

    #[test]
    fn missing_examples() {
        let need = set(&[GasSensor, HdCamera]);
        assert_eq!(missing_capabilities(&[set(&[BasicSensing])], need), need);
        assert_eq!(missing_capabilities(&[need], need), CapabilitySet::EMPTY);
        // bit-by-bit oracle
        let domain = [set(&[GasSensor]), set(&[HdCamera])];
        let need = set(&[GasSensor, HdCamera, Actuation]);
        let oracle: CapabilitySet = Capability::ALL
            .iter()
            .copied()
            .filter(|c| need.contains(*c) && !domain.iter().any(|d| d.contains(*c)))
            .collect();
        assert_eq!(oracle, set(&[Actuation]));
        assert_eq!(missing_capabilities(&domain, need), oracle);
    }

    #[test]
    fn capability_bits_roundtrip_all_patterns() {
        for bits in 0..=255u8 {
            let s = CapabilitySet::from_bits(bits);
            assert_eq!(s.bits(), bits);
            assert_eq!(s.iter().collect::<CapabilitySet>(), s);
        }
    }

    #[test]
    fn priority_roundtrip() {
        for level in 1..=4 {
            let p = Priority::from_level(level).unwrap();
            assert_eq!(Priority::from_bits(p.to_bits()), p);
            assert_eq!(p.level(), level);
        }
        assert!(Priority::from_level(0).is_err());
        assert!(Priority::from_level(5).is_err());
    }

    #[test]
    fn registry_parse_and_rename() {
        let reg = CapabilityRegistry::default();
        let s = reg.parse(["gas_sensor", "hd_camera"]).unwrap();
        assert_eq!(s, set(&[GasSensor, HdCamera]));
        assert_eq!(reg.names_of(s), vec!["gas_sensor", "hd_camera"]);
        assert!(matches!(
            reg.parse(["laser"]),
            Err(ModelError::UnknownCapability(_))
        ));
        let mut names = CapabilityRegistry::default().names.clone();
        names[1] = "co2_sensor".into();
        let renamed = CapabilityRegistry::with_names(names);
        assert_eq!(renamed.parse(["co2_sensor"]).unwrap(), set(&[GasSensor]));
    }

    #[test]
    fn qos_and_task_validation() {
        assert!(QoS::new(0, 0.5).is_err());
        assert!(QoS::new(10, 0.0).is_err());
        assert!(QoS::new(10, 1.0).is_ok());
        let mut t = Task {
            id: 1,
            priority: Priority::Low,
            qos: QoS::new(100, 0.9).unwrap(),
            c_req: set(&[BasicSensing]),
            zone: 1,
            window: TimeWindow::new(0, 10).unwrap(),
            rate: 1.0,
            min_nodes: 1,
        };
        assert!(t.validate().is_ok());
        t.c_req = CapabilitySet::EMPTY;
        assert_eq!(t.validate(), Err(ModelError::NoCapabilities));
        t.c_req = set(&[BasicSensing]);
        t.rate = -1.0;
        assert!(t.validate().is_err());
        t.rate = 0.0;
        t.window = TimeWindow::new(5, 5).unwrap();
        assert_eq!(t.validate(), Err(ModelError::EmptyWindow));
        assert!(TimeWindow::new(6, 5).is_err());
    }

    #[test]
    fn domain_leases() {
        let mut d = LeaderDomain::new(NodeId(1), [NodeId(3), NodeId(4)]);
        d.grant_mobile(NodeId(8), 100);
        d.grant_mobile(NodeId(8), 50);
        assert_eq!(d.mobile_members()[&NodeId(8)], 100);
        assert_eq!(d.members().collect::<Vec<_>>(), vec![NodeId(3), NodeId(4), NodeId(8)]);
        assert!(d.expire_leases(99).is_empty());
        assert_eq!(d.expire_leases(100), vec![NodeId(8)]);
        assert!(!d.contains(NodeId(8)));

        let mut a = LeaderDomain::new(NodeId(1), []);
        let mut b = LeaderDomain::new(NodeId(2), []);
        a.grant_mobile(NodeId(9), 10);
        b.grant_mobile(NodeId(10), 10);
        assert!(mobile_sets_disjoint([&a, &b]));
        b.grant_mobile(NodeId(9), 10);
        assert!(!mobile_sets_disjoint([&a, &b]));
    }

    proptest! {
        #[test]
        fn covers_is_reflexive_and_transitive(a in any::<u8>(), b in any::<u8>(), c in any::<u8>()) {
            let (a, b, c) = (CapabilitySet::from_bits(a), CapabilitySet::from_bits(b), CapabilitySet::from_bits(c));
            prop_assert!(a.covers(a));
            if a.covers(b) && b.covers(c) {
                prop_assert!(a.covers(c));
            }
            prop_assert!(a.union(b).covers(a));
            prop_assert!(a.covers(a.intersection(b)));
            prop_assert_eq!(a.difference(b).intersection(b), CapabilitySet::EMPTY);
        }
    }
}
