//! Common hooks every scheduling strategy implements.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::Frame;
use crate::model::NodeId;
use crate::net::{Net, Packet};
use crate::scheduler::{ResourcePool, RootPool};
use crate::sim::scenario::{MobilityEvent, Scenario, TaskInjection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyTag {
    Monaas,
    Static,
    Sixtisch,
    Ost,
    Sdn,
}

impl StrategyTag {
    pub const ALL: [StrategyTag; 5] = [Self::Monaas, Self::Static, Self::Sixtisch, Self::Ost, Self::Sdn];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Monaas => "monaas",
            Self::Static => "static",
            Self::Sixtisch => "sixtisch",
            Self::Ost => "ost",
            Self::Sdn => "sdn",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected monaas|static|sixtisch|ost|sdn)"))
    }
}

/// Resource pools a strategy exposes for the conservation check.
pub struct PoolView<'a> {
    pub root: &'a RootPool,
    pub leaders: Vec<&'a ResourcePool>,
}

pub trait Strategy {
    fn tag(&self) -> StrategyTag;

    /// Pre-traffic setup: initial cells, flows, beacons.
    fn init(&mut self, net: &mut Net, scenario: &Scenario);

    fn on_task(&mut self, net: &mut Net, injection: &TaskInjection);

    /// Called after the engine applied the event to the link model.
    fn on_topology_change(&mut self, net: &mut Net, event: &MobilityEvent);

    /// Once per slot per node, ascending node id.
    fn on_tick(&mut self, net: &mut Net, node: NodeId);

    /// A frame received in the previous slot.
    fn on_frame(&mut self, net: &mut Net, node: NodeId, frame: &Frame, packet: Option<&Packet>);

    /// Final fate of a unicast control frame sent by `node`.
    fn on_sent(&mut self, _net: &mut Net, _node: NodeId, _frame: &Frame, _delivered: bool) {}

    fn pools(&self) -> Option<PoolView<'_>> {
        None
    }
}

pub fn make_strategy(tag: StrategyTag) -> Box<dyn Strategy> {
    match tag {
        StrategyTag::Monaas => Box::new(crate::monaas::MonaasStrategy::default()),
        StrategyTag::Static => Box::new(crate::baselines::static_tsch::StaticTsch::default()),
        StrategyTag::Sixtisch => Box::new(crate::baselines::sixtisch::SixTisch::default()),
        StrategyTag::Ost => Box::new(crate::baselines::ost::OstLike::default()),
        StrategyTag::Sdn => Box::new(crate::baselines::sdn::SdnLike::default()),
    }
}
