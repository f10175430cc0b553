//! Slotframe matrix, channel hopping, per-link delivery model and the
//! ACK-based link-quality estimator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::model::{Asn, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TschError {
    #[error("cell ({slot}, {channel}) out of bounds for {len}x{channels} slotframe")]
    OutOfBounds { slot: u16, channel: u8, len: u16, channels: u8 },
    #[error("cell ({slot}, {channel}) already has a transmitter ({owner})")]
    TxCollision { slot: u16, channel: u8, owner: NodeId },
    #[error("node {node} already has a cell at slot offset {slot}")]
    HalfDuplex { node: NodeId, slot: u16 },
    #[error("only {available} free cell(s) for a request of {requested}")]
    InsufficientCells { requested: usize, available: usize },
    #[error("no link model entry for {src} -> {dst}")]
    UnknownLink { src: NodeId, dst: NodeId },
    #[error("delivery probability {0} outside [0, 1]")]
    Probability(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum CellKind {
    TxUnicast = 0,
    RxUnicast = 1,
    SharedBroadcast = 2,
    EbSlot = 3,
}

impl CellKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Self::TxUnicast,
            1 => Self::RxUnicast,
            2 => Self::SharedBroadcast,
            3 => Self::EbSlot,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TxUnicast => "tx",
            Self::RxUnicast => "rx",
            Self::SharedBroadcast => "shared",
            Self::EbSlot => "eb",
        }
    }

    fn transmits(self) -> bool {
        matches!(self, Self::TxUnicast | Self::EbSlot)
    }
}

/// Wire form of a cell as carried in schedule updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellSpec {
    pub slot: u16,
    pub channel: u8,
    pub kind: CellKind,
    pub peer: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub slot_offset: u16,
    pub channel_offset: u8,
    pub kind: CellKind,
    pub owner: NodeId,
    pub peer: NodeId,
    /// Task whose traffic this cell carries; `None` for a node-level FIFO.
    pub task: Option<u16>,
    pub installed_at: Asn,
}

impl Cell {
    pub fn spec(&self) -> CellSpec {
        CellSpec { slot: self.slot_offset, channel: self.channel_offset, kind: self.kind, peer: self.peer }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slotframe {
    pub length: u16,
    pub slot_duration_ms: u32,
    pub num_channels: u8,
}

impl Default for Slotframe {
    fn default() -> Self {
        Self { length: 11, slot_duration_ms: 20, num_channels: 16 }
    }
}

impl Slotframe {
    pub fn cycle_ms(&self) -> u64 {
        self.length as u64 * self.slot_duration_ms as u64
    }

    pub fn slot_offset(&self, asn: Asn) -> u16 {
        (asn % self.length as u64) as u16
    }

    /// Identity hopping sequence: physical channel index for a channel offset.
    pub fn physical_channel(&self, asn: Asn, channel_offset: u8) -> u8 {
        ((asn + channel_offset as u64) % self.num_channels as u64) as u8
    }

    pub fn slots_to_ms(&self, slots: u64) -> f64 {
        slots as f64 * self.slot_duration_ms as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotAction {
    Transmit { channel: u8, peer: NodeId, kind: CellKind },
    Listen { channel: u8, peer: NodeId, kind: CellKind },
    Sleep,
}

/// The global TSCH schedule. Dedicated cells are collision-free by
/// construction: a `(slot, channel)` pair has at most one transmitter and a
/// node holds at most one dedicated cell per slot offset.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub frame: Slotframe,
    by_node: BTreeMap<NodeId, BTreeMap<u16, Cell>>,
    tx_owner: HashMap<(u16, u8), NodeId>,
    shared: BTreeSet<u16>,
    channel_cursor: u8,
}

impl Schedule {
    pub fn new(frame: Slotframe) -> Self {
        Self {
            frame,
            by_node: BTreeMap::new(),
            tx_owner: HashMap::new(),
            shared: BTreeSet::new(),
            channel_cursor: 0,
        }
    }

    /// Declares a contention slot every node may use (channel offset 0).
    pub fn add_shared_slot(&mut self, slot: u16) {
        self.shared.insert(slot);
    }

    pub fn shared_slots(&self) -> &BTreeSet<u16> {
        &self.shared
    }

    pub fn is_shared(&self, slot: u16) -> bool {
        self.shared.contains(&slot)
    }

    fn check(&self, cell: &Cell) -> Result<(), TschError> {
        if cell.slot_offset >= self.frame.length || cell.channel_offset >= self.frame.num_channels {
            return Err(TschError::OutOfBounds {
                slot: cell.slot_offset,
                channel: cell.channel_offset,
                len: self.frame.length,
                channels: self.frame.num_channels,
            });
        }
        if self.shared.contains(&cell.slot_offset)
            || self.by_node.get(&cell.owner).is_some_and(|m| m.contains_key(&cell.slot_offset))
        {
            return Err(TschError::HalfDuplex { node: cell.owner, slot: cell.slot_offset });
        }
        if cell.kind.transmits() {
            if let Some(owner) = self.tx_owner.get(&(cell.slot_offset, cell.channel_offset)) {
                return Err(TschError::TxCollision {
                    slot: cell.slot_offset,
                    channel: cell.channel_offset,
                    owner: *owner,
                });
            }
        }
        Ok(())
    }

    pub fn add_cell(&mut self, cell: Cell) -> Result<(), TschError> {
        self.check(&cell)?;
        if cell.kind.transmits() {
            self.tx_owner.insert((cell.slot_offset, cell.channel_offset), cell.owner);
        }
        self.by_node.entry(cell.owner).or_default().insert(cell.slot_offset, cell);
        Ok(())
    }

    pub fn remove_cell(&mut self, owner: NodeId, slot: u16) -> Option<Cell> {
        let cell = self.by_node.get_mut(&owner)?.remove(&slot)?;
        if cell.kind.transmits() {
            self.tx_owner.remove(&(cell.slot_offset, cell.channel_offset));
        }
        Some(cell)
    }

    /// Removes every cell (both ends) tagged with `task`.
    pub fn remove_task(&mut self, task: u16) -> Vec<Cell> {
        let doomed: Vec<(NodeId, u16)> = self
            .cells()
            .filter(|c| c.task == Some(task))
            .map(|c| (c.owner, c.slot_offset))
            .collect();
        doomed.into_iter().filter_map(|(o, s)| self.remove_cell(o, s)).collect()
    }

    pub fn remove_node(&mut self, node: NodeId) -> Vec<Cell> {
        let slots: Vec<u16> = self.by_node.get(&node).map(|m| m.keys().copied().collect()).unwrap_or_default();
        slots.into_iter().filter_map(|s| self.remove_cell(node, s)).collect()
    }

    pub fn cell_at(&self, node: NodeId, slot: u16) -> Option<&Cell> {
        self.by_node.get(&node)?.get(&slot)
    }

    pub fn node_cells(&self, node: NodeId) -> impl Iterator<Item = &Cell> {
        self.by_node.get(&node).into_iter().flat_map(|m| m.values())
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.by_node.values().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.by_node.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `true` iff the slot offset is free for both endpoints.
    pub fn slot_free_for(&self, a: NodeId, b: NodeId, slot: u16) -> bool {
        !self.shared.contains(&slot) && self.cell_at(a, slot).is_none() && self.cell_at(b, slot).is_none()
    }

    fn next_channel(&mut self) -> u8 {
        // offset 0 is kept for shared cells
        let usable = self.frame.num_channels.saturating_sub(1).max(1);
        let ch = 1 + self.channel_cursor % usable;
        self.channel_cursor = self.channel_cursor.wrapping_add(1) % usable;
        ch.min(self.frame.num_channels - 1)
    }

    /// Allocates `count` Tx cells `owner -> peer` (plus the matching Rx cells
    /// at `peer`) from the slot offsets in `pool`, earliest offset first, with
    /// channel offsets assigned round-robin. All-or-nothing.
    pub fn allocate_cells(
        &mut self,
        owner: NodeId,
        peer: NodeId,
        count: usize,
        pool: &BTreeSet<u16>,
        task: Option<u16>,
        asn: Asn,
    ) -> Result<Vec<Cell>, TschError> {
        self.allocate_many(&[(owner, count)], peer, pool, task, asn)
            .map(|mut v| v.pop().unwrap_or_default())
    }

    /// Atomic allocation for several owners sharing one receiver.
    pub fn allocate_many(
        &mut self,
        owners: &[(NodeId, usize)],
        peer: NodeId,
        pool: &BTreeSet<u16>,
        task: Option<u16>,
        asn: Asn,
    ) -> Result<Vec<Vec<Cell>>, TschError> {
        let requested: usize = owners.iter().map(|(_, n)| n).sum();
        let free: Vec<u16> = pool
            .iter()
            .copied()
            .filter(|&s| s < self.frame.length && owners.iter().all(|(o, _)| self.slot_free_for(*o, peer, s)))
            .collect();
        if free.len() < requested {
            return Err(TschError::InsufficientCells { requested, available: free.len() });
        }
        let picked = spread(&free, requested);
        let labels = interleave(&owners.iter().enumerate().map(|(i, (_, n))| (i, *n)).collect::<Vec<_>>());
        let mut per_owner: Vec<Vec<u16>> = vec![Vec::new(); owners.len()];
        for (slot, i) in picked.into_iter().zip(labels) {
            per_owner[i].push(slot);
        }
        let mut out = Vec::with_capacity(owners.len());
        for (&(owner, n), slots) in owners.iter().zip(per_owner) {
            let mut mine = Vec::with_capacity(n);
            for slot in slots {
                let channel = self.next_channel();
                let tx = Cell { slot_offset: slot, channel_offset: channel, kind: CellKind::TxUnicast, owner, peer, task, installed_at: asn };
                let rx = Cell { kind: CellKind::RxUnicast, owner: peer, peer: owner, ..tx };
                self.add_cell(tx).expect("slot checked free");
                self.add_cell(rx).expect("slot checked free");
                mine.push(tx);
            }
            out.push(mine);
        }
        Ok(out)
    }

    /// Per-node action for the slot at `asn`.
    pub fn advance_slot(&self, nodes: &[NodeId], asn: Asn) -> Vec<(NodeId, SlotAction)> {
        let slot = self.frame.slot_offset(asn);
        nodes
            .iter()
            .map(|&n| {
                let action = match self.cell_at(n, slot) {
                    Some(c) if c.kind.transmits() => SlotAction::Transmit {
                        channel: self.frame.physical_channel(asn, c.channel_offset),
                        peer: c.peer,
                        kind: c.kind,
                    },
                    Some(c) => SlotAction::Listen {
                        channel: self.frame.physical_channel(asn, c.channel_offset),
                        peer: c.peer,
                        kind: c.kind,
                    },
                    None if self.shared.contains(&slot) => SlotAction::Listen {
                        channel: self.frame.physical_channel(asn, 0),
                        peer: NodeId::BROADCAST,
                        kind: CellKind::SharedBroadcast,
                    },
                    None => SlotAction::Sleep,
                };
                (n, action)
            })
            .collect()
    }

    /// `true` iff no `(slot, channel)` has two transmitters and no node holds
    /// two cells at one slot offset. Recomputed from scratch.
    pub fn is_collision_free(&self) -> bool {
        let mut seen = BTreeSet::new();
        for (node, cells) in &self.by_node {
            for (slot, c) in cells {
                if *slot != c.slot_offset || c.owner != *node {
                    return false;
                }
                if c.kind.transmits() && !seen.insert((c.slot_offset, c.channel_offset)) {
                    return false;
                }
            }
        }
        true
    }

    /// One line per cell: `asn_installed,owner,peer,slot,channel,kind`.
    pub fn dump_csv(&self) -> String {
        let mut s = String::from("asn_installed,owner,peer,slot,channel,kind\n");
        for c in self.cells() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.installed_at, c.owner, c.peer, c.slot_offset, c.channel_offset, c.kind.as_str()
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxOutcome {
    Delivered,
    Lost,
}

/// Ground-truth delivery probability per ordered pair, with time-indexed
/// overrides.
#[derive(Clone, Debug, Default)]
pub struct LinkModel {
    base: HashMap<(NodeId, NodeId), f64>,
    overrides: HashMap<(NodeId, NodeId), Vec<(Asn, f64)>>,
}

impl LinkModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, src: NodeId, dst: NodeId, p: f64) -> Result<(), TschError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(TschError::Probability(p));
        }
        self.base.insert((src, dst), p);
        self.overrides.remove(&(src, dst));
        Ok(())
    }

    pub fn set_symmetric(&mut self, a: NodeId, b: NodeId, p: f64) -> Result<(), TschError> {
        self.set(a, b, p)?;
        self.set(b, a, p)
    }

    /// From `asn` onward the pair uses probability `p`.
    pub fn override_from(&mut self, src: NodeId, dst: NodeId, asn: Asn, p: f64) -> Result<(), TschError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(TschError::Probability(p));
        }
        let v = self.overrides.entry((src, dst)).or_default();
        v.push((asn, p));
        v.sort_by_key(|(a, _)| *a);
        Ok(())
    }

    /// Forgets both directions between `a` and `b`.
    pub fn remove_pair(&mut self, a: NodeId, b: NodeId) {
        for k in [(a, b), (b, a)] {
            self.base.remove(&k);
            self.overrides.remove(&k);
        }
    }

    pub fn has_link(&self, src: NodeId, dst: NodeId) -> bool {
        self.base.contains_key(&(src, dst)) || self.overrides.contains_key(&(src, dst))
    }

    pub fn p_effective(&self, src: NodeId, dst: NodeId, asn: Asn) -> Result<f64, TschError> {
        let ov = self
            .overrides
            .get(&(src, dst))
            .and_then(|v| v.iter().rev().find(|(a, _)| *a <= asn))
            .map(|(_, p)| *p);
        ov.or_else(|| self.base.get(&(src, dst)).copied())
            .ok_or(TschError::UnknownLink { src, dst })
    }
}

/// `n` items of `sorted` at evenly spaced positions.
pub fn spread<T: Copy>(sorted: &[T], n: usize) -> Vec<T> {
    let len = sorted.len();
    if n == 0 || len == 0 {
        return Vec::new();
    }
    (0..n.min(len)).map(|i| sorted[i * len / n.min(len)]).collect()
}

/// Sequence holding each label `count` times, every label spread as evenly
/// as the others allow. Ties keep input order.
pub fn interleave<T: Copy>(counts: &[(T, usize)]) -> Vec<T> {
    let mut marks: Vec<(u64, usize, T)> = Vec::new();
    for (k, &(label, n)) in counts.iter().enumerate() {
        for i in 0..n as u64 {
            // position (i + 1/2) / n scaled to avoid floats
            let pos = (2 * i + 1) * 1_000_000 / (2 * n as u64);
            marks.push((pos, k, label));
        }
    }
    marks.sort_by_key(|(pos, k, _)| (*pos, *k));
    marks.into_iter().map(|(_, _, l)| l).collect()
}

pub fn attempt_transmission<R: Rng + ?Sized>(
    model: &LinkModel,
    src: NodeId,
    dst: NodeId,
    asn: Asn,
    rng: &mut R,
) -> Result<TxOutcome, TschError> {
    let p = model.p_effective(src, dst, asn)?;
    // one draw per attempt keeps outcome sequences seed-stable
    let u: f64 = rng.gen();
    Ok(if u < p { TxOutcome::Delivered } else { TxOutcome::Lost })
}

pub const DEFAULT_EWMA_ALPHA: f64 = 0.1;
/// Lower clamp applied when the estimate is used as a divisor.
pub const MIN_LINK_ESTIMATE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkEstimator {
    pub tx_count: u32,
    pub ack_count: u32,
    pub ewma: f64,
    pub alpha: f64,
}

impl Default for LinkEstimator {
    fn default() -> Self {
        Self::new(DEFAULT_EWMA_ALPHA)
    }
}

impl LinkEstimator {
    pub fn new(alpha: f64) -> Self {
        Self { tx_count: 0, ack_count: 0, ewma: 1.0, alpha: alpha.clamp(0.0, 1.0) }
    }

    pub fn update(&mut self, outcome: TxOutcome) {
        self.tx_count += 1;
        let hit = outcome == TxOutcome::Delivered;
        if hit {
            self.ack_count += 1;
        }
        let x = if hit { 1.0 } else { 0.0 };
        self.ewma = ((1.0 - self.alpha) * self.ewma + self.alpha * x).clamp(0.0, 1.0);
    }

    /// Estimate clamped for use as a divisor.
    pub fn l_est(&self) -> f64 {
        self.ewma.clamp(MIN_LINK_ESTIMATE, 1.0)
    }
}

pub fn update_link_estimate(mut est: LinkEstimator, outcome: TxOutcome) -> LinkEstimator {
    est.update(outcome);
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame() -> Slotframe {
        Slotframe::default()
    }

    #[test]
    fn empty_schedule_sleeps() {
        let s = Schedule::new(frame());
        let acts = s.advance_slot(&[NodeId(1), NodeId(2)], 5);
        assert!(acts.iter().all(|(_, a)| *a == SlotAction::Sleep));
    }

    #[test]
    fn single_cell_fires_on_its_slot() {
        let mut s = Schedule::new(frame());
        let pool: BTreeSet<u16> = [3].into();
        let cells = s.allocate_cells(NodeId(3), NodeId(1), 1, &pool, None, 0).unwrap();
        let ch = cells[0].channel_offset;
        let asn = 11 * 4 + 3;
        let acts = s.advance_slot(&[NodeId(1), NodeId(3)], asn);
        let phys = ((asn + ch as u64) % 16) as u8;
        assert_eq!(acts[0].1, SlotAction::Listen { channel: phys, peer: NodeId(3), kind: CellKind::RxUnicast });
        assert_eq!(acts[1].1, SlotAction::Transmit { channel: phys, peer: NodeId(1), kind: CellKind::TxUnicast });
        let off = s.advance_slot(&[NodeId(1), NodeId(3)], asn + 1);
        assert!(off.iter().all(|(_, a)| *a == SlotAction::Sleep));
    }

    #[test]
    fn duplicate_tx_cell_rejected() {
        let mut s = Schedule::new(frame());
        let c = Cell { slot_offset: 2, channel_offset: 4, kind: CellKind::TxUnicast, owner: NodeId(3), peer: NodeId(1), task: None, installed_at: 0 };
        s.add_cell(c).unwrap();
        let clash = Cell { owner: NodeId(4), ..c };
        assert!(matches!(s.add_cell(clash), Err(TschError::TxCollision { .. })));
        let oob = Cell { slot_offset: 11, ..c };
        assert!(matches!(s.add_cell(oob), Err(TschError::OutOfBounds { .. })));
        assert!(s.is_collision_free());
    }

    #[test]
    fn allocation_policy() {
        let mut s = Schedule::new(frame());
        let pool: BTreeSet<u16> = (1..=8).collect();
        assert!(s.allocate_cells(NodeId(3), NodeId(1), 0, &pool, None, 0).unwrap().is_empty());
        assert!(s.is_empty());
        let cells = s.allocate_cells(NodeId(3), NodeId(1), 3, &pool, Some(7), 0).unwrap();
        // 8 free slots, 3 wanted: every 8/3-th slot, so 1, 3 and 6
        assert_eq!(cells.iter().map(|c| c.slot_offset).collect::<Vec<_>>(), vec![1, 3, 6]);
        let chans: BTreeSet<u8> = cells.iter().map(|c| c.channel_offset).collect();
        assert_eq!(chans.len(), 3);
        let before = s.len();
        let err = s.allocate_cells(NodeId(4), NodeId(1), 6, &pool, None, 0).unwrap_err();
        assert_eq!(err, TschError::InsufficientCells { requested: 6, available: 5 });
        assert_eq!(s.len(), before);
        assert_eq!(s.remove_task(7).len(), 6);
        assert!(s.is_empty());
    }

    #[test]
    fn spread_and_interleave() {
        assert_eq!(spread(&[0, 1, 2, 3, 4, 5], 3), vec![0, 2, 4]);
        assert_eq!(spread(&[0, 1], 5), vec![0, 1]);
        assert!(spread::<u8>(&[], 2).is_empty());
        assert_eq!(interleave(&[('a', 2), ('b', 2)]), vec!['a', 'b', 'a', 'b']);
        assert_eq!(interleave(&[('a', 3), ('b', 1)]), vec!['a', 'a', 'b', 'a']);
        let seq = interleave(&[('a', 30), ('b', 18), ('r', 24)]);
        assert_eq!(seq.len(), 72);
        assert_eq!(seq.iter().filter(|c| **c == 'b').count(), 18);
    }

    #[test]
    fn shared_slots_are_not_allocatable() {
        let mut s = Schedule::new(frame());
        s.add_shared_slot(0);
        let pool: BTreeSet<u16> = [0, 1].into();
        let cells = s.allocate_cells(NodeId(3), NodeId(1), 1, &pool, None, 0).unwrap();
        assert_eq!(cells[0].slot_offset, 1);
        let acts = s.advance_slot(&[NodeId(9)], 0);
        assert!(matches!(acts[0].1, SlotAction::Listen { kind: CellKind::SharedBroadcast, .. }));
    }

    #[test]
    fn hopping_visits_every_channel() {
        let f = frame();
        for ch_off in 0..f.num_channels {
            let mut seen = BTreeSet::new();
            for cycle in 0..f.num_channels as u64 {
                seen.insert(f.physical_channel(cycle * f.length as u64 + 3, ch_off));
            }
            assert_eq!(seen.len(), f.num_channels as usize);
        }
    }

    #[test]
    fn bernoulli_delivery() {
        let mut m = LinkModel::new();
        m.set(NodeId(1), NodeId(2), 1.0).unwrap();
        m.set(NodeId(2), NodeId(1), 0.0).unwrap();
        m.set(NodeId(3), NodeId(1), 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for asn in 0..100 {
            assert_eq!(attempt_transmission(&m, NodeId(1), NodeId(2), asn, &mut rng).unwrap(), TxOutcome::Delivered);
            assert_eq!(attempt_transmission(&m, NodeId(2), NodeId(1), asn, &mut rng).unwrap(), TxOutcome::Lost);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hits = (0..10_000)
            .filter(|&a| attempt_transmission(&m, NodeId(3), NodeId(1), a, &mut rng).unwrap() == TxOutcome::Delivered)
            .count();
        assert!((hits as f64 / 10_000.0 - 0.8).abs() <= 0.01, "rate {}", hits);
        assert!(matches!(
            attempt_transmission(&m, NodeId(5), NodeId(1), 0, &mut rng),
            Err(TschError::UnknownLink { .. })
        ));
    }

    #[test]
    fn deterministic_outcomes_per_seed() {
        let mut m = LinkModel::new();
        m.set(NodeId(3), NodeId(1), 0.5).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..256).map(|a| attempt_transmission(&m, NodeId(3), NodeId(1), a, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn overrides_apply_from_asn() {
        let mut m = LinkModel::new();
        m.set(NodeId(3), NodeId(1), 0.9).unwrap();
        m.override_from(NodeId(3), NodeId(1), 100, 0.5).unwrap();
        assert_eq!(m.p_effective(NodeId(3), NodeId(1), 99).unwrap(), 0.9);
        assert_eq!(m.p_effective(NodeId(3), NodeId(1), 100).unwrap(), 0.5);
        assert!(m.set(NodeId(3), NodeId(1), 1.5).is_err());
    }

    #[test]
    fn estimator_arithmetic() {
        let e = update_link_estimate(LinkEstimator::new(0.1), TxOutcome::Lost);
        assert!((e.ewma - 0.9).abs() < 1e-12);
        assert_eq!((e.tx_count, e.ack_count), (1, 0));
        let mut e = LinkEstimator::new(1.0);
        e.update(TxOutcome::Lost);
        assert_eq!(e.ewma, 0.0);
        assert_eq!(e.l_est(), MIN_LINK_ESTIMATE);
        e.update(TxOutcome::Delivered);
        assert_eq!(e.ewma, 1.0);
    }

    #[test]
    fn estimator_converges() {
        let mut m = LinkModel::new();
        m.set(NodeId(3), NodeId(1), 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut e = LinkEstimator::default();
        let mut tail = 0.0;
        for a in 0..2000 {
            e.update(attempt_transmission(&m, NodeId(3), NodeId(1), a, &mut rng).unwrap());
            if a >= 1000 {
                tail += e.ewma;
            }
        }
        let mean = tail / 1000.0;
        assert!((mean - 0.8).abs() <= 0.03, "mean ewma {mean}");
        let ratio = e.ack_count as f64 / e.tx_count as f64;
        assert!((ratio - 0.8).abs() < 0.05);
    }

    #[test]
    fn dump_format() {
        let mut s = Schedule::new(frame());
        s.allocate_cells(NodeId(3), NodeId(1), 1, &[4].into(), None, 12).unwrap();
        let dump = s.dump_csv();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "asn_installed,owner,peer,slot,channel,kind");
        assert!(lines.contains(&"12,1,3,4,1,rx"));
        assert!(lines.contains(&"12,3,1,4,1,tx"));
    }
}
