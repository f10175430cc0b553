//! Allocates cells for three nodes from one pool and prints the slot by
//! channel matrix.

use std::collections::BTreeSet;

use monaas::model::NodeId;
use monaas::sim::suite::FRAME;
use monaas::tsch::{CellKind, Schedule};

fn main() {
    let mut s = Schedule::new(FRAME);
    for slot in (0..FRAME.length).step_by(4) {
        s.add_shared_slot(slot);
    }
    let pool: BTreeSet<u16> = (20..40).collect();
    let leader = NodeId(1);
    let owners = [(NodeId(3), 3), (NodeId(4), 2), (NodeId(5), 4)];
    s.allocate_many(&owners, leader, &pool, Some(1), 0).expect("pool is large enough");
    assert!(s.is_collision_free());

    let cells: Vec<_> = s.cells().filter(|c| c.kind == CellKind::TxUnicast).collect();
    let channels = cells.iter().map(|c| c.channel_offset).max().unwrap_or(0);
    print!("slot ");
    for ch in 0..=channels {
        print!(" ch{ch:<2}");
    }
    println!();
    for slot in 20..40 {
        print!("{slot:>4} ");
        for ch in 0..=channels {
            match cells.iter().find(|c| c.slot_offset == slot && c.channel_offset == ch) {
                Some(c) => print!(" n{:<3}", c.owner.0),
                None if s.is_shared(slot) => print!(" sh  "),
                None => print!(" .   "),
            }
        }
        println!();
    }
    println!("\n{}", s.dump_csv().lines().take(4).collect::<Vec<_>>().join("\n"));
}
