//! Three-stage task processing against an exhaustive search.
//!
//! Scoring: an executor must cover the task's capabilities. Sets with fewer
//! recruited mobiles win; among those, the set whose members sorted by
//! (coverage desc, battery desc, load asc, id asc) is lexicographically
//! smallest wins. Slots are checked before capabilities.

use std::cmp::Ordering;

use monaas::model::{CapabilitySet, LeaderDomain, NodeId, NodeState, Priority, QoS, Task, TimeWindow};
use monaas::scheduler::{
    process_task, CandidateScore, FailureReason, JoinOffer, LeaderContext, ResourcePool, RootPool, TaskOutcome,
};
use monaas::sim::suite::FRAME;
use monaas::tsch::Schedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 200;
const T_SF: f64 = 2.02;
const LEADER: NodeId = NodeId(1);

#[derive(Clone, Debug)]
struct Instance {
    task: Task,
    members: Vec<(NodeId, NodeState)>,
    offers: Vec<JoinOffer>,
    pool: Vec<u16>,
    root_free: Vec<u16>,
    l_est: f64,
}

#[derive(Debug, PartialEq)]
enum Expect {
    Success(Vec<NodeId>),
    Failure(FailureReason),
}

fn caps(rng: &mut ChaCha8Rng) -> CapabilitySet {
    CapabilitySet::from_bits(rng.gen_range(0u8..8))
}

fn state(rng: &mut ChaCha8Rng, c: CapabilitySet) -> NodeState {
    NodeState {
        battery: [0.3, 0.6, 0.9][rng.gen_range(0..3)],
        queue_len: rng.gen_range(0..3),
        zone: 1,
        capabilities: c,
    }
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(1..=4);
    let n_members = rng.gen_range(0..=n);
    let mut members = Vec::new();
    let mut offers = Vec::new();
    for i in 0..n {
        let id = NodeId(3 + i as u16);
        let c = caps(rng);
        let s = state(rng, c);
        if i < n_members {
            members.push((id, s));
        } else {
            offers.push(JoinOffer { node: id, caps: c, state: s });
        }
    }
    let pool_len = rng.gen_range(0..=8);
    let root_len = rng.gen_range(0..=8 - pool_len);
    let task = Task {
        id: 1,
        priority: [Priority::Low, Priority::Medium, Priority::High, Priority::Critical][rng.gen_range(0..4)],
        qos: QoS::new(2000, [0.5, 0.9][rng.gen_range(0..2)]).unwrap(),
        c_req: CapabilitySet::from_bits(rng.gen_range(1u8..8)),
        zone: 1,
        window: TimeWindow::new(0, 1000).unwrap(),
        rate: [0.1, 0.25, 0.5][rng.gen_range(0..3)],
        min_nodes: rng.gen_range(1..=2),
    };
    Instance {
        task,
        members,
        offers,
        pool: (10..10 + pool_len as u16).collect(),
        root_free: (30..30 + root_len as u16).collect(),
        l_est: [0.5, 0.8, 1.0][rng.gen_range(0..3)],
    }
}

fn req_slots(inst: &Instance) -> usize {
    let t = &inst.task;
    // an empty domain has no links to discount
    let l_est = if inst.members.is_empty() { 1.0 } else { inst.l_est };
    let raw = t.rate * T_SF * (t.qos.pdr_min / l_est) * t.priority.level() as f64;
    (raw - 1e-9).ceil().max(1.0) as usize
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect()
}

fn brute_force(inst: &Instance) -> Expect {
    let k = inst.task.min_nodes as usize;
    let need = req_slots(inst) * k;
    if need > inst.pool.len() && need - inst.pool.len() > inst.root_free.len() {
        return Expect::Failure(FailureReason::Slots);
    }
    let need_caps = inst.task.c_req;
    // (node, caps, state, recruited)
    let mut cands: Vec<(NodeId, CapabilitySet, NodeState, bool)> =
        inst.members.iter().map(|(n, s)| (*n, s.capabilities, *s, false)).collect();
    let mut seen: Vec<NodeId> = cands.iter().map(|c| c.0).collect();
    for o in &inst.offers {
        if !seen.contains(&o.node) {
            seen.push(o.node);
            cands.push((o.node, o.caps, o.state, true));
        }
    }
    let score = |i: usize| CandidateScore::new(cands[i].0, cands[i].1, &cands[i].2, need_caps);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for s in subsets(cands.len(), k) {
        if !s.iter().all(|&i| cands[i].1.covers(need_caps)) {
            continue;
        }
        let mobiles = s.iter().filter(|&&i| cands[i].3).count();
        let mut order = s.clone();
        order.sort_by(|a, b| score(*a).rank(&score(*b)));
        let better = match &best {
            None => true,
            Some((m, o)) => {
                mobiles < *m
                    || (mobiles == *m
                        && order
                            .iter()
                            .zip(o)
                            .map(|(a, b)| score(*a).rank(&score(*b)))
                            .find(|c| *c != Ordering::Equal)
                            == Some(Ordering::Less))
            }
        };
        if better {
            best = Some((mobiles, order));
        }
    }
    match best {
        None => Expect::Failure(FailureReason::Capability),
        Some((_, order)) => Expect::Success(order.into_iter().map(|i| cands[i].0).collect()),
    }
}

fn run(inst: &Instance) -> Expect {
    let domain = LeaderDomain::new(LEADER, inst.members.iter().map(|(n, _)| *n));
    let leader_pool = ResourcePool::new(inst.pool.iter().copied());
    let mut ctx = LeaderContext::new(LEADER, domain, leader_pool.clone(), T_SF);
    for (n, s) in &inst.members {
        ctx.states.insert(*n, *s);
        ctx.link_est.insert(*n, inst.l_est);
    }
    let global: Vec<u16> = inst.pool.iter().chain(&inst.root_free).copied().collect();
    let mut root = RootPool::new(global, &[&leader_pool]);
    let mut schedule = Schedule::new(FRAME);
    let offers = inst.offers.clone();
    let mut recruiter = |_: &Task, _: CapabilitySet| offers.clone();
    let report = process_task(&inst.task, &mut ctx, &mut schedule, &mut root, &mut recruiter, 0);
    match report.outcome {
        TaskOutcome::Success(a) => Expect::Success(a.executors),
        TaskOutcome::Failure(r) => Expect::Failure(r),
    }
}

#[test]
fn process_task_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0A16);
    let mut mismatches = Vec::new();
    let (mut ok, mut slots, mut capability) = (0, 0, 0);
    for i in 0..INSTANCES {
        let inst = instance(&mut rng);
        let want = brute_force(&inst);
        let got = run(&inst);
        match &want {
            Expect::Success(_) => ok += 1,
            Expect::Failure(FailureReason::Slots) => slots += 1,
            Expect::Failure(FailureReason::Capability) => capability += 1,
        }
        if got != want {
            mismatches.push(format!("instance {i}: want {want:?} got {got:?}\n{inst:#?}"));
        }
    }
    println!("oracle: {INSTANCES} instances, {ok} success, {slots} slot failures, {capability} capability failures");
    assert!(ok > 20 && slots > 10 && capability > 10, "instance mix too narrow");
    assert!(mismatches.is_empty(), "{} mismatches\n{}", mismatches.len(), mismatches.join("\n"));
}
