//! Checkers compared against independent brute-force oracles.

mod common;

use std::collections::{BTreeSet, HashSet};

use era_lab::check::check_linearizable_set;
use era_lab::check::history::check_linearizable_from;
use era_lab::list::SetOp;
use era_lab::sched::{Simulation, Workload};
use era_lab::sim::config::Policy;
use era_lab::sim::exec::{Execution, History, RunMeta};
use era_lab::sim::step::{Object, OpName, Site, Step, StepKind};
use era_lab::sim::value::{NodeId, RefWord, ThreadId, Value};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nodes alive after each step, from allocation and reclamation events only.
/// Sentinels and prefilled nodes take the first identities.
fn validity_oracle(exec: &Execution) -> Vec<HashSet<NodeId>> {
    let mut live: HashSet<NodeId> = (1..=2 + exec.meta.prefill.len() as u64).map(NodeId).collect();
    let mut out = vec![live.clone()];
    for s in &exec.steps {
        match s.kind {
            StepKind::Alloc { node, .. } => {
                live.insert(node);
            }
            StepKind::Reclaim { node } => {
                live.remove(&node);
            }
            _ => {}
        }
        out.push(live.clone());
    }
    out
}

#[test]
fn validity_matches_oracle_on_random_runs() {
    for seed in 0..60 {
        for name in ["ebr", "hp", "ibr"] {
            let e = common::random_run(name, seed, 3, 6, 5, 300);
            let oracle = validity_oracle(&e);
            let max = e.steps.iter().filter_map(|s| match s.kind {
                StepKind::Alloc { node, .. } => Some(node.0),
                _ => None,
            });
            let max = max.max().unwrap_or(0).max(2 + e.meta.prefill.len() as u64) + 1;
            for (i, cfg) in e.configs().iter().enumerate() {
                for id in 1..=max {
                    let r = RefWord::new(0, NodeId(id));
                    assert_eq!(cfg.is_valid(&r), oracle[i].contains(&NodeId(id)), "{name} seed {seed} C_{i} node {id}");
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Call {
    op: OpName,
    key: i64,
    inv: usize,
    ret: Option<(usize, bool)>,
}

fn calls_of(h: &History) -> Vec<Call> {
    let mut calls: Vec<Call> = Vec::new();
    let mut open = std::collections::HashMap::new();
    for e in &h.events {
        match &e.kind {
            StepKind::Invoke { obj: Object::Set, op, args, .. } => {
                open.insert(e.thread, calls.len());
                calls.push(Call { op: *op, key: args[0].as_int().unwrap(), inv: e.index, ret: None });
            }
            StepKind::Return { obj: Object::Set, val, .. } => {
                let i = open.remove(&e.thread).unwrap();
                calls[i].ret = Some((e.index, val.as_int().unwrap() != 0));
            }
            _ => {}
        }
    }
    calls
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Tries every subset of pending calls and every order.
fn brute_force_linearizable(h: &History, initial: &[i64]) -> bool {
    let calls = calls_of(h);
    let done: Vec<usize> = (0..calls.len()).filter(|&i| calls[i].ret.is_some()).collect();
    let pending: Vec<usize> = (0..calls.len()).filter(|&i| calls[i].ret.is_none()).collect();
    for mask in 0..1u32 << pending.len() {
        let mut chosen = done.clone();
        chosen.extend(pending.iter().enumerate().filter(|(b, _)| mask & (1 << b) != 0).map(|(_, &i)| i));
        'perm: for p in permutations(&chosen) {
            // Real-time order: a call that returned before another was invoked comes first.
            for (x, &a) in p.iter().enumerate() {
                for &b in &p[x + 1..] {
                    if let Some((r, _)) = calls[b].ret {
                        if r < calls[a].inv {
                            continue 'perm;
                        }
                    }
                }
            }
            let mut set: BTreeSet<i64> = initial.iter().copied().collect();
            for &i in &p {
                let c = calls[i];
                let got = match c.op {
                    OpName::Insert => set.insert(c.key),
                    OpName::Delete => set.remove(&c.key),
                    _ => set.contains(&c.key),
                };
                if let Some((_, want)) = c.ret {
                    if want != got {
                        continue 'perm;
                    }
                }
            }
            return true;
        }
    }
    false
}

fn event(index: usize, t: u16, kind: StepKind) -> Step {
    Step { index, thread: ThreadId(t), site: Site::Boundary, kind, uses: vec![] }
}

/// A random well-formed history over three threads and two keys, with
/// arbitrary results so that plenty of them are not linearizable.
fn random_history(seed: u64) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut open: [Option<OpName>; 3] = [None; 3];
    let mut budget = rng.gen_range(1..=6);
    let mut index = 1;
    while budget > 0 || open.iter().any(Option::is_some) {
        let t = rng.gen_range(0..3);
        let kind = match open[t] {
            Some(op) => {
                if rng.gen_bool(0.1) && budget == 0 {
                    // Leave it pending.
                    open[t] = None;
                    continue;
                }
                open[t] = None;
                StepKind::Return { obj: Object::Set, op, val: Value::int(rng.gen_bool(0.5) as i64) }
            }
            None if budget > 0 => {
                budget -= 1;
                let op = [OpName::Insert, OpName::Delete, OpName::Contains][rng.gen_range(0..3)];
                open[t] = Some(op);
                StepKind::Invoke { obj: Object::Set, op, args: vec![Value::int(rng.gen_range(1..=2))], loc: None }
            }
            None => continue,
        };
        events.push(event(index, t as u16 + 1, kind));
        index += 1;
    }
    History { events }
}

#[test]
fn linearizability_agrees_with_brute_force_on_synthetic_histories() {
    let (mut yes, mut no) = (0, 0);
    for seed in 0..3000 {
        let h = random_history(seed);
        let expect = brute_force_linearizable(&h, &[]);
        assert_eq!(check_linearizable_set(&h, 8), Ok(expect), "seed {seed}: {:?}", h.events);
        if expect {
            yes += 1
        } else {
            no += 1
        }
    }
    assert!(yes > 100 && no > 100, "degenerate sample: {yes} yes, {no} no");
}

#[test]
fn linearizability_agrees_with_brute_force_on_executions() {
    for seed in 0..150 {
        for name in ["none", "ebr", "hp", "ibr"] {
            let mut e = common::random_run(name, seed, 3, 2, 3, 120);
            e.meta.prefill.clear();
            let h = e.history();
            assert_eq!(
                check_linearizable_from(&h, &[], 8),
                Ok(brute_force_linearizable(&h, &[])),
                "{name} seed {seed}"
            );
        }
    }
}

fn solo(scheme: &str, policy: Policy, ops: Vec<SetOp>, prefill: Vec<i64>) -> Execution {
    let meta = RunMeta { policy, prefill, ..RunMeta::new(common::scheme(scheme, 1), 1, Workload::new(vec![ops])) };
    let mut sim = Simulation::new(meta);
    sim.solo_run(ThreadId(1), 1_000_000);
    assert!(sim.is_done(ThreadId(1)));
    sim.into_execution()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// A single thread behaves exactly like a sequential set.
    #[test]
    fn sequential_runs_match_a_set(
        scheme in prop::sample::select(vec!["none", "ebr", "hp", "ibr"]),
        release in any::<bool>(),
        prefill in prop::collection::btree_set(1i64..10, 0..4),
        ops in prop::collection::vec((0u8..3, 1i64..10), 1..25),
    ) {
        let ops: Vec<SetOp> = ops.into_iter().map(|(o, k)| match o {
            0 => SetOp::insert(k),
            1 => SetOp::delete(k),
            _ => SetOp::contains(k),
        }).collect();
        let policy = if release { Policy::Release } else { Policy::Recycle };
        let e = solo(scheme, policy, ops.clone(), prefill.iter().copied().collect());
        let mut model: BTreeSet<i64> = prefill;
        let results: Vec<bool> = e.returns()
            .filter_map(|s| match &s.kind {
                StepKind::Return { obj: Object::Set, val, .. } => Some(val.as_int().unwrap() != 0),
                _ => None,
            })
            .collect();
        prop_assert_eq!(results.len(), ops.len());
        for (op, got) in ops.iter().zip(results) {
            let want = match op.op {
                OpName::Insert => model.insert(op.key),
                OpName::Delete => model.remove(&op.key),
                _ => model.contains(&op.key),
            };
            prop_assert_eq!(got, want, "{}", op);
        }
        let last = e.config_at(e.len());
        prop_assert_eq!(last.abstract_set(), model.into_iter().collect::<Vec<_>>());
    }
}
