//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use era_lab::check::{check_access_aware, check_bound, check_smr_safety, robustness_series, Bound, ViolationKind};
use era_lab::list::PhaseAnnotation;
use era_lab::scenario::{self, analyze, figure1, figure2, fuzz_run, FuzzConfig, SchemeSpec};
use era_lab::sim::config::Policy;
use era_lab::sim::exec::Execution;
use era_lab::sim::step::{Object, OpName, StepKind};
use era_lab::sim::value::{Addr, NodeId, PhysLoc, RefWord, StepIndex, ThreadId, Value};
use era_lab::smr::Scheme;
use era_lab::trace;

type Verdict = Result<String, String>;

/// References derived so far, and per configuration which of them are valid.
type Validity = (Vec<(StepIndex, RefWord)>, Vec<Vec<bool>>);
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn key_of(exec: &Execution, node: NodeId) -> Option<i64> {
    exec.steps
        .iter()
        .find_map(|s| match s.kind {
            StepKind::Alloc { node: n, key, .. } if n == node => Some(key),
            _ => None,
        })
        .or_else(|| exec.initial.node_key(node))
}

/// Index of the configuration right after `t`'s last set response.
fn last_set_return(exec: &Execution, t: ThreadId) -> Option<StepIndex> {
    exec.steps
        .iter()
        .rev()
        .find(|s| s.thread == t && matches!(s.kind, StepKind::Return { obj: Object::Set, .. }))
        .map(|s| s.index)
}

fn figure1_hp() -> Verdict {
    let start = Instant::now();
    let e = figure1(Scheme::hp_default(2), 64, 2, Policy::Recycle)?;
    let v = check_smr_safety(&e);
    let elapsed = start.elapsed();
    let i_n = last_set_return(&e, ThreadId(2)).ok_or("T2 never finished")?;
    let hit = v
        .iter()
        .find(|v| v.kind == ViolationKind::UnsafeDeref && v.thread == ThreadId(1) && v.step > i_n)
        .ok_or("no unsafe dereference by T1 in its solo-run")?;
    let key = hit.node.and_then(|n| key_of(&e, n)).ok_or("violation names no allocated node")?;
    ensure((1..=64).contains(&key), format!("reclaimed node has key {key}"))?;
    ensure(
        e.steps[hit.step - 1].thread == ThreadId(1)
            && e.config_at(hit.step - 1).node_state(hit.node.unwrap()) == era_lab::sim::config::NodeState::Unallocated,
        "target was not reclaimed at the access",
    )?;
    ensure(figure1(Scheme::hp_default(2), 64, 2, Policy::Recycle)? == e, "second run differs")?;
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("step {} on key {key}, {elapsed:.2?}", hit.step))
}

fn figure1_ebr() -> Verdict {
    let n = 100;
    let e = figure1(Scheme::Ebr, n, 2, Policy::Recycle)?;
    let s = robustness_series(&e);
    let i_n = last_set_return(&e, ThreadId(2)).ok_or("T2 never finished")?;
    if let Some(i) = (0..s.len()).find(|&i| s.max_active[i] > 4) {
        return Err(format!("max_active({i}) = {}", s.max_active[i]));
    }
    ensure(s.retired[i_n] == n as usize, format!("retired(C_{i_n}) = {}", s.retired[i_n]))?;
    Ok(format!("retired(C_{i_n}) = {}, max_active <= 4 over {} configurations", s.retired[i_n], s.len()))
}

fn figure2_hp() -> Verdict {
    let scheme = Scheme::Hp { k: era_lab::smr::HP_DEFAULT_K, r: 1 };
    let e = figure2(scheme, Policy::Recycle)?;
    let node43 = e
        .steps
        .iter()
        .find_map(|s| match s.kind {
            StepKind::Alloc { node, key: 43, .. } => Some(node),
            _ => None,
        })
        .ok_or("43 never allocated")?;
    let v = check_smr_safety(&e);
    let hit = v.iter().find(|v| v.kind == ViolationKind::UnsafeDeref).ok_or("no unsafe dereference")?;
    ensure(hit.thread == ThreadId(1), format!("first unsafe dereference by {}", hit.thread))?;
    ensure(hit.node == Some(node43), "first unsafe dereference is not node 43")?;
    let StepKind::Read { loc, .. } = &e.steps[hit.step - 1].kind else {
        return Err("violation is not at a read".into());
    };
    let addr43 = loc.via().ok_or("not a field access")?.addr;
    // The protect-validate that handed T1 the marked reference to 43.
    let validated = e.steps[..hit.step - 1].iter().rev().find_map(|s| match &s.kind {
        StepKind::Return { obj: Object::Smr, op: OpName::Read, val: Value::Ref(r) } if s.thread == ThreadId(1) => {
            Some(*r)
        }
        _ => None,
    });
    ensure(
        validated.is_some_and(|r| r.mark && r.target == node43 && r.addr == addr43),
        "T1's last protected read is not a marked reference to 43",
    )?;
    ensure(figure2(scheme, Policy::Recycle)? == e, "second run differs")?;
    Ok(format!("step {} at address {addr43}", hit.step))
}

fn ebr_fuzz() -> Verdict {
    let start = Instant::now();
    let per = 2500;
    let mut runs = 0;
    let mut bad = 0;
    for n in 1..=4u64 {
        let cfg = FuzzConfig::new(SchemeSpec::named("ebr"), n as usize, 10, 8);
        let seeds = (n - 1) * per..n * per;
        let counts: Vec<usize> = seeds
            .into_par_iter()
            .map(|seed| {
                let e = fuzz_run(&cfg, seed).unwrap();
                check_smr_safety(&e).len()
            })
            .collect();
        runs += counts.len();
        bad += counts.iter().sum::<usize>();
    }
    let elapsed = start.elapsed();
    ensure(runs == 10_000, format!("{runs} runs"))?;
    ensure(bad == 0, format!("{bad} safety or life-cycle violations"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{runs} runs, 0 violations, {elapsed:.2?}"))
}

fn hp_bound() -> Verdict {
    let k = era_lab::smr::HP_DEFAULT_K;
    let mut checked = 0usize;
    let mut peak = 0;
    for n in 1..=4usize {
        let r = 2 * n * k as usize + 1;
        let cfg = FuzzConfig::new(SchemeSpec { hp_r: Some(r), ..SchemeSpec::named("hp") }, n, 10, 8);
        let results: Vec<Result<(usize, usize), String>> = (0..500u64)
            .into_par_iter()
            .map(|seed| {
                let e = fuzz_run(&cfg, seed)?;
                let s = robustness_series(&e);
                if let Some(i) = (0..s.len()).find(|&i| s.retired[i] > n * r) {
                    return Err(format!("N={n} seed {seed}: retired({i}) = {} > {}", s.retired[i], n * r));
                }
                check_bound(&s, Bound::Constant(r)).map_err(|v| v.to_string())?;
                Ok((s.len(), s.peak_retired()))
            })
            .collect();
        for res in results {
            let (len, p) = res?;
            checked += len;
            peak = peak.max(p);
        }
    }
    Ok(format!("2000 runs, {checked} configurations, peak retired {peak}"))
}

fn phases() -> Verdict {
    let ann = PhaseAnnotation::harris();
    let mut total = 0;
    for name in ["none", "ebr"] {
        let bad: Vec<String> = (0..1000u64)
            .into_par_iter()
            .filter_map(|seed| {
                let n = 1 + (seed % 4) as usize;
                let e = fuzz_run(&FuzzConfig::new(SchemeSpec::named(name), n, 10, 8), seed).unwrap();
                check_access_aware(&e, &ann).first().map(|v| format!("{name} seed {seed}: {v}"))
            })
            .collect();
        ensure(bad.is_empty(), bad.first().cloned().unwrap_or_default())?;
        total += 1000;
    }
    Ok(format!("{total} runs (plain and ebr), 0 phase violations"))
}

/// Chain-rule validity computed from scratch: a reference is valid at
/// `C_x` iff its address was not reclaimed between the allocation its
/// derivation chain starts from and `x`. Uses addresses, provenance and
/// step indices only.
fn chain_oracle(e: &Execution) -> Result<Validity, String> {
    let mut births: HashMap<StepIndex, StepIndex> = HashMap::new();
    let mut shadow: HashMap<PhysLoc, (Addr, StepIndex)> = HashMap::new();
    let mut addr_of: HashMap<NodeId, Addr> = HashMap::new();
    let mut reclaims: HashMap<Addr, Vec<StepIndex>> = HashMap::new();
    for (id, rec) in &e.initial.nodes {
        addr_of.insert(*id, rec.addr);
    }
    let birth = |births: &HashMap<StepIndex, StepIndex>, r: &RefWord| -> Result<StepIndex, String> {
        let o = r.origin.ok_or_else(|| format!("reference to {} has no provenance", r.addr))?;
        births.get(&o).copied().ok_or_else(|| format!("step {o} produced no reference"))
    };
    let mut derived = Vec::new();
    for s in &e.steps {
        let i = s.index;
        match &s.kind {
            StepKind::Alloc { node, addr, .. } => {
                births.insert(i, i);
                addr_of.insert(*node, *addr);
                shadow.retain(|l, _| !matches!(l, PhysLoc::Field(a, _) if a == addr));
                derived.push((i, RefWord::new(*addr, *node).with_origin(i)));
            }
            StepKind::Read { loc, val: Value::Ref(r) } => {
                let b = match shadow.get(&loc.physical()) {
                    Some(&(a, b)) => {
                        if a != r.addr {
                            return Err(format!("step {i}: shadow holds {a}, read saw {}", r.addr));
                        }
                        b
                    }
                    None => 0,
                };
                births.insert(i, b);
                derived.push((i, *r));
            }
            StepKind::Write { loc, new: Value::Ref(r), .. }
            | StepKind::Cas { loc, new: Value::Ref(r), success: true, .. } => {
                shadow.insert(loc.physical(), (r.addr, birth(&births, r)?));
            }
            StepKind::Write { loc, .. } | StepKind::Cas { loc, success: true, .. } => {
                shadow.remove(&loc.physical());
            }
            StepKind::Reclaim { node } => {
                let a = *addr_of.get(node).ok_or("reclaim of an unknown node")?;
                reclaims.entry(a).or_default().push(i);
            }
            _ => {}
        }
    }
    let mut table = Vec::new();
    for x in 0..=e.len() {
        let row = derived
            .iter()
            .filter(|(at, _)| *at <= x)
            .map(|(_, r)| {
                let b = birth(&births, r)?;
                Ok(!reclaims.get(&r.addr).is_some_and(|v| v.iter().any(|&c| b < c && c <= x)))
            })
            .collect::<Result<Vec<bool>, String>>()?;
        table.push(row);
    }
    Ok((derived, table))
}

fn validity() -> Verdict {
    let schemes = [Scheme::None, Scheme::Ebr, Scheme::Hp { k: 3, r: 1 }, Scheme::Ibr { a: 1 }];
    let results: Vec<Result<(usize, usize), String>> = (0..500u64)
        .into_par_iter()
        .map(|seed| {
            let threads = 2 + (seed % 3) as usize;
            let policy = if seed % 2 == 0 { Policy::Recycle } else { Policy::Release };
            let scheme = schemes[(seed / 2 % 4) as usize];
            let e = common::random_run_with(scheme, policy, seed, threads, 6, 4, 200);
            if e.len() > 200 {
                return Err(format!("seed {seed}: {} steps", e.len()));
            }
            let (derived, table) = chain_oracle(&e).map_err(|m| format!("seed {seed}: {m}"))?;
            let (mut checks, mut invalid) = (0, 0);
            for (x, cfg) in e.configs().iter().enumerate() {
                for ((_, r), want) in derived.iter().zip(&table[x]) {
                    if cfg.is_valid(r) != *want {
                        return Err(format!("seed {seed}: C_{x} disagrees on {r:?}"));
                    }
                    checks += 1;
                    invalid += usize::from(!want);
                }
            }
            Ok((checks, invalid))
        })
        .collect();
    let (mut checks, mut invalid) = (0, 0);
    for r in results {
        let (c, i) = r?;
        checks += c;
        invalid += i;
    }
    ensure(invalid > 0, "no invalid reference was ever exercised")?;
    Ok(format!("500 runs, {checks} comparisons, {invalid} of them invalid"))
}

fn linearizability() -> Verdict {
    let start = Instant::now();
    let failures: Vec<String> = (0..500u64)
        .into_par_iter()
        .filter_map(|seed| {
            let (threads, ops) = if seed % 2 == 0 { (2, 3) } else { (3, 2) };
            let cfg = FuzzConfig::new(SchemeSpec::named("ebr"), threads, ops, 4);
            let e = fuzz_run(&cfg, seed).unwrap();
            let calls = e.steps.iter().filter(|s| matches!(s.kind, StepKind::Invoke { obj: Object::Set, .. })).count();
            match era_lab::check::check_linearizable_set(&e.history(), 6) {
                Ok(true) if calls <= 6 => None,
                Ok(true) => Some(format!("seed {seed}: {calls} operations")),
                other => Some(format!("seed {seed}: {other:?}")),
            }
        })
        .collect();
    let elapsed = start.elapsed();
    ensure(failures.is_empty(), failures.first().cloned().unwrap_or_default())?;
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("500 histories linearizable, {elapsed:.2?}"))
}

fn determinism() -> Verdict {
    let mut runs: Vec<Execution> = Vec::new();
    for s in [Scheme::None, Scheme::Ebr, Scheme::hp_default(2), Scheme::Ibr { a: 1 }] {
        runs.push(figure1(s, 64, 2, Policy::Recycle)?);
    }
    for s in [Scheme::Hp { k: 3, r: 1 }, Scheme::Ibr { a: 1 }, Scheme::Ibr { a: 3 }] {
        runs.push(figure2(s, Policy::Recycle)?);
    }
    for name in ["none", "ebr", "hp", "ibr"] {
        let cfg = FuzzConfig::new(SchemeSpec::named(name), 3, 6, 6);
        for seed in 0..50 {
            runs.push(fuzz_run(&cfg, seed)?);
        }
    }
    let bad: Vec<String> = runs
        .par_iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let text = trace::emit(e);
            let replayed = match scenario::replay(&text) {
                Ok(r) => r,
                Err(err) => return Some(format!("run {i}: {err}")),
            };
            let again = trace::emit(&trace::parse(&text).ok()?);
            if analyze(e).to_string() != replayed.to_string() {
                Some(format!("run {i}: report differs after replay"))
            } else if again != text {
                Some(format!("run {i}: re-emitted trace differs"))
            } else {
                None
            }
        })
        .collect();
    ensure(bad.is_empty(), bad.first().cloned().unwrap_or_default())?;
    let fresh = fuzz_run(&FuzzConfig::new(SchemeSpec::named("ibr"), 3, 6, 6), 7)?;
    ensure(trace::emit(&fresh) == trace::emit(&runs[7 + 150 + 7]), "rerun of a seed differs")?;
    Ok(format!("{} runs replay to identical reports", runs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("figure 1 under hp: unsafe dereference by T1", figure1_hp),
        ("figure 1 under ebr: n retired, max_active <= 4", figure1_ebr),
        ("figure 2 under hp: T1 dereferences reclaimed 43", figure2_hp),
        ("ebr fuzz: 10000 runs without safety violations", ebr_fuzz),
        ("hp with R = 2NK+1: retired <= N*R", hp_bound),
        ("access-aware checker: no phase violations", phases),
        ("is_valid agrees with the chain-rule oracle", validity),
        ("small ebr workloads are linearizable", linearizability),
        ("emit and replay give identical reports", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}. {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
