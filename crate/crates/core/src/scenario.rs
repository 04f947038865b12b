//! Scripted executions, seeded fuzzing, and the per-run report.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::check::{
    self, check_access_aware, check_bound, check_smr_safety, check_well_formed, robustness_series, Bound,
    RobustnessSeries, Violation, ViolationKind,
};
use crate::list::{PhaseAnnotation, SetOp};
use crate::sched::{random_schedule, Simulation, Workload};
use crate::sim::config::Policy;
use crate::sim::exec::{Execution, RunMeta};
use crate::sim::step::{Object, OpName, Site, Step, StepKind};
use crate::sim::value::{NodeId, StepIndex, ThreadId};
use crate::smr::Scheme;

/// Budget of set operations for the exhaustive linearizability search.
pub const LIN_BUDGET: usize = 8;

/// Solo-run budget for the progress probe.
pub const PROBE_BUDGET: usize = 100_000;

/// Step budget for a single solo-run inside a script.
const SOLO_LIMIT: usize = 1_000_000;

/// What a run is expected to show.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expect {
    Clean,
    Violation,
    /// Either outcome is acceptable (schemes not applicable to the list).
    Either,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    ViolationFound { step: StepIndex, kind: ViolationKind, thread: ThreadId, node: Option<NodeId> },
}

/// Node counts at the end of T2's script in the `figure1` scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Figure1Point {
    pub index: StepIndex,
    pub retired: usize,
    pub active: usize,
    pub max_active: usize,
}

/// Everything a report says about one run. Derived only from the run's
/// parameters and steps, so a replayed trace yields the same report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioReport {
    pub meta: RunMeta,
    pub steps: usize,
    pub outcome: Outcome,
    pub expect: Expect,
    pub assertions: Vec<(String, bool)>,
    pub violations: Vec<Violation>,
    pub series: RobustnessSeries,
    pub hp_bound: Option<bool>,
    pub first_reclaimed: Option<(NodeId, Option<i64>, StepIndex)>,
    pub figure1: Option<Figure1Point>,
    pub well_formed: Result<(), String>,
    pub linearizable: Option<bool>,
    /// Threads left with a pending set operation, and whether a solo-run
    /// completed it within [`PROBE_BUDGET`] steps.
    pub progress: Vec<(ThreadId, bool)>,
    pub integration: Result<(), Vec<String>>,
    pub replacements: Result<(), Vec<String>>,
}

impl ScenarioReport {
    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn safety_violations(&self) -> usize {
        self.violations.iter().filter(|v| v.kind.is_safety()).count()
    }

    pub fn assertions_met(&self) -> bool {
        self.assertions.iter().all(|(_, ok)| *ok)
    }

    /// 0 = clean as expected, 2 = expected violation found, 3 = anything else.
    pub fn exit_code(&self) -> i32 {
        let found = matches!(self.outcome, Outcome::ViolationFound { .. });
        let ok = self.assertions_met()
            && match self.expect {
                Expect::Clean => !found,
                Expect::Violation => found,
                Expect::Either => true,
            };
        match (ok, found) {
            (true, false) => 0,
            (true, true) => 2,
            _ => 3,
        }
    }
}

fn scheme_params(s: Scheme) -> String {
    match s {
        Scheme::Hp { k, r } => format!("hp k={k} r={r}"),
        Scheme::Ibr { a } => format!("ibr a={a}"),
        other => other.name().to_string(),
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.meta;
        writeln!(f, "scenario: {}", m.scenario.as_deref().unwrap_or("run"))?;
        if m.scenario.as_deref().is_some_and(|s| s.starts_with("figure2")) {
            if let Scheme::Ibr { a } = m.scheme {
                writeln!(f, "note: {} filler insert(s) advance the epoch before node 43 is born", a - 1)?;
            }
        }
        writeln!(
            f,
            "scheme: {} | policy: {} | threads: {} | seed: {}",
            scheme_params(m.scheme),
            m.policy,
            m.threads,
            m.seed.map_or("-".to_string(), |s| s.to_string())
        )?;
        writeln!(f, "steps: {}", self.steps)?;
        match &self.outcome {
            Outcome::Clean => writeln!(f, "outcome: Clean")?,
            Outcome::ViolationFound { step, kind, thread, node } => {
                write!(f, "outcome: ViolationFound({kind} at step {step} by {thread}")?;
                if let Some(n) = node {
                    write!(f, " on {n}")?;
                }
                writeln!(f, ")")?;
            }
        }
        let expect = match self.expect {
            Expect::Clean => "clean",
            Expect::Violation => "violation",
            Expect::Either => "either",
        };
        writeln!(f, "expected: {expect} | exit code: {}", self.exit_code())?;
        for (what, ok) in &self.assertions {
            writeln!(f, "assert {}: {what}", if *ok { "ok  " } else { "FAIL" })?;
        }
        let mut counts: BTreeMap<ViolationKind, usize> = BTreeMap::new();
        for v in &self.violations {
            *counts.entry(v.kind).or_default() += 1;
        }
        if counts.is_empty() {
            writeln!(f, "violations: none")?;
        } else {
            let parts: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
            writeln!(f, "violations: {}", parts.join(" "))?;
            for v in self.violations.iter().take(5) {
                writeln!(f, "  {v}")?;
            }
            if self.violations.len() > 5 {
                writeln!(f, "  ... {} more", self.violations.len() - 5)?;
            }
        }
        let s = &self.series;
        let last = s.len().saturating_sub(1);
        writeln!(
            f,
            "robustness: active {}..{} retired {}..{} peak max_active={} final active={} final retired={} reclaimed={}",
            s.active.iter().min().copied().unwrap_or(0),
            s.active.iter().max().copied().unwrap_or(0),
            s.retired.iter().min().copied().unwrap_or(0),
            s.peak_retired(),
            s.peak_active(),
            s.active.get(last).copied().unwrap_or(0),
            s.retired.get(last).copied().unwrap_or(0),
            s.reclaimed.get(last).copied().unwrap_or(0),
        )?;
        if let (Some(ok), Scheme::Hp { r, .. }) = (self.hp_bound, m.scheme) {
            writeln!(f, "bound retired <= N*R = {}: {}", m.threads * r, if ok { "holds" } else { "broken" })?;
        }
        match self.first_reclaimed {
            Some((n, key, step)) => {
                write!(f, "first reclaimed: {n}")?;
                if let Some(k) = key {
                    write!(f, " (key {k})")?;
                }
                writeln!(f, " at step {step}")?;
            }
            None => writeln!(f, "first reclaimed: none")?,
        }
        if let Some(p) = self.figure1 {
            writeln!(
                f,
                "figure1 at C_{}: retired={} active={} max_active={} (N*max_active={})",
                p.index,
                p.retired,
                p.active,
                p.max_active,
                m.threads * p.max_active
            )?;
        }
        match &self.well_formed {
            Ok(()) => writeln!(f, "history: well-formed")?,
            Err(e) => writeln!(f, "history: malformed ({e})")?,
        }
        match self.linearizable {
            Some(true) => writeln!(f, "linearizable: yes")?,
            Some(false) => writeln!(f, "linearizable: NO")?,
            None => writeln!(f, "linearizable: skipped (over {LIN_BUDGET} operations)")?,
        }
        if self.progress.is_empty() {
            writeln!(f, "progress: every operation completed")?;
        }
        for (t, ok) in &self.progress {
            if *ok {
                writeln!(f, "progress: {t} completes alone; no bounded-probe failure observed")?;
            } else {
                writeln!(f, "progress: {t} did not complete alone within {PROBE_BUDGET} steps")?;
            }
        }
        match &self.integration {
            Ok(()) => writeln!(f, "integration: ok")?,
            Err(p) => writeln!(f, "integration: {} problem(s), first: {}", p.len(), p[0])?,
        }
        match &self.replacements {
            Ok(()) => writeln!(f, "replacements: ok")?,
            Err(p) => writeln!(f, "replacements: {} problem(s), first: {}", p.len(), p[0])?,
        }
        Ok(())
    }
}

fn scenario_kind(meta: &RunMeta) -> &str {
    meta.scenario.as_deref().map_or("run", |s| s.split(':').next().unwrap_or(s))
}

fn scenario_n(meta: &RunMeta) -> Option<i64> {
    meta.scenario.as_deref()?.split(':').find_map(|p| p.strip_prefix("n=")?.parse().ok())
}

fn expectation(meta: &RunMeta) -> Expect {
    match (scenario_kind(meta), meta.scheme) {
        ("figure2", _) => Expect::Violation,
        ("figure1", Scheme::Hp { .. } | Scheme::Ibr { .. }) => Expect::Violation,
        (_, Scheme::None | Scheme::Ebr) => Expect::Clean,
        _ => Expect::Either,
    }
}

/// Runs every checker over `exec` and summarises.
pub fn analyze(exec: &Execution) -> ScenarioReport {
    let meta = exec.meta.clone();
    let mut violations = check_smr_safety(exec);
    violations.extend(check_access_aware(exec, &PhaseAnnotation::harris()));
    let history = exec.history();
    let well_formed = check_well_formed(&history);
    if let Err(e) = &well_formed {
        violations.push(Violation::new(ViolationKind::WellFormedness, 0, ThreadId(0), e.clone()));
    }
    let linearizable = check::history::check_linearizable_from(&history, &meta.prefill, LIN_BUDGET).ok();
    if linearizable == Some(false) {
        violations.push(Violation::new(
            ViolationKind::NotLinearizable,
            exec.len(),
            ThreadId(0),
            "no linearization of the set history",
        ));
    }
    let progress = check::history::set_calls(&history)
        .unwrap_or_default()
        .iter()
        .filter(|c| c.returned.is_none())
        .map(|c| (c.thread, check::bounded_progress_probe(exec, c.thread, PROBE_BUDGET)))
        .collect();
    let series = robustness_series(exec);
    let hp_bound = match meta.scheme {
        Scheme::Hp { r, .. } => {
            let res = check_bound(&series, Bound::Constant(r));
            let ok = res.is_ok();
            if let Err(v) = res {
                violations.push(v);
            }
            Some(ok)
        }
        _ => None,
    };
    violations.sort_by_key(|v| (v.step, v.kind));

    let outcome =
        violations.iter().find(|v| v.kind == ViolationKind::UnsafeDeref).or_else(|| violations.first()).map_or(
            Outcome::Clean,
            |v| Outcome::ViolationFound { step: v.step, kind: v.kind, thread: v.thread, node: v.node },
        );

    let keys = node_keys(exec);
    let first_reclaimed = exec.steps.iter().find_map(|s| match s.kind {
        StepKind::Reclaim { node } => Some((node, keys.get(&node).copied(), s.index)),
        _ => None,
    });

    let figure1 = (scenario_kind(&meta) == "figure1")
        .then(|| {
            let i = exec
                .steps
                .iter()
                .rev()
                .find(|s| s.thread == ThreadId(2) && matches!(s.kind, StepKind::Return { obj: Object::Set, .. }))?
                .index;
            Some(Figure1Point {
                index: i,
                retired: series.retired[i],
                active: series.active[i],
                max_active: series.max_active[i],
            })
        })
        .flatten();

    let expect = expectation(&meta);
    let mut assertions = Vec::new();
    match (scenario_kind(&meta), expect) {
        ("figure1", Expect::Violation) => {
            let n = scenario_n(&meta).unwrap_or(0);
            let hit = violations.iter().find(|v| v.kind == ViolationKind::UnsafeDeref);
            let ok = hit.is_some_and(|v| {
                v.thread == ThreadId(1) && v.node.and_then(|n| keys.get(&n)).is_some_and(|k| (1..=n).contains(k))
            });
            assertions.push((format!("unsafe dereference by T1 of a reclaimed node with key in 1..={n}"), ok));
        }
        ("figure1", Expect::Clean) if meta.scheme == Scheme::Ebr => {
            let n = scenario_n(&meta).unwrap_or(0) as usize;
            let p = figure1;
            assertions.push((format!("retired at C_i_n equals n = {n}"), p.is_some_and(|p| p.retired == n)));
            assertions.push(("max_active <= 4 throughout".into(), series.peak_active() <= 4));
        }
        ("figure2", _) => {
            let hit = violations.iter().find(|v| v.kind == ViolationKind::UnsafeDeref);
            let ok = hit.is_some_and(|v| v.thread == ThreadId(1) && v.node.and_then(|n| keys.get(&n)) == Some(&43));
            assertions.push(("unsafe dereference by T1 of node 43's former memory".into(), ok));
        }
        _ => {}
    }

    ScenarioReport {
        steps: exec.len(),
        outcome,
        expect,
        assertions,
        violations,
        series,
        hp_bound,
        first_reclaimed,
        figure1,
        well_formed,
        linearizable,
        progress,
        integration: check::check_integration(exec),
        replacements: check::check_replacements(exec),
        meta,
    }
}

fn node_keys(exec: &Execution) -> BTreeMap<NodeId, i64> {
    let mut keys: BTreeMap<NodeId, i64> =
        exec.initial.nodes.keys().filter_map(|n| Some((*n, exec.initial.node_key(*n)?))).collect();
    for s in &exec.steps {
        if let StepKind::Alloc { node, key, .. } = s.kind {
            keys.insert(node, key);
        }
    }
    keys
}

/// True once `t` finished reading `head.next` at the start of a search:
/// the read (or its replacement) has returned into the set operation.
fn read_head_next(step: &Step, top: Option<&(Object, OpName)>) -> bool {
    step.site == Site::SearchPredNext
        && matches!(top, Some((Object::Set, _)))
        && matches!(step.kind, StepKind::Read { .. } | StepKind::Return { obj: Object::Smr, .. })
}

fn top_of(cfg: &crate::sim::config::Configuration, t: ThreadId) -> Option<(Object, OpName)> {
    cfg.threads.get(t.index()).and_then(|s| s.open.last().copied())
}

/// Builds the `figure1` execution: `T1` stalls right after reading
/// `head.next`, `T2` deletes its way through `1..=n`, then `T1` runs alone.
pub fn figure1(scheme: Scheme, n: i64, threads: usize, policy: Policy) -> Result<Execution, String> {
    if n < 2 {
        return Err("figure1 needs n >= 2".into());
    }
    if threads < 2 {
        return Err("figure1 needs at least 2 threads".into());
    }
    let mut t2 = vec![SetOp::delete(1), SetOp::insert(3), SetOp::delete(2)];
    for k in 3..=n {
        t2.push(SetOp::insert(k + 1));
        t2.push(SetOp::delete(k));
    }
    let mut ops = vec![vec![SetOp::delete(3)], t2];
    ops.resize(threads, Vec::new());
    let meta = RunMeta {
        policy,
        prefill: vec![1, 2],
        scenario: Some(format!("figure1:n={n}")),
        ..RunMeta::new(scheme, threads, Workload::new(ops))
    };
    let (t1, t2) = (ThreadId(1), ThreadId(2));
    let mut sim = Simulation::new(meta);
    if !sim.run_until(t1, SOLO_LIMIT, |s, c| read_head_next(s, top_of(c, t1).as_ref())) {
        return Err("T1 never read head.next".into());
    }
    sim.solo_run(t2, SOLO_LIMIT);
    sim.solo_run(t1, SOLO_LIMIT);
    Ok(sim.into_execution())
}

/// Builds the four-thread `figure2` execution. Under IBR with
/// period `a`, thread 2 first performs `a - 1` filler inserts so that node
/// 43 is born in a later epoch than thread 1's reservation.
pub fn figure2(scheme: Scheme, policy: Policy) -> Result<Execution, String> {
    let fillers = match scheme {
        Scheme::Hp { .. } => 0,
        Scheme::Ibr { a } => a.saturating_sub(1) as usize,
        other => return Err(format!("figure2 is defined for hp and ibr, not {other}")),
    };
    let mut t2 = vec![SetOp::insert(76); fillers];
    t2.push(SetOp::insert(43));
    t2.push(SetOp::delete(43));
    let ops = vec![vec![SetOp::insert(58)], t2, vec![SetOp::delete(15)], vec![SetOp::delete(44)]];
    let meta = RunMeta {
        policy,
        prefill: vec![15, 76],
        scenario: Some("figure2".into()),
        ..RunMeta::new(scheme, 4, Workload::new(ops))
    };
    let [t1, t2, t3, t4] = [1, 2, 3, 4].map(ThreadId);
    let mut sim = Simulation::new(meta);
    let marked = |s: &Step| s.site == Site::DeleteMark && matches!(s.kind, StepKind::Cas { success: true, .. });

    if !sim.run_until(t1, SOLO_LIMIT, |s, c| read_head_next(s, top_of(c, t1).as_ref())) {
        return Err("T1 never read head.next".into());
    }
    let mut inserted = 0;
    let want = fillers + 1;
    if !sim.run_until(t2, SOLO_LIMIT, |s, _| {
        if matches!(s.kind, StepKind::Return { obj: Object::Set, op: OpName::Insert, .. }) {
            inserted += 1;
        }
        inserted == want
    }) {
        return Err("T2 never finished insert(43)".into());
    }
    if !sim.run_until(t2, SOLO_LIMIT, |s, _| marked(s)) {
        return Err("T2 never marked node 43".into());
    }
    if !sim.run_until(t3, SOLO_LIMIT, |s, _| marked(s)) {
        return Err("T3 never marked node 15".into());
    }
    sim.solo_run(t4, SOLO_LIMIT);
    sim.solo_run(t3, SOLO_LIMIT);
    sim.solo_run(t2, SOLO_LIMIT);
    sim.solo_run(t1, SOLO_LIMIT);
    Ok(sim.into_execution())
}

/// Scheme name plus optional parameters; resolved per thread count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeSpec {
    pub name: String,
    pub hp_k: Option<u8>,
    pub hp_r: Option<usize>,
    pub ibr_a: Option<u64>,
}

impl SchemeSpec {
    pub fn named(name: &str) -> Self {
        SchemeSpec { name: name.into(), hp_k: None, hp_r: None, ibr_a: None }
    }

    pub fn build(&self, threads: usize) -> Result<Scheme, String> {
        Scheme::from_parts(&self.name, threads, self.hp_k, self.hp_r, self.ibr_a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzConfig {
    pub scheme: SchemeSpec,
    pub threads: usize,
    pub ops: usize,
    pub keys: i64,
    pub policy: Policy,
    /// Total step cap per run; threads that livelock are cut off here.
    pub step_cap: usize,
}

impl FuzzConfig {
    pub fn new(scheme: SchemeSpec, threads: usize, ops: usize, keys: i64) -> Self {
        FuzzConfig { scheme, threads, ops, keys, policy: Policy::Recycle, step_cap: 200_000 }
    }
}

/// One fuzz run: random workload, random interleaving, then every thread
/// drained alone in order.
pub fn fuzz_run(cfg: &FuzzConfig, seed: u64) -> Result<Execution, String> {
    let scheme = cfg.scheme.build(cfg.threads)?;
    if cfg.threads == 0 || cfg.ops == 0 || cfg.keys < 1 {
        return Err("fuzz needs threads, ops and keys to be positive".into());
    }
    let workload = Workload::random(seed, cfg.threads, cfg.ops, cfg.keys);
    let meta = RunMeta { policy: cfg.policy, seed: Some(seed), ..RunMeta::new(scheme, cfg.threads, workload) };
    let mut sim = Simulation::new(meta);
    let len = cfg.threads * cfg.ops * 40;
    let schedule = random_schedule(seed, len, cfg.threads)?;
    sim.run(&schedule, cfg.step_cap);
    for i in 0..cfg.threads {
        let left = cfg.step_cap.saturating_sub(sim.len());
        sim.solo_run(ThreadId::from_index(i), left);
    }
    Ok(sim.into_execution())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzSummary {
    pub runs: usize,
    pub violations: BTreeMap<ViolationKind, usize>,
    pub runs_with_violations: usize,
    pub first_failing_seed: Option<u64>,
    /// Largest peak-retired / peak-max-active ratio, as `(retired, max_active)`.
    pub worst_ratio: (usize, usize),
    pub lin_checked: usize,
    pub lin_failures: usize,
    pub bound_breaches: usize,
}

impl FuzzSummary {
    pub fn safety_violations(&self) -> usize {
        self.violations.iter().filter(|(k, _)| k.is_safety()).map(|(_, n)| n).sum()
    }

    fn add(&mut self, seed: u64, r: &ScenarioReport) {
        self.runs += 1;
        for v in &r.violations {
            *self.violations.entry(v.kind).or_default() += 1;
        }
        if !r.violations.is_empty() {
            self.runs_with_violations += 1;
            self.first_failing_seed = Some(self.first_failing_seed.map_or(seed, |s| s.min(seed)));
        }
        let (ret, act) = (r.series.peak_retired(), r.series.peak_active().max(1));
        let (wr, wa) = self.worst_ratio;
        if wa == 0 || ret * wa > wr * act {
            self.worst_ratio = (ret, act);
        }
        if let Some(l) = r.linearizable {
            self.lin_checked += 1;
            self.lin_failures += usize::from(!l);
        }
        if r.hp_bound == Some(false) {
            self.bound_breaches += 1;
        }
    }
}

impl fmt::Display for FuzzSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs: {}", self.runs)?;
        writeln!(f, "runs with violations: {}", self.runs_with_violations)?;
        if let Some(s) = self.first_failing_seed {
            writeln!(f, "first failing seed: {s}")?;
        }
        let mut line = String::from("violations:");
        if self.violations.is_empty() {
            line.push_str(" none");
        }
        for (k, n) in &self.violations {
            let _ = write!(line, " {k}={n}");
        }
        writeln!(f, "{line}")?;
        writeln!(f, "worst peak retired / max_active: {} / {}", self.worst_ratio.0, self.worst_ratio.1)?;
        writeln!(f, "linearizability: {} checked, {} failed", self.lin_checked, self.lin_failures)?;
        if self.bound_breaches > 0 {
            writeln!(f, "hp bound breaches: {}", self.bound_breaches)?;
        }
        Ok(())
    }
}

/// Fuzzes every seed in `seeds` in parallel and folds the reports in seed order.
pub fn fuzz(cfg: &FuzzConfig, seeds: std::ops::Range<u64>) -> Result<FuzzSummary, String> {
    if seeds.is_empty() {
        return Err("empty seed range".into());
    }
    let reports: Vec<(u64, ScenarioReport)> =
        seeds.into_par_iter().map(|seed| fuzz_run(cfg, seed).map(|e| (seed, analyze(&e)))).collect::<Result<_, _>>()?;
    let mut summary = FuzzSummary::default();
    for (seed, r) in &reports {
        summary.add(*seed, r);
    }
    Ok(summary)
}

/// Re-checks an emitted trace.
pub fn replay(text: &str) -> Result<ScenarioReport, crate::trace::TraceError> {
    Ok(analyze(&crate::trace::parse(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure1_under_none_is_clean() {
        let e = figure1(Scheme::None, 10, 2, Policy::Recycle).unwrap();
        let r = analyze(&e);
        assert_eq!(r.outcome, Outcome::Clean, "{r}");
        assert_eq!(r.exit_code(), 0);
        assert_eq!(r.first_reclaimed, None);
    }

    #[test]
    fn figure_parameters_are_validated() {
        assert!(figure1(Scheme::Ebr, 1, 2, Policy::Recycle).is_err());
        assert!(figure1(Scheme::Ebr, 5, 1, Policy::Recycle).is_err());
        assert!(figure2(Scheme::Ebr, Policy::Recycle).is_err());
    }

    #[test]
    fn fuzz_rejects_empty_ranges() {
        let cfg = FuzzConfig::new(SchemeSpec::named("ebr"), 2, 3, 4);
        assert!(fuzz(&cfg, 5..5).is_err());
    }
}
