//! Workloads, schedules, and the engine that interleaves thread programs.

use std::cell::RefCell;
use std::fmt;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::str::FromStr;
use std::task::{Context, Poll, Waker};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::list::thread_program;
pub use crate::list::SetOp;
use crate::sim::config::Configuration;
use crate::sim::ctx::{Ctx, Machine};
use crate::sim::exec::{Execution, RunMeta};
use crate::sim::step::Step;
use crate::sim::value::{StepIndex, ThreadId};

/// Per-thread scripts of set operations; `threads[0]` belongs to `T1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Workload {
    pub threads: Vec<Vec<SetOp>>,
}

impl Workload {
    pub fn new(threads: Vec<Vec<SetOp>>) -> Self {
        Workload { threads }
    }

    pub fn ops(&self, t: ThreadId) -> &[SetOp] {
        self.threads.get(t.index()).map_or(&[], |v| v.as_slice())
    }

    pub fn total_ops(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }

    /// Random workload: `ops` operations per thread over keys `1..=keys`.
    pub fn random(seed: u64, threads: usize, ops: usize, keys: i64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_f0b5);
        let threads = (0..threads)
            .map(|_| {
                (0..ops)
                    .map(|_| {
                        let key = rng.gen_range(1..=keys);
                        match rng.gen_range(0..3) {
                            0 => SetOp::insert(key),
                            1 => SetOp::delete(key),
                            _ => SetOp::contains(key),
                        }
                    })
                    .collect()
            })
            .collect();
        Workload { threads }
    }
}

/// `T<k>: op(key); op(key)` per line. Threads missing from the text get no
/// operations.
impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut threads: Vec<Vec<SetOp>> = Vec::new();
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| format!("line {}: {m}", n + 1);
            let (head, body) = line.split_once(':').ok_or_else(|| err("missing `:`".into()))?;
            let k: usize = head
                .trim()
                .strip_prefix('T')
                .and_then(|d| d.parse().ok())
                .filter(|k| *k >= 1)
                .ok_or_else(|| err(format!("bad thread `{head}`")))?;
            if threads.len() < k {
                threads.resize(k, Vec::new());
            }
            for part in body.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                threads[k - 1].push(part.parse().map_err(err)?);
            }
        }
        Ok(Workload { threads })
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ops) in self.threads.iter().enumerate() {
            let body: Vec<String> = ops.iter().map(SetOp::to_string).collect();
            writeln!(f, "T{}: {}", i + 1, body.join("; "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    Explicit(Vec<ThreadId>),
    Random { seed: u64, len: usize },
}

impl Schedule {
    pub fn threads(&self, n: usize) -> Result<Vec<ThreadId>, String> {
        match self {
            Schedule::Explicit(v) => Ok(v.clone()),
            Schedule::Random { seed, len } => random_schedule(*seed, *len, n),
        }
    }
}

/// Whitespace-separated thread ids (`T1 2 T3`) or `@seed:<n> @len:<n>`.
impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        if words.iter().any(|w| w.starts_with('@')) {
            let mut seed = None;
            let mut len = None;
            for w in words {
                if let Some(v) = w.strip_prefix("@seed:") {
                    seed = Some(v.parse().map_err(|_| format!("bad seed `{v}`"))?);
                } else if let Some(v) = w.strip_prefix("@len:") {
                    len = Some(v.parse().map_err(|_| format!("bad length `{v}`"))?);
                } else {
                    return Err(format!("unexpected `{w}` in generated schedule"));
                }
            }
            return match (seed, len) {
                (Some(seed), Some(len)) => Ok(Schedule::Random { seed, len }),
                _ => Err("generated schedule needs both @seed and @len".into()),
            };
        }
        words
            .iter()
            .map(|w| {
                w.trim_start_matches('T')
                    .parse::<u16>()
                    .ok()
                    .filter(|k| *k >= 1)
                    .map(ThreadId)
                    .ok_or_else(|| format!("bad thread id `{w}`"))
            })
            .collect::<Result<_, _>>()
            .map(Schedule::Explicit)
    }
}

/// Uniform pseudorandom thread sequence, reproducible from `seed`.
pub fn random_schedule(seed: u64, length: usize, threads: usize) -> Result<Vec<ThreadId>, String> {
    if length == 0 || threads == 0 {
        return Err("schedule length and thread count must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..length).map(|_| ThreadId::from_index(rng.gen_range(0..threads))).collect())
}

/// Outcome of offering one quantum to a thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantum {
    Stepped(StepIndex),
    /// The thread has nothing left to run; no step was recorded.
    Skipped,
    /// The step just taken accessed system space; the run is over.
    Fatal(StepIndex),
    /// An earlier fatal access ended the run.
    Halted,
}

type Program = Pin<Box<dyn Future<Output = ()>>>;

/// A live run: the machine plus one suspended program per thread.
pub struct Simulation {
    meta: RunMeta,
    initial: Configuration,
    machine: Rc<RefCell<Machine>>,
    programs: Vec<Option<Program>>,
}

impl Simulation {
    pub fn new(meta: RunMeta) -> Self {
        let initial = Configuration::initial(&meta.init_spec());
        let machine = Rc::new(RefCell::new(Machine::new(initial.clone())));
        let programs = (0..meta.threads)
            .map(|i| {
                let t = ThreadId::from_index(i);
                let ops = meta.workload.ops(t).to_vec();
                let cx = Ctx::new(t, meta.scheme, machine.clone());
                let p: Program = Box::pin(thread_program(cx, ops));
                Some(p)
            })
            .collect();
        Simulation { meta, initial, machine, programs }
    }

    pub fn meta(&self) -> &RunMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.machine.borrow().steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fatal(&self) -> Option<StepIndex> {
        self.machine.borrow().fatal
    }

    pub fn is_done(&self, t: ThreadId) -> bool {
        self.programs.get(t.index()).is_none_or(Option::is_none)
    }

    pub fn all_done(&self) -> bool {
        self.programs.iter().all(Option::is_none)
    }

    pub fn last_step(&self) -> Option<Step> {
        self.machine.borrow().steps.last().cloned()
    }

    /// Current configuration.
    pub fn config(&self) -> Configuration {
        self.machine.borrow().cfg.clone()
    }

    pub fn with_config<R>(&self, f: impl FnOnce(&Configuration) -> R) -> R {
        f(&self.machine.borrow().cfg)
    }

    /// Lets `t` take exactly one step.
    pub fn step(&mut self, t: ThreadId) -> Quantum {
        if self.fatal().is_some() {
            return Quantum::Halted;
        }
        let Some(slot) = self.programs.get_mut(t.index()) else {
            return Quantum::Skipped;
        };
        let Some(program) = slot.as_mut() else {
            return Quantum::Skipped;
        };
        let before = self.machine.borrow().steps.len();
        let mut cx = Context::from_waker(Waker::noop());
        if let Poll::Ready(()) = program.as_mut().poll(&mut cx) {
            *slot = None;
        }
        let m = self.machine.borrow();
        debug_assert!(m.steps.len() <= before + 1, "a poll issued more than one step");
        if m.steps.len() == before {
            return Quantum::Skipped;
        }
        let index = m.steps.len();
        match m.fatal {
            Some(f) if f == index => Quantum::Fatal(index),
            _ => Quantum::Stepped(index),
        }
    }

    /// Follows `schedule` for at most `limit` recorded steps.
    pub fn run(&mut self, schedule: &[ThreadId], limit: usize) {
        let start = self.len();
        for &t in schedule {
            if self.len() - start >= limit {
                break;
            }
            if matches!(self.step(t), Quantum::Fatal(_) | Quantum::Halted) {
                break;
            }
        }
    }

    /// Schedules only `t` until it finishes, a fatal access happens, or
    /// `limit` steps were taken. Returns the number of steps taken.
    pub fn solo_run(&mut self, t: ThreadId, limit: usize) -> usize {
        let mut taken = 0;
        while taken < limit {
            match self.step(t) {
                Quantum::Stepped(_) => taken += 1,
                Quantum::Fatal(_) => return taken + 1,
                Quantum::Skipped | Quantum::Halted => break,
            }
        }
        taken
    }

    /// Runs `t` until `stop` holds for the step it just took. Returns false if
    /// the thread finished, the run halted, or `limit` was hit first.
    pub fn run_until(
        &mut self,
        t: ThreadId,
        limit: usize,
        mut stop: impl FnMut(&Step, &Configuration) -> bool,
    ) -> bool {
        for _ in 0..limit {
            match self.step(t) {
                Quantum::Stepped(_) => {
                    let m = self.machine.borrow();
                    if stop(m.steps.last().unwrap(), &m.cfg) {
                        return true;
                    }
                }
                _ => return false,
            }
        }
        false
    }

    /// Snapshot of the run so far.
    pub fn execution(&self) -> Execution {
        Execution { meta: self.meta.clone(), initial: self.initial.clone(), steps: self.machine.borrow().steps.clone() }
    }

    pub fn into_execution(self) -> Execution {
        let steps = std::mem::take(&mut self.machine.borrow_mut().steps);
        Execution { meta: self.meta, initial: self.initial, steps }
    }

    /// Rebuilds the live run that produced `exec` by re-issuing its thread
    /// sequence. Fails if the engine does not reproduce the recorded steps.
    pub fn resume(exec: &Execution) -> Result<Self, String> {
        let mut sim = Simulation::new(exec.meta.clone());
        for step in &exec.steps {
            match sim.step(step.thread) {
                Quantum::Stepped(_) | Quantum::Fatal(_) => {}
                q => return Err(format!("step {}: replay got {q:?}", step.index)),
            }
            if sim.last_step().as_ref() != Some(step) {
                return Err(format!("step {} diverges on replay", step.index));
            }
        }
        Ok(sim)
    }
}

/// Runs `workload` under `schedule` for at most `limit` steps.
pub fn run(meta: RunMeta, schedule: &[ThreadId], limit: usize) -> Execution {
    let mut sim = Simulation::new(meta);
    sim.run(schedule, limit);
    sim.into_execution()
}

/// Extends `exec` with a solo-run of `thread`.
pub fn solo_run(exec: &Execution, thread: ThreadId, limit: usize) -> Result<Execution, String> {
    let mut sim = Simulation::resume(exec)?;
    sim.solo_run(thread, limit);
    Ok(sim.into_execution())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::step::{Object, OpName, StepKind};
    use crate::smr::Scheme;

    #[test]
    fn random_schedules_are_reproducible() {
        let a = random_schedule(0, 10, 2).unwrap();
        assert_eq!(a, random_schedule(0, 10, 2).unwrap());
        assert_ne!(random_schedule(0, 64, 2).unwrap(), random_schedule(1, 64, 2).unwrap());
        assert!(random_schedule(0, 0, 2).is_err());
    }

    #[test]
    fn schedule_file_formats() {
        assert_eq!(
            "T1 2 T2".parse::<Schedule>().unwrap(),
            Schedule::Explicit(vec![ThreadId(1), ThreadId(2), ThreadId(2)])
        );
        assert_eq!("@seed:4 @len:9".parse::<Schedule>().unwrap(), Schedule::Random { seed: 4, len: 9 });
        assert!("@seed:4".parse::<Schedule>().is_err());
        assert!("T0".parse::<Schedule>().is_err());
    }

    #[test]
    fn workload_file_round_trip() {
        let w: Workload = "T1: insert(3); delete(3)\n# comment\nT3: contains(1)\n".parse().unwrap();
        assert_eq!(w.threads.len(), 3);
        assert!(w.threads[1].is_empty());
        assert_eq!(w.to_string().parse::<Workload>().unwrap(), w);
        assert!("T1 insert(3)".parse::<Workload>().is_err());
    }

    #[test]
    fn empty_workload_records_nothing() {
        let meta = RunMeta::new(Scheme::Ebr, 2, Workload::default());
        let exec = run(meta, &random_schedule(3, 50, 2).unwrap(), 100);
        assert!(exec.is_empty());
    }

    #[test]
    fn limit_leaves_operations_pending() {
        let w = Workload::new(vec![vec![SetOp::insert(1)]]);
        let exec = run(RunMeta::new(Scheme::None, 1, w), &[ThreadId(1); 50], 3);
        assert_eq!(exec.len(), 3);
        let h = exec.history();
        assert!(matches!(h.events[0].kind, StepKind::Invoke { obj: Object::Set, op: OpName::Insert, .. }));
        assert!(!h.events.iter().any(|e| matches!(e.kind, StepKind::Return { obj: Object::Set, .. })));
    }

    #[test]
    fn finished_threads_are_skipped() {
        let w = Workload::new(vec![vec![SetOp::contains(1)], vec![]]);
        let mut sim = Simulation::new(RunMeta::new(Scheme::None, 2, w));
        assert_eq!(sim.step(ThreadId(2)), Quantum::Skipped);
        assert!(sim.solo_run(ThreadId(1), 1000) > 0);
        assert!(sim.is_done(ThreadId(1)));
        let n = sim.len();
        assert_eq!(sim.step(ThreadId(1)), Quantum::Skipped);
        assert_eq!(sim.solo_run(ThreadId(1), 10), 0);
        assert_eq!(sim.len(), n);
    }
}
