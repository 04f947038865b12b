use super::config::{Configuration, Fault, InitSpec, Policy};
use super::step::{Step, StepKind};
use super::value::StepIndex;
use crate::sched::Workload;
use crate::smr::Scheme;

/// Parameters that, together with the thread sequence, determine a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMeta {
    pub scheme: Scheme,
    pub policy: Policy,
    pub threads: usize,
    pub prefill: Vec<i64>,
    pub workload: Workload,
    pub seed: Option<u64>,
    /// Scenario tag, e.g. `figure1:n=64`.
    pub scenario: Option<String>,
}

impl RunMeta {
    pub fn new(scheme: Scheme, threads: usize, workload: Workload) -> Self {
        RunMeta {
            scheme,
            policy: Policy::default(),
            threads,
            prefill: Vec::new(),
            workload,
            seed: None,
            scenario: None,
        }
    }

    pub fn init_spec(&self) -> InitSpec {
        InitSpec {
            threads: self.threads,
            policy: self.policy,
            prefill: self.prefill.clone(),
            scheme_globals: self.scheme.initial_globals(self.threads),
            initial_node_fields: self.scheme.initial_node_fields(),
        }
    }
}

/// `C_0 · s_1 · C_1 · ...` stored as the initial configuration plus steps;
/// later configurations are re-derived by applying steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub meta: RunMeta,
    pub initial: Configuration,
    pub steps: Vec<Step>,
}

impl Execution {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Configuration `C_i`.
    pub fn config_at(&self, i: StepIndex) -> Configuration {
        let mut cfg = self.initial.clone();
        for step in &self.steps[..i.min(self.steps.len())] {
            cfg.apply(step);
        }
        cfg
    }

    /// All configurations `C_0 ..= C_n`. Intended for short executions.
    pub fn configs(&self) -> Vec<Configuration> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut cfg = self.initial.clone();
        out.push(cfg.clone());
        for step in &self.steps {
            cfg.apply(step);
            out.push(cfg.clone());
        }
        out
    }

    /// Replays every step through `obs` and returns all life-cycle faults.
    pub fn replay(&self, obs: &mut impl Observer) -> Vec<Fault> {
        let mut faults = Vec::new();
        let mut cfg = self.initial.clone();
        obs.initial(&cfg);
        for step in &self.steps {
            obs.before(&cfg, step);
            let f = cfg.apply(step);
            obs.after(&cfg, step, &f);
            faults.extend(f);
        }
        faults
    }

    pub fn history(&self) -> History {
        History { events: self.steps.iter().filter(|s| s.kind.is_history_event()).cloned().collect() }
    }

    /// The step index of the fatal access that aborted the run, if any.
    pub fn aborted_at(&self) -> Option<StepIndex> {
        let mut cfg = self.initial.clone();
        for step in &self.steps {
            if let Some(loc) = step.kind.loc() {
                if let Some(via) = loc.via() {
                    if cfg.space_of(via.addr) == super::config::Space::System {
                        return Some(step.index);
                    }
                }
            }
            cfg.apply(step);
        }
        None
    }

    pub fn threads_of_steps(&self) -> Vec<super::value::ThreadId> {
        self.steps.iter().map(|s| s.thread).collect()
    }

    pub fn returns(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| matches!(s.kind, StepKind::Return { .. }))
    }
}

/// Invocation and response steps of an execution, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    pub events: Vec<Step>,
}

/// Visitor over a replayed execution.
pub trait Observer {
    fn initial(&mut self, _cfg: &Configuration) {}
    /// Called with `C_{i-1}` before step `i` is applied.
    fn before(&mut self, _cfg: &Configuration, _step: &Step) {}
    /// Called with `C_i` and the faults step `i` raised.
    fn after(&mut self, _cfg: &Configuration, _step: &Step, _faults: &[Fault]) {}
}
