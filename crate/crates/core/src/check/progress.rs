//! Bounded progress probe: a solo-run stand-in for lock-freedom.

use crate::sched::{Quantum, Simulation};
use crate::sim::exec::Execution;
use crate::sim::step::{Object, StepKind};
use crate::sim::value::ThreadId;

/// Whether `thread`, running alone from the end of `exec`, completes its
/// pending set operation within `budget` steps. False when nothing is pending.
pub fn bounded_progress_probe(exec: &Execution, thread: ThreadId, budget: usize) -> bool {
    let Ok(mut sim) = Simulation::resume(exec) else {
        return false;
    };
    let pending = sim
        .with_config(|c| c.threads.get(thread.index()).is_some_and(|t| t.open.iter().any(|(o, _)| *o == Object::Set)));
    if !pending {
        return false;
    }
    for _ in 0..budget {
        match sim.step(thread) {
            Quantum::Stepped(_) => {
                let done = sim.last_step().is_some_and(|s| matches!(s.kind, StepKind::Return { obj: Object::Set, .. }));
                if done {
                    return true;
                }
            }
            _ => return false,
        }
    }
    false
}
