//! Checkers over recorded executions.

pub mod access;
pub mod audit;
pub mod history;
pub mod progress;
pub mod robust;
pub mod safety;
mod violation;

pub use access::check_access_aware;
pub use audit::{check_integration, check_replacements};
pub use history::{check_linearizable_set, check_well_formed, LinError};
pub use progress::bounded_progress_probe;
pub use robust::{check_bound, robustness_series, Bound, RobustnessSeries};
pub use safety::{check_smr_safety, classify_access, Access};
pub use violation::{Violation, ViolationKind};

use crate::sim::step::{Object, OpName, Step, StepKind};
use crate::sim::value::Loc;

/// Who a step belongs to, from the point of view of the integrated program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// A step of the data structure itself: outside every scheme operation,
    /// or the replaced access inside a read/write/cas replacement.
    Plain,
    /// Internal work of a scheme operation.
    Scheme,
}

/// Tracks open operations per thread while walking an execution in order.
#[derive(Clone, Debug, Default)]
pub(crate) struct Scopes {
    open: Vec<Vec<(Object, OpName, Option<Loc>)>>,
}

impl Scopes {
    fn stack(&mut self, step: &Step) -> &mut Vec<(Object, OpName, Option<Loc>)> {
        let i = step.thread.index();
        if self.open.len() <= i {
            self.open.resize(i + 1, Vec::new());
        }
        &mut self.open[i]
    }

    /// Innermost open operation of the step's thread, before the step.
    pub fn top(&mut self, step: &Step) -> Option<(Object, OpName, Option<Loc>)> {
        self.stack(step).last().copied()
    }

    /// Classifies `step`, then accounts for it. Call once per step, in order.
    pub fn advance(&mut self, step: &Step) -> Scope {
        let scope = match self.top(step) {
            Some((Object::Smr, op, Some(replaced))) if op.is_access_replacement() => match step.kind.loc() {
                Some(loc) if same_location(loc, &replaced) => Scope::Plain,
                _ => Scope::Scheme,
            },
            Some((Object::Smr, ..)) => Scope::Scheme,
            _ => Scope::Plain,
        };
        match &step.kind {
            StepKind::Invoke { obj, op, loc, .. } => self.stack(step).push((*obj, *op, *loc)),
            StepKind::Return { .. } => {
                self.stack(step).pop();
            }
            _ => {}
        }
        scope
    }
}

/// Same physical location reached through the same logical node.
pub(crate) fn same_location(a: &Loc, b: &Loc) -> bool {
    a.physical() == b.physical() && a.via().map(|r| r.target) == b.via().map(|r| r.target)
}
