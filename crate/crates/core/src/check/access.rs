//! Phase discipline of the data structure's own accesses.
//!
//! A reference `p` produced at step `i` is *j-permitted at `C_x`* when
//! - `i` allocated its node and the node is still local to its allocator at `C_x`,
//! - `i` read `p` from a global and `j <= i`, or
//! - `i` read `p` through `q`, `j < i`, and `q` was j-permitted at `C_{i-1}`.
//!
//! Within a read-only phase starting at `C_j`, dereferences must use
//! j-permitted references. Within a write phase starting at `C_j`, with the
//! last read-only phase starting at `C_t`, dereferences must use references
//! that were t-permitted at `C_j`, and shared writes are only allowed there.

use std::collections::HashMap;

use super::violation::{sort, Violation, ViolationKind};
use super::{Scope, Scopes};
use crate::list::{Phase, PhaseAnnotation};
use crate::sim::config::{Configuration, Fault, NodeState};
use crate::sim::exec::{Execution, Observer};
use crate::sim::step::{Step, StepKind};
use crate::sim::value::{Loc, NodeId, RefWord, StepIndex, ThreadId};

#[derive(Clone, Copy, Debug, Default)]
struct PhaseState {
    current: Option<(Phase, StepIndex)>,
    /// Start of the most recent read-only phase.
    t: StepIndex,
    /// Last plain step of the thread.
    last: StepIndex,
}

struct Checker<'a> {
    steps: &'a [Step],
    ann: &'a PhaseAnnotation,
    scopes: Scopes,
    threads: HashMap<ThreadId, PhaseState>,
    /// Allocation step of each node and the step that made it non-local.
    alloc_at: HashMap<NodeId, StepIndex>,
    left_local: HashMap<NodeId, StepIndex>,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn local_at(&self, node: NodeId, x: StepIndex) -> bool {
        match self.alloc_at.get(&node) {
            Some(&a) if a <= x => self.left_local.get(&node).is_none_or(|&l| x < l),
            _ => false,
        }
    }

    /// Whether `p` is j-permitted at `C_x`.
    fn permitted(&self, p: &RefWord, j: StepIndex, x: StepIndex) -> bool {
        let Some(i) = p.origin else {
            return false;
        };
        let Some(s) = self.steps.get(i.wrapping_sub(1)) else {
            return false;
        };
        match &s.kind {
            StepKind::Alloc { node, .. } => *node == p.target && self.local_at(*node, x),
            StepKind::Read { loc: Loc::Global(_), .. } => j <= i,
            StepKind::Read { loc: Loc::Field(q, _), .. } => j < i && self.permitted(q, j, i - 1),
            _ => false,
        }
    }

    fn flag(&mut self, step: &Step, detail: String) {
        self.out.push(Violation::new(ViolationKind::PhaseViolation, step.index, step.thread, detail));
    }

    fn check(&mut self, step: &Step) {
        let Some(loc) = step.kind.loc() else {
            return;
        };
        let m = step.index;
        let Some((phase, restart)) = self.ann.lookup(step.site) else {
            self.flag(step, format!("shared access at unannotated location {}", step.site));
            return;
        };
        let st = self.threads.entry(step.thread).or_default();
        let (j, t) = {
            let open_new = restart || st.current.map(|(p, _)| p) != Some(phase);
            if open_new {
                st.current = Some((phase, st.last));
                if phase == Phase::ReadOnly {
                    st.t = st.last;
                }
            }
            st.last = m;
            (st.current.unwrap().1, st.t)
        };
        let writes = matches!(step.kind, StepKind::Write { .. } | StepKind::Cas { .. });
        let Loc::Field(via, _) = *loc else {
            if writes && phase != Phase::Write {
                self.flag(step, format!("global write in read-only phase at {}", step.site));
            }
            return;
        };
        match (phase, writes) {
            (Phase::ReadOnly, false) => {
                if !(j < m && self.permitted(&via, j, m - 1)) {
                    self.flag(
                        step,
                        format!(
                            "read-only phase from {j}: {} dereferences a reference not obtained in the phase",
                            step.site
                        ),
                    );
                }
            }
            (Phase::ReadOnly, true) => {
                self.flag(step, format!("shared write in read-only phase at {}", step.site));
            }
            (Phase::Write, _) => {
                if !self.permitted(&via, t, j) {
                    let what = if writes { "writes through" } else { "reads through" };
                    self.flag(
                        step,
                        format!(
                            "write phase from {j}: {} {what} a reference not permitted since read-only phase {t}",
                            step.site
                        ),
                    );
                }
            }
        }
    }
}

impl Observer for Checker<'_> {
    fn before(&mut self, _cfg: &Configuration, step: &Step) {
        if self.scopes.advance(step) == Scope::Plain {
            self.check(step);
        }
    }

    fn after(&mut self, cfg: &Configuration, step: &Step, _faults: &[Fault]) {
        match step.kind {
            StepKind::Alloc { node, .. } => {
                self.alloc_at.insert(node, step.index);
            }
            _ => {
                // Only the step's own node can leave the local state.
                let touched = match &step.kind {
                    StepKind::Retire { node, .. } => Some(*node),
                    StepKind::Write { new, .. } | StepKind::Cas { new, .. } => new.as_ref().map(|r| r.target),
                    _ => None,
                };
                if let Some(n) = touched {
                    if self.alloc_at.contains_key(&n)
                        && !self.left_local.contains_key(&n)
                        && !matches!(cfg.node_state(n), NodeState::Local(_))
                    {
                        self.left_local.insert(n, step.index);
                    }
                }
            }
        }
    }
}

/// Phase violations of the plain accesses in `exec` under `ann`.
pub fn check_access_aware(exec: &Execution, ann: &PhaseAnnotation) -> Vec<Violation> {
    let mut c = Checker {
        steps: &exec.steps,
        ann,
        scopes: Scopes::default(),
        threads: HashMap::new(),
        alloc_at: HashMap::new(),
        left_local: HashMap::new(),
        out: Vec::new(),
    };
    exec.replay(&mut c);
    let mut out = c.out;
    sort(&mut out);
    out
}
