//! Access classification and the safety check.
//!
//! An access is unsafe when the reference it dereferences is invalid in the
//! configuration before the step. An unsafe access is tolerated only if the
//! memory is in program space, its content is not changed, and nothing read
//! by it is ever used. Uses are tracked by taint: every value carries the
//! step index of the unsafe access it descends from.

use std::collections::{BTreeMap, BTreeSet};

use super::violation::{sort, Violation, ViolationKind};
use crate::sim::config::{Configuration, Fault, Space};
use crate::sim::exec::{Execution, Observer};
use crate::sim::step::{Object, Step, StepKind};
use crate::sim::value::{NodeId, StepIndex, Taint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Safe,
    Unsafe,
}

/// Classifies a dereferencing step against the configuration before it.
/// Steps that dereference nothing are safe.
pub fn classify_access(step: &Step, before: &Configuration) -> Access {
    match step.kind.loc().and_then(|l| l.via()) {
        Some(via) if !before.is_valid(&via) => Access::Unsafe,
        _ => Access::Safe,
    }
}

/// Origins of unsafe values consumed by a step, with a description of how.
pub(crate) fn uses_of(step: &Step) -> Vec<(StepIndex, &'static str)> {
    let mut out: Vec<(StepIndex, &'static str)> = step.uses.iter().map(|o| (*o, "branch")).collect();
    let mut add = |t: Taint, how| {
        if let Some(o) = t.0 {
            out.push((o, how));
        }
    };
    if let Some(via) = step.kind.loc().and_then(|l| l.via()) {
        add(via.taint, "dereference");
    }
    match &step.kind {
        StepKind::Write { new, .. } => add(new.taint(), "stored value"),
        StepKind::Cas { expected, new, .. } => {
            add(expected.taint(), "CAS operand");
            add(new.taint(), "CAS operand");
        }
        StepKind::Return { obj: Object::Set, val, .. } => add(val.taint(), "operation result"),
        StepKind::Retire { via, .. } => add(via.taint, "retired reference"),
        _ => {}
    }
    out
}

#[derive(Default)]
struct Safety {
    /// Unsafe accesses: step -> (thread, node).
    unsafe_at: BTreeMap<StepIndex, (crate::sim::value::ThreadId, NodeId)>,
    failed: BTreeSet<StepIndex>,
    out: Vec<Violation>,
    uses: Vec<(StepIndex, crate::sim::value::ThreadId, StepIndex, &'static str)>,
    keys: BTreeMap<NodeId, i64>,
}

impl Safety {
    fn describe(&self, node: NodeId) -> String {
        match self.keys.get(&node) {
            Some(k) => format!("{node} (key {k})"),
            None => node.to_string(),
        }
    }
}

impl Observer for Safety {
    fn initial(&mut self, cfg: &Configuration) {
        for n in cfg.nodes.keys() {
            if let Some(k) = cfg.node_key(*n) {
                self.keys.insert(*n, k);
            }
        }
    }

    fn before(&mut self, cfg: &Configuration, step: &Step) {
        if let StepKind::Alloc { node, key, .. } = step.kind {
            self.keys.insert(node, key);
        }
        for (origin, how) in uses_of(step) {
            self.uses.push((step.index, step.thread, origin, how));
        }
        if classify_access(step, cfg) == Access::Safe {
            return;
        }
        let loc = *step.kind.loc().unwrap();
        let via = loc.via().unwrap();
        let what = self.describe(via.target);
        self.unsafe_at.insert(step.index, (step.thread, via.target));
        if cfg.space_of(via.addr) == Space::System {
            self.failed.insert(step.index);
            self.out.push(
                Violation::new(
                    ViolationKind::SpaceViolation,
                    step.index,
                    step.thread,
                    format!("access to {what} hits system space at {}", step.site),
                )
                .on(via.target),
            );
        }
        let mutates = match &step.kind {
            StepKind::Write { .. } => true,
            StepKind::Cas { success, .. } => *success,
            _ => false,
        };
        if mutates {
            self.failed.insert(step.index);
            self.out.push(
                Violation::new(
                    ViolationKind::ContentMutation,
                    step.index,
                    step.thread,
                    format!("update through invalid reference to {what} at {}", step.site),
                )
                .on(via.target),
            );
        }
    }
}

/// All safety findings of an execution, plus life-cycle faults, ordered by
/// step then kind. Empty iff every access is safe or tolerably unsafe.
pub fn check_smr_safety(exec: &Execution) -> Vec<Violation> {
    let mut s = Safety::default();
    let faults = exec.replay(&mut s);
    let mut out = std::mem::take(&mut s.out);
    let mut first_use: BTreeMap<StepIndex, (StepIndex, &'static str)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (at, thread, origin, how) in &s.uses {
        let Some((_, node)) = s.unsafe_at.get(origin) else {
            continue;
        };
        if !seen.insert((*at, *origin)) {
            continue;
        }
        first_use.entry(*origin).or_insert((*at, how));
        out.push(
            Violation::new(
                ViolationKind::TaintUse,
                *at,
                *thread,
                format!("{how} uses the value of unsafe step {origin}"),
            )
            .on(*node),
        );
        s.failed.insert(*origin);
    }
    for origin in &s.failed {
        let (thread, node) = s.unsafe_at[origin];
        let mut why = Vec::new();
        if out.iter().any(|v| v.step == *origin && v.kind == ViolationKind::SpaceViolation) {
            why.push("system space".to_string());
        }
        if out.iter().any(|v| v.step == *origin && v.kind == ViolationKind::ContentMutation) {
            why.push("content updated".to_string());
        }
        if let Some((at, how)) = first_use.get(origin) {
            why.push(format!("value used at step {at} ({how})"));
        }
        let site = exec.steps[origin - 1].site;
        out.push(
            Violation::new(
                ViolationKind::UnsafeDeref,
                *origin,
                thread,
                format!("dereference of reclaimed {} at {site}: {}", s.describe(node), why.join(", ")),
            )
            .on(node),
        );
    }
    out.extend(faults.into_iter().map(fault_violation));
    sort(&mut out);
    out
}

pub(crate) fn fault_violation(f: Fault) -> Violation {
    let v = Violation::new(ViolationKind::LifeCycle, f.step, f.thread, f.what);
    match f.node {
        Some(n) => v.on(n),
        None => v,
    }
}
