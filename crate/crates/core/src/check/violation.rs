use std::fmt;
use std::str::FromStr;

use crate::sim::value::{NodeId, StepIndex, ThreadId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    /// An unsafe access that breaks at least one of the three conditions
    /// under which unsafe accesses are tolerated.
    UnsafeDeref,
    /// Unsafe access to memory outside program space.
    SpaceViolation,
    /// Unsafe access that changed the content of the accessed memory.
    ContentMutation,
    /// A value produced by an unsafe access was used.
    TaintUse,
    LifeCycle,
    WellFormedness,
    NotLinearizable,
    PhaseViolation,
    BoundExceeded,
}

const NAMES: &[(ViolationKind, &str)] = &[
    (ViolationKind::UnsafeDeref, "UnsafeDeref"),
    (ViolationKind::SpaceViolation, "SpaceViolation"),
    (ViolationKind::ContentMutation, "ContentMutation"),
    (ViolationKind::TaintUse, "TaintUse"),
    (ViolationKind::LifeCycle, "LifeCycle"),
    (ViolationKind::WellFormedness, "WellFormedness"),
    (ViolationKind::NotLinearizable, "NotLinearizable"),
    (ViolationKind::PhaseViolation, "PhaseViolation"),
    (ViolationKind::BoundExceeded, "BoundExceeded"),
];

impl ViolationKind {
    pub fn all() -> impl Iterator<Item = ViolationKind> {
        NAMES.iter().map(|(k, _)| *k)
    }

    /// Kinds produced by the safety checker.
    pub fn is_safety(self) -> bool {
        matches!(
            self,
            ViolationKind::UnsafeDeref
                | ViolationKind::SpaceViolation
                | ViolationKind::ContentMutation
                | ViolationKind::TaintUse
        )
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(NAMES.iter().find(|(k, _)| k == self).unwrap().1)
    }
}

impl FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NAMES.iter().find(|(_, n)| *n == s).map(|(k, _)| *k).ok_or_else(|| format!("unknown violation kind `{s}`"))
    }
}

/// A finding, anchored at the step whose replay reproduces it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: StepIndex,
    pub thread: ThreadId,
    pub node: Option<NodeId>,
    pub detail: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, step: StepIndex, thread: ThreadId, detail: impl Into<String>) -> Self {
        Violation { kind, step, thread, node: None, detail: detail.into() }
    }

    pub fn on(mut self, node: NodeId) -> Self {
        self.node = Some(node);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at step {} by {}", self.kind, self.step, self.thread)?;
        if let Some(n) = self.node {
            write!(f, " on {n}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Orders findings by step, then kind.
pub(crate) fn sort(v: &mut [Violation]) {
    v.sort_by_key(|v| (v.step, v.kind));
}
