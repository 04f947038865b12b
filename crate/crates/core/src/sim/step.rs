use std::fmt;
use std::str::FromStr;

use super::value::{Addr, Loc, NodeId, RefWord, StepIndex, ThreadId, Value};

/// Program location that issued a step.
///
/// List locations follow the set algorithm line by line; steps issued from
/// inside a reclamation scheme operation carry the list location that called
/// the scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    /// Operation boundaries: invocations, responses, begin/end hooks.
    Boundary,
    SearchHead,
    SearchPredNext,
    SearchCurrNext,
    SearchLoopKey,
    SearchLoopNext,
    SearchAdjacent,
    SearchCas,
    SearchTmpNext,
    SearchPostCas,
    ContainsNext,
    ContainsKey,
    InsertAlloc,
    InsertKey,
    InsertRetire,
    InsertLink,
    InsertCas,
    DeleteKey,
    DeleteNext,
    DeleteMark,
    DeleteUnlink,
    DeleteRetire,
    /// Steps issued by hand-built programs (tests, synthetic traces).
    Custom(u8),
}

const SITE_NAMES: &[(Site, &str)] = &[
    (Site::Boundary, "op"),
    (Site::SearchHead, "search.head"),
    (Site::SearchPredNext, "search.pred_next"),
    (Site::SearchCurrNext, "search.curr_next"),
    (Site::SearchLoopKey, "search.loop_key"),
    (Site::SearchLoopNext, "search.loop_next"),
    (Site::SearchAdjacent, "search.adjacent"),
    (Site::SearchCas, "search.cas"),
    (Site::SearchTmpNext, "search.tmp_next"),
    (Site::SearchPostCas, "search.post_cas"),
    (Site::ContainsNext, "contains.next"),
    (Site::ContainsKey, "contains.key"),
    (Site::InsertAlloc, "insert.alloc"),
    (Site::InsertKey, "insert.key"),
    (Site::InsertRetire, "insert.retire"),
    (Site::InsertLink, "insert.link"),
    (Site::InsertCas, "insert.cas"),
    (Site::DeleteKey, "delete.key"),
    (Site::DeleteNext, "delete.next"),
    (Site::DeleteMark, "delete.mark"),
    (Site::DeleteUnlink, "delete.unlink"),
    (Site::DeleteRetire, "delete.retire"),
];

impl Site {
    pub fn all_list_sites() -> impl Iterator<Item = Site> {
        SITE_NAMES.iter().map(|(s, _)| *s).filter(|s| *s != Site::Boundary)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Site::Custom(n) = self {
            return write!(f, "custom.{n}");
        }
        let name = SITE_NAMES.iter().find(|(s, _)| s == self).map(|(_, n)| *n).expect("every named site is listed");
        f.write_str(name)
    }
}

impl FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("custom.") {
            return n.parse().map(Site::Custom).map_err(|_| format!("bad site `{s}`"));
        }
        SITE_NAMES.iter().find(|(_, n)| *n == s).map(|(site, _)| *site).ok_or_else(|| format!("unknown site `{s}`"))
    }
}

/// Objects whose operations appear in histories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Object {
    /// The set implemented by the list.
    Set,
    /// The reclamation scheme object.
    Smr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpName {
    Insert,
    Delete,
    Contains,
    BeginOp,
    EndOp,
    Alloc,
    Retire,
    Read,
    Write,
    Cas,
}

const OP_NAMES: &[(OpName, &str)] = &[
    (OpName::Insert, "insert"),
    (OpName::Delete, "delete"),
    (OpName::Contains, "contains"),
    (OpName::BeginOp, "begin_op"),
    (OpName::EndOp, "end_op"),
    (OpName::Alloc, "alloc"),
    (OpName::Retire, "retire"),
    (OpName::Read, "read"),
    (OpName::Write, "write"),
    (OpName::Cas, "cas"),
];

impl OpName {
    /// Scheme operations that stand in for a primitive memory access.
    pub fn is_access_replacement(self) -> bool {
        matches!(self, OpName::Read | OpName::Write | OpName::Cas)
    }
}

impl fmt::Display for OpName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = OP_NAMES.iter().find(|(o, _)| o == self).map(|(_, n)| *n).unwrap();
        f.write_str(name)
    }
}

impl FromStr for OpName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OP_NAMES.iter().find(|(_, n)| *n == s).map(|(o, _)| *o).ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// `loc` names the replaced location for access-replacement scheme operations.
    Invoke {
        obj: Object,
        op: OpName,
        args: Vec<Value>,
        loc: Option<Loc>,
    },
    Return {
        obj: Object,
        op: OpName,
        val: Value,
    },
    Read {
        loc: Loc,
        val: Value,
    },
    Write {
        loc: Loc,
        old: Value,
        new: Value,
    },
    Cas {
        loc: Loc,
        expected: Value,
        new: Value,
        old: Value,
        success: bool,
    },
    Alloc {
        node: NodeId,
        addr: Addr,
        key: i64,
    },
    Retire {
        node: NodeId,
        via: RefWord,
    },
    Reclaim {
        node: NodeId,
    },
    LocalCompute,
}

impl StepKind {
    /// The location dereferenced or accessed by a memory step.
    pub fn loc(&self) -> Option<&Loc> {
        match self {
            StepKind::Read { loc, .. } | StepKind::Write { loc, .. } | StepKind::Cas { loc, .. } => Some(loc),
            _ => None,
        }
    }

    pub fn is_history_event(&self) -> bool {
        matches!(self, StepKind::Invoke { .. } | StepKind::Return { .. })
    }
}

/// One atomic step.
///
/// `uses` lists unsafe-read origins whose tainted values fed a branch
/// condition in the local computation folded into this step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub index: StepIndex,
    pub thread: ThreadId,
    pub site: Site,
    pub kind: StepKind,
    pub uses: Vec<StepIndex>,
}
