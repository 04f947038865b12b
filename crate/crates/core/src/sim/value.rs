//! Words stored in simulated shared memory and the identities they name.

use std::fmt;

/// Index of a step in an execution. Step `i` takes `C_{i-1}` to `C_i`; the
/// initial configuration is `C_0`, so real steps start at 1.
pub type StepIndex = usize;

/// A simulated thread, numbered from 1 (`T1`, `T2`, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThreadId(pub u16);

impl ThreadId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        ThreadId(i as u16 + 1)
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Logical node identity. Minted once per allocation and never reused, even
/// when the arena slot behind it is recycled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl NodeId {
    /// Target of the null reference. Never minted.
    pub const NONE: NodeId = NodeId(0);
    pub const HEAD: NodeId = NodeId(1);
    pub const TAIL: NodeId = NodeId(2);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Arena slot index.
pub type Addr = u32;

/// Address carried by the null reference; never part of the arena.
pub const NULL_ADDR: Addr = Addr::MAX;

/// Taint of a value: the step of the unsafe read it descends from, if any.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Taint(pub Option<StepIndex>);

impl Taint {
    pub const CLEAN: Taint = Taint(None);

    pub fn at(step: StepIndex) -> Self {
        Taint(Some(step))
    }

    pub fn is_tainted(self) -> bool {
        self.0.is_some()
    }

    /// Combines two taints, keeping the earliest origin.
    pub fn join(self, other: Taint) -> Taint {
        match (self.0, other.0) {
            (Some(a), Some(b)) => Taint(Some(a.min(b))),
            (a, b) => Taint(a.or(b)),
        }
    }
}

/// A (possibly marked) node reference.
///
/// `addr` and `mark` form the machine word that CAS compares; `target` is the
/// logical node the reference was created for. `taint` and `origin` are
/// analysis metadata that ride along with copies: `origin` is the step that
/// last produced this value (an allocation or a read), and is what the
/// validity and access-aware analyses follow backwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RefWord {
    pub addr: Addr,
    pub target: NodeId,
    pub mark: bool,
    pub taint: Taint,
    pub origin: Option<StepIndex>,
}

impl RefWord {
    pub const NULL: RefWord =
        RefWord { addr: NULL_ADDR, target: NodeId::NONE, mark: false, taint: Taint::CLEAN, origin: None };

    pub fn new(addr: Addr, target: NodeId) -> Self {
        RefWord { addr, target, mark: false, taint: Taint::CLEAN, origin: None }
    }

    pub fn is_null(&self) -> bool {
        self.addr == NULL_ADDR
    }

    /// `getRef`: the same reference with the mark bit cleared.
    pub fn get_ref(self) -> Self {
        RefWord { mark: false, ..self }
    }

    /// `getMarked`: the same reference with the mark bit set.
    pub fn get_marked(self) -> Self {
        RefWord { mark: true, ..self }
    }

    /// Word equality as seen by the hardware: address and mark bit.
    pub fn same_word(&self, other: &RefWord) -> bool {
        self.addr == other.addr && self.mark == other.mark
    }

    pub fn with_origin(self, origin: StepIndex) -> Self {
        RefWord { origin: Some(origin), ..self }
    }
}

/// Content of one memory word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Empty,
    Int(i64, Taint),
    Ref(RefWord),
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Int(v, Taint::CLEAN)
    }

    pub fn taint(&self) -> Taint {
        match self {
            Value::Empty => Taint::CLEAN,
            Value::Int(_, t) => *t,
            Value::Ref(r) => r.taint,
        }
    }

    pub fn with_taint(self, taint: Taint) -> Self {
        match self {
            Value::Empty => Value::Empty,
            Value::Int(v, _) => Value::Int(v, taint),
            Value::Ref(r) => Value::Ref(RefWord { taint, ..r }),
        }
    }

    /// Word equality, ignoring analysis metadata.
    pub fn same_word(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Empty, Value::Empty) => true,
            (Value::Int(a, _), Value::Int(b, _)) => a == b,
            (Value::Ref(a), Value::Ref(b)) => a.same_word(b),
            (Value::Empty, Value::Ref(r)) | (Value::Ref(r), Value::Empty) => r.is_null(),
            _ => false,
        }
    }

    /// Interprets the word as a reference; an empty word is the null reference.
    pub fn as_ref(&self) -> Option<RefWord> {
        match self {
            Value::Ref(r) => Some(*r),
            Value::Empty => Some(RefWord::NULL),
            Value::Int(..) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v, _) => Some(*v),
            _ => None,
        }
    }
}

/// Shared global variables: the list entry points plus scheme globals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Global {
    Head,
    Tail,
    Epoch,
    Announce(ThreadId),
    HazardSlot(ThreadId, u8),
    ReserveLo(ThreadId),
    ReserveHi(ThreadId),
}

impl Global {
    /// Entry points of the data structure; everything else belongs to a scheme.
    pub fn is_entry_point(self) -> bool {
        matches!(self, Global::Head | Global::Tail)
    }
}

/// Fields of a node. `Next` and `Key` belong to the list; scheme fields are
/// added by a reclamation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Next,
    Key,
    Birth,
    RetireEpoch,
}

impl Field {
    pub fn is_scheme_field(self) -> bool {
        matches!(self, Field::Birth | Field::RetireEpoch)
    }
}

/// A shared location: a global, or a field reached by dereferencing a reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loc {
    Global(Global),
    Field(RefWord, Field),
}

impl Loc {
    /// Physical identity of the location, ignoring the reference used to reach it.
    pub fn physical(&self) -> PhysLoc {
        match *self {
            Loc::Global(g) => PhysLoc::Global(g),
            Loc::Field(r, f) => PhysLoc::Field(r.addr, f),
        }
    }

    pub fn via(&self) -> Option<RefWord> {
        match *self {
            Loc::Field(r, _) => Some(r),
            Loc::Global(_) => None,
        }
    }
}

impl From<Global> for Loc {
    fn from(g: Global) -> Self {
        Loc::Global(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhysLoc {
    Global(Global),
    Field(Addr, Field),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mark_bit_helpers_preserve_metadata() {
        let r = RefWord::new(4, NodeId(9)).with_origin(12);
        let m = r.get_marked();
        assert!(m.mark);
        assert_eq!(m.origin, Some(12));
        assert!(!m.get_ref().mark);
        assert!(!r.same_word(&m));
        assert!(r.same_word(&m.get_ref()));
    }

    #[test]
    fn word_equality_ignores_target_and_taint() {
        // A recycled address compares equal at the hardware level.
        let a = RefWord::new(4, NodeId(9));
        let b = RefWord { target: NodeId(17), taint: Taint::at(3), ..a };
        assert!(Value::Ref(a).same_word(&Value::Ref(b)));
        assert!(Value::Empty.same_word(&Value::Ref(RefWord::NULL)));
    }

    #[test]
    fn taint_join_keeps_earliest() {
        assert_eq!(Taint::at(5).join(Taint::at(3)), Taint::at(3));
        assert_eq!(Taint::CLEAN.join(Taint::at(7)), Taint::at(7));
        assert!(!Taint::CLEAN.join(Taint::CLEAN).is_tainted());
    }
}
