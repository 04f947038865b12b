//! Configurations and the step-application rule that relates consecutive ones.

use std::collections::BTreeMap;
use std::fmt;

use super::step::{Object, OpName, Step, StepKind};
use super::value::{Addr, Field, Global, Loc, NodeId, PhysLoc, RefWord, StepIndex, ThreadId, Value, NULL_ADDR};

/// Life-cycle state of a logical node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeState {
    Unallocated,
    Local(ThreadId),
    Shared,
    Retired,
}

impl NodeState {
    pub fn is_active(self) -> bool {
        matches!(self, NodeState::Local(_) | NodeState::Shared)
    }
}

/// What a scheme does with the memory of a reclaimed node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Keep the slot in program space for re-allocation.
    #[default]
    Recycle,
    /// Return the slot to the system; later accesses are space violations.
    Release,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Recycle => "recycle",
            Policy::Release => "release",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recycle" => Ok(Policy::Recycle),
            "release" => Ok(Policy::Release),
            _ => Err(format!("unknown policy `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    Program,
    System,
}

/// One arena slot. Field contents survive reclamation, so a stale dereference
/// observes whatever the memory last held.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub occupant: Option<NodeId>,
    pub space: Space,
    fields: [Value; 4],
}

impl Slot {
    fn fresh(node: NodeId, key: i64) -> Self {
        Slot {
            occupant: Some(node),
            space: Space::Program,
            fields: [Value::Empty, Value::int(key), Value::Empty, Value::Empty],
        }
    }

    pub fn field(&self, f: Field) -> Value {
        self.fields[field_index(f)]
    }

    fn set_field(&mut self, f: Field, v: Value) {
        self.fields[field_index(f)] = v;
    }
}

fn field_index(f: Field) -> usize {
    match f {
        Field::Next => 0,
        Field::Key => 1,
        Field::Birth => 2,
        Field::RetireEpoch => 3,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub addr: Addr,
    pub state: NodeState,
}

/// Per-thread state visible at the configuration level: the stack of open
/// invocations. Program counters and locals live in the thread programs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ThreadState {
    pub open: Vec<(Object, OpName)>,
}

/// A life-cycle rule broken by a step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub step: StepIndex,
    pub thread: ThreadId,
    pub node: Option<NodeId>,
    pub what: String,
}

/// Everything needed to build `C_0`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InitSpec {
    pub threads: usize,
    pub policy: Policy,
    /// Keys linked into the list before the first step, in ascending order.
    pub prefill: Vec<i64>,
    pub scheme_globals: Vec<(Global, Value)>,
    /// Scheme fields stamped on every node present in `C_0`.
    pub initial_node_fields: Vec<(Field, Value)>,
}

pub const HEAD_KEY: i64 = i64::MIN;
pub const TAIL_KEY: i64 = i64::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub slots: Vec<Slot>,
    pub nodes: BTreeMap<NodeId, NodeRecord>,
    pub globals: BTreeMap<Global, Value>,
    pub threads: Vec<ThreadState>,
    pub policy: Policy,
    free: Vec<Addr>,
    next_id: u64,
}

impl Configuration {
    pub fn initial(spec: &InitSpec) -> Self {
        let mut cfg = Configuration {
            slots: Vec::new(),
            nodes: BTreeMap::new(),
            globals: BTreeMap::new(),
            threads: vec![ThreadState::default(); spec.threads],
            policy: spec.policy,
            free: Vec::new(),
            next_id: 1,
        };
        let head = cfg.place(HEAD_KEY);
        let tail = cfg.place(TAIL_KEY);
        debug_assert_eq!((head.target, tail.target), (NodeId::HEAD, NodeId::TAIL));
        let mut keys = spec.prefill.clone();
        keys.sort_unstable();
        keys.dedup();
        let mut chain = vec![head];
        chain.extend(keys.iter().map(|k| cfg.place(*k)));
        chain.push(tail);
        for pair in chain.windows(2) {
            cfg.slots[pair[0].addr as usize].set_field(Field::Next, Value::Ref(pair[1]));
        }
        for r in &chain {
            for (f, v) in &spec.initial_node_fields {
                cfg.slots[r.addr as usize].set_field(*f, *v);
            }
        }
        cfg.globals.insert(Global::Head, Value::Ref(head));
        cfg.globals.insert(Global::Tail, Value::Ref(tail));
        for (g, v) in &spec.scheme_globals {
            cfg.globals.insert(*g, *v);
        }
        cfg
    }

    fn place(&mut self, key: i64) -> RefWord {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let addr = self.slots.len() as Addr;
        self.slots.push(Slot::fresh(id, key));
        self.nodes.insert(id, NodeRecord { addr, state: NodeState::Shared });
        RefWord::new(addr, id)
    }

    pub fn node_state(&self, node: NodeId) -> NodeState {
        self.nodes.get(&node).map_or(NodeState::Unallocated, |r| r.state)
    }

    pub fn node_addr(&self, node: NodeId) -> Option<Addr> {
        self.nodes.get(&node).map(|r| r.addr)
    }

    /// Key of a node, read from its slot (keys are immutable while allocated).
    pub fn node_key(&self, node: NodeId) -> Option<i64> {
        let addr = self.node_addr(node)?;
        self.slots[addr as usize].field(Field::Key).as_int()
    }

    /// A reference is valid iff its logical target has not been unallocated.
    /// Node ids are never revived, so this matches the last-update chain rule.
    pub fn is_valid(&self, r: &RefWord) -> bool {
        self.node_state(r.target) != NodeState::Unallocated
    }

    pub fn space_of(&self, addr: Addr) -> Space {
        if addr == NULL_ADDR {
            return Space::System;
        }
        self.slots.get(addr as usize).map_or(Space::System, |s| s.space)
    }

    pub fn global(&self, g: Global) -> Option<Value> {
        self.globals.get(&g).copied()
    }

    /// Current content of a location, or `None` for undeclared globals and
    /// addresses outside the arena.
    pub fn load(&self, loc: &Loc) -> Option<Value> {
        match loc {
            Loc::Global(g) => self.global(*g),
            Loc::Field(r, f) => self.slots.get(r.addr as usize).map(|s| s.field(*f)),
        }
    }

    pub fn load_phys(&self, loc: PhysLoc) -> Option<Value> {
        match loc {
            PhysLoc::Global(g) => self.global(g),
            PhysLoc::Field(a, f) => self.slots.get(a as usize).map(|s| s.field(f)),
        }
    }

    /// Address the next allocation will occupy.
    pub fn next_alloc_addr(&self) -> Addr {
        self.free.last().copied().unwrap_or(self.slots.len() as Addr)
    }

    pub fn next_node_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    pub fn minted(&self) -> u64 {
        self.next_id - 1
    }

    /// Nodes reachable from the head entry point, in list order.
    pub fn reachable(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let Some(Value::Ref(mut cur)) = self.global(Global::Head) else {
            return out;
        };
        let mut seen = std::collections::HashSet::new();
        loop {
            if self.node_state(cur.target) == NodeState::Unallocated || !seen.insert(cur.target) {
                return out;
            }
            out.push(cur.target);
            match self.slots[cur.addr as usize].field(Field::Next) {
                Value::Ref(next) if !next.is_null() => cur = next,
                _ => return out,
            }
        }
    }

    pub fn is_reachable(&self, node: NodeId) -> bool {
        self.reachable().contains(&node)
    }

    /// Keys currently in the abstract set: reachable, unmarked, non-sentinel.
    pub fn abstract_set(&self) -> Vec<i64> {
        self.reachable()
            .into_iter()
            .filter(|n| *n != NodeId::HEAD && *n != NodeId::TAIL)
            .filter_map(|n| {
                let slot = &self.slots[self.node_addr(n)? as usize];
                let marked = matches!(slot.field(Field::Next), Value::Ref(r) if r.mark);
                (!marked).then(|| slot.field(Field::Key).as_int()).flatten()
            })
            .collect()
    }

    pub fn count_states(&self) -> (usize, usize) {
        let mut active = 0;
        let mut retired = 0;
        for rec in self.nodes.values() {
            match rec.state {
                NodeState::Local(_) | NodeState::Shared => active += 1,
                NodeState::Retired => retired += 1,
                NodeState::Unallocated => {}
            }
        }
        (active, retired)
    }

    /// Applies `step` to this configuration, producing the next one.
    ///
    /// Illegal life-cycle transitions are reported and leave the node state
    /// untouched; the step itself still counts as executed.
    pub fn apply(&mut self, step: &Step) -> Vec<Fault> {
        let mut faults = Vec::new();
        let mut fault = |node: Option<NodeId>, what: String| {
            faults.push(Fault { step: step.index, thread: step.thread, node, what });
        };
        match &step.kind {
            StepKind::Invoke { obj, op, .. } => {
                if let Some(ts) = self.threads.get_mut(step.thread.index()) {
                    ts.open.push((*obj, *op));
                }
            }
            StepKind::Return { .. } => {
                if let Some(ts) = self.threads.get_mut(step.thread.index()) {
                    ts.open.pop();
                }
            }
            StepKind::Read { .. } | StepKind::LocalCompute => {}
            StepKind::Write { loc, new, .. } => {
                if let Loc::Global(g) = loc {
                    if g.is_entry_point() {
                        fault(None, format!("write to immutable entry point {g:?}"));
                        return faults;
                    }
                }
                self.store(loc, *new);
            }
            StepKind::Cas { loc, new, success, .. } => {
                if *success {
                    self.store(loc, *new);
                }
            }
            StepKind::Alloc { node, addr, key } => {
                if *node != self.next_node_id() {
                    fault(Some(*node), format!("allocation mints {node} out of order"));
                }
                self.next_id = self.next_id.max(node.0 + 1);
                let a = *addr as usize;
                if a == self.slots.len() {
                    self.slots.push(Slot::fresh(*node, *key));
                } else if let Some(pos) = self.free.iter().rposition(|f| f == addr) {
                    self.free.remove(pos);
                    self.slots[a] = Slot::fresh(*node, *key);
                } else {
                    fault(Some(*node), format!("allocation at non-free address {addr}"));
                    return faults;
                }
                self.nodes.insert(*node, NodeRecord { addr: *addr, state: NodeState::Local(step.thread) });
            }
            StepKind::Retire { node, .. } => match self.node_state(*node) {
                NodeState::Local(_) | NodeState::Shared => {
                    if self.is_reachable(*node) {
                        fault(Some(*node), format!("retire of reachable node {node}"));
                    }
                    self.set_state(*node, NodeState::Retired);
                }
                NodeState::Retired => fault(Some(*node), format!("double retire of {node}")),
                NodeState::Unallocated => fault(Some(*node), format!("retire of unallocated {node}")),
            },
            StepKind::Reclaim { node } => {
                if self.node_state(*node) != NodeState::Retired {
                    fault(Some(*node), format!("reclaim of non-retired node {node}"));
                    return faults;
                }
                let addr = self.nodes[node].addr;
                self.set_state(*node, NodeState::Unallocated);
                let slot = &mut self.slots[addr as usize];
                slot.occupant = None;
                match self.policy {
                    Policy::Recycle => self.free.push(addr),
                    Policy::Release => slot.space = Space::System,
                }
            }
        }
        faults
    }

    fn set_state(&mut self, node: NodeId, state: NodeState) {
        if let Some(rec) = self.nodes.get_mut(&node) {
            rec.state = state;
        }
    }

    fn store(&mut self, loc: &Loc, v: Value) {
        let stored = v;
        let publishes = match loc {
            Loc::Global(_) => true,
            Loc::Field(r, _) => match self.slots.get(r.addr as usize).and_then(|s| s.occupant) {
                Some(owner) => !matches!(self.node_state(owner), NodeState::Local(_)),
                None => true,
            },
        };
        match loc {
            Loc::Global(g) => {
                self.globals.insert(*g, stored);
            }
            Loc::Field(r, f) => {
                if let Some(slot) = self.slots.get_mut(r.addr as usize) {
                    slot.set_field(*f, stored);
                }
            }
        }
        if publishes {
            if let Value::Ref(r) = v {
                if matches!(self.node_state(r.target), NodeState::Local(_)) {
                    self.set_state(r.target, NodeState::Shared);
                }
            }
        }
    }

    /// Explicit `Local -> Shared` transition.
    pub fn share_node(&mut self, node: NodeId) -> Result<(), String> {
        match self.node_state(node) {
            NodeState::Local(_) => {
                self.set_state(node, NodeState::Shared);
                Ok(())
            }
            other => Err(format!("cannot share {node} in state {other:?}")),
        }
    }
}
