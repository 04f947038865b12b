//! History checks: well-formedness and linearizability of the set.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::sim::exec::History;
use crate::sim::step::{Object, OpName, StepKind};
use crate::sim::value::{StepIndex, ThreadId};

/// Checks that every thread's invocations and responses nest: each response
/// closes the innermost open invocation of its thread, and per object a
/// thread alternates invocations and responses. Pending invocations at the
/// end are allowed.
pub fn check_well_formed(history: &History) -> Result<(), String> {
    let mut open: BTreeMap<ThreadId, Vec<(Object, OpName)>> = BTreeMap::new();
    for e in &history.events {
        let stack = open.entry(e.thread).or_default();
        match &e.kind {
            StepKind::Invoke { obj, op, .. } => {
                if stack.iter().any(|(o, _)| o == obj) {
                    return Err(format!(
                        "step {}: {} invokes {op} on {obj:?} with one already open",
                        e.index, e.thread
                    ));
                }
                stack.push((*obj, *op));
            }
            StepKind::Return { obj, op, .. } => match stack.pop() {
                Some((o, p)) if o == *obj && p == *op => {}
                Some((o, p)) => {
                    return Err(format!(
                        "step {}: {} returns {op} on {obj:?} while {p} on {o:?} is innermost",
                        e.index, e.thread
                    ))
                }
                None => return Err(format!("step {}: {} returns {op} with nothing open", e.index, e.thread)),
            },
            _ => return Err(format!("step {} is not an invocation or response", e.index)),
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LinError {
    #[error("history has {ops} set operations, over the budget of {budget}")]
    OverBudget { ops: usize, budget: usize },
    #[error("malformed history: {0}")]
    Malformed(String),
}

/// A set operation extracted from a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SetCall {
    pub thread: ThreadId,
    pub op: OpName,
    pub key: i64,
    pub invoked: StepIndex,
    /// `None` for a pending operation.
    pub returned: Option<(StepIndex, bool)>,
}

/// Set operations of a history, in invocation order.
pub fn set_calls(history: &History) -> Result<Vec<SetCall>, LinError> {
    let mut calls: Vec<SetCall> = Vec::new();
    let mut open: BTreeMap<ThreadId, usize> = BTreeMap::new();
    for e in &history.events {
        match &e.kind {
            StepKind::Invoke { obj: Object::Set, op, args, .. } => {
                let key = args
                    .first()
                    .and_then(|v| v.as_int())
                    .ok_or_else(|| LinError::Malformed(format!("step {}: set call without key", e.index)))?;
                open.insert(e.thread, calls.len());
                calls.push(SetCall { thread: e.thread, op: *op, key, invoked: e.index, returned: None });
            }
            StepKind::Return { obj: Object::Set, val, .. } => {
                let i = open
                    .remove(&e.thread)
                    .ok_or_else(|| LinError::Malformed(format!("step {}: unmatched response", e.index)))?;
                let b =
                    val.as_int().ok_or_else(|| LinError::Malformed(format!("step {}: non-boolean result", e.index)))?;
                calls[i].returned = Some((e.index, b != 0));
            }
            _ => {}
        }
    }
    Ok(calls)
}

/// Sequential set semantics: the result of `op(key)` and whether the key is
/// present afterwards.
pub fn apply_set(op: OpName, present: bool) -> (bool, bool) {
    match op {
        OpName::Insert => (!present, true),
        OpName::Delete => (present, false),
        _ => (present, present),
    }
}

/// Searches for a linearization of the set operations in `history`.
///
/// Completed operations must all be placed; pending ones may be placed
/// (with whatever result the sequential set gives) or dropped. An
/// operation may be placed only when no unplaced completed operation
/// returned before it was invoked.
pub fn check_linearizable_set(history: &History, max_ops: usize) -> Result<bool, LinError> {
    check_linearizable_from(history, &[], max_ops)
}

/// Like [`check_linearizable_set`], starting from a non-empty set.
pub fn check_linearizable_from(history: &History, initial: &[i64], max_ops: usize) -> Result<bool, LinError> {
    let calls = set_calls(history)?;
    if calls.len() > max_ops.min(63) {
        return Err(LinError::OverBudget { ops: calls.len(), budget: max_ops.min(63) });
    }
    let mut keys: Vec<i64> = calls.iter().map(|c| c.key).collect();
    keys.sort_unstable();
    keys.dedup();
    let bit = |k: i64| 1u64 << keys.binary_search(&k).unwrap();
    let start = initial.iter().filter(|k| keys.binary_search(k).is_ok()).fold(0u64, |m, k| m | bit(*k));
    let mut search = Search { calls: &calls, bit: &bit, seen: HashSet::new() };
    Ok(search.dfs(0, start))
}

struct Search<'a, F: Fn(i64) -> u64> {
    calls: &'a [SetCall],
    bit: &'a F,
    seen: HashSet<(u64, u64)>,
}

impl<F: Fn(i64) -> u64> Search<'_, F> {
    fn dfs(&mut self, done: u64, set: u64) -> bool {
        let n = self.calls.len();
        let all_completed_placed = (0..n).all(|i| done & (1 << i) != 0 || self.calls[i].returned.is_none());
        if all_completed_placed {
            return true;
        }
        if !self.seen.insert((done, set)) {
            return false;
        }
        // Earliest response among unplaced completed operations.
        let horizon = (0..n)
            .filter(|i| done & (1 << i) == 0)
            .filter_map(|i| self.calls[i].returned.map(|(r, _)| r))
            .min()
            .unwrap_or(StepIndex::MAX);
        for i in 0..n {
            if done & (1 << i) != 0 {
                continue;
            }
            let c = self.calls[i];
            if c.invoked > horizon {
                continue;
            }
            let b = (self.bit)(c.key);
            let (result, after) = apply_set(c.op, set & b != 0);
            if let Some((_, expected)) = c.returned {
                if expected != result {
                    continue;
                }
            }
            let next = if after { set | b } else { set & !b };
            if self.dfs(done | (1 << i), next) {
                return true;
            }
        }
        false
    }
}
