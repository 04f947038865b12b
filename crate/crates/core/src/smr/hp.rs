//! Hazard pointers.
//!
//! Reads of references publish the address in one of the thread's `K` slots
//! and re-read until the location is stable. Slots rotate per read, so a
//! traversal keeps its last `K` references protected.

use std::collections::HashSet;

use super::{invoke, reclaim_all, ret};
use crate::sim::ctx::Ctx;
use crate::sim::step::{OpName, Site};
use crate::sim::value::{Addr, Global, Loc, RefWord, ThreadId, Value};

pub const DEFAULT_K: u8 = 3;

#[derive(Debug, Default)]
pub(crate) struct Local {
    pub(crate) next_slot: u8,
    list: Vec<RefWord>,
}

pub(crate) async fn read(cx: &Ctx, site: Site, loc: Loc, k: u8) -> Value {
    invoke(cx, site, OpName::Read, vec![], Some(loc)).await;
    let me = cx.thread();
    let mut slot = None;
    loop {
        let v = cx.read(site, loc).await;
        let r = match v {
            Value::Ref(r) if !r.is_null() => r,
            _ => {
                ret(cx, site, OpName::Read, v).await;
                return v;
            }
        };
        let s = *slot.get_or_insert_with(|| {
            let mut local = cx.local();
            let s = local.hp.next_slot % k;
            local.hp.next_slot = (s + 1) % k;
            s
        });
        let published = Value::Int(r.addr as i64, r.taint);
        cx.write_global(site, Global::HazardSlot(me, s), published).await;
        let again = cx.read(site, loc).await;
        if cx.branch(again.same_word(&v), again.taint().join(v.taint())) {
            ret(cx, site, OpName::Read, again).await;
            return again;
        }
    }
}

pub(crate) async fn retire(cx: &Ctx, site: Site, r: RefWord, k: u8, threshold: usize) {
    invoke(cx, site, OpName::Retire, vec![Value::Ref(r)], None).await;
    cx.retire(site, r).await;
    let full = {
        let mut local = cx.local();
        local.hp.list.push(r);
        local.hp.list.len() >= threshold
    };
    if full {
        scan(cx, site, k).await;
    }
    ret(cx, site, OpName::Retire, Value::Empty).await;
}

/// Clears the thread's own slots, then scans if the retire list is still
/// at the threshold, so nodes blocked only by the thread's own stale slots
/// do not wait for its next retire.
pub(crate) async fn end_op(cx: &Ctx, k: u8, threshold: usize) {
    let site = Site::Boundary;
    invoke(cx, site, OpName::EndOp, vec![], None).await;
    let me = cx.thread();
    for s in 0..k {
        cx.write_global(site, Global::HazardSlot(me, s), Value::Empty).await;
    }
    let full = cx.local().hp.list.len() >= threshold;
    if full {
        scan(cx, site, k).await;
    }
    ret(cx, site, OpName::EndOp, Value::Empty).await;
}

async fn scan(cx: &Ctx, site: Site, k: u8) {
    let mut protected: HashSet<Addr> = HashSet::new();
    for i in 0..cx.threads() {
        let t = ThreadId::from_index(i);
        for s in 0..k {
            if let Value::Int(a, _) = cx.read_global(site, Global::HazardSlot(t, s)).await {
                protected.insert(a as Addr);
            }
        }
    }
    let freed: Vec<_> = {
        let mut local = cx.local();
        let (keep, free): (Vec<RefWord>, Vec<RefWord>) =
            local.hp.list.drain(..).partition(|r| protected.contains(&r.addr));
        local.hp.list = keep;
        free.into_iter().map(|r| r.target).collect()
    };
    reclaim_all(cx, site, freed).await;
}
