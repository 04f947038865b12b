//! Epoch-based reclamation with three retire lists per thread.
//!
//! A thread announces the epoch it read at `begin_op` and announces
//! quiescence at `end_op`. The epoch advances once every non-quiescent
//! thread has announced it. A list tagged `e` is reclaimed once the epoch
//! reaches `e + 2`.

use super::{epoch_of, invoke, reclaim_all, ret};
use crate::sim::ctx::Ctx;
use crate::sim::step::{OpName, Site};
use crate::sim::value::{Global, NodeId, RefWord, ThreadId, Value};

#[derive(Debug, Default)]
pub(crate) struct Local {
    /// `lists[e % 3]` holds nodes retired while the epoch read was `tag`.
    lists: [(i64, Vec<NodeId>); 3],
}

impl Local {
    /// Empties every list old enough at epoch `now`.
    fn take_reclaimable(&mut self, now: i64) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (tag, list) in self.lists.iter_mut() {
            if !list.is_empty() && *tag + 2 <= now {
                out.append(list);
            }
        }
        out
    }
}

pub(crate) async fn begin_op(cx: &Ctx) {
    let site = Site::Boundary;
    invoke(cx, site, OpName::BeginOp, vec![], None).await;
    let me = cx.thread();
    let ev = cx.read_global(site, Global::Epoch).await;
    let e = epoch_of(ev);
    cx.write_global(site, Global::Announce(me), Value::int(e)).await;
    let mut all = true;
    for i in 0..cx.threads() {
        let t = ThreadId::from_index(i);
        if t == me {
            continue;
        }
        let a = cx.read_global(site, Global::Announce(t)).await;
        let ok = match a {
            Value::Int(x, _) => x == e,
            _ => true,
        };
        if !ok {
            all = false;
            break;
        }
    }
    let mut now = e;
    if all {
        let done = cx.cas(site, Global::Epoch.into(), Value::int(e), Value::int(e + 1)).await;
        if done.v {
            now = e + 1;
        }
    }
    let nodes = cx.local().ebr.take_reclaimable(now);
    reclaim_all(cx, site, nodes).await;
    ret(cx, site, OpName::BeginOp, Value::Empty).await;
}

pub(crate) async fn end_op(cx: &Ctx) {
    let site = Site::Boundary;
    invoke(cx, site, OpName::EndOp, vec![], None).await;
    cx.write_global(site, Global::Announce(cx.thread()), Value::Empty).await;
    let now = epoch_of(cx.read_global(site, Global::Epoch).await);
    let nodes = cx.local().ebr.take_reclaimable(now);
    reclaim_all(cx, site, nodes).await;
    ret(cx, site, OpName::EndOp, Value::Empty).await;
}

pub(crate) async fn retire(cx: &Ctx, site: Site, r: RefWord) {
    invoke(cx, site, OpName::Retire, vec![Value::Ref(r)], None).await;
    let e = epoch_of(cx.read_global(site, Global::Epoch).await);
    cx.retire(site, r).await;
    // The slot for `e` may still hold a list from epoch `e - 3` or older,
    // which is safe to free now.
    let stale = {
        let mut local = cx.local();
        let (tag, list) = &mut local.ebr.lists[e.rem_euclid(3) as usize];
        let stale = if *tag != e { std::mem::take(list) } else { Vec::new() };
        *tag = e;
        list.push(r.target);
        stale
    };
    reclaim_all(cx, site, stale).await;
    ret(cx, site, OpName::Retire, Value::Empty).await;
}
