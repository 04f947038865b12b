//! Interval-based reclamation, tagged variant without rollbacks.
//!
//! Nodes carry a birth epoch and a retire epoch. Each thread reserves an
//! epoch interval that starts at `begin_op` and grows as reads observe newer
//! epochs. A retired node is freed once its lifetime interval misses every
//! reservation.

use super::{epoch_of, invoke, reclaim_all, ret};
use crate::sim::ctx::Ctx;
use crate::sim::step::{OpName, Site};
use crate::sim::value::{Field, Global, Loc, NodeId, RefWord, ThreadId, Value};

#[derive(Debug, Default)]
pub(crate) struct Local {
    allocs: u64,
    hi: i64,
    list: Vec<Entry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Entry {
    node: NodeId,
    birth: i64,
    retired: i64,
}

/// A reservation as read by a scan. A half-written one is widened to be
/// conservative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Reservation {
    lo: i64,
    hi: i64,
}

impl Reservation {
    fn from_words(lo: Value, hi: Value) -> Option<Self> {
        match (lo.as_int(), hi.as_int()) {
            (None, None) => None,
            (lo, hi) => Some(Reservation { lo: lo.unwrap_or(i64::MIN), hi: hi.unwrap_or(i64::MAX) }),
        }
    }

    fn overlaps(&self, e: &Entry) -> bool {
        e.birth <= self.hi && self.lo <= e.retired
    }
}

pub(crate) async fn begin_op(cx: &Ctx) {
    let site = Site::Boundary;
    invoke(cx, site, OpName::BeginOp, vec![], None).await;
    let me = cx.thread();
    let e = epoch_of(cx.read_global(site, Global::Epoch).await);
    cx.write_global(site, Global::ReserveLo(me), Value::int(e)).await;
    cx.write_global(site, Global::ReserveHi(me), Value::int(e)).await;
    cx.local().ibr.hi = e;
    ret(cx, site, OpName::BeginOp, Value::Empty).await;
}

pub(crate) async fn end_op(cx: &Ctx) {
    let site = Site::Boundary;
    invoke(cx, site, OpName::EndOp, vec![], None).await;
    let me = cx.thread();
    cx.write_global(site, Global::ReserveLo(me), Value::Empty).await;
    cx.write_global(site, Global::ReserveHi(me), Value::Empty).await;
    let pending = !cx.local().ibr.list.is_empty();
    if pending {
        scan(cx, site).await;
    }
    ret(cx, site, OpName::EndOp, Value::Empty).await;
}

pub(crate) async fn alloc(cx: &Ctx, site: Site, key: i64, period: u64) -> RefWord {
    invoke(cx, site, OpName::Alloc, vec![Value::int(key)], None).await;
    let advance = {
        let mut local = cx.local();
        local.ibr.allocs += 1;
        local.ibr.allocs.is_multiple_of(period)
    };
    if advance {
        let e = epoch_of(cx.read_global(site, Global::Epoch).await);
        cx.cas(site, Global::Epoch.into(), Value::int(e), Value::int(e + 1)).await;
    }
    let r = cx.alloc(site, key).await;
    let birth = epoch_of(cx.read_global(site, Global::Epoch).await);
    cx.write(site, Loc::Field(r, Field::Birth), Value::int(birth)).await;
    ret(cx, site, OpName::Alloc, Value::Ref(r)).await;
    r
}

pub(crate) async fn read(cx: &Ctx, site: Site, loc: Loc) -> Value {
    invoke(cx, site, OpName::Read, vec![], Some(loc)).await;
    let me = cx.thread();
    loop {
        let v = cx.read(site, loc).await;
        let e = epoch_of(cx.read_global(site, Global::Epoch).await);
        if e == cx.local().ibr.hi {
            ret(cx, site, OpName::Read, v).await;
            return v;
        }
        cx.write_global(site, Global::ReserveHi(me), Value::int(e)).await;
        cx.local().ibr.hi = e;
    }
}

pub(crate) async fn retire(cx: &Ctx, site: Site, r: RefWord) {
    invoke(cx, site, OpName::Retire, vec![Value::Ref(r)], None).await;
    let e = epoch_of(cx.read_global(site, Global::Epoch).await);
    cx.write(site, Loc::Field(r, Field::RetireEpoch), Value::int(e)).await;
    let birth = epoch_of(cx.read(site, Loc::Field(r, Field::Birth)).await);
    cx.retire(site, r).await;
    cx.local().ibr.list.push(Entry { node: r.target, birth, retired: e });
    scan(cx, site).await;
    ret(cx, site, OpName::Retire, Value::Empty).await;
}

async fn scan(cx: &Ctx, site: Site) {
    let mut reservations = Vec::new();
    for i in 0..cx.threads() {
        let t = ThreadId::from_index(i);
        let lo = cx.read_global(site, Global::ReserveLo(t)).await;
        let hi = cx.read_global(site, Global::ReserveHi(t)).await;
        reservations.extend(Reservation::from_words(lo, hi));
    }
    let freed: Vec<NodeId> = {
        let mut local = cx.local();
        let (keep, free): (Vec<Entry>, Vec<Entry>) =
            local.ibr.list.drain(..).partition(|e| reservations.iter().any(|r| r.overlaps(e)));
        local.ibr.list = keep;
        free.into_iter().map(|e| e.node).collect()
    };
    reclaim_all(cx, site, freed).await;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(birth: i64, retired: i64) -> Entry {
        Entry { node: NodeId(3), birth, retired }
    }

    #[test]
    fn disjoint_lifetimes_are_free() {
        let r = Reservation { lo: 6, hi: 9 };
        assert!(!r.overlaps(&entry(4, 4)));
        assert!(r.overlaps(&entry(4, 6)));
        assert!(r.overlaps(&entry(9, 12)));
        assert!(!r.overlaps(&entry(10, 12)));
    }

    #[test]
    fn reader_interval_blocks_nodes_alive_inside_it() {
        let r = Reservation { lo: 3, hi: 8 };
        assert!(r.overlaps(&entry(5, 5)));
        assert!(r.overlaps(&entry(1, 20)));
    }

    #[test]
    fn half_written_reservation_is_widened() {
        assert_eq!(Reservation::from_words(Value::Empty, Value::Empty), None);
        let r = Reservation::from_words(Value::int(4), Value::Empty).unwrap();
        assert!(r.overlaps(&entry(100, 100)));
        assert!(!r.overlaps(&entry(0, 3)));
    }
}
