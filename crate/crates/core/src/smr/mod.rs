//! Reclamation schemes behind a fixed integration surface: operation
//! boundaries, allocation/retirement replacements, and replacements for
//! primitive shared-memory accesses.
//!
//! Every scheme operation that issues steps is bracketed by an `Invoke`/`Return`
//! pair on [`Object::Smr`], so scheme work is visible in histories.

mod ebr;
mod hp;
mod ibr;

use std::fmt;
use std::str::FromStr;

use crate::sim::ctx::{Ctx, Tv};
use crate::sim::step::{Object, OpName, Site};
use crate::sim::value::{Field, Global, Loc, NodeId, RefWord, ThreadId, Value};

pub use hp::DEFAULT_K as HP_DEFAULT_K;

/// A reclamation scheme and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Never reclaims. Integrated code equals the plain implementation.
    None,
    Ebr,
    /// `k` hazard slots per thread; scan once a retire list reaches `r`.
    Hp {
        k: u8,
        r: usize,
    },
    /// Epoch advances every `a` allocations of a thread.
    Ibr {
        a: u64,
    },
}

impl Scheme {
    /// HP with `K = 3` and `R = 2·N·K`.
    pub fn hp_default(threads: usize) -> Self {
        let k = HP_DEFAULT_K;
        Scheme::Hp { k, r: 2 * threads * k as usize }
    }

    pub fn ibr_default() -> Self {
        Scheme::Ibr { a: 1 }
    }

    /// Builds a scheme from its name and optional parameters.
    pub fn from_parts(
        name: &str,
        threads: usize,
        hp_k: Option<u8>,
        hp_r: Option<usize>,
        ibr_a: Option<u64>,
    ) -> Result<Self, String> {
        Ok(match name {
            "none" => Scheme::None,
            "ebr" => Scheme::Ebr,
            "hp" => {
                let k = hp_k.unwrap_or(HP_DEFAULT_K);
                if k == 0 {
                    return Err("--hp-k must be at least 1".into());
                }
                let r = hp_r.unwrap_or(2 * threads * k as usize);
                if r == 0 {
                    return Err("--hp-r must be at least 1".into());
                }
                Scheme::Hp { k, r }
            }
            "ibr" => {
                let a = ibr_a.unwrap_or(1);
                if a == 0 {
                    return Err("--ibr-a must be at least 1".into());
                }
                Scheme::Ibr { a }
            }
            other => return Err(format!("unknown scheme `{other}`")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Ebr => "ebr",
            Scheme::Hp { .. } => "hp",
            Scheme::Ibr { .. } => "ibr",
        }
    }

    /// Scheme globals present in `C_0`.
    pub fn initial_globals(&self, threads: usize) -> Vec<(Global, Value)> {
        let ids = (0..threads).map(ThreadId::from_index);
        match *self {
            Scheme::None => Vec::new(),
            Scheme::Ebr => std::iter::once((Global::Epoch, Value::int(0)))
                .chain(ids.map(|t| (Global::Announce(t), Value::Empty)))
                .collect(),
            Scheme::Hp { k, .. } => {
                ids.flat_map(|t| (0..k).map(move |s| (Global::HazardSlot(t, s), Value::Empty))).collect()
            }
            Scheme::Ibr { .. } => std::iter::once((Global::Epoch, Value::int(0)))
                .chain(ids.flat_map(|t| [(Global::ReserveLo(t), Value::Empty), (Global::ReserveHi(t), Value::Empty)]))
                .collect(),
        }
    }

    /// Scheme fields stamped on the nodes that exist in `C_0`.
    pub fn initial_node_fields(&self) -> Vec<(Field, Value)> {
        match self {
            Scheme::Ibr { .. } => vec![(Field::Birth, Value::int(0))],
            _ => Vec::new(),
        }
    }

    pub async fn begin_op(&self, cx: &Ctx) {
        match *self {
            Scheme::None => {}
            Scheme::Ebr => ebr::begin_op(cx).await,
            Scheme::Hp { .. } => cx.local().hp.next_slot = 0,
            Scheme::Ibr { .. } => ibr::begin_op(cx).await,
        }
    }

    pub async fn end_op(&self, cx: &Ctx) {
        match *self {
            Scheme::None => {}
            Scheme::Ebr => ebr::end_op(cx).await,
            Scheme::Hp { k, r } => hp::end_op(cx, k, r).await,
            Scheme::Ibr { .. } => ibr::end_op(cx).await,
        }
    }

    pub async fn alloc(&self, cx: &Ctx, site: Site, key: i64) -> RefWord {
        match *self {
            Scheme::Ibr { a } => ibr::alloc(cx, site, key, a).await,
            _ => cx.alloc(site, key).await,
        }
    }

    pub async fn retire(&self, cx: &Ctx, site: Site, r: RefWord) {
        match *self {
            Scheme::None => cx.retire(site, r).await,
            Scheme::Ebr => ebr::retire(cx, site, r).await,
            Scheme::Hp { k, r: threshold } => hp::retire(cx, site, r, k, threshold).await,
            Scheme::Ibr { .. } => ibr::retire(cx, site, r).await,
        }
    }

    pub async fn read(&self, cx: &Ctx, site: Site, loc: Loc) -> Value {
        match *self {
            Scheme::Hp { k, .. } => hp::read(cx, site, loc, k).await,
            Scheme::Ibr { .. } => ibr::read(cx, site, loc).await,
            _ => cx.read(site, loc).await,
        }
    }

    pub async fn write(&self, cx: &Ctx, site: Site, loc: Loc, v: Value) {
        cx.write(site, loc, v).await
    }

    pub async fn cas(&self, cx: &Ctx, site: Site, loc: Loc, expected: Value, new: Value) -> Tv<bool> {
        cx.cas(site, loc, expected, new).await
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    /// Parses a bare name with default parameters for two threads.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::from_parts(s, 2, None, None, None)
    }
}

/// Thread-local bookkeeping of every scheme. Only the active scheme's part is
/// ever touched.
#[derive(Debug, Default)]
pub struct SchemeLocal {
    pub(crate) ebr: ebr::Local,
    pub(crate) hp: hp::Local,
    pub(crate) ibr: ibr::Local,
}

async fn invoke(cx: &Ctx, site: Site, op: OpName, args: Vec<Value>, loc: Option<Loc>) {
    cx.invoke(site, Object::Smr, op, args, loc).await
}

async fn ret(cx: &Ctx, site: Site, op: OpName, val: Value) {
    cx.ret(site, Object::Smr, op, val).await
}

async fn reclaim_all(cx: &Ctx, site: Site, nodes: impl IntoIterator<Item = NodeId>) {
    for n in nodes {
        cx.reclaim(site, n).await;
    }
}

fn epoch_of(v: Value) -> i64 {
    v.as_int().unwrap_or(0)
}
