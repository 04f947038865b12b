//! Harris's lock-free list as step-granular thread programs.
//!
//! Every shared access goes through the scheme's replacement operations, and
//! every local decision on a read value goes through [`Ctx::branch`] so that
//! decisions on tainted data are recorded.

use crate::sim::ctx::Ctx;
use crate::sim::step::{Object, OpName, Site};
use crate::sim::value::{Field, Global, Loc, NodeId, RefWord, Taint, Value};
use crate::smr::Scheme;

/// Result of `search`: `pred` was seen unmarked and pointing at `curr`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub pred: RefWord,
    pub curr: RefWord,
}

fn next(r: RefWord) -> Loc {
    Loc::Field(r, Field::Next)
}

fn key_of(r: RefWord) -> Loc {
    Loc::Field(r, Field::Key)
}

/// Set operation result as a word: 1 for true, 0 for false.
pub fn bool_word(b: bool, taint: Taint) -> Value {
    Value::Int(b as i64, taint)
}

struct List<'a> {
    cx: &'a Ctx,
    s: Scheme,
}

impl List<'_> {
    async fn read_ref(&self, site: Site, loc: Loc) -> RefWord {
        let v = self.s.read(self.cx, site, loc).await;
        match v {
            Value::Int(_, t) => RefWord { taint: t, ..RefWord::NULL },
            other => other.as_ref().unwrap_or(RefWord::NULL),
        }
    }

    /// Reads a key; anything but an integer (only possible through stale
    /// memory) reads as the low sentinel.
    async fn read_key(&self, site: Site, r: RefWord) -> (i64, Taint) {
        let v = self.s.read(self.cx, site, key_of(r)).await;
        (v.as_int().unwrap_or(i64::MIN), v.taint())
    }

    fn branch(&self, cond: bool, taint: Taint) -> bool {
        self.cx.branch(cond, taint)
    }

    async fn search(&self, key: i64) -> Window {
        'retry: loop {
            let mut pred = self.read_ref(Site::SearchHead, Global::Head.into()).await;
            let mut pred_next = self.read_ref(Site::SearchPredNext, next(pred)).await;
            let mut curr = pred_next;
            let mut curr_next = self.read_ref(Site::SearchCurrNext, next(curr)).await;
            loop {
                let marked = self.branch(curr_next.mark, curr_next.taint);
                if !marked {
                    let (k, t) = self.read_key(Site::SearchLoopKey, curr).await;
                    if !self.branch(k < key, t) {
                        break;
                    }
                    pred = curr;
                    pred_next = curr_next;
                }
                curr = curr_next.get_ref();
                if self.branch(curr.target == NodeId::TAIL, curr.taint) {
                    break;
                }
                curr_next = self.read_ref(Site::SearchLoopNext, next(curr)).await;
            }
            if self.branch(pred_next.same_word(&curr), pred_next.taint.join(curr.taint)) {
                let cn = self.read_ref(Site::SearchAdjacent, next(curr)).await;
                if self.branch(cn.mark, cn.taint) {
                    continue 'retry;
                }
                return Window { pred, curr };
            }
            let unlinked =
                self.s.cas(self.cx, Site::SearchCas, next(pred), Value::Ref(pred_next), Value::Ref(curr)).await;
            if self.branch(unlinked.v, unlinked.taint) {
                let tmp = pred_next;
                let _tmp_next = self.read_ref(Site::SearchTmpNext, next(tmp)).await;
                let cn = self.read_ref(Site::SearchPostCas, next(curr)).await;
                if self.branch(cn.mark, cn.taint) {
                    continue 'retry;
                }
                return Window { pred, curr };
            }
        }
    }

    async fn contains(&self, key: i64) -> Value {
        let w = self.search(key).await;
        let curr = w.curr;
        let cn = self.read_ref(Site::ContainsNext, next(curr)).await;
        if self.branch(cn.mark, cn.taint) {
            return bool_word(false, cn.taint);
        }
        let (k, t) = self.read_key(Site::ContainsKey, curr).await;
        bool_word(k == key, t)
    }

    async fn insert(&self, key: i64) -> Value {
        let new_node = self.s.alloc(self.cx, Site::InsertAlloc, key).await;
        loop {
            let Window { pred, curr } = self.search(key).await;
            let (k, t) = self.read_key(Site::InsertKey, curr).await;
            if self.branch(k == key, t) {
                self.s.retire(self.cx, Site::InsertRetire, new_node).await;
                return bool_word(false, Taint::CLEAN);
            }
            self.s.write(self.cx, Site::InsertLink, next(new_node), Value::Ref(curr)).await;
            let linked = self.s.cas(self.cx, Site::InsertCas, next(pred), Value::Ref(curr), Value::Ref(new_node)).await;
            if self.branch(linked.v, linked.taint) {
                return bool_word(true, Taint::CLEAN);
            }
        }
    }

    async fn delete(&self, key: i64) -> Value {
        loop {
            let Window { pred, curr } = self.search(key).await;
            let (k, t) = self.read_key(Site::DeleteKey, curr).await;
            if self.branch(k != key, t) {
                return bool_word(false, Taint::CLEAN);
            }
            let succ = self.read_ref(Site::DeleteNext, next(curr)).await.get_ref();
            let marked = succ.get_marked();
            let ok = self.s.cas(self.cx, Site::DeleteMark, next(curr), Value::Ref(succ), Value::Ref(marked)).await;
            if !self.branch(ok.v, ok.taint) {
                continue;
            }
            let ok = self.s.cas(self.cx, Site::DeleteUnlink, next(pred), Value::Ref(curr), Value::Ref(succ)).await;
            if !self.branch(ok.v, ok.taint) {
                self.search(key).await;
            }
            self.s.retire(self.cx, Site::DeleteRetire, curr).await;
            return bool_word(true, Taint::CLEAN);
        }
    }
}

/// One set operation of a workload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SetOp {
    pub op: OpName,
    pub key: i64,
}

impl SetOp {
    pub fn insert(key: i64) -> Self {
        SetOp { op: OpName::Insert, key }
    }

    pub fn delete(key: i64) -> Self {
        SetOp { op: OpName::Delete, key }
    }

    pub fn contains(key: i64) -> Self {
        SetOp { op: OpName::Contains, key }
    }
}

impl std::fmt::Display for SetOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}({})", self.op, self.key)
    }
}

impl std::str::FromStr for SetOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, rest) = s.split_once('(').ok_or_else(|| format!("bad operation `{s}`"))?;
        let arg = rest.strip_suffix(')').ok_or_else(|| format!("bad operation `{s}`"))?;
        let op: OpName = name.trim().parse()?;
        if !matches!(op, OpName::Insert | OpName::Delete | OpName::Contains) {
            return Err(format!("`{name}` is not a set operation"));
        }
        let key = arg.trim().parse().map_err(|_| format!("bad key in `{s}`"))?;
        if key == i64::MIN || key == i64::MAX {
            return Err(format!("key {key} collides with a sentinel"));
        }
        Ok(SetOp { op, key })
    }
}

/// Runs `ops` one after another, each bracketed by the scheme's boundary hooks.
pub async fn thread_program(cx: Ctx, ops: Vec<SetOp>) {
    let s = cx.scheme();
    let list = List { cx: &cx, s };
    let last = ops.len().saturating_sub(1);
    for (i, op) in ops.into_iter().enumerate() {
        cx.invoke(Site::Boundary, Object::Set, op.op, vec![Value::int(op.key)], None).await;
        s.begin_op(&cx).await;
        let result = match op.op {
            OpName::Insert => list.insert(op.key).await,
            OpName::Delete => list.delete(op.key).await,
            _ => list.contains(op.key).await,
        };
        s.end_op(&cx).await;
        if i == last {
            cx.ret_final(Site::Boundary, Object::Set, op.op, result);
        } else {
            cx.ret(Site::Boundary, Object::Set, op.op, result).await;
        }
    }
}

/// Phase of a program location for the access-aware analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    ReadOnly,
    Write,
}

/// Program location to phase, with markers for locations that always open
/// a new phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseAnnotation {
    entries: Vec<(Site, Phase, bool)>,
}

impl PhaseAnnotation {
    pub fn new(entries: Vec<(Site, Phase, bool)>) -> Self {
        PhaseAnnotation { entries }
    }

    /// The annotation of the list above. Allocation and retirement sites
    /// are not shared accesses and carry no phase.
    pub fn harris() -> Self {
        use Phase::*;
        use Site::*;
        PhaseAnnotation::new(vec![
            (SearchHead, ReadOnly, true),
            (SearchPredNext, ReadOnly, false),
            (SearchCurrNext, ReadOnly, false),
            (SearchLoopKey, ReadOnly, false),
            (SearchLoopNext, ReadOnly, false),
            (SearchAdjacent, ReadOnly, false),
            (SearchCas, Write, false),
            (SearchTmpNext, Write, false),
            (SearchPostCas, Write, false),
            (ContainsNext, Write, false),
            (ContainsKey, Write, false),
            (InsertKey, Write, false),
            (InsertLink, Write, false),
            (InsertCas, Write, false),
            (DeleteKey, Write, false),
            (DeleteNext, Write, false),
            (DeleteMark, Write, false),
            (DeleteUnlink, Write, false),
        ])
    }

    /// `(phase, starts_new_phase)` for a site, if it performs shared accesses.
    pub fn lookup(&self, site: Site) -> Option<(Phase, bool)> {
        self.entries.iter().find(|(s, ..)| *s == site).map(|(_, p, r)| (*p, *r))
    }

    pub fn entries(&self) -> &[(Site, Phase, bool)] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_op_parsing() {
        assert_eq!("insert(3)".parse::<SetOp>().unwrap(), SetOp::insert(3));
        assert_eq!(" delete( -2 ) ".parse::<SetOp>().unwrap(), SetOp::delete(-2));
        assert!("read(3)".parse::<SetOp>().is_err());
        assert!("insert(x)".parse::<SetOp>().is_err());
        assert!("contains(3".parse::<SetOp>().is_err());
        assert_eq!(SetOp::contains(7).to_string(), "contains(7)");
    }

    #[test]
    fn every_list_access_site_is_annotated() {
        let ann = PhaseAnnotation::harris();
        let unphased = [Site::InsertAlloc, Site::InsertRetire, Site::DeleteRetire];
        for site in Site::all_list_sites() {
            assert_eq!(ann.lookup(site).is_none(), unphased.contains(&site), "{site}");
        }
        // Shared writes only happen at these sites.
        for site in [Site::SearchCas, Site::InsertLink, Site::InsertCas, Site::DeleteMark, Site::DeleteUnlink] {
            assert_eq!(ann.lookup(site).unwrap().0, Phase::Write);
        }
    }
}
