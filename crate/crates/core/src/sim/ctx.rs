//! The live machine behind a simulation and the per-thread handle that
//! programs use to issue steps.
//!
//! Thread programs are `async` code. Every primitive issued through [`Ctx`]
//! records exactly one step and then suspends the program, so one poll of a
//! thread future advances that thread by exactly one step. Local computation
//! between two steps runs at the start of the poll that issues the second.

use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use super::config::{Configuration, Space};
use super::step::{Object, OpName, Site, Step, StepKind};
use super::value::{Field, Global, Loc, NodeId, RefWord, StepIndex, Taint, ThreadId, Value};
use crate::smr::{Scheme, SchemeLocal};

/// A thread-local value together with its taint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tv<T> {
    pub v: T,
    pub taint: Taint,
}

impl<T> Tv<T> {
    pub fn clean(v: T) -> Self {
        Tv { v, taint: Taint::CLEAN }
    }
}

pub(crate) struct Machine {
    pub cfg: Configuration,
    pub steps: Vec<Step>,
    pub fatal: Option<StepIndex>,
    pending_uses: Vec<Vec<StepIndex>>,
}

impl Machine {
    pub fn new(cfg: Configuration) -> Self {
        let n = cfg.threads.len();
        Machine { cfg, steps: Vec::new(), fatal: None, pending_uses: vec![Vec::new(); n] }
    }

    fn next_index(&self) -> StepIndex {
        self.steps.len() + 1
    }

    fn push(&mut self, thread: ThreadId, site: Site, kind: StepKind) -> StepIndex {
        let index = self.next_index();
        if let Some(Loc::Field(via, _)) = kind.loc() {
            if self.cfg.space_of(via.addr) == Space::System && self.fatal.is_none() {
                self.fatal = Some(index);
            }
        }
        let mut uses = std::mem::take(&mut self.pending_uses[thread.index()]);
        uses.dedup();
        let step = Step { index, thread, site, kind, uses };
        self.cfg.apply(&step);
        self.steps.push(step);
        index
    }

    fn load(&self, loc: &Loc) -> Value {
        match loc {
            Loc::Global(g) => self.cfg.global(*g).unwrap_or_else(|| panic!("undeclared global {g:?}")),
            Loc::Field(..) => self.cfg.load(loc).unwrap_or(Value::Empty),
        }
    }

    /// Taint introduced by accessing `loc` at step `index`.
    fn access_taint(&self, loc: &Loc, index: StepIndex) -> Taint {
        match loc {
            Loc::Field(via, _) if !self.cfg.is_valid(via) => Taint::at(index),
            _ => Taint::CLEAN,
        }
    }
}

/// Suspends the current program once.
struct Pause(bool);

impl Future for Pause {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if self.0 {
            Poll::Ready(())
        } else {
            self.0 = true;
            Poll::Pending
        }
    }
}

fn pause() -> Pause {
    Pause(false)
}

/// Handle through which one simulated thread issues steps.
#[derive(Clone)]
pub struct Ctx {
    thread: ThreadId,
    scheme: Scheme,
    threads: usize,
    machine: Rc<RefCell<Machine>>,
    local: Rc<RefCell<SchemeLocal>>,
}

impl Ctx {
    pub(crate) fn new(thread: ThreadId, scheme: Scheme, machine: Rc<RefCell<Machine>>) -> Self {
        let threads = machine.borrow().cfg.threads.len();
        Ctx { thread, scheme, threads, machine, local: Rc::new(RefCell::new(SchemeLocal::default())) }
    }

    pub fn thread(&self) -> ThreadId {
        self.thread
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub(crate) fn local(&self) -> std::cell::RefMut<'_, SchemeLocal> {
        self.local.borrow_mut()
    }

    /// Records a local branch on a value. Tainted conditions are uses of an
    /// unsafe read and are attached to this thread's next step.
    pub fn branch(&self, cond: bool, taint: Taint) -> bool {
        if let Some(origin) = taint.0 {
            self.machine.borrow_mut().pending_uses[self.thread.index()].push(origin);
        }
        cond
    }

    pub async fn read(&self, site: Site, loc: Loc) -> Value {
        let v = {
            let mut m = self.machine.borrow_mut();
            let index = m.next_index();
            let stored = m.load(&loc);
            let taint = stored.taint().join(m.access_taint(&loc, index));
            let val = match stored.with_taint(taint) {
                Value::Ref(r) => Value::Ref(r.with_origin(index)),
                other => other,
            };
            m.push(self.thread, site, StepKind::Read { loc, val });
            val
        };
        pause().await;
        v
    }

    /// Reads a reference word; empty words read as the null reference.
    pub async fn read_ref(&self, site: Site, loc: Loc) -> RefWord {
        let v = self.read(site, loc).await;
        v.as_ref().expect("reference field holds a reference")
    }

    pub async fn write(&self, site: Site, loc: Loc, new: Value) {
        {
            let mut m = self.machine.borrow_mut();
            let old = m.load(&loc);
            m.push(self.thread, site, StepKind::Write { loc, old, new });
        }
        pause().await;
    }

    pub async fn cas(&self, site: Site, loc: Loc, expected: Value, new: Value) -> Tv<bool> {
        let r = {
            let mut m = self.machine.borrow_mut();
            let index = m.next_index();
            let old = m.load(&loc);
            let success = old.same_word(&expected);
            let taint = m.access_taint(&loc, index).join(old.taint()).join(expected.taint());
            m.push(self.thread, site, StepKind::Cas { loc, expected, new, old, success });
            Tv { v: success, taint }
        };
        pause().await;
        r
    }

    pub async fn alloc(&self, site: Site, key: i64) -> RefWord {
        let r = {
            let mut m = self.machine.borrow_mut();
            let node = m.cfg.next_node_id();
            let addr = m.cfg.next_alloc_addr();
            let index = m.push(self.thread, site, StepKind::Alloc { node, addr, key });
            RefWord::new(addr, node).with_origin(index)
        };
        pause().await;
        r
    }

    pub async fn retire(&self, site: Site, via: RefWord) {
        self.machine.borrow_mut().push(self.thread, site, StepKind::Retire { node: via.target, via });
        pause().await;
    }

    pub async fn reclaim(&self, site: Site, node: NodeId) {
        self.machine.borrow_mut().push(self.thread, site, StepKind::Reclaim { node });
        pause().await;
    }

    pub async fn invoke(&self, site: Site, obj: Object, op: OpName, args: Vec<Value>, loc: Option<Loc>) {
        self.machine.borrow_mut().push(self.thread, site, StepKind::Invoke { obj, op, args, loc });
        pause().await;
    }

    pub async fn ret(&self, site: Site, obj: Object, op: OpName, val: Value) {
        self.ret_final(site, obj, op, val);
        pause().await;
    }

    /// Response step that ends a program: no suspension follows it.
    pub fn ret_final(&self, site: Site, obj: Object, op: OpName, val: Value) {
        self.machine.borrow_mut().push(self.thread, site, StepKind::Return { obj, op, val });
    }

    pub async fn read_global(&self, site: Site, g: Global) -> Value {
        self.read(site, Loc::Global(g)).await
    }

    pub async fn write_global(&self, site: Site, g: Global, v: Value) {
        self.write(site, Loc::Global(g), v).await
    }

    pub fn field(r: RefWord, f: Field) -> Loc {
        Loc::Field(r, f)
    }
}
