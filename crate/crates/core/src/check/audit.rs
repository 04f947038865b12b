//! Mechanical audits of how a scheme is woven into the list.

use super::{Scope, Scopes};
use crate::sim::config::{Configuration, Fault};
use crate::sim::exec::{Execution, Observer};
use crate::sim::step::{Object, OpName, Site, Step, StepKind};
use crate::sim::value::{Field, Loc, Value};

/// Checks the integration surface:
/// - scheme operations are invoked only at operation boundaries, at the
///   allocation/retirement sites, or at list access sites as replacements;
/// - the list never touches scheme globals or scheme fields itself;
/// - scheme-internal steps never touch list fields or entry points.
pub fn check_integration(exec: &Execution) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let mut scopes = Scopes::default();
    for step in &exec.steps {
        let top = scopes.top(step);
        if let StepKind::Invoke { obj: Object::Smr, op, loc, .. } = &step.kind {
            let ok = match op {
                OpName::BeginOp | OpName::EndOp => {
                    step.site == Site::Boundary && matches!(top, Some((Object::Set, ..)))
                }
                OpName::Alloc => step.site == Site::InsertAlloc,
                OpName::Retire => matches!(step.site, Site::InsertRetire | Site::DeleteRetire),
                OpName::Read | OpName::Write | OpName::Cas => {
                    loc.is_some() && step.site != Site::Boundary && matches!(top, Some((Object::Set, ..)))
                }
                _ => false,
            };
            if !ok {
                problems.push(format!("step {}: scheme {op} invoked at {}", step.index, step.site));
            }
        }
        let scope = scopes.advance(step);
        let Some(loc) = step.kind.loc() else {
            continue;
        };
        let scheme_owned = match loc {
            Loc::Global(g) => !g.is_entry_point(),
            Loc::Field(_, f) => f.is_scheme_field(),
        };
        let list_write = matches!(step.kind, StepKind::Write { .. } | StepKind::Cas { .. })
            && matches!(loc, Loc::Field(_, Field::Next | Field::Key) | Loc::Global(_))
            && !scheme_owned;
        match scope {
            Scope::Plain if scheme_owned => {
                problems.push(format!("step {}: list accesses scheme state at {}", step.index, step.site))
            }
            Scope::Scheme if list_write => {
                problems.push(format!("step {}: scheme writes list state at {}", step.index, step.site))
            }
            _ => {}
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Checks that every read replacement returns a word that the replaced
/// location held at some configuration between its invocation and response.
pub fn check_replacements(exec: &Execution) -> Result<(), Vec<String>> {
    struct Audit {
        /// Per thread: the replaced location and every word it held so far.
        open: Vec<Option<(Loc, Vec<Value>)>>,
        problems: Vec<String>,
    }
    impl Observer for Audit {
        fn after(&mut self, cfg: &Configuration, step: &Step, _f: &[Fault]) {
            let i = step.thread.index();
            if self.open.len() <= i {
                self.open.resize(i + 1, None);
            }
            match &step.kind {
                StepKind::Invoke { obj: Object::Smr, op: OpName::Read, loc: Some(loc), .. } => {
                    let now = cfg.load(loc).unwrap_or(Value::Empty);
                    self.open[i] = Some((*loc, vec![now]));
                }
                StepKind::Return { obj: Object::Smr, op: OpName::Read, val } => {
                    if let Some((loc, seen)) = self.open[i].take() {
                        if !seen.iter().any(|w| w.same_word(val)) {
                            self.problems.push(format!(
                                "step {}: read of {loc:?} returned a word it never held during the call",
                                step.index
                            ));
                        }
                    }
                }
                _ => {}
            }
            let changed = match &step.kind {
                StepKind::Write { loc, .. } => Some(loc),
                StepKind::Cas { loc, success: true, .. } => Some(loc),
                _ => None,
            };
            if let Some(w) = changed {
                for (loc, seen) in self.open.iter_mut().flatten() {
                    if loc.physical() == w.physical() {
                        seen.push(cfg.load(loc).unwrap_or(Value::Empty));
                    }
                }
            }
        }
    }
    let mut a = Audit { open: Vec::new(), problems: Vec::new() };
    exec.replay(&mut a);
    if a.problems.is_empty() {
        Ok(())
    } else {
        Err(a.problems)
    }
}
