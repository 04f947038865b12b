//! Line-oriented text form of an execution.
//!
//! ```text
//! # era-lab trace scheme=hp policy=recycle seed=- threads=2 hp-k=3 hp-r=12 ibr-a=- prefill=1,2 scenario=figure1
//! # T1: delete(3)
//! # T2: delete(1); insert(3)
//! 1 T1 INVOKE set.delete i3 site=op
//! 2 T1 READ g:head r0.1@2 site=search.head
//! ...
//! # end 812
//! ```
//!
//! Values are `_` (empty), `i<v>` or `r<addr>.<node>` with optional suffixes
//! `m` (mark), `@<origin>` and `~<taint origin>`. Locations are `g:<global>`
//! or `n:<ref>/<field>`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sched::Workload;
use crate::sim::config::{Configuration, Policy};
use crate::sim::exec::{Execution, RunMeta};
use crate::sim::step::{Object, OpName, Site, Step, StepKind};
use crate::sim::value::{Field, Global, Loc, NodeId, RefWord, Taint, ThreadId, Value, NULL_ADDR};
use crate::smr::Scheme;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("trace line {line}: {msg}")]
pub struct TraceError {
    pub line: usize,
    pub msg: String,
}

const MAGIC: &str = "# era-lab trace";

pub fn emit(exec: &Execution) -> String {
    let mut out = header(&exec.meta);
    for s in &exec.steps {
        out.push_str(&step_line(s));
        out.push('\n');
    }
    let _ = writeln!(out, "# end {}", exec.steps.len());
    out
}

fn header(meta: &RunMeta) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let (k, r, a) = match meta.scheme {
        Scheme::Hp { k, r } => (Some(k.to_string()), Some(r.to_string()), None),
        Scheme::Ibr { a } => (None, None, Some(a.to_string())),
        _ => (None, None, None),
    };
    let prefill =
        (!meta.prefill.is_empty()).then(|| meta.prefill.iter().map(i64::to_string).collect::<Vec<_>>().join(","));
    let mut out = format!(
        "{MAGIC} scheme={} policy={} seed={} threads={} hp-k={} hp-r={} ibr-a={} prefill={} scenario={}\n",
        meta.scheme.name(),
        meta.policy,
        opt(meta.seed.map(|s| s.to_string())),
        meta.threads,
        opt(k),
        opt(r),
        opt(a),
        opt(prefill),
        opt(meta.scenario.clone()),
    );
    for line in meta.workload.to_string().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

pub fn step_line(s: &Step) -> String {
    let mut out = format!("{} {} ", s.index, s.thread);
    match &s.kind {
        StepKind::Invoke { obj, op, args, loc } => {
            let _ = write!(out, "INVOKE {}.{op}", obj_name(*obj));
            for a in args {
                let _ = write!(out, " {}", value(a));
            }
            if let Some(l) = loc {
                let _ = write!(out, " loc={}", location(l));
            }
        }
        StepKind::Return { obj, op, val } => {
            let _ = write!(out, "RETURN {}.{op} {}", obj_name(*obj), value(val));
        }
        StepKind::Read { loc, val } => {
            let _ = write!(out, "READ {} {}", location(loc), value(val));
        }
        StepKind::Write { loc, old, new } => {
            let _ = write!(out, "WRITE {} {} {}", location(loc), value(old), value(new));
        }
        StepKind::Cas { loc, expected, new, old, success } => {
            let _ = write!(
                out,
                "CAS {} {} {} {} {}",
                location(loc),
                value(expected),
                value(new),
                value(old),
                if *success { "ok" } else { "fail" }
            );
        }
        StepKind::Alloc { node, addr, key } => {
            let _ = write!(out, "ALLOC {node} {addr} {key}");
        }
        StepKind::Retire { node, via } => {
            let _ = write!(out, "RETIRE {node} {}", refword(via));
        }
        StepKind::Reclaim { node } => {
            let _ = write!(out, "RECLAIM {node}");
        }
        StepKind::LocalCompute => out.push_str("LOCAL"),
    }
    let _ = write!(out, " site={}", s.site);
    if !s.uses.is_empty() {
        let u: Vec<String> = s.uses.iter().map(|u| u.to_string()).collect();
        let _ = write!(out, " use={}", u.join(","));
    }
    out
}

fn obj_name(o: Object) -> &'static str {
    match o {
        Object::Set => "set",
        Object::Smr => "smr",
    }
}

fn taint_suffix(out: &mut String, t: Taint) {
    if let Some(o) = t.0 {
        let _ = write!(out, "~{o}");
    }
}

fn refword(r: &RefWord) -> String {
    let mut out = String::from("r");
    if r.addr == NULL_ADDR {
        out.push_str("null");
    } else {
        let _ = write!(out, "{}", r.addr);
    }
    let _ = write!(out, ".{}", r.target.0);
    if r.mark {
        out.push('m');
    }
    if let Some(o) = r.origin {
        let _ = write!(out, "@{o}");
    }
    taint_suffix(&mut out, r.taint);
    out
}

fn value(v: &Value) -> String {
    match v {
        Value::Empty => "_".into(),
        Value::Int(x, t) => {
            let mut out = format!("i{x}");
            taint_suffix(&mut out, *t);
            out
        }
        Value::Ref(r) => refword(r),
    }
}

fn global(g: &Global) -> String {
    match g {
        Global::Head => "head".into(),
        Global::Tail => "tail".into(),
        Global::Epoch => "epoch".into(),
        Global::Announce(t) => format!("ann.{t}"),
        Global::HazardSlot(t, s) => format!("hp.{t}.{s}"),
        Global::ReserveLo(t) => format!("lo.{t}"),
        Global::ReserveHi(t) => format!("hi.{t}"),
    }
}

fn field_name(f: Field) -> &'static str {
    match f {
        Field::Next => "next",
        Field::Key => "key",
        Field::Birth => "birth",
        Field::RetireEpoch => "retire_epoch",
    }
}

fn location(l: &Loc) -> String {
    match l {
        Loc::Global(g) => format!("g:{}", global(g)),
        Loc::Field(r, f) => format!("n:{}/{}", refword(r), field_name(*f)),
    }
}

// ---- parsing ----

type P<T> = Result<T, String>;

fn parse_thread(s: &str) -> P<ThreadId> {
    s.strip_prefix('T')
        .and_then(|d| d.parse::<u16>().ok())
        .filter(|d| *d >= 1)
        .map(ThreadId)
        .ok_or_else(|| format!("bad thread `{s}`"))
}

fn parse_node(s: &str) -> P<NodeId> {
    s.strip_prefix('#').and_then(|d| d.parse().ok()).map(NodeId).ok_or_else(|| format!("bad node `{s}`"))
}

/// Splits trailing `~<taint>` off a token.
fn split_taint(s: &str) -> P<(&str, Taint)> {
    match s.split_once('~') {
        Some((body, t)) => Ok((body, Taint::at(t.parse().map_err(|_| format!("bad taint in `{s}`"))?))),
        None => Ok((s, Taint::CLEAN)),
    }
}

fn parse_ref(s: &str) -> P<RefWord> {
    let bad = || format!("bad reference `{s}`");
    let (body, taint) = split_taint(s)?;
    let body = body.strip_prefix('r').ok_or_else(bad)?;
    let (body, origin) = match body.split_once('@') {
        Some((b, o)) => (b, Some(o.parse().map_err(|_| bad())?)),
        None => (body, None),
    };
    let (addr, rest) = body.split_once('.').ok_or_else(bad)?;
    let (target, mark) = match rest.strip_suffix('m') {
        Some(t) => (t, true),
        None => (rest, false),
    };
    let addr = if addr == "null" { NULL_ADDR } else { addr.parse().map_err(|_| bad())? };
    Ok(RefWord { addr, target: NodeId(target.parse().map_err(|_| bad())?), mark, taint, origin })
}

fn parse_value(s: &str) -> P<Value> {
    if s == "_" {
        return Ok(Value::Empty);
    }
    if s.starts_with('r') {
        return parse_ref(s).map(Value::Ref);
    }
    let (body, taint) = split_taint(s)?;
    let v = body.strip_prefix('i').and_then(|d| d.parse().ok()).ok_or_else(|| format!("bad value `{s}`"))?;
    Ok(Value::Int(v, taint))
}

fn parse_global(s: &str) -> P<Global> {
    let parts: Vec<&str> = s.split('.').collect();
    Ok(match parts.as_slice() {
        ["head"] => Global::Head,
        ["tail"] => Global::Tail,
        ["epoch"] => Global::Epoch,
        ["ann", t] => Global::Announce(parse_thread(t)?),
        ["hp", t, k] => Global::HazardSlot(parse_thread(t)?, k.parse().map_err(|_| format!("bad slot `{s}`"))?),
        ["lo", t] => Global::ReserveLo(parse_thread(t)?),
        ["hi", t] => Global::ReserveHi(parse_thread(t)?),
        _ => return Err(format!("unknown global `{s}`")),
    })
}

fn parse_loc(s: &str) -> P<Loc> {
    if let Some(g) = s.strip_prefix("g:") {
        return parse_global(g).map(Loc::Global);
    }
    let body = s.strip_prefix("n:").ok_or_else(|| format!("bad location `{s}`"))?;
    let (r, f) = body.rsplit_once('/').ok_or_else(|| format!("bad location `{s}`"))?;
    let f = match f {
        "next" => Field::Next,
        "key" => Field::Key,
        "birth" => Field::Birth,
        "retire_epoch" => Field::RetireEpoch,
        _ => return Err(format!("unknown field `{f}`")),
    };
    Ok(Loc::Field(parse_ref(r)?, f))
}

fn parse_obj_op(s: &str) -> P<(Object, OpName)> {
    let (o, op) = s.split_once('.').ok_or_else(|| format!("bad operation `{s}`"))?;
    let obj = match o {
        "set" => Object::Set,
        "smr" => Object::Smr,
        _ => return Err(format!("unknown object `{o}`")),
    };
    Ok((obj, op.parse()?))
}

pub fn parse_step(line: &str) -> P<Step> {
    let mut toks: Vec<&str> = line.split_whitespace().collect();
    let mut uses = Vec::new();
    if let Some(u) = toks.last().and_then(|t| t.strip_prefix("use=")) {
        uses = u.split(',').map(|x| x.parse().map_err(|_| format!("bad use list `{u}`"))).collect::<P<_>>()?;
        toks.pop();
    }
    let site: Site = toks.pop().and_then(|t| t.strip_prefix("site=")).ok_or("missing site")?.parse()?;
    if toks.len() < 3 {
        return Err("truncated step".into());
    }
    let index = toks[0].parse().map_err(|_| format!("bad index `{}`", toks[0]))?;
    let thread = parse_thread(toks[1])?;
    let a = &toks[3..];
    let want = |n: usize| if a.len() == n { Ok(()) } else { Err(format!("{} expects {n} arguments", toks[2])) };
    let kind = match toks[2] {
        "INVOKE" => {
            let (obj, op) = parse_obj_op(a.first().ok_or("missing operation")?)?;
            let mut args = Vec::new();
            let mut loc = None;
            for t in &a[1..] {
                match t.strip_prefix("loc=") {
                    Some(l) => loc = Some(parse_loc(l)?),
                    None => args.push(parse_value(t)?),
                }
            }
            StepKind::Invoke { obj, op, args, loc }
        }
        "RETURN" => {
            want(2)?;
            let (obj, op) = parse_obj_op(a[0])?;
            StepKind::Return { obj, op, val: parse_value(a[1])? }
        }
        "READ" => {
            want(2)?;
            StepKind::Read { loc: parse_loc(a[0])?, val: parse_value(a[1])? }
        }
        "WRITE" => {
            want(3)?;
            StepKind::Write { loc: parse_loc(a[0])?, old: parse_value(a[1])?, new: parse_value(a[2])? }
        }
        "CAS" => {
            want(5)?;
            let success = match a[4] {
                "ok" => true,
                "fail" => false,
                o => return Err(format!("bad CAS outcome `{o}`")),
            };
            StepKind::Cas {
                loc: parse_loc(a[0])?,
                expected: parse_value(a[1])?,
                new: parse_value(a[2])?,
                old: parse_value(a[3])?,
                success,
            }
        }
        "ALLOC" => {
            want(3)?;
            StepKind::Alloc {
                node: parse_node(a[0])?,
                addr: a[1].parse().map_err(|_| format!("bad address `{}`", a[1]))?,
                key: a[2].parse().map_err(|_| format!("bad key `{}`", a[2]))?,
            }
        }
        "RETIRE" => {
            want(2)?;
            StepKind::Retire { node: parse_node(a[0])?, via: parse_ref(a[1])? }
        }
        "RECLAIM" => {
            want(1)?;
            StepKind::Reclaim { node: parse_node(a[0])? }
        }
        "LOCAL" => {
            want(0)?;
            StepKind::LocalCompute
        }
        k => return Err(format!("unknown step kind `{k}`")),
    };
    Ok(Step { index, thread, site, kind, uses })
}

fn parse_header(line: &str) -> P<RunMeta> {
    let rest = line.strip_prefix(MAGIC).ok_or("missing trace header")?;
    let mut fields = std::collections::BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("bad header field `{tok}`"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("header lacks `{k}`"));
    let opt = |k: &str| -> P<Option<&str>> { get(k).map(|v| (v != "-").then_some(v)) };
    let num = |k: &str| -> P<Option<u64>> { opt(k)?.map(|v| v.parse().map_err(|_| format!("bad `{k}`"))).transpose() };
    let threads = num("threads")?.ok_or("header needs a thread count")? as usize;
    let scheme = Scheme::from_parts(
        get("scheme")?,
        threads,
        num("hp-k")?.map(|k| k as u8),
        num("hp-r")?.map(|r| r as usize),
        num("ibr-a")?,
    )?;
    let prefill = match opt("prefill")? {
        Some(p) => p.split(',').map(|k| k.parse().map_err(|_| format!("bad prefill key `{k}`"))).collect::<P<_>>()?,
        None => Vec::new(),
    };
    Ok(RunMeta {
        scheme,
        policy: get("policy")?.parse::<Policy>()?,
        threads,
        prefill,
        workload: Workload::default(),
        seed: num("seed")?,
        scenario: opt("scenario")?.map(str::to_string),
    })
}

/// Parses an emitted trace back into the execution it describes.
pub fn parse(text: &str) -> Result<Execution, TraceError> {
    let err = |line: usize, msg: String| TraceError { line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| err(1, "empty trace".into()))?;
    let mut meta = parse_header(first).map_err(|m| err(1, m))?;
    let mut workload = String::new();
    let mut steps = Vec::new();
    let mut end = None;
    for (n, line) in lines {
        if end.is_some() {
            return Err(err(n, "content after end marker".into()));
        }
        if let Some(c) = line.strip_prefix("# end ") {
            let count: usize = c.trim().parse().map_err(|_| err(n, "bad end marker".into()))?;
            if count != steps.len() {
                return Err(err(n, format!("end marker says {count} steps, found {}", steps.len())));
            }
            end = Some(n);
            continue;
        }
        if let Some(w) = line.strip_prefix("# ") {
            if !steps.is_empty() {
                return Err(err(n, "workload line after steps".into()));
            }
            workload.push_str(w);
            workload.push('\n');
            continue;
        }
        let step = parse_step(line).map_err(|m| err(n, m))?;
        if step.index != steps.len() + 1 {
            return Err(err(n, format!("expected step {}, found {}", steps.len() + 1, step.index)));
        }
        steps.push(step);
    }
    if end.is_none() {
        return Err(err(text.lines().count() + 1, "truncated trace: no end marker".into()));
    }
    meta.workload = workload.parse().map_err(|m| err(1, m))?;
    let initial = Configuration::initial(&meta.init_spec());
    Ok(Execution { meta, initial, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        let vals = [
            Value::Empty,
            Value::int(-4),
            Value::Int(7, Taint::at(3)),
            Value::Ref(RefWord::new(5, NodeId(9)).get_marked().with_origin(12)),
            Value::Ref(RefWord { taint: Taint::at(2), ..RefWord::NULL }),
        ];
        for v in vals {
            assert_eq!(parse_value(&value(&v)).unwrap(), v, "{}", value(&v));
        }
    }

    #[test]
    fn locations_round_trip() {
        let locs = [
            Loc::Global(Global::Head),
            Loc::Global(Global::HazardSlot(ThreadId(2), 1)),
            Loc::Global(Global::ReserveHi(ThreadId(3))),
            Loc::Field(RefWord::new(3, NodeId(4)).with_origin(8), Field::RetireEpoch),
        ];
        for l in locs {
            assert_eq!(parse_loc(&location(&l)).unwrap(), l);
        }
    }

    #[test]
    fn step_lines_round_trip() {
        let r = RefWord::new(2, NodeId(3)).with_origin(4);
        let kinds = vec![
            StepKind::Invoke {
                obj: Object::Smr,
                op: OpName::Read,
                args: vec![],
                loc: Some(Loc::Field(r, Field::Next)),
            },
            StepKind::Invoke { obj: Object::Set, op: OpName::Insert, args: vec![Value::int(3)], loc: None },
            StepKind::Return { obj: Object::Set, op: OpName::Insert, val: Value::int(1) },
            StepKind::Cas {
                loc: Loc::Field(r, Field::Next),
                expected: Value::Empty,
                new: Value::Ref(r),
                old: Value::Empty,
                success: true,
            },
            StepKind::Alloc { node: NodeId(3), addr: 2, key: -1 },
            StepKind::Retire { node: NodeId(3), via: r },
            StepKind::Reclaim { node: NodeId(3) },
            StepKind::LocalCompute,
        ];
        for kind in kinds {
            let s = Step { index: 5, thread: ThreadId(2), site: Site::SearchCas, kind, uses: vec![1, 3] };
            assert_eq!(parse_step(&step_line(&s)).unwrap(), s);
        }
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let e = parse("# era-lab trace scheme=none policy=recycle seed=- threads=1 hp-k=- hp-r=- ibr-a=- prefill=- scenario=-\n1 T1 BOGUS site=op\n# end 1\n")
            .unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse(
            "# era-lab trace scheme=none policy=recycle seed=- threads=1 hp-k=- hp-r=- ibr-a=- prefill=- scenario=-\n",
        )
        .unwrap_err();
        assert!(e.msg.contains("truncated"));
    }
}
