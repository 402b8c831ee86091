//! Well-formedness of a protocol under a concrete parameter instantiation.

use std::fmt;

use crate::expr::{check_refinement, Env, EvalError, Expr};
use crate::protocol::{AstPath, GlobalAtom, PathStep, Protocol, SourceMap, Type};
use crate::syntax::Pos;

/// Exclusive bounds on the process count.
pub const MIN_PROCS_EXCLUSIVE: i64 = 1;
pub const MAX_PROCS_EXCLUSIVE: i64 = 32768;

const RESERVED: &[&str] = &["me", "np"];

/// Values for a protocol's `Pi` parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Instantiation(pub Env);

impl Instantiation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: i64) -> Self {
        self.0.insert(name, value);
        self
    }

    pub fn env(&self) -> &Env {
        &self.0
    }
}

impl From<Env> for Instantiation {
    fn from(env: Env) -> Self {
        Instantiation(env)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Location {
    Binder(usize),
    Header,
    Node(AstPath),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WfDiagnostic {
    pub location: Location,
    pub code: &'static str,
    pub message: String,
}

impl WfDiagnostic {
    pub fn pos(&self, map: &SourceMap) -> Option<Pos> {
        match &self.location {
            Location::Binder(i) => map.binders.get(*i).copied(),
            Location::Header => Some(map.nprocs),
            Location::Node(path) => map.nodes.get(path).copied(),
        }
    }

    /// `file:line:col: message`, or `file: message` when no position is known.
    pub fn render(&self, file: &str, map: Option<&SourceMap>) -> String {
        match map.and_then(|m| self.pos(m)) {
            Some(pos) => format!("{file}:{pos}: {}", self.message),
            None => format!("{file}: {}", self.message),
        }
    }
}

impl fmt::Display for WfDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Location::Binder(i) => write!(f, "binder #{i}: {}", self.message),
            Location::Header => write!(f, "nprocs: {}", self.message),
            Location::Node(p) => write!(f, "{p}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WfReport {
    pub diagnostics: Vec<WfDiagnostic>,
}

impl WfReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

pub fn check_wf(p: &Protocol, inst: &Instantiation) -> WfReport {
    let mut diags = Vec::new();
    let mut push = |location: Location, code: &'static str, message: String| {
        diags.push(WfDiagnostic { location, code, message })
    };

    let mut bound = Env::new();
    for (i, b) in p.binders.iter().enumerate() {
        let at = || Location::Binder(i);
        if RESERVED.contains(&b.name.as_str()) {
            push(at(), "reserved-name", format!("`{}` is reserved and cannot be a parameter", b.name));
            continue;
        }
        if p.binders[..i].iter().any(|prev| prev.name == b.name) {
            push(at(), "duplicate-binder", format!("parameter `{}` bound twice", b.name));
            continue;
        }
        let Ok(value) = inst.0.get(&b.name) else {
            push(at(), "missing-binding", format!("no value for parameter `{}`", b.name));
            continue;
        };
        // Refinements may mention earlier binders only.
        match check_refinement(&b.kind, value, &bound) {
            Ok(true) => {}
            Ok(false) => push(
                at(),
                "refinement",
                format!("refinement violated at binder {} (value {value}, kind {})", b.name, b.kind),
            ),
            Err(e) => push(at(), "eval", format!("binder {}: {e}", b.name)),
        }
        bound.insert(b.name.clone(), value);
    }
    for (name, _) in inst.0.iter() {
        if !p.binders.iter().any(|b| b.name == name) {
            push(Location::Header, "unknown-parameter", format!("`{name}` is not a parameter of the protocol"));
        }
    }

    if !(MIN_PROCS_EXCLUSIVE < p.nprocs && p.nprocs < MAX_PROCS_EXCLUSIVE) {
        push(
            Location::Header,
            "nprocs-range",
            format!(
                "process count {} outside {MIN_PROCS_EXCLUSIVE} < nprocs < {MAX_PROCS_EXCLUSIVE}",
                p.nprocs
            ),
        );
    }

    let mut walker = Walker { env: &bound, nprocs: p.nprocs, diags: Vec::new() };
    walker.walk(&p.body, AstPath::default());
    diags.extend(walker.diags);
    WfReport { diagnostics: diags }
}

struct Walker<'a> {
    env: &'a Env,
    nprocs: i64,
    diags: Vec<WfDiagnostic>,
}

impl Walker<'_> {
    fn walk(&mut self, t: &Type<GlobalAtom>, mut path: AstPath) {
        let mut cur = t;
        loop {
            match cur {
                Type::End => return,
                Type::Prefix(atom, k) => {
                    self.atom(atom, &path);
                    path = path.child(PathStep::Next);
                    cur = k;
                }
                Type::Loop { body, cont } => {
                    self.walk(body, path.child(PathStep::LoopBody));
                    path = path.child(PathStep::LoopCont);
                    cur = cont;
                }
                Type::Choice { yes, no, cont } => {
                    self.walk(yes, path.child(PathStep::ChoiceTrue));
                    self.walk(no, path.child(PathStep::ChoiceFalse));
                    path = path.child(PathStep::ChoiceCont);
                    cur = cont;
                }
            }
        }
    }

    fn report(&mut self, path: &AstPath, code: &'static str, message: String) {
        self.diags.push(WfDiagnostic { location: Location::Node(path.clone()), code, message });
    }

    fn value(&mut self, e: &Expr, what: &str, path: &AstPath) -> Option<i64> {
        match e.eval(self.env) {
            Ok(v) => Some(v),
            Err(err) => {
                let hint = match &err {
                    EvalError::UnboundVariable(v) if RESERVED.contains(&v.as_str()) => {
                        " (`me` and `np` are not allowed in protocols)"
                    }
                    _ => "",
                };
                self.report(path, "eval", format!("{what} `{e}`: {err}{hint}"));
                None
            }
        }
    }

    fn rank(&mut self, e: &Expr, what: &str, path: &AstPath) -> Option<i64> {
        let v = self.value(e, what, path)?;
        if !(0..self.nprocs).contains(&v) {
            self.report(
                path,
                "rank-range",
                format!("{what} `{e}` = {v} is not a rank in [0, {})", self.nprocs),
            );
            return None;
        }
        Some(v)
    }

    fn length(&mut self, e: &Expr, path: &AstPath) {
        if let Some(v) = self.value(e, "length", path) {
            if v < 0 {
                self.report(path, "negative-length", format!("length `{e}` = {v} is negative"));
            }
        }
    }

    fn atom(&mut self, atom: &GlobalAtom, path: &AstPath) {
        match atom {
            GlobalAtom::Message { src, dst, len, .. } => {
                let s = self.rank(src, "source", path);
                let d = self.rank(dst, "destination", path);
                if let (Some(s), Some(d)) = (s, d) {
                    if s == d {
                        self.report(path, "self-message", format!("self-message: rank {s} sends to itself"));
                    }
                }
                self.length(len, path);
            }
            GlobalAtom::Collective(c) => {
                if let Some(root) = c.root() {
                    self.rank(root, "root", path);
                }
                self.length(c.len(), path);
            }
        }
    }
}
