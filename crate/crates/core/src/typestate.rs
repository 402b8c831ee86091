//! Partial functions over local types and the stepping relation used by the
//! program checker.
//!
//! `first` and `next` follow the usual axioms: `first(c.t) = c`,
//! `next(c.t) = t`, `next(loop(b, k)) = k`, `next(choice(x, y, k)) = k`.
//! `loop_body` and `choice_branches` project the remaining components. Every
//! function is undefined on `end`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::protocol::{Collective, DataKind, LocalAtom, LocalType, NodeKind, Type};

/// A communication action performed by a program, with concrete fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Comm(LocalAtom),
    Finalize,
}

impl Action {
    pub fn dtype(&self) -> Option<DataKind> {
        match self {
            Action::Comm(LocalAtom::Send { dtype, .. } | LocalAtom::Receive { dtype, .. }) => Some(*dtype),
            Action::Comm(LocalAtom::Collective(c)) => Some(c.dtype()),
            Action::Finalize => None,
        }
    }

    pub fn count(&self) -> Option<i64> {
        match self {
            Action::Comm(LocalAtom::Send { len, .. } | LocalAtom::Receive { len, .. }) => Some(*len),
            Action::Comm(LocalAtom::Collective(c)) => Some(*c.len()),
            Action::Finalize => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Comm(a) => a.fmt(f),
            Action::Finalize => f.write_str("finalize"),
        }
    }
}

/// A field of an atom that can disagree between type and program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Constructor,
    Peer,
    Root,
    Dtype,
    Len,
    Op,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Constructor => "operation",
            Field::Peer => "peer",
            Field::Root => "root",
            Field::Dtype => "datatype",
            Field::Len => "length",
            Field::Op => "reduction op",
        })
    }
}

/// The element kind and extent of the program buffer passed to a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferFacts {
    pub elem: DataKind,
    pub capacity: i64,
    /// Index of the first element used by the call.
    pub offset: i64,
}

impl BufferFacts {
    pub fn whole(elem: DataKind, capacity: i64) -> Self {
        BufferFacts { elem, capacity, offset: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("expected a communication, but the type is at {found}{}", fmt_action(.action))]
    NotAPrefix { found: NodeKind, action: Option<Action> },
    #[error("expected a {expected} in the type, found {found}")]
    NotA { expected: NodeKind, found: NodeKind },
    #[error("{}", fmt_mismatch(.expected, .actual, .fields))]
    HeadMismatch { expected: LocalAtom, actual: Action, fields: Vec<Field> },
    #[error("type expects a collective {boundary} here, but the program performs {action}")]
    AtCollectiveBoundary { boundary: NodeKind, action: Action },
    #[error("type has not reduced to end; remaining: {}", crate::protocol::print_local_type(.residual).trim_end())]
    ResidualNotEnd { residual: Arc<LocalType> },
    #[error("buffer holds {elem} elements but the call transfers {dtype}")]
    BufferKind { elem: DataKind, dtype: DataKind },
    #[error("buffer range [{offset}, {offset}+{len}) exceeds capacity {capacity}")]
    BufferCapacity { offset: i64, len: i64, capacity: i64 },
}

fn fmt_action(a: &Option<Action>) -> String {
    a.as_ref().map(|a| format!(" (program performs {a})")).unwrap_or_default()
}

fn fmt_mismatch(expected: &LocalAtom, actual: &Action, fields: &[Field]) -> String {
    let list: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
    format!("{} mismatch: type expects {expected}, program performs {actual}", list.join(", "))
}

impl StepError {
    /// Stable short code used in machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            StepError::NotAPrefix { found: NodeKind::End, .. } => "protocol-exhausted",
            StepError::NotAPrefix { .. } => "not-a-prefix",
            StepError::NotA { expected: NodeKind::Loop, .. } => "unexpected-loop",
            StepError::NotA { expected: NodeKind::Choice, .. } => "unexpected-choice",
            StepError::NotA { .. } => "wrong-node",
            StepError::HeadMismatch { fields, .. } => match fields.first() {
                Some(Field::Peer) => "peer-mismatch",
                Some(Field::Root) => "root-mismatch",
                Some(Field::Dtype) => "dtype-mismatch",
                Some(Field::Len) => "len-mismatch",
                Some(Field::Op) => "op-mismatch",
                Some(Field::Constructor) | None => "action-mismatch",
            },
            StepError::AtCollectiveBoundary { boundary: NodeKind::Choice, .. } => "missing-choice",
            StepError::AtCollectiveBoundary { .. } => "missing-loop",
            StepError::ResidualNotEnd { .. } => "residual-not-end",
            StepError::BufferKind { .. } => "buffer-kind",
            StepError::BufferCapacity { .. } => "buffer-capacity",
        }
    }
}

pub fn first(t: &LocalType) -> Result<&LocalAtom, StepError> {
    match t {
        Type::Prefix(a, _) => Ok(a),
        other => Err(StepError::NotAPrefix { found: other.node_kind(), action: None }),
    }
}

pub fn next(t: &LocalType) -> Result<&Arc<LocalType>, StepError> {
    match t {
        Type::Prefix(_, k) | Type::Loop { cont: k, .. } | Type::Choice { cont: k, .. } => Ok(k),
        Type::End => Err(StepError::NotAPrefix { found: NodeKind::End, action: None }),
    }
}

pub fn loop_body(t: &LocalType) -> Result<&Arc<LocalType>, StepError> {
    match t {
        Type::Loop { body, .. } => Ok(body),
        other => Err(StepError::NotA { expected: NodeKind::Loop, found: other.node_kind() }),
    }
}

pub fn choice_branches(t: &LocalType) -> Result<(&Arc<LocalType>, &Arc<LocalType>), StepError> {
    match t {
        Type::Choice { yes, no, .. } => Ok((yes, no)),
        other => Err(StepError::NotA { expected: NodeKind::Choice, found: other.node_kind() }),
    }
}

pub fn check_finalized(t: &Arc<LocalType>) -> Result<(), StepError> {
    if t.is_end() {
        Ok(())
    } else {
        Err(StepError::ResidualNotEnd { residual: t.clone() })
    }
}

/// Fields on which `expected` and `actual` disagree; empty iff they match.
pub fn diff_atoms(expected: &LocalAtom, actual: &LocalAtom) -> Vec<Field> {
    use LocalAtom::*;
    let mut out = Vec::new();
    let mut cmp = |f: Field, same: bool| {
        if !same {
            out.push(f)
        }
    };
    match (expected, actual) {
        (Send { peer: p1, dtype: d1, len: l1 }, Send { peer: p2, dtype: d2, len: l2 })
        | (Receive { peer: p1, dtype: d1, len: l1 }, Receive { peer: p2, dtype: d2, len: l2 }) => {
            cmp(Field::Peer, p1 == p2);
            cmp(Field::Dtype, d1 == d2);
            cmp(Field::Len, l1 == l2);
        }
        (Collective(c1), Collective(c2)) if c1.name() == c2.name() => {
            cmp(Field::Root, c1.root() == c2.root());
            cmp(Field::Dtype, c1.dtype() == c2.dtype());
            cmp(Field::Len, c1.len() == c2.len());
            if let (
                self::Collective::Allreduce { op: o1, .. },
                self::Collective::Allreduce { op: o2, .. },
            ) = (c1, c2)
            {
                cmp(Field::Op, o1 == o2);
            }
        }
        _ => cmp(Field::Constructor, false),
    }
    out
}

/// Consumes the head of `t` with `action`.
///
/// The head atom must match the action in every field, and the buffer must
/// hold elements of the transferred datatype with room for `len` elements
/// from its offset. `Finalize` requires `t` to be `end`.
pub fn step(
    t: &Arc<LocalType>,
    action: &Action,
    buf: Option<&BufferFacts>,
) -> Result<Arc<LocalType>, StepError> {
    let atom = match action {
        Action::Finalize => {
            check_finalized(t)?;
            return Ok(t.clone());
        }
        Action::Comm(a) => a,
    };
    let (head, k) = match &**t {
        Type::Prefix(head, k) => (head, k),
        Type::End => {
            return Err(StepError::NotAPrefix { found: NodeKind::End, action: Some(action.clone()) })
        }
        other => {
            return Err(StepError::AtCollectiveBoundary {
                boundary: other.node_kind(),
                action: action.clone(),
            })
        }
    };
    let fields = diff_atoms(head, atom);
    if !fields.is_empty() {
        return Err(StepError::HeadMismatch { expected: head.clone(), actual: action.clone(), fields });
    }
    if let Some(b) = buf {
        let dtype = action.dtype().expect("communication actions carry a datatype");
        let len = action.count().expect("communication actions carry a length");
        if b.elem != dtype {
            return Err(StepError::BufferKind { elem: b.elem, dtype });
        }
        let fits = b.offset >= 0 && b.offset.checked_add(len).is_some_and(|end| end <= b.capacity);
        if !fits {
            return Err(StepError::BufferCapacity { offset: b.offset, len, capacity: b.capacity });
        }
    }
    Ok(k.clone())
}

/// Convenience for building collective actions in tests and tools.
pub fn collective(c: Collective<i64>) -> Action {
    Action::Comm(LocalAtom::Collective(c))
}
