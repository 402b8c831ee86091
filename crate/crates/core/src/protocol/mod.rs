//! Global and local communication types.
//!
//! A type is a chain of atoms ending in `end`, with collective `loop` and
//! `choice` nodes that carry their own continuation. Global types use
//! point-to-point `message` atoms; local types replace them by `send` and
//! `receive` with concrete integer fields.

mod parse;
mod print;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use parse::{parse_local_type, parse_protocol, parse_protocol_with_spans};
pub use print::{print_local_type, print_protocol};

use crate::expr::{Expr, Kind};
use crate::syntax::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataKind {
    Int,
    Float,
}

impl DataKind {
    pub fn mpi_name(self) -> &'static str {
        match self {
            DataKind::Int => "MPI_INT",
            DataKind::Float => "MPI_FLOAT",
        }
    }

    pub fn from_mpi_name(s: &str) -> Option<Self> {
        match s {
            "MPI_INT" => Some(DataKind::Int),
            "MPI_FLOAT" => Some(DataKind::Float),
            _ => None,
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mpi_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReduceOp {
    Max,
    Min,
    Sum,
}

impl ReduceOp {
    pub fn mpi_name(self) -> &'static str {
        match self {
            ReduceOp::Max => "MPI_MAX",
            ReduceOp::Min => "MPI_MIN",
            ReduceOp::Sum => "MPI_SUM",
        }
    }

    pub fn from_mpi_name(s: &str) -> Option<Self> {
        match s {
            "MPI_MAX" => Some(ReduceOp::Max),
            "MPI_MIN" => Some(ReduceOp::Min),
            "MPI_SUM" => Some(ReduceOp::Sum),
            _ => None,
        }
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mpi_name())
    }
}

/// Collective operations, shared between global and local atoms. `V` is
/// [`Expr`] in global types and `i64` in local ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Collective<V> {
    Scatter { root: V, dtype: DataKind, len: V },
    Gather { root: V, dtype: DataKind, len: V },
    Bcast { root: V, dtype: DataKind, len: V },
    Allreduce { dtype: DataKind, len: V, op: ReduceOp },
}

impl<V> Collective<V> {
    pub fn name(&self) -> &'static str {
        match self {
            Collective::Scatter { .. } => "scatter",
            Collective::Gather { .. } => "gather",
            Collective::Bcast { .. } => "bcast",
            Collective::Allreduce { .. } => "allreduce",
        }
    }

    pub fn root(&self) -> Option<&V> {
        match self {
            Collective::Scatter { root, .. }
            | Collective::Gather { root, .. }
            | Collective::Bcast { root, .. } => Some(root),
            Collective::Allreduce { .. } => None,
        }
    }

    pub fn dtype(&self) -> DataKind {
        match self {
            Collective::Scatter { dtype, .. }
            | Collective::Gather { dtype, .. }
            | Collective::Bcast { dtype, .. }
            | Collective::Allreduce { dtype, .. } => *dtype,
        }
    }

    pub fn len(&self) -> &V {
        match self {
            Collective::Scatter { len, .. }
            | Collective::Gather { len, .. }
            | Collective::Bcast { len, .. }
            | Collective::Allreduce { len, .. } => len,
        }
    }

    pub fn try_map<W, E>(&self, mut f: impl FnMut(&V) -> Result<W, E>) -> Result<Collective<W>, E> {
        Ok(match self {
            Collective::Scatter { root, dtype, len } => {
                Collective::Scatter { root: f(root)?, dtype: *dtype, len: f(len)? }
            }
            Collective::Gather { root, dtype, len } => {
                Collective::Gather { root: f(root)?, dtype: *dtype, len: f(len)? }
            }
            Collective::Bcast { root, dtype, len } => {
                Collective::Bcast { root: f(root)?, dtype: *dtype, len: f(len)? }
            }
            Collective::Allreduce { dtype, len, op } => {
                Collective::Allreduce { dtype: *dtype, len: f(len)?, op: *op }
            }
        })
    }
}

impl<V: fmt::Display> fmt::Display for Collective<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Collective::Scatter { root, dtype, len }
            | Collective::Gather { root, dtype, len }
            | Collective::Bcast { root, dtype, len } => {
                write!(f, "{}({root},{dtype},{len})", self.name())
            }
            Collective::Allreduce { dtype, len, op } => write!(f, "allreduce({dtype},{len},{op})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GlobalAtom {
    Message { src: Expr, dst: Expr, dtype: DataKind, len: Expr },
    Collective(Collective<Expr>),
}

impl fmt::Display for GlobalAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalAtom::Message { src, dst, dtype, len } => {
                write!(f, "message({src},{dst},{dtype},{len})")
            }
            GlobalAtom::Collective(c) => c.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LocalAtom {
    Send { peer: i64, dtype: DataKind, len: i64 },
    Receive { peer: i64, dtype: DataKind, len: i64 },
    Collective(Collective<i64>),
}

impl LocalAtom {
    pub fn name(&self) -> &'static str {
        match self {
            LocalAtom::Send { .. } => "send",
            LocalAtom::Receive { .. } => "receive",
            LocalAtom::Collective(c) => c.name(),
        }
    }

    pub fn is_collective(&self) -> bool {
        matches!(self, LocalAtom::Collective(_))
    }
}

impl fmt::Display for LocalAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalAtom::Send { peer, dtype, len } => write!(f, "send({peer},{dtype},{len})"),
            LocalAtom::Receive { peer, dtype, len } => write!(f, "receive({peer},{dtype},{len})"),
            LocalAtom::Collective(c) => c.fmt(f),
        }
    }
}

/// A communication type over atoms `A`.
///
/// Children are reference-counted so continuations can be shared cheaply by
/// the checker and the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type<A> {
    End,
    Prefix(A, Arc<Type<A>>),
    Loop { body: Arc<Type<A>>, cont: Arc<Type<A>> },
    Choice { yes: Arc<Type<A>>, no: Arc<Type<A>>, cont: Arc<Type<A>> },
}

pub type GlobalType = Type<GlobalAtom>;
pub type LocalType = Type<LocalAtom>;

/// Constructor of a type node, without its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    End,
    Prefix,
    Loop,
    Choice,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::End => "end",
            NodeKind::Prefix => "prefix",
            NodeKind::Loop => "loop",
            NodeKind::Choice => "choice",
        })
    }
}

impl<A> Type<A> {
    pub fn prefix(atom: A, cont: Type<A>) -> Self {
        Type::Prefix(atom, Arc::new(cont))
    }

    pub fn looped(body: Type<A>, cont: Type<A>) -> Self {
        Type::Loop { body: Arc::new(body), cont: Arc::new(cont) }
    }

    pub fn choice(yes: Type<A>, no: Type<A>, cont: Type<A>) -> Self {
        Type::Choice { yes: Arc::new(yes), no: Arc::new(no), cont: Arc::new(cont) }
    }

    /// Builds `a1 . a2 . ... . cont`.
    pub fn seq_atoms(atoms: impl IntoIterator<Item = A>, cont: Type<A>) -> Self
    where
        A: Clone,
    {
        let atoms: Vec<A> = atoms.into_iter().collect();
        atoms.into_iter().rev().fold(cont, |k, a| Type::prefix(a, k))
    }

    pub fn node_kind(&self) -> NodeKind {
        match self {
            Type::End => NodeKind::End,
            Type::Prefix(..) => NodeKind::Prefix,
            Type::Loop { .. } => NodeKind::Loop,
            Type::Choice { .. } => NodeKind::Choice,
        }
    }

    pub fn is_end(&self) -> bool {
        matches!(self, Type::End)
    }

    /// Sequential composition: replaces the terminal `end` of the spine by `k`.
    /// Loop bodies and choice branches are left alone; only continuations move.
    pub fn then(&self, k: Arc<Type<A>>) -> Arc<Type<A>>
    where
        A: Clone,
    {
        match self {
            Type::End => k,
            Type::Prefix(a, t) => Arc::new(Type::Prefix(a.clone(), t.then(k))),
            Type::Loop { body, cont } => {
                Arc::new(Type::Loop { body: body.clone(), cont: cont.then(k) })
            }
            Type::Choice { yes, no, cont } => Arc::new(Type::Choice {
                yes: yes.clone(),
                no: no.clone(),
                cont: cont.then(k),
            }),
        }
    }

    /// All atoms in pre-order (loop body before continuation, true branch
    /// before false branch).
    pub fn atoms(&self) -> Vec<&A> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a A>) {
        let mut cur = self;
        loop {
            match cur {
                Type::End => return,
                Type::Prefix(a, k) => {
                    out.push(a);
                    cur = k;
                }
                Type::Loop { body, cont } => {
                    body.collect_atoms(out);
                    cur = cont;
                }
                Type::Choice { yes, no, cont } => {
                    yes.collect_atoms(out);
                    no.collect_atoms(out);
                    cur = cont;
                }
            }
        }
    }

    /// The loop/choice skeleton with atoms erased.
    pub fn shape(&self) -> Shape {
        match self {
            Type::End => Shape::End,
            Type::Prefix(_, k) => k.shape(),
            Type::Loop { body, cont } => {
                Shape::Loop(Box::new(body.shape()), Box::new(cont.shape()))
            }
            Type::Choice { yes, no, cont } => {
                Shape::Choice(Box::new(yes.shape()), Box::new(no.shape()), Box::new(cont.shape()))
            }
        }
    }

    /// Maximum loop/choice nesting depth.
    pub fn depth(&self) -> usize {
        match self {
            Type::End => 0,
            Type::Prefix(_, k) => k.depth(),
            Type::Loop { body, cont } => (1 + body.depth()).max(cont.depth()),
            Type::Choice { yes, no, cont } => (1 + yes.depth().max(no.depth())).max(cont.depth()),
        }
    }
}

/// Loop/choice structure of a type, used to compare global and local trees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Shape {
    End,
    Loop(Box<Shape>, Box<Shape>),
    Choice(Box<Shape>, Box<Shape>, Box<Shape>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PiBinder {
    pub name: String,
    pub kind: Kind,
}

/// A global protocol: top-level `Pi` binders, the process count and the body.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Protocol {
    pub binders: Vec<PiBinder>,
    pub nprocs: i64,
    pub body: GlobalType,
}

/// One step from a type node to a child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathStep {
    /// Past the atom of a prefix node.
    Next,
    LoopBody,
    LoopCont,
    ChoiceTrue,
    ChoiceFalse,
    ChoiceCont,
}

/// Location of a node inside a protocol body.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AstPath(pub Vec<PathStep>);

impl AstPath {
    pub fn child(&self, step: PathStep) -> AstPath {
        let mut v = self.0.clone();
        v.push(step);
        AstPath(v)
    }
}

impl fmt::Display for AstPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("body")?;
        let mut nexts = 0usize;
        let flush = |f: &mut fmt::Formatter<'_>, n: &mut usize| {
            if *n > 0 {
                write!(f, "+{n}")?;
                *n = 0;
            }
            Ok(())
        };
        for step in &self.0 {
            if *step == PathStep::Next {
                nexts += 1;
                continue;
            }
            flush(f, &mut nexts)?;
            f.write_str(match step {
                PathStep::LoopBody => "/loop.body",
                PathStep::LoopCont => "/loop.cont",
                PathStep::ChoiceTrue => "/choice.true",
                PathStep::ChoiceFalse => "/choice.false",
                PathStep::ChoiceCont => "/choice.cont",
                PathStep::Next => unreachable!(),
            })?;
        }
        flush(f, &mut nexts)
    }
}

/// Source positions recorded while parsing a protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub binders: Vec<Pos>,
    pub nprocs: Pos,
    pub nodes: BTreeMap<AstPath, Pos>,
}
