//! MiniMPI: a small SPMD program model standing in for C+MPI.
//!
//! A program declares its parameters and buffers, then runs a statement list
//! that every rank executes. Communication statements mirror MPI calls;
//! `rankif` branches are decided per rank, while `collloop` and `collchoice`
//! mark data-dependent decisions that all ranks take together.
//!
//! ```text
//! param size
//! buffer local float[size/np+2]
//! init
//! comm_size
//! comm_rank
//! let left = (np + me - 1) % np
//! collloop {
//!   send peer=left buf=local[1] len=1
//! }
//! finalize
//! ```

mod check;
mod erase;
mod parse;

pub use check::{check_compliance, CheckReport, ComplianceError, Diagnostic, RankVerdict, SetupError};
pub use erase::{erase_to_trace, trace_to_local, EraseError};
pub use parse::parse_program;

use crate::expr::{Expr, Pred};
use crate::protocol::{DataKind, ReduceOp};
use crate::syntax::Pos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub params: Vec<String>,
    pub buffers: Vec<BufferDecl>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn buffer(&self, name: &str) -> Option<&BufferDecl> {
        self.buffers.iter().find(|b| b.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferDecl {
    pub name: String,
    pub elem: DataKind,
    /// Element count, evaluated at each use.
    pub capacity: Expr,
    pub pos: Pos,
}

/// `name` or `name[offset]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufRef {
    pub name: String,
    pub offset: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub pos: Pos,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointToPoint {
    pub peer: Expr,
    pub buf: BufRef,
    pub len: Expr,
    /// Overrides the buffer's element kind as the transferred datatype.
    pub dtype: Option<DataKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollKind {
    Scatter,
    Gather,
    Bcast,
    Allreduce,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollStmt {
    pub kind: CollKind,
    /// Present for every kind except `Allreduce`.
    pub root: Option<Expr>,
    /// Present only for `Allreduce`.
    pub op: Option<ReduceOp>,
    pub buf: BufRef,
    pub len: Expr,
    pub dtype: Option<DataKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Init,
    CommSize,
    CommRank,
    Let { name: String, value: Expr },
    Compute,
    Send(PointToPoint),
    Recv(PointToPoint),
    Collective(CollStmt),
    CollLoop(Vec<Stmt>),
    CollChoice { then: Vec<Stmt>, els: Vec<Stmt> },
    RankIf { guard: Pred, then: Vec<Stmt>, els: Vec<Stmt> },
    Finalize,
}

impl StmtKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            StmtKind::Init => "init",
            StmtKind::CommSize => "comm_size",
            StmtKind::CommRank => "comm_rank",
            StmtKind::Let { .. } => "let",
            StmtKind::Compute => "compute",
            StmtKind::Send(_) => "send",
            StmtKind::Recv(_) => "recv",
            StmtKind::Collective(c) => match c.kind {
                CollKind::Scatter => "scatter",
                CollKind::Gather => "gather",
                CollKind::Bcast => "bcast",
                CollKind::Allreduce => "allreduce",
            },
            StmtKind::CollLoop(_) => "collloop",
            StmtKind::CollChoice { .. } => "collchoice",
            StmtKind::RankIf { .. } => "rankif",
            StmtKind::Finalize => "finalize",
        }
    }
}

/// What was being evaluated, and why it failed.
pub(crate) type EvalFailure = (&'static str, crate::expr::EvalError);

/// Evaluates a communication statement to the action it performs and the
/// buffer it touches. Returns `None` for statements that do not communicate.
pub(crate) fn comm_action(
    prog: &Program,
    kind: &StmtKind,
    env: &crate::expr::Env,
) -> Option<Result<(crate::typestate::Action, crate::typestate::BufferFacts), EvalFailure>> {
    use crate::protocol::{Collective, LocalAtom};
    use crate::typestate::{Action, BufferFacts};

    let ev = |e: &Expr, what: &'static str| e.eval(env).map_err(|err| (what, err));
    let facts = |b: &BufRef| -> Result<BufferFacts, EvalFailure> {
        let decl = prog.buffer(&b.name).expect("buffer names are validated by the parser");
        let capacity = ev(&decl.capacity, "buffer capacity")?;
        let offset = match &b.offset {
            Some(e) => ev(e, "buffer offset")?,
            None => 0,
        };
        Ok(BufferFacts { elem: decl.elem, capacity, offset })
    };
    let run = || match kind {
        StmtKind::Send(pp) | StmtKind::Recv(pp) => {
            let peer = ev(&pp.peer, "peer rank")?;
            let len = ev(&pp.len, "length")?;
            let f = facts(&pp.buf)?;
            let dtype = pp.dtype.unwrap_or(f.elem);
            let atom = if matches!(kind, StmtKind::Send(_)) {
                LocalAtom::Send { peer, dtype, len }
            } else {
                LocalAtom::Receive { peer, dtype, len }
            };
            Ok((Action::Comm(atom), f))
        }
        StmtKind::Collective(c) => {
            let len = ev(&c.len, "length")?;
            let f = facts(&c.buf)?;
            let dtype = c.dtype.unwrap_or(f.elem);
            let root = match &c.root {
                Some(e) => ev(e, "root rank")?,
                None => 0,
            };
            let coll = match c.kind {
                CollKind::Scatter => Collective::Scatter { root, dtype, len },
                CollKind::Gather => Collective::Gather { root, dtype, len },
                CollKind::Bcast => Collective::Bcast { root, dtype, len },
                CollKind::Allreduce => Collective::Allreduce {
                    dtype,
                    len,
                    op: c.op.expect("allreduce carries an op"),
                },
            };
            Ok((Action::Comm(LocalAtom::Collective(coll)), f))
        }
        _ => unreachable!(),
    };
    match kind {
        StmtKind::Send(_) | StmtKind::Recv(_) | StmtKind::Collective(_) => Some(run()),
        _ => None,
    }
}
