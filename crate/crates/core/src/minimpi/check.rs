//! Checks a MiniMPI program against a protocol, one concrete rank at a time.
//!
//! Each rank walks the statement list carrying its residual local type.
//! Communication statements consume the head of the type; `collloop` and
//! `collchoice` must meet a `loop`/`choice` node, and their bodies must reduce
//! the extracted body or branch to `end`; `finalize` requires `end`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{comm_action, Program, Stmt, StmtKind};
use crate::expr::{Env, EvalError, Expr};
use crate::projection::{project_all, ProjectionError};
use crate::protocol::{LocalType, Protocol};
use crate::syntax::Pos;
use crate::typestate::{self, Action, StepError};
use crate::wellformed::{Instantiation, WfReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error("protocol is not well-formed for this instantiation")]
    IllFormed(WfReport),
    #[error("program parameter `{0}` has no value")]
    UnboundParam(String),
    #[error(transparent)]
    Projection(ProjectionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplianceError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("cannot evaluate {what}: {error}")]
    Eval { what: &'static str, error: EvalError },
    #[error("collective structure diverges from rank {reference}: {detail}")]
    Divergence { reference: i64, detail: String },
}

impl ComplianceError {
    pub fn code(&self) -> &'static str {
        match self {
            ComplianceError::Step(e) => e.code(),
            ComplianceError::Eval { .. } => "eval-error",
            ComplianceError::Divergence { .. } => "structure-divergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rank: i64,
    pub pos: Pos,
    pub error: ComplianceError,
}

impl Diagnostic {
    pub fn code(&self) -> &'static str {
        self.error.code()
    }

    /// `rank:line:col:code:message`
    pub fn report_line(&self) -> String {
        format!("{}:{}:{}:{}", self.rank, self.pos, self.code(), self.error)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: rank {}: [{}] {}", self.pos, self.rank, self.code(), self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVerdict {
    pub rank: i64,
    pub diagnostics: Vec<Diagnostic>,
}

impl RankVerdict {
    pub fn is_compliant(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub ranks: Vec<RankVerdict>,
}

impl CheckReport {
    pub fn is_compliant(&self) -> bool {
        self.ranks.iter().all(RankVerdict::is_compliant)
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.ranks.iter().flat_map(|r| r.diagnostics.iter())
    }
}

/// Verifies `prog` against `protocol` for every rank `0..nprocs`.
///
/// Program parameters take their values from `inst`; `np` is bound to the
/// protocol's process count by `comm_size` and `me` to the rank by
/// `comm_rank`.
pub fn check_compliance(
    prog: &Program,
    protocol: &Protocol,
    inst: &Instantiation,
) -> Result<CheckReport, SetupError> {
    // The protocol sees only its own binders; other names belong to the program.
    let proto_inst = Instantiation(
        inst.env()
            .iter()
            .filter(|(k, _)| protocol.binders.iter().any(|b| b.name == *k))
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    );
    let locals = match project_all(protocol, &proto_inst) {
        Ok(r) => r.locals,
        Err(ProjectionError::IllFormed(report)) => return Err(SetupError::IllFormed(report)),
        Err(e) => return Err(SetupError::Projection(e)),
    };
    let mut env = Env::new();
    for name in &prog.params {
        let v = inst.env().get(name).map_err(|_| SetupError::UnboundParam(name.clone()))?;
        env.insert(name.clone(), v);
    }

    let mut trails = Vec::new();
    let mut ranks = Vec::new();
    for (rank, local) in locals.into_iter().enumerate() {
        let rank = rank as i64;
        let mut rc = RankChecker {
            prog,
            rank,
            nprocs: protocol.nprocs,
            env: env.clone(),
            trail: Vec::new(),
        };
        let diagnostics = match rc.block(&prog.body, Arc::new(local)) {
            Ok(_) => Vec::new(),
            Err(d) => vec![d],
        };
        trails.push(rc.trail);
        ranks.push(RankVerdict { rank, diagnostics });
    }

    // Every rank must traverse the same collective statements in the same
    // order; a collloop under a rankif would break this.
    let reference = ranks.iter().position(RankVerdict::is_compliant);
    if let Some(r0) = reference {
        for r in 0..ranks.len() {
            if !ranks[r].is_compliant() || trails[r] == trails[r0] {
                continue;
            }
            let (mine, theirs) = (&trails[r], &trails[r0]);
            let i = mine.iter().zip(theirs).take_while(|(a, b)| a == b).count();
            let pos = mine.get(i).or(theirs.get(i)).copied().unwrap_or_default();
            ranks[r].diagnostics.push(Diagnostic {
                rank: r as i64,
                pos,
                error: ComplianceError::Divergence {
                    reference: r0 as i64,
                    detail: format!(
                        "this rank takes {} collective decisions, rank {r0} takes {}; first difference at decision #{i}",
                        mine.len(),
                        theirs.len()
                    ),
                },
            });
        }
    }
    Ok(CheckReport { ranks })
}

struct RankChecker<'a> {
    prog: &'a Program,
    rank: i64,
    nprocs: i64,
    env: Env,
    /// Positions of collective loop/choice statements entered, in order.
    trail: Vec<Pos>,
}

type Residual = Arc<LocalType>;

impl RankChecker<'_> {
    fn fail(&self, pos: Pos, error: impl Into<ComplianceError>) -> Diagnostic {
        Diagnostic { rank: self.rank, pos, error: error.into() }
    }

    fn eval(&self, e: &Expr, what: &'static str, pos: Pos) -> Result<i64, Diagnostic> {
        e.eval(&self.env).map_err(|error| self.fail(pos, ComplianceError::Eval { what, error }))
    }

    fn scoped(&mut self, stmts: &[Stmt], ty: Residual) -> Result<Residual, Diagnostic> {
        let saved = self.env.clone();
        let out = self.block(stmts, ty);
        self.env = saved;
        out
    }

    fn require_end(&self, residual: &Residual, pos: Pos) -> Result<(), Diagnostic> {
        typestate::check_finalized(residual).map_err(|e| self.fail(pos, e))
    }

    fn block(&mut self, stmts: &[Stmt], mut ty: Residual) -> Result<Residual, Diagnostic> {
        for s in stmts {
            ty = self.stmt(s, ty)?;
        }
        Ok(ty)
    }

    fn stmt(&mut self, s: &Stmt, ty: Residual) -> Result<Residual, Diagnostic> {
        let pos = s.pos;
        match &s.kind {
            StmtKind::Init | StmtKind::Compute => Ok(ty),
            StmtKind::CommSize => {
                self.env.insert("np", self.nprocs);
                Ok(ty)
            }
            StmtKind::CommRank => {
                self.env.insert("me", self.rank);
                Ok(ty)
            }
            StmtKind::Let { name, value } => {
                let v = self.eval(value, "let binding", pos)?;
                self.env.insert(name.clone(), v);
                Ok(ty)
            }
            StmtKind::Send(_) | StmtKind::Recv(_) | StmtKind::Collective(_) => {
                let (action, facts) = comm_action(self.prog, &s.kind, &self.env)
                    .expect("communication statement")
                    .map_err(|(what, error)| self.fail(pos, ComplianceError::Eval { what, error }))?;
                typestate::step(&ty, &action, Some(&facts)).map_err(|e| self.fail(pos, e))
            }
            StmtKind::RankIf { guard, then, els } => {
                let taken = guard
                    .eval(&self.env)
                    .map_err(|error| self.fail(pos, ComplianceError::Eval { what: "rankif guard", error }))?;
                self.scoped(if taken { then } else { els }, ty)
            }
            StmtKind::CollLoop(body) => {
                self.trail.push(pos);
                let inner = typestate::loop_body(&ty).map_err(|e| self.fail(pos, e))?.clone();
                let residual = self.scoped(body, inner)?;
                self.require_end(&residual, pos)?;
                Ok(typestate::next(&ty).map_err(|e| self.fail(pos, e))?.clone())
            }
            StmtKind::CollChoice { then, els } => {
                self.trail.push(pos);
                let (yes, no) = typestate::choice_branches(&ty).map_err(|e| self.fail(pos, e))?;
                let (yes, no) = (yes.clone(), no.clone());
                let residual = self.scoped(then, yes)?;
                self.require_end(&residual, pos)?;
                let residual = self.scoped(els, no)?;
                self.require_end(&residual, pos)?;
                Ok(typestate::next(&ty).map_err(|e| self.fail(pos, e))?.clone())
            }
            StmtKind::Finalize => {
                typestate::step(&ty, &Action::Finalize, None).map_err(|e| self.fail(pos, e))
            }
        }
    }
}
