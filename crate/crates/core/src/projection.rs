//! Projection of a global type onto individual ranks.
//!
//! A `message(s,d,..)` becomes `send(d,..)` at rank `s`, `receive(s,..)` at
//! rank `d`, and disappears elsewhere. Collectives, loops and choices are
//! kept at every rank, since all ranks take part in collective decisions.
//! Expressions are evaluated under the instantiation, so local types carry
//! concrete integers.

use std::sync::Arc;

use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::protocol::{GlobalAtom, GlobalType, LocalAtom, LocalType, Protocol, Type};
use crate::wellformed::{check_wf, Instantiation, WfReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProjectionError {
    #[error("protocol is not well-formed for this instantiation ({} diagnostics)", .0.diagnostics.len())]
    IllFormed(WfReport),
    #[error("rank {rank} is outside [0, {nprocs})")]
    RankOutOfRange { rank: i64, nprocs: i64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One local type per rank, indexed by rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionResult {
    pub locals: Vec<LocalType>,
}

impl ProjectionResult {
    pub fn rank(&self, r: usize) -> &LocalType {
        &self.locals[r]
    }
}

/// Projects `p` onto `rank`. The protocol must be well-formed for `inst`;
/// this is checked and reported as [`ProjectionError::IllFormed`].
pub fn project(p: &Protocol, inst: &Instantiation, rank: i64) -> Result<LocalType, ProjectionError> {
    let report = check_wf(p, inst);
    if !report.is_ok() {
        return Err(ProjectionError::IllFormed(report));
    }
    project_unchecked(p, inst, rank)
}

pub fn project_all(p: &Protocol, inst: &Instantiation) -> Result<ProjectionResult, ProjectionError> {
    let report = check_wf(p, inst);
    if !report.is_ok() {
        return Err(ProjectionError::IllFormed(report));
    }
    let locals = (0..p.nprocs)
        .map(|r| project_unchecked(p, inst, r))
        .collect::<Result<_, _>>()?;
    Ok(ProjectionResult { locals })
}

/// Projection without the well-formedness pre-check. Evaluation failures
/// still surface as errors.
pub fn project_unchecked(
    p: &Protocol,
    inst: &Instantiation,
    rank: i64,
) -> Result<LocalType, ProjectionError> {
    if !(0..p.nprocs).contains(&rank) {
        return Err(ProjectionError::RankOutOfRange { rank, nprocs: p.nprocs });
    }
    Projector { inst, rank }.ty(&p.body)
}

struct Projector<'a> {
    inst: &'a Instantiation,
    rank: i64,
}

impl Projector<'_> {
    fn val(&self, e: &Expr) -> Result<i64, EvalError> {
        e.eval(self.inst.env())
    }

    fn ty(&self, t: &GlobalType) -> Result<LocalType, ProjectionError> {
        let mut spine = Vec::new();
        let mut cur = t;
        let tail = loop {
            match cur {
                Type::End => break Type::End,
                Type::Prefix(atom, k) => {
                    if let Some(a) = self.atom(atom)? {
                        spine.push(a);
                    }
                    cur = k;
                }
                Type::Loop { body, cont } => {
                    break Type::Loop { body: Arc::new(self.ty(body)?), cont: Arc::new(self.ty(cont)?) }
                }
                Type::Choice { yes, no, cont } => {
                    break Type::Choice {
                        yes: Arc::new(self.ty(yes)?),
                        no: Arc::new(self.ty(no)?),
                        cont: Arc::new(self.ty(cont)?),
                    }
                }
            }
        };
        Ok(Type::seq_atoms(spine, tail))
    }

    fn atom(&self, atom: &GlobalAtom) -> Result<Option<LocalAtom>, ProjectionError> {
        Ok(match atom {
            GlobalAtom::Message { src, dst, dtype, len } => {
                let (s, d) = (self.val(src)?, self.val(dst)?);
                let dtype = *dtype;
                if s == self.rank {
                    Some(LocalAtom::Send { peer: d, dtype, len: self.val(len)? })
                } else if d == self.rank {
                    Some(LocalAtom::Receive { peer: s, dtype, len: self.val(len)? })
                } else {
                    None
                }
            }
            GlobalAtom::Collective(c) => Some(LocalAtom::Collective(c.try_map(|e| self.val(e))?)),
        })
    }
}
