//! Type erasure: runs one rank of a program under a fixed decision tape and
//! records the communication actions it performs.

use thiserror::Error;

use super::{comm_action, Program, Stmt, StmtKind};
use crate::expr::{Env, EvalError};
use crate::protocol::LocalType;
use crate::syntax::Pos;
use crate::tape::{DecisionTape, TapeCursor};
use crate::typestate::Action;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EraseError {
    #[error("{pos}: decision tape exhausted")]
    TapeExhausted { pos: Pos },
    #[error("{pos}: cannot evaluate {what}: {error}")]
    Eval { pos: Pos, what: &'static str, error: EvalError },
}

/// The actions rank `rank` of `prog` performs, ending with `Finalize`.
///
/// `collloop` reads one tape entry per iteration and `collchoice` one entry
/// per choice; every rank reading the same tape sees the same decisions.
pub fn erase_to_trace(
    prog: &Program,
    rank: i64,
    nprocs: i64,
    params: &Env,
    tape: &DecisionTape,
) -> Result<Vec<Action>, EraseError> {
    let mut run = Run { prog, rank, nprocs, env: params.clone(), tape: tape.cursor(), out: Vec::new() };
    run.block(&prog.body)?;
    Ok(run.out)
}

/// The straight-line local type performing `trace`. `Finalize` is dropped.
pub fn trace_to_local(trace: &[Action]) -> LocalType {
    let atoms = trace.iter().filter_map(|a| match a {
        Action::Comm(atom) => Some(atom.clone()),
        Action::Finalize => None,
    });
    LocalType::seq_atoms(atoms, LocalType::End)
}

struct Run<'a> {
    prog: &'a Program,
    rank: i64,
    nprocs: i64,
    env: Env,
    tape: TapeCursor<'a>,
    out: Vec<Action>,
}

impl Run<'_> {
    fn scoped(&mut self, stmts: &[Stmt]) -> Result<(), EraseError> {
        let saved = self.env.clone();
        let r = self.block(stmts);
        self.env = saved;
        r
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), EraseError> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn decide(&mut self, pos: Pos) -> Result<bool, EraseError> {
        self.tape.next_decision().ok_or(EraseError::TapeExhausted { pos })
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), EraseError> {
        let pos = s.pos;
        let eval_err = |what, error| EraseError::Eval { pos, what, error };
        match &s.kind {
            StmtKind::Init | StmtKind::Compute => {}
            StmtKind::CommSize => {
                self.env.insert("np", self.nprocs);
            }
            StmtKind::CommRank => {
                self.env.insert("me", self.rank);
            }
            StmtKind::Let { name, value } => {
                let v = value.eval(&self.env).map_err(|e| eval_err("let binding", e))?;
                self.env.insert(name.clone(), v);
            }
            StmtKind::Send(_) | StmtKind::Recv(_) | StmtKind::Collective(_) => {
                let (action, _) = comm_action(self.prog, &s.kind, &self.env)
                    .expect("communication statement")
                    .map_err(|(what, e)| eval_err(what, e))?;
                self.out.push(action);
            }
            StmtKind::RankIf { guard, then, els } => {
                let taken = guard.eval(&self.env).map_err(|e| eval_err("rankif guard", e))?;
                self.scoped(if taken { then } else { els })?;
            }
            StmtKind::CollLoop(body) => {
                while self.decide(pos)? {
                    self.scoped(body)?;
                }
            }
            StmtKind::CollChoice { then, els } => {
                let taken = self.decide(pos)?;
                self.scoped(if taken { then } else { els })?;
            }
            StmtKind::Finalize => self.out.push(Action::Finalize),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimpi::parse_program;
    use crate::protocol::{DataKind, LocalAtom};

    const FDIFF_MMP: &str = include_str!("../../data/fdiff.mmp");

    fn params(size: i64) -> Env {
        [("size".to_string(), size)].into_iter().collect()
    }

    #[test]
    fn zero_iterations_then_first_branch() {
        let prog = parse_program(FDIFF_MMP).unwrap();
        let tape = DecisionTape::default().loop_iters(0).choice(true);
        let trace = erase_to_trace(&prog, 0, 3, &params(9), &tape).unwrap();
        let names: Vec<_> = trace.iter().map(|a| a.to_string()).collect();
        assert_eq!(names, vec!["scatter(0,MPI_FLOAT,3)", "gather(0,MPI_FLOAT,3)", "finalize"]);
    }

    #[test]
    fn one_iteration_odd_rank() {
        let prog = parse_program(FDIFF_MMP).unwrap();
        let tape = DecisionTape::default().loop_iters(1).choice(false);
        let trace = erase_to_trace(&prog, 1, 3, &params(9), &tape).unwrap();
        let atoms: Vec<_> = trace.iter().map(|a| a.to_string()).collect();
        assert_eq!(
            atoms,
            vec![
                "scatter(0,MPI_FLOAT,3)",
                "receive(2,MPI_FLOAT,1)",
                "send(0,MPI_FLOAT,1)",
                "send(2,MPI_FLOAT,1)",
                "receive(0,MPI_FLOAT,1)",
                "allreduce(MPI_FLOAT,1,MPI_MAX)",
                "finalize",
            ]
        );
        let local = trace_to_local(&trace);
        assert_eq!(local.atoms().len(), 6);
        assert!(matches!(
            local.atoms()[1],
            LocalAtom::Receive { peer: 2, dtype: DataKind::Float, len: 1 }
        ));
    }

    #[test]
    fn short_tape_is_reported() {
        let prog = parse_program(FDIFF_MMP).unwrap();
        let tape = DecisionTape::default().loop_iters(0);
        let err = erase_to_trace(&prog, 0, 3, &params(9), &tape).unwrap_err();
        assert!(matches!(err, EraseError::TapeExhausted { pos } if pos.line > 1));
    }
}
