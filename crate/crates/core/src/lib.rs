//! Communication types for SPMD message-passing programs.
//!
//! The pipeline: parse a global protocol ([`protocol`]), check it for a
//! concrete instantiation of its parameters ([`wellformed`]), project it to
//! one local type per rank ([`projection`]), and then either check a MiniMPI
//! program against the local types ([`minimpi`], driven by the contract
//! algebra in [`typestate`]) or run the local types together under
//! synchronous semantics looking for deadlocks ([`sim`]).

pub mod expr;
pub mod minimpi;
pub mod projection;
pub mod protocol;
pub mod sim;
pub mod syntax;
pub mod tape;
pub mod typestate;
pub mod wellformed;

pub use expr::{check_refinement, eval, expr_equal, Env, EvalError, Expr, Kind, Pred};
pub use projection::{project, project_all, ProjectionResult};
pub use protocol::{
    parse_local_type, parse_protocol, print_local_type, print_protocol, GlobalType, LocalAtom,
    LocalType, Protocol,
};
pub use syntax::{Pos, SyntaxError};
pub use wellformed::{check_wf, Instantiation, WfReport};
