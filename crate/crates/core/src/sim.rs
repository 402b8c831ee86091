//! Exhaustive simulation of an ensemble of local types under synchronous,
//! non-buffered semantics.
//!
//! A send and the matching receive complete together as one step. A
//! collective atom completes when it is the head at every rank. Loop and
//! choice heads are decided collectively: the decision step fires only when
//! every rank sits at a head of the same kind, and rewrites all residues with
//! the same outcome.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::protocol::{LocalAtom, LocalType, Type};
use crate::tape::DecisionTape;

pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Order {
    #[default]
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Maximum number of distinct states visited before giving up.
    pub state_limit: usize,
    /// Order in which enabled steps are tried.
    pub order: Order,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { state_limit: DEFAULT_STATE_LIMIT, order: Order::Forward }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("state space exceeded the limit of {limit} states")]
    StateSpaceExceeded { limit: usize },
    #[error("decision tape exhausted after {used} decisions")]
    TapeExhausted { used: usize },
    #[error("no ranks to simulate")]
    Empty,
    #[error("rank {rank} names peer {peer}, outside 0..{nprocs}")]
    PeerOutOfRange { rank: usize, peer: i64, nprocs: usize },
}

/// One transition of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// `from` sends to `to`, which receives.
    P2p { from: usize, to: usize },
    Collective,
    /// Every rank takes the same loop/choice decision.
    Decide(bool),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::P2p { from, to } => write!(f, "p2p {from} {to}"),
            Step::Collective => f.write_str("collective"),
            Step::Decide(d) => write!(f, "decide {}", u8::from(*d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid step `{0}`")]
pub struct StepParseError(pub String);

impl FromStr for Step {
    type Err = StepParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StepParseError(s.to_string());
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.as_slice() {
            ["p2p", a, b] => Ok(Step::P2p {
                from: a.parse().map_err(|_| bad())?,
                to: b.parse().map_err(|_| bad())?,
            }),
            ["collective"] => Ok(Step::Collective),
            ["decide", "1"] => Ok(Step::Decide(true)),
            ["decide", "0"] => Ok(Step::Decide(false)),
            _ => Err(bad()),
        }
    }
}

/// Parses a step list, one step per line. Blank lines and `#` comments are
/// skipped.
pub fn parse_steps(text: &str) -> Result<Vec<Step>, StepParseError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}

/// What a rank is waiting on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Head {
    Atom(LocalAtom),
    Loop,
    Choice,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Atom(a) => a.fmt(f),
            Head::Loop => f.write_str("loop decision"),
            Head::Choice => f.write_str("choice decision"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Frame {
    ty: Arc<LocalType>,
    /// Completed iterations, for a frame sitting at a loop node.
    iters: u32,
}

/// A configuration of the ensemble: per rank, a stack of residues whose top
/// is the current one, plus the number of decisions taken so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimState {
    ranks: Vec<Vec<Frame>>,
    decisions: usize,
}

impl SimState {
    pub fn new(locals: &[LocalType]) -> Self {
        let ranks = locals
            .iter()
            .map(|t| vec![Frame { ty: Arc::new(t.clone()), iters: 0 }])
            .collect();
        let mut s = SimState { ranks, decisions: 0 };
        s.normalize();
        s
    }

    pub fn nprocs(&self) -> usize {
        self.ranks.len()
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn is_done(&self, rank: usize) -> bool {
        self.ranks[rank].is_empty()
    }

    pub fn all_done(&self) -> bool {
        self.ranks.iter().all(Vec::is_empty)
    }

    /// The head rank `rank` is waiting on, or `None` once it reached `end`.
    pub fn head(&self, rank: usize) -> Option<Head> {
        let top = self.ranks[rank].last()?;
        Some(match &*top.ty {
            Type::Prefix(a, _) => Head::Atom(a.clone()),
            Type::Loop { .. } => Head::Loop,
            Type::Choice { .. } => Head::Choice,
            Type::End => unreachable!("end frames are popped"),
        })
    }

    /// The current residual type of `rank` with pending continuations
    /// composed back in.
    pub fn residue(&self, rank: usize) -> LocalType {
        let mut acc = Arc::new(LocalType::End);
        for f in &self.ranks[rank] {
            acc = f.ty.then(acc);
        }
        (*acc).clone()
    }

    fn top(&self, rank: usize) -> Option<&Frame> {
        self.ranks[rank].last()
    }

    fn normalize(&mut self) {
        for stack in &mut self.ranks {
            while stack.last().is_some_and(|f| f.ty.is_end()) {
                stack.pop();
            }
        }
    }

    fn advance_prefix(&mut self, rank: usize) {
        let top = self.ranks[rank].last_mut().expect("rank has a head");
        match &*top.ty {
            Type::Prefix(_, k) => {
                top.ty = k.clone();
                top.iters = 0;
            }
            _ => unreachable!("advance_prefix on a non-prefix head"),
        }
    }

    fn decide_rank(&mut self, rank: usize, take: bool) {
        let stack = &mut self.ranks[rank];
        let top = stack.last_mut().expect("rank has a head");
        match &*top.ty {
            Type::Loop { body, cont } => {
                if take {
                    let body = body.clone();
                    top.iters += 1;
                    stack.push(Frame { ty: body, iters: 0 });
                } else {
                    top.ty = cont.clone();
                    top.iters = 0;
                }
            }
            Type::Choice { yes, no, cont } => {
                let branch = if take { yes.clone() } else { no.clone() };
                top.ty = cont.clone();
                top.iters = 0;
                stack.push(Frame { ty: branch, iters: 0 });
            }
            _ => unreachable!("decide on a non-decision head"),
        }
    }

    /// Steps enabled ignoring decision policy; `Decide` is listed once with
    /// `true` when every rank is at a decision head of the same kind.
    fn enabled_moves(&self) -> (Vec<Step>, Option<DecisionSite>) {
        let n = self.nprocs();
        let mut steps = Vec::new();
        for r in 0..n {
            if let Some(Frame { ty, .. }) = self.top(r) {
                if let Type::Prefix(LocalAtom::Send { peer, dtype, len }, _) = &**ty {
                    let q = *peer as usize;
                    if let Some(Frame { ty: qt, .. }) = self.top(q) {
                        if let Type::Prefix(LocalAtom::Receive { peer: p2, dtype: d2, len: l2 }, _) = &**qt {
                            if *p2 as usize == r && d2 == dtype && l2 == len {
                                steps.push(Step::P2p { from: r, to: q });
                            }
                        }
                    }
                }
            }
        }
        let heads: Vec<Option<&Frame>> = (0..n).map(|r| self.top(r)).collect();
        if heads.iter().all(Option::is_some) {
            let first = heads[0].unwrap();
            match &*first.ty {
                Type::Prefix(LocalAtom::Collective(c), _) => {
                    let all = heads.iter().all(|h| {
                        matches!(&*h.unwrap().ty, Type::Prefix(LocalAtom::Collective(c2), _) if c2 == c)
                    });
                    if all {
                        steps.push(Step::Collective);
                    }
                }
                Type::Loop { .. } if heads.iter().all(|h| matches!(&*h.unwrap().ty, Type::Loop { .. })) => {
                    return (steps, Some(DecisionSite::Loop { iters: first.iters }));
                }
                Type::Choice { .. } if heads.iter().all(|h| matches!(&*h.unwrap().ty, Type::Choice { .. })) => {
                    return (steps, Some(DecisionSite::Choice));
                }
                _ => {}
            }
        }
        (steps, None)
    }

    /// Applies `step` if it is enabled, otherwise returns `false` and leaves
    /// the state unchanged.
    pub fn apply(&mut self, step: Step) -> bool {
        let (moves, site) = self.enabled_moves();
        match step {
            Step::P2p { .. } | Step::Collective if moves.contains(&step) => {
                match step {
                    Step::P2p { from, to } => {
                        self.advance_prefix(from);
                        self.advance_prefix(to);
                    }
                    _ => (0..self.nprocs()).for_each(|r| self.advance_prefix(r)),
                }
            }
            Step::Decide(take) if site.is_some() => {
                (0..self.nprocs()).for_each(|r| self.decide_rank(r, take));
                self.decisions += 1;
            }
            _ => return false,
        }
        self.normalize();
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DecisionSite {
    Loop { iters: u32 },
    Choice,
}

/// A reachable stuck configuration and the steps leading to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub steps: Vec<Step>,
    /// Per rank, the head it is blocked on; `None` for ranks that finished.
    pub blocked: Vec<Option<Head>>,
    pub state: SimState,
}

impl Witness {
    /// The replayable step list, one step per line.
    pub fn steps_text(&self) -> String {
        self.steps.iter().map(|s| format!("{s}\n")).collect()
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "deadlock after {} steps", self.steps.len())?;
        for (r, b) in self.blocked.iter().enumerate() {
            match b {
                Some(h) => writeln!(f, "  rank {r}: blocked on {h}")?,
                None => writeln!(f, "  rank {r}: done")?,
            }
        }
        f.write_str("steps:\n")?;
        for s in &self.steps {
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimVerdict {
    AllDone { states: usize },
    Deadlock(Box<Witness>),
}

impl SimVerdict {
    pub fn is_all_done(&self) -> bool {
        matches!(self, SimVerdict::AllDone { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            SimVerdict::Deadlock(w) => Some(w),
            SimVerdict::AllDone { .. } => None,
        }
    }
}

impl fmt::Display for SimVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimVerdict::AllDone { states } => write!(f, "all done ({states} states explored)"),
            SimVerdict::Deadlock(w) => w.fmt(f),
        }
    }
}

enum Decisions<'a> {
    Tape(&'a DecisionTape),
    Bounded { max_loop_iters: u32 },
}

/// Explores every interleaving of `locals` with collective decisions read
/// from `tape`.
pub fn simulate(locals: &[LocalType], tape: &DecisionTape) -> Result<SimVerdict, SimError> {
    simulate_with(locals, tape, SimConfig::default())
}

pub fn simulate_with(locals: &[LocalType], tape: &DecisionTape, cfg: SimConfig) -> Result<SimVerdict, SimError> {
    explore(locals, Decisions::Tape(tape), cfg)
}

/// Explores every interleaving under every decision sequence in which each
/// loop runs at most `max_loop_iters` times and each choice goes either way.
///
/// All tapes are covered by a single search: decision steps branch on both
/// outcomes, so a configuration reachable under some tape is reachable here.
pub fn explore_all_tapes(locals: &[LocalType], max_loop_iters: u32) -> Result<SimVerdict, SimError> {
    explore_all_tapes_with(locals, max_loop_iters, SimConfig::default())
}

pub fn explore_all_tapes_with(
    locals: &[LocalType],
    max_loop_iters: u32,
    cfg: SimConfig,
) -> Result<SimVerdict, SimError> {
    explore(locals, Decisions::Bounded { max_loop_iters }, cfg)
}

fn validate(locals: &[LocalType]) -> Result<(), SimError> {
    if locals.is_empty() {
        return Err(SimError::Empty);
    }
    let n = locals.len();
    for (rank, t) in locals.iter().enumerate() {
        for a in t.atoms() {
            if let LocalAtom::Send { peer, .. } | LocalAtom::Receive { peer, .. } = a {
                if *peer < 0 || *peer >= n as i64 {
                    return Err(SimError::PeerOutOfRange { rank, peer: *peer, nprocs: n });
                }
            }
        }
    }
    Ok(())
}

fn explore(locals: &[LocalType], policy: Decisions<'_>, cfg: SimConfig) -> Result<SimVerdict, SimError> {
    validate(locals)?;
    let init = SimState::new(locals);
    // Each visited state records its parent index and the step taken.
    let mut states: Vec<(SimState, Option<(usize, Step)>)> = vec![(init.clone(), None)];
    let mut index: HashMap<SimState, usize> = HashMap::from([(init, 0)]);
    let mut stack = vec![0usize];

    while let Some(i) = stack.pop() {
        let state = states[i].0.clone();
        let (mut steps, site) = state.enabled_moves();
        if let Some(site) = site {
            match &policy {
                Decisions::Tape(tape) => match tape.get(state.decisions) {
                    Some(d) => steps.push(Step::Decide(d)),
                    None => return Err(SimError::TapeExhausted { used: state.decisions }),
                },
                Decisions::Bounded { max_loop_iters } => {
                    let may_enter = match site {
                        DecisionSite::Loop { iters } => iters < *max_loop_iters,
                        DecisionSite::Choice => true,
                    };
                    if may_enter {
                        steps.push(Step::Decide(true));
                    }
                    steps.push(Step::Decide(false));
                }
            }
        }
        if steps.is_empty() {
            if state.all_done() {
                continue;
            }
            return Ok(SimVerdict::Deadlock(Box::new(witness(&states, i))));
        }
        if cfg.order == Order::Forward {
            // The DFS stack pops last-in first, so push in reverse.
            steps.reverse();
        }
        for step in steps {
            let mut succ = state.clone();
            let applied = succ.apply(step);
            debug_assert!(applied);
            if index.contains_key(&succ) {
                continue;
            }
            if states.len() >= cfg.state_limit {
                return Err(SimError::StateSpaceExceeded { limit: cfg.state_limit });
            }
            let j = states.len();
            index.insert(succ.clone(), j);
            states.push((succ, Some((i, step))));
            stack.push(j);
        }
    }
    Ok(SimVerdict::AllDone { states: states.len() })
}

fn witness(states: &[(SimState, Option<(usize, Step)>)], mut i: usize) -> Witness {
    let state = states[i].0.clone();
    let mut steps = Vec::new();
    while let Some((parent, step)) = states[i].1 {
        steps.push(step);
        i = parent;
    }
    steps.reverse();
    let blocked = (0..state.nprocs()).map(|r| state.head(r)).collect();
    Witness { steps, blocked, state }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step #{index} (`{step}`) is not enabled")]
pub struct ReplayError {
    pub index: usize,
    pub step: Step,
}

/// Re-executes `steps` from the initial configuration of `locals`.
pub fn replay(locals: &[LocalType], steps: &[Step]) -> Result<SimState, ReplayError> {
    let mut s = SimState::new(locals);
    for (index, &step) in steps.iter().enumerate() {
        if !s.apply(step) {
            return Err(ReplayError { index, step });
        }
    }
    Ok(s)
}
