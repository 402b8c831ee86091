//! Shared generators and oracles for the integration tests.

#![allow(dead_code)]

use commtype::expr::{BinOp, CmpOp};
use commtype::protocol::{Collective, DataKind, GlobalAtom, PiBinder, ReduceOp};
use commtype::typestate::Action;
use commtype::{Expr, GlobalType, Instantiation, Kind, LocalAtom, Pred, Protocol};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FDIFF_CTY: &str = include_str!("../../data/fdiff.cty");
pub const FDIFF_MMP: &str = include_str!("../../data/fdiff.mmp");

pub const MAX_PROCS: i64 = 4;
pub const MAX_DEPTH: usize = 3;
pub const MAX_ATOMS: usize = 12;

fn lit(v: i64) -> Expr {
    Expr::Lit(v)
}

fn var(n: &str) -> Expr {
    Expr::var(n)
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    nprocs: i64,
    names: Vec<&'static str>,
    atoms_left: usize,
}

impl Gen<'_> {
    fn dtype(&mut self) -> DataKind {
        *[DataKind::Int, DataKind::Float].choose(self.rng).unwrap()
    }

    fn len(&mut self) -> Expr {
        let choice = self.rng.gen_range(0..4);
        match (choice, self.names.first().copied()) {
            (1, Some(k)) => var(k),
            (2, Some(k)) => Expr::bin(BinOp::Add, Expr::bin(BinOp::Div, var(k), lit(2)), lit(1)),
            (3, _) => Expr::bin(BinOp::Mul, lit(self.rng.gen_range(1..4)), lit(2)),
            _ => lit(self.rng.gen_range(0..6)),
        }
    }

    fn rank(&mut self) -> i64 {
        self.rng.gen_range(0..self.nprocs)
    }

    fn atom(&mut self) -> GlobalAtom {
        let dtype = self.dtype();
        let len = self.len();
        match self.rng.gen_range(0..10) {
            0 => GlobalAtom::Collective(Collective::Scatter { root: lit(self.rank()), dtype, len }),
            1 => GlobalAtom::Collective(Collective::Gather { root: lit(self.rank()), dtype, len }),
            2 => GlobalAtom::Collective(Collective::Bcast { root: lit(self.rank()), dtype, len }),
            3 => {
                let op = *[ReduceOp::Max, ReduceOp::Min, ReduceOp::Sum].choose(self.rng).unwrap();
                GlobalAtom::Collective(Collective::Allreduce { dtype, len, op })
            }
            _ => {
                let src = self.rank();
                let dst = (src + self.rng.gen_range(1..self.nprocs)) % self.nprocs;
                GlobalAtom::Message { src: lit(src), dst: lit(dst), dtype, len }
            }
        }
    }

    fn ty(&mut self, depth: usize) -> GlobalType {
        let items = self.rng.gen_range(0..=4);
        let mut parts = Vec::new();
        for _ in 0..items {
            let nest = depth < MAX_DEPTH && self.rng.gen_bool(0.3);
            if nest {
                parts.push(Part::Nested(self.rng.gen_bool(0.5)));
            } else if self.atoms_left > 0 {
                self.atoms_left -= 1;
                parts.push(Part::Atom(self.atom()));
            }
        }
        // Build back to front so the continuation exists before its prefix.
        let mut t = GlobalType::End;
        let mut built = Vec::new();
        for p in parts {
            built.push(match p {
                Part::Atom(a) => Built::Atom(a),
                Part::Nested(true) => Built::Loop(self.ty(depth + 1)),
                Part::Nested(false) => Built::Choice(self.ty(depth + 1), self.ty(depth + 1)),
            });
        }
        for b in built.into_iter().rev() {
            t = match b {
                Built::Atom(a) => GlobalType::prefix(a, t),
                Built::Loop(body) => GlobalType::looped(body, t),
                Built::Choice(y, n) => GlobalType::choice(y, n, t),
            };
        }
        t
    }
}

enum Part {
    Atom(GlobalAtom),
    Nested(bool),
}

enum Built {
    Atom(GlobalAtom),
    Loop(GlobalType),
    Choice(GlobalType, GlobalType),
}

/// A random protocol within the generation bounds, with an instantiation
/// satisfying its binders.
pub fn random_protocol(rng: &mut ChaCha8Rng) -> (Protocol, Instantiation) {
    let nprocs = rng.gen_range(2..=MAX_PROCS);
    let mut binders = Vec::new();
    let mut inst = Instantiation::new();
    let mut names = Vec::new();
    if rng.gen_bool(0.5) {
        // k: {n:nat|n%2==0}
        let pred = Pred::cmp(CmpOp::Eq, Expr::bin(BinOp::Rem, var("n"), lit(2)), lit(0));
        binders.push(PiBinder { name: "k".into(), kind: Kind::refined(Kind::Nat, "n", pred) });
        inst = inst.with("k", 2 * rng.gen_range(0..6));
        names.push("k");
    }
    if rng.gen_bool(0.3) {
        // m: {v:int|v>=1 && v<=k+5}, mentioning the earlier binder when present.
        let upper = match names.first() {
            Some(k) => Expr::bin(BinOp::Add, var(k), lit(5)),
            None => lit(5),
        };
        let pred = Pred::And(
            Box::new(Pred::cmp(CmpOp::Ge, var("v"), lit(1))),
            Box::new(Pred::cmp(CmpOp::Le, var("v"), upper)),
        );
        binders.push(PiBinder { name: "m".into(), kind: Kind::refined(Kind::Int, "v", pred) });
        inst = inst.with("m", rng.gen_range(1..=5));
    }
    let mut g = Gen { rng, nprocs, names, atoms_left: MAX_ATOMS };
    let body = g.ty(0);
    (Protocol { binders, nprocs, body }, inst)
}

/// Loop/choice nesting depth of a type.
pub fn nesting<A>(t: &commtype::protocol::Type<A>) -> usize {
    use commtype::protocol::Type;
    match t {
        Type::End => 0,
        Type::Prefix(_, k) => nesting(k),
        Type::Loop { body, cont } => (1 + nesting(body)).max(nesting(cont)),
        Type::Choice { yes, no, cont } => (1 + nesting(yes).max(nesting(no))).max(nesting(cont)),
    }
}

/// Outcome of running straight-line traces under rendezvous semantics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOutcome {
    Completed,
    Stuck { positions: Vec<usize> },
}

/// Straight-line traces are confluent under rendezvous: each rank has one
/// next action, so firing any enabled synchronization never disables
/// another. Greedy execution therefore decides deadlock.
pub fn run_traces(traces: &[Vec<Action>]) -> TraceOutcome {
    let comm: Vec<Vec<&LocalAtom>> = traces
        .iter()
        .map(|t| {
            t.iter()
                .filter_map(|a| match a {
                    Action::Comm(x) => Some(x),
                    Action::Finalize => None,
                })
                .collect()
        })
        .collect();
    let n = comm.len();
    let mut pc = vec![0usize; n];
    loop {
        if (0..n).all(|r| pc[r] == comm[r].len()) {
            return TraceOutcome::Completed;
        }
        let mut fired = false;
        for r in 0..n {
            let Some(LocalAtom::Send { peer, dtype, len }) = comm[r].get(pc[r]) else { continue };
            let q = *peer as usize;
            if let Some(LocalAtom::Receive { peer: p, dtype: d, len: l }) = comm[q].get(pc[q]) {
                if *p as usize == r && d == dtype && l == len {
                    pc[r] += 1;
                    pc[q] += 1;
                    fired = true;
                }
            }
        }
        if !fired {
            let heads: Vec<_> = (0..n).map(|r| comm[r].get(pc[r])).collect();
            if let Some(Some(LocalAtom::Collective(c))) = heads.first() {
                if heads.iter().all(|h| matches!(h, Some(LocalAtom::Collective(c2)) if c2 == c)) {
                    pc.iter_mut().for_each(|p| *p += 1);
                    fired = true;
                }
            }
        }
        if !fired {
            return TraceOutcome::Stuck { positions: pc };
        }
    }
}

/// A MiniMPI program that follows `p` by construction: every message becomes
/// a send guarded by the source rank and a receive guarded by the target.
pub fn synthesize_program(p: &Protocol) -> String {
    let mut out = String::new();
    for b in &p.binders {
        out.push_str(&format!("param {}\n", b.name));
    }
    out.push_str("buffer bi int[64]\nbuffer bf float[64]\ninit\ncomm_size\ncomm_rank\n");
    emit(&mut out, &p.body, 0);
    out.push_str("finalize\n");
    out
}

fn buf(d: DataKind) -> &'static str {
    match d {
        DataKind::Int => "bi",
        DataKind::Float => "bf",
    }
}

fn emit(out: &mut String, t: &GlobalType, level: usize) {
    use commtype::protocol::Type;
    let pad = "  ".repeat(level);
    match t {
        Type::End => {}
        Type::Prefix(a, k) => {
            match a {
                GlobalAtom::Message { src, dst, dtype, len } => {
                    let b = buf(*dtype);
                    out.push_str(&format!(
                        "{pad}rankif (me == {src}) {{\n{pad}  send peer={dst} buf={b} len={len}\n{pad}}} else {{\n\
                         {pad}  rankif (me == {dst}) {{\n{pad}    recv peer={src} buf={b} len={len}\n{pad}  }}\n{pad}}}\n"
                    ));
                }
                GlobalAtom::Collective(c) => {
                    let b = buf(c.dtype());
                    let line = match c {
                        Collective::Scatter { root, len, .. } => format!("scatter root={root} buf={b} len={len}"),
                        Collective::Gather { root, len, .. } => format!("gather root={root} buf={b} len={len}"),
                        Collective::Bcast { root, len, .. } => format!("bcast root={root} buf={b} len={len}"),
                        Collective::Allreduce { len, op, .. } => format!("allreduce buf={b} len={len} op={op}"),
                    };
                    out.push_str(&format!("{pad}{line}\n"));
                }
            }
            emit(out, k, level);
        }
        Type::Loop { body, cont } => {
            out.push_str(&format!("{pad}collloop {{\n"));
            emit(out, body, level + 1);
            out.push_str(&format!("{pad}}}\n"));
            emit(out, cont, level);
        }
        Type::Choice { yes, no, cont } => {
            out.push_str(&format!("{pad}collchoice {{\n"));
            emit(out, yes, level + 1);
            out.push_str(&format!("{pad}}} else {{\n"));
            emit(out, no, level + 1);
            out.push_str(&format!("{pad}}}\n"));
            emit(out, cont, level);
        }
    }
}
