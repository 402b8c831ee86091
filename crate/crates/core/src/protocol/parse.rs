//! Text parser for `.cty` protocols and `.clt` local types.
//!
//! ```text
//! protocol := binder* "nprocs" INT "." type
//! binder   := "Pi" ident ":" kind "."
//! kind     := base ("[" expr "]")*
//! base     := "int" | "nat" | "float" | "{" ident ":" kind "|" pred "}"
//! type     := atom "." type
//!           | "loop" "(" type ")" "." type
//!           | "choice" "(" type "," type ")" "." type
//!           | "end"
//! ```

use std::collections::BTreeMap;

use super::{
    AstPath, Collective, DataKind, GlobalAtom, LocalAtom, LocalType, PathStep,
    PiBinder, Protocol, ReduceOp, SourceMap, Type,
};
use crate::expr::{Env, Expr, Kind, Refinement};
use crate::syntax::{Parser, Pos, SyntaxError, Tok};

const GLOBAL_ATOMS: &[&str] = &["message", "scatter", "gather", "bcast", "allreduce"];
const LOCAL_ATOMS: &[&str] = &["send", "receive", "scatter", "gather", "bcast", "allreduce"];

pub fn parse_protocol(text: &str) -> Result<Protocol, SyntaxError> {
    parse_protocol_with_spans(text).map(|(p, _)| p)
}

/// Parses a protocol and also returns the source position of each binder
/// and type node.
pub fn parse_protocol_with_spans(text: &str) -> Result<(Protocol, SourceMap), SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut map = SourceMap::default();
    let mut binders = Vec::new();
    while p.is_keyword("Pi") {
        let pos = p.bump().pos;
        let (name, _) = p.ident()?;
        p.expect(Tok::Colon)?;
        let kind = kind(&mut p)?;
        p.expect(Tok::Dot)?;
        binders.push(PiBinder { name, kind });
        map.binders.push(pos);
    }
    if !p.is_keyword("nprocs") {
        return p.error(&["`Pi`", "`nprocs`"]);
    }
    map.nprocs = p.bump().pos;
    let nprocs_pos = p.pos();
    let nprocs = p.int_literal()?;
    if nprocs < 1 {
        return Err(SyntaxError::new(nprocs_pos, "process count must be a positive integer"));
    }
    p.expect(Tok::Dot)?;
    let body = ty(&mut p, &mut global_atom, AstPath::default(), &mut map.nodes)?;
    p.expect_eof()?;
    Ok((Protocol { binders, nprocs, body }, map))
}

/// Parses a local type. Rank, peer and length fields must be closed integer
/// expressions; they are evaluated on the spot.
pub fn parse_local_type(text: &str) -> Result<LocalType, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut nodes = BTreeMap::new();
    let t = ty(&mut p, &mut local_atom, AstPath::default(), &mut nodes)?;
    p.expect_eof()?;
    Ok(t)
}

fn kind(p: &mut Parser) -> Result<Kind, SyntaxError> {
    let mut k = if p.eat(&Tok::LBrace) {
        let (var, _) = p.ident()?;
        p.expect(Tok::Colon)?;
        let base = kind(p)?;
        p.expect(Tok::Bar)?;
        let pred = p.pred()?;
        p.expect(Tok::RBrace)?;
        Kind::Refined(Box::new(base), Refinement { var, pred })
    } else if p.eat_keyword("int") {
        Kind::Int
    } else if p.eat_keyword("nat") {
        Kind::Nat
    } else if p.eat_keyword("float") {
        Kind::Float
    } else {
        return p.error(&["`int`", "`nat`", "`float`", "`{`"]);
    };
    while p.eat(&Tok::LBracket) {
        let len = p.expr()?;
        p.expect(Tok::RBracket)?;
        k = Kind::Array(Box::new(k), len);
    }
    Ok(k)
}

type AtomFn<'a, A> = dyn FnMut(&mut Parser, &str) -> Result<Option<A>, SyntaxError> + 'a;

fn ty<A: Clone>(
    p: &mut Parser,
    atom: &mut AtomFn<'_, A>,
    mut path: AstPath,
    nodes: &mut BTreeMap<AstPath, Pos>,
) -> Result<Type<A>, SyntaxError> {
    // Atoms along the spine are collected iteratively; only loop/choice
    // continuations recurse.
    let mut spine = Vec::new();
    let tail = loop {
        nodes.insert(path.clone(), p.pos());
        let (word, _) = match p.peek() {
            Tok::Ident(_) => p.ident()?,
            _ => return p.error(&["`end`", "`loop`", "`choice`", "communication atom"]),
        };
        match word.as_str() {
            "end" => break Type::End,
            "loop" => {
                p.expect(Tok::LParen)?;
                let body = ty(p, atom, path.child(PathStep::LoopBody), nodes)?;
                p.expect(Tok::RParen)?;
                p.expect(Tok::Dot)?;
                let cont = ty(p, atom, path.child(PathStep::LoopCont), nodes)?;
                break Type::looped(body, cont);
            }
            "choice" => {
                p.expect(Tok::LParen)?;
                let yes = ty(p, atom, path.child(PathStep::ChoiceTrue), nodes)?;
                p.expect(Tok::Comma)?;
                let no = ty(p, atom, path.child(PathStep::ChoiceFalse), nodes)?;
                p.expect(Tok::RParen)?;
                p.expect(Tok::Dot)?;
                let cont = ty(p, atom, path.child(PathStep::ChoiceCont), nodes)?;
                break Type::choice(yes, no, cont);
            }
            other => {
                let at = p.pos();
                match atom(p, other)? {
                    Some(a) => {
                        p.expect(Tok::Dot)?;
                        spine.push(a);
                        path = path.child(PathStep::Next);
                    }
                    None => {
                        return Err(SyntaxError {
                            pos: at,
                            message: format!("unknown atom `{other}`"),
                            expected: vec!["`end`".into(), "`loop`".into(), "`choice`".into()],
                        })
                    }
                }
            }
        }
    };
    Ok(Type::seq_atoms(spine, tail))
}

fn args<T>(
    p: &mut Parser,
    mut each: impl FnMut(&mut Parser, usize) -> Result<T, SyntaxError>,
    n: usize,
) -> Result<Vec<T>, SyntaxError> {
    p.expect(Tok::LParen)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            p.expect(Tok::Comma)?;
        }
        out.push(each(p, i)?);
    }
    p.expect(Tok::RParen)?;
    Ok(out)
}

fn dtype(p: &mut Parser) -> Result<DataKind, SyntaxError> {
    if let Tok::Ident(s) = p.peek() {
        if let Some(d) = DataKind::from_mpi_name(s) {
            p.bump();
            return Ok(d);
        }
    }
    p.error(&["`MPI_INT`", "`MPI_FLOAT`"])
}

fn reduce_op(p: &mut Parser) -> Result<ReduceOp, SyntaxError> {
    if let Tok::Ident(s) = p.peek() {
        if let Some(op) = ReduceOp::from_mpi_name(s) {
            p.bump();
            return Ok(op);
        }
    }
    p.error(&["`MPI_MAX`", "`MPI_MIN`", "`MPI_SUM`"])
}

enum Arg<V> {
    Val(V),
    Dtype(DataKind),
    Op(ReduceOp),
}

impl<V> Arg<V> {
    fn val(self) -> V {
        match self {
            Arg::Val(v) => v,
            _ => unreachable!("argument shape fixed by the caller"),
        }
    }
    fn dtype(&self) -> DataKind {
        match self {
            Arg::Dtype(d) => *d,
            _ => unreachable!("argument shape fixed by the caller"),
        }
    }
    fn op(&self) -> ReduceOp {
        match self {
            Arg::Op(o) => *o,
            _ => unreachable!("argument shape fixed by the caller"),
        }
    }
}

/// Parses `name(...)` arguments whose layout is given by `shape`
/// (`v` value, `d` datatype, `o` reduction op).
fn shaped<V>(
    p: &mut Parser,
    shape: &str,
    value: &mut dyn FnMut(&mut Parser) -> Result<V, SyntaxError>,
) -> Result<Vec<Arg<V>>, SyntaxError> {
    let shape: Vec<char> = shape.chars().collect();
    args(
        p,
        |p, i| match shape[i] {
            'v' => value(p).map(Arg::Val),
            'd' => dtype(p).map(Arg::Dtype),
            'o' => reduce_op(p).map(Arg::Op),
            _ => unreachable!(),
        },
        shape.len(),
    )
}

fn collective<V>(
    p: &mut Parser,
    name: &str,
    value: &mut dyn FnMut(&mut Parser) -> Result<V, SyntaxError>,
) -> Result<Option<Collective<V>>, SyntaxError> {
    let rooted = |a: Vec<Arg<V>>| {
        let dtype = a[1].dtype();
        let mut it = a.into_iter();
        let root = it.next().unwrap().val();
        let len = it.nth(1).unwrap().val();
        (root, dtype, len)
    };
    Ok(Some(match name {
        "scatter" => {
            let (root, dtype, len) = rooted(shaped(p, "vdv", value)?);
            Collective::Scatter { root, dtype, len }
        }
        "gather" => {
            let (root, dtype, len) = rooted(shaped(p, "vdv", value)?);
            Collective::Gather { root, dtype, len }
        }
        "bcast" => {
            let (root, dtype, len) = rooted(shaped(p, "vdv", value)?);
            Collective::Bcast { root, dtype, len }
        }
        "allreduce" => {
            let a = shaped(p, "dvo", value)?;
            let (dtype, op) = (a[0].dtype(), a[2].op());
            let len = a.into_iter().nth(1).unwrap().val();
            Collective::Allreduce { dtype, len, op }
        }
        _ => return Ok(None),
    }))
}

fn global_atom(p: &mut Parser, name: &str) -> Result<Option<GlobalAtom>, SyntaxError> {
    if !GLOBAL_ATOMS.contains(&name) {
        return Ok(None);
    }
    let mut value = |p: &mut Parser| p.expr();
    if name == "message" {
        let a = shaped(p, "vvdv", &mut value)?;
        let dtype = a[2].dtype();
        let mut it = a.into_iter();
        let src = it.next().unwrap().val();
        let dst = it.next().unwrap().val();
        let len = it.nth(1).unwrap().val();
        return Ok(Some(GlobalAtom::Message { src, dst, dtype, len }));
    }
    Ok(collective(p, name, &mut value)?.map(GlobalAtom::Collective))
}

fn closed_int(p: &mut Parser) -> Result<i64, SyntaxError> {
    let pos = p.pos();
    let e: Expr = p.expr()?;
    e.eval(&Env::new()).map_err(|err| {
        SyntaxError::new(pos, format!("local type fields must be closed integer expressions ({err})"))
    })
}

fn local_atom(p: &mut Parser, name: &str) -> Result<Option<LocalAtom>, SyntaxError> {
    if !LOCAL_ATOMS.contains(&name) {
        return Ok(None);
    }
    let mut value = closed_int;
    if name == "send" || name == "receive" {
        let a = shaped(p, "vdv", &mut value)?;
        let dtype = a[1].dtype();
        let mut it = a.into_iter();
        let peer = it.next().unwrap().val();
        let len = it.nth(1).unwrap().val();
        return Ok(Some(if name == "send" {
            LocalAtom::Send { peer, dtype, len }
        } else {
            LocalAtom::Receive { peer, dtype, len }
        }));
    }
    Ok(collective(p, name, &mut value)?.map(LocalAtom::Collective))
}
