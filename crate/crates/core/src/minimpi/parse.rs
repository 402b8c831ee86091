//! Parser for `.mmp` program files.

use std::collections::HashSet;

use super::{BufRef, BufferDecl, CollKind, CollStmt, PointToPoint, Program, Stmt, StmtKind};
use crate::expr::Expr;
use crate::protocol::{DataKind, ReduceOp};
use crate::syntax::{Parser, Pos, SyntaxError, Tok};

const RESERVED: &[&str] = &["me", "np"];

const STMT_KEYWORDS: &[&str] = &[
    "init", "comm_size", "comm_rank", "let", "compute", "send", "recv", "scatter", "gather",
    "bcast", "allreduce", "collloop", "collchoice", "rankif", "finalize",
];

pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut prog = Program { params: Vec::new(), buffers: Vec::new(), body: Vec::new() };
    let mut param_pos = Vec::new();
    while !p.at_eof() {
        if p.is_keyword("param") {
            p.bump();
            let (name, pos) = p.ident()?;
            param_pos.push(pos);
            prog.params.push(name);
        } else if p.is_keyword("buffer") {
            p.bump();
            prog.buffers.push(buffer_decl(&mut p)?);
        } else {
            prog.body.push(stmt(&mut p)?);
        }
    }
    validate(&prog, &param_pos)?;
    Ok(prog)
}

fn buffer_decl(p: &mut Parser) -> Result<BufferDecl, SyntaxError> {
    let (name, pos) = p.ident()?;
    let elem = if p.eat_keyword("float") {
        DataKind::Float
    } else if p.eat_keyword("int") {
        DataKind::Int
    } else {
        return p.error(&["`float`", "`int`"]);
    };
    p.expect(Tok::LBracket)?;
    let capacity = p.expr()?;
    p.expect(Tok::RBracket)?;
    Ok(BufferDecl { name, elem, capacity, pos })
}

fn block(p: &mut Parser) -> Result<Vec<Stmt>, SyntaxError> {
    p.expect(Tok::LBrace)?;
    let mut out = Vec::new();
    while *p.peek() != Tok::RBrace {
        if p.at_eof() {
            return p.error(&["`}`"]);
        }
        out.push(stmt(p)?);
    }
    p.bump();
    Ok(out)
}

fn else_block(p: &mut Parser) -> Result<Vec<Stmt>, SyntaxError> {
    if p.eat_keyword("else") {
        block(p)
    } else {
        Ok(Vec::new())
    }
}

fn stmt(p: &mut Parser) -> Result<Stmt, SyntaxError> {
    let pos = p.pos();
    let word = match p.peek() {
        Tok::Ident(w) if STMT_KEYWORDS.contains(&w.as_str()) => w.clone(),
        Tok::Ident(w) if w == "param" || w == "buffer" => {
            return Err(SyntaxError::new(pos, format!("`{w}` declarations are only allowed at top level")))
        }
        _ => {
            let mut expected: Vec<String> = STMT_KEYWORDS.iter().map(|k| format!("`{k}`")).collect();
            expected.push("`}`".into());
            return Err(SyntaxError {
                pos,
                message: format!("expected a statement; found {}", p.peek()),
                expected,
            });
        }
    };
    p.bump();
    let kind = match word.as_str() {
        "init" => StmtKind::Init,
        "comm_size" => StmtKind::CommSize,
        "comm_rank" => StmtKind::CommRank,
        "compute" => StmtKind::Compute,
        "finalize" => StmtKind::Finalize,
        "let" => {
            let (name, _) = p.ident()?;
            p.expect(Tok::Assign)?;
            StmtKind::Let { name, value: p.expr()? }
        }
        "send" | "recv" => {
            let mut f = Fields::parse(p, pos, &["peer", "buf", "len"], &["dtype"])?;
            let pp = PointToPoint { peer: f.expr("peer"), buf: f.buf(), len: f.expr("len"), dtype: f.dtype };
            if word == "send" {
                StmtKind::Send(pp)
            } else {
                StmtKind::Recv(pp)
            }
        }
        "scatter" | "gather" | "bcast" => {
            let mut f = Fields::parse(p, pos, &["root", "buf", "len"], &["dtype"])?;
            let kind = match word.as_str() {
                "scatter" => CollKind::Scatter,
                "gather" => CollKind::Gather,
                _ => CollKind::Bcast,
            };
            StmtKind::Collective(CollStmt {
                kind,
                root: Some(f.expr("root")),
                op: None,
                buf: f.buf(),
                len: f.expr("len"),
                dtype: f.dtype,
            })
        }
        "allreduce" => {
            let mut f = Fields::parse(p, pos, &["buf", "len", "op"], &["dtype"])?;
            StmtKind::Collective(CollStmt {
                kind: CollKind::Allreduce,
                root: None,
                op: f.op,
                buf: f.buf(),
                len: f.expr("len"),
                dtype: f.dtype,
            })
        }
        "collloop" => StmtKind::CollLoop(block(p)?),
        "collchoice" => {
            let then = block(p)?;
            StmtKind::CollChoice { then, els: else_block(p)? }
        }
        "rankif" => {
            p.expect(Tok::LParen)?;
            let guard = p.pred()?;
            p.expect(Tok::RParen)?;
            let then = block(p)?;
            StmtKind::RankIf { guard, then, els: else_block(p)? }
        }
        _ => unreachable!("keyword list and match arms agree"),
    };
    Ok(Stmt { pos, kind })
}

/// `key=value` arguments of a communication statement.
struct Fields {
    exprs: Vec<(String, Expr)>,
    buf: Option<BufRef>,
    dtype: Option<DataKind>,
    op: Option<ReduceOp>,
}

impl Fields {
    fn parse(p: &mut Parser, stmt_pos: Pos, required: &[&str], optional: &[&str]) -> Result<Self, SyntaxError> {
        let mut f = Fields { exprs: Vec::new(), buf: None, dtype: None, op: None };
        let mut seen = HashSet::new();
        while matches!(p.peek(), Tok::Ident(k) if required.contains(&k.as_str()) || optional.contains(&k.as_str()))
            && *p.peek_at(1) == Tok::Assign
        {
            let (key, key_pos) = p.ident()?;
            p.bump();
            if !seen.insert(key.clone()) {
                return Err(SyntaxError::new(key_pos, format!("duplicate argument `{key}`")));
            }
            match key.as_str() {
                "buf" => {
                    let (name, _) = p.ident()?;
                    let offset = if p.eat(&Tok::LBracket) {
                        let e = p.expr()?;
                        p.expect(Tok::RBracket)?;
                        Some(e)
                    } else {
                        None
                    };
                    f.buf = Some(BufRef { name, offset });
                }
                "dtype" => f.dtype = Some(word_value(p, dtype_name, &["FLOAT", "INT"])?),
                "op" => f.op = Some(word_value(p, op_name, &["MAX", "MIN", "SUM"])?),
                _ => f.exprs.push((key, p.expr()?)),
            }
        }
        if let Some(missing) = required.iter().find(|k| !seen.contains(**k)) {
            let mut expected: Vec<String> = required
                .iter()
                .chain(optional)
                .filter(|k| !seen.contains(**k))
                .map(|k| format!("`{k}=`"))
                .collect();
            expected.sort();
            return Err(SyntaxError {
                pos: p.pos(),
                message: format!("statement at {stmt_pos} is missing argument `{missing}`"),
                expected,
            });
        }
        Ok(f)
    }

    fn expr(&mut self, key: &str) -> Expr {
        let i = self.exprs.iter().position(|(k, _)| k == key).expect("required key checked");
        self.exprs.swap_remove(i).1
    }

    fn buf(&mut self) -> BufRef {
        self.buf.take().expect("required key checked")
    }
}

fn dtype_name(s: &str) -> Option<DataKind> {
    match s {
        "FLOAT" | "float" => Some(DataKind::Float),
        "INT" | "int" => Some(DataKind::Int),
        other => DataKind::from_mpi_name(other),
    }
}

fn op_name(s: &str) -> Option<ReduceOp> {
    match s {
        "MAX" => Some(ReduceOp::Max),
        "MIN" => Some(ReduceOp::Min),
        "SUM" => Some(ReduceOp::Sum),
        other => ReduceOp::from_mpi_name(other),
    }
}

fn word_value<T>(p: &mut Parser, f: fn(&str) -> Option<T>, expected: &[&str]) -> Result<T, SyntaxError> {
    if let Tok::Ident(w) = p.peek() {
        if let Some(v) = f(w) {
            p.bump();
            return Ok(v);
        }
    }
    let names: Vec<String> = expected.iter().map(|e| format!("`{e}`")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    p.error(&refs)
}

fn validate(prog: &Program, param_pos: &[Pos]) -> Result<(), SyntaxError> {
    let mut names = HashSet::new();
    for (name, pos) in prog.params.iter().zip(param_pos) {
        if RESERVED.contains(&name.as_str()) {
            return Err(SyntaxError::new(*pos, format!("`{name}` is reserved")));
        }
        if !names.insert(name.as_str()) {
            return Err(SyntaxError::new(*pos, format!("parameter `{name}` declared twice")));
        }
    }
    let mut bufs = HashSet::new();
    for b in &prog.buffers {
        if !bufs.insert(b.name.as_str()) {
            return Err(SyntaxError::new(b.pos, format!("buffer `{}` declared twice", b.name)));
        }
    }

    // init opens the program and finalize closes it; only lets and local
    // computation may precede init.
    let body = &prog.body;
    let Some(init_at) = body.iter().position(|s| s.kind == StmtKind::Init) else {
        let pos = body.first().map_or(Pos::new(1, 1), |s| s.pos);
        return Err(SyntaxError::new(pos, "program has no `init`"));
    };
    if let Some(s) = body[..init_at]
        .iter()
        .find(|s| !matches!(s.kind, StmtKind::Let { .. } | StmtKind::Compute))
    {
        return Err(SyntaxError::new(s.pos, format!("`{}` before `init`", s.kind.keyword())));
    }
    match body.last() {
        Some(s) if s.kind == StmtKind::Finalize => {}
        Some(s) => return Err(SyntaxError::new(s.pos, "program must end with `finalize`")),
        None => unreachable!("init was found"),
    }
    let mut inits = 0;
    let mut finals = 0;
    check_nested(body, true, &mut inits, &mut finals, &bufs)?;
    Ok(())
}

fn check_nested(
    stmts: &[Stmt],
    top: bool,
    inits: &mut usize,
    finals: &mut usize,
    bufs: &HashSet<&str>,
) -> Result<(), SyntaxError> {
    for s in stmts {
        let check_buf = |b: &BufRef| {
            if bufs.contains(b.name.as_str()) {
                Ok(())
            } else {
                Err(SyntaxError::new(s.pos, format!("unknown buffer `{}`", b.name)))
            }
        };
        match &s.kind {
            StmtKind::Init | StmtKind::Finalize => {
                let counter = if s.kind == StmtKind::Init { &mut *inits } else { &mut *finals };
                *counter += 1;
                if !top || *counter > 1 {
                    return Err(SyntaxError::new(
                        s.pos,
                        format!("`{}` must appear exactly once, at top level", s.kind.keyword()),
                    ));
                }
            }
            StmtKind::Let { name, .. } if RESERVED.contains(&name.as_str()) => {
                return Err(SyntaxError::new(s.pos, format!("`{name}` is reserved")));
            }
            StmtKind::Send(pp) | StmtKind::Recv(pp) => check_buf(&pp.buf)?,
            StmtKind::Collective(c) => check_buf(&c.buf)?,
            StmtKind::CollLoop(b) => check_nested(b, false, inits, finals, bufs)?,
            StmtKind::CollChoice { then, els } | StmtKind::RankIf { then, els, .. } => {
                check_nested(then, false, inits, finals, bufs)?;
                check_nested(els, false, inits, finals, bufs)?;
            }
            _ => {}
        }
    }
    Ok(())
}
