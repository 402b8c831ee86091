//! Tokenizer and parsing helpers shared by the protocol and program formats.

use std::fmt;

use thiserror::Error;

use crate::expr::{BinOp, CmpOp, Expr, Pred};

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
    /// Tokens that would have been accepted at `pos`; empty for lexical and
    /// structural errors.
    pub expected: Vec<String>,
}

impl SyntaxError {
    pub fn new(pos: Pos, message: impl Into<String>) -> Self {
        SyntaxError { pos, message: message.into(), expected: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Dot,
    Comma,
    Colon,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Bar,
    OrOr,
    AndAnd,
    Bang,
    Assign,
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::Int(v) => return write!(f, "`{v}`"),
            Tok::Dot => ".",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Bar => "|",
            Tok::OrOr => "||",
            Tok::AndAnd => "&&",
            Tok::Bang => "!",
            Tok::Assign => "=",
            Tok::Cmp(op) => op.symbol(),
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Eof => return f.write_str("end of input"),
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, col);
        let peek = chars.get(i + 1).copied();
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += (i - start) as u32;
            let text: String = chars[start..i].iter().collect();
            // Magnitudes up to 2^63 are kept so a leading minus can form i64::MIN.
            let v: u64 = text
                .parse()
                .ok()
                .filter(|v| *v <= 1u64 << 63)
                .ok_or_else(|| SyntaxError::new(pos, format!("integer literal `{text}` out of range")))?;
            out.push(Token { tok: Tok::Int(v as i64), pos });
            continue;
        }
        let two = |a: char, b: char| c == a && peek == Some(b);
        let (tok, len) = if two('|', '|') {
            (Tok::OrOr, 2)
        } else if two('&', '&') {
            (Tok::AndAnd, 2)
        } else if two('=', '=') {
            (Tok::Cmp(CmpOp::Eq), 2)
        } else if two('!', '=') {
            (Tok::Cmp(CmpOp::Ne), 2)
        } else if two('<', '=') {
            (Tok::Cmp(CmpOp::Le), 2)
        } else if two('>', '=') {
            (Tok::Cmp(CmpOp::Ge), 2)
        } else {
            let t = match c {
                '.' => Tok::Dot,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '|' => Tok::Bar,
                '!' => Tok::Bang,
                '=' => Tok::Assign,
                '<' => Tok::Cmp(CmpOp::Lt),
                '>' => Tok::Cmp(CmpOp::Gt),
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '%' => Tok::Percent,
                other => {
                    return Err(SyntaxError::new(pos, format!("unexpected character `{other}`")))
                }
            };
            (t, 1)
        };
        i += len;
        col += len as u32;
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos::new(line, col) });
    Ok(out)
}

/// Cursor over a token stream with expression and predicate parsing.
pub struct Parser {
    toks: Vec<Token>,
    idx: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Parser { toks: tokenize(src)?, idx: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.idx].tok
    }

    pub fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.idx + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.idx].pos
    }

    pub fn bump(&mut self) -> Token {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    pub fn error<T>(&self, expected: &[&str]) -> Result<T, SyntaxError> {
        let found = self.peek();
        let list = expected.join(", ");
        Err(SyntaxError {
            pos: self.pos(),
            message: format!("expected one of {list}; found {found}"),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: Tok) -> Result<Pos, SyntaxError> {
        if *self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            self.error(&[&tok.to_string()])
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<Pos, SyntaxError> {
        if self.is_keyword(kw) {
            Ok(self.bump().pos)
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    pub fn ident(&mut self) -> Result<(String, Pos), SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().pos)),
            _ => self.error(&["identifier"]),
        }
    }

    pub fn int_literal(&mut self) -> Result<i64, SyntaxError> {
        let neg = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Int(v) => {
                let pos = self.bump().pos;
                signed(v, neg, pos)
            }
            _ => self.error(&["integer literal"]),
        }
    }

    pub fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub fn expect_eof(&self) -> Result<(), SyntaxError> {
        if self.at_eof() {
            Ok(())
        } else {
            self.error(&["end of input"])
        }
    }

    pub fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let (op, prec) = match self.peek() {
                Tok::Plus => (BinOp::Add, 1),
                Tok::Minus => (BinOp::Sub, 1),
                Tok::Star => (BinOp::Mul, 2),
                Tok::Slash => (BinOp::Div, 2),
                Tok::Percent => (BinOp::Rem, 2),
                _ => return Ok(lhs),
            };
            if prec < min_prec {
                return Ok(lhs);
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Minus => {
                let pos = self.bump().pos;
                if let Tok::Int(v) = *self.peek() {
                    self.bump();
                    return Ok(Expr::Lit(signed(v, true, pos)?));
                }
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Int(v) => {
                let pos = self.bump().pos;
                Ok(Expr::Lit(signed(v, false, pos)?))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.error(&["integer literal", "identifier", "`(`", "`-`"]),
        }
    }

    pub fn pred(&mut self) -> Result<Pred, SyntaxError> {
        let mut lhs = self.pred_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.pred_and()?;
            lhs = Pred::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_and(&mut self) -> Result<Pred, SyntaxError> {
        let mut lhs = self.pred_unary()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.pred_unary()?;
            lhs = Pred::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_unary(&mut self) -> Result<Pred, SyntaxError> {
        if self.eat(&Tok::Bang) {
            return Ok(Pred::Not(Box::new(self.pred_unary()?)));
        }
        if self.is_keyword("true") {
            self.bump();
            return Ok(Pred::True);
        }
        if self.is_keyword("false") {
            self.bump();
            return Ok(Pred::False);
        }
        if self.is_keyword("divides") && *self.peek_at(1) == Tok::LParen {
            self.bump();
            self.bump();
            let d = self.expr()?;
            self.expect(Tok::Comma)?;
            let x = self.expr()?;
            self.expect(Tok::RParen)?;
            return Ok(Pred::Divides(d, x));
        }
        if *self.peek() == Tok::LParen {
            // `(` opens either a nested predicate or an arithmetic operand of
            // a comparison; try the predicate reading first.
            let save = self.idx;
            self.bump();
            if let Ok(p) = self.pred() {
                if self.eat(&Tok::RParen) && !self.at_arith_continuation() {
                    return Ok(p);
                }
            }
            self.idx = save;
        }
        let lhs = self.expr()?;
        let op = match *self.peek() {
            Tok::Cmp(op) => op,
            _ => return self.error(&["comparison operator"]),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Pred::Cmp(op, lhs, rhs))
    }

    fn at_arith_continuation(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Plus | Tok::Minus | Tok::Star | Tok::Slash | Tok::Percent | Tok::Cmp(_)
        )
    }
}

fn signed(magnitude: i64, neg: bool, pos: Pos) -> Result<i64, SyntaxError> {
    // Magnitude 2^63 arrives as i64::MIN from the lexer.
    let out_of_range = || SyntaxError::new(pos, "integer literal out of range");
    if neg {
        if magnitude == i64::MIN {
            Ok(i64::MIN)
        } else {
            Ok(-magnitude)
        }
    } else if magnitude < 0 {
        Err(out_of_range())
    } else {
        Ok(magnitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Env;

    fn expr(s: &str) -> Expr {
        let mut p = Parser::new(s).unwrap();
        let e = p.expr().unwrap();
        p.expect_eof().unwrap();
        e
    }

    fn pred(s: &str) -> Pred {
        let mut p = Parser::new(s).unwrap();
        let e = p.pred().unwrap();
        p.expect_eof().unwrap();
        e
    }

    #[test]
    fn positions_track_lines_and_comments() {
        let toks = tokenize("a // note\n  b.").unwrap();
        assert_eq!(toks[0].pos, Pos::new(1, 1));
        assert_eq!(toks[1].pos, Pos::new(2, 3));
        assert_eq!(toks[2].tok, Tok::Dot);
        assert_eq!(toks[3].tok, Tok::Eof);
    }

    #[test]
    fn precedence_and_associativity() {
        let env = Env::new().with("np", 3).with("me", 0);
        assert_eq!(expr("(np + me - 1) % np").eval(&env), Ok(2));
        assert_eq!(expr("10 - 3 - 2").eval(&env), Ok(5));
        assert_eq!(expr("2 + 3 * 4").eval(&env), Ok(14));
        assert_eq!(expr("-3"), Expr::Lit(-3));
        assert_eq!(expr("-9223372036854775808"), Expr::Lit(i64::MIN));
    }

    #[test]
    fn literal_out_of_range() {
        let mut p = Parser::new("9223372036854775808").unwrap();
        assert!(p.expr().is_err());
        assert!(tokenize("99999999999999999999").is_err());
    }

    #[test]
    fn predicates_with_parentheses() {
        let env = Env::new().with("n", 9).with("me", 2);
        assert_eq!(pred("n%3==0").eval(&env), Ok(true));
        assert_eq!(pred("(me % 2 == 0)").eval(&env), Ok(true));
        assert_eq!(pred("(me + 1) % 2 == 1").eval(&env), Ok(true));
        assert_eq!(pred("!(n < 0) && (n == 1 || n == 9)").eval(&env), Ok(true));
        assert_eq!(pred("divides(3, n)").eval(&env), Ok(true));
    }

    #[test]
    fn error_lists_expected_tokens() {
        let mut p = Parser::new("3 +").unwrap();
        let err = p.expr().unwrap_err();
        assert_eq!(err.pos, Pos::new(1, 4));
        assert!(err.expected.contains(&"identifier".to_string()));
    }

    #[test]
    fn unknown_character() {
        let err = tokenize("a $ b").unwrap_err();
        assert_eq!(err.pos, Pos::new(1, 3));
    }
}
