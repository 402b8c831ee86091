//! Integer expressions, refinement predicates and kinds.
//!
//! Everything here is decided by concrete evaluation. Arithmetic is signed
//! 64-bit with C semantics: division truncates toward zero, `%` takes the
//! sign of the dividend, and overflow is an error rather than wraparound.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("kind `{0}` is not integer-valued")]
    KindMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 2,
        }
    }

    pub fn apply(self, lhs: i64, rhs: i64) -> Result<i64, EvalError> {
        match self {
            BinOp::Add => lhs.checked_add(rhs).ok_or(EvalError::Overflow),
            BinOp::Sub => lhs.checked_sub(rhs).ok_or(EvalError::Overflow),
            BinOp::Mul => lhs.checked_mul(rhs).ok_or(EvalError::Overflow),
            BinOp::Div | BinOp::Rem if rhs == 0 => Err(EvalError::DivisionByZero),
            // i64 `/` and `%` already truncate toward zero; MIN / -1 is the
            // only overflowing case.
            BinOp::Div => lhs.checked_div(rhs).ok_or(EvalError::Overflow),
            BinOp::Rem => lhs.checked_rem(rhs).ok_or(EvalError::Overflow),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self, env: &Env) -> Result<i64, EvalError> {
        match self {
            Expr::Lit(v) => Ok(*v),
            Expr::Var(name) => env.get(name),
            Expr::Neg(e) => e.eval(env)?.checked_neg().ok_or(EvalError::Overflow),
            Expr::Bin(op, lhs, rhs) => {
                let l = lhs.eval(env)?;
                let r = rhs.eval(env)?;
                op.apply(l, r)
            }
        }
    }

    /// Free variables in first-occurrence order.
    pub fn free_vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            // A negative literal prints with a leading `-`; treat it like a
            // unary operator so `a-(-1)` keeps its parentheses.
            Expr::Lit(v) if *v < 0 => 3,
            _ => 4,
        }
    }
}

/// Evaluates `e` under `env`.
pub fn eval(e: &Expr, env: &Env) -> Result<i64, EvalError> {
    e.eval(env)
}

/// Equality of two expressions under a concrete environment.
pub fn expr_equal(a: &Expr, b: &Expr, env: &Env) -> Result<bool, EvalError> {
    Ok(a.eval(env)? == b.eval(env)?)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(e) => {
                if e.precedence() >= 4 && !matches!(**e, Expr::Lit(_)) {
                    write!(f, "-{e}")
                } else {
                    write!(f, "-({e})")
                }
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                f.write_str(op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, l: i64, r: i64) -> bool {
        match self {
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
            CmpOp::Lt => l < r,
            CmpOp::Le => l <= r,
            CmpOp::Gt => l > r,
            CmpOp::Ge => l >= r,
        }
    }
}

/// Boolean predicate over integer expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pred {
    True,
    False,
    Cmp(CmpOp, Expr, Expr),
    /// `divides(d, x)`: `x` is a multiple of `d`. Zero divides only zero.
    Divides(Expr, Expr),
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

impl Pred {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Self {
        Pred::Cmp(op, lhs, rhs)
    }

    pub fn eval(&self, env: &Env) -> Result<bool, EvalError> {
        match self {
            Pred::True => Ok(true),
            Pred::False => Ok(false),
            Pred::Cmp(op, l, r) => Ok(op.holds(l.eval(env)?, r.eval(env)?)),
            Pred::Divides(d, x) => {
                let d = d.eval(env)?;
                let x = x.eval(env)?;
                Ok(if d == 0 { x == 0 } else { x.checked_rem(d).is_none_or(|r| r == 0) })
            }
            Pred::Not(p) => Ok(!p.eval(env)?),
            Pred::And(a, b) => Ok(a.eval(env)? && b.eval(env)?),
            Pred::Or(a, b) => Ok(a.eval(env)? || b.eval(env)?),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Pred::Or(..) => 1,
            Pred::And(..) => 2,
            Pred::Not(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn side(f: &mut fmt::Formatter<'_>, p: &Pred, min: u8) -> fmt::Result {
            if p.precedence() < min {
                write!(f, "({p})")
            } else {
                write!(f, "{p}")
            }
        }
        match self {
            Pred::True => f.write_str("true"),
            Pred::False => f.write_str("false"),
            Pred::Cmp(op, l, r) => write!(f, "{l}{}{r}", op.symbol()),
            Pred::Divides(d, x) => write!(f, "divides({d}, {x})"),
            Pred::Not(p) => {
                f.write_str("!")?;
                side(f, p, 4)
            }
            Pred::And(a, b) => {
                side(f, a, 2)?;
                f.write_str(" && ")?;
                side(f, b, 3)
            }
            Pred::Or(a, b) => {
                side(f, a, 1)?;
                f.write_str(" || ")?;
                side(f, b, 2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Refinement {
    pub var: String,
    pub pred: Pred,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Kind {
    Int,
    /// Sugar for `{n:int|n>=0}`.
    Nat,
    Float,
    Array(Box<Kind>, Expr),
    Refined(Box<Kind>, Refinement),
}

impl Kind {
    pub fn refined(base: Kind, var: impl Into<String>, pred: Pred) -> Self {
        Kind::Refined(Box::new(base), Refinement { var: var.into(), pred })
    }

    /// Replaces every `nat` with its refined-int expansion.
    pub fn desugar(&self) -> Kind {
        match self {
            Kind::Nat => Kind::refined(
                Kind::Int,
                "n",
                Pred::cmp(CmpOp::Ge, Expr::var("n"), Expr::Lit(0)),
            ),
            Kind::Int | Kind::Float => self.clone(),
            Kind::Array(elem, len) => Kind::Array(Box::new(elem.desugar()), len.clone()),
            Kind::Refined(base, r) => Kind::Refined(Box::new(base.desugar()), r.clone()),
        }
    }

    pub fn is_integer(&self) -> bool {
        match self {
            Kind::Int | Kind::Nat => true,
            Kind::Refined(base, _) => base.is_integer(),
            Kind::Float | Kind::Array(..) => false,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Int => f.write_str("int"),
            Kind::Nat => f.write_str("nat"),
            Kind::Float => f.write_str("float"),
            Kind::Array(elem, len) => write!(f, "{elem}[{len}]"),
            Kind::Refined(base, r) => write!(f, "{{{}:{base}|{}}}", r.var, r.pred),
        }
    }
}

/// True iff `value` satisfies every refinement layer of `kind`, each
/// predicate evaluated with its bound variable set to `value`.
pub fn check_refinement(kind: &Kind, value: i64, env: &Env) -> Result<bool, EvalError> {
    match kind.desugar() {
        Kind::Int => Ok(true),
        Kind::Refined(base, r) => {
            if !check_refinement(&base, value, env)? {
                return Ok(false);
            }
            let mut inner = env.clone();
            inner.insert(r.var.clone(), value);
            r.pred.eval(&inner)
        }
        other => Err(EvalError::KindMismatch(other.to_string())),
    }
}

/// Ordered variable bindings. Unbound lookups are errors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Env(BTreeMap<String, i64>);

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Result<i64, EvalError> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::UnboundVariable(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, value: i64) -> Option<i64> {
        self.0.insert(name.into(), value)
    }

    pub fn with(mut self, name: impl Into<String>, value: i64) -> Self {
        self.insert(name, value);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<K: Into<String>> FromIterator<(K, i64)> for Env {
    fn from_iter<I: IntoIterator<Item = (K, i64)>>(iter: I) -> Self {
        Env(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn size_over_3() -> Expr {
        Expr::bin(BinOp::Div, Expr::var("size"), Expr::Lit(3))
    }

    fn nat_mult_of_3() -> Kind {
        Kind::refined(
            Kind::Nat,
            "n",
            Pred::cmp(
                CmpOp::Eq,
                Expr::bin(BinOp::Rem, Expr::var("n"), Expr::Lit(3)),
                Expr::Lit(0),
            ),
        )
    }

    #[test]
    fn eval_scatter_length() {
        let env = Env::new().with("size", 9);
        assert_eq!(eval(&size_over_3(), &env), Ok(3));
    }

    #[test]
    fn eval_left_neighbour_of_rank_zero() {
        // (np + me - 1) % np
        let left = Expr::bin(
            BinOp::Rem,
            Expr::bin(
                BinOp::Sub,
                Expr::bin(BinOp::Add, Expr::var("np"), Expr::var("me")),
                Expr::Lit(1),
            ),
            Expr::var("np"),
        );
        let env = Env::new().with("np", 3).with("me", 0);
        assert_eq!(eval(&left, &env), Ok(2));
    }

    #[test]
    fn c_division_semantics() {
        let env = Env::new();
        let div = |a, b| eval(&Expr::bin(BinOp::Div, Expr::Lit(a), Expr::Lit(b)), &env);
        let rem = |a, b| eval(&Expr::bin(BinOp::Rem, Expr::Lit(a), Expr::Lit(b)), &env);
        assert_eq!(div(-7, 2), Ok(-3));
        assert_eq!(rem(-7, 2), Ok(-1));
        assert_eq!(rem(7, -2), Ok(1));
        assert_eq!(div(1, 0), Err(EvalError::DivisionByZero));
        assert_eq!(rem(1, 0), Err(EvalError::DivisionByZero));
        assert_eq!(div(i64::MIN, -1), Err(EvalError::Overflow));
    }

    #[test]
    fn overflow_is_reported() {
        let e = Expr::bin(BinOp::Mul, Expr::Lit(i64::MAX), Expr::Lit(2));
        assert_eq!(eval(&e, &Env::new()), Err(EvalError::Overflow));
        assert_eq!(
            eval(&Expr::Neg(Box::new(Expr::Lit(i64::MIN))), &Env::new()),
            Err(EvalError::Overflow)
        );
    }

    #[test]
    fn unbound_variable() {
        assert_eq!(
            eval(&Expr::var("size"), &Env::new()),
            Err(EvalError::UnboundVariable("size".into()))
        );
    }

    #[test]
    fn refinement_examples() {
        let env = Env::new();
        assert_eq!(check_refinement(&nat_mult_of_3(), 9, &env), Ok(true));
        assert_eq!(check_refinement(&nat_mult_of_3(), -3, &env), Ok(false));
        assert_eq!(check_refinement(&nat_mult_of_3(), 7, &env), Ok(false));
        assert_eq!(check_refinement(&Kind::Nat, 0, &env), Ok(true));
        assert_eq!(check_refinement(&Kind::Int, -5, &env), Ok(true));
    }

    #[test]
    fn refinement_rejects_non_integer_kinds() {
        let env = Env::new();
        assert!(matches!(
            check_refinement(&Kind::Float, 1, &env),
            Err(EvalError::KindMismatch(_))
        ));
        let arr = Kind::Array(Box::new(Kind::Float), Expr::Lit(3));
        assert!(matches!(check_refinement(&arr, 1, &env), Err(EvalError::KindMismatch(_))));
    }

    #[test]
    fn refinement_sees_outer_binders() {
        // {m:int|m<=size}
        let k = Kind::refined(Kind::Int, "m", Pred::cmp(CmpOp::Le, Expr::var("m"), Expr::var("size")));
        let env = Env::new().with("size", 4);
        assert_eq!(check_refinement(&k, 4, &env), Ok(true));
        assert_eq!(check_refinement(&k, 5, &env), Ok(false));
    }

    #[test]
    fn divides_predicate() {
        let env = Env::new();
        let p = |d, x| Pred::Divides(Expr::Lit(d), Expr::Lit(x)).eval(&env).unwrap();
        assert!(p(3, 9));
        assert!(!p(3, 7));
        assert!(p(0, 0));
        assert!(!p(0, 4));
        assert!(p(-1, i64::MIN));
    }

    #[test]
    fn expr_equal_examples() {
        let k = Expr::var("k");
        let env = Env::new().with("k", 7).with("x", 5).with("size", 9).with("lsize", 3);
        assert_eq!(
            expr_equal(
                &Expr::bin(BinOp::Mul, Expr::Lit(2), k.clone()),
                &Expr::bin(BinOp::Add, k.clone(), k),
                &env
            ),
            Ok(true)
        );
        assert_eq!(expr_equal(&Expr::var("x"), &Expr::var("x"), &env), Ok(true));
        assert_eq!(expr_equal(&size_over_3(), &Expr::var("lsize"), &env), Ok(true));
    }

    #[test]
    fn display_is_minimal_but_faithful() {
        assert_eq!(size_over_3().to_string(), "size/3");
        let e = Expr::bin(
            BinOp::Sub,
            Expr::var("a"),
            Expr::bin(BinOp::Sub, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(e.to_string(), "a-(b-c)");
        assert_eq!(nat_mult_of_3().to_string(), "{n:nat|n%3==0}");
        assert_eq!(Kind::Nat.desugar().to_string(), "{n:int|n>=0}");
    }

    fn arb_kind() -> impl Strategy<Value = Kind> {
        let leaf = prop_oneof![Just(Kind::Int), Just(Kind::Nat)];
        leaf.prop_recursive(3, 8, 1, |inner| {
            (inner, 0i64..5).prop_map(|(k, c)| {
                Kind::refined(k, "n", Pred::cmp(CmpOp::Ne, Expr::var("n"), Expr::Lit(c)))
            })
        })
    }

    proptest! {
        #[test]
        fn nat_is_nonnegative(v in any::<i64>()) {
            prop_assert_eq!(check_refinement(&Kind::Nat, v, &Env::new()), Ok(v >= 0));
        }

        #[test]
        fn desugar_is_idempotent(k in arb_kind()) {
            let once = k.desugar();
            prop_assert_eq!(once.desugar(), once);
        }

        #[test]
        fn eval_is_deterministic(a in -1000i64..1000, b in -1000i64..1000, op in 0usize..5) {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem][op];
            let e = Expr::bin(op, Expr::var("a"), Expr::Lit(b));
            let env = Env::new().with("a", a);
            prop_assert_eq!(eval(&e, &env), eval(&e, &env));
        }

        #[test]
        fn expr_equal_is_symmetric(a in -50i64..50, b in -50i64..50) {
            let env = Env::new().with("a", a).with("b", b);
            let x = Expr::bin(BinOp::Add, Expr::var("a"), Expr::var("b"));
            let y = Expr::bin(BinOp::Mul, Expr::var("a"), Expr::Lit(2));
            prop_assert_eq!(expr_equal(&x, &y, &env), expr_equal(&y, &x, &env));
        }

        #[test]
        fn expr_equal_is_reflexive_and_transitive(a in -50i64..50, b in -50i64..50, c in -3i64..3) {
            let env = Env::new().with("a", a).with("b", b);
            let x = Expr::bin(BinOp::Add, Expr::var("a"), Expr::var("b"));
            let y = Expr::bin(BinOp::Add, Expr::var("b"), Expr::var("a"));
            let z = Expr::bin(BinOp::Add, Expr::Lit(a + c), Expr::var("b"));
            prop_assert_eq!(expr_equal(&x, &x, &env), Ok(true));
            if expr_equal(&x, &y, &env) == Ok(true) && expr_equal(&y, &z, &env) == Ok(true) {
                prop_assert_eq!(expr_equal(&x, &z, &env), Ok(true));
            }
            prop_assert_eq!(expr_equal(&x, &z, &env), Ok(c == 0));
        }
    }
}
