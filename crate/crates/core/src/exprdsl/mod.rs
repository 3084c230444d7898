//! Closed-form scalar expressions over named parameters.
//!
//! Expressions are parsed once into an immutable tree and evaluated with
//! plain `f64`, first-order dual numbers (gradients) or nested dual numbers
//! (Hessians). Every geometric quantity in this crate reaches coordinate
//! functions only through [`Expr`].

mod dual;
mod parse;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use dual::{Dual, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier '{name}' at {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("function '{func}' takes {expected} argument(s), got {got} (at {pos})")]
    Arity {
        func: String,
        expected: usize,
        got: usize,
        pos: usize,
    },
    #[error("name '{0}' declared both as parameter and constant")]
    NameClash(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in {op} at {pos}: argument {arg}")]
    Domain {
        op: &'static str,
        pos: usize,
        arg: f64,
    },
    #[error("expected {expected} parameter values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("missing value for parameter '{0}'")]
    MissingParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Neg,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "neg" => Func::Neg,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Neg => "neg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Num(f64),
    Param(usize),
    Const {
        name: String,
        value: f64,
    },
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    /// Power with an exponent that is parameter-free and integral; lowered to
    /// `powi`, so negative bases are allowed.
    PowInt(Box<Node>, Box<Node>, i32),
}

/// A tree node with its byte offset in the source. Equality ignores the
/// offset (structural comparison).
#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub pos: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Node {
    fn binary(op: BinOp, lhs: Node, rhs: Node, pos: usize) -> Node {
        if op == BinOp::Pow && rhs.is_param_free() {
            if let Ok(v) = rhs.eval::<f64>(&[]) {
                if v.is_finite() && v.fract() == 0.0 && v.abs() <= 1024.0 {
                    return Node {
                        kind: NodeKind::PowInt(Box::new(lhs), Box::new(rhs), v as i32),
                        pos,
                    };
                }
            }
        }
        Node {
            kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
            pos,
        }
    }

    fn is_param_free(&self) -> bool {
        match &self.kind {
            NodeKind::Num(_) | NodeKind::Const { .. } => true,
            NodeKind::Param(_) => false,
            NodeKind::Neg(a) | NodeKind::Call(_, a) => a.is_param_free(),
            NodeKind::Binary(_, a, b) | NodeKind::PowInt(a, b, _) => {
                a.is_param_free() && b.is_param_free()
            }
        }
    }

    fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S, EvalError> {
        let domain = |op, arg: f64| EvalError::Domain {
            op,
            pos: self.pos,
            arg,
        };
        Ok(match &self.kind {
            NodeKind::Num(v) => S::constant(*v),
            NodeKind::Const { value, .. } => S::constant(*value),
            NodeKind::Param(i) => vars[*i].clone(),
            NodeKind::Neg(a) => -a.eval(vars)?,
            NodeKind::Call(f, a) => {
                let x = a.eval(vars)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => {
                        if x.re().cos() == 0.0 {
                            return Err(domain("tan", x.re()));
                        }
                        x.tan()
                    }
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x.re() <= 0.0 {
                            return Err(domain("log", x.re()));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x.re() < 0.0 {
                            return Err(domain("sqrt", x.re()));
                        }
                        x.sqrt()
                    }
                    Func::Neg => -x,
                }
            }
            NodeKind::Binary(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y.re() == 0.0 {
                            return Err(domain("division", 0.0));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x.re() <= 0.0 {
                            return Err(domain("power (non-integer exponent)", x.re()));
                        }
                        (y * x.ln()).exp()
                    }
                }
            }
            NodeKind::PowInt(a, _, n) => {
                let x = a.eval(vars)?;
                if *n < 0 && x.re() == 0.0 {
                    return Err(domain("power (negative exponent)", 0.0));
                }
                x.powi(*n)
            }
        })
    }

    fn fmt_with(&self, params: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NodeKind::Num(v) => write!(f, "{v:?}"),
            NodeKind::Param(i) => write!(f, "{}", params[*i]),
            NodeKind::Const { name, .. } => write!(f, "{name}"),
            NodeKind::Neg(a) => {
                write!(f, "(-")?;
                a.fmt_with(params, f)?;
                write!(f, ")")
            }
            NodeKind::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_with(params, f)?;
                write!(f, ")")
            }
            NodeKind::Binary(op, a, b) => {
                write!(f, "(")?;
                a.fmt_with(params, f)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_with(params, f)?;
                write!(f, ")")
            }
            NodeKind::PowInt(a, b, _) => {
                write!(f, "(")?;
                a.fmt_with(params, f)?;
                write!(f, " ^ ")?;
                b.fmt_with(params, f)?;
                write!(f, ")")
            }
        }
    }
}

/// Parsed scalar expression together with its declared parameter list.
///
/// Derivatives are taken with respect to the declared parameters, in
/// declaration order, whether or not each one occurs in the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    params: Vec<String>,
    constant: bool,
}

/// Ordered `(name, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    entries: Vec<(String, f64)>,
}

impl Point {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, f64)>) -> Point {
        Point {
            entries: entries.into_iter().map(|(n, v)| (n.into(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

impl Expr {
    /// Parses `source` with free parameters `params` and named `constants`.
    /// `pi` is always available unless shadowed.
    pub fn parse<S: AsRef<str>>(
        source: &str,
        params: &[S],
        constants: &BTreeMap<String, f64>,
    ) -> Result<Expr, ParseError> {
        let params: Vec<String> = params.iter().map(|p| p.as_ref().to_string()).collect();
        for p in &params {
            if constants.contains_key(p) {
                return Err(ParseError::NameClash(p.clone()));
            }
        }
        let root = parse::Parser::new(source, &params, constants)?.parse_all()?;
        let constant = root.is_param_free();
        Ok(Expr {
            root,
            params,
            constant,
        })
    }

    /// A literal constant with the given parameter list.
    pub fn constant<S: AsRef<str>>(value: f64, params: &[S]) -> Expr {
        Expr {
            root: Node {
                kind: NodeKind::Num(value),
                pos: 0,
            },
            params: params.iter().map(|p| p.as_ref().to_string()).collect(),
            constant: true,
        }
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// True when no parameter occurs in the tree.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Number of distinct parameters referenced by the tree.
    pub fn free_param_count(&self) -> usize {
        self.referenced_params().iter().filter(|s| **s).count()
    }

    /// `out[i]` is true when parameter `i` occurs in the tree.
    pub fn referenced_params(&self) -> Vec<bool> {
        let mut seen = vec![false; self.params.len()];
        fn walk(n: &Node, seen: &mut [bool]) {
            match &n.kind {
                NodeKind::Param(i) => seen[*i] = true,
                NodeKind::Num(_) | NodeKind::Const { .. } => {}
                NodeKind::Neg(a) | NodeKind::Call(_, a) => walk(a, seen),
                NodeKind::Binary(_, a, b) | NodeKind::PowInt(a, b, _) => {
                    walk(a, seen);
                    walk(b, seen)
                }
            }
        }
        walk(&self.root, &mut seen);
        seen
    }

    fn check_len(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.params.len() {
            return Err(EvalError::Arity {
                expected: self.params.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Value at `x` (values aligned with [`Expr::params`]).
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.check_len(x)?;
        self.root.eval(x)
    }

    /// Value at a named point; extra names in `p` are ignored.
    pub fn eval_point(&self, p: &Point) -> Result<f64, EvalError> {
        self.eval(&self.align(p)?)
    }

    pub fn gradient_point(&self, p: &Point) -> Result<Vec<f64>, EvalError> {
        self.gradient(&self.align(p)?)
    }

    pub fn hessian_point(&self, p: &Point) -> Result<Vec<Vec<f64>>, EvalError> {
        self.hessian(&self.align(p)?)
    }

    fn align(&self, p: &Point) -> Result<Vec<f64>, EvalError> {
        self.params
            .iter()
            .map(|n| p.get(n).ok_or_else(|| EvalError::MissingParam(n.clone())))
            .collect()
    }

    /// Exact partial derivatives, one dual-number pass per parameter.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.check_len(x)?;
        let n = x.len();
        if self.constant {
            self.root.eval(x)?;
            return Ok(vec![0.0; n]);
        }
        let mut vars: Vec<Dual<f64>> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            vars[i].eps = 1.0;
            out.push(self.root.eval(&vars)?.eps);
            vars[i].eps = 0.0;
        }
        Ok(out)
    }

    /// Value and gradient together (the value is read off the first pass).
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
        let g = self.gradient(x)?;
        Ok((self.root.eval(x)?, g))
    }

    /// Exact second partials via nested dual numbers. Only the upper
    /// triangle is evaluated; the lower one is mirrored.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        self.check_len(x)?;
        let n = x.len();
        let mut h = vec![vec![0.0; n]; n];
        if self.constant {
            self.root.eval(x)?;
            return Ok(h);
        }
        let seed = |i: usize, j: usize| -> Vec<Dual<Dual<f64>>> {
            x.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let inner = if k == j { 1.0 } else { 0.0 };
                    let outer = if k == i { 1.0 } else { 0.0 };
                    Dual::new(Dual::new(v, inner), Dual::new(outer, 0.0))
                })
                .collect()
        };
        for i in 0..n {
            for j in i..n {
                let r = self.root.eval(&seed(i, j))?;
                h[i][j] = r.eps.eps;
                h[j][i] = r.eps.eps;
            }
        }
        Ok(h)
    }
}

impl fmt::Display for Expr {
    /// Canonical, fully parenthesised form; re-parsing it with the same
    /// parameters and constants reproduces the tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt_with(&self.params, f)
    }
}
