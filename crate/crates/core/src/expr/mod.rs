//! Expression trees over variables `x1..xn`.
//!
//! An [`Expr`] is an immutable [`Node`] tree paired with a declared arity.
//! Evaluation never panics on domain violations: `ln` of a non-positive
//! number, division by zero, `0^negative` and overflow all produce the
//! invalid value (`None` from [`Expr::eval`], `NaN` from the raw paths), and
//! invalid children make their parents invalid.
//!
//! Skeleton templates reuse the same tree with [`Node::Param`] leaves that
//! are filled in by the optimizer.

mod display;
mod parse;
mod program;

use std::ops;

use thiserror::Error;

pub use display::NodeDisplay;
pub use program::{BatchScratch, Program};

/// One-argument operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Square,
}

/// Two-argument operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 7] = [
        UnaryOp::Neg,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Exp,
        UnaryOp::Ln,
        UnaryOp::Sqrt,
        UnaryOp::Square,
    ];

    /// Applies the operator; returns `NaN` outside the operator's domain.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        let y = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Ln => {
                if x > 0.0 {
                    x.ln()
                } else {
                    f64::NAN
                }
            }
            UnaryOp::Sqrt => {
                if x >= 0.0 {
                    x.sqrt()
                } else {
                    f64::NAN
                }
            }
            UnaryOp::Square => x * x,
        };
        if y.is_finite() {
            y
        } else {
            f64::NAN
        }
    }

    /// Function-call spelling used by the grammar, if any.
    pub fn name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Ln => Some("ln"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Neg | UnaryOp::Square => None,
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let y = match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    f64::NAN
                } else {
                    a / b
                }
            }
            BinaryOp::Pow => {
                if a == 0.0 && b < 0.0 {
                    f64::NAN
                } else {
                    a.powf(b)
                }
            }
        };
        if y.is_finite() {
            y
        } else {
            f64::NAN
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// A node of an expression tree. Variable and parameter indices are
/// zero-based; `Var(0)` prints as `x1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Param(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn var(index: usize) -> Node {
        Node::Var(index)
    }

    pub fn param(index: usize) -> Node {
        Node::Param(index)
    }

    pub fn constant(value: f64) -> Node {
        Node::Const(value)
    }

    pub fn unary(op: UnaryOp, child: Node) -> Node {
        Node::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn sin(self) -> Node {
        Node::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Node {
        Node::unary(UnaryOp::Cos, self)
    }

    pub fn exp(self) -> Node {
        Node::unary(UnaryOp::Exp, self)
    }

    pub fn ln(self) -> Node {
        Node::unary(UnaryOp::Ln, self)
    }

    pub fn sqrt(self) -> Node {
        Node::unary(UnaryOp::Sqrt, self)
    }

    pub fn square(self) -> Node {
        Node::unary(UnaryOp::Square, self)
    }

    pub fn pow(self, exponent: Node) -> Node {
        Node::binary(BinaryOp::Pow, self, exponent)
    }

    pub fn powi(self, exponent: i32) -> Node {
        self.pow(Node::Const(f64::from(exponent)))
    }

    /// Total node count; every leaf counts one.
    pub fn complexity(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) | Node::Param(_) => 1,
            Node::Unary(_, c) => 1 + c.complexity(),
            Node::Binary(_, l, r) => 1 + l.complexity() + r.complexity(),
        }
    }

    /// Evaluates with `NaN` standing for the invalid value. Missing
    /// variables or parameters evaluate to `NaN`.
    pub fn eval_raw(&self, point: &[f64], params: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => point.get(*i).copied().unwrap_or(f64::NAN),
            Node::Param(i) => params.get(*i).copied().unwrap_or(f64::NAN),
            Node::Unary(op, c) => {
                let x = c.eval_raw(point, params);
                if x.is_nan() {
                    x
                } else {
                    op.apply(x)
                }
            }
            Node::Binary(op, l, r) => {
                let a = l.eval_raw(point, params);
                if a.is_nan() {
                    return a;
                }
                let b = r.eval_raw(point, params);
                if b.is_nan() {
                    return b;
                }
                op.apply(a, b)
            }
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Node::Var(i) => Some(*i),
            Node::Const(_) | Node::Param(_) => None,
            Node::Unary(_, c) => c.max_var(),
            Node::Binary(_, l, r) => l.max_var().max(r.max_var()),
        }
    }

    /// Number of parameter slots referenced (one past the largest index).
    pub fn param_count(&self) -> usize {
        match self {
            Node::Param(i) => i + 1,
            Node::Const(_) | Node::Var(_) => 0,
            Node::Unary(_, c) => c.param_count(),
            Node::Binary(_, l, r) => l.param_count().max(r.param_count()),
        }
    }

    /// Sorted, deduplicated variable indices referenced by the tree.
    pub fn variables(&self) -> Vec<usize> {
        fn walk(n: &Node, out: &mut Vec<usize>) {
            match n {
                Node::Var(i) => out.push(*i),
                Node::Const(_) | Node::Param(_) => {}
                Node::Unary(_, c) => walk(c, out),
                Node::Binary(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Replaces every `Param(i)` with `Const(values[i])`.
    pub fn substitute_params(&self, values: &[f64]) -> Node {
        match self {
            Node::Param(i) => Node::Const(values.get(*i).copied().unwrap_or(f64::NAN)),
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Unary(op, c) => Node::unary(*op, c.substitute_params(values)),
            Node::Binary(op, l, r) => {
                Node::binary(*op, l.substitute_params(values), r.substitute_params(values))
            }
        }
    }

    /// Renames variables through `map` (`Var(i)` becomes `Var(map(i))`).
    pub fn map_vars(&self, map: &impl Fn(usize) -> usize) -> Node {
        match self {
            Node::Var(i) => Node::Var(map(*i)),
            Node::Const(_) | Node::Param(_) => self.clone(),
            Node::Unary(op, c) => Node::unary(*op, c.map_vars(map)),
            Node::Binary(op, l, r) => Node::binary(*op, l.map_vars(map), r.map_vars(map)),
        }
    }

    /// Prints with caller-chosen variable and parameter names.
    pub fn display_with<'a>(
        &'a self,
        var_name: &'a dyn Fn(usize) -> String,
        param_name: &'a dyn Fn(usize) -> String,
    ) -> NodeDisplay<'a> {
        NodeDisplay::new(self, var_name, param_name)
    }
}

macro_rules! node_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Node {
            type Output = Node;
            fn $method(self, rhs: Node) -> Node {
                Node::binary($op, self, rhs)
            }
        }
    };
}

node_binop!(Add, add, BinaryOp::Add);
node_binop!(Sub, sub, BinaryOp::Sub);
node_binop!(Mul, mul, BinaryOp::Mul);
node_binop!(Div, div, BinaryOp::Div);

impl ops::Neg for Node {
    type Output = Node;
    fn neg(self) -> Node {
        Node::unary(UnaryOp::Neg, self)
    }
}

/// Errors from parsing and evaluating expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("variable x{index} at offset {offset} exceeds arity {arity}")]
    VariableOutOfRange {
        index: usize,
        arity: usize,
        offset: usize,
    },
    #[error("point has {got} coordinates, expression arity is {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("arity must be at least 1")]
    ZeroArity,
}

impl ExprError {
    /// Byte offset of a parse failure.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ExprError::Syntax { offset, .. } | ExprError::VariableOutOfRange { offset, .. } => {
                Some(*offset)
            }
            _ => None,
        }
    }
}

/// An expression tree with a declared number of input variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    arity: usize,
}

impl Expr {
    /// Wraps a tree, checking that every variable index is below `arity`.
    pub fn new(root: Node, arity: usize) -> Result<Expr, ExprError> {
        if arity == 0 {
            return Err(ExprError::ZeroArity);
        }
        if let Some(max) = root.max_var() {
            if max >= arity {
                return Err(ExprError::VariableOutOfRange {
                    index: max + 1,
                    arity,
                    offset: 0,
                });
            }
        }
        Ok(Expr { root, arity })
    }

    /// Parses `text` against the arithmetic grammar (see the crate README).
    pub fn parse(text: &str, arity: usize) -> Result<Expr, ExprError> {
        parse::parse(text, arity)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn complexity(&self) -> usize {
        self.root.complexity()
    }

    /// Evaluates at `point`; `Ok(None)` marks the invalid value.
    pub fn eval(&self, point: &[f64]) -> Result<Option<f64>, ExprError> {
        if point.len() != self.arity {
            return Err(ExprError::ArityMismatch {
                expected: self.arity,
                got: point.len(),
            });
        }
        let y = self.root.eval_raw(point, &[]);
        Ok(if y.is_nan() { None } else { Some(y) })
    }

    /// Unchecked evaluation; `NaN` is the invalid value.
    #[inline]
    pub fn eval_raw(&self, point: &[f64]) -> f64 {
        self.root.eval_raw(point, &[])
    }

    /// `scale * self + shift`, as a new tree.
    pub fn affine(&self, scale: f64, shift: f64) -> Expr {
        Expr {
            root: Node::Const(scale) * self.root.clone() + Node::Const(shift),
            arity: self.arity,
        }
    }

    /// Renames variables through a permutation: `x_i` becomes `x_{perm[i]}`.
    pub fn permute_vars(&self, perm: &[usize]) -> Expr {
        Expr {
            root: self.root.map_vars(&|i| perm[i]),
            arity: self.arity,
        }
    }

    pub fn compile(&self) -> Program {
        Program::compile(&self.root)
    }
}

/// Prints variables as `x1..` and parameters as `θ1..`.
impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let vars = |i: usize| format!("x{}", i + 1);
        let params = |i: usize| format!("θ{}", i + 1);
        write!(f, "{}", self.display_with(&vars, &params))
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    /// Parses with the arity inferred from the largest variable index.
    fn from_str(s: &str) -> Result<Expr, ExprError> {
        let probe = parse::parse(s, usize::MAX)?;
        let arity = probe.root.max_var().map_or(1, |m| m + 1);
        Ok(Expr {
            root: probe.root,
            arity,
        })
    }
}
