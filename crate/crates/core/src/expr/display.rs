use std::fmt;

use super::{BinaryOp, Node, UnaryOp};

// Binding strength of the printed form. Children print with parentheses
// whenever their level is below what the parent position requires, so the
// printed text re-parses to the same tree shape.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const POWER: u8 = 3;
const PREFIX: u8 = 4;
const ATOM: u8 = 5;

fn level(node: &Node) -> u8 {
    match node {
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => SUM,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PRODUCT,
        Node::Binary(BinaryOp::Pow, ..) | Node::Unary(UnaryOp::Square, _) => POWER,
        Node::Unary(UnaryOp::Neg, _) => PREFIX,
        Node::Const(c) if c.is_sign_negative() => PREFIX,
        _ => ATOM,
    }
}

/// Writes a constant so that parsing the text yields the same `f64`.
fn write_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    let a = c.abs();
    if c.is_sign_negative() {
        f.write_str("-")?;
    }
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        write!(f, "{a}")
    } else {
        write!(f, "{a:e}")
    }
}

/// Printer returned by [`Node::display_with`].
pub struct NodeDisplay<'a> {
    node: &'a Node,
    var_name: &'a dyn Fn(usize) -> String,
    param_name: &'a dyn Fn(usize) -> String,
}

impl<'a> NodeDisplay<'a> {
    pub(super) fn new(
        node: &'a Node,
        var_name: &'a dyn Fn(usize) -> String,
        param_name: &'a dyn Fn(usize) -> String,
    ) -> Self {
        NodeDisplay {
            node,
            var_name,
            param_name,
        }
    }

    fn child(&self, f: &mut fmt::Formatter<'_>, node: &Node, min: u8) -> fmt::Result {
        let sub = NodeDisplay::new(node, self.var_name, self.param_name);
        if level(node) < min {
            write!(f, "({sub})")
        } else {
            write!(f, "{sub}")
        }
    }
}

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Node::Const(c) => write_number(f, *c),
            Node::Var(i) => f.write_str(&(self.var_name)(*i)),
            Node::Param(i) => f.write_str(&(self.param_name)(*i)),
            Node::Unary(UnaryOp::Neg, c) => {
                f.write_str("-")?;
                self.child(f, c, PREFIX)
            }
            Node::Unary(UnaryOp::Square, c) => {
                self.child(f, c, PREFIX)?;
                f.write_str("^2")
            }
            Node::Unary(op, c) => {
                let name = op.name().expect("named function");
                write!(f, "{name}(")?;
                self.child(f, c, 0)?;
                f.write_str(")")
            }
            Node::Binary(op, l, r) => {
                let (lmin, rmin) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (SUM, PRODUCT),
                    BinaryOp::Mul | BinaryOp::Div => (PRODUCT, POWER),
                    BinaryOp::Pow => (PREFIX, PREFIX),
                };
                self.child(f, l, lmin)?;
                write!(f, "{}", op.symbol())?;
                self.child(f, r, rmin)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{Expr, Node};

    fn show(text: &str) -> String {
        Expr::parse(text, 3).unwrap().to_string()
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(show("0.5*exp(x1)*sin(2*x2)"), "0.5*exp(x1)*sin(2*x2)");
        assert_eq!(show("(x1+x2)/x3"), "(x1+x2)/x3");
        assert_eq!(show("x1-(x2-x3)"), "x1-(x2-x3)");
        assert_eq!(show("x1-x2-x3"), "x1-x2-x3");
        assert_eq!(show("x1/(x2*x3)"), "x1/(x2*x3)");
        assert_eq!(show("(-x1)^2"), "-x1^2");
        assert_eq!(show("-(x1^2)"), "-(x1^2)");
        assert_eq!(show("(x1^2)^x2"), "(x1^2)^x2");
    }

    #[test]
    fn constants_round_trip_exactly() {
        for c in [0.1, 1.0 / 3.0, 1e-7, 6.02e23, 123456.789, 5e-324, -2.5] {
            let text = Expr::new(Node::Const(c), 1).unwrap().to_string();
            let back = Expr::parse(&text, 1).unwrap().eval_raw(&[0.0]);
            assert_eq!(back.to_bits(), c.to_bits(), "{text}");
        }
    }

    #[test]
    fn square_prints_as_power() {
        let e = Expr::new(Node::var(0).square() + Node::Const(1.0), 1).unwrap();
        assert_eq!(e.to_string(), "x1^2+1");
    }
}
