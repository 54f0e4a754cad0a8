//! Generators shared by the property and acceptance tests.
#![allow(dead_code)]

use gsfit::expr::{BinaryOp, UnaryOp};
use gsfit::Node;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const UNARY: [UnaryOp; 7] = [
    UnaryOp::Neg,
    UnaryOp::Sin,
    UnaryOp::Cos,
    UnaryOp::Exp,
    UnaryOp::Ln,
    UnaryOp::Sqrt,
    UnaryOp::Square,
];
const BINARY: [BinaryOp; 5] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Pow];

/// Random trees over `arity` variables, up to depth 6.
pub fn arb_node(arity: usize) -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0..arity).prop_map(Node::var),
        (-10.0f64..10.0).prop_map(Node::constant),
        prop::sample::select(vec![0.5, 1.0, 2.0, 3.0, 1e-5, 2.5e7]).prop_map(Node::constant),
    ];
    leaf.prop_recursive(6, 48, 2, |inner| {
        prop_oneof![
            (prop::sample::select(UNARY.to_vec()), inner.clone()).prop_map(|(op, c)| Node::unary(op, c)),
            (prop::sample::select(BINARY.to_vec()), inner.clone(), inner)
                .prop_map(|(op, l, r)| Node::binary(op, l, r)),
        ]
    })
}

/// Equal within `1e-12` relative, or both invalid.
pub fn same_value(a: f64, b: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// A random smooth univariate function of `x`.
pub fn univariate(rng: &mut impl Rng, x: Node) -> Node {
    let c = Node::constant(rng.gen_range(0.5..2.0));
    let w = Node::constant(rng.gen_range(0.3..1.5));
    match rng.gen_range(0..5) {
        0 => c * (w * x).sin(),
        1 => c * (w * x).cos(),
        2 => c * (w * x).exp(),
        3 => c * x.square(),
        _ => c * (x + Node::constant(rng.gen_range(4.0..5.0))).ln(),
    }
}

/// A function of all of `vars` with every pair interacting.
pub fn coupled(rng: &mut impl Rng, vars: &[usize]) -> Node {
    if vars.len() == 1 {
        return univariate(rng, Node::var(vars[0]));
    }
    if rng.gen_bool(0.5) {
        vars.iter()
            .map(|&v| Node::var(v) + Node::constant(rng.gen_range(4.0..5.0)))
            .reduce(|a, b| a * b)
            .unwrap()
    } else {
        let inner = vars
            .iter()
            .map(|&v| Node::constant(rng.gen_range(0.3..0.9)) * Node::var(v))
            .reduce(|a, b| a + b)
            .unwrap();
        let prod = vars.iter().map(|&v| Node::var(v)).reduce(|a, b| a * b).unwrap();
        inner.sin() + Node::constant(0.3) * prod
    }
}

/// A sum of coupled parts over a random partition of `0..n`; returns the
/// tree and the partition.
pub fn random_separable(rng: &mut impl Rng, n: usize) -> (Node, Vec<Vec<usize>>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parts: Vec<Vec<usize>> = Vec::new();
    for v in order {
        if parts.is_empty() || rng.gen_bool(0.5) {
            parts.push(vec![v]);
        } else {
            let k = rng.gen_range(0..parts.len());
            parts[k].push(v);
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    parts.sort();
    let tree = parts
        .iter()
        .map(|p| coupled(rng, p))
        .reduce(|a, b| a + b)
        .unwrap();
    (tree, parts)
}

/// All set partitions of `0..n`.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for v in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for k in 0..p.len() {
                let mut q = p.clone();
                q[k].push(v);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![v]);
            next.push(q);
        }
        out = next;
    }
    out
}
