//! Skeleton catalog: parametrized model templates for one to three
//! variables, enumerated by complexity.

use std::collections::HashMap;

use crate::expr::{BinaryOp, Node, Program};

// Parameter ids used while building templates; renumbered in print order.
const LIN: usize = 1000;
const OFFSET: usize = 2000;

/// A model template `Σ θ·g_j(v; φ) + θ₀`.
///
/// The `terms` are the basis functions seen by the linear solver, with
/// nonlinear parameters `Param(0..nonlinear)`. For a wave skeleton the two
/// terms are the sine and cosine of the same inner argument and display as
/// one phase-shifted sine.
#[derive(Debug, Clone)]
pub struct Skeleton {
    var_count: usize,
    terms: Vec<Node>,
    display: Vec<Node>,
    offset: bool,
    nonlinear: usize,
    wave: Option<Wave>,
    complexity: usize,
    template: Node,
    text: String,
}

/// Inner argument of a wave skeleton, `Σ φ_j·m_j(v)`.
#[derive(Debug, Clone)]
pub struct Wave {
    pub monomials: Vec<Node>,
}

impl Skeleton {
    fn new(
        var_count: usize,
        terms: Vec<Node>,
        display: Vec<Node>,
        offset: bool,
        nonlinear: usize,
        wave: Option<Wave>,
    ) -> Skeleton {
        let core = match display.len() {
            0 => Node::param(OFFSET),
            _ => display
                .iter()
                .cloned()
                .reduce(|a, b| a + b)
                .expect("nonempty display"),
        };
        let complexity = core.complexity();
        let symbolic = build(
            &display,
            offset,
            Node::param,
            |j| Node::param(LIN + j),
            Node::param(OFFSET),
        );
        let (template, _) = renumber(&symbolic);
        let name = |i: usize| {
            if var_count == 1 {
                "v".to_string()
            } else {
                format!("v{}", i + 1)
            }
        };
        let theta = |i: usize| format!("θ{}", i + 1);
        let text = template.display_with(&name, &theta).to_string();
        Skeleton {
            var_count,
            terms,
            display,
            offset,
            nonlinear,
            wave,
            complexity,
            template,
            text,
        }
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    /// Node count of the template without its outer scale and shift.
    pub fn complexity(&self) -> usize {
        self.complexity
    }

    /// Total number of placeholders θ in the template.
    pub fn param_count(&self) -> usize {
        self.template.param_count()
    }

    /// Parameters searched by the optimizer; the rest are solved linearly.
    pub fn nonlinear_count(&self) -> usize {
        self.nonlinear
    }

    pub fn has_offset(&self) -> bool {
        self.offset
    }

    pub fn terms(&self) -> &[Node] {
        &self.terms
    }

    pub fn compiled_terms(&self) -> Vec<Program> {
        self.terms.iter().map(Program::compile).collect()
    }

    pub fn wave(&self) -> Option<&Wave> {
        self.wave.as_ref()
    }

    /// The template with placeholders `Param(0..param_count)` in print order.
    pub fn template(&self) -> &Node {
        &self.template
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Builds the fitted expression and the template parameter vector from
    /// nonlinear parameters and linear coefficients.
    pub fn instantiate(&self, nonlinear: &[f64], coefs: &[f64], offset: f64) -> (Node, Vec<f64>) {
        let mut nl = nonlinear.to_vec();
        let mut lin = coefs.to_vec();
        if self.wave.is_some() {
            // c_s·sin(u) + c_c·cos(u) = A·sin(u + φ)
            let (cs, cc) = (coefs[0], coefs[1]);
            nl.push(cc.atan2(cs));
            lin = vec![cs.hypot(cc)];
        }
        let expr = build(
            &self.display,
            self.offset,
            |i| Node::constant(nl[i]),
            |j| Node::constant(lin[j]),
            Node::constant(offset),
        );
        let symbolic = build(
            &self.display,
            self.offset,
            Node::param,
            |j| Node::param(LIN + j),
            Node::param(OFFSET),
        );
        let (_, order) = renumber(&symbolic);
        let params = order
            .iter()
            .map(|&id| match id {
                OFFSET => offset,
                id if id >= LIN => lin[id - LIN],
                id => nl[id],
            })
            .collect();
        (expr, params)
    }
}

/// `coef·core`, with the coefficient folded into the leftmost factor so
/// that products and quotients print without extra parentheses.
fn scaled(coef: Node, core: &Node) -> Node {
    match core {
        Node::Binary(op @ (BinaryOp::Mul | BinaryOp::Div), l, r) => {
            Node::binary(*op, scaled(coef, l), (**r).clone())
        }
        Node::Const(c) if *c == 1.0 => coef,
        _ => coef * core.clone(),
    }
}

fn build(
    display: &[Node],
    offset: bool,
    nl: impl Fn(usize) -> Node,
    lin: impl Fn(usize) -> Node,
    off: Node,
) -> Node {
    let mut sum: Option<Node> = None;
    for (j, core) in display.iter().enumerate() {
        let t = scaled(lin(j), &replace_params(core, &nl));
        sum = Some(match sum {
            None => t,
            Some(s) => s + t,
        });
    }
    match (sum, offset) {
        (None, _) => off,
        (Some(s), true) => s + off,
        (Some(s), false) => s,
    }
}

fn replace_params(node: &Node, f: &impl Fn(usize) -> Node) -> Node {
    match node {
        Node::Param(i) => f(*i),
        Node::Unary(op, c) => Node::unary(*op, replace_params(c, f)),
        Node::Binary(op, l, r) => Node::binary(*op, replace_params(l, f), replace_params(r, f)),
        other => other.clone(),
    }
}

/// Renames parameters to `0, 1, ...` in first-appearance (print) order.
fn renumber(node: &Node) -> (Node, Vec<usize>) {
    fn walk(n: &Node, map: &mut HashMap<usize, usize>, order: &mut Vec<usize>) -> Node {
        match n {
            Node::Param(id) => {
                let next = map.len();
                let k = *map.entry(*id).or_insert_with(|| {
                    order.push(*id);
                    next
                });
                Node::param(k)
            }
            Node::Unary(op, c) => Node::unary(*op, walk(c, map, order)),
            Node::Binary(op, l, r) => {
                let l = walk(l, map, order);
                let r = walk(r, map, order);
                Node::binary(*op, l, r)
            }
            other => other.clone(),
        }
    }
    let mut map = HashMap::new();
    let mut order = Vec::new();
    let out = walk(node, &mut map, &mut order);
    (out, order)
}

fn plain(var_count: usize, display: Vec<Node>, offset: bool, nonlinear: usize) -> Skeleton {
    Skeleton::new(var_count, display.clone(), display, offset, nonlinear, None)
}

/// `A·pre·sin(inner + φ)`, fitted as `pre·sin(inner)` and `pre·cos(inner)`.
fn wave(var_count: usize, monomials: Vec<Node>, pre: impl Fn(Node) -> Node) -> Skeleton {
    let nl = monomials.len();
    let inner = monomials
        .iter()
        .enumerate()
        .map(|(j, m)| scaled(Node::param(j), m))
        .reduce(|a, b| a + b)
        .expect("at least one monomial");
    let terms = vec![pre(inner.clone().sin()), pre(inner.clone().cos())];
    let display = vec![pre((inner + Node::param(nl)).sin())];
    Skeleton::new(var_count, terms, display, true, nl, Some(Wave { monomials }))
}

fn one() -> Node {
    Node::constant(1.0)
}

fn univariate() -> Vec<Skeleton> {
    let v = || Node::var(0);
    let t = || Node::param(0);
    vec![
        plain(1, vec![], true, 0),
        plain(1, vec![v()], true, 0),
        plain(1, vec![v().square()], false, 0),
        plain(1, vec![v().square()], true, 0),
        plain(1, vec![one() / v()], true, 0),
        plain(1, vec![v().powi(3)], true, 0),
        plain(1, vec![one() / v().square()], true, 0),
        plain(1, vec![v().square(), v()], true, 0),
        plain(1, vec![(t() * v()).exp()], true, 1),
        plain(1, vec![(v() + t()).ln()], true, 1),
        plain(1, vec![(t() - v()).ln()], true, 1),
        plain(1, vec![(v() + t()).sqrt()], true, 1),
        plain(1, vec![one() / (v() + t())], true, 1),
        plain(1, vec![(t() * v().square()).exp()], true, 1),
        plain(1, vec![v() * (t() * v()).exp()], true, 1),
        wave(1, vec![v()], |s| s),
        wave(1, vec![v()], |s| v() * s),
        wave(1, vec![v()], |s| s / v()),
    ]
}

fn bivariate() -> Vec<Skeleton> {
    let a = || Node::var(0);
    let b = || Node::var(1);
    let t = || Node::param(0);
    vec![
        plain(2, vec![a(), b()], true, 0),
        plain(2, vec![a() * b()], true, 0),
        plain(2, vec![a() / b()], true, 0),
        plain(2, vec![b() / a()], true, 0),
        plain(2, vec![a().square(), b()], true, 0),
        plain(2, vec![a(), b().square()], true, 0),
        plain(2, vec![a().square() * b()], true, 0),
        plain(2, vec![a() * b().square()], true, 0),
        plain(2, vec![a().square(), b().square()], true, 0),
        plain(2, vec![a().ln(), b().ln()], true, 0),
        plain(2, vec![b(), a().square() / b()], true, 0),
        plain(2, vec![a(), b().square() / a()], true, 0),
        plain(2, vec![a() * b(), a(), b()], true, 0),
        plain(2, vec![(t() * a() * b()).exp()], true, 1),
        wave(2, vec![a() * b()], |s| s),
        wave(2, vec![a(), b()], |s| s),
    ]
}

fn trivariate() -> Vec<Skeleton> {
    let a = || Node::var(0);
    let b = || Node::var(1);
    let c = || Node::var(2);
    let t = || Node::param(0);
    vec![
        plain(3, vec![a(), b(), c()], true, 0),
        plain(3, vec![a() * b() * c()], true, 0),
        plain(3, vec![a() * b(), c()], true, 0),
        plain(3, vec![a() * c(), b()], true, 0),
        plain(3, vec![b() * c(), a()], true, 0),
        plain(3, vec![a() / c(), b() / c()], true, 0),
        plain(3, vec![a() / b(), c() / b()], true, 0),
        plain(3, vec![b() / a(), c() / a()], true, 0),
        plain(3, vec![(a() * b()) / c()], true, 0),
        plain(3, vec![(a() * c()) / b()], true, 0),
        plain(3, vec![(b() * c()) / a()], true, 0),
        plain(3, vec![(t() * a() * b() * c()).exp()], true, 1),
        wave(3, vec![a() * b() * c()], |s| s),
        wave(3, vec![a(), b(), c()], |s| s),
    ]
}

/// Skeletons over `var_count` variables (1 to 3) with complexity at most
/// `max_nodes`, ordered by complexity and then by printed template.
///
/// Sine and cosine span the same wave family once a phase is free, so only
/// the sine form is listed.
pub fn skeleton_stream(var_count: usize, max_nodes: usize) -> Vec<Skeleton> {
    let mut all = match var_count {
        1 => univariate(),
        2 => bivariate(),
        3 => trivariate(),
        _ => Vec::new(),
    };
    all.retain(|s| s.complexity <= max_nodes);
    all.sort_by(|x, y| x.complexity.cmp(&y.complexity).then_with(|| x.text.cmp(&y.text)));
    all
}
