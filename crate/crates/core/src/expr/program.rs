use super::{BinaryOp, Node, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Const(f64),
    Var(usize),
    Param(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// A tree flattened to postfix order for repeated evaluation.
///
/// Results match [`Node::eval_raw`] bit for bit: both apply the same
/// operator functions in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    code: Vec<Instr>,
    depth: usize,
}

/// Reusable column buffers for [`Program::eval_batch`].
#[derive(Debug, Default, Clone)]
pub struct BatchScratch {
    stack: Vec<Vec<f64>>,
}

impl Program {
    pub fn compile(node: &Node) -> Program {
        fn emit(n: &Node, code: &mut Vec<Instr>, height: usize, depth: &mut usize) {
            *depth = (*depth).max(height + 1);
            match n {
                Node::Const(c) => code.push(Instr::Const(*c)),
                Node::Var(i) => code.push(Instr::Var(*i)),
                Node::Param(i) => code.push(Instr::Param(*i)),
                Node::Unary(op, c) => {
                    emit(c, code, height, depth);
                    code.push(Instr::Unary(*op));
                }
                Node::Binary(op, l, r) => {
                    emit(l, code, height, depth);
                    emit(r, code, height + 1, depth);
                    code.push(Instr::Binary(*op));
                }
            }
        }
        let mut code = Vec::with_capacity(node.complexity());
        let mut depth = 0;
        emit(node, &mut code, 0, &mut depth);
        Program { code, depth }
    }

    /// Scalar evaluation; `NaN` is the invalid value.
    pub fn eval(&self, point: &[f64], params: &[f64]) -> f64 {
        let mut stack = [0.0f64; 32];
        if self.depth > stack.len() {
            return self.eval_heap(point, params);
        }
        let mut sp = 0usize;
        for ins in &self.code {
            match *ins {
                Instr::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Instr::Var(i) => {
                    stack[sp] = point.get(i).copied().unwrap_or(f64::NAN);
                    sp += 1;
                }
                Instr::Param(i) => {
                    stack[sp] = params.get(i).copied().unwrap_or(f64::NAN);
                    sp += 1;
                }
                Instr::Unary(op) => {
                    let x = stack[sp - 1];
                    stack[sp - 1] = if x.is_nan() { x } else { op.apply(x) };
                }
                Instr::Binary(op) => {
                    sp -= 1;
                    let (a, b) = (stack[sp - 1], stack[sp]);
                    stack[sp - 1] = if a.is_nan() || b.is_nan() {
                        f64::NAN
                    } else {
                        op.apply(a, b)
                    };
                }
            }
        }
        stack[0]
    }

    fn eval_heap(&self, point: &[f64], params: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(self.depth);
        for ins in &self.code {
            match *ins {
                Instr::Const(c) => stack.push(c),
                Instr::Var(i) => stack.push(point.get(i).copied().unwrap_or(f64::NAN)),
                Instr::Param(i) => stack.push(params.get(i).copied().unwrap_or(f64::NAN)),
                Instr::Unary(op) => {
                    let x = stack.pop().expect("operand");
                    stack.push(if x.is_nan() { x } else { op.apply(x) });
                }
                Instr::Binary(op) => {
                    let b = stack.pop().expect("operand");
                    let a = stack.pop().expect("operand");
                    stack.push(if a.is_nan() || b.is_nan() {
                        f64::NAN
                    } else {
                        op.apply(a, b)
                    });
                }
            }
        }
        stack.pop().unwrap_or(f64::NAN)
    }

    /// Evaluates at every row of a column-major data set: `columns[v][r]`
    /// is variable `v` at row `r`. Writes one value per row into `out`.
    pub fn eval_batch(
        &self,
        columns: &[Vec<f64>],
        rows: usize,
        params: &[f64],
        scratch: &mut BatchScratch,
        out: &mut Vec<f64>,
    ) {
        let stack = &mut scratch.stack;
        if stack.len() < self.depth {
            stack.resize_with(self.depth, Vec::new);
        }
        for buf in stack.iter_mut() {
            buf.resize(rows, 0.0);
        }
        let mut sp = 0usize;
        for ins in &self.code {
            match *ins {
                Instr::Const(c) => {
                    stack[sp].fill(c);
                    sp += 1;
                }
                Instr::Var(i) => {
                    match columns.get(i) {
                        Some(col) => stack[sp].copy_from_slice(&col[..rows]),
                        None => stack[sp].fill(f64::NAN),
                    }
                    sp += 1;
                }
                Instr::Param(i) => {
                    stack[sp].fill(params.get(i).copied().unwrap_or(f64::NAN));
                    sp += 1;
                }
                Instr::Unary(op) => {
                    for x in stack[sp - 1].iter_mut() {
                        if !x.is_nan() {
                            *x = op.apply(*x);
                        }
                    }
                }
                Instr::Binary(op) => {
                    sp -= 1;
                    let (lo, hi) = stack.split_at_mut(sp);
                    let a = &mut lo[sp - 1];
                    let b = &hi[0];
                    for (x, &y) in a.iter_mut().zip(b.iter()) {
                        *x = if x.is_nan() || y.is_nan() {
                            f64::NAN
                        } else {
                            op.apply(*x, y)
                        };
                    }
                }
            }
        }
        out.clear();
        out.extend_from_slice(&stack[0][..rows]);
    }
}
