//! Factor determination: skeleton enumeration with nonlinear parameters
//! found by LDSE and linear ones solved exactly.

mod ldse;
mod linear;
mod skeleton;

use serde::Serialize;

use crate::detect::{FactorData, FactorRole};
use crate::expr::{BatchScratch, Node, Program};
use crate::seed;

pub use ldse::{ldse_minimize, nelder_mead, Minimum};
pub use linear::{solve as solve_linear, total_sum_of_squares, LinearSolution, Workspace};
pub use skeleton::{skeleton_stream, Skeleton, Wave};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig {
    /// Agents per population; `None` means `10 + 10d`.
    pub population: Option<usize>,
    pub lower: f64,
    pub upper: f64,
    /// The optimizer stops once the objective reaches this value.
    pub target: f64,
    /// `None` means `500·d`.
    pub max_generations: Option<usize>,
    /// `None` means `50·d`.
    pub stagnation: Option<usize>,
    /// Independent optimizer runs per skeleton.
    pub restarts: usize,
    /// A skeleton is accepted once its residual sum of squares is at most
    /// this fraction of the data's total sum of squares.
    pub factor_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population: None,
            lower: -50.0,
            upper: 50.0,
            target: 1e-6,
            max_generations: None,
            stagnation: None,
            restarts: 3,
            factor_tol: 1e-12,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn population_for(&self, d: usize) -> usize {
        self.population.unwrap_or(10 + 10 * d).max(4)
    }

    pub fn generations_for(&self, d: usize) -> usize {
        self.max_generations.unwrap_or(500 * d)
    }

    pub fn stagnation_for(&self, d: usize) -> usize {
        self.stagnation.unwrap_or(50 * d).max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lower < self.upper) {
            return Err(format!("parameter bounds [{}, {}] are empty", self.lower, self.upper));
        }
        if self.population.is_some_and(|p| p < 4) {
            return Err("population must be at least 4".into());
        }
        Ok(())
    }
}

/// A fitted factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorModel {
    pub role: FactorRole,
    /// Global indices of the variables, in local order.
    pub vars: Vec<usize>,
    /// Printed template, with `v` or `v1..` for the variables.
    pub skeleton: String,
    pub complexity: usize,
    /// Template parameters in print order.
    pub params: Vec<f64>,
    /// The fitted expression over local variables.
    #[serde(skip)]
    pub expr: Node,
    /// Mean squared error on the tabulated data.
    pub train_mse: f64,
    /// Residual over total sum of squares.
    pub relative_error: f64,
    pub accepted: bool,
    pub points: usize,
    pub skeletons_tried: usize,
}

impl FactorModel {
    /// The fitted expression over the target's variables.
    pub fn global_expr(&self) -> Node {
        self.expr.map_vars(&|j| self.vars[j])
    }

    /// Mean squared error of `expr` on `data`, recomputed from scratch.
    pub fn mse_on(&self, data: &FactorData) -> f64 {
        let prog = Program::compile(&self.expr);
        let n = data.len().max(1) as f64;
        data.points
            .iter()
            .zip(&data.values)
            .map(|(p, y)| (prog.eval(p, &[]) - y).powi(2))
            .sum::<f64>()
            / n
    }
}

/// Evaluates skeleton terms on the data and solves for the linear part.
struct Problem<'a> {
    columns: Vec<Vec<f64>>,
    rows: usize,
    y: &'a [f64],
    ss_tot: f64,
    terms: Vec<Program>,
    offset: bool,
    scratch: BatchScratch,
    cols: Vec<Vec<f64>>,
    ws: Workspace,
}

impl<'a> Problem<'a> {
    fn new(columns: Vec<Vec<f64>>, y: &'a [f64], sk: &Skeleton) -> Problem<'a> {
        let ss = total_sum_of_squares(y);
        Problem {
            rows: y.len(),
            columns,
            y,
            ss_tot: if ss > 0.0 { ss } else { 1.0 },
            terms: sk.compiled_terms(),
            offset: sk.has_offset(),
            scratch: BatchScratch::default(),
            cols: vec![Vec::new(); sk.terms().len()],
            ws: Workspace::default(),
        }
    }

    fn solve(&mut self, nl: &[f64]) -> Option<LinearSolution> {
        for (prog, out) in self.terms.iter().zip(self.cols.iter_mut()) {
            prog.eval_batch(&self.columns, self.rows, nl, &mut self.scratch, out);
        }
        linear::solve(&self.cols, self.y, self.offset, &mut self.ws)
    }

    /// Relative residual; `+∞` when a term is invalid anywhere.
    fn objective(&mut self, nl: &[f64]) -> f64 {
        match self.solve(nl) {
            Some(s) if s.ss_res.is_finite() => s.ss_res / self.ss_tot,
            _ => f64::INFINITY,
        }
    }
}

/// Indices of the `keep` smallest strict local minima of `values`.
fn local_minima(values: &[f64], keep: usize) -> Vec<usize> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = values[i];
            v.is_finite()
                && (i == 0 || v <= values[i - 1])
                && (i + 1 == n || v <= values[i + 1])
        })
        .collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx.truncate(keep);
    idx
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = (((hi - lo) / step).ceil() as usize).clamp(2, 20_000);
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Starting points for the optimizer found by cheap scans.
///
/// One nonlinear parameter: a grid over the whole range, fine enough for
/// wave skeletons to resolve every period of the data. A wave whose inner
/// argument is a sum over variables: a frequency scan along each axis line
/// of the data, combined over relative signs.
fn warm_starts(sk: &Skeleton, data: &FactorData, cfg: &OptimizerConfig, problem: &mut Problem) -> Vec<Vec<f64>> {
    let (lo, hi) = (cfg.lower, cfg.upper);
    match (sk.nonlinear_count(), sk.wave()) {
        (1, wave) => {
            let points = match wave {
                Some(w) => {
                    let m = Program::compile(&w.monomials[0]);
                    let vals: Vec<f64> = data.points.iter().map(|p| m.eval(p, &[])).collect();
                    let span = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        - vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    grid(0.0, hi, std::f64::consts::PI / (4.0 * span.max(1e-9)))
                }
                None => grid(lo, hi, (hi - lo) / 400.0),
            };
            let values: Vec<f64> = points.iter().map(|&t| problem.objective(&[t])).collect();
            local_minima(&values, 5).into_iter().map(|i| vec![points[i]]).collect()
        }
        (d, Some(w)) if w.monomials.iter().all(|m| matches!(m, Node::Var(_))) => {
            let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(d);
            for (j, m) in w.monomials.iter().enumerate() {
                let Node::Var(var) = *m else { unreachable!() };
                let line = data.axis_lines.iter().find(|l| l.var == var);
                let mut freqs = vec![0.0];
                if let Some(line) = line {
                    let t: Vec<f64> = line.rows.clone().map(|r| data.points[r][var]).collect();
                    let y = &data.values[line.rows.clone()];
                    let span = t.last().copied().unwrap_or(0.0) - t.first().copied().unwrap_or(0.0);
                    if span > 0.0 && t.len() >= 4 {
                        let omegas = grid(0.0, hi, std::f64::consts::PI / (4.0 * span));
                        let mut ws = Workspace::default();
                        let scores: Vec<f64> = omegas
                            .iter()
                            .map(|&w| {
                                let s: Vec<f64> = t.iter().map(|x| (w * x).sin()).collect();
                                let c: Vec<f64> = t.iter().map(|x| (w * x).cos()).collect();
                                linear::solve(&[s, c], y, true, &mut ws).map_or(f64::INFINITY, |r| r.ss_res)
                            })
                            .collect();
                        freqs.extend(local_minima(&scores, 3).into_iter().map(|i| omegas[i]));
                    }
                }
                let _ = j;
                per_axis.push(freqs);
            }
            let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
            for (j, freqs) in per_axis.iter().enumerate() {
                let mut next = Vec::new();
                for c in &combos {
                    for &f in freqs {
                        let signs: &[f64] = if j == 0 || f == 0.0 { &[1.0] } else { &[1.0, -1.0] };
                        for s in signs {
                            let mut c2 = c.clone();
                            c2.push(s * f);
                            next.push(c2);
                        }
                    }
                }
                combos = next;
            }
            let mut scored: Vec<(f64, Vec<f64>)> =
                combos.into_iter().map(|c| (problem.objective(&c), c)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            scored.into_iter().take(cfg.population_for(d) / 2).map(|(_, c)| c).collect()
        }
        _ => Vec::new(),
    }
}

struct Candidate {
    nl: Vec<f64>,
    value: f64,
}

fn optimize(sk: &Skeleton, data: &FactorData, cfg: &OptimizerConfig, index: usize, problem: &mut Problem) -> Candidate {
    let d = sk.nonlinear_count();
    if d == 0 {
        return Candidate {
            nl: Vec::new(),
            value: problem.objective(&[]),
        };
    }
    let bounds = vec![(cfg.lower, cfg.upper); d];
    let warm = warm_starts(sk, data, cfg, problem);
    let mut best = Candidate {
        nl: Vec::new(),
        value: f64::INFINITY,
    };
    for restart in 0..cfg.restarts.max(1) {
        let run_cfg = OptimizerConfig {
            target: cfg.factor_tol,
            seed: seed::derive(cfg.seed, &[index as u64, restart as u64]),
            ..cfg.clone()
        };
        let m = ldse_minimize(|x| problem.objective(x), &bounds, &run_cfg, &warm);
        let step: Vec<f64> = m.x.iter().map(|v| 1e-3 * (1.0 + v.abs())).collect();
        let (mut x, mut v) = nelder_mead(|x| problem.objective(x), &m.x, &step, &bounds, 400 * d, 0.0);
        let step: Vec<f64> = x.iter().map(|v| 1e-6 * (1.0 + v.abs())).collect();
        let (x2, v2) = nelder_mead(|x| problem.objective(x), &x, &step, &bounds, 400 * d, 0.0);
        if v2 <= v {
            x = x2;
            v = v2;
        }
        if v < best.value || best.nl.is_empty() {
            best = Candidate { nl: x, value: v };
        }
        if best.value <= cfg.factor_tol {
            break;
        }
    }
    best
}

/// Fits the first skeleton (in stream order) whose relative residual is at
/// most `cfg.factor_tol`; if none qualifies, returns the best one found with
/// `accepted` false.
pub fn fit_factor(data: &FactorData, cfg: &OptimizerConfig, max_nodes: usize) -> FactorModel {
    let columns = data.columns();
    let mut best: Option<(f64, FactorModel)> = None;
    let stream = skeleton_stream(data.arity(), max_nodes);
    for (index, sk) in stream.iter().enumerate() {
        let mut problem = Problem::new(columns.clone(), &data.values, sk);
        let cand = optimize(sk, data, cfg, index, &mut problem);
        if !cand.value.is_finite() {
            continue;
        }
        let Some(sol) = problem.solve(&cand.nl) else { continue };
        let (expr, params) = sk.instantiate(&cand.nl, &sol.coefs, sol.offset);
        let mut model = FactorModel {
            role: data.role,
            vars: data.vars.clone(),
            skeleton: sk.text().to_string(),
            complexity: sk.complexity(),
            params,
            expr,
            train_mse: 0.0,
            relative_error: 0.0,
            accepted: false,
            points: data.len(),
            skeletons_tried: index + 1,
        };
        model.train_mse = model.mse_on(data);
        let ss = total_sum_of_squares(&data.values);
        model.relative_error = if ss > 0.0 {
            model.train_mse * data.len() as f64 / ss
        } else if model.train_mse == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if model.relative_error <= cfg.factor_tol {
            model.accepted = true;
            return model;
        }
        if best.as_ref().is_none_or(|(v, _)| model.relative_error < *v) {
            best = Some((model.relative_error, model));
        }
    }
    let mut model = best.map(|(_, m)| m).unwrap_or_else(|| FactorModel {
        role: data.role,
        vars: data.vars.clone(),
        skeleton: "θ1".into(),
        complexity: 1,
        params: vec![0.0],
        expr: Node::constant(0.0),
        train_mse: f64::INFINITY,
        relative_error: f64::INFINITY,
        accepted: false,
        points: data.len(),
        skeletons_tried: stream.len(),
    });
    model.skeletons_tried = stream.len();
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{tabulate, Slice};
    use crate::expr::Expr;
    use crate::oracle::{DomainBox, Oracle};

    fn data(text: &str, n: usize, lo: f64, hi: f64, seed: u64) -> FactorData {
        let e = Expr::parse(text, n).unwrap();
        let o = Oracle::new(e, DomainBox::cube(n, lo, hi).unwrap()).unwrap();
        let anchor = vec![0.5 * (lo + hi); n];
        let slice = Slice::psi(&o, (0..n).collect(), &anchor);
        tabulate(&o, &slice, 40, 1e-8, seed).unwrap()
    }

    #[test]
    fn exponential_slice() {
        let d = data("exp(x1)", 1, -3.0, 3.0, 1);
        let m = fit_factor(&d, &OptimizerConfig::default(), 12);
        assert!(m.accepted, "{m:?}");
        assert_eq!(m.skeleton, "θ1*exp(θ2*v)+θ3");
        assert!(m.train_mse <= 1e-6);
        assert!((m.mse_on(&d) - m.train_mse).abs() <= 1e-12);
    }

    #[test]
    fn sine_of_two_x() {
        let d = data("sin(2*x1)", 1, -3.0, 3.0, 2);
        let m = fit_factor(&d, &OptimizerConfig::default(), 12);
        assert!(m.accepted, "{m:?}");
        assert!(m.train_mse <= 1e-6);
    }

    #[test]
    fn constant_data_is_exact() {
        let d = FactorData {
            values: vec![3.0; 30],
            ..data("x1", 1, -3.0, 3.0, 3)
        };
        let m = fit_factor(&d, &OptimizerConfig::default(), 12);
        assert_eq!(m.skeleton, "θ1");
        assert!(m.accepted);
        assert_eq!(m.train_mse, 0.0);
    }

    #[test]
    fn ridge_and_product_waves() {
        let d = data("sin(3*x1-x2)", 2, -3.0, 3.0, 4);
        let m = fit_factor(&d, &OptimizerConfig::default(), 12);
        assert!(m.accepted, "{m:?}");
        let d = data("sin(x1*x2)", 2, -3.0, 3.0, 5);
        let m = fit_factor(&d, &OptimizerConfig::default(), 12);
        assert!(m.accepted, "{m:?}");
    }

    #[test]
    fn deterministic_parameters() {
        let d = data("cos(1.5*x1+5)", 1, -3.0, 3.0, 6);
        let cfg = OptimizerConfig { seed: 11, ..Default::default() };
        let a = fit_factor(&d, &cfg, 12);
        let b = fit_factor(&d, &cfg, 12);
        assert_eq!(a.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn population_follows_dimension() {
        let cfg = OptimizerConfig::default();
        assert_eq!(cfg.population_for(4), 50);
        assert_eq!(cfg.generations_for(2), 1000);
    }
}
