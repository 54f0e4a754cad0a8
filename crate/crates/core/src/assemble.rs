//! Global assembly: per-block subset products of fitted factors, combined by
//! linear least squares and checked on an independent sample set.

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::detect::GsStructure;
use crate::expr::{Node, Program};
use crate::fit::FactorModel;
use crate::oracle::{Oracle, SampleSet};
use crate::seed;

/// Largest factor count per block before the subset basis is refused.
pub const MAX_BLOCK_FACTORS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssembleError {
    #[error("basis explosion: block {block} has {factors} factors (limit {MAX_BLOCK_FACTORS})")]
    BasisExplosion { block: usize, factors: usize },
    #[error("block {block} expects {expected} fitted factors, got {got}")]
    MissingFactors {
        block: usize,
        expected: usize,
        got: usize,
    },
    #[error("{dropped} of {total} training points are invalid for the basis")]
    TooManyDropped { dropped: usize, total: usize },
    #[error("{rows} valid training points for {columns} unknowns")]
    TooFewSamples { rows: usize, columns: usize },
}

/// One product of fitted factors from a single block.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTerm {
    pub block: usize,
    /// Positions in the block's factor list (repeated-side factors first).
    pub factor_subset: Vec<usize>,
    pub expr: Node,
}

/// Settings for the final least-squares stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssembleConfig {
    /// Training and validation sets each hold this many points per variable.
    pub samples_per_var: usize,
    /// Validation MSE at or below this counts as success.
    pub target: f64,
    /// Extra attempts after a failed validation.
    pub retries: usize,
    /// Largest tolerated fraction of invalid training points.
    pub max_dropped: f64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            samples_per_var: 200,
            target: 1e-6,
            retries: 3,
            max_dropped: 0.2,
        }
    }
}

/// Solution of the global linear problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub c0: f64,
    pub coeffs: Vec<f64>,
    pub train_mse: f64,
    pub rank: usize,
    /// True when some basis columns were numerically dependent.
    pub deficient: bool,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledModel {
    pub arity: usize,
    pub c0: f64,
    pub terms: Vec<BasisTerm>,
    pub coeffs: Vec<f64>,
    /// `c0 + Σ coeffs[t]·terms[t]` as a single tree.
    pub expr: Node,
    pub train_mse: f64,
    pub val_mse: f64,
    pub success: bool,
    pub deficient: bool,
    pub dropped: usize,
    pub train_size: usize,
    pub val_size: usize,
    /// Attempts used, counting the first.
    pub attempts: usize,
}

struct TermJson<'a>(&'a BasisTerm, f64);

impl Serialize for TermJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        m.serialize_entry("block", &(self.0.block + 1))?;
        let subset: Vec<usize> = self.0.factor_subset.iter().map(|i| i + 1).collect();
        m.serialize_entry("factor_subset", &subset)?;
        m.serialize_entry("expr", &self.0.expr.to_string())?;
        m.serialize_entry("coeff", &self.1)?;
        m.end()
    }
}

impl Serialize for AssembledModel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let terms: Vec<TermJson> = self
            .terms
            .iter()
            .zip(&self.coeffs)
            .map(|(t, &c)| TermJson(t, c))
            .collect();
        let mut st = s.serialize_struct("AssembledModel", 11)?;
        st.serialize_field("c0", &self.c0)?;
        st.serialize_field("terms", &terms)?;
        st.serialize_field("expr", &self.expr.to_string())?;
        st.serialize_field("train_mse", &self.train_mse)?;
        st.serialize_field("val_mse", &self.val_mse)?;
        st.serialize_field("success", &self.success)?;
        st.serialize_field("deficient", &self.deficient)?;
        st.serialize_field("dropped", &self.dropped)?;
        st.serialize_field("train_size", &self.train_size)?;
        st.serialize_field("val_size", &self.val_size)?;
        st.serialize_field("attempts", &self.attempts)?;
        st.end()
    }
}

impl AssembledModel {
    /// Evaluates term by term, in the same order as `expr`.
    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut y = self.c0;
        for (t, c) in self.terms.iter().zip(&self.coeffs) {
            y += c * t.expr.eval_raw(point, &[]);
        }
        y
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }
}

/// Nonempty subsets of `0..k`, smaller first, then lexicographic.
fn subsets(k: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (1u32..1 << k)
        .map(|mask| (0..k).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all
}

/// Every nonempty product of each block's fitted factors.
///
/// `factors[i]` lists block `i`'s models, repeated-side factors first.
pub fn build_basis(s: &GsStructure, factors: &[Vec<FactorModel>]) -> Result<Vec<BasisTerm>, AssembleError> {
    let mut terms = Vec::new();
    for (i, block) in s.blocks.iter().enumerate() {
        let expected = block.factor_count();
        let models = factors.get(i).map_or(&[][..], Vec::as_slice);
        if models.len() != expected {
            return Err(AssembleError::MissingFactors {
                block: i,
                expected,
                got: models.len(),
            });
        }
        if expected > MAX_BLOCK_FACTORS {
            return Err(AssembleError::BasisExplosion {
                block: i,
                factors: expected,
            });
        }
        let exprs: Vec<Node> = models.iter().map(FactorModel::global_expr).collect();
        for subset in subsets(expected) {
            let expr = subset
                .iter()
                .map(|&j| exprs[j].clone())
                .reduce(|a, b| a * b)
                .expect("nonempty subset");
            terms.push(BasisTerm {
                block: i,
                factor_subset: subset,
                expr,
            });
        }
    }
    Ok(terms)
}

fn term_columns(basis: &[BasisTerm], points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    basis
        .iter()
        .map(|t| {
            let p = Program::compile(&t.expr);
            points.iter().map(|x| p.eval(x, &[])).collect()
        })
        .collect()
}

/// Fits `c0 + Σ c_t·term_t` to the training set.
///
/// Rows where the target or any term is not finite are dropped. Columns
/// are scaled to unit norm and the system is solved by SVD with the usual
/// rank cutoff, giving the minimum-norm solution (in scaled coordinates)
/// when columns are dependent; one step of iterative refinement follows.
pub fn least_squares(basis: &[BasisTerm], train: &SampleSet, max_dropped: f64) -> Result<LeastSquaresFit, AssembleError> {
    let cols = term_columns(basis, &train.points);
    let total = train.len();
    let keep: Vec<usize> = (0..total)
        .filter(|&r| train.values[r].is_finite() && cols.iter().all(|c| c[r].is_finite()))
        .collect();
    let dropped = total - keep.len();
    if dropped as f64 > max_dropped * total as f64 {
        return Err(AssembleError::TooManyDropped { dropped, total });
    }
    let k = basis.len() + 1;
    let rows = keep.len();
    if rows < 2 * k {
        return Err(AssembleError::TooFewSamples { rows, columns: k });
    }

    let raw = DMatrix::from_fn(rows, k, |r, c| if c == 0 { 1.0 } else { cols[c - 1][keep[r]] });
    let scale: Vec<f64> = (0..k)
        .map(|c| {
            let n = raw.column(c).norm();
            if n > 0.0 { n } else { 1.0 }
        })
        .collect();
    let mut a = raw.clone();
    for (c, s) in scale.iter().enumerate() {
        a.column_mut(c).unscale_mut(*s);
    }
    let b = DVector::from_iterator(rows, keep.iter().map(|&r| train.values[r]));

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * f64::EPSILON * rows.max(k) as f64;
    let rank = svd.rank(cutoff);
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        svd.solve(rhs, cutoff).unwrap_or_else(|_| DVector::zeros(k))
    };
    let mut z = solve(&b);
    let r = &b - &a * &z;
    z += solve(&r);

    let x: Vec<f64> = z.iter().zip(&scale).map(|(zi, s)| zi / s).collect();
    let mut ss = 0.0;
    for (ri, &row) in keep.iter().enumerate() {
        let mut pred = x[0];
        for t in 0..basis.len() {
            pred += x[t + 1] * raw[(ri, t + 1)];
        }
        let e = train.values[row] - pred;
        ss += e * e;
    }
    Ok(LeastSquaresFit {
        c0: x[0],
        coeffs: x[1..].to_vec(),
        train_mse: ss / rows as f64,
        rank,
        deficient: rank < k,
        dropped,
    })
}

/// `c0 ± |c_t|·term_t ...` as one tree.
fn compose(c0: f64, basis: &[BasisTerm], coeffs: &[f64]) -> Node {
    let mut e = Node::constant(c0);
    for (t, &c) in basis.iter().zip(coeffs) {
        if c.is_sign_negative() {
            e = e - Node::constant(-c) * t.expr.clone();
        } else {
            e = e + Node::constant(c) * t.expr.clone();
        }
    }
    e
}

/// Mean squared error over rows where both sides are finite; `+∞` when more
/// than `max_dropped` of the rows are unusable.
pub fn validation_mse(model: &AssembledModel, val: &SampleSet, max_dropped: f64) -> f64 {
    let prog = Program::compile(&model.expr);
    let mut ss = 0.0;
    let mut used = 0usize;
    for (p, y) in val.points.iter().zip(&val.values) {
        let m = prog.eval(p, &[]);
        if y.is_finite() && m.is_finite() {
            ss += (m - y) * (m - y);
            used += 1;
        }
    }
    let dropped = val.len() - used;
    if used == 0 || dropped as f64 > max_dropped * val.len() as f64 {
        return f64::INFINITY;
    }
    ss / used as f64
}

/// One train/validate round on fresh sample sets drawn from `seed`.
pub fn assemble_once(
    s: &GsStructure,
    factors: &[Vec<FactorModel>],
    oracle: &Oracle,
    cfg: &AssembleConfig,
    seed: u64,
) -> Result<AssembledModel, AssembleError> {
    let basis = build_basis(s, factors)?;
    let size = cfg.samples_per_var * oracle.arity();
    let train = oracle.sample_uniform(size, seed::derive(seed, &[0x7EA1]));
    let val = oracle.sample_uniform(size, seed::derive(seed, &[0x5A11]));
    let fit = least_squares(&basis, &train, cfg.max_dropped)?;
    let expr = compose(fit.c0, &basis, &fit.coeffs);
    let mut model = AssembledModel {
        arity: oracle.arity(),
        c0: fit.c0,
        terms: basis,
        coeffs: fit.coeffs,
        expr,
        train_mse: fit.train_mse,
        val_mse: f64::INFINITY,
        success: false,
        deficient: fit.deficient,
        dropped: fit.dropped,
        train_size: train.len(),
        val_size: val.len(),
        attempts: 1,
    };
    model.val_mse = validation_mse(&model, &val, cfg.max_dropped);
    model.success = model.val_mse <= cfg.target;
    Ok(model)
}

/// Assembles, validates, and on failure retries up to `cfg.retries` times
/// with new sample seeds. Before each retry `refit(attempt)` may supply new
/// factor models; `None` keeps the current ones. Returns the model with the
/// lowest validation MSE.
pub fn assemble_and_validate<F>(
    s: &GsStructure,
    factors: Vec<Vec<FactorModel>>,
    oracle: &Oracle,
    cfg: &AssembleConfig,
    seed: u64,
    mut refit: F,
) -> Result<(AssembledModel, Vec<Vec<FactorModel>>), AssembleError>
where
    F: FnMut(usize) -> Option<Vec<Vec<FactorModel>>>,
{
    let mut current = factors;
    let mut best: Option<(AssembledModel, Vec<Vec<FactorModel>>)> = None;
    let mut last_err = None;
    for attempt in 0..=cfg.retries {
        if attempt > 0 {
            if let Some(f) = refit(attempt) {
                current = f;
            }
        }
        match assemble_once(s, &current, oracle, cfg, seed::derive(seed, &[0xA55E, attempt as u64])) {
            Ok(mut m) => {
                m.attempts = attempt + 1;
                let better = best
                    .as_ref()
                    .is_none_or(|(b, _)| m.val_mse < b.val_mse || b.val_mse.is_nan());
                let done = m.success;
                if better {
                    best = Some((m, current.clone()));
                } else if let Some((b, _)) = best.as_mut() {
                    b.attempts = attempt + 1;
                }
                if done {
                    break;
                }
            }
            Err(e @ (AssembleError::BasisExplosion { .. } | AssembleError::MissingFactors { .. })) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{Block, FactorRole};
    use crate::expr::Expr;
    use crate::oracle::DomainBox;

    fn model(role: FactorRole, vars: Vec<usize>, expr: Node) -> FactorModel {
        FactorModel {
            role,
            vars,
            skeleton: String::new(),
            complexity: expr.complexity(),
            params: Vec::new(),
            expr,
            train_mse: 0.0,
            relative_error: 0.0,
            accepted: true,
            points: 0,
            skeletons_tried: 0,
        }
    }

    fn structure(arity: usize, blocks: Vec<(Vec<usize>, usize, usize)>) -> GsStructure {
        GsStructure {
            arity,
            repeated: Vec::new(),
            blocks: blocks
                .into_iter()
                .map(|(vars, omegas, psis)| Block {
                    vars: vars.clone(),
                    repeated: Vec::new(),
                    psi_factors: vec![vars; psis],
                    omega_factors: vec![Vec::new(); omegas],
                    omega_probe: None,
                })
                .collect(),
            inactive: Vec::new(),
            anchor: vec![0.0; arity],
            probes_used: 0,
        }
    }

    fn samples(f: impl Fn(&[f64]) -> f64, n: usize, rows: usize, seed: u64) -> SampleSet {
        let points = DomainBox::cube(n, -3.0, 3.0).unwrap().sample_points(rows, seed);
        let values = points.iter().map(|p| f(p)).collect();
        SampleSet { points, values, seed }
    }

    #[test]
    fn three_factor_block_has_seven_terms() {
        let s = structure(3, vec![(vec![0, 1, 2], 1, 2)]);
        let f = vec![vec![
            model(FactorRole::Omega, vec![0], Node::var(0).cos()),
            model(FactorRole::Psi, vec![1], Node::var(0)),
            model(FactorRole::Psi, vec![2], Node::var(0).sin()),
        ]];
        let basis = build_basis(&s, &f).unwrap();
        assert_eq!(basis.len(), 7);
        assert_eq!(basis[0].factor_subset, vec![0]);
        assert_eq!(basis[6].factor_subset, vec![0, 1, 2]);
        assert_eq!(basis[6].expr.variables(), vec![0, 1, 2]);
    }

    #[test]
    fn two_blocks_one_and_two_factors() {
        let s = structure(3, vec![(vec![0], 0, 1), (vec![1, 2], 0, 2)]);
        let f = vec![
            vec![model(FactorRole::Psi, vec![0], Node::var(0))],
            vec![
                model(FactorRole::Psi, vec![1], Node::var(0)),
                model(FactorRole::Psi, vec![2], Node::var(0)),
            ],
        ];
        assert_eq!(build_basis(&s, &f).unwrap().len(), 4);
    }

    #[test]
    fn too_many_factors_is_refused() {
        let s = structure(7, vec![((0..7).collect(), 0, 7)]);
        let f = vec![(0..7).map(|i| model(FactorRole::Psi, vec![i], Node::var(0))).collect()];
        assert!(matches!(build_basis(&s, &f), Err(AssembleError::BasisExplosion { .. })));
    }

    #[test]
    fn exact_sine_model() {
        let basis = vec![BasisTerm {
            block: 0,
            factor_subset: vec![0],
            expr: Node::var(0).sin(),
        }];
        let train = samples(|x| 2.0 + 3.0 * x[0].sin(), 1, 200, 1);
        let fit = least_squares(&basis, &train, 0.2).unwrap();
        assert!((fit.c0 - 2.0).abs() < 1e-12);
        assert!((fit.coeffs[0] - 3.0).abs() < 1e-12);
        assert!(fit.train_mse < 1e-24);
        assert!(!fit.deficient);
    }

    #[test]
    fn duplicate_column_is_flagged() {
        let t = BasisTerm {
            block: 0,
            factor_subset: vec![0],
            expr: Node::var(0).sin(),
        };
        let train = samples(|x| 1.0 + x[0].sin(), 1, 100, 2);
        let fit = least_squares(&[t.clone(), t], &train, 0.2).unwrap();
        assert!(fit.deficient);
        assert!((fit.coeffs[0] - fit.coeffs[1]).abs() < 1e-9);
        assert!((fit.coeffs[0] + fit.coeffs[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_rows_are_dropped_up_to_a_limit() {
        let t = BasisTerm {
            block: 0,
            factor_subset: vec![0],
            expr: Node::var(0).ln(),
        };
        let train = samples(|x| x[0], 1, 100, 3);
        assert!(matches!(
            least_squares(&[t], &train, 0.2),
            Err(AssembleError::TooManyDropped { .. })
        ));
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let basis: Vec<BasisTerm> = [Node::var(0).sin(), Node::var(1).exp(), Node::var(0) * Node::var(1)]
            .into_iter()
            .map(|expr| BasisTerm {
                block: 0,
                factor_subset: vec![0],
                expr,
            })
            .collect();
        let train = samples(|x| (x[0] * x[1]).cos() + x[1], 2, 300, 4);
        let fit = least_squares(&basis, &train, 0.2).unwrap();
        let cols = term_columns(&basis, &train.points);
        let resid: Vec<f64> = (0..train.len())
            .map(|r| {
                train.values[r] - fit.c0 - (0..3).map(|t| fit.coeffs[t] * cols[t][r]).sum::<f64>()
            })
            .collect();
        let bnorm = train.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut all = vec![vec![1.0; train.len()]];
        all.extend(cols);
        for c in &all {
            let dot: f64 = c.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-9 * cn * bnorm, "{dot}");
        }
    }

    #[test]
    fn zero_target_gives_zero_model() {
        let e = Expr::parse("0*x1", 1).unwrap();
        let o = Oracle::new(e, DomainBox::cube(1, -3.0, 3.0).unwrap()).unwrap();
        let s = structure(1, vec![(vec![0], 0, 1)]);
        let f = vec![vec![model(FactorRole::Psi, vec![0], Node::var(0).sin())]];
        let (m, _) = assemble_and_validate(&s, f, &o, &AssembleConfig::default(), 1, |_| None).unwrap();
        assert_eq!(m.c0, 0.0);
        assert_eq!(m.coeffs, vec![0.0]);
        assert_eq!(m.val_mse, 0.0);
        assert!(m.success);
        assert_eq!(m.train_size, 200);
    }

    #[test]
    fn composed_tree_matches_term_sum() {
        let e = Expr::parse("1.5-2*sin(x1)*x2+x2", 2).unwrap();
        let o = Oracle::new(e, DomainBox::cube(2, -3.0, 3.0).unwrap()).unwrap();
        let s = structure(2, vec![(vec![0, 1], 0, 2)]);
        let f = vec![vec![
            model(FactorRole::Psi, vec![0], Node::var(0).sin()),
            model(FactorRole::Psi, vec![1], Node::var(0)),
        ]];
        let (m, _) = assemble_and_validate(&s, f, &o, &AssembleConfig::default(), 2, |_| None).unwrap();
        assert!(m.success, "{}", m.val_mse);
        assert!((m.c0 - 1.5).abs() < 1e-10);
        for p in DomainBox::cube(2, -3.0, 3.0).unwrap().sample_points(100, 9) {
            let a = m.expr.eval_raw(&p, &[]);
            assert!((a - m.eval(&p)).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["terms"][2]["factor_subset"], serde_json::json!([1, 2]));
        assert_eq!(json["terms"][0]["block"], 1);
    }
}
