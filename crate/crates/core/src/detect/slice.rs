//! Slicing and differencing of the oracle, and the tabulated factor data
//! they produce.

use std::ops::Range;

use rand::Rng;
use serde::Serialize;

use super::DetectError;
use crate::oracle::Oracle;
use crate::seed;

/// Which side of a block a factor lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorRole {
    /// A factor over non-repeated variables.
    Psi,
    /// A factor over repeated variables.
    Omega,
}

/// The pair of non-repeated configurations whose difference isolates a
/// block's repeated-variable factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaProbe {
    /// Global indices of the block's non-repeated variables.
    pub block_vars: Vec<usize>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SliceKind {
    /// `f(b on vars, anchor elsewhere) - offset`.
    Psi { offset: f64 },
    /// `f(z on vars, b1 on the block) - f(z on vars, b2 on the block)`.
    Omega(OmegaProbe),
}

/// A function of a few variables obtained from the oracle by pinning the
/// rest at an anchor. Local coordinates follow the order of `vars`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice {
    pub vars: Vec<usize>,
    pub anchor: Vec<f64>,
    pub kind: SliceKind,
}

impl Slice {
    pub fn psi(oracle: &Oracle, vars: Vec<usize>, anchor: &[f64]) -> Slice {
        let offset = oracle.eval_raw(anchor);
        Slice {
            vars,
            anchor: anchor.to_vec(),
            kind: SliceKind::Psi { offset },
        }
    }

    pub fn omega(vars: Vec<usize>, anchor: &[f64], probe: OmegaProbe) -> Slice {
        Slice {
            vars,
            anchor: anchor.to_vec(),
            kind: SliceKind::Omega(probe),
        }
    }

    /// The same slice restricted to a subset of its variables; the dropped
    /// ones stay at the anchor.
    pub fn restrict(&self, vars: Vec<usize>) -> Slice {
        debug_assert!(vars.iter().all(|v| self.vars.contains(v)));
        Slice {
            vars,
            anchor: self.anchor.clone(),
            kind: self.kind.clone(),
        }
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn role(&self) -> FactorRole {
        match self.kind {
            SliceKind::Psi { .. } => FactorRole::Psi,
            SliceKind::Omega(_) => FactorRole::Omega,
        }
    }

    /// Local coordinates of the anchor.
    pub fn base(&self) -> Vec<f64> {
        self.vars.iter().map(|&v| self.anchor[v]).collect()
    }

    pub fn range(&self, oracle: &Oracle, local: usize) -> (f64, f64) {
        let v = self.vars[local];
        (oracle.domain().lower()[v], oracle.domain().upper()[v])
    }

    /// Evaluates at local coordinates; `NaN` when any oracle call is invalid.
    pub fn eval(&self, oracle: &Oracle, local: &[f64]) -> f64 {
        let mut p = self.anchor.clone();
        for (&v, &x) in self.vars.iter().zip(local) {
            p[v] = x;
        }
        match &self.kind {
            SliceKind::Psi { offset } => oracle.eval_raw(&p) - offset,
            SliceKind::Omega(probe) => {
                for (&v, &x) in probe.block_vars.iter().zip(&probe.b1) {
                    p[v] = x;
                }
                let f1 = oracle.eval_raw(&p);
                for (&v, &x) in probe.block_vars.iter().zip(&probe.b2) {
                    p[v] = x;
                }
                f1 - oracle.eval_raw(&p)
            }
        }
    }
}

/// Rows of a [`FactorData`] table where only one variable moves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisLine {
    /// Local index of the moving variable.
    pub var: usize,
    pub rows: Range<usize>,
}

/// Tabulated samples of an isolated factor.
///
/// The responses equal the true factor only up to an unknown scale and,
/// for psi data, an unknown shift. Points are in local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorData {
    pub role: FactorRole,
    /// Global indices of the covered variables.
    pub vars: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Local coordinates of the anchor.
    pub base: Vec<f64>,
    pub axis_lines: Vec<AxisLine>,
    /// Whether the responses may carry an unknown additive shift.
    pub shifted: bool,
    pub slice: Slice,
}

impl FactorData {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// Column-major copy of the points.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.arity())
            .map(|j| self.points.iter().map(|p| p[j]).collect())
            .collect()
    }
}

const MAX_REDRAWS: usize = 10;

/// Samples `slice` at `points_per_var · k` scattered points plus, when
/// `k ≥ 2`, `points_per_var` points along each axis through the base.
pub fn tabulate(
    oracle: &Oracle,
    slice: &Slice,
    points_per_var: usize,
    tol: f64,
    seed: u64,
) -> Result<FactorData, DetectError> {
    let k = slice.arity();
    let mut rng = seed::rng(seed, &[0x7AB1]);
    let base = slice.base();
    let mut points = Vec::new();
    let mut values = Vec::new();
    let mut axis_lines = Vec::new();

    let draw_valid = |rng: &mut rand_chacha::ChaCha8Rng, axis: Option<usize>| {
        for _ in 0..=MAX_REDRAWS {
            let p: Vec<f64> = (0..k)
                .map(|j| match axis {
                    Some(a) if a != j => base[j],
                    _ => {
                        let (lo, hi) = slice.range(oracle, j);
                        lo + (hi - lo) * rng.gen::<f64>()
                    }
                })
                .collect();
            let y = slice.eval(oracle, &p);
            if y.is_finite() {
                return Some((p, y));
            }
        }
        None
    };

    for _ in 0..points_per_var * k {
        if let Some((p, y)) = draw_valid(&mut rng, None) {
            points.push(p);
            values.push(y);
        }
    }
    if k == 1 {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
        points = order.iter().map(|&i| points[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        axis_lines.push(AxisLine {
            var: 0,
            rows: 0..points.len(),
        });
    } else {
        for j in 0..k {
            let mut line: Vec<(Vec<f64>, f64)> = (0..points_per_var)
                .filter_map(|_| draw_valid(&mut rng, Some(j)))
                .collect();
            line.sort_by(|a, b| a.0[j].total_cmp(&b.0[j]));
            let start = points.len();
            for (p, y) in line {
                points.push(p);
                values.push(y);
            }
            axis_lines.push(AxisLine {
                var: j,
                rows: start..points.len(),
            });
        }
    }

    if points.len() < 20 * k {
        return Err(DetectError::DegenerateDomain);
    }
    let scale = values.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if hi - lo <= tol * scale {
        return Err(DetectError::DegenerateBlock {
            vars: slice.vars.clone(),
        });
    }
    Ok(FactorData {
        role: slice.role(),
        vars: slice.vars.clone(),
        points,
        values,
        base,
        axis_lines,
        shifted: slice.role() == FactorRole::Psi,
        slice: slice.clone(),
    })
}

/// Picks the pair of block configurations with the widest response gap
/// among 8 seeded candidates.
pub fn omega_probe(
    oracle: &Oracle,
    block_vars: &[usize],
    anchor: &[f64],
    tol: f64,
    seed: u64,
) -> Result<OmegaProbe, DetectError> {
    let mut rng = seed::rng(seed, &[0x0E6A, block_vars[0] as u64]);
    let domain = oracle.domain();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut scale = 1.0f64;
    let mut p = anchor.to_vec();
    for _ in 0..8 {
        let b1: Vec<f64> = block_vars.iter().map(|&v| domain.draw_coord(v, &mut rng)).collect();
        let b2: Vec<f64> = block_vars.iter().map(|&v| domain.draw_coord(v, &mut rng)).collect();
        for (&v, &x) in block_vars.iter().zip(&b1) {
            p[v] = x;
        }
        let f1 = oracle.eval_raw(&p);
        for (&v, &x) in block_vars.iter().zip(&b2) {
            p[v] = x;
        }
        let f2 = oracle.eval_raw(&p);
        if !(f1.is_finite() && f2.is_finite()) {
            continue;
        }
        scale = scale.max(f1.abs()).max(f2.abs());
        let gap = (f1 - f2).abs();
        if best.as_ref().is_none_or(|(g, ..)| gap > *g) {
            best = Some((gap, b1, b2));
        }
    }
    match best {
        Some((gap, b1, b2)) if gap > tol * scale => Ok(OmegaProbe {
            block_vars: block_vars.to_vec(),
            b1,
            b2,
        }),
        _ => Err(DetectError::UnresolvableOmega {
            vars: block_vars.to_vec(),
        }),
    }
}

/// Tabulates the additive slice over a block's non-repeated variables.
pub fn isolate_psi_data(
    oracle: &Oracle,
    vars: &[usize],
    anchor: &[f64],
    points_per_var: usize,
    tol: f64,
    seed: u64,
) -> Result<FactorData, DetectError> {
    let slice = Slice::psi(oracle, vars.to_vec(), anchor);
    tabulate(oracle, &slice, points_per_var, tol, seed)
}

/// Tabulates the differenced slice over a block's repeated variables.
pub fn isolate_omega_data(
    oracle: &Oracle,
    repeated: &[usize],
    probe: &OmegaProbe,
    anchor: &[f64],
    points_per_var: usize,
    tol: f64,
    seed: u64,
) -> Result<FactorData, DetectError> {
    let slice = Slice::omega(repeated.to_vec(), anchor, probe.clone());
    tabulate(oracle, &slice, points_per_var, tol, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::oracle::DomainBox;

    fn oracle(text: &str, n: usize, lo: f64, hi: f64) -> Oracle {
        let e = Expr::parse(text, n).unwrap();
        Oracle::new(e, DomainBox::cube(n, lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn additive_slice_is_exact() {
        let o = oracle("x1+x2", 2, -3.0, 3.0);
        let d = isolate_psi_data(&o, &[0], &[0.0, 0.0], 20, 1e-8, 1).unwrap();
        assert_eq!(d.role, FactorRole::Psi);
        assert!(d.len() >= 20);
        for (p, y) in d.points.iter().zip(&d.values) {
            assert_eq!(*y, p[0]);
        }
        assert_eq!(d.axis_lines.len(), 1);
    }

    #[test]
    fn psi_slice_follows_the_block_factor() {
        // 1.2 + 10 sin(2 x1) - 3 x2^2 cos(x3), block {x1}
        let o = oracle("1.2+10*sin(2*x1)-3*x2^2*cos(x3)", 3, -3.0, 3.0);
        let anchor = [0.4, -0.7, 1.1];
        let d = isolate_psi_data(&o, &[0], &anchor, 20, 1e-8, 5).unwrap();
        for (p, y) in d.points.iter().zip(&d.values) {
            let want = 10.0 * ((2.0 * p[0]).sin() - (0.8f64).sin());
            assert!((y - want).abs() < 1e-12, "{y} vs {want}");
        }
    }

    #[test]
    fn omega_difference_is_linear_for_case_four() {
        let o = oracle("x3*sin(x1)-2*x3*cos(x2)", 3, -3.0, 3.0);
        let anchor = [0.3, -0.5, 0.9];
        let probe = omega_probe(&o, &[0], &anchor, 1e-8, 3).unwrap();
        let d = isolate_omega_data(&o, &[2], &probe, &anchor, 20, 1e-8, 3).unwrap();
        let c = probe.b1[0].sin() - probe.b2[0].sin();
        for (p, y) in d.points.iter().zip(&d.values) {
            assert!((y - p[0] * c).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_slice_is_degenerate() {
        let o = oracle("x1+0*x2", 2, -3.0, 3.0);
        let err = isolate_psi_data(&o, &[1], &[0.1, 0.2], 20, 1e-8, 1).unwrap_err();
        assert!(matches!(err, DetectError::DegenerateBlock { .. }));
    }

    #[test]
    fn multi_variable_tables_carry_axis_lines() {
        let o = oracle("x1*x2*x3", 3, 1.0, 2.0);
        let d = isolate_psi_data(&o, &[0, 2], &[1.5, 1.5, 1.5], 20, 1e-8, 9).unwrap();
        assert_eq!(d.len(), 80);
        assert_eq!(d.axis_lines.len(), 2);
        for line in &d.axis_lines {
            let other = 1 - line.var;
            for r in line.rows.clone() {
                assert_eq!(d.points[r][other], 1.5);
            }
        }
    }
}
