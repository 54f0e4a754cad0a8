//! Domain boxes, seeded sampling, and counted black-box access.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Program};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("domain box needs at least one variable")]
    Empty,
    #[error("lower and upper bound lists differ in length ({lower} vs {upper})")]
    LengthMismatch { lower: usize, upper: usize },
    #[error("interval {index} is not a proper finite interval: [{lo}, {hi}]")]
    BadInterval { index: usize, lo: f64, hi: f64 },
    #[error("target has arity {target} but the box has {domain} variables")]
    ArityMismatch { target: usize, domain: usize },
}

/// A product of closed intervals `[a_i, b_i]` with `a_i < b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<DomainBox, OracleError> {
        if lower.len() != upper.len() {
            return Err(OracleError::LengthMismatch {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(OracleError::Empty);
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(OracleError::BadInterval { index, lo, hi });
            }
        }
        Ok(DomainBox { lower, upper })
    }

    /// The same interval on every axis.
    pub fn cube(arity: usize, lo: f64, hi: f64) -> Result<DomainBox, OracleError> {
        DomainBox::new(vec![lo; arity], vec![hi; arity])
    }

    pub fn arity(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.arity()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| *a <= *x && *x <= *b)
    }

    /// One uniform draw on axis `i`.
    pub fn draw_coord(&self, i: usize, rng: &mut impl Rng) -> f64 {
        let (a, b) = (self.lower[i], self.upper[i]);
        (a + (b - a) * rng.gen::<f64>()).clamp(a, b)
    }

    /// One uniform draw from the central half of axis `i`.
    pub fn draw_central(&self, i: usize, rng: &mut impl Rng) -> f64 {
        let (a, b) = (self.lower[i], self.upper[i]);
        a + (b - a) * (0.25 + 0.5 * rng.gen::<f64>())
    }

    pub fn draw_point(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.arity()).map(|i| self.draw_coord(i, rng)).collect()
    }

    /// `count` i.i.d. uniform points, reproducible from `seed`.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed, &[0x5A4D]);
        (0..count).map(|_| self.draw_point(&mut rng)).collect()
    }
}

/// A target function behind a domain box, with an evaluation counter.
///
/// Evaluation is pure and may be called from several threads; the counter
/// is atomic.
#[derive(Debug)]
pub struct Oracle {
    target: Expr,
    program: Program,
    domain: DomainBox,
    evaluations: AtomicU64,
}

impl Oracle {
    pub fn new(target: Expr, domain: DomainBox) -> Result<Oracle, OracleError> {
        if target.arity() != domain.arity() {
            return Err(OracleError::ArityMismatch {
                target: target.arity(),
                domain: domain.arity(),
            });
        }
        let program = target.compile();
        Ok(Oracle {
            target,
            program,
            domain,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn target(&self) -> &Expr {
        &self.target
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn arity(&self) -> usize {
        self.domain.arity()
    }

    /// Evaluates once and bumps the counter. `None` is the invalid value.
    pub fn eval(&self, point: &[f64]) -> Option<f64> {
        debug_assert_eq!(point.len(), self.arity());
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let y = self.program.eval(point, &[]);
        (!y.is_nan()).then_some(y)
    }

    /// Like [`Oracle::eval`] with `NaN` for invalid.
    pub fn eval_raw(&self, point: &[f64]) -> f64 {
        self.eval(point).unwrap_or(f64::NAN)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Draws `count` uniform points and records the target there.
    pub fn sample_uniform(&self, count: usize, seed: u64) -> SampleSet {
        let points = self.domain.sample_points(count, seed);
        let values = points.iter().map(|p| self.eval_raw(p)).collect();
        SampleSet {
            points,
            values,
            seed,
        }
    }
}

/// Sampled points (rows) with target values; `NaN` marks an invalid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Writes `x1,...,xn,f` followed by one line per point.
    pub fn write_csv(&self, mut out: impl io::Write) -> io::Result<()> {
        let n = self.arity();
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},f", header.join(","))?;
        for (p, y) in self.points.iter().zip(&self.values) {
            for x in p {
                write!(out, "{x},")?;
            }
            writeln!(out, "{y}")?;
        }
        Ok(())
    }
}
