//! The ten reference targets, the stream-function demo, and a seeded
//! harness that runs the full pipeline on them.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::detect::GsStructure;
use crate::expr::Expr;
use crate::oracle::{DomainBox, Oracle};
use crate::pipeline::{run, PipelineConfig};

/// A benchmark target with its expected structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSpec {
    pub no: usize,
    pub text: &'static str,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// 0-based.
    pub repeated: Vec<usize>,
    pub blocks: usize,
    pub factors: usize,
    /// Whether the expected counts are part of the reference table.
    pub tabulated: bool,
}

const CASES: [(&str, usize, &[usize], usize, usize); 10] = [
    ("0.5*exp(x1)*sin(2*x2)", 2, &[], 1, 2),
    ("2*cos(x1)+sin(3*x2-x3)", 3, &[], 2, 2),
    ("1.2+10*sin(2*x1)-3*x2^2*cos(x3)", 3, &[], 2, 3),
    ("x3*sin(x1)-2*x3*cos(x2)", 3, &[2], 2, 4),
    ("2*x1*sin(x2)*cos(x4)-0.5*x4*cos(x3)", 4, &[3], 2, 5),
    (
        "10+0.2*x1-0.2*x5^2*sin(x2)+cos(x5)*ln(3*x3+1.2)-1.2*exp(0.5*x4)",
        5,
        &[4],
        4,
        6,
    ),
    ("2*x4*x5*sin(x1)-x5*x2+0.5*exp(x3)*cos(x4)", 5, &[3, 4], 3, 7),
    (
        "1.2+2*x4*cos(x2)+0.5*exp(1.2*x3)*sin(3*x1)*cos(x4)-2*cos(1.5*x5+5)",
        5,
        &[3],
        3,
        6,
    ),
    ("0.5*cos(x3*x4)/(exp(x1)*x2^2)*sin(1.5*x5-2*x6)", 6, &[], 1, 4),
    ("1.2-2*(x1+x2)/x3*cos(x7)+0.5*exp(x7)*x4*sin(x5*x6)", 7, &[6], 2, 6),
];

/// Flow past a cylinder with circulation; x1 = V, x2 = θ, x3 = R, x4 = r,
/// x5 = Γ.
pub const STREAM_FUNCTION: &str = "x1*x4*sin(x2)*(1-x3^2/x4^2)+x5/(2*3.141592653589793)*ln(x4/x3)";

impl CaseSpec {
    /// Cases 1 to 10, then the stream function as case 11.
    pub fn all() -> Vec<CaseSpec> {
        (1..=11).map(|k| CaseSpec::get(k).expect("known case")).collect()
    }

    pub fn get(no: usize) -> Option<CaseSpec> {
        if no == 11 {
            return Some(CaseSpec {
                no,
                text: STREAM_FUNCTION,
                dim: 5,
                lower: vec![1.0, 0.2, 0.5, 1.5, 1.0],
                upper: vec![3.0, 3.0, 1.0, 3.0, 3.0],
                repeated: vec![2, 3],
                blocks: 2,
                factors: 5,
                tabulated: false,
            });
        }
        let (text, dim, repeated, blocks, factors) = *CASES.get(no.checked_sub(1)?)?;
        let (lo, hi) = if no == 6 { (1.0, 3.0) } else { (-3.0, 3.0) };
        Some(CaseSpec {
            no,
            text,
            dim,
            lower: vec![lo; dim],
            upper: vec![hi; dim],
            repeated: repeated.to_vec(),
            blocks,
            factors,
            tabulated: true,
        })
    }

    pub fn expr(&self) -> Expr {
        Expr::parse(self.text, self.dim).expect("case expressions parse")
    }

    pub fn domain(&self) -> DomainBox {
        DomainBox::new(self.lower.clone(), self.upper.clone()).expect("case boxes are valid")
    }

    pub fn oracle(&self) -> Oracle {
        Oracle::new(self.expr(), self.domain()).expect("arity matches")
    }

    /// Training set size of one run.
    pub fn samples(&self) -> usize {
        200 * self.dim
    }

    /// Compares a detected structure with the expected one. The case 11
    /// factor count is not part of the check.
    pub fn matches(&self, s: &GsStructure) -> StructureMatch {
        StructureMatch {
            repeated: s.repeated == self.repeated,
            blocks: s.blocks.len() == self.blocks,
            factors: !self.tabulated || s.factor_count() == self.factors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructureMatch {
    pub repeated: bool,
    pub blocks: bool,
    pub factors: bool,
}

impl StructureMatch {
    pub fn all(&self) -> bool {
        self.repeated && self.blocks && self.factors
    }
}

/// Outcome of one `(case, seed)` run. Wall time is kept out of the JSON so
/// that reruns serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub no: usize,
    pub seed: u64,
    pub dim: usize,
    pub samples: usize,
    /// 1-based, empty when detection failed.
    pub repeated: Vec<usize>,
    pub blocks: usize,
    pub factors: usize,
    #[serde(rename = "match")]
    pub matched: StructureMatch,
    pub train_mse: f64,
    pub val_mse: f64,
    pub success: bool,
    pub evaluations: u64,
    pub model: Option<String>,
    pub structure: Option<serde_json::Value>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Runs the full pipeline on case `no` with `seed`. Pipeline errors are
/// recorded in the report.
pub fn run_case(no: usize, seed: u64) -> CaseReport {
    run_case_with(no, &PipelineConfig::seeded(seed))
}

/// Like [`run_case`] with explicit settings.
pub fn run_case_with(no: usize, cfg: &PipelineConfig) -> CaseReport {
    let spec = CaseSpec::get(no).expect("case number in 1..=11");
    let oracle = spec.oracle();
    let start = Instant::now();
    let result = run(&oracle, cfg);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut report = CaseReport {
        no,
        seed: cfg.seed,
        dim: spec.dim,
        samples: spec.samples(),
        repeated: Vec::new(),
        blocks: 0,
        factors: 0,
        matched: StructureMatch {
            repeated: false,
            blocks: false,
            factors: false,
        },
        train_mse: f64::INFINITY,
        val_mse: f64::INFINITY,
        success: false,
        evaluations: oracle.evaluations(),
        model: None,
        structure: None,
        error: None,
        wall_ms,
    };
    match result {
        Ok(out) => {
            let s = &out.structure;
            report.repeated = s.repeated.iter().map(|v| v + 1).collect();
            report.blocks = s.blocks.len();
            report.factors = s.factor_count();
            report.matched = spec.matches(s);
            report.train_mse = out.model.train_mse;
            report.val_mse = out.model.val_mse;
            report.success = out.model.success;
            report.model = Some(out.model.expr.to_string());
            report.structure = Some(s.to_json());
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Aggregate over the runs of one case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub no: usize,
    pub dim: usize,
    pub samples: usize,
    /// Expected structure, 1-based.
    pub repeated: Vec<usize>,
    pub blocks: usize,
    pub factors: usize,
    /// Runs whose detected structure agrees on each column.
    #[serde(rename = "match")]
    pub matched: MatchCounts,
    pub runs: usize,
    pub mse_max: f64,
    pub success_rate: f64,
    pub median_wall_ms: f64,
    pub median_evals: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub repeated: usize,
    pub blocks: usize,
    pub factors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<CaseReport>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl SuiteReport {
    /// Groups reports by case; the input order does not matter.
    pub fn aggregate(mut reports: Vec<CaseReport>, keep_reports: bool) -> SuiteReport {
        reports.sort_by(|a, b| a.no.cmp(&b.no).then(a.seed.cmp(&b.seed)));
        let mut cases = Vec::new();
        for chunk in reports.chunk_by(|a, b| a.no == b.no) {
            let spec = CaseSpec::get(chunk[0].no).expect("known case");
            let count = |f: fn(&StructureMatch) -> bool| chunk.iter().filter(|r| f(&r.matched)).count();
            cases.push(CaseSummary {
                no: spec.no,
                dim: spec.dim,
                samples: spec.samples(),
                repeated: spec.repeated.iter().map(|v| v + 1).collect(),
                blocks: spec.blocks,
                factors: spec.factors,
                matched: MatchCounts {
                    repeated: count(|m| m.repeated),
                    blocks: count(|m| m.blocks),
                    factors: count(|m| m.factors),
                },
                runs: chunk.len(),
                mse_max: chunk.iter().map(|r| r.val_mse).fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) }),
                success_rate: chunk.iter().filter(|r| r.success).count() as f64 / chunk.len() as f64,
                median_wall_ms: median(chunk.iter().map(|r| r.wall_ms).collect()),
                median_evals: median(chunk.iter().map(|r| r.evaluations as f64).collect()),
            });
        }
        SuiteReport {
            cases,
            reports: if keep_reports { reports } else { Vec::new() },
        }
    }

    /// True when every run of every case detected the expected structure.
    pub fn all_structures_match(&self) -> bool {
        self.cases.iter().all(|c| {
            c.matched.repeated == c.runs && c.matched.blocks == c.runs && c.matched.factors == c.runs
        })
    }

    /// Sets every timing field to zero.
    pub fn without_timing(mut self) -> SuiteReport {
        for c in &mut self.cases {
            c.median_wall_ms = 0.0;
        }
        for r in &mut self.reports {
            r.wall_ms = 0.0;
        }
        self
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>3} {:>7} {:>10} {:>6} {:>7} {:>9} {:>10} {:>8} {:>11} {:>10}",
            "case", "dim", "samples", "repeated", "blocks", "factors", "match", "mse_max", "success", "median_ms", "evals"
        );
        for c in &self.cases {
            let rep = if c.repeated.is_empty() {
                "none".to_string()
            } else {
                c.repeated.iter().map(|v| format!("x{v}")).collect::<Vec<_>>().join(",")
            };
            let matched = c.matched.repeated.min(c.matched.blocks).min(c.matched.factors);
            let _ = writeln!(
                s,
                "{:>4} {:>3} {:>7} {:>10} {:>6} {:>7} {:>9} {:>10.2e} {:>8} {:>11.0} {:>10.0}",
                c.no,
                c.dim,
                c.samples,
                rep,
                c.blocks,
                c.factors,
                format!("{matched}/{}", c.runs),
                c.mse_max,
                format!("{:.0}%", 100.0 * c.success_rate),
                c.median_wall_ms,
                c.median_evals
            );
        }
        s
    }
}

/// Runs every case in `cases` once per seed `base_seed..base_seed+repeats`.
pub fn run_suite(cases: &[usize], repeats: usize, base_seed: u64, parallel: bool) -> SuiteReport {
    let runs: Vec<(usize, u64)> = cases
        .iter()
        .flat_map(|&no| (0..repeats as u64).map(move |r| (no, base_seed + r)))
        .collect();
    let reports: Vec<CaseReport> = if parallel {
        runs.par_iter().map(|&(no, seed)| run_case(no, seed)).collect()
    } else {
        runs.iter().map(|&(no, seed)| run_case(no, seed)).collect()
    };
    SuiteReport::aggregate(reports, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type Formula = fn(&[f64]) -> f64;

    fn formulas() -> [Formula; 11] {
        [
            |x| 0.5 * x[0].exp() * (2.0 * x[1]).sin(),
            |x| 2.0 * x[0].cos() + (3.0 * x[1] - x[2]).sin(),
            |x| 1.2 + 10.0 * (2.0 * x[0]).sin() - 3.0 * x[1] * x[1] * x[2].cos(),
            |x| x[2] * x[0].sin() - 2.0 * x[2] * x[1].cos(),
            |x| 2.0 * x[0] * x[1].sin() * x[3].cos() - 0.5 * x[3] * x[2].cos(),
            |x| {
                10.0 + 0.2 * x[0] - 0.2 * x[4] * x[4] * x[1].sin() + x[4].cos() * (3.0 * x[2] + 1.2).ln()
                    - 1.2 * (0.5 * x[3]).exp()
            },
            |x| 2.0 * x[3] * x[4] * x[0].sin() - x[4] * x[1] + 0.5 * x[2].exp() * x[3].cos(),
            |x| {
                1.2 + 2.0 * x[3] * x[1].cos() + 0.5 * (1.2 * x[2]).exp() * (3.0 * x[0]).sin() * x[3].cos()
                    - 2.0 * (1.5 * x[4] + 5.0).cos()
            },
            |x| 0.5 * (x[2] * x[3]).cos() / (x[0].exp() * x[1] * x[1]) * (1.5 * x[4] - 2.0 * x[5]).sin(),
            |x| 1.2 - 2.0 * (x[0] + x[1]) / x[2] * x[6].cos() + 0.5 * x[6].exp() * x[3] * (x[4] * x[5]).sin(),
            |x| {
                let (v, t, big_r, r, g) = (x[0], x[1], x[2], x[3], x[4]);
                v * r * t.sin() * (1.0 - big_r * big_r / (r * r)) + g / (2.0 * PI) * (r / big_r).ln()
            },
        ]
    }

    #[test]
    fn encoded_cases_match_hand_formulas() {
        for (spec, f) in CaseSpec::all().iter().zip(formulas()) {
            let e = spec.expr();
            for p in spec.domain().sample_points(5, 77 + spec.no as u64) {
                let (a, b) = (e.eval_raw(&p), f(&p));
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "case {}: {a} vs {b}", spec.no);
            }
        }
    }

    #[test]
    fn table_two_columns() {
        let dims: Vec<usize> = (1..=10).map(|k| CaseSpec::get(k).unwrap().dim).collect();
        assert_eq!(dims, [2, 3, 3, 3, 4, 5, 5, 5, 6, 7]);
        let samples: Vec<usize> = (1..=10).map(|k| CaseSpec::get(k).unwrap().samples()).collect();
        assert_eq!(samples, [400, 600, 600, 600, 800, 1000, 1000, 1000, 1200, 1400]);
        let factors: Vec<usize> = (1..=10).map(|k| CaseSpec::get(k).unwrap().factors).collect();
        assert_eq!(factors, [2, 2, 3, 4, 5, 6, 7, 6, 4, 6]);
        assert_eq!(CaseSpec::get(6).unwrap().lower, vec![1.0; 5]);
        assert!(CaseSpec::get(0).is_none() && CaseSpec::get(12).is_none());
    }

    #[test]
    fn aggregation_ignores_order() {
        let mk = |no, seed, ok| CaseReport {
            no,
            seed,
            dim: 2,
            samples: 400,
            repeated: vec![],
            blocks: 1,
            factors: 2,
            matched: StructureMatch {
                repeated: true,
                blocks: true,
                factors: ok,
            },
            train_mse: 0.0,
            val_mse: seed as f64,
            success: ok,
            evaluations: 10 * seed,
            model: None,
            structure: None,
            error: None,
            wall_ms: 1.0,
        };
        let a = vec![mk(1, 1, true), mk(1, 2, false), mk(2, 1, true)];
        let mut b = a.clone();
        b.reverse();
        let (ra, rb) = (SuiteReport::aggregate(a, true), SuiteReport::aggregate(b, true));
        assert_eq!(ra, rb);
        assert_eq!(ra.cases[0].matched.factors, 1);
        assert_eq!(ra.cases[0].mse_max, 2.0);
        assert_eq!(ra.cases[0].success_rate, 0.5);
        assert!(!ra.all_structures_match());
    }
}
