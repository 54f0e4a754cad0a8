//! Mixed second differences and the interaction graph built from them.

use super::{DetectConfig, DetectError, InteractionGraph};
use crate::oracle::Oracle;
use crate::seed;

const MAX_REDRAWS: usize = 10;

/// `f(u,v) - f(u,v') - f(u',v) + f(u',v')`.
pub fn mixed_difference(f_uv: f64, f_uv2: f64, f_u2v: f64, f_u2v2: f64) -> f64 {
    f_uv - f_uv2 - f_u2v + f_u2v2
}

/// Normalized mixed second difference of the oracle in variables `i` and
/// `j` with everything else at `anchor`.
///
/// The probe stream depends only on `seed` and the unordered pair, and the
/// values are always drawn for the lower index first, so `(i, j)` and
/// `(j, i)` score identically.
pub fn mixed_diff(
    oracle: &Oracle,
    i: usize,
    j: usize,
    anchor: &[f64],
    probes: usize,
    seed: u64,
) -> Result<f64, DetectError> {
    assert_ne!(i, j, "mixed_diff needs two distinct variables");
    let (lo, hi) = (i.min(j), i.max(j));
    let mut rng = seed::rng(seed, &[0x3D1F, lo as u64, hi as u64]);
    let domain = oracle.domain();
    let mut p = anchor.to_vec();
    let mut eval = |a: f64, b: f64| {
        p[lo] = a;
        p[hi] = b;
        oracle.eval_raw(&p)
    };

    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for _ in 0..probes {
        let mut done = false;
        for _ in 0..=MAX_REDRAWS {
            let u = domain.draw_coord(lo, &mut rng);
            let u2 = domain.draw_coord(lo, &mut rng);
            let v = domain.draw_coord(hi, &mut rng);
            let v2 = domain.draw_coord(hi, &mut rng);
            let f = [eval(u, v), eval(u, v2), eval(u2, v), eval(u2, v2)];
            if f.iter().all(|y| y.is_finite()) {
                worst = worst.max(mixed_difference(f[0], f[1], f[2], f[3]).abs());
                scale = f.iter().fold(scale, |m, y| m.max(y.abs()));
                done = true;
                break;
            }
        }
        if !done {
            return Err(DetectError::DegenerateDomain);
        }
    }
    Ok(worst / scale)
}

/// Scores every pair of variables at `anchor`.
pub fn interaction_graph(
    oracle: &Oracle,
    anchor: &[f64],
    cfg: &DetectConfig,
) -> Result<InteractionGraph, DetectError> {
    let n = oracle.arity();
    let mut scores = vec![0.0; n * n];
    let probe_seed = seed::derive(cfg.seed, &[0x6A7F]);
    for i in 0..n {
        for j in i + 1..n {
            let s = mixed_diff(oracle, i, j, anchor, cfg.probes, probe_seed)?;
            scores[i * n + j] = s;
            scores[j * n + i] = s;
        }
    }
    Ok(InteractionGraph::from_scores(n, scores, cfg.tol))
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
    fn additive_pair_scores_zero() {
        let o = oracle("x1+x2", 2, -3.0, 3.0);
        let s = mixed_diff(&o, 0, 1, &[0.5, 0.5], 8, 1).unwrap();
        assert!(s <= 1e-12, "{s}");
    }

    #[test]
    fn product_difference_by_hand() {
        let f = |u: f64, v: f64| u * v;
        assert_eq!(mixed_difference(f(0.0, 0.0), f(0.0, 1.0), f(1.0, 0.0), f(1.0, 1.0)), 1.0);
    }

    #[test]
    fn symmetric_in_the_pair() {
        let o = oracle("x1*sin(x2)+x3", 3, -3.0, 3.0);
        let a = [0.2, 0.4, -0.1];
        let s12 = mixed_diff(&o, 0, 1, &a, 8, 4).unwrap();
        let s21 = mixed_diff(&o, 1, 0, &a, 8, 4).unwrap();
        assert_eq!(s12.to_bits(), s21.to_bits());
        assert!(s12 > 1e-3);
    }

    #[test]
    fn case_four_pairs() {
        let o = oracle("x3*sin(x1)-2*x3*cos(x2)", 3, -3.0, 3.0);
        let a = [0.4, -0.9, 1.2];
        let tol = 1e-8;
        assert!(mixed_diff(&o, 0, 1, &a, 8, 2).unwrap() <= tol);
        assert!(mixed_diff(&o, 0, 2, &a, 8, 2).unwrap() > tol);
        assert!(mixed_diff(&o, 1, 2, &a, 8, 2).unwrap() > tol);
    }

    #[test]
    fn graphs_for_small_targets() {
        let cfg = DetectConfig::default();
        let o = oracle("x1+x2+x3", 3, -3.0, 3.0);
        let g = interaction_graph(&o, &[0.1, 0.2, 0.3], &cfg).unwrap();
        assert!(g.edges().is_empty());

        let o = oracle("2*cos(x1)+sin(3*x2-x3)", 3, -3.0, 3.0);
        let g = interaction_graph(&o, &[0.1, 0.2, 0.3], &cfg).unwrap();
        assert_eq!(g.edges(), vec![(1, 2)]);
    }

    #[test]
    fn invalid_everywhere_is_degenerate() {
        let o = oracle("ln(-x1*x1-1)+x2", 2, -3.0, 3.0);
        let err = mixed_diff(&o, 0, 1, &[0.0, 0.0], 8, 1).unwrap_err();
        assert_eq!(err, DetectError::DegenerateDomain);
    }
}
