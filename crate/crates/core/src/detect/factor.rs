//! Multiplicative factor partition of an isolated block.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::slice::{FactorData, Slice};
use super::{DetectConfig, DetectError, InteractionGraph};
use crate::oracle::Oracle;
use crate::seed;

const MAX_REDRAWS: usize = 10;

/// Tests whether the slice splits as `s·u(A)·v(B) + t` around `base`.
///
/// `a` and `b` are disjoint local index sets; every other local variable
/// stays at the base. With `H` the mixed difference about the base and
/// `U`, `V` the one-sided increments, the split holds when every probe
/// quadruple of `H` is rank one and `H` is proportional to `U·V`. A
/// vanishing `H` with nonzero `U·V` is an additive split, which is not a
/// product.
pub fn split_is_separable(
    oracle: &Oracle,
    slice: &Slice,
    a: &[usize],
    b: &[usize],
    probes: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<bool, DetectError> {
    let base = slice.base();
    let draw = |set: &[usize], rng: &mut ChaCha8Rng| -> Vec<f64> {
        set.iter()
            .map(|&j| {
                let (lo, hi) = slice.range(oracle, j);
                lo + (hi - lo) * rng.gen::<f64>()
            })
            .collect()
    };
    let eval = |xa: &[f64], xb: &[f64]| {
        let mut p = base.clone();
        for (&j, &x) in a.iter().zip(xa) {
            p[j] = x;
        }
        for (&j, &x) in b.iter().zip(xb) {
            p[j] = x;
        }
        slice.eval(oracle, &p)
    };
    let a0: Vec<f64> = a.iter().map(|&j| base[j]).collect();
    let b0: Vec<f64> = b.iter().map(|&j| base[j]).collect();
    let h00 = eval(&a0, &b0);
    if !h00.is_finite() {
        return Err(DetectError::InsufficientProbes {
            vars: slice.vars.clone(),
        });
    }

    // (H, U·V) for each of the four corners of each probe.
    let mut corners: Vec<[(f64, f64); 4]> = Vec::new();
    let mut scale = h00.abs();
    for _ in 0..probes {
        for _ in 0..=MAX_REDRAWS {
            let (xa, xa2) = (draw(a, rng), draw(a, rng));
            let (xb, xb2) = (draw(b, rng), draw(b, rng));
            let h = [
                eval(&xa, &xb),
                eval(&xa, &xb2),
                eval(&xa2, &xb),
                eval(&xa2, &xb2),
                eval(&xa, &b0),
                eval(&xa2, &b0),
                eval(&a0, &xb),
                eval(&a0, &xb2),
            ];
            if h.iter().any(|y| !y.is_finite()) {
                continue;
            }
            scale = h.iter().fold(scale, |m, y| m.max(y.abs()));
            let u = [h[4] - h00, h[5] - h00];
            let v = [h[6] - h00, h[7] - h00];
            let corner = |k: usize, ia: usize, ib: usize| {
                let hh = h[k] - h[4 + ia] - h[6 + ib] + h00;
                (hh, u[ia] * v[ib])
            };
            corners.push([corner(0, 0, 0), corner(1, 0, 1), corner(2, 1, 0), corner(3, 1, 1)]);
            break;
        }
    }
    if corners.len() < 4 {
        return Err(DetectError::InsufficientProbes {
            vars: slice.vars.clone(),
        });
    }
    if scale == 0.0 {
        return Ok(true);
    }

    let s2 = scale * scale;
    let flat: Vec<(f64, f64)> = corners.iter().flatten().copied().collect();
    let hmax = flat.iter().fold(0.0f64, |m, c| m.max(c.0.abs()));
    let wmax = flat.iter().fold(0.0f64, |m, c| m.max(c.1.abs()));
    if hmax <= tol * scale {
        return Ok(wmax <= tol * s2);
    }
    for c in &corners {
        let cross = c[0].0 * c[3].0 - c[1].0 * c[2].0;
        if cross.abs() > tol * s2 {
            return Ok(false);
        }
    }
    if wmax > tol * s2 {
        let s3 = s2 * scale;
        for (i, ci) in flat.iter().enumerate() {
            for cj in &flat[i + 1..] {
                if (ci.0 * cj.1 - cj.0 * ci.1).abs() > tol * s3 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Partitions the variables of `data` into multiplicative factor groups.
///
/// Pairs that fail the split test are joined; the groups are the connected
/// components. Each group is then checked jointly against the rest, and
/// groups that fail are merged. Returned groups hold global indices and
/// are ordered by smallest member.
pub fn factor_partition(
    oracle: &Oracle,
    data: &FactorData,
    cfg: &DetectConfig,
) -> Result<Vec<Vec<usize>>, DetectError> {
    let k = data.arity();
    if k <= 1 {
        return Ok(vec![data.vars.clone()]);
    }
    let slice = &data.slice;
    let mut rng = seed::rng(cfg.seed, &[0xFAC7, data.vars[0] as u64, data.role as u64]);
    let mut edges = Vec::new();
    for p in 0..k {
        for q in p + 1..k {
            if !split_is_separable(oracle, slice, &[p], &[q], cfg.probes, cfg.tol, &mut rng)? {
                edges.push((p, q));
            }
        }
    }
    let mut groups = InteractionGraph::from_edges(k, &edges).components(&vec![false; k]);

    while groups.len() > 1 {
        let mut failing = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            let rest: Vec<usize> = (0..k).filter(|j| !g.contains(j)).collect();
            if !split_is_separable(oracle, slice, g, &rest, cfg.probes, cfg.tol, &mut rng)? {
                failing.push(gi);
            }
        }
        if failing.is_empty() {
            break;
        }
        if failing.len() == 1 {
            groups = vec![(0..k).collect()];
            break;
        }
        let mut merged: Vec<usize> = failing.iter().flat_map(|&gi| groups[gi].clone()).collect();
        merged.sort_unstable();
        let mut next: Vec<Vec<usize>> = groups
            .iter()
            .enumerate()
            .filter(|(gi, _)| !failing.contains(gi))
            .map(|(_, g)| g.clone())
            .collect();
        next.push(merged);
        next.sort_by_key(|g| g[0]);
        groups = next;
    }

    Ok(groups
        .into_iter()
        .map(|g| g.into_iter().map(|j| data.vars[j]).collect())
        .collect())
}
