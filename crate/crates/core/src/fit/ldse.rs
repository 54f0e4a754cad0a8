//! Low-dimensional simplex evolution and a bounded Nelder-Mead polish.

use rand::seq::index;
use rand::Rng;

use super::OptimizerConfig;
use crate::seed;

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub generations: usize,
    pub evaluations: u64,
    /// Best value after each generation.
    pub history: Vec<f64>,
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` over the box `bounds`.
///
/// A population of `10 + 10d` agents starts uniformly in the box, seeded
/// with any `warm` points. Every generation, each agent joins `m` other
/// distinct agents (`m = min(d, 3)`) to form a small simplex. The worst
/// vertex is reflected through the centroid of the rest; if that fails to
/// beat it, a contraction toward the centroid is tried. A successful
/// candidate replaces the worst vertex. The run stops at `cfg.target`,
/// after the generation limit, or when the best value has not improved by
/// more than `1e-12` for the stagnation window. `NaN` counts as `+∞`.
pub fn ldse_minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    bounds: &[(f64, f64)],
    cfg: &OptimizerConfig,
    warm: &[Vec<f64>],
) -> Minimum {
    let d = bounds.len();
    assert!(d >= 1, "ldse needs at least one dimension");
    let np = cfg.population_for(d);
    let m = d.min(3).min(np - 1);
    let max_gens = cfg.generations_for(d);
    let window = cfg.stagnation_for(d);
    let mut rng = seed::rng(cfg.seed, &[0x1D5E, d as u64]);

    let mut evaluations = 0u64;
    let mut eval = |x: &[f64], evaluations: &mut u64| {
        *evaluations += 1;
        sanitize(f(x))
    };

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    for w in warm.iter().take(np) {
        let mut x = w.clone();
        x.resize(d, 0.0);
        clamp_into(&mut x, bounds);
        pop.push(x);
    }
    while pop.len() < np {
        pop.push(bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>()).collect());
    }
    let mut vals: Vec<f64> = pop.iter().map(|x| eval(x, &mut evaluations)).collect();

    let best_of = |vals: &[f64]| {
        let mut b = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v < vals[b] {
                b = i;
            }
        }
        b
    };
    let mut best = best_of(&vals);
    let mut history = Vec::new();
    let mut since_improvement = 0usize;
    let mut generations = 0usize;
    let mut centroid = vec![0.0; d];
    let mut trial = vec![0.0; d];

    while generations < max_gens && vals[best] > cfg.target {
        let before = vals[best];
        for i in 0..np {
            // Agent i plus m distinct others.
            let mut verts: Vec<usize> = index::sample(&mut rng, np - 1, m)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect();
            verts.push(i);
            let worst = *verts
                .iter()
                .max_by(|&&a, &&b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
                .expect("nonempty simplex");

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for &j in verts.iter().filter(|&&j| j != worst) {
                for (c, x) in centroid.iter_mut().zip(&pop[j]) {
                    *c += x;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= m as f64);

            for k in 0..d {
                trial[k] = 2.0 * centroid[k] - pop[worst][k];
            }
            clamp_into(&mut trial, bounds);
            let mut fv = eval(&trial, &mut evaluations);
            if fv >= vals[worst] {
                for k in 0..d {
                    trial[k] = 0.5 * (centroid[k] + pop[worst][k]);
                }
                fv = eval(&trial, &mut evaluations);
            }
            if fv < vals[worst] {
                pop[worst].copy_from_slice(&trial);
                vals[worst] = fv;
                if fv < vals[best] {
                    best = worst;
                }
            }
        }
        generations += 1;
        history.push(vals[best]);
        if before - vals[best] > 1e-12 {
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= window {
                break;
            }
        }
    }

    Minimum {
        x: pop[best].clone(),
        value: vals[best],
        generations,
        evaluations,
        history,
    }
}

/// Bounded Nelder-Mead from `x0` with initial step `step` per axis.
/// Points are clamped into the box; stops after `max_evals` evaluations or
/// when the simplex values agree to `ftol` (absolute).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    bounds: &[(f64, f64)],
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, bounds);
    simplex.push(start.clone());
    for k in 0..d {
        let mut x = start.clone();
        x[k] += step[k];
        if x[k] > bounds[k].1 {
            x[k] = start[k] - step[k];
        }
        clamp_into(&mut x, bounds);
        simplex.push(x);
    }
    let mut fs: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();
        if (fs[d] - fs[0]).abs() <= ftol || !fs[0].is_finite() && !fs[d].is_finite() {
            break;
        }
        let mut c = vec![0.0; d];
        for x in &simplex[..d] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = c.iter().zip(&simplex[d]).map(|(ci, wi)| ci + t * (ci - wi)).collect();
            clamp_into(&mut p, bounds);
            p
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < fs[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                fs[d] = fe;
            } else {
                simplex[d] = xr;
                fs[d] = fr;
            }
        } else if fr < fs[d - 1] {
            simplex[d] = xr;
            fs[d] = fr;
        } else {
            let (xc, fc) = if fr < fs[d] {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fs[d].min(fr) {
                simplex[d] = xc;
                fs[d] = fc;
            } else {
                for i in 1..=d {
                    let x: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, xi)| b + 0.5 * (xi - b))
                        .collect();
                    fs[i] = eval(&x, &mut evals);
                    simplex[i] = x;
                }
            }
        }
    }
    let b = (0..=d).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap_or(0);
    (simplex[b].clone(), fs[b])
}
