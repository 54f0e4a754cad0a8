//! Every skeleton in the stream recovers data generated from itself.

use gsfit::detect::{tabulate, FactorData, Slice};
use gsfit::fit::{fit_factor, skeleton_stream, Skeleton};
use gsfit::{seed, DomainBox, Expr, OptimizerConfig, Oracle};
use rand::Rng;

const SEEDS: u64 = 20;

/// Data from `sk` with parameters in [-5, 5]. Draws giving invalid values
/// or constant data are redrawn, and so are draws whose magnitude exceeds
/// `max_abs` (when given).
fn generated(sk: &Skeleton, k: usize, s: u64, max_abs: Option<f64>) -> Option<FactorData> {
    let mut rng = seed::rng(s, &[k as u64, 99]);
    for _ in 0..500 {
        let params: Vec<f64> = (0..sk.param_count()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let e = Expr::new(sk.template().substitute_params(&params), k).unwrap();
        let o = Oracle::new(e, DomainBox::cube(k, -3.0, 3.0).unwrap()).unwrap();
        let slice = Slice::psi(&o, (0..k).collect(), &vec![0.37; k]);
        let Ok(d) = tabulate(&o, &slice, 40, 1e-8, s) else { continue };
        let ymax = d.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if d.values.iter().all(|v| v.is_finite()) && max_abs.is_none_or(|m| ymax <= m) {
            return Some(d);
        }
    }
    None
}

#[test]
fn stream_skeletons_fit_their_own_data() {
    let mut report = Vec::new();
    for k in 1..=3usize {
        for sk in skeleton_stream(k, 12).iter().filter(|s| s.param_count() > 1) {
            let mut ok = 0;
            let mut tried = 0;
            for s in 0..SEEDS {
                // Beyond 1e12 an absolute MSE of 1e-6 is below double rounding.
                let Some(d) = generated(sk, k, s, Some(1e12)) else { continue };
                tried += 1;
                let m = fit_factor(&d, &OptimizerConfig { seed: s, ..Default::default() }, 12);
                if m.train_mse <= 1e-6 {
                    ok += 1;
                }
            }
            assert!(tried >= 18, "{}: only {tried} usable draws", sk.text());
            if ok * 10 < tried * 9 {
                report.push(format!("{} {ok}/{tried}", sk.text()));
            }
        }
    }
    assert!(report.is_empty(), "{report:?}");
}

#[test]
fn large_magnitude_draws_are_exact_relative_to_scale() {
    for (k, text) in [(1, "θ1*exp(θ2*v^2)+θ3"), (3, "θ1*exp(θ2*v1*v2*v3)+θ3")] {
        let sk = skeleton_stream(k, 12).into_iter().find(|s| s.text() == text).unwrap();
        for s in 0..SEEDS {
            let d = generated(&sk, k, s, None).unwrap();
            let m = fit_factor(&d, &OptimizerConfig { seed: s, ..Default::default() }, 12);
            assert!(m.accepted && m.relative_error <= 1e-20, "{text} seed {s}: {}", m.relative_error);
        }
    }
}

#[test]
fn constant_data_has_no_factor() {
    let sk = &skeleton_stream(1, 12)[0];
    assert_eq!(sk.text(), "θ1");
    assert!(generated(sk, 1, 0, None).is_none());
}
