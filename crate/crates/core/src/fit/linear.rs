//! Small dense least squares for the linear coefficients of a skeleton.

/// Coefficients of `y ≈ offset + Σ coefs[j]·cols[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub coefs: Vec<f64>,
    pub offset: f64,
    pub ss_res: f64,
}

/// Reusable buffers for [`solve`].
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    q: Vec<Vec<f64>>,
    r: Vec<f64>,
    rhs: Vec<f64>,
}

/// Solves by modified Gram-Schmidt with one reorthogonalization pass.
///
/// With `offset` the columns and response are centered first, which fits
/// the intercept exactly. A column that is numerically dependent on the
/// earlier ones gets coefficient 0. Returns `None` when any input is not
/// finite.
pub fn solve(cols: &[Vec<f64>], y: &[f64], offset: bool, ws: &mut Workspace) -> Option<LinearSolution> {
    let n = y.len();
    let k = cols.len();
    if y.iter().any(|v| !v.is_finite()) || cols.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let mean = |v: &[f64]| if offset && n > 0 { v.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let ybar = mean(y);
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();

    ws.q.resize_with(k, Vec::new);
    ws.r.clear();
    ws.r.resize(k * k, 0.0);
    let mut independent = vec![false; k];
    for j in 0..k {
        let mut v: Vec<f64> = cols[j].iter().map(|x| x - means[j]).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _pass in 0..2 {
            for i in 0..j {
                if !independent[i] {
                    continue;
                }
                let qi = &ws.q[i];
                let dot: f64 = qi.iter().zip(&v).map(|(a, b)| a * b).sum();
                ws.r[i * k + j] += dot;
                for (x, q) in v.iter_mut().zip(qi) {
                    *x -= dot * q;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 > 0.0 && norm > 1e-10 * norm0 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            ws.r[j * k + j] = norm;
            independent[j] = true;
        }
        ws.q[j] = v;
    }

    ws.rhs.clear();
    for j in 0..k {
        let dot = if independent[j] {
            ws.q[j].iter().zip(y).map(|(q, yy)| q * (yy - ybar)).sum()
        } else {
            0.0
        };
        ws.rhs.push(dot);
    }
    let mut coefs = vec![0.0; k];
    for j in (0..k).rev() {
        if !independent[j] {
            continue;
        }
        let mut s = ws.rhs[j];
        for i in j + 1..k {
            s -= ws.r[j * k + i] * coefs[i];
        }
        coefs[j] = s / ws.r[j * k + j];
    }
    let offset_value = if offset {
        ybar - coefs.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>()
    } else {
        0.0
    };
    let mut ss_res = 0.0;
    for row in 0..n {
        let mut pred = offset_value;
        for (c, col) in coefs.iter().zip(cols) {
            pred += c * col[row];
        }
        let e = y[row] - pred;
        ss_res += e * e;
    }
    Some(LinearSolution {
        coefs,
        offset: offset_value,
        ss_res,
    })
}

/// `Σ (y - ȳ)²`.
pub fn total_sum_of_squares(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum()
}
