//! Binary logistic regression fit by Newton-Raphson (IRLS).
//!
//! Small and dependency-free on purpose: the fits used here have a handful of
//! coefficients, the caller owns design-matrix construction, and the failure
//! modes that matter (separation, collinear designs) must surface as typed
//! errors rather than silently huge coefficients.

use crate::error::Error;

/// Result of an IRLS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    /// Coefficients, aligned with the design columns.
    pub beta: Vec<f64>,
    /// Newton iterations performed.
    pub iterations: usize,
    /// Whether the step-size criterion was met within the iteration budget.
    /// A fit that merely ran out of iterations is returned with this flag
    /// cleared rather than treated as an error.
    pub converged: bool,
}

/// Coefficient magnitude beyond which the fit is declared separated. A logit
/// of 30 corresponds to probabilities within 1e-13 of 0 or 1 — far past any
/// scale where finite data distinguish coefficients — while staying well
/// below the ~36.7 mark where `1 - mu` degenerates into f64 rounding noise
/// and the normal equations turn singular for the wrong reason.
const SEPARATION_BOUND: f64 = 30.0;

/// Lower bound on IRLS weights, guarding against exact zeros in the normal
/// equations. Kept far below `exp(-SEPARATION_BOUND)` so that a diverging
/// fit keeps taking full Newton steps until the separation check fires,
/// instead of stalling on floored weights.
const WEIGHT_FLOOR: f64 = 1e-30;

/// Fit logistic coefficients for binary responses `ys` against rows `xs`.
///
/// Errors with [`Error::Estimation`] when the design is collinear or the
/// responses are separated (coefficients diverge); the message suggests the
/// frequency estimator with smoothing, which handles both situations.
// Index loops mirror the matrix algebra; iterator rewrites would obscure it.
#[allow(clippy::needless_range_loop)]
pub fn fit_irls(xs: &[Vec<f64>], ys: &[bool], max_iter: usize, tol: f64) -> Result<IrlsFit, Error> {
    let n = xs.len();
    if n == 0 || n != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows for {} responses",
            ys.len()
        )));
    }
    let p = xs[0].len();
    if p == 0 || xs.iter().any(|row| row.len() != p) {
        return Err(Error::InvalidArgument(
            "design rows must be nonempty and of equal length".to_owned(),
        ));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be a positive finite number, got {tol}"
        )));
    }

    let mut beta = vec![0.0f64; p];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;

        // Accumulate X'WX and the gradient X'(y - p) in one pass.
        let mut xtwx = vec![vec![0.0f64; p]; p];
        let mut grad = vec![0.0f64; p];
        for (row, &y) in xs.iter().zip(ys) {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let mu = sigmoid(eta);
            let w = (mu * (1.0 - mu)).max(WEIGHT_FLOOR);
            let resid = (y as u8 as f64) - mu;
            for j in 0..p {
                grad[j] += row[j] * resid;
                for k in j..p {
                    xtwx[j][k] += w * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                xtwx[j][k] = xtwx[k][j];
            }
        }

        let step = solve_symmetric(xtwx, grad).ok_or_else(|| {
            Error::Estimation(
                "collinear design: the normal equations are singular; \
                 drop redundant covariates or use the frequency estimator"
                    .to_owned(),
            )
        })?;

        let mut max_step = 0.0f64;
        for j in 0..p {
            beta[j] += step[j];
            max_step = max_step.max(step[j].abs());
        }

        let max_beta = beta.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        if !max_beta.is_finite() || max_beta > SEPARATION_BOUND {
            return Err(Error::Estimation(
                "separation detected: coefficients diverged while the fit kept improving; \
                 use the frequency estimator or add smoothing"
                    .to_owned(),
            ));
        }

        if max_step < tol {
            converged = true;
            break;
        }
    }

    Ok(IrlsFit {
        beta,
        iterations,
        converged,
    })
}

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Solve `A x = b` for symmetric positive semi-definite `A` by Gaussian
/// elimination with partial pivoting; `None` when `A` is singular to working
/// precision.
// Index loops mirror the matrix algebra; iterator rewrites would obscure it.
#[allow(clippy::needless_range_loop)]
fn solve_symmetric(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    // Scale-aware singularity threshold.
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    let tiny = scale * 1e-12;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= tiny {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }

    let mut x = vec![0.0f64; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in (col + 1)..n {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
