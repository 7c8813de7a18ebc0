//! Box-constrained quasi-Newton maximizer used by copula and margin fitting.
//!
//! Gradients are central finite differences (one-sided at an active bound),
//! the search direction comes from a BFGS approximation of the inverse
//! Hessian, trial points are projected onto the box, and step lengths are
//! chosen by Armijo backtracking. Accepted objective values are recorded so
//! callers can assert the ascent is monotone.

use crate::error::{CoparError, Result};

/// Outcome of a box-constrained maximization.
#[derive(Debug, Clone)]
pub struct MaximizeResult {
    /// Best parameter vector found (always inside the box).
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub value: f64,
    /// Objective values of the accepted iterates, starting with the value at
    /// the initial point. Nondecreasing by construction.
    pub history: Vec<f64>,
    /// Whether the projected-gradient norm dropped below tolerance (rather
    /// than the iteration limit being hit).
    pub converged: bool,
}

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-8;
const ARMIJO_C1: f64 = 1e-4;

/// Maximize `f` over the box `[lower[i], upper[i]]` starting from `x0`.
///
/// Returns an error when the bounds are inconsistent or the objective is not
/// finite at the starting point; callers treat that as a failed fit and fall
/// back to their moment-style initializer.
pub fn maximize_box<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<MaximizeResult> {
    let d = x0.len();
    if lower.len() != d || upper.len() != d {
        return Err(CoparError::argument(
            "bounds must have the same dimension as the starting point",
        ));
    }
    for i in 0..d {
        if !(lower[i] < upper[i]) {
            return Err(CoparError::argument(format!(
                "invalid box for coordinate {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
    }
    let project = |x: &mut [f64]| {
        for i in 0..d {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut x: Vec<f64> = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(CoparError::fit(
            "objective is not finite at the starting point",
        ));
    }

    let mut history = vec![fx];
    let mut h_inv = identity(d); // inverse-Hessian approximation for -f
    let mut grad = fd_gradient(&f, &x, lower, upper);
    let mut best_x = x.clone();
    let mut best_f = fx;
    let mut converged = false;

    for _ in 0..MAX_ITER {
        if projected_grad_norm(&x, &grad, lower, upper) < GRAD_TOL {
            converged = true;
            break;
        }
        // BFGS direction for minimizing -f: p = H * grad(f).
        let mut p = mat_vec(&h_inv, &grad);
        // Guard against a non-ascent direction (can happen after a bad update).
        if dot(&p, &grad) <= 0.0 {
            h_inv = identity(d);
            p = grad.clone();
        }

        // Armijo backtracking on the projected path.
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..d).map(|i| x[i] + alpha * p[i]).collect();
            project(&mut trial);
            let step: Vec<f64> = (0..d).map(|i| trial[i] - x[i]).collect();
            if step.iter().all(|s| s.abs() < 1e-300) {
                break;
            }
            let ft = f(&trial);
            if ft.is_finite() && ft >= fx + ARMIJO_C1 * dot(&grad, &step) {
                x_new = trial;
                f_new = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No admissible step; the projected gradient test did not fire,
            // so stop at the best point seen so far.
            break;
        }

        let grad_new = fd_gradient(&f, &x_new, lower, upper);
        let s: Vec<f64> = (0..d).map(|i| x_new[i] - x[i]).collect();
        // y for the minimized objective -f.
        let y: Vec<f64> = (0..d).map(|i| grad[i] - grad_new[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            bfgs_update(&mut h_inv, &s, &y, sy);
        } else {
            h_inv = identity(d);
        }

        x = x_new;
        fx = f_new;
        grad = grad_new;
        history.push(fx);
        if fx > best_f {
            best_f = fx;
            best_x = x.clone();
        }
    }

    if !converged && projected_grad_norm(&x, &grad, lower, upper) < GRAD_TOL {
        converged = true;
    }
    Ok(MaximizeResult {
        x: best_x,
        value: best_f,
        history,
        converged,
    })
}

/// Central finite-difference gradient, switching to one-sided differences at
/// coordinates whose stencil would leave the box.
fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut w = x.to_vec();
    for i in 0..d {
        let h = 1e-6 * x[i].abs().max(1.0);
        let up_ok = x[i] + h <= upper[i];
        let dn_ok = x[i] - h >= lower[i];
        g[i] = if up_ok && dn_ok {
            w[i] = x[i] + h;
            let fp = f(&w);
            w[i] = x[i] - h;
            let fm = f(&w);
            w[i] = x[i];
            (fp - fm) / (2.0 * h)
        } else if up_ok {
            w[i] = x[i] + h;
            let fp = f(&w);
            w[i] = x[i];
            (fp - f(&w)) / h
        } else if dn_ok {
            w[i] = x[i] - h;
            let fm = f(&w);
            w[i] = x[i];
            (f(&w) - fm) / h
        } else {
            0.0
        };
        if !g[i].is_finite() {
            g[i] = 0.0;
        }
    }
    g
}

/// Infinity norm of the gradient with components pointing out of the box at
/// an active bound zeroed out.
fn projected_grad_norm(x: &[f64], grad: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let at_lower = x[i] <= lower[i] + 1e-12 && grad[i] < 0.0;
        let at_upper = x[i] >= upper[i] - 1e-12 && grad[i] > 0.0;
        if !(at_lower || at_upper) {
            norm = norm.max(grad[i].abs());
        }
    }
    norm
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard BFGS inverse-Hessian update
/// `H <- (I - s y'/sy) H (I - y s'/sy) + s s'/sy`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy)
                - (hy[i] * s[j] + s[i] * hy[j]) / sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn maximizes_concave_quadratic() {
        let f = |x: &[f64]| -(x[0] - 3.0) * (x[0] - 3.0);
        let r = maximize_box(f, &[0.0], &[-10.0], &[10.0]).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.x[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn respects_active_bound() {
        let f = |x: &[f64]| -(x[0] - 3.0) * (x[0] - 3.0);
        let r = maximize_box(f, &[0.0], &[-10.0], &[2.0]).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.x[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn solves_two_dimensional_banana() {
        // Negated Rosenbrock; maximum at (1, 1).
        let f = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            -(a * a + 100.0 * b * b)
        };
        let r = maximize_box(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0]).unwrap();
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn history_is_monotone_nondecreasing() {
        let f = |x: &[f64]| -(x[0] * x[0] + 0.5 * x[1] * x[1] + x[0] * x[1]).cos() - x[0] * x[0];
        let r = maximize_box(f, &[2.0, -1.0], &[-4.0, -4.0], &[4.0, 4.0]).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "history must not decrease: {w:?}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let f = |x: &[f64]| -x[0] * x[0];
        assert!(maximize_box(f, &[0.0], &[1.0], &[-1.0]).is_err());
        assert!(maximize_box(f, &[0.0], &[0.0, 1.0], &[1.0]).is_err());
        let nan = |_: &[f64]| f64::NAN;
        assert!(maximize_box(nan, &[0.0], &[-1.0], &[1.0]).is_err());
    }
}
