//! Rank statistics, information criteria and forecast-accuracy metrics.

use crate::error::{CoparError, Result};
use crate::special::norm_cdf;

/// Tie-corrected sample Kendall's tau (tau-b) between two equal-length slices.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n != ys.len() {
        return Err(CoparError::argument(
            "kendall_tau requires slices of equal length",
        ));
    }
    if n < 2 {
        return Err(CoparError::argument(
            "kendall_tau requires at least two observations",
        ));
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            if dx == 0.0 && dy == 0.0 {
                ties_x += 1;
                ties_y += 1;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denom = ((n0 - ties_x as f64) * (n0 - ties_y as f64)).sqrt();
    if denom == 0.0 {
        return Err(CoparError::numerical(
            "kendall_tau is undefined when one input is constant",
        ));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Two-sided p-value of the asymptotic normal test of `tau = 0` given the
/// sample value and the number of observations.
pub fn kendall_independence_pvalue(tau: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(CoparError::argument(
            "independence test requires at least three observations",
        ));
    }
    let nf = n as f64;
    let z = tau.abs() * (9.0 * nf * (nf - 1.0) / (2.0 * (2.0 * nf + 5.0))).sqrt();
    Ok(2.0 * (1.0 - norm_cdf(z)))
}

/// Akaike information criterion.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

/// Bayesian (Schwarz) information criterion.
pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    -2.0 * loglik + (n_obs as f64).ln() * n_params as f64
}

/// Hannan-Quinn criterion; requires `ln(ln(n_obs))` to be defined, i.e. more
/// observations than `e`.
pub fn hqc(loglik: f64, n_params: usize, n_obs: usize) -> Result<f64> {
    let nf = n_obs as f64;
    if nf <= std::f64::consts::E {
        return Err(CoparError::argument(
            "Hannan-Quinn criterion needs the sample size to exceed e",
        ));
    }
    Ok(-2.0 * loglik + 2.0 * nf.ln().ln() * n_params as f64)
}

/// Root mean squared error between forecasts and realized values.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(CoparError::argument(
            "rmse requires slices of equal length",
        ));
    }
    if actual.is_empty() {
        return Err(CoparError::argument("rmse requires at least one value"));
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Mean interval score of central `(1 - alpha)` prediction intervals.
///
/// Per observation the score is the interval width plus `2/alpha` times the
/// distance by which the realized value escapes the interval.
pub fn mean_interval_score(
    lower: &[f64],
    upper: &[f64],
    actual: &[f64],
    alpha: f64,
) -> Result<f64> {
    let n = actual.len();
    if lower.len() != n || upper.len() != n {
        return Err(CoparError::argument(
            "interval score requires equal-length lower, upper and actual slices",
        ));
    }
    if n == 0 {
        return Err(CoparError::argument(
            "interval score requires at least one value",
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoparError::argument(
            "interval score requires alpha in (0,1)",
        ));
    }
    let mut total = 0.0;
    for i in 0..n {
        let (l, u, x) = (lower[i], upper[i], actual[i]);
        if l > u {
            return Err(CoparError::argument(format!(
                "interval score: lower bound {l} exceeds upper bound {u} at index {i}"
            )));
        }
        let mut s = u - l;
        if x < l {
            s += 2.0 / alpha * (l - x);
        }
        if x > u {
            s += 2.0 / alpha * (x - u);
        }
        total += s;
    }
    Ok(total / n as f64)
}

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition): `h = (n-1) p`, interpolate between
/// `floor(h)` and the next order statistic.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(CoparError::argument(
            "quantile of an empty sample is undefined",
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CoparError::argument("quantile level must be in [0,1]"));
    }
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Arithmetic mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
