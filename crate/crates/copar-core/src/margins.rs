//! Marginal distributions for the observed series: normal, skew-normal and
//! hyperbolic. Each margin offers density, CDF, quantile, probability
//! integral transform and maximum likelihood fitting.

use crate::error::{CoparError, Result};
use crate::optim::maximize_box;
use crate::special::{clamp_unit, integrate, norm_cdf, norm_quantile, owen_t};
use crate::stats::mean;
use std::fmt;
use std::str::FromStr;

/// Marginal family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginFamily {
    Normal,
    SkewNormal,
    Hyperbolic,
}

impl MarginFamily {
    /// Every supported margin family.
    pub fn all() -> [MarginFamily; 3] {
        [
            MarginFamily::Normal,
            MarginFamily::SkewNormal,
            MarginFamily::Hyperbolic,
        ]
    }

    /// Stable short name used in model files and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            MarginFamily::Normal => "norm",
            MarginFamily::SkewNormal => "snorm",
            MarginFamily::Hyperbolic => "hyp",
        }
    }

    /// Number of free parameters.
    pub fn n_params(self) -> usize {
        match self {
            MarginFamily::Normal => 2,
            MarginFamily::SkewNormal => 3,
            MarginFamily::Hyperbolic => 4,
        }
    }

    /// Parameter names in the order used by [`Margin::params`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            MarginFamily::Normal => &["mean", "sd"],
            MarginFamily::SkewNormal => &["location", "scale", "shape"],
            MarginFamily::Hyperbolic => &["mu", "delta", "alpha", "beta"],
        }
    }
}

impl fmt::Display for MarginFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarginFamily {
    type Err = CoparError;

    fn from_str(s: &str) -> Result<Self> {
        MarginFamily::all()
            .into_iter()
            .find(|fam| fam.name() == s)
            .ok_or_else(|| CoparError::parse(format!("unknown margin family: {s:?}")))
    }
}

/// A fitted or user-specified marginal distribution.
///
/// The hyperbolic variant carries two precomputed quantities (log of the
/// normalizing integral and the CDF at the mode) so that density and CDF
/// evaluations stay cheap; construct margins through [`Margin::from_params`]
/// or the family constructors so these stay consistent.
#[derive(Debug, Clone, PartialEq)]
pub enum Margin {
    Normal {
        mean: f64,
        sd: f64,
    },
    SkewNormal {
        location: f64,
        scale: f64,
        shape: f64,
    },
    Hyperbolic {
        mu: f64,
        delta: f64,
        alpha: f64,
        beta: f64,
        ln_norm: f64,
        cdf_at_mode: f64,
    },
}

/// Hyperbolic shape constraint: `|beta|` must stay below `alpha` by at least
/// this relative gap for the density to normalize robustly.
const HYP_BETA_GAP: f64 = 1e-6;

impl Margin {
    /// Normal margin with the given mean and standard deviation.
    pub fn normal(mean: f64, sd: f64) -> Result<Margin> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(CoparError::argument(format!(
                "normal margin needs finite mean and sd > 0, got mean={mean}, sd={sd}"
            )));
        }
        Ok(Margin::Normal { mean, sd })
    }

    /// Skew-normal margin with location, scale and shape.
    pub fn skew_normal(location: f64, scale: f64, shape: f64) -> Result<Margin> {
        if !(scale > 0.0 && scale.is_finite() && location.is_finite() && shape.is_finite()) {
            return Err(CoparError::argument(format!(
                "skew-normal margin needs finite parameters and scale > 0, got location={location}, scale={scale}, shape={shape}"
            )));
        }
        Ok(Margin::SkewNormal {
            location,
            scale,
            shape,
        })
    }

    /// Hyperbolic margin; requires `delta > 0`, `alpha > 0` and
    /// `|beta| < alpha`. Precomputes the normalizing constant by quadrature.
    pub fn hyperbolic(mu: f64, delta: f64, alpha: f64, beta: f64) -> Result<Margin> {
        if !(delta > 0.0 && alpha > 0.0 && mu.is_finite() && beta.is_finite())
            || !delta.is_finite()
            || !alpha.is_finite()
            || beta.abs() >= alpha * (1.0 - HYP_BETA_GAP)
        {
            return Err(CoparError::argument(format!(
                "hyperbolic margin needs delta > 0, alpha > 0 and |beta| < alpha, got mu={mu}, delta={delta}, alpha={alpha}, beta={beta}"
            )));
        }
        let (ln_norm, cdf_at_mode) = hyp_normalize(delta, alpha, beta);
        if !ln_norm.is_finite() || !cdf_at_mode.is_finite() {
            return Err(CoparError::numerical(
                "hyperbolic normalizing integral did not converge",
            ));
        }
        Ok(Margin::Hyperbolic {
            mu,
            delta,
            alpha,
            beta,
            ln_norm,
            cdf_at_mode,
        })
    }

    /// The family tag of this margin.
    pub fn family(&self) -> MarginFamily {
        match self {
            Margin::Normal { .. } => MarginFamily::Normal,
            Margin::SkewNormal { .. } => MarginFamily::SkewNormal,
            Margin::Hyperbolic { .. } => MarginFamily::Hyperbolic,
        }
    }

    /// Free parameters in the order of [`MarginFamily::param_names`].
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Margin::Normal { mean, sd } => vec![mean, sd],
            Margin::SkewNormal {
                location,
                scale,
                shape,
            } => vec![location, scale, shape],
            Margin::Hyperbolic {
                mu,
                delta,
                alpha,
                beta,
                ..
            } => vec![mu, delta, alpha, beta],
        }
    }

    /// Construct and validate a margin from a family tag and parameters.
    pub fn from_params(family: MarginFamily, params: &[f64]) -> Result<Margin> {
        let expect = family.n_params();
        if params.len() != expect {
            return Err(CoparError::argument(format!(
                "margin family {family} takes {expect} parameter(s), got {}",
                params.len()
            )));
        }
        match family {
            MarginFamily::Normal => Margin::normal(params[0], params[1]),
            MarginFamily::SkewNormal => Margin::skew_normal(params[0], params[1], params[2]),
            MarginFamily::Hyperbolic => {
                Margin::hyperbolic(params[0], params[1], params[2], params[3])
            }
        }
    }

    /// Natural log of the density.
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            Margin::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Margin::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                (2.0 / scale).ln() - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    + norm_logcdf(shape * z)
            }
            Margin::Hyperbolic {
                mu,
                delta,
                alpha,
                beta,
                ln_norm,
                ..
            } => {
                let y = x - mu;
                -alpha * (delta * delta + y * y).sqrt() + beta * y - ln_norm
            }
        }
    }

    /// Density.
    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Margin::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            Margin::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let z = (x - location) / scale;
                (norm_cdf(z) - 2.0 * owen_t(z, shape)).clamp(0.0, 1.0)
            }
            Margin::Hyperbolic {
                mu,
                delta,
                alpha,
                beta,
                ln_norm,
                cdf_at_mode,
            } => {
                let y = x - mu;
                let mode = beta * delta / (alpha * alpha - beta * beta).sqrt();
                let f = |t: f64| {
                    (-alpha * (delta * delta + t * t).sqrt() + beta * t - ln_norm).exp()
                };
                let c = if y >= mode {
                    cdf_at_mode + integrate(&f, mode, y, 1e-13)
                } else {
                    cdf_at_mode - integrate(&f, y, mode, 1e-13)
                };
                c.clamp(0.0, 1.0)
            }
        }
    }

    /// Probability integral transform: the CDF value clamped into the open
    /// working interval used by the copula layer.
    pub fn pit(&self, x: f64) -> f64 {
        clamp_unit(self.cdf(x))
    }

    /// Quantile function (inverse CDF) for `p` in the open unit interval.
    ///
    /// Exact for the normal margin; solved by safeguarded Newton iteration
    /// to `|F(x) - p| <= 1e-13` for the other families.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CoparError::argument(format!(
                "quantile level must lie strictly between 0 and 1, got {p}"
            )));
        }
        match *self {
            Margin::Normal { mean, sd } => Ok(mean + sd * norm_quantile(p)),
            Margin::SkewNormal {
                location, scale, ..
            } => {
                // Bracket around a normal-scale initial window, then expand.
                self.solve_quantile(p, location, 4.0 * scale)
            }
            Margin::Hyperbolic {
                mu,
                delta,
                alpha,
                beta,
                ..
            } => {
                let mode = mu + beta * delta / (alpha * alpha - beta * beta).sqrt();
                let width = 4.0 * delta + 8.0 / (alpha - beta.abs());
                self.solve_quantile(p, mode, width)
            }
        }
    }

    /// Safeguarded Newton on `F(x) - p` with an expanding initial bracket.
    fn solve_quantile(&self, p: f64, center: f64, width: f64) -> Result<f64> {
        let mut lo = center - width;
        let mut hi = center + width;
        for _ in 0..200 {
            if self.cdf(lo) < p {
                break;
            }
            lo -= width;
        }
        for _ in 0..200 {
            if self.cdf(hi) > p {
                break;
            }
            hi += width;
        }
        if !(self.cdf(lo) < p && self.cdf(hi) > p) {
            return Err(CoparError::numerical(
                "margin quantile could not be bracketed",
            ));
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let err = self.cdf(x) - p;
            if err.abs() <= 1e-13 {
                return Ok(x);
            }
            if err > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let mut next = if d > 0.0 { x - err / d } else { f64::NAN };
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-15 * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = self.family();
        write!(f, "{family}(")?;
        for (i, (name, value)) in family
            .param_names()
            .iter()
            .zip(self.params())
            .enumerate()
        {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}={value}")?;
        }
        write!(f, ")")
    }
}

/// `ln Phi(x)`, switching to the asymptotic expansion deep in the lower tail
/// where the CDF underflows.
fn norm_logcdf(x: f64) -> f64 {
    if x > -37.0 {
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (-1.0 / x2 + 3.0 / (x2 * x2)).ln_1p()
    }
}

/// Log normalizing constant of the unnormalized hyperbolic density
/// `exp(-alpha sqrt(delta^2 + y^2) + beta y)` and the normalized mass below
/// the mode.
fn hyp_normalize(delta: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let mode = beta * delta / (alpha * alpha - beta * beta).sqrt();
    let g = |y: f64| -alpha * (delta * delta + y * y).sqrt() + beta * y;
    let peak = g(mode);
    // Truncation points: the exponent decays at least linearly with rates
    // (alpha - beta) to the right and (alpha + beta) to the left.
    let right = mode + 50.0 / (alpha - beta) + 5.0 * delta;
    let left = mode - 50.0 / (alpha + beta) - 5.0 * delta;
    let lower = integrate(&|y: f64| (g(y) - peak).exp(), left, mode, 1e-13);
    let upper = integrate(&|y: f64| (g(y) - peak).exp(), mode, right, 1e-13);
    let ln_norm = peak + (lower + upper).ln();
    (ln_norm, lower / (lower + upper))
}

/// Result of fitting a margin by maximum likelihood.
#[derive(Debug, Clone)]
pub struct FittedMargin {
    /// The fitted margin.
    pub margin: Margin,
    /// Log likelihood at the fitted parameters.
    pub loglik: f64,
}

/// Sum of the log density over observations.
pub fn loglik(margin: &Margin, xs: &[f64]) -> f64 {
    xs.iter().map(|&x| margin.log_pdf(x)).sum()
}

/// Fit a margin family by maximum likelihood.
///
/// The normal fit is closed-form. The skew-normal and hyperbolic fits run a
/// box-constrained quasi-Newton search on standardized data and map the
/// result back through the families' closure under affine transformations.
/// The skew-normal search starts from both the moment-matched skewed guess
/// and the normal special case, keeping the better optimum, so its fitted
/// likelihood never falls below the normal fit.
pub fn fit(family: MarginFamily, xs: &[f64]) -> Result<FittedMargin> {
    let n = xs.len();
    if n < 3 {
        return Err(CoparError::argument(
            "margin fit requires at least three observations",
        ));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(CoparError::argument(
            "margin fit requires finite observations",
        ));
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    let s = var.sqrt();
    if !(s > 0.0) {
        return Err(CoparError::argument(
            "margin fit requires non-constant observations",
        ));
    }

    match family {
        MarginFamily::Normal => {
            let margin = Margin::normal(m, s)?;
            Ok(FittedMargin {
                loglik: loglik(&margin, xs),
                margin,
            })
        }
        MarginFamily::SkewNormal => {
            let zs: Vec<f64> = xs.iter().map(|&x| (x - m) / s).collect();
            let obj = |p: &[f64]| {
                match Margin::skew_normal(p[0], p[1], p[2]) {
                    Ok(margin) => loglik(&margin, &zs),
                    Err(_) => f64::NEG_INFINITY,
                }
            };
            let lower = [-10.0, 1e-3, -99.0];
            let upper = [10.0, 50.0, 99.0];
            // Moment-matched start from the sample skewness.
            let skew = zs.iter().map(|z| z * z * z).sum::<f64>() / n as f64;
            let moment_start = sn_moment_start(skew);
            // Include the normal special case so the skewed fit can never be
            // worse than the normal fit.
            let starts = [moment_start, [0.0, 1.0, 0.0]];
            let mut best: Option<(f64, Vec<f64>)> = None;
            for start in starts {
                if let Ok(r) = maximize_box(obj, &start, &lower, &upper) {
                    if r.value.is_finite()
                        && best.as_ref().map_or(true, |(v, _)| r.value > *v)
                    {
                        best = Some((r.value, r.x));
                    }
                }
            }
            let (_, p) = best.ok_or_else(|| {
                CoparError::fit("skew-normal likelihood maximization failed")
            })?;
            // Un-standardize: the family is closed under affine maps.
            let margin = Margin::skew_normal(m + s * p[0], s * p[1], p[2])?;
            Ok(FittedMargin {
                loglik: loglik(&margin, xs),
                margin,
            })
        }
        MarginFamily::Hyperbolic => {
            let zs: Vec<f64> = xs.iter().map(|&x| (x - m) / s).collect();
            let obj = |p: &[f64]| {
                match Margin::hyperbolic(p[0], p[1], p[2], p[3]) {
                    Ok(margin) => loglik(&margin, &zs),
                    Err(_) => f64::NEG_INFINITY,
                }
            };
            let lower = [-10.0, 1e-4, 1e-3, -99.0];
            let upper = [10.0, 50.0, 100.0, 99.0];
            let start = [0.0, 1.0, 2.0, 0.0];
            let r = maximize_box(obj, &start, &lower, &upper)
                .map_err(|e| CoparError::fit(format!("hyperbolic fit failed: {e}")))?;
            if !r.value.is_finite() {
                return Err(CoparError::fit(
                    "hyperbolic likelihood maximization diverged",
                ));
            }
            let p = r.x;
            let margin = Margin::hyperbolic(m + s * p[0], s * p[1], p[2] / s, p[3] / s)?;
            Ok(FittedMargin {
                loglik: loglik(&margin, xs),
                margin,
            })
        }
    }
}

/// Moment-matched skew-normal starting point on standardized data.
fn sn_moment_start(skew: f64) -> [f64; 3] {
    // Invert the skewness formula of the skew-normal, capping inside the
    // attainable range (|skewness| < 0.9953).
    let cap = 0.99;
    let g = skew.clamp(-cap, cap).abs().powf(2.0 / 3.0);
    let half_pi_term = ((4.0 - std::f64::consts::PI) / 2.0f64).powf(2.0 / 3.0);
    let delta2 = std::f64::consts::FRAC_PI_2 * g / (g + half_pi_term);
    let delta = delta2.sqrt().min(0.995) * skew.signum();
    let alpha = delta / (1.0 - delta * delta).sqrt();
    let omega2 = 1.0 / (1.0 - 2.0 * delta * delta / std::f64::consts::PI);
    let omega = omega2.sqrt();
    let xi = -omega * delta * (2.0 / std::f64::consts::PI).sqrt();
    [xi, omega, alpha]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sn_reference() -> Margin {
        Margin::skew_normal(0.0, 1.0, 3.0).unwrap()
    }

    fn hyp_reference() -> Margin {
        Margin::hyperbolic(0.0, 1.0, 2.0, 0.5).unwrap()
    }

    #[test]
    fn normal_margin_round_trips_exactly() {
        let margin = Margin::normal(1.5, 2.0).unwrap();
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let x = margin.quantile(p).unwrap();
            assert_abs_diff_eq!(margin.cdf(x), p, epsilon = 1e-13);
        }
    }

    #[test]
    fn skew_normal_reference_values() {
        // 30-digit arbitrary-precision references for shape 3.
        let margin = sn_reference();
        assert_abs_diff_eq!(margin.cdf(0.0), 0.10241638234956673, epsilon = 1e-11);
        assert_abs_diff_eq!(margin.cdf(1.0), 0.6827457365707978, epsilon = 1e-11);
        assert_abs_diff_eq!(margin.cdf(-0.5), 0.006369452573950074, epsilon = 1e-12);
        assert_abs_diff_eq!(margin.pdf(1.0), 0.4832881774288057, epsilon = 1e-12);
    }

    #[test]
    fn hyperbolic_reference_values() {
        let margin = hyp_reference();
        // Normalizing constant cross-checked against the Bessel closed form.
        if let Margin::Hyperbolic { ln_norm, .. } = margin {
            assert_abs_diff_eq!(ln_norm, -1.157814300289985, epsilon = 1e-11);
        } else {
            unreachable!();
        }
        assert_abs_diff_eq!(margin.pdf(0.3), 0.45829279831889592, epsilon = 1e-11);
        assert_abs_diff_eq!(margin.cdf(0.3), 0.45797548503022636, epsilon = 1e-10);
    }

    #[test]
    fn densities_integrate_to_one() {
        for margin in [sn_reference(), hyp_reference()] {
            let mass = integrate(&|x| margin.pdf(x), -30.0, 30.0, 1e-11);
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cdf_matches_pdf_derivative() {
        let eps = 1e-6;
        for margin in [
            Margin::normal(0.5, 1.3).unwrap(),
            sn_reference(),
            hyp_reference(),
        ] {
            for &x in &[-2.0, -0.7, 0.0, 0.4, 1.1, 2.5] {
                let fd = (margin.cdf(x + eps) - margin.cdf(x - eps)) / (2.0 * eps);
                assert!(
                    (fd - margin.pdf(x)).abs() < 1e-6,
                    "{margin} at {x}: fd {fd}, pdf {}",
                    margin.pdf(x)
                );
            }
        }
    }

    #[test]
    fn quantiles_round_trip() {
        for margin in [sn_reference(), hyp_reference()] {
            for &p in &[0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999] {
                let x = margin.quantile(p).unwrap();
                assert_abs_diff_eq!(margin.cdf(x), p, epsilon = 1e-12);
            }
        }
        assert!(sn_reference().quantile(0.0).is_err());
        assert!(sn_reference().quantile(1.0).is_err());
    }

    #[test]
    fn normal_fit_matches_closed_form() {
        let xs = [1.0, 2.0, 4.0, 4.0, 5.0, 8.0];
        let fitted = fit(MarginFamily::Normal, &xs).unwrap();
        let p = fitted.margin.params();
        assert_abs_diff_eq!(p[0], 4.0, epsilon = 1e-12);
        let var = xs.iter().map(|x| (x - 4.0) * (x - 4.0)).sum::<f64>() / 6.0;
        assert_abs_diff_eq!(p[1], var.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fitted.loglik, loglik(&fitted.margin, &xs), epsilon = 1e-10);
    }

    #[test]
    fn skew_normal_fit_recovers_shape_and_beats_normal() {
        // Draw from a skew-normal via its stochastic representation.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (xi, omega, alpha) = (1.0, 2.0, 3.0);
        let delta = alpha / (1.0f64 + alpha * alpha).sqrt();
        let xs: Vec<f64> = (0..3000)
            .map(|_| {
                let u0 = norm_quantile(rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12));
                let u1 = norm_quantile(rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12));
                xi + omega * (delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1)
            })
            .collect();
        let sn = fit(MarginFamily::SkewNormal, &xs).unwrap();
        let normal = fit(MarginFamily::Normal, &xs).unwrap();
        assert!(sn.loglik >= normal.loglik - 1e-6);
        let p = sn.margin.params();
        assert!((p[2] - alpha).abs() < 1.5, "shape estimate {}", p[2]);
        assert!((p[0] - xi).abs() < 0.5, "location estimate {}", p[0]);
    }

    #[test]
    fn hyperbolic_fit_recovers_location_and_improves_on_start() {
        let truth = hyp_reference();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..2000)
            .map(|_| {
                truth
                    .quantile(rng.gen::<f64>().clamp(1e-9, 1.0 - 1e-9))
                    .unwrap()
            })
            .collect();
        let fitted = fit(MarginFamily::Hyperbolic, &xs).unwrap();
        // The asymmetry parameter ratio governs the tail skew; check sign
        // and rough magnitude rather than exact recovery (flat likelihood).
        let p = fitted.margin.params();
        assert!(p[3] > 0.0, "beta estimate {}", p[3]);
        let pit_mean = xs.iter().map(|&x| fitted.margin.pit(x)).sum::<f64>() / 2000.0;
        assert!((pit_mean - 0.5).abs() < 0.03, "pit mean {pit_mean}");
    }

    #[test]
    fn pit_is_uniform_under_truth() {
        let margin = Margin::normal(-2.0, 0.5).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 4000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = margin
                .quantile(rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12))
                .unwrap();
            let u = margin.pit(x);
            sum += u;
            sum_sq += u * u;
        }
        let mean_u = sum / n as f64;
        let var_u = sum_sq / n as f64 - mean_u * mean_u;
        assert!((mean_u - 0.5).abs() < 0.02);
        assert!((var_u - 1.0 / 12.0).abs() < 0.01);
    }

    #[test]
    fn constructors_validate() {
        assert!(Margin::normal(0.0, 0.0).is_err());
        assert!(Margin::normal(f64::NAN, 1.0).is_err());
        assert!(Margin::skew_normal(0.0, -1.0, 2.0).is_err());
        assert!(Margin::hyperbolic(0.0, 1.0, 2.0, 2.0).is_err());
        assert!(Margin::hyperbolic(0.0, 1.0, 2.0, -2.5).is_err());
        assert!(Margin::hyperbolic(0.0, 0.0, 2.0, 0.5).is_err());
        assert!(Margin::from_params(MarginFamily::Normal, &[0.0]).is_err());
        assert!(Margin::from_params(MarginFamily::Hyperbolic, &[0.0, 1.0, 2.0, 0.5]).is_ok());
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(fit(MarginFamily::Normal, &[1.0, 2.0]).is_err());
        assert!(fit(MarginFamily::Normal, &[3.0, 3.0, 3.0]).is_err());
        assert!(fit(MarginFamily::Normal, &[1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn margin_names_round_trip() {
        for fam in MarginFamily::all() {
            let parsed: MarginFamily = fam.name().parse().unwrap();
            assert_eq!(parsed, fam);
        }
        assert!("normal".parse::<MarginFamily>().is_err());
    }
}
