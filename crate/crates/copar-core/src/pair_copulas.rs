//! Bivariate pair-copula families: CDF, density, conditional distribution
//! (h-function) and its inverse, Kendall's tau, sampling, and maximum
//! likelihood fitting with data-driven family selection.
//!
//! Ten families are supported: independence, Gaussian, Student t, Clayton,
//! Gumbel, Frank, Joe, and the 180-degree rotations (survival versions) of
//! the three tail-asymmetric families. All supported copulas are
//! exchangeable, so the density and CDF are symmetric in their arguments;
//! the h-function is always the conditional CDF of the first argument given
//! the second. Inputs are clamped to `[1e-10, 1 - 1e-10]` and the heavy-tail
//! parameter regions are evaluated in log space so that extreme parameter
//! values (e.g. a Clayton parameter of 28 at an argument of 1e-10) stay
//! finite.

use crate::error::{CoparError, Result};
use crate::optim::maximize_box;
use crate::special::{
    clamp_unit, integrate, ln_gamma, norm_cdf, norm_quantile, solve_bracketed, std_bvn_cdf,
    student_t_cdf, student_t_quantile,
};
use crate::stats::{kendall_independence_pvalue, kendall_tau};
use rand::Rng;
use std::fmt;
use std::str::FromStr;

/// Significance level of the rank-based independence pretest used during
/// family selection.
pub const INDEPENDENCE_LEVEL: f64 = 0.05;

/// Largest admissible absolute correlation parameter.
pub const RHO_MAX: f64 = 0.999_999;
const NU_MIN: f64 = 2.0;
const NU_MAX: f64 = 30.0;
const CLAYTON_MAX: f64 = 28.0;
const GUMBEL_MAX: f64 = 17.0;
const JOE_MAX: f64 = 17.0;
const FRANK_ABS_MAX: f64 = 35.0;
/// Frank parameters closer to zero than this are rejected; use the
/// independence copula instead.
const FRANK_ABS_MIN: f64 = 1e-5;
/// Lower end of the optimizer box for parameters whose legal range is open
/// at an independence limit.
const BOX_EPS: f64 = 1e-4;

/// Copula family tag. The declaration order doubles as the tie-break order
/// during selection (earlier wins when fit quality and parameter counts are
/// equal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Independence,
    Gaussian,
    StudentT,
    Clayton,
    Gumbel,
    Frank,
    Joe,
    SurvivalClayton,
    SurvivalGumbel,
    SurvivalJoe,
}

impl Family {
    /// Every supported family, in declaration order.
    pub fn all() -> [Family; 10] {
        [
            Family::Independence,
            Family::Gaussian,
            Family::StudentT,
            Family::Clayton,
            Family::Gumbel,
            Family::Frank,
            Family::Joe,
            Family::SurvivalClayton,
            Family::SurvivalGumbel,
            Family::SurvivalJoe,
        ]
    }

    /// Stable lowercase name used in model files and CLI output.
    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::StudentT => "student-t",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
            Family::Joe => "joe",
            Family::SurvivalClayton => "survival-clayton",
            Family::SurvivalGumbel => "survival-gumbel",
            Family::SurvivalJoe => "survival-joe",
        }
    }

    /// Number of free parameters.
    pub fn n_params(self) -> usize {
        match self {
            Family::Independence => 0,
            Family::StudentT => 2,
            _ => 1,
        }
    }

    /// Names of the parameters, in the order used by [`PairCopula::params`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Independence => &[],
            Family::Gaussian => &["rho"],
            Family::StudentT => &["rho", "nu"],
            _ => &["theta"],
        }
    }

    /// Starting copula for likelihood maximization, obtained by inverting
    /// the family's Kendall tau map at the sample value (clamped into the
    /// admissible range).
    pub fn start_from_tau(self, tau: f64) -> PairCopula {
        let rho = (std::f64::consts::FRAC_PI_2 * tau).sin().clamp(-RHO_MAX, RHO_MAX);
        match self {
            Family::Independence => PairCopula::Independence,
            Family::Gaussian => PairCopula::Gaussian { rho },
            Family::StudentT => PairCopula::StudentT { rho, nu: 16.0 },
            Family::Clayton | Family::SurvivalClayton => {
                let theta = if tau > 0.0 && tau < 1.0 {
                    (2.0 * tau / (1.0 - tau)).clamp(BOX_EPS, CLAYTON_MAX)
                } else if tau >= 1.0 {
                    CLAYTON_MAX
                } else {
                    BOX_EPS
                };
                if self == Family::Clayton {
                    PairCopula::Clayton { theta }
                } else {
                    PairCopula::SurvivalClayton { theta }
                }
            }
            Family::Gumbel | Family::SurvivalGumbel => {
                let theta = if tau > 0.0 && tau < 1.0 {
                    (1.0 / (1.0 - tau)).clamp(1.0, GUMBEL_MAX)
                } else if tau >= 1.0 {
                    GUMBEL_MAX
                } else {
                    1.0
                };
                if self == Family::Gumbel {
                    PairCopula::Gumbel { theta }
                } else {
                    PairCopula::SurvivalGumbel { theta }
                }
            }
            Family::Frank => PairCopula::Frank {
                theta: frank_theta_from_tau(tau),
            },
            Family::Joe | Family::SurvivalJoe => {
                let theta = joe_theta_from_tau(tau);
                if self == Family::Joe {
                    PairCopula::Joe { theta }
                } else {
                    PairCopula::SurvivalJoe { theta }
                }
            }
        }
    }

    /// Optimizer box for this family's parameter vector. The Frank box sits
    /// on one side of zero, chosen by the sign of the sample tau.
    pub(crate) fn param_box(self, tau: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Family::Independence => (vec![], vec![]),
            Family::Gaussian => (vec![-RHO_MAX], vec![RHO_MAX]),
            Family::StudentT => (vec![-RHO_MAX, NU_MIN], vec![RHO_MAX, NU_MAX]),
            Family::Clayton | Family::SurvivalClayton => (vec![BOX_EPS], vec![CLAYTON_MAX]),
            Family::Gumbel | Family::SurvivalGumbel => (vec![1.0], vec![GUMBEL_MAX]),
            Family::Frank => {
                if tau >= 0.0 {
                    (vec![BOX_EPS], vec![FRANK_ABS_MAX])
                } else {
                    (vec![-FRANK_ABS_MAX], vec![-BOX_EPS])
                }
            }
            Family::Joe | Family::SurvivalJoe => (vec![1.0], vec![JOE_MAX]),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = CoparError;

    fn from_str(s: &str) -> Result<Self> {
        Family::all()
            .into_iter()
            .find(|fam| fam.name() == s)
            .ok_or_else(|| CoparError::parse(format!("unknown copula family: {s:?}")))
    }
}

/// A bivariate copula with fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairCopula {
    Independence,
    Gaussian { rho: f64 },
    StudentT { rho: f64, nu: f64 },
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    Frank { theta: f64 },
    Joe { theta: f64 },
    SurvivalClayton { theta: f64 },
    SurvivalGumbel { theta: f64 },
    SurvivalJoe { theta: f64 },
}

impl PairCopula {
    /// The family tag of this copula.
    pub fn family(&self) -> Family {
        match self {
            PairCopula::Independence => Family::Independence,
            PairCopula::Gaussian { .. } => Family::Gaussian,
            PairCopula::StudentT { .. } => Family::StudentT,
            PairCopula::Clayton { .. } => Family::Clayton,
            PairCopula::Gumbel { .. } => Family::Gumbel,
            PairCopula::Frank { .. } => Family::Frank,
            PairCopula::Joe { .. } => Family::Joe,
            PairCopula::SurvivalClayton { .. } => Family::SurvivalClayton,
            PairCopula::SurvivalGumbel { .. } => Family::SurvivalGumbel,
            PairCopula::SurvivalJoe { .. } => Family::SurvivalJoe,
        }
    }

    /// Parameter vector in the order given by [`Family::param_names`].
    pub fn params(&self) -> Vec<f64> {
        match *self {
            PairCopula::Independence => vec![],
            PairCopula::Gaussian { rho } => vec![rho],
            PairCopula::StudentT { rho, nu } => vec![rho, nu],
            PairCopula::Clayton { theta }
            | PairCopula::Gumbel { theta }
            | PairCopula::Frank { theta }
            | PairCopula::Joe { theta }
            | PairCopula::SurvivalClayton { theta }
            | PairCopula::SurvivalGumbel { theta }
            | PairCopula::SurvivalJoe { theta } => vec![theta],
        }
    }

    /// Number of free parameters.
    pub fn n_params(&self) -> usize {
        self.family().n_params()
    }

    /// Construct a copula from a family tag and parameter vector, validating
    /// the parameter ranges.
    pub fn from_params(family: Family, params: &[f64]) -> Result<PairCopula> {
        let expect = family.n_params();
        if params.len() != expect {
            return Err(CoparError::argument(format!(
                "family {family} takes {expect} parameter(s), got {}",
                params.len()
            )));
        }
        let check_rho = |rho: f64| -> Result<f64> {
            if rho.is_finite() && rho.abs() <= RHO_MAX {
                Ok(rho)
            } else {
                Err(CoparError::argument(format!(
                    "correlation parameter must satisfy |rho| <= {RHO_MAX}, got {rho}"
                )))
            }
        };
        let check_range = |theta: f64, lo: f64, hi: f64| -> Result<f64> {
            if theta.is_finite() && theta >= lo && theta <= hi {
                Ok(theta)
            } else {
                Err(CoparError::argument(format!(
                    "parameter for {family} must lie in [{lo}, {hi}], got {theta}"
                )))
            }
        };
        Ok(match family {
            Family::Independence => PairCopula::Independence,
            Family::Gaussian => PairCopula::Gaussian {
                rho: check_rho(params[0])?,
            },
            Family::StudentT => PairCopula::StudentT {
                rho: check_rho(params[0])?,
                nu: check_range(params[1], NU_MIN, NU_MAX)?,
            },
            Family::Clayton => PairCopula::Clayton {
                theta: check_open_low(family, params[0], 0.0, CLAYTON_MAX)?,
            },
            Family::Gumbel => PairCopula::Gumbel {
                theta: check_range(params[0], 1.0, GUMBEL_MAX)?,
            },
            Family::Frank => {
                let theta = params[0];
                if theta.is_finite()
                    && theta.abs() >= FRANK_ABS_MIN
                    && theta.abs() <= FRANK_ABS_MAX
                {
                    PairCopula::Frank { theta }
                } else {
                    return Err(CoparError::argument(format!(
                        "Frank parameter must satisfy {FRANK_ABS_MIN} <= |theta| <= {FRANK_ABS_MAX}, got {theta}"
                    )));
                }
            }
            Family::Joe => PairCopula::Joe {
                theta: check_range(params[0], 1.0, JOE_MAX)?,
            },
            Family::SurvivalClayton => PairCopula::SurvivalClayton {
                theta: check_open_low(family, params[0], 0.0, CLAYTON_MAX)?,
            },
            Family::SurvivalGumbel => PairCopula::SurvivalGumbel {
                theta: check_range(params[0], 1.0, GUMBEL_MAX)?,
            },
            Family::SurvivalJoe => PairCopula::SurvivalJoe {
                theta: check_range(params[0], 1.0, JOE_MAX)?,
            },
        })
    }

    /// For a survival (180-degree rotated) copula, the underlying base
    /// copula; `None` otherwise.
    fn survival_base(&self) -> Option<PairCopula> {
        match *self {
            PairCopula::SurvivalClayton { theta } => Some(PairCopula::Clayton { theta }),
            PairCopula::SurvivalGumbel { theta } => Some(PairCopula::Gumbel { theta }),
            PairCopula::SurvivalJoe { theta } => Some(PairCopula::Joe { theta }),
            _ => None,
        }
    }

    /// Copula CDF `C(u, v)`.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let u = clamp_unit(u);
        let v = clamp_unit(v);
        if let Some(base) = self.survival_base() {
            return (u + v - 1.0 + base.cdf(1.0 - u, 1.0 - v)).max(0.0);
        }
        match *self {
            PairCopula::Independence => u * v,
            PairCopula::Gaussian { rho } => {
                std_bvn_cdf(norm_quantile(u), norm_quantile(v), rho)
            }
            PairCopula::StudentT { rho, nu } => {
                // No convenient closed form: integrate the conditional CDF,
                // C(u, v) = int_0^v h(u | w) dw.
                integrate(&|w| t_h(u, clamp_unit(w), rho, nu), 0.0, v, 1e-12)
            }
            PairCopula::Clayton { theta } => (-clayton_lse(u, v, theta) / theta).exp(),
            PairCopula::Gumbel { theta } => {
                let ln_s = gumbel_ln_s(u, v, theta);
                (-(ln_s / theta).exp()).exp()
            }
            PairCopula::Frank { theta } => {
                let n = frank_n(u, v, theta);
                let d = -f64::exp_m1(-theta);
                -(n / d).ln() / theta
            }
            PairCopula::Joe { theta } => {
                let ln_s = joe_ln_s(u, v, theta);
                1.0 - (ln_s / theta).exp()
            }
            _ => unreachable!("survival families handled above"),
        }
    }

    /// Natural log of the copula density `c(u, v)`.
    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        let u = clamp_unit(u);
        let v = clamp_unit(v);
        if let Some(base) = self.survival_base() {
            return base.log_pdf(1.0 - u, 1.0 - v);
        }
        match *self {
            PairCopula::Independence => 0.0,
            PairCopula::Gaussian { rho } => {
                let x = norm_quantile(u);
                let y = norm_quantile(v);
                gaussian_log_pdf_z(x, y, rho)
            }
            PairCopula::StudentT { rho, nu } => {
                let x = student_t_quantile(u, nu);
                let y = student_t_quantile(v, nu);
                let r2 = 1.0 - rho * rho;
                let q = (x * x - 2.0 * rho * x * y + y * y) / (nu * r2);
                ln_gamma(0.5 * (nu + 2.0)) + ln_gamma(0.5 * nu)
                    - 2.0 * ln_gamma(0.5 * (nu + 1.0))
                    - 0.5 * r2.ln()
                    - 0.5 * (nu + 2.0) * q.ln_1p()
                    + 0.5 * (nu + 1.0) * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
            }
            PairCopula::Clayton { theta } => {
                let lse = clayton_lse(u, v, theta);
                (1.0 + theta).ln() - (theta + 1.0) * (u.ln() + v.ln())
                    - (2.0 + 1.0 / theta) * lse
            }
            PairCopula::Gumbel { theta } => {
                let lx = (-u.ln()).ln();
                let ly = (-v.ln()).ln();
                let ln_s = gumbel_ln_s(u, v, theta);
                let s1t = (ln_s / theta).exp();
                -s1t - u.ln() - v.ln()
                    + (theta - 1.0) * (lx + ly)
                    + (1.0 / theta - 2.0) * ln_s
                    + (s1t + theta - 1.0).ln()
            }
            PairCopula::Frank { theta } => {
                let n = frank_n(u, v, theta);
                let d = -f64::exp_m1(-theta);
                // theta and d always share a sign, so theta * d > 0.
                (theta * d).ln() - theta * (u + v) - 2.0 * n.abs().ln()
            }
            PairCopula::Joe { theta } => {
                let ln_s = joe_ln_s(u, v, theta);
                let last = if theta > 1.0 {
                    (theta - 1.0 + ln_s.exp()).ln()
                } else {
                    ln_s
                };
                (1.0 / theta - 2.0) * ln_s
                    + (theta - 1.0) * ((-u).ln_1p() + (-v).ln_1p())
                    + last
            }
            _ => unreachable!("survival families handled above"),
        }
    }

    /// Copula density `c(u, v)`.
    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.log_pdf(u, v).exp()
    }

    /// Conditional CDF `h(u | v) = P(U <= u | V = v)`.
    pub fn h(&self, u: f64, v: f64) -> f64 {
        self.h_unclamped(u, v).clamp(0.0, 1.0)
    }

    fn h_unclamped(&self, u: f64, v: f64) -> f64 {
        let u = clamp_unit(u);
        let v = clamp_unit(v);
        if let Some(base) = self.survival_base() {
            return 1.0 - base.h(1.0 - u, 1.0 - v);
        }
        match *self {
            PairCopula::Independence => u,
            PairCopula::Gaussian { rho } => {
                let x = norm_quantile(u);
                let y = norm_quantile(v);
                norm_cdf((x - rho * y) / (1.0 - rho * rho).sqrt())
            }
            PairCopula::StudentT { rho, nu } => t_h(u, v, rho, nu),
            PairCopula::Clayton { theta } => {
                let lse = clayton_lse(u, v, theta);
                (-(theta + 1.0) * v.ln() - (1.0 + 1.0 / theta) * lse).exp()
            }
            PairCopula::Gumbel { theta } => {
                let ly = (-v.ln()).ln();
                let ln_s = gumbel_ln_s(u, v, theta);
                let s1t = (ln_s / theta).exp();
                (-s1t + (theta - 1.0) * ly + (1.0 / theta - 1.0) * ln_s - v.ln()).exp()
            }
            PairCopula::Frank { theta } => {
                let n = frank_n(u, v, theta);
                (-theta * v).exp() * (-f64::exp_m1(-theta * u)) / n
            }
            PairCopula::Joe { theta } => {
                let la = theta * (-u).ln_1p();
                let one_a = -f64::exp_m1(la);
                let ln_s = joe_ln_s(u, v, theta);
                ((1.0 / theta - 1.0) * ln_s + one_a.ln() + (theta - 1.0) * (-v).ln_1p()).exp()
            }
            _ => unreachable!("survival families handled above"),
        }
    }

    /// Inverse of the h-function in its first argument: the `p` quantile of
    /// `U` given `V = v`.
    pub fn h_inverse(&self, p: f64, v: f64) -> f64 {
        self.h_inverse_unclamped(p, v).clamp(0.0, 1.0)
    }

    fn h_inverse_unclamped(&self, p: f64, v: f64) -> f64 {
        let p = clamp_unit(p);
        let v = clamp_unit(v);
        if let Some(base) = self.survival_base() {
            return 1.0 - base.h_inverse(1.0 - p, 1.0 - v);
        }
        match *self {
            PairCopula::Independence => p,
            PairCopula::Gaussian { rho } => {
                let y = norm_quantile(v);
                norm_cdf(norm_quantile(p) * (1.0 - rho * rho).sqrt() + rho * y)
            }
            PairCopula::StudentT { rho, nu } => {
                let y = student_t_quantile(v, nu);
                let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                let x = student_t_quantile(p, nu + 1.0) * scale + rho * y;
                student_t_cdf(x, nu)
            }
            PairCopula::Clayton { theta } => {
                // u = [ (p v^(1+theta))^(-theta/(1+theta)) + 1 - v^-theta ]^(-1/theta),
                // evaluated in log space.
                let a = -(theta / (theta + 1.0)) * p.ln() - theta * v.ln();
                let b = -theta * v.ln();
                let ln_s = a + ((-a).exp() - (b - a).exp()).ln_1p();
                (-ln_s / theta).exp()
            }
            PairCopula::Gumbel { .. } | PairCopula::Joe { .. } => {
                invert_h_numerically(self, p, v)
            }
            PairCopula::Frank { theta } => {
                let g1 = f64::exp_m1(-theta);
                let gv = f64::exp_m1(-theta * v);
                let gu = p * g1 / ((-theta * v).exp() - p * gv);
                -gu.ln_1p() / theta
            }
            _ => unreachable!("survival families handled above"),
        }
    }

    /// Kendall's tau implied by the copula.
    pub fn kendall_tau(&self) -> f64 {
        if let Some(base) = self.survival_base() {
            return base.kendall_tau();
        }
        match *self {
            PairCopula::Independence => 0.0,
            PairCopula::Gaussian { rho } | PairCopula::StudentT { rho, .. } => {
                2.0 * rho.asin() / std::f64::consts::PI
            }
            PairCopula::Clayton { theta } => theta / (theta + 2.0),
            PairCopula::Gumbel { theta } => 1.0 - 1.0 / theta,
            PairCopula::Frank { theta } => frank_tau(theta),
            PairCopula::Joe { theta } => joe_tau(theta),
            _ => unreachable!("survival families handled above"),
        }
    }

    /// Draw `n` pairs from the copula: `V` uniform, then `U` through the
    /// inverse conditional CDF.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen();
                let w: f64 = rng.gen();
                (self.h_inverse(w, v), v)
            })
            .collect()
    }
}

impl fmt::Display for PairCopula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = self.family();
        write!(f, "{family}")?;
        let params = self.params();
        if !params.is_empty() {
            write!(f, "(")?;
            for (i, (name, value)) in family.param_names().iter().zip(&params).enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{name}={value}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

fn check_open_low(family: Family, theta: f64, lo_open: f64, hi: f64) -> Result<f64> {
    if theta.is_finite() && theta > lo_open && theta <= hi {
        Ok(theta)
    } else {
        Err(CoparError::argument(format!(
            "parameter for {family} must lie in ({lo_open}, {hi}], got {theta}"
        )))
    }
}

/// Gaussian copula log density in terms of standard normal scores.
fn gaussian_log_pdf_z(x: f64, y: f64, rho: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    -0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
}

/// Student t conditional CDF `P(U <= u | V = v)`.
fn t_h(u: f64, v: f64, rho: f64, nu: f64) -> f64 {
    let x = student_t_quantile(u, nu);
    let y = student_t_quantile(v, nu);
    let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
    student_t_cdf((x - rho * y) / scale, nu + 1.0)
}

/// `ln(u^-theta + v^-theta - 1)` computed without overflow.
fn clayton_lse(u: f64, v: f64, theta: f64) -> f64 {
    let a = -theta * u.ln();
    let b = -theta * v.ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

/// `ln((-ln u)^theta + (-ln v)^theta)` computed without overflow.
fn gumbel_ln_s(u: f64, v: f64, theta: f64) -> f64 {
    let a = theta * (-u.ln()).ln();
    let b = theta * (-v.ln()).ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Shared Frank building block
/// `N = e^(-theta u) + e^(-theta v) - e^(-theta(u+v)) - e^-theta`,
/// which is the denominator of the density (squared) and h-function and the
/// CDF's log argument (divided by `1 - e^-theta`). Stable at the corners
/// because no term difference cancels catastrophically for |theta| <= 35.
fn frank_n(u: f64, v: f64, theta: f64) -> f64 {
    (-theta * u).exp() + (-theta * v).exp() - (-theta * (u + v)).exp() - (-theta).exp()
}

/// `ln S` for the Joe copula where `S = a + b - ab`, `a = (1-u)^theta`,
/// `b = (1-v)^theta`, computed as `S = max + rest (1 - max)` in log space so
/// the deep corner (both arguments near one) keeps full relative accuracy.
fn joe_ln_s(u: f64, v: f64, theta: f64) -> f64 {
    let la = theta * (-u).ln_1p();
    let lb = theta * (-v).ln_1p();
    let (hi, lo) = if la >= lb { (la, lb) } else { (lb, la) };
    let one_hi = -f64::exp_m1(hi);
    hi + ((lo - hi).exp() * one_hi).ln_1p()
}

/// Numeric h-function inversion for families without a closed form.
fn invert_h_numerically(cop: &PairCopula, p: f64, v: f64) -> f64 {
    const LO: f64 = 1e-12;
    const HI: f64 = 1.0 - 1e-12;
    let f = |u: f64| cop.h(u, v) - p;
    if f(LO) >= 0.0 {
        return LO;
    }
    if f(HI) <= 0.0 {
        return HI;
    }
    solve_bracketed(&f, LO, HI, 1e-13, 1e-14).unwrap_or_else(|_| {
        // The bracket was verified above, so this is unreachable in practice;
        // fall back to the midpoint to stay total.
        0.5
    })
}

/// First Debye function `D1(x) = (1/x) int_0^x t/(e^t - 1) dt` for `x > 0`.
fn debye_1(x: f64) -> f64 {
    let f = |t: f64| {
        if t.abs() < 1e-8 {
            1.0 - 0.5 * t
        } else {
            t / f64::exp_m1(t)
        }
    };
    integrate(&f, 0.0, x, 1e-13) / x
}

/// Kendall's tau of the Frank copula.
fn frank_tau(theta: f64) -> f64 {
    if theta < 0.0 {
        return -frank_tau(-theta);
    }
    if theta < 1e-5 {
        // Small-parameter limit tau ~ theta/9.
        return theta / 9.0;
    }
    1.0 - 4.0 / theta * (1.0 - debye_1(theta))
}

/// Kendall's tau of the Joe copula via the Archimedean generator integral
/// `tau = 1 + 4 int_0^1 phi(t)/phi'(t) dt`.
fn joe_tau(theta: f64) -> f64 {
    if theta <= 1.0 {
        return 0.0;
    }
    let f = |s: f64| {
        let g = theta * s.ln(); // ln(s^theta)
        if g < -36.0 {
            // Deep lower limit: integrand tends to -s.
            -s
        } else {
            let a = g.exp();
            (-a).ln_1p() * (1.0 - a) * ((1.0 / theta - 1.0) * g).exp()
        }
    };
    1.0 + 4.0 / theta * integrate(&f, 0.0, 1.0, 1e-13)
}

/// Invert the Frank tau map; clamps at the admissible parameter range.
fn frank_theta_from_tau(tau: f64) -> f64 {
    let sign = if tau < 0.0 { -1.0 } else { 1.0 };
    let target = tau.abs();
    if target < 2e-5 {
        return sign * BOX_EPS;
    }
    if target >= frank_tau(FRANK_ABS_MAX) {
        return sign * FRANK_ABS_MAX;
    }
    let f = |theta: f64| frank_tau(theta) - target;
    let theta = solve_bracketed(&f, BOX_EPS, FRANK_ABS_MAX, 1e-10, 1e-12)
        .unwrap_or(FRANK_ABS_MAX);
    sign * theta
}

/// Invert the Joe tau map; clamps at the admissible parameter range.
fn joe_theta_from_tau(tau: f64) -> f64 {
    if tau <= 1e-8 {
        return 1.0;
    }
    if tau >= joe_tau(JOE_MAX) {
        return JOE_MAX;
    }
    let f = |theta: f64| joe_tau(theta) - tau;
    solve_bracketed(&f, 1.0, JOE_MAX, 1e-10, 1e-12).unwrap_or(JOE_MAX)
}

/// Sum of the copula log density over paired observations.
pub fn loglik(cop: &PairCopula, us: &[f64], vs: &[f64]) -> f64 {
    us.iter()
        .zip(vs)
        .map(|(&u, &v)| cop.log_pdf(u, v))
        .sum()
}

/// Result of fitting one pair-copula family to data.
#[derive(Debug, Clone)]
pub struct FittedCopula {
    /// The fitted copula.
    pub copula: PairCopula,
    /// Log likelihood at the fitted parameters.
    pub loglik: f64,
    /// True when the likelihood maximization failed and the returned
    /// parameters are the tau-inversion starting values instead.
    pub fell_back_to_tau: bool,
}

/// Fit one family by maximum likelihood.
///
/// Starting values come from inverting the family's Kendall tau map at the
/// sample value. If the maximization fails, those starting values are
/// returned with `fell_back_to_tau` set.
pub fn fit(family: Family, us: &[f64], vs: &[f64]) -> Result<FittedCopula> {
    if us.len() != vs.len() {
        return Err(CoparError::argument(
            "copula fit requires equally many u and v observations",
        ));
    }
    if us.len() < 2 {
        return Err(CoparError::argument(
            "copula fit requires at least two observations",
        ));
    }
    let uc: Vec<f64> = us.iter().map(|&u| clamp_unit(u)).collect();
    let vc: Vec<f64> = vs.iter().map(|&v| clamp_unit(v)).collect();
    if family == Family::Independence {
        return Ok(FittedCopula {
            copula: PairCopula::Independence,
            loglik: 0.0,
            fell_back_to_tau: false,
        });
    }
    let tau = kendall_tau(&uc, &vc)?;
    let start = family.start_from_tau(tau);
    let start_ll = loglik(&start, &uc, &vc);
    let (lo, hi) = family.param_box(tau);
    let x0: Vec<f64> = start
        .params()
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(&p, (&l, &h))| p.clamp(l, h))
        .collect();

    let outcome = if family == Family::Gaussian {
        // The Gaussian log likelihood depends on the data only through two
        // sums of score products, so precompute them for an O(1) objective.
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (&u, &v) in uc.iter().zip(&vc) {
            let x = norm_quantile(u);
            let y = norm_quantile(v);
            sxx += x * x + y * y;
            sxy += x * y;
        }
        let n = uc.len() as f64;
        let obj = move |p: &[f64]| {
            let rho = p[0];
            let r2 = 1.0 - rho * rho;
            -0.5 * n * r2.ln() - (rho * rho * sxx - 2.0 * rho * sxy) / (2.0 * r2)
        };
        maximize_box(obj, &x0, &lo, &hi)
    } else {
        let obj = |p: &[f64]| match PairCopula::from_params(family, p) {
            Ok(cop) => loglik(&cop, &uc, &vc),
            Err(_) => f64::NEG_INFINITY,
        };
        maximize_box(obj, &x0, &lo, &hi)
    };

    match outcome {
        Ok(r) if r.value.is_finite() && r.value >= start_ll - 1e-9 => {
            let copula = PairCopula::from_params(family, &r.x)?;
            Ok(FittedCopula {
                copula,
                loglik: r.value,
                fell_back_to_tau: false,
            })
        }
        _ => Ok(FittedCopula {
            copula: start,
            loglik: start_ll,
            fell_back_to_tau: true,
        }),
    }
}

/// Select and fit the best family for paired copula data.
///
/// A rank-based independence test runs first: when independence is not
/// rejected at the 5% level the independence copula is returned without
/// fitting anything. Otherwise every candidate family is fit and the lowest
/// AIC wins; ties prefer fewer parameters, then declaration order.
pub fn select(us: &[f64], vs: &[f64], families: &[Family]) -> Result<FittedCopula> {
    if families.is_empty() {
        return Err(CoparError::argument(
            "family selection requires at least one candidate family",
        ));
    }
    if us.len() != vs.len() || us.len() < 3 {
        return Err(CoparError::argument(
            "family selection requires at least three paired observations",
        ));
    }
    let independence = FittedCopula {
        copula: PairCopula::Independence,
        loglik: 0.0,
        fell_back_to_tau: false,
    };
    let candidates: Vec<Family> = families
        .iter()
        .copied()
        .filter(|&f| f != Family::Independence)
        .collect();
    if candidates.is_empty() {
        return Ok(independence);
    }
    let uc: Vec<f64> = us.iter().map(|&u| clamp_unit(u)).collect();
    let vc: Vec<f64> = vs.iter().map(|&v| clamp_unit(v)).collect();
    let tau = kendall_tau(&uc, &vc)?;
    let pvalue = kendall_independence_pvalue(tau, uc.len())?;
    if pvalue >= INDEPENDENCE_LEVEL {
        return Ok(independence);
    }

    let mut best: Option<(f64, usize, Family, FittedCopula)> = None;
    for fam in candidates {
        let Ok(fitted) = fit(fam, &uc, &vc) else {
            continue;
        };
        if !fitted.loglik.is_finite() {
            continue;
        }
        let score = crate::stats::aic(fitted.loglik, fam.n_params());
        let replace = match &best {
            None => true,
            Some((s, np, f, _)) => (score, fam.n_params(), fam) < (*s, *np, *f),
        };
        if replace {
            best = Some((score, fam.n_params(), fam, fitted));
        }
    }
    match best {
        Some((_, _, _, fitted)) => Ok(fitted),
        None => Err(CoparError::fit(
            "no candidate family could be fit to the data",
        )),
    }
}
