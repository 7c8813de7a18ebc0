//! Scalar numerical kernels: normal distribution functions, Owen's T, the
//! bivariate normal CDF, Student t helpers, adaptive quadrature and a
//! bracketed root solver.

use crate::error::{CoparError, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};
pub use statrs::function::gamma::ln_gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Complementary error function by rational Chebyshev approximation
/// (three ranges, relative error within a few ulp across the real line).
pub fn erfc(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e0,
        6.61191906371416295e1,
        2.98635138197400131e2,
        8.81952221241769090e2,
        1.71204761263407058e3,
        2.05107837782607147e3,
        1.23033935479799725e3,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e1,
        1.17693950891312499e2,
        5.37181101862009858e2,
        1.62138957456669019e3,
        3.29079923573345963e3,
        4.36261909014324716e3,
        3.43936767414372164e3,
        1.23033935480374942e3,
    ];
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e0,
        1.87295284992346047e0,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];
    const SQRPI: f64 = 5.6418958354775628695e-1; // 1/sqrt(pi)

    let y = x.abs();
    let result = if y <= 0.46875 {
        // erfc = 1 - erf on the central range.
        let ysq = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut xnum = A[4] * ysq;
        let mut xden = ysq;
        for i in 0..3 {
            xnum = (xnum + A[i]) * ysq;
            xden = (xden + B[i]) * ysq;
        }
        return 1.0 - x * (xnum + A[3]) / (xden + B[3]);
    } else if y <= 4.0 {
        let mut xnum = C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + C[i]) * y;
            xden = (xden + D[i]) * y;
        }
        let r = (xnum + C[7]) / (xden + D[7]);
        scaled_down(y, r)
    } else if y < 26.543 {
        let ysq = 1.0 / (y * y);
        let mut xnum = P[5] * ysq;
        let mut xden = ysq;
        for i in 0..4 {
            xnum = (xnum + P[i]) * ysq;
            xden = (xden + Q[i]) * ysq;
        }
        let mut r = ysq * (xnum + P[4]) / (xden + Q[4]);
        r = (SQRPI - r) / y;
        scaled_down(y, r)
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// Multiply `r` by `exp(-y^2)` with the square split into an exactly
/// representable part and a small remainder, preserving relative accuracy.
fn scaled_down(y: f64, r: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * r
}

/// Standard normal quantile: rational initial guess polished with one Halley step.
///
/// Accurate to close to machine precision for `p` in the open unit interval.
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "norm_quantile requires p in (0,1)");
    // Rational approximation (relative error below 1.15e-9 before polishing).
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Halley step against the erfc-based CDF.
    let e = norm_cdf(x) - p;
    let u = e * TWO_PI.sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Owen's T function `T(h, a)`, computed by adaptive quadrature of the
/// defining integral `1/(2 pi) * int_0^a exp(-h^2 (1+x^2)/2) / (1+x^2) dx`.
pub fn owen_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let h = h.abs(); // T is even in h
    let sign = a.signum();
    let a = a.abs();
    let hh = 0.5 * h * h;
    let f = |x: f64| {
        let one_x2 = 1.0 + x * x;
        (-hh * one_x2).exp() / one_x2
    };
    sign * integrate(&f, 0.0, a, 1e-13) / TWO_PI
}

/// Standard bivariate normal CDF `P(X <= x, Y <= y)` with correlation `rho`.
///
/// Gauss-Legendre quadrature over the correlation parametrization, with the
/// separate near-singular expansion once `|rho|` exceeds 0.925.
pub fn std_bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    bvnd(-x, -y, rho)
}

/// Genz's BVND: upper-right orthant probability `P(X > dh, Y > dk)`.
fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    // Gauss-Legendre abscissae/weights: 6, 12 and 20 point rules (half-range).
    const X6: [f64; 3] = [0.9324695142031521, 0.6612093864662645, 0.2386191860831969];
    const W6: [f64; 3] = [0.1713244923791704, 0.3607615730481386, 0.4679139345726910];
    const X12: [f64; 6] = [
        0.9815606342467192,
        0.9041172563704749,
        0.7699026741943047,
        0.5873179542866175,
        0.3678314989981802,
        0.1252334085114689,
    ];
    const W12: [f64; 6] = [
        0.04717533638651183,
        0.1069393259953184,
        0.1600783285433462,
        0.2031674267230659,
        0.2334925365383548,
        0.2491470458134028,
    ];
    const X20: [f64; 10] = [
        0.9931285991850949,
        0.9639719272779138,
        0.9122344282513259,
        0.8391169718222188,
        0.7463319064601508,
        0.6360536807265150,
        0.5108670019508271,
        0.3737060887154195,
        0.2277858511416451,
        0.07652652113349734,
    ];
    const W20: [f64; 10] = [
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410907,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183820,
        0.1491729864726037,
        0.1527533871307258,
    ];
    let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&X6, &W6)
    } else if r.abs() < 0.75 {
        (&X12, &W12)
    } else {
        (&X20, &W20)
    };

    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r.abs() > 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = r.asin();
            for i in 0..xs.len() {
                for &is in &[-1.0f64, 1.0f64] {
                    let sn = (0.5 * asr * (is * xs[i] + 1.0)).sin();
                    bvn += ws[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn = bvn * asr / (2.0 * TWO_PI);
        }
        bvn + norm_cdf(-h) * norm_cdf(-k)
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let ass = (1.0 - r) * (1.0 + r);
            let mut a = ass.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (bs / ass + hk);
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * ass * ass / 5.0);
            }
            if -hk < 100.0 {
                let b = bs.sqrt();
                bvn -= (-0.5 * hk).exp()
                    * TWO_PI.sqrt()
                    * norm_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a *= 0.5;
            for i in 0..xs.len() {
                for &is in &[-1.0f64, 1.0f64] {
                    let xi = a * (is * xs[i] + 1.0);
                    let xss = xi * xi;
                    let rs = (1.0 - xss).sqrt();
                    let asr1 = -0.5 * (bs / xss + hk);
                    if asr1 > -100.0 {
                        bvn += a
                            * ws[i]
                            * asr1.exp()
                            * ((-0.5 * hk * (1.0 - rs) / (1.0 + rs)).exp() / rs
                                - (1.0 + c * xss * (1.0 + d * xss)));
                    }
                }
            }
            bvn = -bvn / TWO_PI;
        }
        if r > 0.0 {
            bvn + norm_cdf(-h.max(k))
        } else {
            -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(0.0)
        }
    }
}

/// Student t density with `nu` degrees of freedom.
pub fn student_t_pdf(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
}

/// Student t CDF with `nu` degrees of freedom.
pub fn student_t_cdf(x: f64, nu: f64) -> f64 {
    StudentsT::new(0.0, 1.0, nu)
        .expect("degrees of freedom must be positive")
        .cdf(x)
}

/// Student t quantile via a Cornish-Fisher start and safeguarded Newton steps.
pub fn student_t_quantile(p: f64, nu: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "student_t_quantile requires p in (0,1)");
    if p == 0.5 {
        return 0.0;
    }
    if p > 0.5 {
        return -student_t_quantile(1.0 - p, nu);
    }
    let z = norm_quantile(p);
    let z3 = z * z * z;
    let z5 = z3 * z * z;
    let mut x = z + (z3 + z) / (4.0 * nu) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * nu * nu);
    // Safeguarded Newton: keep a bracket [lo, hi] with F(lo) < p < F(hi).
    let mut lo = f64::NEG_INFINITY;
    let mut hi = 0.0; // p < 0.5 so the root is negative
    for _ in 0..100 {
        let fx = student_t_cdf(x, nu) - p;
        if fx.abs() < 1e-15 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dx = fx / student_t_pdf(x, nu).max(1e-300);
        let mut next = x - dx;
        if !(next > lo && next < hi) {
            next = if lo.is_finite() { 0.5 * (lo + hi) } else { x - (hi - x).abs().max(1.0) * 2.0 };
        }
        if (next - x).abs() < 1e-14 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Adaptive Gauss-Kronrod (G7, K15) quadrature of `f` over `[a, b]`.
///
/// Subdivides until the local Kronrod/Gauss discrepancy falls below the
/// (halved per split) tolerance. The integrand must be finite on the open
/// interval; nodes never touch the endpoints.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, tol);
    }
    gk_adapt(f, a, b, tol, 0)
}

const K15_X: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const K15_W: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
// Gauss weights pair with K15 nodes 1, 3, 5, 7.
const G7_W: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// Returns (Kronrod estimate, Gauss estimate, Kronrod estimate of `|f|`).
fn gk_rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    let mut kronrod_abs = 0.0;
    for (i, (&x, &w)) in K15_X.iter().zip(K15_W.iter()).enumerate() {
        let (fl, fr) = if x == 0.0 {
            let v = f(c);
            (v, 0.0)
        } else {
            (f(c - h * x), f(c + h * x))
        };
        let s = if x == 0.0 { fl } else { fl + fr };
        kronrod += w * s;
        kronrod_abs += w * (fl.abs() + fr.abs());
        // G7 nodes are the odd-indexed K15 nodes (including the center).
        if i % 2 == 1 {
            gauss += G7_W[i / 2] * s;
        }
    }
    (kronrod * h, gauss * h, kronrod_abs * h)
}

// Relative rounding floor for subdivision: once the Kronrod/Gauss discrepancy
// is within a few dozen ulps of the local mass of |f|, the discrepancy is
// rounding noise, not truncation error. Both the noise and the halved
// tolerance then shrink linearly with interval width, so without this floor
// the recursion would subdivide every such interval to the depth cap.
const GK_REL_FLOOR: f64 = 1e-14;

fn gk_adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, g, k_abs) = gk_rule(f, a, b);
    let err = (k - g).abs();
    let c = 0.5 * (a + b);
    if !err.is_finite()
        || err <= tol
        || err <= GK_REL_FLOOR * k_abs
        || c <= a
        || c >= b
        || depth >= 52
    {
        return k;
    }
    gk_adapt(f, a, c, 0.5 * tol, depth + 1) + gk_adapt(f, c, b, 0.5 * tol, depth + 1)
}

/// Brent's method on a bracketing interval: finds `x` in `[a, b]` with
/// `f(x) = 0`, requiring `f(a)` and `f(b)` to have opposite signs.
pub fn solve_bracketed<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    xtol: f64,
    ftol: f64,
) -> Result<f64> {
    let mut a = a;
    let mut b = b;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() {
        return Err(CoparError::numerical("root bracket evaluates to NaN"));
    }
    if fa * fb > 0.0 {
        return Err(CoparError::numerical(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= ftol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
                q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Ok(b)
}

/// Clamp a probability into the closed working interval `[1e-10, 1 - 1e-10]`.
pub fn clamp_unit(p: f64) -> f64 {
    p.clamp(1e-10, 1.0 - 1e-10)
}
