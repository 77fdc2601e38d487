//! Standard-normal special functions hardened for deep-tail arguments.
//!
//! Everything here works in the log domain so that tail arguments out to
//! a few hundred standard deviations neither underflow nor lose the
//! relative accuracy the moment formulas need.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Result, TrugError};

/// ln(sqrt(2*pi))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// ln of the standard normal density.
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Scaled complementary error function, erfcx(x) = exp(x^2) * erfc(x).
///
/// For moderate x the definition is evaluated directly; for x > 6 the
/// asymptotic expansion
/// erfcx(x) ~ 1/(x*sqrt(pi)) * sum_n (-1)^n (2n-1)!! / (2x^2)^n
/// is used. Its first omitted term is already below 1e-16 relative there,
/// whereas the library erfc loses relative accuracy once exp(-x^2)
/// approaches the underflow threshold.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        // erfc(-x) = 2 - erfc(x); overflows for x << -26, which callers avoid.
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x <= 6.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    let inv2x2 = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..30 {
        term *= -((2 * n - 1) as f64) * inv2x2;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum / (x * PI.sqrt())
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// ln of the standard normal CDF, accurate for z down to a few hundred
/// standard deviations below zero.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > 8.0 {
        // Phi(z) is within 1e-15 of 1; expand around it.
        (-0.5 * libm::erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else {
        let x = -z * FRAC_1_SQRT_2;
        // Phi(z) = erfc(x)/2 = erfcx(x) * exp(-x^2) / 2
        0.5f64.ln() + erfcx(x).ln() - x * x
    }
}

/// ln(Phi(b) - Phi(a)) for a < b, either endpoint possibly infinite.
///
/// When both arguments sit in the same tail the difference is formed from
/// the complementary side with `ln_1p`, so masses like Phi(41)-Phi(40)
/// come out finite instead of 0 - 0.
pub fn log_norm_cdf_diff(a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    match (a == f64::NEG_INFINITY, b == f64::INFINITY) {
        (true, true) => 0.0,
        (true, false) => log_norm_cdf(b),
        (false, true) => log_norm_cdf(-a),
        (false, false) => {
            if a >= 0.0 {
                // Right tail: Phi(b) - Phi(a) = Phi(-a) - Phi(-b).
                let la = log_norm_cdf(-a);
                let lb = log_norm_cdf(-b);
                la + (-(lb - la).exp()).ln_1p()
            } else if b <= 0.0 {
                let la = log_norm_cdf(a);
                let lb = log_norm_cdf(b);
                lb + (-(la - lb).exp()).ln_1p()
            } else {
                // Straddles zero: the erf terms have opposite signs, so the
                // subtraction is actually an addition of magnitudes.
                let d = 0.5
                    * (libm::erf(b * FRAC_1_SQRT_2)
                        - libm::erf(a * FRAC_1_SQRT_2));
                d.ln()
            }
        }
    }
}

/// phi(z)/Phi(z) at full double precision, valid for |z| up to several
/// hundred. Used internally by the moment formulas.
pub fn pdf_cdf_ratio(z: f64) -> f64 {
    (log_norm_pdf(z) - log_norm_cdf(z)).exp()
}

/// Threshold below which `stable_ratio` switches to the closed-form
/// surd approximation.
pub const STABLE_RATIO_SWITCH: f64 = -38.0;

/// phi(z)/Phi(z) with the deep-tail branch
/// gamma(z) = (sqrt(z^2 + 4) - z)/2 for z < -38, whose relative error is
/// below 4.8e-7 on that range.
pub fn stable_ratio(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(TrugError::Domain(format!(
            "stable_ratio requires a finite argument, got {z}"
        )));
    }
    if z < STABLE_RATIO_SWITCH {
        Ok(((z * z + 4.0).sqrt() - z) / 2.0)
    } else {
        Ok(pdf_cdf_ratio(z))
    }
}

/// Numerically safe log-sum-exp.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// log-mean-exp, i.e. log_sum_exp - ln(n).
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// Logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
