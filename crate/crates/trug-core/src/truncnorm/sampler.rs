//! Exact rejection samplers for the doubly truncated normal.
//!
//! Strategy selection follows the interval mass: naive resampling when the
//! base Gaussian already puts at least `NAIVE_MASS_THRESHOLD` of its mass
//! inside the interval, shifted-exponential rejection for one-sided tails,
//! and uniform rejection under an exponential bound for narrow two-sided
//! tail intervals.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::special::log_norm_cdf_diff;
use super::{GaussianBase, TruncationInterval};
use crate::error::{Result, TrugError};

/// Below this interval mass the tail-specialized samplers take over.
/// Chosen so naive resampling needs at most ~4 proposals in expectation.
pub const NAIVE_MASS_THRESHOLD: f64 = 0.3;

/// Safety cap; the rejection loops terminate long before this in practice.
pub const MAX_PROPOSALS: usize = 1_000_000;

/// One exact draw from the truncated normal. The output always lies inside
/// the interval.
pub fn sample<R: Rng + ?Sized>(
    base: &GaussianBase,
    interval: &TruncationInterval,
    rng: &mut R,
) -> Result<f64> {
    let (a, b) = base.standardize(interval);
    let mass = log_norm_cdf_diff(a, b).exp();
    let t = if mass >= NAIVE_MASS_THRESHOLD {
        naive(a, b, rng)?
    } else if a == f64::NEG_INFINITY {
        // Upper one-sided tail: reflect to a lower tail.
        -one_sided_tail(-b, f64::INFINITY, rng)?
    } else if b == f64::INFINITY {
        one_sided_tail(a, f64::INFINITY, rng)?
    } else if a >= 0.0 {
        two_sided_tail(a, b, rng)?
    } else if b <= 0.0 {
        -two_sided_tail(-b, -a, rng)?
    } else {
        // Narrow interval straddling the mode: uniform proposals, density
        // bounded by phi(0).
        uniform_reject(a, b, |u| (-0.5 * u * u).exp(), rng)?
    };
    let out = base.mean() + base.std_dev() * t;
    Ok(out.clamp(interval.lower, interval.upper))
}

fn naive<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    for _ in 0..MAX_PROPOSALS {
        let t: f64 = rng.sample(StandardNormal);
        if t >= a && t <= b {
            return Ok(t);
        }
    }
    Err(TrugError::SamplerOverrun(MAX_PROPOSALS))
}

/// Shifted-exponential rejection for t >= a with a > 0, optionally capped
/// at b. The optimal envelope rate is (a + sqrt(a^2 + 4))/2.
fn one_sided_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    debug_assert!(a > 0.0);
    let lambda = (a + (a * a + 4.0).sqrt()) / 2.0;
    for _ in 0..MAX_PROPOSALS {
        let e: f64 = rng.sample(Exp1);
        let x = a + e / lambda;
        if x > b {
            continue;
        }
        let d = x - lambda;
        let u: f64 = rng.random();
        if u <= (-0.5 * d * d).exp() {
            return Ok(x);
        }
    }
    Err(TrugError::SamplerOverrun(MAX_PROPOSALS))
}

/// Two-sided tail interval with 0 <= a < b: wide intervals reuse the
/// exponential envelope, narrow ones use uniform rejection with the
/// density bound phi(a).
fn two_sided_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    debug_assert!(a >= 0.0 && b > a);
    let lambda = (a + (a * a + 4.0).sqrt()) / 2.0;
    if b - a > 2.0 / lambda {
        one_sided_tail(a.max(f64::MIN_POSITIVE), b, rng)
    } else {
        uniform_reject(a, b, |u| (0.5 * (a * a - u * u)).exp(), rng)
    }
}

fn uniform_reject<R: Rng + ?Sized, F: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    accept_prob: F,
    rng: &mut R,
) -> Result<f64> {
    for _ in 0..MAX_PROPOSALS {
        let u = a + (b - a) * rng.random::<f64>();
        let v: f64 = rng.random();
        if v <= accept_prob(u) {
            return Ok(u);
        }
    }
    Err(TrugError::SamplerOverrun(MAX_PROPOSALS))
}
