//! Independent reference routines used by the test suites: adaptive
//! quadrature for truncated-Gaussian moments, a continued-fraction Mills
//! ratio, and quadrature-based likelihoods for the small supervised model.
//!
//! Nothing here shares a code path with the production formulas it is used
//! to check; the only common ground is `exp`/`ln` and the Gauss-Legendre
//! rule below.

use crate::truncnorm::{GaussianBase, TruncationInterval};

/// 50-point Gauss-Legendre nodes/weights on [-1, 1], generated by Newton
/// iteration on the Legendre polynomial at first use.
fn gauss_legendre_50() -> &'static (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 50usize;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Initial guess (Chebyshev-like), then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate f over [lo, hi] with a fixed panel count of 50-point
/// Gauss-Legendre rules.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_50();
    let mut total = 0.0;
    let w = (hi - lo) / panels as f64;
    for p in 0..panels {
        let a = lo + w * p as f64;
        let mid = a + 0.5 * w;
        let half = 0.5 * w;
        let mut s = 0.0;
        for (x, wt) in nodes.iter().zip(weights.iter()) {
            s += wt * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

/// Effective integration range of the standardized truncated normal:
/// clip [a, b] to where exp(-(t^2 - t0^2)/2) is representable relative to
/// the in-interval maximum at t0.
fn effective_range(a: f64, b: f64) -> (f64, f64, f64) {
    let t0 = 0.0f64.clamp(a.max(-400.0), b.min(400.0));
    let cutoff = t0 * t0 + 1500.0; // exp(-750) below the peak is negligible
    let lo = if a.is_finite() { a.max(-cutoff.sqrt()) } else { -cutoff.sqrt() };
    let hi = if b.is_finite() { b.min(cutoff.sqrt()) } else { cutoff.sqrt() };
    (lo, hi, t0)
}

/// Truncated-normal mean and variance by quadrature, shifted so the
/// integrand peaks at 1 even for intervals deep in a tail.
pub fn moments_by_quadrature(
    base: &GaussianBase,
    interval: &TruncationInterval,
) -> (f64, f64) {
    let s = base.std_dev();
    let a = (interval.lower() - base.mean()) / s;
    let b = (interval.upper() - base.mean()) / s;
    let (lo, hi, t0) = effective_range(a, b);
    let w = |t: f64| (-0.5 * (t * t - t0 * t0)).exp();
    let panels = 64;
    let z0 = integrate(&|t| w(t), lo, hi, panels);
    let z1 = integrate(&|t| t * w(t), lo, hi, panels);
    let m1 = z1 / z0;
    let z2 = integrate(&|t| (t - m1) * (t - m1) * w(t), lo, hi, panels);
    let mean = base.mean() + s * m1;
    let var = base.variance() * z2 / z0;
    (mean, var)
}

/// Interval mass of the standard normal by quadrature (only usable when it
/// does not underflow; tail tests use `log_tail_mass_oracle` instead).
pub fn mass_by_quadrature(base: &GaussianBase, interval: &TruncationInterval) -> f64 {
    let s = base.std_dev();
    let a = (interval.lower() - base.mean()) / s;
    let b = (interval.upper() - base.mean()) / s;
    let (lo, hi, _) = effective_range(a, b);
    integrate(
        &|t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        lo,
        hi,
        64,
    )
}

/// Mills ratio Phi(-x)/phi(x) for x > 0 via the classical continued
/// fraction 1/(x + 1/(x + 2/(x + 3/(...)))), evaluated by backward
/// recurrence. Machine-precision for x >= ~10.
pub fn mills_ratio_cf(x: f64) -> f64 {
    assert!(x > 0.0);
    let depth = 60;
    let mut f = 0.0;
    for k in (1..=depth).rev() {
        f = k as f64 / (x + f);
    }
    1.0 / (x + f)
}

/// phi(z)/Phi(z) for strongly negative z from the continued fraction;
/// the oracle for the deep-tail ratio approximation.
pub fn ratio_oracle_deep_tail(z: f64) -> f64 {
    assert!(z < 0.0);
    1.0 / mills_ratio_cf(-z)
}

/// ln(Phi(b) - Phi(a)) for 0 <= a < b (a right-tail interval) using the
/// continued-fraction Mills ratio; independent of the erfcx path.
pub fn log_tail_mass_oracle(a: f64, b: f64) -> f64 {
    assert!(a >= 10.0 && b > a);
    let lphi = |t: f64| -0.5 * t * t - crate::truncnorm::special::LN_SQRT_2PI;
    let la = lphi(a) + mills_ratio_cf(a).ln(); // ln Phi(-a)
    let lb = lphi(b) + mills_ratio_cf(b).ln();
    la + (-(lb - la).exp()).ln_1p()
}

/// ln p(y|x) for the supervised truncated-Gaussian model with one or two
/// hidden units, by direct quadrature over h.
///
/// p(y|x) = int N(y | w1 h + b1, s2 I) N_[xi](h | w0 x + b0, s2 I) dh.
pub fn tggm_log_lik_quadrature(
    w0: &[Vec<f64>],
    b0: &[f64],
    w1: &[Vec<f64>],
    b1: &[f64],
    sigma2: f64,
    intervals: &[TruncationInterval],
    x: &[f64],
    y: &[f64],
) -> f64 {
    let m = b0.len();
    assert!(m == 1 || m == 2, "quadrature oracle supports m in {{1,2}}");
    let q = b1.len();
    let s = sigma2.sqrt();
    let mu0: Vec<f64> = (0..m)
        .map(|j| b0[j] + w0[j].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
        .collect();
    // Per-unit effective range and prior log-mass.
    let range = |j: usize| {
        let a = (intervals[j].lower() - mu0[j]) / s;
        let b = (intervals[j].upper() - mu0[j]) / s;
        let (lo, hi, _) = effective_range(a.max(-60.0), b.min(60.0));
        (mu0[j] + s * lo, mu0[j] + s * hi)
    };
    let log_joint = |h: &[f64]| {
        let mut e = 0.0;
        for i in 0..q {
            let mut r = y[i] - b1[i];
            for j in 0..m {
                r -= w1[i][j] * h[j];
            }
            e += r * r;
        }
        for j in 0..m {
            let r = h[j] - mu0[j];
            e += r * r;
        }
        -e / (2.0 * sigma2)
    };
    // Normalizers of the two Gaussian factors.
    let mut log_norm = -(q as f64) * 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    for j in 0..m {
        let base = GaussianBase::new(mu0[j], sigma2).unwrap();
        log_norm -= 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
        log_norm -= mass_by_quadrature(&base, &intervals[j]).ln();
    }
    // Peak value for shifting.
    let peak = log_joint(&mu0.iter().map(|v| {
        *v
    }).collect::<Vec<_>>());
    if m == 1 {
        let (lo, hi) = range(0);
        let v = integrate(&|h| (log_joint(&[h]) - peak).exp(), lo, hi, 32);
        peak + v.ln() + log_norm
    } else {
        let (lo0, hi0) = range(0);
        let (lo1, hi1) = range(1);
        let v = integrate(
            &|h0| integrate(&|h1| (log_joint(&[h0, h1]) - peak).exp(), lo1, hi1, 16),
            lo0,
            hi0,
            16,
        );
        peak + v.ln() + log_norm
    }
}

/// Posterior mean/variance of each hidden unit given (x, y) by quadrature,
/// for m in {1, 2}.
pub fn tggm_posterior_moments_quadrature(
    w0: &[Vec<f64>],
    b0: &[f64],
    w1: &[Vec<f64>],
    b1: &[f64],
    sigma2: f64,
    intervals: &[TruncationInterval],
    x: &[f64],
    y: &[f64],
) -> Vec<(f64, f64)> {
    let m = b0.len();
    assert!(m == 1 || m == 2);
    let q = b1.len();
    let s = sigma2.sqrt();
    let mu0: Vec<f64> = (0..m)
        .map(|j| b0[j] + w0[j].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
        .collect();
    let log_joint = |h: &[f64]| {
        let mut e = 0.0;
        for i in 0..q {
            let mut r = y[i] - b1[i];
            for j in 0..m {
                r -= w1[i][j] * h[j];
            }
            e += r * r;
        }
        for j in 0..m {
            let r = h[j] - mu0[j];
            e += r * r;
        }
        -e / (2.0 * sigma2)
    };
    let range = |j: usize| {
        let a = ((intervals[j].lower() - mu0[j]) / s).max(-60.0);
        let b = ((intervals[j].upper() - mu0[j]) / s).min(60.0);
        (mu0[j] + s * a, mu0[j] + s * b)
    };
    let peak = log_joint(&mu0);
    if m == 1 {
        let (lo, hi) = range(0);
        let z0 = integrate(&|h| (log_joint(&[h]) - peak).exp(), lo, hi, 32);
        let z1 = integrate(&|h| h * (log_joint(&[h]) - peak).exp(), lo, hi, 32);
        let mean = z1 / z0;
        let z2 = integrate(
            &|h| (h - mean) * (h - mean) * (log_joint(&[h]) - peak).exp(),
            lo,
            hi,
            32,
        );
        vec![(mean, z2 / z0)]
    } else {
        let (lo0, hi0) = range(0);
        let (lo1, hi1) = range(1);
        let int2 = |f: &dyn Fn(f64, f64) -> f64| {
            integrate(
                &|h0| integrate(&|h1| f(h0, h1), lo1, hi1, 16),
                lo0,
                hi0,
                16,
            )
        };
        let z0 = int2(&|h0, h1| (log_joint(&[h0, h1]) - peak).exp());
        let m0 = int2(&|h0, h1| h0 * (log_joint(&[h0, h1]) - peak).exp()) / z0;
        let m1 = int2(&|h0, h1| h1 * (log_joint(&[h0, h1]) - peak).exp()) / z0;
        let v0 = int2(&|h0, h1| (h0 - m0) * (h0 - m0) * (log_joint(&[h0, h1]) - peak).exp()) / z0;
        let v1 = int2(&|h0, h1| (h1 - m1) * (h1 - m1) * (log_joint(&[h0, h1]) - peak).exp()) / z0;
        vec![(m0, v0), (m1, v1)]
    }
}
