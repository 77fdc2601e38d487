//! Annealed importance sampling for the RBM partition function.
//!
//! The annealing path interpolates between a zero-coupling base model A
//! (independent Bernoulli visibles with bias b^A, decoupled truncated
//! Gaussian hiddens with the target's precisions) and the target model B.
//! Intermediate joints carry two hidden blocks, h^A at inverse temperature
//! 1-beta and h^B at beta; both integrate out in closed form, so the
//! importance weights only ever touch the visible marginals.
//!
//! Weights are accumulated relative to the all-zeros visible state: the
//! x-independent pieces of each intermediate marginal cancel telescopically
//! and are restored once at the end. Besides being cheaper (the A-block
//! mass never needs evaluating inside the loop), this makes the
//! zero-coupling sanity case produce exactly zero log-weights instead of
//! accumulated rounding.

use rand::Rng;

use crate::error::{Result, TrugError};
use crate::exec;
use crate::mat;
use crate::rbm::{stream_rng, RbmModel};
use crate::truncnorm::{self, special, GaussianBase, TruncationInterval};

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// beta_k = k / K.
    Linear,
    /// Explicit inverse temperatures, endpoints included.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisConfig {
    /// Number of annealing steps K (the path has K+1 temperatures).
    pub n_temps: usize,
    /// Number of independent chains M.
    pub n_chains: usize,
    pub schedule: Schedule,
    /// Base-model visible bias b^A.
    pub base_bias: Vec<f64>,
}

impl AisConfig {
    pub fn linear(n_temps: usize, n_chains: usize, base_bias: Vec<f64>) -> Self {
        Self {
            n_temps,
            n_chains,
            schedule: Schedule::Linear,
            base_bias,
        }
    }

    /// The inverse-temperature ladder 0 = beta_0 < ... < beta_K = 1.
    pub fn betas(&self) -> Result<Vec<f64>> {
        let betas = match &self.schedule {
            Schedule::Linear => {
                if self.n_temps == 0 {
                    return Err(TrugError::Contract("AIS needs at least one step".into()));
                }
                (0..=self.n_temps)
                    .map(|k| k as f64 / self.n_temps as f64)
                    .collect::<Vec<_>>()
            }
            Schedule::Custom(v) => v.clone(),
        };
        let ok = betas.len() >= 2
            && betas[0] == 0.0
            && *betas.last().unwrap() == 1.0
            && betas.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(TrugError::Contract(
                "AIS schedule must be strictly increasing from 0 to 1".into(),
            ));
        }
        Ok(betas)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisEstimate {
    pub log_z: f64,
    pub log_weights: Vec<f64>,
    pub std_err: f64,
    /// Effective sample size from normalized weight dispersion.
    pub ess: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-mass term of one decoupled hidden unit at precision `prec`:
/// ln of [Phi(sqrt(prec) xi2) - Phi(sqrt(prec) xi1)] / (sqrt(prec) phi(0)).
fn decoupled_unit_term(prec: f64, iv: &TruncationInterval) -> f64 {
    let s = prec.sqrt();
    let lo = if iv.lower() == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        s * iv.lower()
    };
    let hi = if iv.upper() == f64::INFINITY {
        f64::INFINITY
    } else {
        s * iv.upper()
    };
    special::log_norm_cdf_diff(lo, hi) + special::LN_SQRT_2PI - s.ln()
}

/// Sum over hidden units of the beta-scaled coupled (B-block) mass terms
/// for hidden activations `act` = W'x + c.
fn b_block_sum(model: &RbmModel, beta: f64, act: &[f64]) -> f64 {
    debug_assert!(beta > 0.0);
    let mut total = 0.0;
    let sqb = beta.sqrt();
    for (j, &a) in act.iter().enumerate() {
        let sd = model.d[j].sqrt();
        let gamma = a / sd;
        let sbd = (beta * model.d[j]).sqrt();
        let shift = sqb * gamma;
        let iv = model.trug.interval(j);
        let lo = if iv.lower() == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            sbd * iv.lower() - shift
        };
        let hi = if iv.upper() == f64::INFINITY {
            f64::INFINITY
        } else {
            sbd * iv.upper() - shift
        };
        total += special::log_norm_cdf_diff(lo, hi) + 0.5 * shift * shift
            + special::LN_SQRT_2PI
            - sbd.ln();
    }
    total
}

/// Sum over hidden units of the (1-beta)-scaled decoupled (A-block) mass
/// terms; independent of x.
fn a_block_sum(model: &RbmModel, beta: f64) -> f64 {
    debug_assert!(beta < 1.0);
    (0..model.n_hidden())
        .map(|j| decoupled_unit_term((1.0 - beta) * model.d[j], &model.trug.interval(j)))
        .sum()
}

/// Closed-form ln Z_A of the zero-coupling base model.
pub fn base_log_partition(config: &AisConfig, model: &RbmModel) -> f64 {
    let bias: f64 = config.base_bias.iter().map(|&b| softplus(b)).sum();
    bias + a_block_sum(model, 0.0)
}

/// ln p*_k(x): the unnormalized visible marginal of the intermediate joint
/// at inverse temperature `beta`. At beta = 0 the degenerate coupled block
/// is dropped; at beta = 1 the degenerate decoupled block is dropped.
pub fn intermediate_unnorm_log_prob(
    config: &AisConfig,
    model: &RbmModel,
    beta: f64,
    x: &[f64],
) -> f64 {
    let mut lp = (1.0 - beta) * mat::dot(&config.base_bias, x) + beta * mat::dot(&model.b, x);
    if beta > 0.0 {
        let mut act = model.w.matvec_t(x);
        mat::add_vec(&mut act, &model.c);
        lp += b_block_sum(model, beta, &act);
    }
    if beta < 1.0 {
        lp += a_block_sum(model, beta);
    }
    lp
}

/// Per-chain state cache: the quantities of the relative marginal
/// ln[p*_k(x)/p*_k(0)] that depend on the current visible state.
struct ChainCache {
    base_dot: f64,
    /// (b - b^A) . x, with the bias difference formed elementwise so a
    /// matching-bias model yields an exact zero.
    diff_dot: f64,
    act: Vec<f64>,
}

impl ChainCache {
    fn refresh(config: &AisConfig, model: &RbmModel, x: &[f64]) -> Self {
        let diff: Vec<f64> = model
            .b
            .iter()
            .zip(&config.base_bias)
            .map(|(b, ba)| b - ba)
            .collect();
        let mut act = model.w.matvec_t(x);
        mat::add_vec(&mut act, &model.c);
        Self {
            base_dot: mat::dot(&config.base_bias, x),
            diff_dot: mat::dot(&diff, x),
            act,
        }
    }

    /// ln[p*_beta(x)/p*_beta(0)] given the precomputed zero-state B-block
    /// value for this beta.
    fn relative_log_prob(&self, model: &RbmModel, beta: f64, b_sum_at_zero: f64) -> f64 {
        let mut lp = self.base_dot + beta * self.diff_dot;
        if beta > 0.0 {
            lp += b_block_sum(model, beta, &self.act) - b_sum_at_zero;
        }
        lp
    }
}

fn run_one_chain<R: Rng + ?Sized>(
    config: &AisConfig,
    model: &RbmModel,
    betas: &[f64],
    b_sums_at_zero: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let n = model.n_visible();
    let m = model.n_hidden();
    // x ~ p_0: independent Bernoulli at the base bias.
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            if rng.random::<f64>() < special::sigmoid(config.base_bias[i]) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut cache = ChainCache::refresh(config, model, &x);
    let mut log_w = 0.0;
    let mut h_b = vec![0.0; m];
    for k in 1..betas.len() {
        let (b_lo, b_hi) = (betas[k - 1], betas[k]);
        log_w += cache.relative_log_prob(model, b_hi, b_sums_at_zero[k])
            - cache.relative_log_prob(model, b_lo, b_sums_at_zero[k - 1]);
        // Transition targeting p_k: h^B | x, then x | h^B. The decoupled
        // block h^A never couples to x, so sampling it would not affect
        // the chain and is skipped.
        for j in 0..m {
            let base = GaussianBase::new(cache.act[j] / model.d[j], 1.0 / (b_hi * model.d[j]))?;
            h_b[j] = truncnorm::sample(&base, &model.trug.interval(j), rng)?;
        }
        let coupled = model.w.matvec(&h_b);
        for i in 0..n {
            let logit = (1.0 - b_hi) * config.base_bias[i] + b_hi * (coupled[i] + model.b[i]);
            x[i] = if rng.random::<f64>() < special::sigmoid(logit) {
                1.0
            } else {
                0.0
            };
        }
        cache = ChainCache::refresh(config, model, &x);
    }
    Ok(log_w)
}

/// Run M annealing chains and assemble the partition-function estimate.
pub fn run_ais(config: &AisConfig, model: &RbmModel, seed: u64) -> Result<AisEstimate> {
    model.validate()?;
    if config.base_bias.len() != model.n_visible() {
        return Err(TrugError::Contract(format!(
            "base bias has {} entries for {} visible units",
            config.base_bias.len(),
            model.n_visible()
        )));
    }
    let betas = config.betas()?;
    // Zero-visible-state B-block values per temperature (the x-independent
    // reference the chains accumulate against).
    let act0 = model.c.clone();
    let b_sums_at_zero: Vec<f64> = betas
        .iter()
        .map(|&b| if b > 0.0 { b_block_sum(model, b, &act0) } else { 0.0 })
        .collect();
    // Restore the reference-state ratio ln[p*_K(0)/p*_0(0)] dropped by the
    // relative accumulation.
    let offset = (b_sums_at_zero[betas.len() - 1]) - a_block_sum(model, 0.0);

    let chains: Vec<Result<f64>> = exec::map_range(config.n_chains, |i| {
        let mut rng = stream_rng(seed, i as u64);
        run_one_chain(config, model, &betas, &b_sums_at_zero, &mut rng)
    });
    let mut log_weights = Vec::with_capacity(config.n_chains);
    for r in chains {
        log_weights.push(r? + offset);
    }

    let lme = special::log_mean_exp(&log_weights);
    let log_z = base_log_partition(config, model) + lme;

    // Normalized weights for the dispersion diagnostics.
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let s1: f64 = u.iter().sum();
    let s2: f64 = u.iter().map(|v| v * v).sum();
    let mless = config.n_chains as f64;
    let ess = s1 * s1 / s2;
    let mean = s1 / mless;
    let var = (s2 / mless - mean * mean).max(0.0);
    // Delta method: std err of ln(mean weight).
    let std_err = var.sqrt() / (mean * mless.sqrt());

    Ok(AisEstimate {
        log_z,
        log_weights,
        std_err,
        ess,
    })
}

/// Held-out log-probability: ln p*(x) - log_z per test row, plus the mean.
pub fn test_log_prob(
    config: &AisConfig,
    model: &RbmModel,
    x_test: &[Vec<f64>],
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    if x_test.is_empty() {
        return Err(TrugError::Contract("empty test set".into()));
    }
    let est = run_ais(config, model, seed)?;
    let per: Vec<f64> = exec::map_collect(x_test, |x| model.log_unnorm_prob(x) - est.log_z);
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}
