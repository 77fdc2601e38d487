//! Supervised stochastic perceptron with truncated-Gaussian hidden units.
//!
//! Joint model over targets y and hiddens h given inputs x:
//! p(y, h | x) = N(y | W1 h + b1, sigma^2 I) N_[xi](h | W0 x + b0, sigma^2 I),
//! equivalently p(y, h | x) proportional to exp(-E) on the truncation box with
//! E = (||y - W1 h - b1||^2 + ||h - W0 x - b0||^2) / (2 sigma^2).
//!
//! Prediction marginalizes h in closed form: E[y|x] = W1 m(W0 x + b0) + b1,
//! where m is the per-unit truncated-normal mean — the model is a one-hidden-
//! layer perceptron whose nonlinearity is set by the truncation points.
//!
//! Maximum-likelihood gradients are free-phase minus clamped-phase energy
//! expectations. The free phase p(h|x) factorizes, so its moments are exact;
//! the clamped posterior p(h|x,y) couples the hiddens through W1 and is
//! approximated by coordinate-ascent mean field with factorized truncated-
//! normal marginals. Truncation-point gradients are differences of boundary
//! densities between the two phases, with the clamped densities read off the
//! mean-field marginals.

use crate::error::{Result, TrugError};
use crate::exec;
use crate::mat::{self, Mat};
use crate::truncnorm::{self, GaussianBase, TruncationInterval};
use crate::trug::{TrugGrad, TrugParams};
use rand::Rng;

/// Default number of full mean-field sweeps.
pub const DEFAULT_VB_CYCLES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TggmModel {
    /// Input-to-hidden weights, m x p.
    pub w0: Mat,
    /// Hidden biases, length m.
    pub b0: Vec<f64>,
    /// Hidden-to-output weights, q x m.
    pub w1: Mat,
    /// Output biases, length q.
    pub b1: Vec<f64>,
    /// Shared noise variance of both layers.
    pub sigma2: f64,
    /// Whether gradients update sigma2 (through its log).
    pub sigma2_trainable: bool,
    pub trug: TrugParams,
}

/// Factorized approximation of the clamped posterior p(h | x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub q_mean: Vec<f64>,
    pub q_var: Vec<f64>,
    pub cycles_run: usize,
}

/// Ascent gradient bundle for the weight-type parameters. The noise
/// variance gradient is taken with respect to ln sigma^2 so additive
/// updates preserve positivity.
#[derive(Debug, Clone, PartialEq)]
pub struct TggmGrad {
    pub dw0: Mat,
    pub db0: Vec<f64>,
    pub dw1: Mat,
    pub db1: Vec<f64>,
    pub d_log_sigma2: f64,
}

impl TggmGrad {
    pub fn zeros(p: usize, m: usize, q: usize) -> Self {
        Self {
            dw0: Mat::zeros(m, p),
            db0: vec![0.0; m],
            dw1: Mat::zeros(q, m),
            db1: vec![0.0; q],
            d_log_sigma2: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &TggmGrad) {
        self.dw0.add_assign(&other.dw0);
        mat::add_vec(&mut self.db0, &other.db0);
        self.dw1.add_assign(&other.dw1);
        mat::add_vec(&mut self.db1, &other.db1);
        self.d_log_sigma2 += other.d_log_sigma2;
    }

    pub fn scale(&mut self, s: f64) {
        self.dw0.scale(s);
        mat::scale_vec(&mut self.db0, s);
        self.dw1.scale(s);
        mat::scale_vec(&mut self.db1, s);
        self.d_log_sigma2 *= s;
    }
}

impl TggmModel {
    pub fn init<R: Rng + ?Sized>(
        n_inputs: usize,
        n_hidden: usize,
        n_outputs: usize,
        trug: TrugParams,
        rng: &mut R,
    ) -> Result<Self> {
        if trug.units() != n_hidden {
            return Err(TrugError::Contract(format!(
                "truncation parameters cover {} units, model has {}",
                trug.units(),
                n_hidden
            )));
        }
        Ok(Self {
            w0: Mat::gaussian(n_hidden, n_inputs, 0.1, rng),
            b0: vec![0.0; n_hidden],
            w1: Mat::gaussian(n_outputs, n_hidden, 0.1, rng),
            b1: vec![0.0; n_outputs],
            sigma2: 1.0,
            sigma2_trainable: true,
            trug,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.w0.cols()
    }

    pub fn n_hidden(&self) -> usize {
        self.w0.rows()
    }

    pub fn n_outputs(&self) -> usize {
        self.w1.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_hidden();
        if self.b0.len() != m || self.w1.cols() != m || self.b1.len() != self.w1.rows() || self.trug.units() != m {
            return Err(TrugError::Contract("TGGM parameter shapes disagree".into()));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(TrugError::Contract("sigma2 must be positive and finite".into()));
        }
        let finite = self
            .w0
            .data()
            .iter()
            .chain(self.w1.data())
            .chain(&self.b0)
            .chain(&self.b1)
            .all(|v| v.is_finite());
        if !finite {
            return Err(TrugError::Contract("non-finite TGGM parameter".into()));
        }
        Ok(())
    }

    /// Per-unit truncated-normal parameters of the free conditional
    /// p(h | x): base N((W0 x + b0)_j, sigma^2) on the unit's interval.
    pub fn prior_hidden(&self, x: &[f64]) -> Vec<(GaussianBase, TruncationInterval)> {
        let mut act = self.w0.matvec(x);
        mat::add_vec(&mut act, &self.b0);
        act.iter()
            .enumerate()
            .map(|(j, &a)| {
                let base = GaussianBase::new(a, self.sigma2).expect("validated parameters");
                (base, self.trug.interval(j))
            })
            .collect()
    }

    /// Deterministic forward pass E[y|x] = W1 m + b1, with m the per-unit
    /// truncated means of the free conditional.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let means: Vec<f64> = self
            .prior_hidden(x)
            .iter()
            .map(|(base, iv)| truncnorm::trunc_mean(base, iv))
            .collect();
        let mut out = self.w1.matvec(&means);
        mat::add_vec(&mut out, &self.b1);
        out
    }

    /// Unit j's mean-field base distribution given the other units'
    /// current means: precision (1 + ||W1 col j||^2) / sigma^2, mean from
    /// the prior activation plus the output residual projected on col j.
    fn unit_base(
        &self,
        j: usize,
        prior_mean: &[f64],
        col_sq: &[f64],
        residual: &[f64],
        q_mean_j: f64,
    ) -> GaussianBase {
        let col = self.w1.col(j);
        let coupling = mat::dot(&col, residual) + col_sq[j] * q_mean_j;
        let denom = 1.0 + col_sq[j];
        GaussianBase::new((prior_mean[j] + coupling) / denom, self.sigma2 / denom)
            .expect("validated parameters")
    }

    fn mean_field_sweeps(
        &self,
        x: &[f64],
        y: &[f64],
        mut q_mean: Vec<f64>,
        start_cycle: usize,
        n_cycles: usize,
    ) -> MeanFieldState {
        let m = self.n_hidden();
        let prior_mean: Vec<f64> = {
            let mut a = self.w0.matvec(x);
            mat::add_vec(&mut a, &self.b0);
            a
        };
        let col_sq: Vec<f64> = (0..m).map(|j| {
            let c = self.w1.col(j);
            mat::dot(&c, &c)
        }).collect();
        // residual = y - b1 - W1 q_mean, maintained incrementally.
        let mut residual: Vec<f64> = {
            let mut r = self.w1.matvec(&q_mean);
            for (i, ri) in r.iter_mut().enumerate() {
                *ri = y[i] - self.b1[i] - *ri;
            }
            r
        };
        let mut q_var = vec![0.0; m];
        for _ in 0..n_cycles {
            for j in 0..m {
                let base = self.unit_base(j, &prior_mean, &col_sq, &residual, q_mean[j]);
                let iv = self.trug.interval(j);
                let new_mean = truncnorm::trunc_mean(&base, &iv);
                q_var[j] = truncnorm::trunc_var(&base, &iv);
                let delta = new_mean - q_mean[j];
                if delta != 0.0 {
                    let col = self.w1.col(j);
                    for (i, ri) in residual.iter_mut().enumerate() {
                        *ri -= col[i] * delta;
                    }
                    q_mean[j] = new_mean;
                }
            }
        }
        // With zero sweeps (or frozen means) the variances are still needed.
        if q_var.iter().all(|&v| v == 0.0) {
            for j in 0..m {
                let base = self.unit_base(j, &prior_mean, &col_sq, &residual, q_mean[j]);
                q_var[j] = truncnorm::trunc_var(&base, &self.trug.interval(j));
            }
        }
        MeanFieldState {
            q_mean,
            q_var,
            cycles_run: start_cycle + n_cycles,
        }
    }

    /// Coordinate-ascent mean field on the clamped posterior, started from
    /// the free-phase means and run for exactly n_cycles sweeps in
    /// ascending unit order.
    pub fn mean_field_posterior(&self, x: &[f64], y: &[f64], n_cycles: usize) -> Result<MeanFieldState> {
        if n_cycles == 0 {
            return Err(TrugError::Contract("mean field requires n_cycles >= 1".into()));
        }
        let init: Vec<f64> = self
            .prior_hidden(x)
            .iter()
            .map(|(base, iv)| truncnorm::trunc_mean(base, iv))
            .collect();
        Ok(self.mean_field_sweeps(x, y, init, 0, n_cycles))
    }

    /// Continue mean field from an existing state (used to check
    /// convergence: one more sweep from a fixed point is a no-op).
    pub fn mean_field_continue(
        &self,
        x: &[f64],
        y: &[f64],
        state: &MeanFieldState,
        n_cycles: usize,
    ) -> MeanFieldState {
        self.mean_field_sweeps(x, y, state.q_mean.clone(), state.cycles_run, n_cycles)
    }

    /// Per-example gradient pieces: weight bundle plus the clamped/free
    /// boundary densities of every hidden unit.
    fn example_grads(
        &self,
        x: &[f64],
        y: &[f64],
        n_cycles: usize,
    ) -> Result<(TggmGrad, [Vec<f64>; 4])> {
        let p = self.n_inputs();
        let m = self.n_hidden();
        let q = self.n_outputs();
        let s2 = self.sigma2;
        let state = self.mean_field_posterior(x, y, n_cycles)?;

        let prior = self.prior_hidden(x);
        let prior_mean: Vec<f64> = prior.iter().map(|(b, _)| b.mean()).collect();
        let free_mean: Vec<f64> = prior.iter().map(|(b, iv)| truncnorm::trunc_mean(b, iv)).collect();
        let free_var: Vec<f64> = prior.iter().map(|(b, iv)| truncnorm::trunc_var(b, iv)).collect();

        let mut g = TggmGrad::zeros(p, m, q);
        // Output residual at the mean-field mean.
        let mut res_y = self.w1.matvec(&state.q_mean);
        for (i, r) in res_y.iter_mut().enumerate() {
            *r = y[i] - self.b1[i] - *r;
        }
        // Output layer: only the clamped phase contributes (the free-phase
        // residual has zero mean given h).
        g.dw1.add_outer(1.0 / s2, &res_y, &state.q_mean);
        for jj in 0..m {
            for i in 0..q {
                *g.dw1.at_mut(i, jj) -= self.w1.at(i, jj) * state.q_var[jj] / s2;
            }
        }
        for i in 0..q {
            g.db1[i] = res_y[i] / s2;
        }
        // Input layer: difference of hidden means between the phases.
        let diff: Vec<f64> = state.q_mean.iter().zip(&free_mean).map(|(c, f)| (c - f) / s2).collect();
        g.dw0.add_outer(1.0, &diff, x);
        g.db0 = diff;
        // Noise variance through ln sigma^2: expected energies of the two
        // phases. Free phase: the output residual contributes q sigma^2.
        if self.sigma2_trainable {
            let col_sq: Vec<f64> = (0..m).map(|j| {
                let c = self.w1.col(j);
                mat::dot(&c, &c)
            }).collect();
            let mut s_clamp = mat::dot(&res_y, &res_y);
            for j in 0..m {
                s_clamp += col_sq[j] * state.q_var[j];
                let r = state.q_mean[j] - prior_mean[j];
                s_clamp += r * r + state.q_var[j];
            }
            let mut s_free = q as f64 * s2;
            for j in 0..m {
                let r = free_mean[j] - prior_mean[j];
                s_free += r * r + free_var[j];
            }
            g.d_log_sigma2 = (s_clamp - s_free) / (2.0 * s2);
        }

        // Boundary densities: free phase exact, clamped phase from the
        // final mean-field marginals.
        let col_sq: Vec<f64> = (0..m).map(|j| {
            let c = self.w1.col(j);
            mat::dot(&c, &c)
        }).collect();
        let mut clamped_lo = vec![0.0; m];
        let mut clamped_up = vec![0.0; m];
        let mut free_lo = vec![0.0; m];
        let mut free_up = vec![0.0; m];
        for j in 0..m {
            let iv = self.trug.interval(j);
            let marginal = self.unit_base(j, &prior_mean, &col_sq, &res_y, state.q_mean[j]);
            clamped_lo[j] = crate::rbm::boundary_density(&marginal, &iv, iv.lower());
            clamped_up[j] = crate::rbm::boundary_density(&marginal, &iv, iv.upper());
            free_lo[j] = crate::rbm::boundary_density(&prior[j].0, &iv, iv.lower());
            free_up[j] = crate::rbm::boundary_density(&prior[j].0, &iv, iv.upper());
        }
        Ok((g, [clamped_lo, clamped_up, free_lo, free_up]))
    }

    /// Batch-averaged maximum-likelihood gradients for weights, biases,
    /// the (log) noise variance and the truncation points.
    pub fn ml_grads(
        &self,
        x_batch: &[Vec<f64>],
        y_batch: &[Vec<f64>],
        n_cycles: usize,
    ) -> Result<(TggmGrad, TrugGrad)> {
        if x_batch.is_empty() || x_batch.len() != y_batch.len() {
            return Err(TrugError::Contract(
                "gradient needs matching nonempty input/target batches".into(),
            ));
        }
        let results = exec::map_indexed(x_batch, |i, x| self.example_grads(x, &y_batch[i], n_cycles));
        let mut total = TggmGrad::zeros(self.n_inputs(), self.n_hidden(), self.n_outputs());
        let mut rows: [Vec<Vec<f64>>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for r in results {
            let (g, densities) = r?;
            total.add_assign(&g);
            for (dst, src) in rows.iter_mut().zip(densities.into_iter()) {
                dst.push(src);
            }
        }
        total.scale(1.0 / x_batch.len() as f64);
        let [clamped_lo, clamped_up, free_lo, free_up] = rows;
        let tg = self
            .trug
            .accumulate_boundary_grad(&clamped_lo, &clamped_up, &free_lo, &free_up)?;
        Ok((total, tg))
    }

    pub fn ml_weight_grad(
        &self,
        x_batch: &[Vec<f64>],
        y_batch: &[Vec<f64>],
        n_cycles: usize,
    ) -> Result<TggmGrad> {
        Ok(self.ml_grads(x_batch, y_batch, n_cycles)?.0)
    }

    pub fn ml_trunc_grad(
        &self,
        x_batch: &[Vec<f64>],
        y_batch: &[Vec<f64>],
        n_cycles: usize,
    ) -> Result<TrugGrad> {
        Ok(self.ml_grads(x_batch, y_batch, n_cycles)?.1)
    }

    /// Root mean squared prediction error over a test set, averaged over
    /// examples and output dimensions.
    pub fn rmse(&self, x_test: &[Vec<f64>], y_test: &[Vec<f64>]) -> Result<f64> {
        if x_test.is_empty() || x_test.len() != y_test.len() {
            return Err(TrugError::Contract(
                "rmse needs matching nonempty input/target sets".into(),
            ));
        }
        let per_example = exec::map_indexed(x_test, |i, x| {
            self.predict(x)
                .iter()
                .zip(&y_test[i])
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
        });
        let total: f64 = per_example.iter().sum();
        Ok((total / (x_test.len() * self.n_outputs()) as f64).sqrt())
    }
}

#[cfg(test)]
mod tests;
