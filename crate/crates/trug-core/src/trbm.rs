//! Temporal RBM over binary frame sequences with truncated-Gaussian
//! hidden units.
//!
//! Per-timestep energy:
//! E(x_t, h_t) = 1/2 (x_t' diag(a) x_t + h_t' diag(d) h_t)
//!   - x_t' W1 h_t - c' h_t - (W2 x_{t-1})' h_t - b' x_t
//!   - (W3 x_{t-1})' x_t - (W4 h_{t-1})' h_t.
//!
//! Given the previous frame and hidden state, each timestep is an ordinary
//! RBM: for binary x the diagonal term folds into the visible bias
//! (x_i^2 = x_i gives b_eff = b + W3 x_{t-1} - a/2) and the history terms
//! fold into the hidden bias (c_eff = c + W2 x_{t-1} + W4 h_{t-1}).
//! Everything downstream — conditionals, CD, exact enumeration on small
//! models — reuses the RBM machinery on that reduction. The initial step
//! uses the same reduction with zeroed history.
//!
//! Training maximizes the filtering lower bound: hidden trajectories are
//! sampled forward through the filtering posterior, and each timestep
//! contributes a conditional-RBM CD gradient that is mapped back onto the
//! temporal parameters.

use rand::Rng;

use crate::error::{Result, TrugError};
use crate::exec;
use crate::mat::{self, Mat};
use crate::rbm::{stream_rng, RbmModel};
use crate::truncnorm::{self, special, GaussianBase, TruncationInterval};
use crate::trug::{TrugGrad, TrugParams};

/// One sequence: T frames of n binary pixels.
pub type Sequence = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrbmModel {
    /// Visible-hidden coupling within a timestep, n x m.
    pub w1: Mat,
    /// Previous frame to current hiddens, m x n.
    pub w2: Mat,
    /// Previous frame to current frame, n x n.
    pub w3: Mat,
    /// Previous hiddens to current hiddens, m x m.
    pub w4: Mat,
    /// Visible diagonal term, length n.
    pub a: Vec<f64>,
    /// Visible bias, length n.
    pub b: Vec<f64>,
    /// Hidden bias, length m.
    pub c: Vec<f64>,
    /// Hidden precisions, length m.
    pub d: Vec<f64>,
    pub trug: TrugParams,
}

impl TrbmModel {
    pub fn init<R: Rng + ?Sized>(
        n_visible: usize,
        n_hidden: usize,
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
            w1: Mat::gaussian(n_visible, n_hidden, 0.1, rng),
            w2: Mat::gaussian(n_hidden, n_visible, 0.1, rng),
            w3: Mat::gaussian(n_visible, n_visible, 0.1, rng),
            w4: Mat::gaussian(n_hidden, n_hidden, 0.1, rng),
            a: vec![0.0; n_visible],
            b: vec![0.0; n_visible],
            c: vec![0.0; n_hidden],
            d: vec![1.0; n_hidden],
            trug,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w1.cols()
    }

    /// The per-timestep RBM given the previous frame and hidden state.
    /// Zero history yields the initial-step model.
    pub fn conditional_rbm(&self, x_prev: &[f64], h_prev: &[f64]) -> RbmModel {
        let mut b_eff: Vec<f64> = self
            .b
            .iter()
            .zip(&self.a)
            .map(|(b, a)| b - 0.5 * a)
            .collect();
        mat::add_vec(&mut b_eff, &self.w3.matvec(x_prev));
        let mut c_eff = self.c.clone();
        mat::add_vec(&mut c_eff, &self.w2.matvec(x_prev));
        mat::add_vec(&mut c_eff, &self.w4.matvec(h_prev));
        RbmModel {
            w: self.w1.clone(),
            b: b_eff,
            c: c_eff,
            d: self.d.clone(),
            trug: self.trug.clone(),
        }
    }

    /// Factorized truncated-normal parameters of the filtering conditional
    /// p(h_t | x_{t-1}, h_{t-1}, x_t).
    pub fn hidden_filter_conditional(
        &self,
        x_prev: &[f64],
        h_prev: &[f64],
        x_t: &[f64],
    ) -> Vec<(GaussianBase, TruncationInterval)> {
        self.conditional_rbm(x_prev, h_prev).hidden_conditional(x_t)
    }

    /// Forward pass through the filtering posterior
    /// q(H|X) = p(h_1|x_1) prod_t p(h_t | x_{t-1}, h_{t-1}, x_t).
    /// Sample mode draws each h_t; mean mode propagates conditional means.
    pub fn filter_posterior<R: Rng + ?Sized>(
        &self,
        sequence: &Sequence,
        sample: bool,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.n_visible();
        let m = self.n_hidden();
        let mut x_prev = vec![0.0; n];
        let mut h_prev = vec![0.0; m];
        let mut out = Vec::with_capacity(sequence.len());
        for frame in sequence {
            let conds = self.hidden_filter_conditional(&x_prev, &h_prev, frame);
            let mut h = Vec::with_capacity(m);
            for (base, iv) in &conds {
                h.push(if sample {
                    truncnorm::sample(base, iv, rng)?
                } else {
                    truncnorm::trunc_mean(base, iv)
                });
            }
            x_prev = frame.clone();
            h_prev = h.clone();
            out.push(h);
        }
        Ok(out)
    }

    fn per_sequence_grads<R: Rng + ?Sized>(
        &self,
        seq: &Sequence,
        k: usize,
        rng: &mut R,
    ) -> Result<(TrbmGrad, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.n_visible();
        let m = self.n_hidden();
        let mut g = TrbmGrad::zeros(n, m);
        // Per-sequence boundary densities summed over timesteps.
        let mut data_lo = vec![0.0; m];
        let mut data_up = vec![0.0; m];
        let mut model_lo = vec![0.0; m];
        let mut model_up = vec![0.0; m];

        let mut x_prev = vec![0.0; n];
        let mut h_prev = vec![0.0; m];
        for frame in seq {
            let cond = self.conditional_rbm(&x_prev, &h_prev);
            let phases = cond.cd_phases_one(frame, k, rng)?;
            let (pos, neg) = &phases;
            // Map the conditional-RBM statistics onto temporal parameters.
            g.dw1.add_outer(1.0, &pos.x, &pos.h_mean);
            g.dw1.add_outer(-1.0, &neg.x, &neg.h_mean);
            let dh: Vec<f64> = pos.h_mean.iter().zip(&neg.h_mean).map(|(p, q)| p - q).collect();
            let dx: Vec<f64> = pos.x.iter().zip(&neg.x).map(|(p, q)| p - q).collect();
            g.dw2.add_outer(1.0, &dh, &x_prev);
            g.dw3.add_outer(1.0, &dx, &x_prev);
            g.dw4.add_outer(1.0, &dh, &h_prev);
            for i in 0..n {
                g.db[i] += dx[i];
                g.da[i] += -0.5 * dx[i];
            }
            for j in 0..m {
                g.dc[j] += dh[j];
                g.dd[j] += -0.5 * (pos.h_second[j] - neg.h_second[j]);
                data_lo[j] += pos.lower_density[j];
                data_up[j] += pos.upper_density[j];
                model_lo[j] += neg.lower_density[j];
                model_up[j] += neg.upper_density[j];
            }
            // Advance the sampled filtering trajectory.
            let conds = cond.hidden_conditional(frame);
            for (j, (base, iv)) in conds.iter().enumerate() {
                h_prev[j] = truncnorm::sample(base, iv, rng)?;
            }
            x_prev = frame.clone();
        }
        Ok((g, data_lo, data_up, model_lo, model_up))
    }

    /// Lower-bound CD-k gradients for all weight-type parameters and the
    /// truncation points, batch-averaged over sequences (timesteps are
    /// summed, matching the lower bound).
    pub fn lower_bound_grads(
        &self,
        batch: &[Sequence],
        k: usize,
        seed: u64,
    ) -> Result<(TrbmGrad, TrugGrad)> {
        if batch.is_empty() {
            return Err(TrugError::Contract("empty sequence batch".into()));
        }
        if batch.iter().any(|s| s.len() < 2) {
            return Err(TrugError::Contract(
                "training sequences need at least 2 frames".into(),
            ));
        }
        let results = exec::map_indexed(batch, |i, seq| {
            let mut rng = stream_rng(seed, i as u64);
            self.per_sequence_grads(seq, k, &mut rng)
        });
        let n = self.n_visible();
        let m = self.n_hidden();
        let mut total = TrbmGrad::zeros(n, m);
        let mut data_lo = Vec::new();
        let mut data_up = Vec::new();
        let mut model_lo = Vec::new();
        let mut model_up = Vec::new();
        for r in results {
            let (g, dl, du, ml, mu) = r?;
            total.add_assign(&g);
            data_lo.push(dl);
            data_up.push(du);
            model_lo.push(ml);
            model_up.push(mu);
        }
        total.scale(1.0 / batch.len() as f64);
        let tg = self
            .trug
            .accumulate_boundary_grad(&data_lo, &data_up, &model_lo, &model_up)?;
        Ok((total, tg))
    }

    pub fn lower_bound_weight_grad(&self, batch: &[Sequence], k: usize, seed: u64) -> Result<TrbmGrad> {
        Ok(self.lower_bound_grads(batch, k, seed)?.0)
    }

    pub fn lower_bound_trunc_grad(&self, batch: &[Sequence], k: usize, seed: u64) -> Result<TrugGrad> {
        Ok(self.lower_bound_grads(batch, k, seed)?.1)
    }

    /// Deterministic one-step-ahead prediction: filter the history in mean
    /// mode, push the hidden state one step forward without a current
    /// frame, and return the visible Bernoulli means.
    pub fn predict_next_frame(&self, history: &[Vec<f64>]) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(TrugError::Contract("prediction needs at least one frame".into()));
        }
        let filtered = self.filter_posterior(&history.to_vec(), false, &mut NoRng)?;
        let x_t = history.last().unwrap();
        let h_t = filtered.last().unwrap();
        // h_{t+1} prior mean given history only (no W1 term: the next frame
        // is what we are predicting).
        let mut act = self.w2.matvec(x_t);
        mat::add_vec(&mut act, &self.w4.matvec(h_t));
        mat::add_vec(&mut act, &self.c);
        let mut h_next = Vec::with_capacity(self.n_hidden());
        for (j, &aj) in act.iter().enumerate() {
            let base = GaussianBase::new(aj / self.d[j], 1.0 / self.d[j])?;
            h_next.push(truncnorm::trunc_mean(&base, &self.trug.interval(j)));
        }
        let mut logits = self.w1.matvec(&h_next);
        mat::add_vec(&mut logits, &self.w3.matvec(x_t));
        for (i, l) in logits.iter_mut().enumerate() {
            *l += self.b[i] - 0.5 * self.a[i];
        }
        Ok(logits.iter().map(|&l| special::sigmoid(l)).collect())
    }

    /// Mean over sequences and predicted frames of the per-frame summed
    /// squared error between the one-step prediction and the true frame.
    pub fn prediction_error(&self, batch: &[Sequence]) -> Result<f64> {
        if batch.is_empty() || batch.iter().any(|s| s.len() < 2) {
            return Err(TrugError::Contract(
                "prediction error needs sequences with at least 2 frames".into(),
            ));
        }
        let per_seq = exec::map_collect(batch, |seq| -> Result<f64> {
            let mut total = 0.0;
            for t in 1..seq.len() {
                let pred = self.predict_next_frame(&seq[..t])?;
                total += pred
                    .iter()
                    .zip(&seq[t])
                    .map(|(p, x)| (p - x) * (p - x))
                    .sum::<f64>();
            }
            Ok(total / (seq.len() - 1) as f64)
        });
        let mut sum = 0.0;
        for r in per_seq {
            sum += r?;
        }
        Ok(sum / batch.len() as f64)
    }
}

/// Gradient bundle over all temporal parameters (ascent direction).
#[derive(Debug, Clone, PartialEq)]
pub struct TrbmGrad {
    pub dw1: Mat,
    pub dw2: Mat,
    pub dw3: Mat,
    pub dw4: Mat,
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    pub dc: Vec<f64>,
    pub dd: Vec<f64>,
}

impl TrbmGrad {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            dw1: Mat::zeros(n, m),
            dw2: Mat::zeros(m, n),
            dw3: Mat::zeros(n, n),
            dw4: Mat::zeros(m, m),
            da: vec![0.0; n],
            db: vec![0.0; n],
            dc: vec![0.0; m],
            dd: vec![0.0; m],
        }
    }

    pub fn add_assign(&mut self, other: &TrbmGrad) {
        self.dw1.add_assign(&other.dw1);
        self.dw2.add_assign(&other.dw2);
        self.dw3.add_assign(&other.dw3);
        self.dw4.add_assign(&other.dw4);
        mat::add_vec(&mut self.da, &other.da);
        mat::add_vec(&mut self.db, &other.db);
        mat::add_vec(&mut self.dc, &other.dc);
        mat::add_vec(&mut self.dd, &other.dd);
    }

    pub fn scale(&mut self, s: f64) {
        self.dw1.scale(s);
        self.dw2.scale(s);
        self.dw3.scale(s);
        self.dw4.scale(s);
        mat::scale_vec(&mut self.da, s);
        mat::scale_vec(&mut self.db, s);
        mat::scale_vec(&mut self.dc, s);
        mat::scale_vec(&mut self.dd, s);
    }
}

/// Rng stand-in for code paths that are statically deterministic (mean-mode
/// filtering); panics if a draw is ever requested.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic path requested a random draw")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic path requested a random draw")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("deterministic path requested a random draw")
    }
}
