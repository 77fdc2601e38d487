//! Restricted Boltzmann machine with binary visible units and truncated
//! Gaussian hidden units.
//!
//! Energy: E(x, h) = 1/2 h' diag(d) h - x' W h - b' x - c' h, with each
//! h_j confined to its truncation interval. Hidden conditionals are
//! factorized truncated normals, visible conditionals factorized
//! Bernoullis, which makes blocked Gibbs sampling and CD-k training
//! straightforward. For small models the partition function has a closed
//! form per visible state, so exact log-likelihoods and gradients are
//! available as oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrugError};
use crate::exec;
use crate::mat::{self, Mat};
use crate::truncnorm::{self, special, GaussianBase, TruncationInterval};
use crate::trug::{TrugGrad, TrugParams};

/// Exact enumeration is refused beyond this many visible units.
pub const ENUM_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct RbmModel {
    /// Visible-hidden coupling, n x m.
    pub w: Mat,
    /// Visible bias, length n.
    pub b: Vec<f64>,
    /// Hidden bias, length m.
    pub c: Vec<f64>,
    /// Hidden precisions, length m, strictly positive.
    pub d: Vec<f64>,
    /// Truncation intervals over the m hidden units.
    pub trug: TrugParams,
}

impl RbmModel {
    /// Standard initialization: W ~ N(0, 0.01), b = c = 0, d = 1.
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
            w: Mat::gaussian(n_visible, n_hidden, 0.1, rng),
            b: vec![0.0; n_visible],
            c: vec![0.0; n_hidden],
            d: vec![1.0; n_hidden],
            trug,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.w.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_visible();
        let m = self.n_hidden();
        if self.b.len() != n || self.c.len() != m || self.d.len() != m || self.trug.units() != m {
            return Err(TrugError::Contract("RBM parameter shapes disagree".into()));
        }
        if self.d.iter().any(|&dj| !(dj > 0.0) || !dj.is_finite()) {
            return Err(TrugError::Contract("hidden precisions must be positive and finite".into()));
        }
        let finite = self.w.data().iter().chain(&self.b).chain(&self.c).all(|v| v.is_finite());
        if !finite {
            return Err(TrugError::Contract("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    /// Per-unit truncated-normal parameters of p(h | x): base mean
    /// [W'x + c]_j / d_j and variance 1/d_j on the unit's interval.
    pub fn hidden_conditional(&self, x: &[f64]) -> Vec<(GaussianBase, TruncationInterval)> {
        let mut act = self.w.matvec_t(x);
        mat::add_vec(&mut act, &self.c);
        act.iter()
            .enumerate()
            .map(|(j, &a)| {
                let base = GaussianBase::new(a / self.d[j], 1.0 / self.d[j])
                    .expect("validated precisions give a finite base");
                (base, self.trug.interval(j))
            })
            .collect()
    }

    /// Bernoulli probabilities of p(x | h) = prod sigmoid([W h + b]_i).
    pub fn visible_conditional(&self, h: &[f64]) -> Vec<f64> {
        let mut act = self.w.matvec(h);
        mat::add_vec(&mut act, &self.b);
        act.iter().map(|&a| special::sigmoid(a)).collect()
    }

    /// ln p*(x): the closed-form visible marginal with the partition
    /// constant left out, computed in the log domain.
    pub fn log_unnorm_prob(&self, x: &[f64]) -> f64 {
        let mut act = self.w.matvec_t(x);
        mat::add_vec(&mut act, &self.c);
        let mut lp = mat::dot(&self.b, x);
        for (j, &a) in act.iter().enumerate() {
            let sd = self.d[j].sqrt();
            let gamma = a / sd;
            let iv = self.trug.interval(j);
            let lo = if iv.lower() == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                sd * iv.lower() - gamma
            };
            let hi = if iv.upper() == f64::INFINITY {
                f64::INFINITY
            } else {
                sd * iv.upper() - gamma
            };
            lp += 0.5 * gamma * gamma + special::LN_SQRT_2PI - sd.ln()
                + special::log_norm_cdf_diff(lo, hi);
        }
        lp
    }

    /// ln Z by log-sum-exp of ln p*(x) over all 2^n visible states.
    pub fn exact_log_partition(&self) -> Result<f64> {
        let n = self.n_visible();
        if n > ENUM_LIMIT {
            return Err(TrugError::EnumerationTooLarge { n, limit: ENUM_LIMIT });
        }
        let terms = exec::map_range(1usize << n, |s| self.log_unnorm_prob(&bits(s, n)));
        Ok(special::log_sum_exp(&terms))
    }

    /// ln p(x) for enumerable models.
    pub fn exact_log_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_unnorm_prob(x) - self.exact_log_partition()?)
    }

    /// One blocked Gibbs alternation: h ~ p(h|x), then x ~ p(x|h).
    pub fn gibbs_sweep<R: Rng + ?Sized>(&self, chain: &mut GibbsChain, rng: &mut R) -> Result<()> {
        for (j, (base, iv)) in self.hidden_conditional(&chain.x).iter().enumerate() {
            chain.h[j] = truncnorm::sample(base, iv, rng)?;
        }
        for (i, p) in self.visible_conditional(&chain.h).iter().enumerate() {
            chain.x[i] = if rng.random::<f64>() < *p { 1.0 } else { 0.0 };
        }
        chain.step_count += 1;
        Ok(())
    }

    /// Closed-form sufficient statistics of one phase at visible state x:
    /// conditional first/second moments of h and the boundary densities at
    /// the truncation endpoints (zero at infinite endpoints).
    pub fn phase_stats(&self, x: &[f64]) -> PhaseStats {
        let conds = self.hidden_conditional(x);
        let m = conds.len();
        let mut st = PhaseStats {
            x: x.to_vec(),
            h_mean: Vec::with_capacity(m),
            h_second: Vec::with_capacity(m),
            lower_density: Vec::with_capacity(m),
            upper_density: Vec::with_capacity(m),
        };
        for (base, iv) in &conds {
            let mean = truncnorm::trunc_mean(base, iv);
            let var = truncnorm::trunc_var(base, iv);
            st.h_mean.push(mean);
            st.h_second.push(var + mean * mean);
            st.lower_density.push(boundary_density(base, iv, iv.lower()));
            st.upper_density.push(boundary_density(base, iv, iv.upper()));
        }
        st
    }

    /// Run a data-initialized Gibbs chain for k sweeps, returning the final
    /// visible state.
    fn negative_state<R: Rng + ?Sized>(&self, x0: &[f64], k: usize, rng: &mut R) -> Result<Vec<f64>> {
        let mut chain = GibbsChain::start(x0.to_vec(), self.n_hidden());
        for _ in 0..k {
            self.gibbs_sweep(&mut chain, rng)?;
        }
        Ok(chain.x)
    }

    /// Positive/negative phase statistics of CD-k for one example, using a
    /// caller-provided generator (the temporal model threads one generator
    /// through a whole sequence).
    pub fn cd_phases_one<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        k: usize,
        rng: &mut R,
    ) -> Result<(PhaseStats, PhaseStats)> {
        if k == 0 {
            return Err(TrugError::Contract("CD requires k >= 1".into()));
        }
        let pos = self.phase_stats(x);
        let xk = self.negative_state(x, k, rng)?;
        let neg = self.phase_stats(&xk);
        Ok((pos, neg))
    }

    /// Per-example positive/negative phase statistics for CD-k. Examples
    /// run in parallel, each on its own random stream derived from `seed`.
    fn cd_phases(
        &self,
        x_batch: &[Vec<f64>],
        k: usize,
        seed: u64,
    ) -> Result<Vec<(PhaseStats, PhaseStats)>> {
        if x_batch.is_empty() {
            return Err(TrugError::Contract("CD requires a nonempty batch".into()));
        }
        if k == 0 {
            return Err(TrugError::Contract("CD requires k >= 1".into()));
        }
        let results = exec::map_indexed(x_batch, |i, x| -> Result<(PhaseStats, PhaseStats)> {
            let mut rng = stream_rng(seed, i as u64);
            let pos = self.phase_stats(x);
            let xk = self.negative_state(x, k, &mut rng)?;
            let neg = self.phase_stats(&xk);
            Ok((pos, neg))
        });
        results.into_iter().collect()
    }

    /// CD-k ascent gradient for (W, b, c, d), batch-averaged.
    pub fn cd_weight_grad(&self, x_batch: &[Vec<f64>], k: usize, seed: u64) -> Result<RbmGrad> {
        let phases = self.cd_phases(x_batch, k, seed)?;
        Ok(self.assemble_weight_grad(&phases))
    }

    /// CD-k truncation-point gradient via the boundary densities of the
    /// data-clamped and chain-end conditionals.
    pub fn cd_trunc_grad(&self, x_batch: &[Vec<f64>], k: usize, seed: u64) -> Result<TrugGrad> {
        let phases = self.cd_phases(x_batch, k, seed)?;
        self.assemble_trunc_grad(&phases)
    }

    /// Both CD-k gradients from one shared set of chains (what the training
    /// loop uses; the two single-purpose entry points re-run the chains).
    pub fn cd_grads(
        &self,
        x_batch: &[Vec<f64>],
        k: usize,
        seed: u64,
    ) -> Result<(RbmGrad, TrugGrad)> {
        let phases = self.cd_phases(x_batch, k, seed)?;
        let wg = self.assemble_weight_grad(&phases);
        let tg = self.assemble_trunc_grad(&phases)?;
        Ok((wg, tg))
    }

    fn assemble_weight_grad(&self, phases: &[(PhaseStats, PhaseStats)]) -> RbmGrad {
        let n = self.n_visible();
        let m = self.n_hidden();
        let mut g = RbmGrad::zeros(n, m);
        for (pos, neg) in phases {
            g.dw.add_outer(1.0, &pos.x, &pos.h_mean);
            g.dw.add_outer(-1.0, &neg.x, &neg.h_mean);
            for i in 0..n {
                g.db[i] += pos.x[i] - neg.x[i];
            }
            for j in 0..m {
                g.dc[j] += pos.h_mean[j] - neg.h_mean[j];
                g.dd[j] += -0.5 * (pos.h_second[j] - neg.h_second[j]);
            }
        }
        g.scale(1.0 / phases.len() as f64);
        g
    }

    fn assemble_trunc_grad(&self, phases: &[(PhaseStats, PhaseStats)]) -> Result<TrugGrad> {
        let data_lower: Vec<Vec<f64>> = phases.iter().map(|(p, _)| p.lower_density.clone()).collect();
        let data_upper: Vec<Vec<f64>> = phases.iter().map(|(p, _)| p.upper_density.clone()).collect();
        let model_lower: Vec<Vec<f64>> = phases.iter().map(|(_, n)| n.lower_density.clone()).collect();
        let model_upper: Vec<Vec<f64>> = phases.iter().map(|(_, n)| n.upper_density.clone()).collect();
        self.trug
            .accumulate_boundary_grad(&data_lower, &data_upper, &model_lower, &model_upper)
    }

    /// Exact log-likelihood gradient for enumerable models: the data phase
    /// averages closed-form statistics over the batch, the model phase
    /// weights them by the exact p(x).
    pub fn exact_grad(&self, x_batch: &[Vec<f64>]) -> Result<(RbmGrad, TrugGrad)> {
        if x_batch.is_empty() {
            return Err(TrugError::Contract("exact gradient requires a nonempty batch".into()));
        }
        let n = self.n_visible();
        if n > ENUM_LIMIT {
            return Err(TrugError::EnumerationTooLarge { n, limit: ENUM_LIMIT });
        }
        let m = self.n_hidden();
        let log_z = self.exact_log_partition()?;

        // Model-expectation of the phase statistics.
        let states = 1usize << n;
        let all: Vec<(f64, PhaseStats)> = exec::map_range(states, |s| {
            let x = bits(s, n);
            let p = (self.log_unnorm_prob(&x) - log_z).exp();
            (p, self.phase_stats(&x))
        });
        let mut model = PhaseStats::zeros(n, m);
        for (p, st) in &all {
            model.add_scaled(*p, st);
        }

        let mut data = PhaseStats::zeros(n, m);
        for x in x_batch {
            data.add_scaled(1.0 / x_batch.len() as f64, &self.phase_stats(x));
        }

        let mut g = RbmGrad::zeros(n, m);
        // Expected outer products: data term uses per-example outer
        // products, model term the state-weighted ones, so recompute both
        // exactly rather than from the averaged vectors.
        for x in x_batch {
            let st = self.phase_stats(x);
            g.dw.add_outer(1.0 / x_batch.len() as f64, &st.x, &st.h_mean);
        }
        for (p, st) in &all {
            g.dw.add_outer(-p, &st.x, &st.h_mean);
        }
        for i in 0..n {
            g.db[i] = data.x[i] - model.x[i];
        }
        for j in 0..m {
            g.dc[j] = data.h_mean[j] - model.h_mean[j];
            g.dd[j] = -0.5 * (data.h_second[j] - model.h_second[j]);
        }
        let tg = self.trug.accumulate_boundary_grad(
            &[data.lower_density.clone()],
            &[data.upper_density.clone()],
            &[model.lower_density.clone()],
            &[model.upper_density.clone()],
        )?;
        Ok((g, tg))
    }

    /// Independent fantasy chains from uniform random visible starts.
    pub fn sample_fantasy(&self, n_steps: usize, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let n = self.n_visible();
        let results = exec::map_range(n_samples, |i| -> Result<Vec<f64>> {
            let mut rng = stream_rng(seed, i as u64);
            let x0: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();
            self.negative_state(&x0, n_steps, &mut rng)
        });
        results.into_iter().collect()
    }
}

/// Visible/hidden state of one Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub step_count: usize,
}

impl GibbsChain {
    pub fn start(x: Vec<f64>, n_hidden: usize) -> Self {
        Self {
            x,
            h: vec![0.0; n_hidden],
            step_count: 0,
        }
    }
}

/// Closed-form statistics of one CD phase at a fixed visible state.
#[derive(Debug, Clone)]
pub struct PhaseStats {
    pub x: Vec<f64>,
    pub h_mean: Vec<f64>,
    pub h_second: Vec<f64>,
    pub lower_density: Vec<f64>,
    pub upper_density: Vec<f64>,
}

impl PhaseStats {
    fn zeros(n: usize, m: usize) -> Self {
        Self {
            x: vec![0.0; n],
            h_mean: vec![0.0; m],
            h_second: vec![0.0; m],
            lower_density: vec![0.0; m],
            upper_density: vec![0.0; m],
        }
    }

    fn add_scaled(&mut self, s: f64, other: &PhaseStats) {
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += s * b;
        }
        for (a, b) in self.h_mean.iter_mut().zip(&other.h_mean) {
            *a += s * b;
        }
        for (a, b) in self.h_second.iter_mut().zip(&other.h_second) {
            *a += s * b;
        }
        for (a, b) in self.lower_density.iter_mut().zip(&other.lower_density) {
            *a += s * b;
        }
        for (a, b) in self.upper_density.iter_mut().zip(&other.upper_density) {
            *a += s * b;
        }
    }
}

/// Ascent gradient bundle for the RBM weight-type parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGrad {
    pub dw: Mat,
    pub db: Vec<f64>,
    pub dc: Vec<f64>,
    pub dd: Vec<f64>,
}

impl RbmGrad {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            dw: Mat::zeros(n, m),
            db: vec![0.0; n],
            dc: vec![0.0; m],
            dd: vec![0.0; m],
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.dw.scale(s);
        mat::scale_vec(&mut self.db, s);
        mat::scale_vec(&mut self.dc, s);
        mat::scale_vec(&mut self.dd, s);
    }

    pub fn add_assign(&mut self, other: &RbmGrad) {
        self.dw.add_assign(&other.dw);
        mat::add_vec(&mut self.db, &other.db);
        mat::add_vec(&mut self.dc, &other.dc);
        mat::add_vec(&mut self.dd, &other.dd);
    }
}

/// Boundary density at a (possibly infinite) truncation endpoint.
pub fn boundary_density(base: &GaussianBase, iv: &TruncationInterval, point: f64) -> f64 {
    if point.is_finite() {
        truncnorm::trunc_density_at(base, iv, point).expect("finite endpoint")
    } else {
        0.0
    }
}

/// Visible state `s` of an n-bit enumeration as a 0/1 vector (bit i is
/// unit i).
pub fn bits(s: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((s >> i) & 1) as f64).collect()
}

/// Deterministic per-item random stream: one key, one stream index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.into());
    rng
}
