//! Gradient-ascent optimizers (SGD with momentum, RMSprop) plus the
//! geometric learning-rate anneal used for truncation points.
//!
//! Everything here works on flat `f64` slices; the model modules expose
//! their parameters as named flat views and apply the updated values back.

use crate::error::{Result, TrugError};

const RMSPROP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// v <- mu v + g; theta <- theta + eta v.
    SgdMomentum { momentum: f64 },
    /// s <- rho s + (1 - rho) g^2; theta <- theta + eta g / sqrt(s + eps).
    RmsProp { decay: f64 },
}

/// Geometric interpolation from `start` to `end` over `horizon` steps,
/// constant at `end` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: usize,
}

impl AnnealSchedule {
    pub fn new(start: f64, end: f64, horizon: usize) -> Result<Self> {
        if !(start > 0.0 && end > 0.0 && end <= start) || horizon == 0 {
            return Err(TrugError::Contract(format!(
                "anneal schedule requires 0 < end <= start and horizon >= 1, got ({start}, {end}, {horizon})"
            )));
        }
        Ok(Self { start, end, horizon })
    }

    /// Constant learning rate as a degenerate schedule.
    pub fn constant(rate: f64) -> Self {
        Self {
            start: rate,
            end: rate,
            horizon: 1,
        }
    }

    pub fn rate_at(&self, step: usize) -> f64 {
        let frac = (step as f64 / self.horizon as f64).min(1.0);
        self.start * (self.end / self.start).powf(frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub trunc_lr: AnnealSchedule,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrugError::Contract(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let m = match self.kind {
            OptimizerKind::SgdMomentum { momentum } => momentum,
            OptimizerKind::RmsProp { decay } => decay,
        };
        if !(0.0..1.0).contains(&m) {
            return Err(TrugError::Contract(format!(
                "momentum/decay must lie in [0, 1), got {m}"
            )));
        }
        Ok(())
    }
}

/// Per-parameter accumulators: one slot vector per registered parameter
/// block, plus the global step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    accumulators: Vec<Vec<f64>>,
    step: usize,
}

impl OptimizerState {
    /// `block_sizes[i]` is the flat length of parameter block i.
    pub fn new(block_sizes: &[usize]) -> Self {
        Self {
            accumulators: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Advance the step counter once per optimizer step (after all blocks
    /// of that step have been updated).
    pub fn advance(&mut self) {
        self.step += 1;
    }

    /// Ascent update of one parameter block in place. `rate_override`
    /// substitutes the annealed truncation-point rate when given.
    pub fn update_block(
        &mut self,
        config: &OptimizerConfig,
        block: usize,
        name: &str,
        params: &mut [f64],
        grads: &[f64],
        rate_override: Option<f64>,
    ) -> Result<()> {
        let acc = &mut self.accumulators[block];
        if acc.len() != params.len() || grads.len() != params.len() {
            return Err(TrugError::Contract(format!(
                "optimizer block '{name}' shape mismatch: acc {}, params {}, grads {}",
                acc.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(TrugError::NonFiniteGradient(name.to_string()));
        }
        let eta = rate_override.unwrap_or(config.learning_rate);
        match config.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, a), g) in params.iter_mut().zip(acc.iter_mut()).zip(grads) {
                    *a = momentum * *a + g;
                    *p += eta * *a;
                }
            }
            OptimizerKind::RmsProp { decay } => {
                for ((p, a), g) in params.iter_mut().zip(acc.iter_mut()).zip(grads) {
                    *a = decay * *a + (1.0 - decay) * g * g;
                    *p += eta * g / (*a + RMSPROP_EPS).sqrt();
                }
            }
        }
        Ok(())
    }

    /// The annealed truncation-point rate at the current step.
    pub fn trunc_rate(&self, config: &OptimizerConfig) -> f64 {
        config.trunc_lr.rate_at(self.step)
    }
}
