//! Truncation-point parameters shared by all three models: shared or
//! per-unit intervals, vectorized moment evaluation, and the boundary
//! density bookkeeping behind the truncation-point gradients.

use crate::error::{Result, TrugError};
use crate::truncnorm::{self, GaussianBase, TruncationInterval};

/// Whether one truncation pair is shared by all units or each unit owns
/// its own pair. Fixed at construction so gradient shapes never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMode {
    Shared,
    PerUnit,
}

/// Minimum allowed gap between lower and upper truncation points after a
/// gradient step.
pub const DEFAULT_MIN_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrugParams {
    mode: TruncationMode,
    units: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_trainable: bool,
    upper_trainable: bool,
}

impl TrugParams {
    /// One truncation pair broadcast over `units` units.
    pub fn shared(interval: TruncationInterval, units: usize) -> Self {
        Self {
            mode: TruncationMode::Shared,
            units,
            lower: vec![interval.lower()],
            upper: vec![interval.upper()],
            lower_trainable: true,
            upper_trainable: true,
        }
    }

    /// A separate pair per unit.
    pub fn per_unit(intervals: Vec<TruncationInterval>) -> Self {
        let units = intervals.len();
        Self {
            mode: TruncationMode::PerUnit,
            units,
            lower: intervals.iter().map(|iv| iv.lower()).collect(),
            upper: intervals.iter().map(|iv| iv.upper()).collect(),
            lower_trainable: true,
            upper_trainable: true,
        }
    }

    /// Rebuild from stored raw vectors (checkpoint loading).
    pub fn from_raw(
        mode: TruncationMode,
        units: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_trainable: bool,
        upper_trainable: bool,
    ) -> Result<Self> {
        let expected = match mode {
            TruncationMode::Shared => 1,
            TruncationMode::PerUnit => units,
        };
        if lower.len() != expected || upper.len() != expected {
            return Err(TrugError::Contract(format!(
                "raw truncation vectors have lengths {}/{}, expected {expected}",
                lower.len(),
                upper.len()
            )));
        }
        for (lo, up) in lower.iter().zip(&upper) {
            if !(lo < up) || lo.is_nan() || up.is_nan() {
                return Err(TrugError::Domain(format!(
                    "invalid truncation pair ({lo}, {up})"
                )));
            }
        }
        Ok(Self {
            mode,
            units,
            lower,
            upper,
            lower_trainable,
            upper_trainable,
        })
    }

    pub fn with_trainable(mut self, lower: bool, upper: bool) -> Self {
        self.lower_trainable = lower;
        self.upper_trainable = upper;
        self
    }

    pub fn mode(&self) -> TruncationMode {
        self.mode
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn lower_trainable(&self) -> bool {
        self.lower_trainable
    }

    pub fn upper_trainable(&self) -> bool {
        self.upper_trainable
    }

    pub fn raw_lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn raw_upper(&self) -> &[f64] {
        &self.upper
    }

    /// Overwrite one stored lower endpoint (index into the raw vector,
    /// i.e. 0 in shared mode). Ordering must still hold.
    pub fn set_lower(&mut self, idx: usize, value: f64) -> Result<()> {
        if !(value < self.upper[idx]) {
            return Err(TrugError::Domain(format!(
                "lower endpoint {value} not below upper {}",
                self.upper[idx]
            )));
        }
        self.lower[idx] = value;
        Ok(())
    }

    /// Overwrite one stored upper endpoint.
    pub fn set_upper(&mut self, idx: usize, value: f64) -> Result<()> {
        if !(value > self.lower[idx]) {
            return Err(TrugError::Domain(format!(
                "upper endpoint {value} not above lower {}",
                self.lower[idx]
            )));
        }
        self.upper[idx] = value;
        Ok(())
    }

    /// The interval governing unit `j` (after broadcast).
    pub fn interval(&self, j: usize) -> TruncationInterval {
        let (lo, up) = match self.mode {
            TruncationMode::Shared => (self.lower[0], self.upper[0]),
            TruncationMode::PerUnit => (self.lower[j], self.upper[j]),
        };
        TruncationInterval::new(lo, up).expect("ordering maintained by clamp_after_step")
    }

    /// Element-wise truncated-normal mean and variance for net inputs `z`
    /// with base variances `sigma2`.
    pub fn activate(&self, z: &[f64], sigma2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if z.len() != self.units || sigma2.len() != self.units {
            return Err(TrugError::Contract(format!(
                "activate shape mismatch: {} units, z len {}, sigma2 len {}",
                self.units,
                z.len(),
                sigma2.len()
            )));
        }
        let mut means = Vec::with_capacity(self.units);
        let mut vars = Vec::with_capacity(self.units);
        for j in 0..self.units {
            let base = GaussianBase::new(z[j], sigma2[j])?;
            let iv = self.interval(j);
            means.push(truncnorm::trunc_mean(&base, &iv));
            vars.push(truncnorm::trunc_var(&base, &iv));
        }
        Ok((means, vars))
    }

    /// Restore `lower + min_gap <= upper` after a gradient step by moving
    /// the violating pair symmetrically about its midpoint. Infinite
    /// endpoints never move.
    pub fn clamp_after_step(&mut self, min_gap: f64) {
        for j in 0..self.lower.len() {
            let lo = self.lower[j];
            let up = self.upper[j];
            if lo.is_infinite() || up.is_infinite() {
                continue;
            }
            if up - lo < min_gap {
                let mid = 0.5 * (lo + up);
                self.lower[j] = mid - 0.5 * min_gap;
                self.upper[j] = mid + 0.5 * min_gap;
            }
        }
    }

    /// Apply an ascent step to the trainable, finite endpoints.
    pub fn apply_step(&mut self, grad: &TrugGrad, rate: f64, min_gap: f64) {
        if self.lower_trainable {
            for (lo, g) in self.lower.iter_mut().zip(&grad.d_lower) {
                if lo.is_finite() {
                    *lo += rate * g;
                }
            }
        }
        if self.upper_trainable {
            for (up, g) in self.upper.iter_mut().zip(&grad.d_upper) {
                if up.is_finite() {
                    *up += rate * g;
                }
            }
        }
        self.clamp_after_step(min_gap);
    }

    /// Combine per-example boundary densities into the truncation-point
    /// gradient: d_upper[j] = mean_batch(data - model) at xi2 and
    /// d_lower[j] = mean_batch(model - data) at xi1, with the per-unit
    /// contributions summed in shared mode. Each row of the inputs holds
    /// the per-unit boundary densities for one example; units with an
    /// infinite endpoint must carry density 0 there.
    pub fn accumulate_boundary_grad(
        &self,
        data_lower: &[Vec<f64>],
        data_upper: &[Vec<f64>],
        model_lower: &[Vec<f64>],
        model_upper: &[Vec<f64>],
    ) -> Result<TrugGrad> {
        let batch = data_lower.len();
        if batch == 0 || data_upper.len() != batch || model_lower.len() != batch || model_upper.len() != batch {
            return Err(TrugError::Contract(
                "boundary gradient requires equal, nonempty batches".into(),
            ));
        }
        for rows in [data_lower, data_upper, model_lower, model_upper] {
            for row in rows {
                if row.len() != self.units {
                    return Err(TrugError::Contract(format!(
                        "boundary row has {} entries for {} units",
                        row.len(),
                        self.units
                    )));
                }
                if row.iter().any(|&v| v < 0.0 || v.is_nan()) {
                    return Err(TrugError::Contract(
                        "boundary densities must be nonnegative".into(),
                    ));
                }
            }
        }
        let mut per_unit_lower = vec![0.0; self.units];
        let mut per_unit_upper = vec![0.0; self.units];
        for i in 0..batch {
            for j in 0..self.units {
                per_unit_upper[j] += data_upper[i][j] - model_upper[i][j];
                per_unit_lower[j] += model_lower[i][j] - data_lower[i][j];
            }
        }
        let bf = batch as f64;
        for v in per_unit_lower.iter_mut().chain(per_unit_upper.iter_mut()) {
            *v /= bf;
        }
        Ok(match self.mode {
            TruncationMode::Shared => TrugGrad {
                d_lower: vec![per_unit_lower.iter().sum()],
                d_upper: vec![per_unit_upper.iter().sum()],
            },
            TruncationMode::PerUnit => TrugGrad {
                d_lower: per_unit_lower,
                d_upper: per_unit_upper,
            },
        })
    }

    /// A zero gradient of the right shape.
    pub fn zero_grad(&self) -> TrugGrad {
        let len = self.lower.len();
        TrugGrad {
            d_lower: vec![0.0; len],
            d_upper: vec![0.0; len],
        }
    }
}

/// Gradient w.r.t. the truncation points; length 1 in shared mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrugGrad {
    pub d_lower: Vec<f64>,
    pub d_upper: Vec<f64>,
}

impl TrugGrad {
    pub fn add_assign(&mut self, other: &TrugGrad) {
        crate::mat::add_vec(&mut self.d_lower, &other.d_lower);
        crate::mat::add_vec(&mut self.d_upper, &other.d_upper);
    }

    pub fn scale(&mut self, s: f64) {
        crate::mat::scale_vec(&mut self.d_lower, s);
        crate::mat::scale_vec(&mut self.d_upper, s);
    }
}
