//! Learn-then-Test with fixed-sequence testing and Hoeffding p-values.

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationResult, ThetaHat};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::risk::empirical_risk;
use crate::selective::SelectiveInstance;

pub const ALGORITHM: &str = "ltt-fixed-sequence-hoeffding";

/// `exp(−2n·max(0, α − r̂)²)`, a p-value for `R(θ) > α` with losses in `[0, 1]`.
pub fn hoeffding_pvalue(r_hat: f64, n: usize, alpha: f64) -> f64 {
    let margin = (alpha - r_hat).max(0.0);
    (-2.0 * n as f64 * margin * margin).exp()
}

/// Smallest sample size at which a Hoeffding test at level `delta` can
/// reject with zero observed risk.
pub fn min_rejectable_count(alpha: f64, delta: f64) -> usize {
    ((1.0 / delta).ln() / (2.0 * alpha * alpha)).ceil() as usize
}

/// Which end of the grid is tested first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    /// Start at the largest θ.
    #[default]
    Descending,
    /// Start at the smallest θ.
    Ascending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LttConfig {
    pub delta: f64,
    /// Candidate parameters, sorted ascending.
    pub grid: Vec<f64>,
    #[serde(default)]
    pub direction: ScanDirection,
}

impl LttConfig {
    /// `points` evenly spaced values on `[lo, hi]`, `δ = 0.1`, scanned from
    /// the top.
    pub fn uniform(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if points < 2 || !(lo < hi) {
            return Err(Error::InvalidArgument("grid needs at least two points on a nonempty interval".into()));
        }
        let grid = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect();
        Ok(LttConfig { delta: 0.1, grid, direction: ScanDirection::Descending })
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("δ must lie in (0, 1), got {}", self.delta)));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty LTT grid".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("LTT grid must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Grid values in testing order, safe end first.
    fn scan(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self.direction {
            ScanDirection::Descending => Box::new(self.grid.iter().rev().copied()),
            ScanDirection::Ascending => Box::new(self.grid.iter().copied()),
        }
    }

    fn safe_end(&self) -> f64 {
        match self.direction {
            ScanDirection::Descending => *self.grid.last().unwrap_or(&f64::NAN),
            ScanDirection::Ascending => *self.grid.first().unwrap_or(&f64::NAN),
        }
    }
}

fn ltt_result(theta: Option<f64>, cfg: &LttConfig, alpha: f64, rejections: usize, risk: f64) -> CalibrationResult {
    let vacuous = theta.is_none();
    CalibrationResult::new(ThetaHat::scalar(theta.unwrap_or_else(|| cfg.safe_end())), ALGORITHM, alpha)
        .with_diagnostic("vacuous", vacuous as u8 as f64)
        .with_diagnostic("rejections", rejections as f64)
        .with_diagnostic("delta", cfg.delta)
        .with_diagnostic("empirical_risk", risk)
}

/// Tests `H_θ : R(θ) > α` along the grid from the safe end and returns the
/// last rejected θ. With no rejection the safe end is returned and flagged
/// `vacuous`.
pub fn ltt_select(data: &[Sample], loss: &dyn Loss, cfg: &LttConfig, alpha: f64) -> Result<CalibrationResult> {
    cfg.validate()?;
    if !loss.bounded_01() {
        return Err(Error::MissingCapability("a loss bounded in [0, 1]"));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let mut last = None;
    let mut rejections = 0;
    let mut risk_at_last = f64::NAN;
    for theta in cfg.scan() {
        let r = empirical_risk(data, loss, &[theta])?.clamp(0.0, 1.0);
        if hoeffding_pvalue(r, n, alpha) > cfg.delta {
            break;
        }
        last = Some(theta);
        risk_at_last = r;
        rejections += 1;
    }
    Ok(ltt_result(last, cfg, alpha, rejections, risk_at_last))
}

/// Learn-then-Test on the selective error `P(error | p̂ > θ)`.
///
/// Each θ is tested with the points predicted on, so the effective sample
/// size `n_θ` shrinks toward the top of the grid. Grid points with `n_θ`
/// below [`min_rejectable_count`] can never be rejected; they are passed
/// over rather than ending the sequence.
pub fn ltt_select_selective(inst: &SelectiveInstance, cfg: &LttConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let alpha = inst.alpha();
    let k_min = min_rejectable_count(alpha, cfg.delta);
    let mut last = None;
    let mut rejections = 0;
    let mut risk_at_last = f64::NAN;
    for theta in cfg.scan() {
        let (mut count, mut errors) = (0usize, 0usize);
        for (&p, &e) in inst.p_hat().iter().zip(inst.err()) {
            if p > theta {
                count += 1;
                errors += e as usize;
            }
        }
        if count < k_min {
            continue;
        }
        let r = errors as f64 / count as f64;
        if hoeffding_pvalue(r, count, alpha) > cfg.delta {
            break;
        }
        last = Some(theta);
        risk_at_last = r;
        rejections += 1;
    }
    Ok(ltt_result(last, cfg, alpha, rejections, risk_at_last))
}
