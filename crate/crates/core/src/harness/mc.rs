//! Monte Carlo verification of `E[ℓ(Z_{n+1}; θ̂_n)] ≤ α + slack`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Calibrator;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::risk::{draw_iid, rng_from_seed, trial_seed, Population};
use crate::stability::mean_se;

pub const MIN_TRIALS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub alpha: f64,
    pub n: usize,
    pub trials: usize,
    #[serde(default)]
    pub slack_budget: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub method: String,
    pub trials: usize,
    /// Trials that finished before the first failure.
    pub completed: usize,
    pub mean_test_loss: f64,
    pub mc_se: f64,
    pub target_alpha: f64,
    pub slack_budget: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl McReport {
    /// `mean ≤ α + slack + 2·SE`.
    pub fn threshold(&self) -> f64 {
        self.target_alpha + self.slack_budget + 2.0 * self.mc_se
    }
}

/// Each trial draws `n + 1` points, calibrates on the first `n` and scores
/// the last. Trial `t` is seeded with `seed + t`. The first failing trial
/// ends the batch: the report covers the trials before it and does not pass.
pub fn monte_carlo_verify(
    population: &dyn Population,
    loss: &dyn Loss,
    method: &dyn Calibrator,
    cfg: &McConfig,
) -> Result<McReport> {
    if cfg.trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} trials are required, got {}", cfg.trials)));
    }
    if cfg.n == 0 {
        return Err(Error::TooSmall { need: 1, got: 0 });
    }
    let outcomes: Vec<Result<f64>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(trial_seed(cfg.seed, t));
            let mut data = draw_iid(population, cfg.n + 1, &mut rng);
            let test = data.pop().expect("n + 1 ≥ 1 draws");
            let theta = method.calibrate(&data, loss)?.theta_hat.to_vec(loss.dim());
            Ok(loss.evaluate(&test, &theta))
        })
        .collect();
    let mut losses = Vec::with_capacity(cfg.trials);
    let mut error = None;
    for (t, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => losses.push(v),
            Err(e) => {
                error = Some(format!("trial {t}: {e}"));
                break;
            }
        }
    }
    let (mean, se) = if losses.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&losses) };
    let mut report = McReport {
        method: method.id(),
        trials: cfg.trials,
        completed: losses.len(),
        mean_test_loss: mean,
        mc_se: se,
        target_alpha: cfg.alpha,
        slack_budget: cfg.slack_budget,
        pass: false,
        error,
    };
    report.pass = report.error.is_none() && report.mean_test_loss <= report.threshold();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::ConstantCalibrator;
    use crate::crc::CrcMonotonic;
    use crate::harness::tasks::{BernoulliTask, MonotoneTask};

    #[test]
    fn identity_task_recovers_p() {
        let task = BernoulliTask { p: 0.3 };
        let cfg = McConfig { alpha: 0.3, n: 5, trials: 4000, slack_budget: 0.0, seed: 1 };
        let r = monte_carlo_verify(&task, &task.loss(), &ConstantCalibrator::scalar(0.0), &cfg).unwrap();
        assert!((r.mean_test_loss - 0.3).abs() <= 3.0 * r.mc_se);
        assert_eq!(r.completed, 4000);
    }

    #[test]
    fn constant_calibrator_on_monotone_task() {
        let task = MonotoneTask;
        let cfg = McConfig { alpha: 0.5, n: 3, trials: 4000, slack_budget: 0.0, seed: 2 };
        let r = monte_carlo_verify(&task, &task.loss(), &ConstantCalibrator::scalar(0.6), &cfg).unwrap();
        assert!((r.mean_test_loss - task.population_risk(0.6)).abs() <= 3.0 * r.mc_se);
    }

    #[test]
    fn crc_passes_without_slack() {
        let task = MonotoneTask;
        let cfg = McConfig { alpha: 0.2, n: 50, trials: 2000, slack_budget: 0.0, seed: 3 };
        let r = monte_carlo_verify(&task, &task.loss(), &CrcMonotonic::new(0.2), &cfg).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn failures_give_partial_report() {
        #[derive(Debug)]
        struct FailsOnSmallFirst;
        impl Calibrator for FailsOnSmallFirst {
            fn id(&self) -> String {
                "fails".into()
            }
            fn calibrate(&self, d: &[crate::Sample], _: &dyn Loss) -> Result<crate::CalibrationResult> {
                if d[0].x[0] < 0.01 {
                    Err(Error::Numerical("boom".into()))
                } else {
                    Ok(crate::CalibrationResult::new(crate::ThetaHat::scalar(0.5), "fails", 0.1))
                }
            }
        }
        let task = MonotoneTask;
        let cfg = McConfig { alpha: 0.5, n: 3, trials: 1000, slack_budget: 0.0, seed: 4 };
        let r = monte_carlo_verify(&task, &task.loss(), &FailsOnSmallFirst, &cfg).unwrap();
        assert!(!r.pass);
        assert!(r.completed < 1000);
        assert!(r.error.unwrap().contains("boom"));
    }

    #[test]
    fn too_few_trials() {
        let task = MonotoneTask;
        let cfg = McConfig { alpha: 0.5, n: 3, trials: 99, slack_budget: 0.0, seed: 4 };
        assert!(monte_carlo_verify(&task, &task.loss(), &ConstantCalibrator::scalar(0.5), &cfg).is_err());
    }
}
