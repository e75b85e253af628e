//! Bootstrap estimates of the stability parameter, and conformal risk
//! control at the level lowered by that estimate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationResult, Calibrator};
use crate::crc::{CrcMonotonic, ReferenceRoot, SearchInterval, DEFAULT_SCAN_POINTS};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::risk::{replicate_seed, rng_from_seed, stability_gap};
use crate::selective::SelectiveThreshold;

/// Fraction of replicates that may fail before the estimate is refused.
pub const MAX_SKIP_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Size of each resampled dataset; `None` means `|D| + 1`.
    #[serde(default)]
    pub resample_size: Option<usize>,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapConfig { replicates, seed, resample_size: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityEstimate {
    /// Positive part of the mean replicate gap.
    pub beta_hat: f64,
    pub se: f64,
    /// Gaps of the replicates that completed, in replicate order.
    pub replicate_gaps: Vec<f64>,
    pub replicates: usize,
    pub skipped: usize,
    pub algo_id: String,
    pub ref_algo_id: String,
    pub seed: u64,
}

/// Resamples `D` with replacement `B` times and averages the stability gap
/// of `algo` against `ref_algo` on each resample.
///
/// Replicate `b` draws from a generator seeded with `seed ^ b`. A replicate
/// whose calibrator fails is skipped; more than 10% skipped is an error.
pub fn bootstrap_beta(
    data: &[Sample],
    algo: &dyn Calibrator,
    ref_algo: &dyn Calibrator,
    loss: &dyn Loss,
    cfg: &BootstrapConfig,
) -> Result<StabilityEstimate> {
    let n = data.len();
    if n < 2 {
        return Err(Error::TooSmall { need: 2, got: n });
    }
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("at least one bootstrap replicate is required".into()));
    }
    let m = cfg.resample_size.unwrap_or(n + 1);
    if m < 2 {
        return Err(Error::TooSmall { need: 2, got: m });
    }
    let outcomes: Vec<Option<f64>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(replicate_seed(cfg.seed, b));
            let resample: Vec<Sample> = (0..m).map(|_| data[rng.random_range(0..n)].clone()).collect();
            stability_gap(&resample, algo, ref_algo, loss).ok()
        })
        .collect();
    let gaps: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let skipped = cfg.replicates - gaps.len();
    if gaps.is_empty() || skipped as f64 > MAX_SKIP_FRACTION * cfg.replicates as f64 {
        return Err(Error::TooManySkipped { skipped, total: cfg.replicates });
    }
    let (mean, se) = mean_se(&gaps);
    Ok(StabilityEstimate {
        beta_hat: mean.max(0.0),
        se,
        replicate_gaps: gaps,
        replicates: cfg.replicates,
        skipped,
        algo_id: algo.id(),
        ref_algo_id: ref_algo.id(),
        seed: cfg.seed,
    })
}

/// Mean and standard error of the mean, summed in index order.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Calibrator pairing `(A, A*)` used for the stability estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Conformal risk control against the uninflated root on all points.
    Monotonic {
        #[serde(default)]
        interval: SearchInterval,
    },
    /// Leftmost root of the selective risk, with `A* = A`.
    Selective,
    /// Leftmost root of a general bounded risk, with `A* = A`.
    LeftmostRoot {
        #[serde(default)]
        interval: SearchInterval,
        #[serde(default = "default_scan_points")]
        scan_points: usize,
    },
}

fn default_scan_points() -> usize {
    DEFAULT_SCAN_POINTS
}

impl Family {
    pub fn monotonic() -> Self {
        Family::Monotonic { interval: SearchInterval::default() }
    }

    pub fn leftmost_root() -> Self {
        Family::LeftmostRoot { interval: SearchInterval::default(), scan_points: DEFAULT_SCAN_POINTS }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Monotonic { .. } => "monotonic",
            Family::Selective => "selective",
            Family::LeftmostRoot { .. } => "leftmost_root",
        }
    }

    /// The calibrator run at level `alpha`.
    pub fn algorithm(&self, alpha: f64) -> Box<dyn Calibrator> {
        match *self {
            Family::Monotonic { interval } => Box::new(CrcMonotonic { alpha, interval }),
            Family::Selective => Box::new(SelectiveThreshold { alpha }),
            Family::LeftmostRoot { interval, scan_points } => {
                Box::new(ReferenceRoot::new(alpha).with_interval(interval).with_scan_points(scan_points))
            }
        }
    }

    /// The reference calibrator on all `n + 1` points.
    pub fn reference(&self, alpha: f64) -> Box<dyn Calibrator> {
        match *self {
            Family::Monotonic { interval } => Box::new(ReferenceRoot::new(alpha).with_interval(interval)),
            _ => self.algorithm(alpha),
        }
    }
}

/// JSON summary of a stability estimate and the level it implies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub beta_hat: f64,
    pub se: f64,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub skipped: usize,
    pub alpha: f64,
    pub alpha_effective: f64,
    pub algo: String,
    pub ref_algo: String,
    pub seed: u64,
}

impl StabilityReport {
    pub fn new(est: &StabilityEstimate, alpha: f64) -> Self {
        StabilityReport {
            beta_hat: est.beta_hat,
            se: est.se,
            replicates: est.replicates,
            skipped: est.skipped,
            alpha,
            alpha_effective: alpha - est.beta_hat,
            algo: est.algo_id.clone(),
            ref_algo: est.ref_algo_id.clone(),
            seed: est.seed,
        }
    }
}

/// `α − β̂`, which must stay positive for any calibrator to run.
pub fn adjusted_level(alpha: f64, beta_hat: f64) -> Result<f64> {
    let adjusted = alpha - beta_hat;
    if adjusted <= 0.0 {
        return Err(Error::LevelExhausted(adjusted));
    }
    Ok(adjusted)
}

/// Estimates `β̂` for the family's pairing and calibrates at `α − β̂`.
pub fn crc_conservative(
    data: &[Sample],
    loss: &dyn Loss,
    alpha: f64,
    family: &Family,
    cfg: &BootstrapConfig,
) -> Result<(CalibrationResult, StabilityEstimate)> {
    let algo = family.algorithm(alpha);
    let reference = family.reference(alpha);
    let est = bootstrap_beta(data, algo.as_ref(), reference.as_ref(), loss, cfg)?;
    let adjusted = adjusted_level(alpha, est.beta_hat)?;
    let mut res = family
        .algorithm(adjusted)
        .calibrate(data, loss)?
        .with_diagnostic("alpha", alpha)
        .with_diagnostic("beta_hat", est.beta_hat)
        .with_diagnostic("beta_se", est.se)
        .with_diagnostic("skipped", est.skipped as f64);
    res.alpha_effective = adjusted;
    res.algorithm = format!("crc-c/{}", res.algorithm);
    Ok((res, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::ConstantCalibrator;
    use crate::loss::FnLoss;
    use crate::selective::{scenario_generate, Scenario, SelectiveInstance, SelectiveLoss};

    fn monotone_data(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| Sample::scalar(rng.random())).collect()
    }

    fn step_loss() -> FnLoss {
        FnLoss::scalar(|z, t| if z.x[0] > t { 1.0 } else { 0.0 }).bounded().monotone()
    }

    #[test]
    fn monotone_family_has_zero_beta() {
        let d = monotone_data(60, 1);
        for seed in 0..5 {
            let f = Family::monotonic();
            let cfg = BootstrapConfig::new(50, seed);
            let est = bootstrap_beta(&d, f.algorithm(0.2).as_ref(), f.reference(0.2).as_ref(), &step_loss(), &cfg).unwrap();
            assert!(est.replicate_gaps.iter().all(|g| *g <= 0.0));
            assert_eq!(est.beta_hat, 0.0);
        }
    }

    #[test]
    fn constant_calibrators_have_zero_gaps() {
        let d = monotone_data(30, 2);
        let c = ConstantCalibrator::scalar(0.4);
        let est = bootstrap_beta(&d, &c, &c, &step_loss(), &BootstrapConfig::new(20, 0)).unwrap();
        assert!(est.replicate_gaps.iter().all(|g| *g == 0.0));
        assert_eq!(est.beta_hat, 0.0);
    }

    #[test]
    fn bit_identical_given_seed() {
        let inst = scenario_generate(Scenario::Adversarial, 80, 0.25, 5).unwrap();
        let d = inst.to_samples();
        let loss = SelectiveLoss { alpha: 0.25 };
        let a = SelectiveThreshold { alpha: 0.25 };
        let cfg = BootstrapConfig::new(30, 17);
        let x = bootstrap_beta(&d, &a, &a, &loss, &cfg).unwrap();
        let y = bootstrap_beta(&d, &a, &a, &loss, &cfg).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.replicate_gaps.len(), 30);
    }

    #[test]
    fn beta_hat_is_positive_part_of_mean() {
        let inst = scenario_generate(Scenario::Adversarial, 60, 0.5, 9).unwrap();
        let d = inst.to_samples();
        let a = SelectiveThreshold { alpha: 0.5 };
        let est = bootstrap_beta(&d, &a, &a, &SelectiveLoss { alpha: 0.5 }, &BootstrapConfig::new(40, 3)).unwrap();
        let mean = est.replicate_gaps.iter().sum::<f64>() / est.replicate_gaps.len() as f64;
        assert_eq!(est.beta_hat, mean.max(0.0));
    }

    #[derive(Debug)]
    struct Failing;

    impl Calibrator for Failing {
        fn id(&self) -> String {
            "failing".into()
        }

        fn calibrate(&self, _: &[Sample], _: &dyn Loss) -> Result<CalibrationResult> {
            Err(Error::Numerical("always fails".into()))
        }
    }

    #[test]
    fn too_many_skips_is_an_error() {
        let d = monotone_data(10, 3);
        let r = bootstrap_beta(&d, &Failing, &Failing, &step_loss(), &BootstrapConfig::new(10, 0));
        assert!(matches!(r, Err(Error::TooManySkipped { skipped: 10, total: 10 })));
    }

    #[test]
    fn monotone_conservative_equals_plain_crc() {
        let d = monotone_data(80, 4);
        let f = Family::monotonic();
        let (res, est) = crc_conservative(&d, &step_loss(), 0.2, &f, &BootstrapConfig::new(40, 1)).unwrap();
        let plain = f.algorithm(0.2).calibrate(&d, &step_loss()).unwrap();
        assert_eq!(est.beta_hat, 0.0);
        assert_eq!(res.theta_hat, plain.theta_hat);
        assert_eq!(res.alpha_effective, 0.2);
    }

    #[test]
    fn selective_conservative_is_not_below_plain() {
        let loss = SelectiveLoss { alpha: 0.25 };
        for seed in 0..4 {
            let mut rng = rng_from_seed(seed);
            let p: Vec<f64> = (0..150).map(|_| rng.random()).collect();
            let e: Vec<bool> = p.iter().map(|&q| rng.random::<f64>() < 0.8 * (1.0 - q)).collect();
            let d = SelectiveInstance::new(p, e, 0.25).unwrap().to_samples();
            let (res, est) = crc_conservative(&d, &loss, 0.25, &Family::Selective, &BootstrapConfig::new(30, seed)).unwrap();
            let plain = SelectiveThreshold { alpha: 0.25 }.calibrate(&d, &loss).unwrap();
            assert!(res.theta_hat.scalar_value() >= plain.theta_hat.scalar_value());
            assert_eq!(res.alpha_effective, 0.25 - est.beta_hat);
            assert_eq!(res.diagnostic("alpha"), Some(0.25));
        }
    }

    #[test]
    fn exhausted_level_is_an_error() {
        assert_eq!(adjusted_level(0.2, 0.05).unwrap(), 0.2 - 0.05);
        assert!(matches!(adjusted_level(0.1, 0.1), Err(Error::LevelExhausted(_))));
        assert!(matches!(adjusted_level(0.1, 0.3), Err(Error::LevelExhausted(_))));
    }

    #[test]
    fn report_fields() {
        let d = monotone_data(20, 6);
        let c = ConstantCalibrator::scalar(0.5);
        let est = bootstrap_beta(&d, &c, &c, &step_loss(), &BootstrapConfig::new(5, 42)).unwrap();
        let json = serde_json::to_value(StabilityReport::new(&est, 0.1)).unwrap();
        for key in ["beta_hat", "se", "B", "skipped", "alpha", "alpha_effective", "algo", "ref_algo", "seed"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["B"], 5);
    }
}
