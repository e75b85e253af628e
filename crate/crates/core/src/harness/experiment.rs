//! Config-driven experiments comparing calibrators over repeated splits,
//! and the running-error trajectories of the selective scenarios.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crc::{ReferenceRoot, SearchInterval, DEFAULT_SCAN_POINTS};
use crate::data::Sample;
use crate::erm::{debias_ols, fit_conservative, min_eigen_ratio, ErmConfig, GammaMode, SquaredLoss};
use crate::error::{Error, Result};
use crate::harness::io::{read_debias_path, read_selective_path, DebiasTable};
use crate::harness::seg::{prediction_rate, FdrLoss, IouLoss, SyntheticSegTask};
use crate::harness::tasks::{GroupDebiasTask, SelectivePopulation, GROUP_NAMES};
use crate::loss::Loss;
use crate::ltt::{ltt_select, ltt_select_selective, LttConfig};
use crate::risk::{draw_iid, rng_from_seed, trial_seed, Population};
use crate::selective::{
    band_crossing_count, band_endpoints, k_statistic, scenario_generate, selective_loss, Scenario, SelectiveInstance,
    SelectiveLoss, SelectiveThreshold,
};
use crate::stability::{crc_conservative, mean_se, BootstrapConfig, Family};
use crate::{Calibrator, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Leftmost root at level α.
    Crc,
    /// Leftmost root at the bootstrap-adjusted level α − β̂.
    CrcC,
    /// Learn-then-Test, fixed sequence with Hoeffding p-values.
    Ltt,
    /// Base predictions left as they are.
    Raw,
    /// Least-squares group correction.
    Ols,
    /// Least-squares group correction with the conservative shift γ.
    Conservative,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Crc => "crc",
            Method::CrcC => "crc_c",
            Method::Ltt => "ltt",
            Method::Raw => "raw",
            Method::Ols => "ols",
            Method::Conservative => "conservative",
        }
    }

    fn is_debias(self) -> bool {
        matches!(self, Method::Raw | Method::Ols | Method::Conservative)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Synthetic confidences or a `p_hat,err` CSV.
    Selective {
        #[serde(default = "default_slope")]
        slope: f64,
        csv: Option<PathBuf>,
    },
    Fdr {
        #[serde(default)]
        generator: SyntheticSegTask,
    },
    Iou {
        #[serde(default)]
        generator: SyntheticSegTask,
    },
    /// The synthetic five-group population or an `f,y,g...` CSV.
    Debias { csv: Option<PathBuf> },
}

fn default_slope() -> f64 {
    SelectivePopulation::default().slope
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Selective { .. } => "selective",
            TaskConfig::Fdr { .. } => "fdr",
            TaskConfig::Iou { .. } => "iou",
            TaskConfig::Debias { .. } => "debias",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub replicates: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection { replicates: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LttSection {
    pub delta: f64,
    pub grid_points: usize,
}

impl Default for LttSection {
    fn default() -> Self {
        LttSection { delta: 0.1, grid_points: 1001 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub alpha: f64,
    pub n: usize,
    /// Seeds averaged for the mean band count.
    pub seeds: usize,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Figure1Config { alpha: 0.25, n: 500, seeds: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub alpha: f64,
    /// Calibration points per trial.
    pub n: usize,
    /// Held-out points per trial for synthetic tasks; CSV tasks use the
    /// rows left after the calibration split.
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    pub task: TaskConfig,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub ltt: LttSection,
    pub figure1: Option<Figure1Config>,
}

fn default_test_n() -> usize {
    500
}

fn default_trials() -> usize {
    100
}

fn default_scan_points() -> usize {
    DEFAULT_SCAN_POINTS
}

/// 1-based line of the first `key = ...` assignment, or of the `[section]`
/// header when the key is absent.
fn key_line(text: &str, key: &str) -> usize {
    let (section, leaf) = match key.rsplit_once('.') {
        Some((s, l)) => (Some(s), l),
        None => (None, key),
    };
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(h.trim().to_string());
            if section == Some(h.trim()) {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = t.strip_prefix(leaf) {
            if rest.trim_start().starts_with('=') {
                return i + 1;
            }
        }
    }
    header_line.unwrap_or(1)
}

fn config_error(text: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line: key_line(text, key), message: message.into() }
}

impl ExperimentConfig {
    /// Parses and validates a TOML config. Errors carry the line of the
    /// offending entry.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Config { line, message: e.message().to_string() }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    /// Reads a config file; relative CSV paths resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.task {
            TaskConfig::Selective { csv: Some(p), .. } | TaskConfig::Debias { csv: Some(p) } if p.is_relative() => {
                *p = base.join(&*p);
            }
            _ => {}
        }
        Ok(cfg)
    }

    fn validate(&self, text: &str) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_error(text, "alpha", format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n < 2 {
            return Err(config_error(text, "n", "n must be at least 2"));
        }
        if self.test_n < 1 {
            return Err(config_error(text, "test_n", "test_n must be at least 1"));
        }
        if self.trials < 1 {
            return Err(config_error(text, "trials", "trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_error(text, "methods", "at least one method is required"));
        }
        let debias = matches!(self.task, TaskConfig::Debias { .. });
        if let Some(m) = self.methods.iter().find(|m| m.is_debias() != debias) {
            return Err(config_error(
                text,
                "methods",
                format!("method {} does not apply to the {} task", m.name(), self.task.name()),
            ));
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].contains(m) {
                return Err(config_error(text, "methods", format!("method {} is listed twice", m.name())));
            }
        }
        if self.scan_points < 2 {
            return Err(config_error(text, "scan_points", "scan_points must be at least 2"));
        }
        if self.bootstrap.replicates < 1 {
            return Err(config_error(text, "bootstrap.replicates", "replicates must be at least 1"));
        }
        if !(self.ltt.delta > 0.0 && self.ltt.delta < 1.0) {
            return Err(config_error(text, "ltt.delta", "delta must lie in (0, 1)"));
        }
        if self.ltt.grid_points < 2 {
            return Err(config_error(text, "ltt.grid_points", "grid_points must be at least 2"));
        }
        match &self.task {
            TaskConfig::Selective { slope, .. } if !(0.0..=1.0).contains(slope) => {
                return Err(config_error(text, "task.slope", "slope must lie in [0, 1]"));
            }
            TaskConfig::Fdr { generator } | TaskConfig::Iou { generator } => {
                generator.validate().map_err(|e| config_error(text, "task.generator", e.to_string()))?;
            }
            _ => {}
        }
        if let Some(f) = &self.figure1 {
            if !(f.alpha > 0.0 && f.alpha < 1.0) {
                return Err(config_error(text, "figure1.alpha", "alpha must lie in (0, 1)"));
            }
            if f.n < 1 || f.seeds < 1 {
                return Err(config_error(text, "figure1.n", "n and seeds must be positive"));
            }
        }
        Ok(())
    }
}

/// One calibrated split for a risk-control task.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub method: String,
    pub trial: usize,
    pub theta: f64,
    pub test_risk: f64,
    pub pred_rate: f64,
}

/// One group's out-of-sample bias after a debiasing fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasRow {
    pub method: String,
    pub trial: usize,
    pub group: String,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub trials: usize,
    pub theta_mean: f64,
    pub theta_sd: f64,
    pub test_risk_mean: f64,
    pub test_risk_se: f64,
    pub pred_rate_mean: f64,
    /// Fraction of trials whose held-out risk exceeds α.
    pub risk_above_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_hat_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub method: String,
    pub group: String,
    pub mean_bias: f64,
    pub mean_abs_bias: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_half_width: Option<f64>,
    /// Fraction of trials with `|bias|` within the certificate half-width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub task: String,
    pub alpha: f64,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure1: Option<Figure1Summary>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialTable {
    Risk(Vec<TrialRow>),
    Bias(Vec<BiasRow>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub trials: TrialTable,
    pub summary: ExperimentSummary,
    pub figure1: Vec<Figure1Row>,
}

/// Seed for the bootstrap inside a trial, kept apart from the data stream.
fn bootstrap_seed(s: u64) -> u64 {
    s.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xB007
}

fn theta_value(r: &crate::CalibrationResult) -> f64 {
    r.theta_hat.scalar_value()
}

enum RiskTask {
    Selective { pop: SelectivePopulation, pool: Option<Vec<Sample>> },
    Seg { gen: SyntheticSegTask, iou: bool },
}

impl RiskTask {
    fn split(&self, cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
        let mut rng = rng_from_seed(seed);
        let pop: &dyn Population = match self {
            RiskTask::Selective { pool: Some(pool), .. } => return split_pool(pool, cfg.n, seed),
            RiskTask::Selective { pop, .. } => pop,
            RiskTask::Seg { gen, .. } => gen,
        };
        let cal = draw_iid(pop, cfg.n, &mut rng);
        let test = draw_iid(pop, cfg.test_n, &mut rng);
        Ok((cal, test))
    }

    fn loss(&self, alpha: f64) -> Box<dyn Loss> {
        match self {
            RiskTask::Selective { .. } => Box::new(SelectiveLoss { alpha }),
            RiskTask::Seg { iou: false, .. } => Box::new(FdrLoss),
            RiskTask::Seg { iou: true, .. } => Box::new(IouLoss),
        }
    }

    fn family(&self, scan_points: usize) -> Family {
        match self {
            RiskTask::Selective { .. } => Family::Selective,
            RiskTask::Seg { .. } => Family::LeftmostRoot { interval: SearchInterval::default(), scan_points },
        }
    }

    fn pred_rate(&self, test: &[Sample], theta: f64) -> f64 {
        match self {
            RiskTask::Selective { .. } => test.iter().filter(|z| z.x[0] > theta).count() as f64 / test.len() as f64,
            RiskTask::Seg { .. } => test.iter().map(|z| prediction_rate(&z.x, theta)).sum::<f64>() / test.len() as f64,
        }
    }

    fn test_risk(&self, test: &[Sample], loss: &dyn Loss, theta: f64, alpha: f64) -> f64 {
        let total: f64 = match self {
            RiskTask::Selective { .. } => test
                .iter()
                .map(|z| selective_loss(z.y.as_binary().unwrap_or(false), z.x[0], theta, alpha))
                .sum(),
            RiskTask::Seg { .. } => test.iter().map(|z| loss.evaluate(z, &[theta])).sum(),
        };
        total / test.len() as f64
    }
}

/// Random split of a pool into `n` calibration rows and the rest.
fn split_pool(pool: &[Sample], n: usize, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if pool.len() <= n {
        return Err(Error::TooSmall { need: n + 1, got: pool.len() });
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let cal = idx[..n].iter().map(|&i| pool[i].clone()).collect();
    let test = idx[n..].iter().map(|&i| pool[i].clone()).collect();
    Ok((cal, test))
}

fn run_method(
    task: &RiskTask,
    method: Method,
    cal: &[Sample],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    let loss = task.loss(cfg.alpha);
    let alpha = cfg.alpha;
    match method {
        Method::Crc => {
            let r = match task {
                RiskTask::Selective { .. } => SelectiveThreshold { alpha }.calibrate(cal, loss.as_ref())?,
                RiskTask::Seg { .. } => ReferenceRoot::new(alpha).with_scan_points(cfg.scan_points).calibrate(cal, loss.as_ref())?,
            };
            Ok((theta_value(&r), None))
        }
        Method::CrcC => {
            let boot = BootstrapConfig::new(cfg.bootstrap.replicates, bootstrap_seed(seed));
            let (r, est) = crc_conservative(cal, loss.as_ref(), alpha, &task.family(cfg.scan_points), &boot)?;
            Ok((theta_value(&r), Some(est.beta_hat)))
        }
        Method::Ltt => {
            let ltt = LttConfig::uniform(0.0, 1.0, cfg.ltt.grid_points)?.with_delta(cfg.ltt.delta);
            let r = match task {
                RiskTask::Selective { .. } => {
                    ltt_select_selective(&SelectiveInstance::from_samples(cal, alpha, Some(seed))?, &ltt)?
                }
                RiskTask::Seg { .. } => ltt_select(cal, loss.as_ref(), &ltt, alpha)?,
            };
            Ok((theta_value(&r), None))
        }
        m => Err(Error::InvalidArgument(format!("method {} needs a debiasing task", m.name()))),
    }
}

fn sd(xs: &[f64]) -> f64 {
    mean_se(xs).1 * (xs.len() as f64).sqrt()
}

fn run_risk(task: RiskTask, cfg: &ExperimentConfig) -> Result<(Vec<TrialRow>, Vec<MethodSummary>)> {
    let per_trial: Vec<Vec<(TrialRow, Option<f64>)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.seed, t as u64);
            let (cal, test) = task.split(cfg, seed)?;
            let loss = task.loss(cfg.alpha);
            cfg.methods
                .iter()
                .map(|&m| {
                    let (theta, beta) =
                        run_method(&task, m, &cal, cfg, seed).map_err(|e| Error::Numerical(format!("trial {t}, {}: {e}", m.name())))?;
                    let row = TrialRow {
                        method: m.name().to_string(),
                        trial: t,
                        theta,
                        test_risk: task.test_risk(&test, loss.as_ref(), theta, cfg.alpha),
                        pred_rate: task.pred_rate(&test, theta),
                    };
                    Ok((row, beta))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cfg.trials * cfg.methods.len());
    let mut summaries = Vec::new();
    for (k, m) in cfg.methods.iter().enumerate() {
        let picked: Vec<&(TrialRow, Option<f64>)> = per_trial.iter().map(|v| &v[k]).collect();
        let thetas: Vec<f64> = picked.iter().map(|p| p.0.theta).collect();
        let risks: Vec<f64> = picked.iter().map(|p| p.0.test_risk).collect();
        let rates: Vec<f64> = picked.iter().map(|p| p.0.pred_rate).collect();
        let betas: Vec<f64> = picked.iter().filter_map(|p| p.1).collect();
        let (theta_mean, _) = mean_se(&thetas);
        let (risk_mean, risk_se) = mean_se(&risks);
        summaries.push(MethodSummary {
            method: m.name().to_string(),
            trials: cfg.trials,
            theta_mean,
            theta_sd: sd(&thetas),
            test_risk_mean: risk_mean,
            test_risk_se: risk_se,
            pred_rate_mean: mean_se(&rates).0,
            risk_above_alpha: risks.iter().filter(|&&r| r > cfg.alpha).count() as f64 / cfg.trials as f64,
            beta_hat_mean: (!betas.is_empty()).then(|| mean_se(&betas).0),
        });
    }
    for trial in per_trial {
        rows.extend(trial.into_iter().map(|p| p.0));
    }
    Ok((rows, summaries))
}

/// Per-group bias and certificate half-width (if any) of one fit.
type GroupOutcome = (Vec<f64>, Vec<Option<f64>>);

fn debias_fit(method: Method, cal: &[Sample], f: &[f64]) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let d = cal[0].x.len();
    match method {
        Method::Raw => Ok((vec![0.0; d], vec![None; d])),
        Method::Ols | Method::Conservative => {
            let gamma = if method == Method::Conservative {
                let resid: Vec<Sample> = cal
                    .iter()
                    .zip(f)
                    .map(|(z, &fi)| Sample::new(z.x.clone(), Label::Real(z.y.as_real().unwrap_or(f64::NAN) - fi)))
                    .collect();
                let mu = min_eigen_ratio(&resid)?;
                let loss = SquaredLoss::new(d);
                fit_conservative(&resid, &loss, &ErmConfig::ridge(0.0), mu, GammaMode::OneStep)?.gamma
            } else {
                0.0
            };
            let fit = debias_ols(cal, f, gamma)?;
            Ok((fit.theta, fit.groups.iter().map(|g| g.half_width).collect()))
        }
        m => Err(Error::InvalidArgument(format!("method {} does not apply to debiasing", m.name()))),
    }
}

/// Mean of `f + xᵀθ − y` over held-out group members; NaN for empty groups.
fn held_out_bias(test: &[Sample], f: &[f64], theta: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let (mut sum, mut count) = (0.0, 0usize);
            for (z, &fi) in test.iter().zip(f) {
                if z.x[k] == 1.0 {
                    let adj: f64 = z.x.iter().zip(theta).map(|(a, b)| a * b).sum();
                    sum += fi + adj - z.y.as_real().unwrap_or(f64::NAN);
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        })
        .collect()
}

fn run_debias(table: Option<DebiasTable>, cfg: &ExperimentConfig) -> Result<(Vec<BiasRow>, Vec<GroupSummary>)> {
    let task = GroupDebiasTask::default();
    let names: Vec<String> = match &table {
        Some(t) => t.group_names.clone(),
        None => GROUP_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let per_trial: Vec<Vec<GroupOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.seed, t as u64);
            let (cal, f_cal, held_out) = match &table {
                Some(tab) => {
                    let tagged: Vec<Sample> = tab
                        .samples
                        .iter()
                        .zip(&tab.f)
                        .map(|(z, &fi)| {
                            let mut x = z.x.to_vec();
                            x.push(fi);
                            Sample::new(x, z.y.clone())
                        })
                        .collect();
                    let (a, b) = split_pool(&tagged, cfg.n, seed)?;
                    let untag = |v: Vec<Sample>| -> (Vec<Sample>, Vec<f64>) {
                        v.into_iter()
                            .map(|z| {
                                let d = z.x.len() - 1;
                                (Sample::new(z.x[..d].to_vec(), z.y.clone()), z.x[d])
                            })
                            .unzip()
                    };
                    let (cal, f_cal) = untag(a);
                    (cal, f_cal, Some(untag(b)))
                }
                None => {
                    let (cal, f_cal) = task.draw_batch(cfg.n, &mut rng_from_seed(seed));
                    (cal, f_cal, None)
                }
            };
            cfg.methods
                .iter()
                .map(|&m| {
                    let (theta, hw) =
                        debias_fit(m, &cal, &f_cal).map_err(|e| Error::Numerical(format!("trial {t}, {}: {e}", m.name())))?;
                    let bias = match &held_out {
                        Some((test, f_test)) => held_out_bias(test, f_test, &theta),
                        None => task.group_bias(&theta),
                    };
                    Ok((bias, hw))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (t, trial) in per_trial.iter().enumerate() {
        for (k, m) in cfg.methods.iter().enumerate() {
            for (g, name) in names.iter().enumerate() {
                rows.push(BiasRow { method: m.name().to_string(), trial: t, group: name.clone(), bias: trial[k].0[g] });
            }
        }
    }
    let mut groups = Vec::new();
    for (k, m) in cfg.methods.iter().enumerate() {
        for (g, name) in names.iter().enumerate() {
            let biases: Vec<f64> = per_trial.iter().map(|tr| tr[k].0[g]).filter(|b| b.is_finite()).collect();
            let hws: Vec<(f64, f64)> = per_trial
                .iter()
                .filter_map(|tr| tr[k].1[g].map(|h| (tr[k].0[g], h)))
                .filter(|(b, _)| b.is_finite())
                .collect();
            let (mean_hw, coverage) = if hws.is_empty() {
                (None, None)
            } else {
                let c = hws.len() as f64;
                (
                    Some(hws.iter().map(|p| p.1).sum::<f64>() / c),
                    Some(hws.iter().filter(|(b, h)| b.abs() <= *h).count() as f64 / c),
                )
            };
            let nb = biases.len().max(1) as f64;
            groups.push(GroupSummary {
                method: m.name().to_string(),
                group: name.clone(),
                mean_bias: biases.iter().sum::<f64>() / nb,
                mean_abs_bias: biases.iter().map(|b| b.abs()).sum::<f64>() / nb,
                mean_half_width: mean_hw,
                coverage,
            });
        }
    }
    Ok((rows, groups))
}

/// Runs every configured method over `trials` seeded splits. Trial `t`
/// uses the seed `seed + t`; rows come out in trial order, then method
/// order, whatever the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (trials, methods, groups) = match &cfg.task {
        TaskConfig::Selective { slope, csv } => {
            let pool = match csv {
                Some(path) => {
                    let (p, e) = read_selective_path(path)?;
                    Some(p.into_iter().zip(e).map(|(p, e)| Sample::new(vec![p], Label::Binary(e))).collect())
                }
                None => None,
            };
            let (rows, s) = run_risk(RiskTask::Selective { pop: SelectivePopulation { slope: *slope }, pool }, cfg)?;
            (TrialTable::Risk(rows), s, Vec::new())
        }
        TaskConfig::Fdr { generator } | TaskConfig::Iou { generator } => {
            let iou = matches!(cfg.task, TaskConfig::Iou { .. });
            let (rows, s) = run_risk(RiskTask::Seg { gen: *generator, iou }, cfg)?;
            (TrialTable::Risk(rows), s, Vec::new())
        }
        TaskConfig::Debias { csv } => {
            let table = csv.as_deref().map(read_debias_path).transpose()?;
            let (rows, g) = run_debias(table, cfg)?;
            (TrialTable::Bias(rows), Vec::new(), g)
        }
    };
    let (figure1_rows, figure1_summary) = match &cfg.figure1 {
        Some(f) => {
            let (rows, s) = figure1(f.alpha, f.n, cfg.seed, f.seeds)?;
            (rows, Some(s))
        }
        None => (Vec::new(), None),
    };
    let summary = ExperimentSummary {
        task: cfg.task.name().to_string(),
        alpha: cfg.alpha,
        n: cfg.n,
        trials: cfg.trials,
        seed: cfg.seed,
        methods,
        groups,
        figure1: figure1_summary,
    };
    Ok(ExperimentOutput { trials, summary, figure1: figure1_rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Row {
    pub scenario: String,
    pub j: usize,
    pub e_bar: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub in_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub mean_band_count: f64,
    pub band_count_se: f64,
    pub mean_k: f64,
    pub k_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Summary {
    pub alpha: f64,
    pub n: usize,
    pub seed: u64,
    pub seeds: usize,
    pub scenarios: Vec<ScenarioSummary>,
}

/// Running error rates `Ē_j` with the band `(α+(1−α)/j, α+(2−α)/j]` for one
/// instance of each scenario at `seed`, and the band count and `K`
/// averaged over seeds `seed + s` for `s < seeds`.
pub fn figure1(alpha: f64, n: usize, seed: u64, seeds: usize) -> Result<(Vec<Figure1Row>, Figure1Summary)> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let mut rows = Vec::new();
    let mut scenarios = Vec::new();
    for kind in Scenario::ALL {
        let view = scenario_generate(kind, n, alpha, seed)?.sorted_view();
        for j in 1..=view.len() {
            let (band_lo, band_hi) = band_endpoints(alpha, j);
            rows.push(Figure1Row {
                scenario: kind.name().to_string(),
                j,
                e_bar: view.running_error_rate(j),
                band_lo,
                band_hi,
                in_band: view.in_band(j),
            });
        }
        let stats: Vec<(f64, f64)> = (0..seeds as u64)
            .into_par_iter()
            .map(|s| {
                let inst = scenario_generate(kind, n, alpha, trial_seed(seed, s))?;
                Ok((band_crossing_count(&inst) as f64, k_statistic(&inst)? as f64))
            })
            .collect::<Result<_>>()?;
        let (counts, ks): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
        let (mean_band_count, band_count_se) = mean_se(&counts);
        let (mean_k, k_se) = mean_se(&ks);
        scenarios.push(ScenarioSummary { scenario: kind.name().to_string(), mean_band_count, band_count_se, mean_k, k_se });
    }
    Ok((rows, Figure1Summary { alpha, n, seed, seeds, scenarios }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SELECTIVE: &str = r#"
seed = 3
alpha = 0.2
n = 200
test_n = 300
trials = 12
methods = ["crc", "crc_c", "ltt"]

[task]
kind = "selective"

[bootstrap]
replicates = 20
"#;

    #[test]
    fn selective_schema_and_ordering() {
        let cfg = ExperimentConfig::parse(SELECTIVE).unwrap();
        let out = run_experiment(&cfg).unwrap();
        let TrialTable::Risk(rows) = &out.trials else { panic!("risk table expected") };
        assert_eq!(rows.len(), 36);
        assert_eq!(rows[0].method, "crc");
        assert_eq!(rows[1].method, "crc_c");
        assert_eq!(rows[2].method, "ltt");
        assert_eq!(rows[3].trial, 1);
        let mut buf = Vec::new();
        crate::harness::io::write_csv(&mut buf, rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("method,trial,theta,test_risk,pred_rate\n"));
        assert_eq!(out.summary.methods.len(), 3);
        assert!(out.summary.methods[1].beta_hat_mean.is_some());
        assert!(out.figure1.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ExperimentConfig::parse(SELECTIVE).unwrap();
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    }

    #[test]
    fn crc_c_and_ltt_are_more_conservative_on_average() {
        let cfg = ExperimentConfig::parse(SELECTIVE).unwrap();
        let s = run_experiment(&cfg).unwrap().summary;
        assert!(s.methods[1].theta_mean >= s.methods[0].theta_mean);
        assert!(s.methods[2].theta_mean >= s.methods[1].theta_mean);
    }

    #[test]
    fn fdr_and_iou_run() {
        for (kind, alpha) in [("fdr", 0.3), ("iou", 0.7)] {
            let text = format!(
                "alpha = {alpha}\nn = 30\ntest_n = 20\ntrials = 3\nmethods = [\"crc\", \"crc_c\", \"ltt\"]\n\
                 scan_points = 128\n[task]\nkind = \"{kind}\"\n[task.generator]\ngrid_side = 8\n[bootstrap]\nreplicates = 5\n"
            );
            let out = run_experiment(&ExperimentConfig::parse(&text).unwrap()).unwrap();
            let TrialTable::Risk(rows) = out.trials else { panic!() };
            assert_eq!(rows.len(), 9);
            assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.test_risk) && (0.0..=1.0).contains(&r.pred_rate)));
        }
    }

    #[test]
    fn debias_rows_per_group() {
        let text = "alpha = 0.1\nn = 1000\ntrials = 4\nmethods = [\"raw\", \"ols\", \"conservative\"]\n[task]\nkind = \"debias\"\n";
        let out = run_experiment(&ExperimentConfig::parse(text).unwrap()).unwrap();
        let TrialTable::Bias(rows) = out.trials else { panic!() };
        assert_eq!(rows.len(), 4 * 3 * 5);
        assert_eq!(rows[0].group, "black");
        assert_eq!(out.summary.groups.len(), 15);
        let ols = &out.summary.groups[5..10];
        let raw = &out.summary.groups[..5];
        let total = |g: &[GroupSummary]| g.iter().map(|s| s.mean_abs_bias).sum::<f64>();
        assert!(total(ols) < total(raw));
        assert!(ols.iter().all(|g| g.mean_half_width.is_some()));
    }

    #[test]
    fn debias_from_csv_uses_held_out_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("f,y,a,b\n");
        let task = GroupDebiasTask::default();
        let mut rng = rng_from_seed(5);
        for _ in 0..400 {
            let (z, f) = task.draw_with_prediction(&mut rng);
            body.push_str(&format!("{f},{},{},{}\n", z.y.as_real().unwrap(), z.x[0], z.x[3]));
        }
        std::fs::write(dir.path().join("d.csv"), body).unwrap();
        let cfg_path = dir.path().join("c.toml");
        std::fs::write(&cfg_path, "alpha = 0.1\nn = 300\ntrials = 3\nmethods = [\"ols\"]\n[task]\nkind = \"debias\"\ncsv = \"d.csv\"\n").unwrap();
        let out = run_experiment(&ExperimentConfig::from_path(&cfg_path).unwrap()).unwrap();
        let TrialTable::Bias(rows) = out.trials else { panic!() };
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[1].group, "b");
    }

    #[test]
    fn config_errors_carry_lines() {
        let bad_alpha = "seed = 1\nn = 10\nalpha = 1.5\nmethods = [\"crc\"]\n[task]\nkind = \"selective\"\n";
        match ExperimentConfig::parse(bad_alpha) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let unknown = "alpha = 0.1\nn = 10\nmethods = [\"crc\"]\nbogus = 2\n[task]\nkind = \"selective\"\n";
        match ExperimentConfig::parse(unknown) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let wrong_method = "alpha = 0.1\nn = 10\nmethods = [\"ols\"]\n[task]\nkind = \"selective\"\n";
        match ExperimentConfig::parse(wrong_method) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_delta = "alpha = 0.1\nn = 10\nmethods = [\"ltt\"]\n[task]\nkind = \"selective\"\n[ltt]\ndelta = 2.0\n";
        match ExperimentConfig::parse(bad_delta) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let unknown_task_field = "alpha = 0.1\nn = 10\nmethods = [\"crc\"]\n[task]\nkind = \"selective\"\nslop = 0.5\n";
        assert!(matches!(ExperimentConfig::parse(unknown_task_field), Err(Error::Config { .. })));
    }

    #[test]
    fn figure1_band_columns_are_exact() {
        let (rows, s) = figure1(0.25, 500, 1, 20).unwrap();
        assert_eq!(rows.len(), 3 * 501);
        for r in &rows {
            let j = r.j as f64;
            assert_eq!(r.band_lo, 0.25 + 0.75 / j);
            assert_eq!(r.band_hi, 0.25 + 1.75 / j);
            let c = (r.e_bar * j).round();
            let base = (j - 1.0) * 0.25;
            assert_eq!(r.in_band, c > base + 1.0 && c <= base + 2.0);
        }
        assert_eq!(s.scenarios.len(), 3);
        assert!(s.scenarios.iter().all(|c| c.mean_band_count.is_finite()));
    }
}
