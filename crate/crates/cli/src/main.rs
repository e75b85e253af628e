use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use riskctl::crc::{general_risk_bound, smooth_stability_bound, CrcMonotonic, DiscretizedRoot, ReferenceRoot};
use riskctl::erm::{debias_ols, fit_conservative, min_eigen_ratio, ErmConfig, GammaMode, SquaredLoss};
use riskctl::harness::experiment::{figure1, run_experiment, ExperimentConfig, TrialTable};
use riskctl::harness::io::{read_debias_path, read_selective_path, write_csv_path, write_json_path};
use riskctl::harness::mc::{monte_carlo_verify, McConfig};
use riskctl::harness::tasks::{BumpTask, MonotoneTask, PiecewiseLinearTask, SelectivePopulation};
use riskctl::ltt::{ltt_select_selective, LttConfig};
use riskctl::risk::rng_from_seed;
use riskctl::selective::{selective_stability_beta, MonteCarloConfig, SelectiveInstance, SelectiveLoss, SelectiveThreshold};
use riskctl::stability::{bootstrap_beta, crc_conservative, BootstrapConfig, Family, StabilityReport};
use riskctl::{CalibrationResult, Calibrator, Label, Sample};

#[derive(Parser, Debug)]
#[command(name = "riskctl", version, about = "Stability-based conformal risk control")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Target risk level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate a selective threshold from a `p_hat,err` CSV.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = CalibrateMethod::Crc)]
        method: CalibrateMethod,
        /// Bootstrap replicates for crc-c.
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        /// Error level of the LTT guarantee.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1001)]
        grid_points: usize,
    },
    /// Bootstrap estimate of the stability β̂ of the selective threshold.
    BootstrapBeta {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
    },
    /// Monte Carlo check of `E[loss] ≤ α + slack` on a synthetic task.
    Verify {
        #[arg(long, value_enum)]
        task: VerifyTask,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Grid resolution for the bump task.
        #[arg(long, default_value_t = 20)]
        m: usize,
        /// Overrides the task's own slack.
        #[arg(long, allow_negative_numbers = true)]
        slack: Option<f64>,
    },
    /// Run a TOML-configured comparison of calibrators.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Running error rates and band endpoints for the three scenarios.
    Figure1 {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        seeds: usize,
    },
    /// Group-wise least-squares recalibration of an `f,y,g...` CSV.
    Debias {
        #[arg(long)]
        input: PathBuf,
        /// Add the conservative shift γ.
        #[arg(long)]
        conservative: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CalibrateMethod {
    Crc,
    CrcC,
    Ltt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VerifyTask {
    /// Step loss with conformal risk control, no slack.
    Monotone,
    /// Non-monotone bump loss with the discretized root.
    Bump,
    /// Piecewise-linear loss with the leftmost root.
    Smooth,
    /// Selective threshold on a synthetic confidence population.
    Selective,
}

fn write_rows<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: Format) -> Result<PathBuf> {
    let path = dir.join(match format {
        Format::Csv => format!("{stem}.csv"),
        Format::Json => format!("{stem}.json"),
    });
    match format {
        Format::Csv => write_csv_path(&path, rows),
        Format::Json => write_json_path(&path, &rows),
    }
    .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    write_json_path(&path, value).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn selective_samples(path: &Path) -> Result<Vec<Sample>> {
    let (p, e) = read_selective_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(p.into_iter().zip(e).map(|(p, e)| Sample::new(vec![p], Label::Binary(e))).collect())
}

#[derive(Serialize)]
struct CalibrationRow {
    algorithm: String,
    theta_hat: f64,
    alpha_effective: f64,
}

#[derive(Serialize)]
struct DebiasRow {
    group: String,
    count: usize,
    frequency: f64,
    theta: f64,
    adjusted_mean: f64,
    residual_mean: f64,
    half_width: Option<f64>,
    certifiable: bool,
}

/// Outcome of a subcommand: whether a verified guarantee held.
enum Outcome {
    Done,
    GuaranteeFailed,
}

fn run(cli: Cli) -> Result<Outcome> {
    let g = &cli.global;
    fs::create_dir_all(&g.out_dir).with_context(|| format!("creating {}", g.out_dir.display()))?;
    let seed = g.seed.unwrap_or(0);
    let alpha = g.alpha.unwrap_or(0.1);
    let mut written = Vec::new();
    let outcome = match cli.command {
        Command::Calibrate { input, method, replicates, delta, grid_points } => {
            let data = selective_samples(&input)?;
            let loss = SelectiveLoss { alpha };
            let res: CalibrationResult = match method {
                CalibrateMethod::Crc => SelectiveThreshold { alpha }.calibrate(&data, &loss)?,
                CalibrateMethod::CrcC => {
                    crc_conservative(&data, &loss, alpha, &Family::Selective, &BootstrapConfig::new(replicates, seed))?.0
                }
                CalibrateMethod::Ltt => {
                    let inst = SelectiveInstance::from_samples(&data, alpha, Some(seed))?;
                    ltt_select_selective(&inst, &LttConfig::uniform(0.0, 1.0, grid_points)?.with_delta(delta))?
                }
            };
            match g.format {
                Format::Json => written.push(write_json(&g.out_dir, "calibration.json", &res)?),
                Format::Csv => {
                    let row = CalibrationRow {
                        algorithm: res.algorithm.clone(),
                        theta_hat: res.theta_hat.scalar_value(),
                        alpha_effective: res.alpha_effective,
                    };
                    written.push(write_rows(&g.out_dir, "calibration", &[row], Format::Csv)?);
                }
            }
            println!("{}", serde_json::to_string_pretty(&res)?);
            Outcome::Done
        }
        Command::BootstrapBeta { input, replicates } => {
            let data = selective_samples(&input)?;
            let loss = SelectiveLoss { alpha };
            let algo = SelectiveThreshold { alpha };
            let est = bootstrap_beta(&data, &algo, &algo, &loss, &BootstrapConfig::new(replicates, seed))?;
            let report = StabilityReport::new(&est, alpha);
            match g.format {
                Format::Json => written.push(write_json(&g.out_dir, "bootstrap_beta.json", &report)?),
                Format::Csv => written.push(write_rows(&g.out_dir, "bootstrap_beta", &[&report], Format::Csv)?),
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Outcome::Done
        }
        Command::Verify { task, n, trials, m, slack } => {
            let mut cfg = McConfig { alpha, n, trials, slack_budget: 0.0, seed };
            let report = match task {
                VerifyTask::Monotone => {
                    let t = MonotoneTask;
                    cfg.slack_budget = slack.unwrap_or(0.0);
                    monte_carlo_verify(&t, &t.loss(), &CrcMonotonic::new(alpha), &cfg)?
                }
                VerifyTask::Bump => {
                    let t = BumpTask::default();
                    cfg.slack_budget = match slack {
                        Some(s) => s,
                        None => general_risk_bound(n, m)?.slack,
                    };
                    monte_carlo_verify(&t, &t.loss(), &DiscretizedRoot::new(alpha, m)?, &cfg)?
                }
                VerifyTask::Smooth => {
                    let t = PiecewiseLinearTask::default();
                    if !t.supports_level(alpha) {
                        bail!("the smooth task's certificate does not hold at α = {alpha}");
                    }
                    cfg.slack_budget = match slack {
                        Some(s) => s,
                        None => smooth_stability_bound(&t.certificate(), n)?,
                    };
                    monte_carlo_verify(&t, &t.loss(), &ReferenceRoot::new(alpha), &cfg)?
                }
                VerifyTask::Selective => {
                    let pop = SelectivePopulation::default();
                    cfg.slack_budget = match slack {
                        Some(s) => s,
                        None => {
                            let gen = |s: u64| pop.instance(n + 1, alpha, &mut rng_from_seed(s));
                            selective_stability_beta(gen, MonteCarloConfig { trials, seed })?.beta
                        }
                    };
                    monte_carlo_verify(&pop, &SelectiveLoss { alpha }, &SelectiveThreshold { alpha }, &cfg)?
                }
            };
            match g.format {
                Format::Json => written.push(write_json(&g.out_dir, "verify.json", &report)?),
                Format::Csv => written.push(write_rows(&g.out_dir, "verify", &[&report], Format::Csv)?),
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.pass {
                Outcome::Done
            } else {
                Outcome::GuaranteeFailed
            }
        }
        Command::Experiment { config } => {
            let mut cfg = ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(a) = g.alpha {
                cfg.alpha = a;
            }
            let out = run_experiment(&cfg)?;
            written.push(match &out.trials {
                TrialTable::Risk(rows) => write_rows(&g.out_dir, "trials", rows, g.format)?,
                TrialTable::Bias(rows) => write_rows(&g.out_dir, "trials", rows, g.format)?,
            });
            if !out.figure1.is_empty() {
                written.push(write_rows(&g.out_dir, "figure1", &out.figure1, g.format)?);
            }
            written.push(write_json(&g.out_dir, "summary.json", &out.summary)?);
            Outcome::Done
        }
        Command::Figure1 { n, seeds } => {
            let (rows, summary) = figure1(g.alpha.unwrap_or(0.25), n, seed, seeds)?;
            written.push(write_rows(&g.out_dir, "figure1", &rows, g.format)?);
            written.push(write_json(&g.out_dir, "figure1_summary.json", &summary)?);
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Outcome::Done
        }
        Command::Debias { input, conservative } => {
            let table = read_debias_path(&input).with_context(|| format!("reading {}", input.display()))?;
            let gamma = if conservative {
                let d = table.group_names.len();
                let resid: Vec<Sample> = table
                    .samples
                    .iter()
                    .zip(&table.f)
                    .map(|(z, &f)| Sample::new(z.x.clone(), Label::Real(z.y.as_real().unwrap_or(f64::NAN) - f)))
                    .collect();
                let mu = min_eigen_ratio(&resid)?;
                let loss = SquaredLoss::new(d);
                fit_conservative(&resid, &loss, &ErmConfig::ridge(0.0), mu, GammaMode::OneStep)?.gamma
            } else {
                0.0
            };
            let fit = debias_ols(&table.samples, &table.f, gamma)?;
            match g.format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Named<'a> {
                        group_names: &'a [String],
                        #[serde(flatten)]
                        fit: &'a riskctl::erm::DebiasFit,
                    }
                    written.push(write_json(&g.out_dir, "debias.json", &Named { group_names: &table.group_names, fit: &fit })?);
                }
                Format::Csv => {
                    let rows: Vec<DebiasRow> = fit
                        .groups
                        .iter()
                        .map(|r| DebiasRow {
                            group: table.group_names[r.group].clone(),
                            count: r.count,
                            frequency: r.frequency,
                            theta: fit.theta[r.group],
                            adjusted_mean: r.adjusted_mean,
                            residual_mean: r.residual_mean,
                            half_width: r.half_width,
                            certifiable: r.certifiable,
                        })
                        .collect();
                    written.push(write_rows(&g.out_dir, "debias", &rows, Format::Csv)?);
                }
            }
            Outcome::Done
        }
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(a) = cli.global.alpha {
        if !(a > 0.0 && a <= 1.0) {
            eprintln!("error: --alpha must lie in (0, 1], got {a}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::GuaranteeFailed) => {
            eprintln!("guarantee check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
