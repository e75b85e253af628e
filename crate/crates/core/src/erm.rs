//! Regularized empirical risk minimization.
//!
//! The objective is `R̂_D(θ) + (λ/2)‖θ‖² + γ·1ᵀθ`. Squared error has a closed
//! form and a rank-one leave-one-out update; other convex losses go through
//! gradient descent with backtracking.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{without_index, CalibrationResult, Calibrator, ThetaHat};
use crate::crc::SearchInterval;
use crate::data::{LabelKind, Sample};
use crate::error::{Error, Result};
use crate::loss::Loss;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErmConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub step_size: f64,
    pub grad_tol: f64,
    /// Interval for the derivative-free scalar path.
    pub interval: Option<SearchInterval>,
}

impl Default for ErmConfig {
    fn default() -> Self {
        ErmConfig { lambda: 0.0, gamma: 0.0, max_iters: 10_000, step_size: 1.0, grad_tol: 1e-10, interval: None }
    }
}

impl ErmConfig {
    pub fn ridge(lambda: f64) -> Self {
        ErmConfig { lambda, ..Self::default() }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("λ must be a finite nonnegative number, got {}", self.lambda)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be positive".into()));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("γ must be finite".into()));
        }
        Ok(())
    }
}

/// How the Lipschitz modulus `ρ(z)` of [`SquaredLoss`] is reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RhoMode {
    /// `‖x‖²`, the Lipschitz constant of the gradient.
    GradientNormSq,
    /// A fixed constant, e.g. `d` for binary features.
    Constant(f64),
    /// Lipschitz constant of the loss itself on the ball `‖θ‖ ≤ radius`:
    /// `‖x‖·(‖x‖·radius + |y|)`.
    LossOnBall(f64),
}

/// `½(xᵀθ − y)²`.
#[derive(Clone, Copy, Debug)]
pub struct SquaredLoss {
    pub dim: usize,
    pub rho: RhoMode,
}

impl SquaredLoss {
    pub fn new(dim: usize) -> Self {
        SquaredLoss { dim, rho: RhoMode::GradientNormSq }
    }

    pub fn with_rho(mut self, rho: RhoMode) -> Self {
        self.rho = rho;
        self
    }

    fn residual(z: &Sample, theta: &[f64]) -> f64 {
        dot(&z.x, theta) - target(z)
    }
}

fn target(z: &Sample) -> f64 {
    z.y.as_real().unwrap_or(f64::NAN)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Loss for SquaredLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn label_kind(&self) -> LabelKind {
        LabelKind::Real
    }

    fn evaluate(&self, z: &Sample, theta: &[f64]) -> f64 {
        0.5 * Self::residual(z, theta).powi(2)
    }

    fn gradient(&self, z: &Sample, theta: &[f64]) -> Option<Vec<f64>> {
        let r = Self::residual(z, theta);
        Some(z.x.iter().map(|x| x * r).collect())
    }

    fn lipschitz_rho(&self, z: &Sample) -> Option<f64> {
        let nx = norm(&z.x);
        Some(match self.rho {
            RhoMode::GradientNormSq => nx * nx,
            RhoMode::Constant(c) => c,
            RhoMode::LossOnBall(r) => nx * (nx * r + target(z).abs()),
        })
    }

    fn is_squared_error(&self) -> bool {
        true
    }
}

/// Radius of a ball containing every ridge fit on data with these feature
/// and label magnitudes: `max‖x‖·max|y|/λ`.
pub fn ridge_ball_radius(data: &[Sample], lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::RequiresPositiveLambda);
    }
    let mx = data.iter().map(|z| norm(&z.x)).fold(0.0, f64::max);
    let my = data.iter().map(|z| target(z).abs()).fold(0.0, f64::max);
    Ok(mx * my / lambda)
}

fn design(data: &[Sample]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data[0].x.len();
    let mut x = DMatrix::zeros(data.len(), d);
    let mut y = DVector::zeros(data.len());
    for (i, z) in data.iter().enumerate() {
        if z.x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.x.len() });
        }
        for k in 0..d {
            x[(i, k)] = z.x[k];
        }
        y[i] = z.y.as_real().ok_or_else(|| Error::InvalidSample { index: i, reason: "expected a real label".into() })?;
    }
    Ok((x, y))
}

fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Solves `(G/n + λI)θ = b/n − γ1` for the Gram matrix `G` and moment `b`.
fn solve_normal(gram: &DMatrix<f64>, moment: &DVector<f64>, n: usize, cfg: &ErmConfig) -> Result<DVector<f64>> {
    let d = gram.nrows();
    let nf = n as f64;
    let a = gram / nf + DMatrix::identity(d, d) * cfg.lambda;
    let rhs = moment / nf - DVector::from_element(d, cfg.gamma);
    let (lo, hi) = eigen_extremes(&a);
    if lo <= 1e-12 * hi.max(1e-300) {
        return Err(Error::RankDeficient { min_eigenvalue: lo.max(0.0) });
    }
    let chol = a.cholesky().ok_or(Error::RankDeficient { min_eigenvalue: lo })?;
    Ok(chol.solve(&rhs))
}

/// Norm of `∇R̂(θ) + λθ + γ1` for squared error.
fn ridge_grad_norm(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, cfg: &ErmConfig) -> f64 {
    let n = x.nrows() as f64;
    let resid = x * theta - y;
    let g = x.transpose() * resid / n + theta * cfg.lambda + DVector::from_element(theta.len(), cfg.gamma);
    g.norm()
}

fn erm_result(theta: Vec<f64>, algo: &str, n: usize, cfg: &ErmConfig, grad_norm: f64) -> CalibrationResult {
    CalibrationResult::new(ThetaHat::Point(theta), algo, f64::NAN)
        .with_diagnostic("grad_norm", grad_norm)
        .with_diagnostic("lambda", cfg.lambda)
        .with_diagnostic("gamma", cfg.gamma)
        .with_diagnostic("n", n as f64)
}

/// Closed-form minimizer of `(1/n)Σ½(xᵀθ − y)² + (λ/2)‖θ‖² + γ1ᵀθ`.
pub fn ridge_fit(data: &[Sample], cfg: &ErmConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let (x, y) = design(data)?;
    let gram = x.transpose() * &x;
    let moment = x.transpose() * &y;
    let theta = solve_normal(&gram, &moment, data.len(), cfg)?;
    let gn = ridge_grad_norm(&x, &y, &theta, cfg);
    Ok(erm_result(theta.iter().copied().collect(), "ridge", data.len(), cfg, gn)
        .with_diagnostic("converged", 1.0))
}

/// Ridge fits on every `D_{-i}` through a rank-one downdate of the shared
/// system `G + (n−1)λI`.
pub fn ridge_loo_fits(data: &[Sample], cfg: &ErmConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::TooSmall { need: 2, got: n });
    }
    let (x, y) = design(data)?;
    let d = x.ncols();
    let m = (n - 1) as f64;
    let a = x.transpose() * &x + DMatrix::identity(d, d) * (m * cfg.lambda);
    let b = x.transpose() * &y - DVector::from_element(d, m * cfg.gamma);
    let (lo, hi) = eigen_extremes(&a);
    if lo <= 1e-12 * hi.max(1e-300) {
        return Err(Error::RankDeficient { min_eigenvalue: lo.max(0.0) });
    }
    let chol = a.cholesky().ok_or(Error::RankDeficient { min_eigenvalue: lo })?;
    let a_inv_b = chol.solve(&b);
    (0..n)
        .map(|i| {
            let xi = x.row(i).transpose();
            let u = chol.solve(&xi);
            let denom = 1.0 - xi.dot(&u);
            if denom <= 1e-12 {
                return Err(Error::LooFailure {
                    index: i,
                    source: Box::new(Error::RankDeficient { min_eigenvalue: denom.max(0.0) }),
                });
            }
            // (A − xxᵀ)⁻¹(b − x·y_i) by Sherman–Morrison.
            let rhs_inv = &a_inv_b - &u * y[i];
            let theta = &rhs_inv + &u * (xi.dot(&rhs_inv) / denom);
            Ok(theta.iter().copied().collect())
        })
        .collect()
}

/// Value and gradient of the full objective for a generic loss.
fn objective(data: &[Sample], loss: &dyn Loss, cfg: &ErmConfig, theta: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mut s = 0.0;
    for z in data {
        s += loss.evaluate(z, theta);
    }
    s / n + 0.5 * cfg.lambda * dot(theta, theta) + cfg.gamma * theta.iter().sum::<f64>()
}

fn objective_grad(data: &[Sample], loss: &dyn Loss, cfg: &ErmConfig, theta: &[f64]) -> Result<Vec<f64>> {
    let n = data.len() as f64;
    let mut g = vec![0.0; theta.len()];
    for z in data {
        let gi = loss.gradient(z, theta).ok_or(Error::MissingCapability("a gradient"))?;
        for (a, b) in g.iter_mut().zip(gi) {
            *a += b;
        }
    }
    Ok(g.iter().zip(theta).map(|(gk, t)| gk / n + cfg.lambda * t + cfg.gamma).collect())
}

/// Minimizes the regularized empirical risk of a convex loss.
///
/// With a gradient: descent with Armijo backtracking, stopping when the
/// objective gradient norm falls below `grad_tol`. Without one and with
/// `d = 1`: golden-section search on `cfg.interval` (default `[0, 1]`).
/// Non-convergence is reported through the `converged` diagnostic.
pub fn erm_fit_convex(data: &[Sample], loss: &dyn Loss, cfg: &ErmConfig) -> Result<CalibrationResult> {
    erm_fit_from(data, loss, cfg, None)
}

fn erm_fit_from(data: &[Sample], loss: &dyn Loss, cfg: &ErmConfig, start: Option<&[f64]>) -> Result<CalibrationResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = loss.dim();
    let has_grad = loss.gradient(&data[0], &vec![0.0; d]).is_some();
    if !has_grad {
        if d != 1 {
            return Err(Error::MissingCapability("a gradient (required when d > 1)"));
        }
        return Ok(golden_section(data, loss, cfg));
    }
    let mut theta = start.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; d]);
    let mut f = objective(data, loss, cfg, &theta);
    let mut step = cfg.step_size;
    let mut converged = false;
    let mut iters = 0;
    let mut gnorm = f64::INFINITY;
    while iters < cfg.max_iters {
        let g = objective_grad(data, loss, cfg, &theta)?;
        gnorm = norm(&g);
        if gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }
        let gg = gnorm * gnorm;
        let mut t = step;
        let mut accepted = false;
        while t > 1e-30 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let fc = objective(data, loss, cfg, &cand);
            // Near the optimum the Armijo decrease drowns in rounding; accept
            // a flat step when it still reduces the gradient.
            let flat = (fc - f).abs() <= 8.0 * f64::EPSILON * f.abs().max(1e-300)
                && norm(&objective_grad(data, loss, cfg, &cand)?) < gnorm;
            if fc <= f - 0.5 * t * gg || flat {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iters += 1;
        if !accepted {
            break;
        }
        step = (2.0 * t).min(cfg.step_size.max(t));
    }
    Ok(erm_result(theta, "erm-gd", data.len(), cfg, gnorm)
        .with_diagnostic("iterations", iters as f64)
        .with_diagnostic("converged", converged as u8 as f64))
}

fn golden_section(data: &[Sample], loss: &dyn Loss, cfg: &ErmConfig) -> CalibrationResult {
    let iv = cfg.interval.unwrap_or_default();
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let f = |t: f64| objective(data, loss, cfg, &[t]);
    let (mut a, mut b) = (iv.lo, iv.hi);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    let mut iters = 0;
    while b - a > 1e-10 && iters < cfg.max_iters {
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = f(e);
        }
        iters += 1;
    }
    let t = 0.5 * (a + b);
    erm_result(vec![t], "erm-golden", data.len(), cfg, f64::NAN)
        .with_diagnostic("iterations", iters as f64)
        .with_diagnostic("converged", (b - a <= 1e-10) as u8 as f64)
}

/// Regularized ERM as a calibrator. Squared-error losses use the closed
/// form and the rank-one leave-one-out path; anything else is fitted by
/// [`erm_fit_convex`], warm-starting leave-one-out fits from the full fit.
#[derive(Clone, Copy, Debug, Default)]
pub struct Erm {
    pub config: ErmConfig,
}

impl Calibrator for Erm {
    fn id(&self) -> String {
        format!("erm-lambda{}-gamma{}", self.config.lambda, self.config.gamma)
    }

    fn calibrate(&self, data: &[Sample], loss: &dyn Loss) -> Result<CalibrationResult> {
        if loss.is_squared_error() {
            ridge_fit(data, &self.config)
        } else {
            erm_fit_convex(data, loss, &self.config)
        }
    }

    fn calibrate_leave_one_out(&self, data: &[Sample], loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        if loss.is_squared_error() {
            let thetas = ridge_loo_fits(data, &self.config)?;
            return Ok(thetas
                .into_iter()
                .map(|t| erm_result(t, "ridge", data.len() - 1, &self.config, f64::NAN))
                .collect());
        }
        let full = erm_fit_convex(data, loss, &self.config)?;
        let start = full.theta_hat.to_vec(loss.dim());
        (0..data.len())
            .into_par_iter()
            .map(|i| {
                let sub = without_index(data, i);
                erm_fit_from(&sub, loss, &self.config, Some(&start))
                    .map_err(|e| Error::LooFailure { index: i, source: Box::new(e) })
            })
            .collect()
    }
}

/// Minimizes the empirical risk over a finite grid of scalar parameters,
/// taking the smallest minimizer. Suited to piecewise-constant losses where
/// gradients carry no information.
#[derive(Clone, Debug)]
pub struct GridArgmin {
    pub grid: Vec<f64>,
}

impl GridArgmin {
    pub fn uniform(lo: f64, hi: f64, points: usize) -> Self {
        let points = points.max(2);
        GridArgmin { grid: (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect() }
    }
}

impl Calibrator for GridArgmin {
    fn id(&self) -> String {
        format!("grid-argmin-{}", self.grid.len())
    }

    fn calibrate(&self, data: &[Sample], loss: &dyn Loss) -> Result<CalibrationResult> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        let mut best = (f64::INFINITY, self.grid[0]);
        for &t in &self.grid {
            let mut s = 0.0;
            for z in data {
                s += loss.evaluate(z, &[t]);
            }
            if s < best.0 {
                best = (s, t);
            }
        }
        Ok(CalibrationResult::new(ThetaHat::scalar(best.1), self.id(), f64::NAN)
            .with_diagnostic("empirical_risk", best.0 / data.len() as f64))
    }

    fn calibrate_leave_one_out(&self, data: &[Sample], loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        if data.len() < 2 {
            return Err(Error::TooSmall { need: 2, got: data.len() });
        }
        // Loss table over the grid, then each subset's sums in index order.
        let table: Vec<Vec<f64>> = self.grid.iter().map(|&t| data.iter().map(|z| loss.evaluate(z, &[t])).collect()).collect();
        let m = (data.len() - 1) as f64;
        Ok((0..data.len())
            .map(|i| {
                let mut best = (f64::INFINITY, self.grid[0]);
                for (k, row) in table.iter().enumerate() {
                    let mut s = 0.0;
                    for (j, v) in row.iter().enumerate() {
                        if j != i {
                            s += v;
                        }
                    }
                    if s < best.0 {
                        best = (s, self.grid[k]);
                    }
                }
                CalibrationResult::new(ThetaHat::scalar(best.1), self.id(), f64::NAN)
                    .with_diagnostic("empirical_risk", best.0 / m)
            })
            .collect())
    }
}

/// `2·E[ρ²]/(λ(n+1))`, the loss-scale stability of ridge-type ERM.
pub fn loss_stability_beta(rho_sq_mean: f64, lambda: f64, n: usize) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::RequiresPositiveLambda);
    }
    Ok(2.0 * rho_sq_mean / (lambda * (n as f64 + 1.0)))
}

/// Per-sample parameter shift against its certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftCertificate {
    /// `‖θ̂_full − θ̂_{-i}‖`.
    pub shift: f64,
    pub bound: f64,
}

impl ShiftCertificate {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.shift <= self.bound * (1.0 + rel_tol) + 1e-12
    }
}

fn grads_at(data: &[Sample], loss: &dyn Loss, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    data.iter()
        .map(|z| loss.gradient(z, theta).ok_or(Error::MissingCapability("a gradient")))
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Checks `‖θ̂_full − θ̂_{-i}‖ ≤ ‖s_{-i}‖/λ`, where
/// `s_{-i} = Σ_{j≠i} g_j/(n(n+1)) − g_i/(n+1)` with `g_j = ∇ℓ(Z_j; θ̂_full)`
/// and `n + 1 = |D|`.
pub fn loss_shift_certificates(data: &[Sample], loss: &dyn Loss, cfg: &ErmConfig) -> Result<Vec<ShiftCertificate>> {
    if cfg.lambda <= 0.0 {
        return Err(Error::RequiresPositiveLambda);
    }
    let algo = Erm { config: *cfg };
    let full = algo.calibrate(data, loss)?.theta_hat.to_vec(loss.dim());
    let loo = algo.calibrate_leave_one_out(data, loss)?;
    let g = grads_at(data, loss, &full)?;
    let np1 = data.len() as f64;
    let n = np1 - 1.0;
    let d = loss.dim();
    let mut total = vec![0.0; d];
    for gj in &g {
        for k in 0..d {
            total[k] += gj[k];
        }
    }
    Ok(loo
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s: Vec<f64> = (0..d).map(|k| (total[k] - g[i][k]) / (n * np1) - g[i][k] / np1).collect();
            ShiftCertificate { shift: distance(&full, &r.theta_hat.to_vec(d)), bound: norm(&s) / cfg.lambda }
        })
        .collect())
}

/// Checks `‖θ̂_full − θ̂_{-i}‖ ≤ (‖∇ℓ(Z_i; θ̂_{-i})‖/(n+1) + ‖Σ_{j≠i}∇ℓ(Z_j; θ̂_{-i})‖/(n(n+1)))/(μ+λ)`.
pub fn gradient_shift_certificates(
    data: &[Sample],
    loss: &dyn Loss,
    cfg: &ErmConfig,
    mu: f64,
) -> Result<Vec<ShiftCertificate>> {
    if mu + cfg.lambda <= 0.0 {
        return Err(Error::InvalidArgument("μ + λ must be positive".into()));
    }
    let algo = Erm { config: *cfg };
    let full = algo.calibrate(data, loss)?.theta_hat.to_vec(loss.dim());
    let loo = algo.calibrate_leave_one_out(data, loss)?;
    let np1 = data.len() as f64;
    let n = np1 - 1.0;
    let d = loss.dim();
    loo.iter()
        .enumerate()
        .map(|(i, r)| {
            let t = r.theta_hat.to_vec(d);
            let g = grads_at(data, loss, &t)?;
            let mut rest = vec![0.0; d];
            for (j, gj) in g.iter().enumerate() {
                if j != i {
                    for k in 0..d {
                        rest[k] += gj[k];
                    }
                }
            }
            let bound = (norm(&g[i]) / np1 + norm(&rest) / (n * np1)) / (mu + cfg.lambda);
            Ok(ShiftCertificate { shift: distance(&full, &t), bound })
        })
        .collect()
}

/// Which estimate of `E[ρ(Z)‖∇ℓ(Z; θ̂_n)‖]` at a fresh point feeds β.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestGradientEstimate {
    /// Average over the fitting sample at the full fit.
    InSample,
    /// Each sample evaluated at the fit that excluded it.
    #[default]
    LeaveOneOut,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradStabilityReport {
    /// `β·1_d`.
    pub beta_vec: Vec<f64>,
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub n: usize,
    pub rho_mean: f64,
    /// The test-gradient term selected by `policy`.
    pub test_grad_norm_mean: f64,
    pub test_grad_norm_in_sample: f64,
    pub test_grad_norm_loo: f64,
    /// `‖(1/n)Σ∇ℓ(Z_j; θ̂_n)‖`.
    pub train_grad_norm_mean: f64,
    pub theta: Vec<f64>,
    pub policy: TestGradientEstimate,
}

/// Plug-in gradient-scale stability:
/// `β = (E[ρ‖∇ℓ_test‖] + E[ρ]·(‖ḡ_train‖ + 2γ)) / ((μ+λ)(n+1))`, with `γ`
/// taken from `cfg` (zero gives the unshifted bound).
pub fn grad_stability_beta(
    data: &[Sample],
    loss: &dyn Loss,
    cfg: &ErmConfig,
    mu: f64,
    policy: TestGradientEstimate,
) -> Result<GradStabilityReport> {
    cfg.validate()?;
    if mu < 0.0 || mu + cfg.lambda <= 0.0 {
        return Err(Error::InvalidArgument("need μ ≥ 0 and μ + λ > 0".into()));
    }
    if data.len() < 2 {
        return Err(Error::TooSmall { need: 2, got: data.len() });
    }
    let d = loss.dim();
    let rhos: Vec<f64> = data
        .iter()
        .map(|z| loss.lipschitz_rho(z).ok_or(Error::MissingCapability("a Lipschitz modulus ρ")))
        .collect::<Result<_>>()?;
    let algo = Erm { config: *cfg };
    let theta = algo.calibrate(data, loss)?.theta_hat.to_vec(d);
    let g = grads_at(data, loss, &theta)?;
    let nf = data.len() as f64;
    let mut mean_g = vec![0.0; d];
    for gi in &g {
        for k in 0..d {
            mean_g[k] += gi[k] / nf;
        }
    }
    let rho_mean = rhos.iter().sum::<f64>() / nf;
    let in_sample = rhos.iter().zip(&g).map(|(r, gi)| r * norm(gi)).sum::<f64>() / nf;
    let loo = algo.calibrate_leave_one_out(data, loss)?;
    let mut loo_term = 0.0;
    for (i, r) in loo.iter().enumerate() {
        let gi = loss.gradient(&data[i], &r.theta_hat.to_vec(d)).ok_or(Error::MissingCapability("a gradient"))?;
        loo_term += rhos[i] * norm(&gi);
    }
    loo_term /= nf;
    let test = match policy {
        TestGradientEstimate::InSample => in_sample,
        TestGradientEstimate::LeaveOneOut => loo_term,
    };
    let train = norm(&mean_g);
    let beta = (test + rho_mean * (train + 2.0 * cfg.gamma.max(0.0))) / ((mu + cfg.lambda) * (nf + 1.0));
    Ok(GradStabilityReport {
        beta_vec: vec![beta; d],
        beta,
        mu,
        lambda: cfg.lambda,
        gamma: cfg.gamma,
        n: data.len(),
        rho_mean,
        test_grad_norm_mean: test,
        test_grad_norm_in_sample: in_sample,
        test_grad_norm_loo: loo_term,
        train_grad_norm_mean: train,
        theta,
        policy,
    })
}

/// The smallest shift `γ` that makes the conservative gradient bound
/// nonpositive:
/// `γ = ((test + ρ̄·train)/c + λ‖θ‖_∞) / (1 − 2ρ̄/c)` with `c = (μ+λ)(n+1)`.
pub fn conservative_gamma(report: &GradStabilityReport, theta_inf_norm: f64) -> Result<f64> {
    conservative_gamma_from(
        report.test_grad_norm_mean,
        report.rho_mean,
        report.train_grad_norm_mean,
        report.mu,
        report.lambda,
        report.n,
        theta_inf_norm,
    )
}

/// [`conservative_gamma`] on raw expectations.
pub fn conservative_gamma_from(
    test_term: f64,
    rho_mean: f64,
    train_term: f64,
    mu: f64,
    lambda: f64,
    n: usize,
    theta_inf_norm: f64,
) -> Result<f64> {
    let c = (mu + lambda) * (n as f64 + 1.0);
    let twice_rho = 2.0 * rho_mean;
    if c <= twice_rho {
        return Err(Error::ConservativeShift { scale: c, twice_rho });
    }
    let numer = (test_term + rho_mean * train_term) / c + lambda * theta_inf_norm;
    Ok(numer / (1.0 - twice_rho / c))
}

/// How the circular dependence of `γ` on the fit is resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Fit at `γ = 0`, compute `γ` from that fit, refit once.
    #[default]
    OneStep,
    /// Repeat until `γ` changes by less than `1e-12` (at most 100 rounds).
    FixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservativeFit {
    pub gamma: f64,
    pub theta: Vec<f64>,
    pub rounds: usize,
    pub report: GradStabilityReport,
}

/// Fits the `γ`-shifted objective with `γ` from [`conservative_gamma`].
pub fn fit_conservative(
    data: &[Sample],
    loss: &dyn Loss,
    cfg: &ErmConfig,
    mu: f64,
    mode: GammaMode,
) -> Result<ConservativeFit> {
    let mut gamma = 0.0;
    let mut rounds = 0;
    loop {
        let c = cfg.with_gamma(gamma);
        let report = grad_stability_beta(data, loss, &c, mu, TestGradientEstimate::default())?;
        let inf = report.theta.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        let next = conservative_gamma(&report, inf)?;
        rounds += 1;
        let done = match mode {
            GammaMode::OneStep => true,
            GammaMode::FixedPoint => (next - gamma).abs() <= 1e-12 || rounds >= 100,
        };
        gamma = next;
        if done {
            let c = cfg.with_gamma(gamma);
            let theta = Erm { config: c }.calibrate(data, loss)?.theta_hat.to_vec(loss.dim());
            let report = grad_stability_beta(data, loss, &c, mu, TestGradientEstimate::default())?;
            return Ok(ConservativeFit { gamma, theta, rounds, report });
        }
    }
}

/// Smallest eigenvalue of `XᵀX/|D|`, with values below `1e-12` of the
/// largest snapped to zero.
pub fn min_eigen_ratio(data: &[Sample]) -> Result<f64> {
    let (x, _) = design_features(data)?;
    let a = x.transpose() * &x / data.len() as f64;
    let eig = SymmetricEigen::new(a.clone());
    let scale = a.norm();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let resid = (&a * v - v * lam).norm();
        if resid > 1e-8 * scale.max(1e-300) {
            return Err(Error::Numerical(format!("eigen residual {resid:e} exceeds tolerance")));
        }
    }
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    Ok(if lo <= 1e-12 * hi { 0.0 } else { lo })
}

fn design_features(data: &[Sample]) -> Result<(DMatrix<f64>, usize)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data[0].x.len();
    let mut x = DMatrix::zeros(data.len(), d);
    for (i, z) in data.iter().enumerate() {
        if z.x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.x.len() });
        }
        for k in 0..d {
            x[(i, k)] = z.x[k];
        }
    }
    Ok((x, d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: usize,
    pub count: usize,
    /// `p̂_j`, the fraction of samples in the group.
    pub frequency: f64,
    /// Mean of `f + xᵀθ̂` over the group.
    pub adjusted_mean: f64,
    /// Mean of `f + xᵀθ̂ − y` over the group.
    pub residual_mean: f64,
    /// `d^{3/2}·mean|f + xᵀθ̂ − y| / (μ(n+1)p̂_j)`; absent for empty groups.
    pub half_width: Option<f64>,
    pub certifiable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DebiasFit {
    pub theta: Vec<f64>,
    pub mu: f64,
    pub gamma: f64,
    pub mean_abs_residual: f64,
    pub groups: Vec<GroupReport>,
}

/// Least-squares recalibration of base predictions `f` on binary group
/// indicators, with a per-group unbiasedness certificate. Groups with no
/// members are left out of the fit (coefficient 0) and flagged.
pub fn debias_ols(data: &[Sample], f: &[f64], gamma: f64) -> Result<DebiasFit> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if f.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: f.len() });
    }
    let d = data[0].x.len();
    for (index, z) in data.iter().enumerate() {
        if z.x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.x.len() });
        }
        if z.x.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidSample { index, reason: "group indicators must be 0 or 1".into() });
        }
    }
    let counts: Vec<usize> = (0..d).map(|k| data.iter().filter(|z| z.x[k] == 1.0).count()).collect();
    let active: Vec<usize> = (0..d).filter(|&k| counts[k] > 0).collect();
    let reduced: Vec<Sample> = data
        .iter()
        .zip(f)
        .map(|(z, &fi)| {
            let x: Vec<f64> = active.iter().map(|&k| z.x[k]).collect();
            Sample::new(x, crate::data::Label::Real(target(z) - fi))
        })
        .collect();
    let mut theta = vec![0.0; d];
    let mu = if active.is_empty() {
        0.0
    } else {
        let fit = ridge_fit(&reduced, &ErmConfig::ridge(0.0).with_gamma(gamma))?;
        for (t, &k) in fit.theta_hat.to_vec(active.len()).into_iter().zip(&active) {
            theta[k] = t;
        }
        min_eigen_ratio(&reduced)?
    };
    let n = data.len() as f64;
    let adjusted: Vec<f64> = data.iter().zip(f).map(|(z, &fi)| fi + dot(&z.x, &theta)).collect();
    let resid: Vec<f64> = adjusted.iter().zip(data).map(|(a, z)| a - target(z)).collect();
    let mean_abs = resid.iter().map(|r| r.abs()).sum::<f64>() / n;
    let groups = (0..d)
        .map(|k| {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].x[k] == 1.0).collect();
            let count = idx.len();
            let frequency = count as f64 / n;
            if count == 0 {
                return GroupReport {
                    group: k,
                    count,
                    frequency,
                    adjusted_mean: f64::NAN,
                    residual_mean: f64::NAN,
                    half_width: None,
                    certifiable: false,
                };
            }
            let cf = count as f64;
            let adjusted_mean = idx.iter().map(|&i| adjusted[i]).sum::<f64>() / cf;
            let residual_mean = idx.iter().map(|&i| resid[i]).sum::<f64>() / cf;
            let half_width = (mu > 0.0).then(|| (d as f64).powf(1.5) * mean_abs / (mu * (n + 1.0) * frequency));
            GroupReport {
                group: k,
                count,
                frequency,
                adjusted_mean,
                residual_mean,
                half_width,
                certifiable: half_width.is_some(),
            }
        })
        .collect();
    Ok(DebiasFit { theta, mu, gamma, mean_abs_residual: mean_abs, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::naive_leave_one_out;
    use crate::data::Label;
    use crate::loss::FnLoss;
    use crate::risk::rng_from_seed;
    use rand::Rng;

    fn sample(x: &[f64], y: f64) -> Sample {
        Sample::new(x.to_vec(), Label::Real(y))
    }

    fn random_regression(n: usize, d: usize, seed: u64) -> Vec<Sample> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = x.iter().enumerate().map(|(k, v)| (k as f64 + 1.0) * v).sum::<f64>() + rng.random_range(-0.5..0.5);
                sample(&x, y)
            })
            .collect()
    }

    #[test]
    fn ridge_single_sample_example() {
        let r = ridge_fit(&[sample(&[1.0, 0.0], 1.0)], &ErmConfig::ridge(1.0)).unwrap();
        let t = r.theta_hat.to_vec(2);
        assert!((t[0] - 0.5).abs() < 1e-15 && t[1] == 0.0);
    }

    #[test]
    fn ridge_zero_targets() {
        let d = vec![sample(&[1.0, 2.0], 0.0), sample(&[0.5, -1.0], 0.0), sample(&[0.0, 1.0], 0.0)];
        for lambda in [0.0, 0.3] {
            assert!(ridge_fit(&d, &ErmConfig::ridge(lambda)).unwrap().theta_hat.to_vec(2).iter().all(|t| *t == 0.0));
        }
    }

    #[test]
    fn ols_normal_equations() {
        let d = random_regression(40, 3, 1);
        let r = ridge_fit(&d, &ErmConfig::ridge(0.0)).unwrap();
        assert!(r.diagnostic("grad_norm").unwrap() <= 1e-10);
    }

    #[test]
    fn ols_rank_deficient() {
        let d = vec![sample(&[1.0, 1.0], 1.0), sample(&[2.0, 2.0], 0.0)];
        assert!(matches!(ridge_fit(&d, &ErmConfig::ridge(0.0)), Err(Error::RankDeficient { .. })));
        assert!(ridge_fit(&d, &ErmConfig::ridge(0.1)).is_ok());
    }

    #[test]
    fn sherman_morrison_matches_refits() {
        for (lambda, gamma) in [(0.5, 0.0), (0.0, 0.0), (0.1, 0.05)] {
            let d = random_regression(25, 3, 2);
            let cfg = ErmConfig::ridge(lambda).with_gamma(gamma);
            let fast = ridge_loo_fits(&d, &cfg).unwrap();
            for (i, t) in fast.iter().enumerate() {
                let slow = ridge_fit(&without_index(&d, i), &cfg).unwrap().theta_hat.to_vec(3);
                assert!(distance(t, &slow) < 1e-10, "{t:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn gradient_descent_reproduces_ridge() {
        let d = random_regression(30, 3, 3);
        let cfg = ErmConfig::ridge(0.2).with_gamma(0.01);
        let closed = ridge_fit(&d, &cfg).unwrap().theta_hat.to_vec(3);
        // Same loss without the closed-form marker, so descent is used.
        let loss = FnLoss::new(3, LabelKind::Real, |z, t| 0.5 * (dot(&z.x, t) - target(z)).powi(2))
            .with_gradient(|z, t| {
                let r = dot(&z.x, t) - target(z);
                z.x.iter().map(|x| x * r).collect()
            });
        let gd = erm_fit_convex(&d, &loss, &cfg).unwrap();
        assert!(gd.flag("converged"));
        assert!(distance(&gd.theta_hat.to_vec(3), &closed) < 1e-6);
        let loo_gd = Erm { config: cfg }.calibrate_leave_one_out(&d, &loss).unwrap();
        let loo_closed = ridge_loo_fits(&d, &cfg).unwrap();
        for (a, b) in loo_gd.iter().zip(&loo_closed) {
            assert!(distance(&a.theta_hat.to_vec(3), b) < 1e-6);
        }
    }

    #[test]
    fn scalar_least_squares_is_the_mean() {
        let d: Vec<_> = [0.1, 0.7, 0.4, 1.3].into_iter().map(Sample::scalar).collect();
        let loss = FnLoss::scalar(|z, t| (t - z.x[0]).powi(2)).with_gradient(|z, t| vec![2.0 * (t[0] - z.x[0])]);
        let r = erm_fit_convex(&d, &loss, &ErmConfig::default()).unwrap();
        assert!((r.theta_hat.scalar_value() - 0.625).abs() < 1e-9);
        let no_grad = FnLoss::scalar(|z, t| (t - z.x[0]).powi(2));
        let cfg = ErmConfig { interval: Some(SearchInterval { lo: -2.0, hi: 2.0 }), ..ErmConfig::default() };
        let r = erm_fit_convex(&d, &no_grad, &cfg).unwrap();
        assert!((r.theta_hat.scalar_value() - 0.625).abs() < 1e-8);
    }

    #[test]
    fn gamma_shifts_components_down_on_diagonal_designs() {
        let d = vec![sample(&[1.0, 0.0], 1.0), sample(&[0.0, 1.0], 2.0), sample(&[1.0, 0.0], 0.5), sample(&[0.0, 2.0], 1.0)];
        let base = ridge_fit(&d, &ErmConfig::ridge(0.1)).unwrap().theta_hat.to_vec(2);
        let shifted = ridge_fit(&d, &ErmConfig::ridge(0.1).with_gamma(0.2)).unwrap().theta_hat.to_vec(2);
        assert!(base.iter().zip(&shifted).all(|(b, s)| s < b));
    }

    #[test]
    fn loss_beta_formula() {
        assert!((loss_stability_beta(1.0, 1.0, 199).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(loss_stability_beta(1.0, 2.0, 9).unwrap() * 2.0, loss_stability_beta(1.0, 1.0, 9).unwrap());
        assert!(matches!(loss_stability_beta(1.0, 0.0, 9), Err(Error::RequiresPositiveLambda)));
    }

    #[test]
    fn shift_certificates_hold() {
        let d = random_regression(30, 2, 4);
        let cfg = ErmConfig::ridge(0.5);
        for c in loss_shift_certificates(&d, &SquaredLoss::new(2), &cfg).unwrap() {
            assert!(c.holds(1e-9), "{c:?}");
        }
        let mu = min_eigen_ratio(&d).unwrap();
        for lambda in [0.0, 0.5] {
            for c in gradient_shift_certificates(&d, &SquaredLoss::new(2), &ErmConfig::ridge(lambda), mu).unwrap() {
                assert!(c.holds(1e-9), "{c:?}");
            }
        }
    }

    #[test]
    fn train_term_vanishes_for_ols() {
        let d = random_regression(30, 2, 5);
        let r = grad_stability_beta(&d, &SquaredLoss::new(2), &ErmConfig::ridge(0.0), 0.1, TestGradientEstimate::LeaveOneOut).unwrap();
        assert!(r.train_grad_norm_mean <= 1e-10);
        assert_eq!(r.beta_vec, vec![r.beta; 2]);
    }

    #[test]
    fn zero_residual_regression_has_zero_beta() {
        let d: Vec<_> = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]].iter().map(|x| sample(x, 0.0)).collect();
        let r = grad_stability_beta(&d, &SquaredLoss::new(2), &ErmConfig::ridge(0.0), 0.2, TestGradientEstimate::LeaveOneOut).unwrap();
        assert_eq!(r.beta, 0.0);
    }

    #[test]
    fn beta_matches_hand_formula_with_refit_oracle() {
        let d = vec![sample(&[1.0, 0.0], 1.0), sample(&[0.0, 1.0], 0.0), sample(&[1.0, 1.0], 1.0), sample(&[1.0, 0.0], 0.0)];
        let cfg = ErmConfig::ridge(0.25);
        let mu = 0.1;
        let r = grad_stability_beta(&d, &SquaredLoss::new(2), &cfg, mu, TestGradientEstimate::LeaveOneOut).unwrap();
        // Oracle: refit on each subset with a direct 2×2 solve.
        let solve = |s: &[Sample]| {
            let n = s.len() as f64;
            let (mut a, mut b, mut c, mut u, mut v) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for z in s {
                let (x0, x1, y) = (z.x[0], z.x[1], target(z));
                a += x0 * x0 / n;
                b += x0 * x1 / n;
                c += x1 * x1 / n;
                u += x0 * y / n;
                v += x1 * y / n;
            }
            let (a, c) = (a + 0.25, c + 0.25);
            let det = a * c - b * b;
            [(c * u - b * v) / det, (a * v - b * u) / det]
        };
        let grad = |z: &Sample, t: &[f64; 2]| {
            let r = z.x[0] * t[0] + z.x[1] * t[1] - target(z);
            [z.x[0] * r, z.x[1] * r]
        };
        let rho = |z: &Sample| z.x[0] * z.x[0] + z.x[1] * z.x[1];
        let full = solve(&d);
        let mut test = 0.0;
        let mut gbar = [0.0, 0.0];
        for (i, z) in d.iter().enumerate() {
            let ti = solve(&without_index(&d, i));
            let g = grad(z, &ti);
            test += rho(z) * (g[0] * g[0] + g[1] * g[1]).sqrt() / 4.0;
            let gf = grad(z, &full);
            gbar[0] += gf[0] / 4.0;
            gbar[1] += gf[1] / 4.0;
        }
        let rho_mean = d.iter().map(rho).sum::<f64>() / 4.0;
        let expected = (test + rho_mean * (gbar[0].hypot(gbar[1]))) / ((mu + 0.25) * 5.0);
        assert!((r.beta - expected).abs() < 1e-12, "{} vs {expected}", r.beta);
    }

    #[test]
    fn conservative_gamma_cases() {
        assert_eq!(conservative_gamma_from(0.0, 0.0, 0.0, 1.0, 0.0, 10, 0.0).unwrap(), 0.0);
        let g = conservative_gamma_from(2.0, 0.0, 5.0, 1.0, 0.0, 9, 0.0).unwrap();
        assert!((g - 0.2).abs() < 1e-15);
        // (μ+λ)(n+1) = 2 = 2·E[ρ].
        assert!(matches!(
            conservative_gamma_from(1.0, 1.0, 0.0, 0.2, 0.0, 9, 0.0),
            Err(Error::ConservativeShift { .. })
        ));
    }

    #[test]
    fn conservative_gamma_zeroes_the_bound() {
        let (test, rho, train, mu, lambda, n, inf) = (0.7, 1.5, 0.3, 0.2, 0.1, 40, 0.8);
        let gamma = conservative_gamma_from(test, rho, train, mu, lambda, n, inf).unwrap();
        let c = (mu + lambda) * (n as f64 + 1.0);
        let beta_gamma = (test + rho * (train + 2.0 * gamma)) / c;
        // β_γ + λ‖θ‖_∞ − γ vanishes at the chosen γ.
        assert!((beta_gamma + lambda * inf - gamma).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_and_one_step_modes() {
        let d = random_regression(60, 2, 6);
        let mu = min_eigen_ratio(&d).unwrap();
        let loss = SquaredLoss::new(2);
        let one = fit_conservative(&d, &loss, &ErmConfig::ridge(0.0), mu, GammaMode::OneStep).unwrap();
        let fp = fit_conservative(&d, &loss, &ErmConfig::ridge(0.0), mu, GammaMode::FixedPoint).unwrap();
        assert_eq!(one.rounds, 1);
        assert!(one.gamma > 0.0 && fp.gamma > 0.0);
        assert!(fp.rounds >= 1);
    }

    /// Eigenvalues of a symmetric 3×3 matrix from its characteristic cubic,
    /// by the trigonometric method.
    fn cubic_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return [q; 3];
        }
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn min_eigen_matches_cubic_oracle() {
        let mut rng = rng_from_seed(12);
        let mut checked = 0;
        while checked < 50 {
            let rows: Vec<[f64; 3]> = (0..5).map(|_| [0, 1, 2].map(|_| rng.random_range(0..2) as f64)).collect();
            let d: Vec<_> = rows.iter().map(|r| sample(r, 0.0)).collect();
            let mut a = [[0.0; 3]; 3];
            for r in &rows {
                for i in 0..3 {
                    for j in 0..3 {
                        a[i][j] += r[i] * r[j] / 5.0;
                    }
                }
            }
            let oracle = cubic_eigenvalues(a).into_iter().fold(f64::INFINITY, f64::min);
            let got = min_eigen_ratio(&d).unwrap();
            if oracle.abs() < 1e-9 {
                assert_eq!(got, 0.0);
            } else {
                assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
            }
            checked += 1;
        }
    }

    #[test]
    fn min_eigen_simple_designs() {
        let id: Vec<_> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().map(|x| sample(x, 0.0)).collect();
        assert!((min_eigen_ratio(&id).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let deficient = vec![sample(&[1.0, 1.0], 0.0), sample(&[2.0, 2.0], 0.0)];
        assert_eq!(min_eigen_ratio(&deficient).unwrap(), 0.0);
    }

    #[test]
    fn debias_in_sample_group_means_vanish() {
        let mut rng = rng_from_seed(7);
        let data: Vec<Sample> = (0..200)
            .map(|_| {
                let x: Vec<f64> = [0.5, 0.3, 0.6].iter().map(|&p| (rng.random::<f64>() < p) as u8 as f64).collect();
                let y = (rng.random::<f64>() < 0.3 + 0.2 * x[0]) as u8 as f64;
                sample(&x, y)
            })
            .collect();
        let f = vec![0.35; data.len()];
        let fit = debias_ols(&data, &f, 0.0).unwrap();
        for g in &fit.groups {
            assert!(g.residual_mean.abs() < 1e-12, "{g:?}");
            assert!(g.certifiable);
        }
    }

    #[test]
    fn debias_single_group_is_mean_residual() {
        let data: Vec<_> = [1.0, 0.0, 1.0, 1.0].iter().map(|&y| sample(&[1.0], y)).collect();
        let f = vec![0.5, 0.2, 0.1, 0.6];
        let fit = debias_ols(&data, &f, 0.0).unwrap();
        let mean_resid = (0.5 - 0.2 + 0.9 + 0.4) / 4.0;
        assert!((fit.theta[0] - mean_resid).abs() < 1e-15);
        assert!(fit.groups[0].residual_mean.abs() < 1e-15);
    }

    #[test]
    fn debias_flags_empty_groups() {
        let data: Vec<_> = [[1.0, 0.0], [1.0, 0.0]].iter().map(|x| sample(x, 1.0)).collect();
        let fit = debias_ols(&data, &[0.0, 0.5], 0.0).unwrap();
        assert!(!fit.groups[1].certifiable);
        assert_eq!(fit.theta[1], 0.0);
        assert!(fit.groups[0].certifiable);
    }

    #[test]
    fn grid_argmin_loo_matches_refits() {
        let mut rng = rng_from_seed(10);
        let d: Vec<_> = (0..20).map(|_| Sample::scalar(rng.random())).collect();
        let loss = FnLoss::scalar(|z, t| if (z.x[0] - t).abs() < 0.2 { 0.0 } else { 1.0 }).bounded();
        let g = GridArgmin::uniform(0.0, 1.0, 41);
        let fast = g.calibrate_leave_one_out(&d, &loss).unwrap();
        let slow = naive_leave_one_out(&g, &d, &loss).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert_eq!(a.theta_hat, b.theta_hat);
            assert_eq!(a.diagnostics, b.diagnostics);
        }
    }
}
