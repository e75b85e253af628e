//! Scalar-parameter calibrators: conformal risk control for monotone losses,
//! the full-data leftmost root, the discretized algorithm with its
//! Lambert-W risk bound, and the smooth-loss stability certificate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationResult, Calibrator, ThetaHat};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::lambert::{lambert_w_m1, BRANCH_POINT};
use crate::loss::Loss;
use crate::risk::loss_sum;

/// Width at which bisection stops.
pub const ROOT_TOLERANCE: f64 = 1e-9;

/// Coarse scan resolution used to locate the leftmost sign change of a
/// non-monotone risk.
pub const DEFAULT_SCAN_POINTS: usize = 1024;

/// Near-boundary predicate values are recomputed by exact summation on the
/// cached leave-one-out path.
const CACHE_RECHECK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchInterval {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SearchInterval {
    fn default() -> Self {
        SearchInterval { lo: 0.0, hi: 1.0 }
    }
}

impl SearchInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("search interval [{lo}, {hi}] is empty")));
        }
        Ok(SearchInterval { lo, hi })
    }
}

/// The grid `Θ_m = {0, 1/m, …, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
}

impl GridSpec {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid resolution m must be at least 1".into()));
        }
        Ok(GridSpec { m })
    }

    pub fn point(&self, j: usize) -> f64 {
        if j == self.m {
            1.0
        } else {
            j as f64 / self.m as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.m).map(|j| self.point(j)).collect()
    }
}

/// How the constraint on the summed loss is phrased.
#[derive(Clone, Copy, Debug)]
enum Level {
    /// `Σℓ + 1 ≤ α(n+1)`, the conformal inflation.
    Inflated(f64),
    /// `Σℓ ≤ α·n`.
    Plain(f64),
}

impl Level {
    fn holds(self, sum: f64, count: usize) -> bool {
        match self {
            Level::Inflated(a) => sum + 1.0 <= a * (count as f64 + 1.0),
            Level::Plain(a) => sum <= a * count as f64,
        }
    }

    /// Distance of `sum` from the boundary, used to decide when a cached
    /// value needs an exact recount.
    fn margin(self, sum: f64, count: usize) -> f64 {
        match self {
            Level::Inflated(a) => a * (count as f64 + 1.0) - (sum + 1.0),
            Level::Plain(a) => a * count as f64 - sum,
        }
    }

    fn alpha(self) -> f64 {
        match self {
            Level::Inflated(a) | Level::Plain(a) => a,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Strategy {
    Bisect(SearchInterval),
    ScanThenBisect(SearchInterval, usize),
    Grid(GridSpec),
}

impl Strategy {
    fn bounds(self) -> (f64, f64) {
        match self {
            Strategy::Bisect(iv) | Strategy::ScanThenBisect(iv, _) => (iv.lo, iv.hi),
            Strategy::Grid(_) => (0.0, 1.0),
        }
    }
}

fn bisect(mut lo: f64, mut hi: f64, pred: &mut dyn FnMut(f64) -> bool) -> f64 {
    while hi - lo > ROOT_TOLERANCE {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn scan_point(iv: SearchInterval, points: usize, k: usize) -> f64 {
    if k + 1 == points {
        iv.hi
    } else {
        iv.lo + (iv.hi - iv.lo) * (k as f64 / (points - 1) as f64)
    }
}

/// Leftmost point satisfying `pred`, or `None` when nothing does.
fn locate(strategy: Strategy, pred: &mut dyn FnMut(f64) -> bool) -> Option<f64> {
    match strategy {
        Strategy::Bisect(iv) => {
            if pred(iv.lo) {
                return Some(iv.lo);
            }
            if !pred(iv.hi) {
                return None;
            }
            Some(bisect(iv.lo, iv.hi, pred))
        }
        Strategy::ScanThenBisect(iv, points) => {
            let points = points.max(2);
            let k = (0..points).find(|&k| pred(scan_point(iv, points, k)))?;
            if k == 0 {
                return Some(iv.lo);
            }
            Some(bisect(scan_point(iv, points, k - 1), scan_point(iv, points, k), pred))
        }
        Strategy::Grid(g) => (0..=g.m).map(|j| g.point(j)).find(|&t| pred(t)),
    }
}

fn check_scalar(loss: &dyn Loss) -> Result<()> {
    if loss.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: loss.dim() });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("α must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn solve(data: &[Sample], loss: &dyn Loss, level: Level, strategy: Strategy) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let mut pred = |t: f64| level.holds(loss_sum(data, loss, &[t]), n);
    locate(strategy, &mut pred).ok_or_else(|| {
        let (lo, hi) = strategy.bounds();
        Error::InfeasibleLevel { lo, hi, alpha: level.alpha() }
    })
}

/// Memoized full-data sums shared by all leave-one-out solves on one dataset.
struct SumCache<'a> {
    data: &'a [Sample],
    loss: &'a dyn Loss,
    sums: HashMap<u64, f64>,
}

impl<'a> SumCache<'a> {
    fn new(data: &'a [Sample], loss: &'a dyn Loss) -> Self {
        SumCache { data, loss, sums: HashMap::new() }
    }

    fn full_sum(&mut self, t: f64) -> f64 {
        let (data, loss) = (self.data, self.loss);
        *self.sums.entry(t.to_bits()).or_insert_with(|| loss_sum(data, loss, &[t]))
    }

    /// `level` evaluated on `D_{-i}` at `t`; agrees with a direct recount.
    fn loo_holds(&mut self, t: f64, i: usize, level: Level) -> bool {
        let count = self.data.len() - 1;
        let approx = self.full_sum(t) - self.loss.evaluate(&self.data[i], &[t]);
        let margin = level.margin(approx, count);
        if margin.abs() > CACHE_RECHECK * (1.0 + approx.abs()) {
            return margin >= 0.0;
        }
        let mut exact = 0.0;
        for (j, z) in self.data.iter().enumerate() {
            if j != i {
                exact += self.loss.evaluate(z, &[t]);
            }
        }
        level.holds(exact, count)
    }
}

fn solve_leave_one_out(
    data: &[Sample],
    loss: &dyn Loss,
    level: Level,
    strategy: Strategy,
) -> Result<Vec<f64>> {
    if data.len() < 2 {
        return Err(Error::TooSmall { need: 2, got: data.len() });
    }
    let mut cache = SumCache::new(data, loss);
    (0..data.len())
        .map(|i| {
            let mut pred = |t: f64| cache.loo_holds(t, i, level);
            locate(strategy, &mut pred).ok_or_else(|| {
                let (lo, hi) = strategy.bounds();
                Error::LooFailure {
                    index: i,
                    source: Box::new(Error::InfeasibleLevel { lo, hi, alpha: level.alpha() }),
                }
            })
        })
        .collect()
}

fn scalar_result(data: &[Sample], loss: &dyn Loss, theta: f64, algo: String, alpha: f64) -> CalibrationResult {
    let risk = loss_sum(data, loss, &[theta]) / data.len() as f64;
    CalibrationResult::new(ThetaHat::scalar(theta), algo, alpha)
        .with_diagnostic("empirical_risk", risk)
        .with_diagnostic("n", data.len() as f64)
}

/// Conformal risk control for nonincreasing bounded losses:
/// `θ̂ = inf{θ : (Σℓ(Z_i; θ) + 1)/(n+1) ≤ α}`.
#[derive(Clone, Copy, Debug)]
pub struct CrcMonotonic {
    pub alpha: f64,
    pub interval: SearchInterval,
}

impl CrcMonotonic {
    pub fn new(alpha: f64) -> Self {
        CrcMonotonic { alpha, interval: SearchInterval::default() }
    }

    fn validate(&self, loss: &dyn Loss) -> Result<()> {
        check_scalar(loss)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("α must lie in (0, 1], got {}", self.alpha)));
        }
        if !loss.monotone_nonincreasing() || !loss.bounded_01() {
            return Err(Error::InvalidArgument(
                "conformal risk control needs a bounded, nonincreasing loss".into(),
            ));
        }
        Ok(())
    }
}

impl Calibrator for CrcMonotonic {
    fn id(&self) -> String {
        "crc".into()
    }

    fn calibrate(&self, data: &[Sample], loss: &dyn Loss) -> Result<CalibrationResult> {
        self.validate(loss)?;
        let t = solve(data, loss, Level::Inflated(self.alpha), Strategy::Bisect(self.interval))?;
        Ok(scalar_result(data, loss, t, self.id(), self.alpha))
    }

    fn calibrate_leave_one_out(&self, data: &[Sample], loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        self.validate(loss)?;
        let thetas = solve_leave_one_out(data, loss, Level::Inflated(self.alpha), Strategy::Bisect(self.interval))?;
        Ok(loo_results(data, loss, thetas, self.id(), self.alpha))
    }
}

fn loo_results(data: &[Sample], loss: &dyn Loss, thetas: Vec<f64>, id: String, alpha: f64) -> Vec<CalibrationResult> {
    thetas
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut sum = 0.0;
            for (j, z) in data.iter().enumerate() {
                if j != i {
                    sum += loss.evaluate(z, &[t]);
                }
            }
            CalibrationResult::new(ThetaHat::scalar(t), id.clone(), alpha)
                .with_diagnostic("empirical_risk", sum / (data.len() - 1) as f64)
                .with_diagnostic("n", (data.len() - 1) as f64)
        })
        .collect()
}

/// Leftmost root of the plain empirical risk, `inf{θ : R̂_D(θ) ≤ α}`.
///
/// Monotone losses are solved by bisection alone. Otherwise a coarse scan
/// finds the first feasible grid point and bisection refines the crossing
/// just before it, so `scan_points` sets the resolution at which an
/// oscillating risk is resolved.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceRoot {
    pub alpha: f64,
    pub interval: SearchInterval,
    pub scan_points: usize,
}

impl ReferenceRoot {
    pub fn new(alpha: f64) -> Self {
        ReferenceRoot { alpha, interval: SearchInterval::default(), scan_points: DEFAULT_SCAN_POINTS }
    }

    pub fn with_interval(mut self, interval: SearchInterval) -> Self {
        self.interval = interval;
        self
    }

    pub fn with_scan_points(mut self, scan_points: usize) -> Self {
        self.scan_points = scan_points;
        self
    }

    fn strategy(&self, loss: &dyn Loss) -> Strategy {
        if loss.monotone_nonincreasing() {
            Strategy::Bisect(self.interval)
        } else {
            Strategy::ScanThenBisect(self.interval, self.scan_points)
        }
    }
}

impl Calibrator for ReferenceRoot {
    fn id(&self) -> String {
        "leftmost-root".into()
    }

    fn calibrate(&self, data: &[Sample], loss: &dyn Loss) -> Result<CalibrationResult> {
        check_scalar(loss)?;
        check_alpha(self.alpha)?;
        let t = solve(data, loss, Level::Plain(self.alpha), self.strategy(loss))?;
        Ok(scalar_result(data, loss, t, self.id(), self.alpha))
    }

    fn calibrate_leave_one_out(&self, data: &[Sample], loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        check_scalar(loss)?;
        check_alpha(self.alpha)?;
        let thetas = solve_leave_one_out(data, loss, Level::Plain(self.alpha), self.strategy(loss))?;
        Ok(loo_results(data, loss, thetas, self.id(), self.alpha))
    }
}

/// Smallest grid point of `Θ_m` with empirical risk at most α. The loss
/// must vanish at θ = 1 for every sample.
#[derive(Clone, Copy, Debug)]
pub struct DiscretizedRoot {
    pub alpha: f64,
    pub grid: GridSpec,
}

impl DiscretizedRoot {
    pub fn new(alpha: f64, m: usize) -> Result<Self> {
        Ok(DiscretizedRoot { alpha, grid: GridSpec::new(m)? })
    }

    fn validate(&self, data: &[Sample], loss: &dyn Loss) -> Result<()> {
        check_scalar(loss)?;
        check_alpha(self.alpha)?;
        if !loss.bounded_01() {
            return Err(Error::InvalidArgument("the discretized algorithm needs a loss in [0, 1]".into()));
        }
        for (index, z) in data.iter().enumerate() {
            let value = loss.evaluate(z, &[1.0]);
            if value != 0.0 {
                return Err(Error::NoSafeSolution { index, value });
            }
        }
        Ok(())
    }
}

impl Calibrator for DiscretizedRoot {
    fn id(&self) -> String {
        format!("discretized-m{}", self.grid.m)
    }

    fn calibrate(&self, data: &[Sample], loss: &dyn Loss) -> Result<CalibrationResult> {
        self.validate(data, loss)?;
        let t = solve(data, loss, Level::Plain(self.alpha), Strategy::Grid(self.grid))?;
        Ok(scalar_result(data, loss, t, self.id(), self.alpha))
    }

    fn calibrate_leave_one_out(&self, data: &[Sample], loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        self.validate(data, loss)?;
        let thetas = solve_leave_one_out(data, loss, Level::Plain(self.alpha), Strategy::Grid(self.grid))?;
        Ok(loo_results(data, loss, thetas, self.id(), self.alpha))
    }
}

/// The minimized slack of the discretized algorithm and the quantities it
/// is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneralRiskBound {
    /// `min_ε ε + (m+1)·exp(−2nε²)`.
    pub slack: f64,
    pub eps_star: f64,
    /// `W₋₁(−1/(4n(m+1)²))`.
    pub lambert_w: f64,
}

impl GeneralRiskBound {
    /// `1 − 4nε(m+1)exp(−2nε²)` at ε*; zero at the optimum.
    pub fn stationarity_residual(&self, n: usize, m: usize) -> f64 {
        let n = n as f64;
        let e = self.eps_star;
        1.0 - 4.0 * n * e * (m as f64 + 1.0) * (-2.0 * n * e * e).exp()
    }
}

/// Additive slack over α in the risk bound of the discretized algorithm for
/// i.i.d. calibration data of size `n` on the grid `Θ_m`.
pub fn general_risk_bound(n: usize, m: usize) -> Result<GeneralRiskBound> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    let nf = n as f64;
    let m1 = m as f64 + 1.0;
    let arg = -1.0 / (4.0 * nf * m1 * m1);
    if arg < BRANCH_POINT {
        return Err(Error::Domain("n,m too small".into()));
    }
    let w = lambert_w_m1(arg)?;
    let eps_star = (-w / (4.0 * nf)).sqrt();
    let slack = eps_star + m1 * (-2.0 * nf * eps_star * eps_star).exp();
    Ok(GeneralRiskBound { slack, eps_star, lambert_w: w })
}

/// Regularity constants of a loss that crosses the level α transversally.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothLossCert {
    /// Lipschitz constant of ℓ in θ.
    pub lipschitz: f64,
    /// Minimum downward slope of the risk near its crossing.
    pub slope: f64,
    /// Radius around the crossing on which `slope` holds.
    pub radius: f64,
}

impl SmoothLossCert {
    pub fn check_crossing(&self, n: usize) -> Result<()> {
        if !(self.lipschitz >= 0.0 && self.slope > 0.0 && self.radius > 0.0) {
            return Err(Error::InvalidArgument("need L ≥ 0, slope > 0 and r > 0".into()));
        }
        let lhs = 1.0 / (n as f64 + 1.0);
        let rhs = self.slope * self.radius;
        if lhs < rhs {
            Ok(())
        } else {
            Err(Error::CrossingCondition { lhs, rhs })
        }
    }

    /// Largest leave-one-out movement of the root, `1/(slope·(n+1))`.
    pub fn root_shift(&self, n: usize) -> f64 {
        1.0 / (self.slope * (n as f64 + 1.0))
    }
}

/// `β = L/(slope·(n+1))`, the stability of the leftmost root for smooth
/// losses.
pub fn smooth_stability_bound(cert: &SmoothLossCert, n: usize) -> Result<f64> {
    cert.check_crossing(n)?;
    Ok(cert.lipschitz / (cert.slope * (n as f64 + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::naive_leave_one_out;
    use crate::loss::FnLoss;
    use crate::risk::rng_from_seed;
    use rand::Rng;

    fn step() -> FnLoss {
        FnLoss::scalar(|z, t| if z.x[0] > t { 1.0 } else { 0.0 }).bounded().monotone()
    }

    fn scalars(v: &[f64]) -> Vec<Sample> {
        v.iter().copied().map(Sample::scalar).collect()
    }

    #[test]
    fn crc_level_set_examples() {
        let d = scalars(&[0.1, 0.5, 0.9]);
        let t = CrcMonotonic::new(0.5).calibrate(&d, &step()).unwrap().theta_hat.scalar_value();
        assert!((t - 0.5).abs() <= ROOT_TOLERANCE && t >= 0.5);
        let t = CrcMonotonic::new(0.25).calibrate(&d, &step()).unwrap().theta_hat.scalar_value();
        assert!((t - 0.9).abs() <= ROOT_TOLERANCE && t >= 0.9);
    }

    #[test]
    fn zero_loss_returns_lower_end() {
        let zero = FnLoss::scalar(|_, _| 0.0).bounded().monotone();
        let d = scalars(&[0.3, 0.6]);
        let r = CrcMonotonic::new(1.0).calibrate(&d, &zero).unwrap();
        assert_eq!(r.theta_hat.scalar_value(), 0.0);
        let r = ReferenceRoot::new(0.1).calibrate(&d, &zero).unwrap();
        assert_eq!(r.theta_hat.scalar_value(), 0.0);
    }

    #[test]
    fn crc_infeasible_is_an_error() {
        let one = FnLoss::scalar(|_, _| 1.0).bounded().monotone();
        let err = CrcMonotonic::new(0.5).calibrate(&scalars(&[0.2]), &one);
        assert!(matches!(err, Err(Error::InfeasibleLevel { .. })));
    }

    #[test]
    fn reference_root_example() {
        let d = scalars(&[0.1, 0.5, 0.9]);
        let t = ReferenceRoot::new(0.5).calibrate(&d, &step()).unwrap().theta_hat.scalar_value();
        assert!((t - 0.5).abs() <= ROOT_TOLERANCE);
    }

    #[test]
    fn reference_root_matches_dense_grid_on_unimodal_loss() {
        // Risk falls into a dip and rises again; the leftmost crossing sits
        // on the falling branch.
        let loss = FnLoss::scalar(|z, t| {
            let c = z.x[0];
            (1.0 - 0.9 * (-(t - c).powi(2) / 0.02).exp()).clamp(0.0, 1.0)
        })
        .bounded();
        let mut rng = rng_from_seed(11);
        let d: Vec<_> = (0..40).map(|_| Sample::scalar(0.4 + 0.2 * rng.random::<f64>())).collect();
        let alpha = 0.3;
        let t = ReferenceRoot::new(alpha).calibrate(&d, &loss).unwrap().theta_hat.scalar_value();
        let risk = |t: f64| loss_sum(&d, &loss, &[t]) / d.len() as f64;
        let steps = 1_000_000;
        let oracle = (0..=steps).map(|k| k as f64 / steps as f64).find(|&t| risk(t) <= alpha).unwrap();
        // The grid answer is the first feasible grid point, within one step
        // above the true crossing.
        assert!((t - oracle).abs() <= 1e-6 + ROOT_TOLERANCE, "{t} vs {oracle}");
        assert!(t > 0.0);
    }

    #[test]
    fn discretized_deterministic_loss() {
        let loss = FnLoss::scalar(|_, t| 1.0 - t).bounded();
        let d = scalars(&[0.0; 3]);
        let r = DiscretizedRoot::new(0.4, 10).unwrap().calibrate(&d, &loss).unwrap();
        assert_eq!(r.theta_hat.scalar_value(), 0.6);
        let r = DiscretizedRoot::new(0.0, 10).unwrap().calibrate(&d, &loss).unwrap();
        assert_eq!(r.theta_hat.scalar_value(), 1.0);
    }

    #[test]
    fn discretized_detects_missing_safe_point() {
        let loss = FnLoss::scalar(|_, _| 0.5).bounded();
        let err = DiscretizedRoot::new(0.5, 4).unwrap().calibrate(&scalars(&[0.1]), &loss);
        assert!(matches!(err, Err(Error::NoSafeSolution { index: 0, .. })));
    }

    #[test]
    fn discretized_matches_exhaustive_scan_on_random_tables() {
        let mut rng = rng_from_seed(5);
        for trial in 0..200 {
            let m = 5;
            let n = 8;
            // Row i holds ℓ(z_i; j/m); the last column is the safe point.
            let table: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..=m).map(|j| if j == m { 0.0 } else { rng.random::<f64>() }).collect())
                .collect();
            let table = std::sync::Arc::new(table);
            let tab = table.clone();
            let loss = FnLoss::scalar(move |z, t| tab[z.x[0] as usize][(t * m as f64).round() as usize]).bounded();
            let d: Vec<_> = (0..n).map(|i| Sample::scalar(i as f64)).collect();
            let alpha = 0.1 + 0.1 * (trial % 5) as f64;
            let got = DiscretizedRoot::new(alpha, m).unwrap().calibrate(&d, &loss).unwrap();
            let oracle = (0..=m)
                .find(|&j| {
                    let mut s = 0.0;
                    for row in table.iter() {
                        s += row[j];
                    }
                    s / n as f64 <= alpha
                })
                .unwrap();
            assert_eq!(got.theta_hat.scalar_value(), oracle as f64 / m as f64);
        }
    }

    #[test]
    fn cached_loo_matches_refits() {
        let mut rng = rng_from_seed(9);
        let d: Vec<_> = (0..30).map(|_| Sample::scalar(rng.random())).collect();
        let wavy = FnLoss::scalar(|z, t| if z.x[0] > t { 0.6 + 0.4 * (8.0 * t).cos() } else { 0.0 }).bounded();
        let a = ReferenceRoot::new(0.3).with_scan_points(64);
        let fast = a.calibrate_leave_one_out(&d, &wavy).unwrap();
        let slow = naive_leave_one_out(&a, &d, &wavy).unwrap();
        assert_eq!(fast, slow);
        let c = CrcMonotonic::new(0.2);
        assert_eq!(c.calibrate_leave_one_out(&d, &step()).unwrap(), naive_leave_one_out(&c, &d, &step()).unwrap());
        let g = DiscretizedRoot::new(0.3, 20).unwrap();
        let safe = FnLoss::scalar(|z, t| if z.x[0] > t { 1.0 - t } else { 0.0 }).bounded();
        assert_eq!(g.calibrate_leave_one_out(&d, &safe).unwrap(), naive_leave_one_out(&g, &d, &safe).unwrap());
    }

    #[test]
    fn crc_dominates_reference_root() {
        let mut rng = rng_from_seed(1);
        for _ in 0..200 {
            let n = rng.random_range(2..25);
            let d: Vec<_> = (0..n).map(|_| Sample::scalar(rng.random())).collect();
            let alpha = rng.random_range(0.15..0.9);
            let reference = ReferenceRoot::new(alpha).calibrate(&d, &step()).unwrap().theta_hat.scalar_value();
            let Ok(loo) = CrcMonotonic::new(alpha).calibrate_leave_one_out(&d, &step()) else {
                continue;
            };
            for r in loo {
                assert!(r.theta_hat.scalar_value() >= reference);
            }
        }
    }

    #[test]
    fn bound_matches_dense_epsilon_grid() {
        let b = general_risk_bound(500, 100).unwrap();
        // Oracle value, frozen from a high-precision evaluation.
        assert!((b.slack - 0.104_566_198_818_362_57).abs() < 1e-12, "{}", b.slack);
        let f = |e: f64| e + 101.0 * (-1000.0 * e * e).exp();
        let dense = (1..2_000_000).map(|k| f(k as f64 * 1e-7)).fold(f64::INFINITY, f64::min);
        assert!(b.slack <= dense + 1e-10);
        assert!(b.slack >= dense - 1e-10);
        assert!(b.stationarity_residual(500, 100).abs() <= 1e-8);
    }

    #[test]
    fn bound_closed_form_agrees() {
        for &(n, m) in &[(10, 1), (200, 20), (10_000, 50)] {
            let b = general_risk_bound(n, m).unwrap();
            let w = b.lambert_w;
            let closed = ((-w).sqrt() + (-1.0 / w).sqrt()) / (2.0 * (n as f64).sqrt());
            assert!((closed - b.slack).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_decreases_in_n() {
        let mut prev = f64::INFINITY;
        for n in [100, 1_000, 10_000, 100_000, 1_000_000] {
            let s = general_risk_bound(n, 100).unwrap().slack;
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn smooth_bound_formula() {
        let c = SmoothLossCert { lipschitz: 1.0, slope: 1.0, radius: 0.5 };
        assert!((smooth_stability_bound(&c, 99).unwrap() - 0.01).abs() < 1e-15);
        let c = SmoothLossCert { lipschitz: 2.0, slope: 0.5, radius: 1.0 };
        assert!((smooth_stability_bound(&c, 999).unwrap() - 0.004).abs() < 1e-15);
        let c = SmoothLossCert { lipschitz: 1.0, slope: 1.0, radius: 0.001 };
        assert!(matches!(smooth_stability_bound(&c, 99), Err(Error::CrossingCondition { .. })));
    }
}
