//! Synthetic populations whose population risks are known in closed form
//! or by enumeration.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crc::SmoothLossCert;
use crate::data::{Label, LabelKind, Sample};
use crate::error::Result;
use crate::loss::FnLoss;
use crate::risk::Population;
use crate::selective::SelectiveInstance;

/// `z ~ U(0, 1)` with the step loss `1{z > θ}`; `R(θ) = 1 − θ` on `[0, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MonotoneTask;

impl MonotoneTask {
    pub fn loss(&self) -> FnLoss {
        FnLoss::scalar(|z, t| if z.x[0] > t { 1.0 } else { 0.0 }).bounded().monotone()
    }

    pub fn population_risk(&self, theta: f64) -> f64 {
        1.0 - theta.clamp(0.0, 1.0)
    }
}

impl Population for MonotoneTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::scalar(rng.random())
    }
}

/// `z = (u, v)` with `u ~ U(0, 1)` and `v ~ U(lo, hi)`. For `θ < 1` the loss
/// is `max(1{u > θ}, 1{|θ − v| ≤ w})`, a miss plus a bump around `v`; at
/// `θ = 1` it is zero for every point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpTask {
    pub width: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for BumpTask {
    fn default() -> Self {
        BumpTask { width: 0.1, lo: 0.4, hi: 0.6 }
    }
}

impl BumpTask {
    pub fn loss(&self) -> FnLoss {
        let w = self.width;
        FnLoss::new(1, LabelKind::Real, move |z, t| {
            let t = t[0];
            if t >= 1.0 {
                return 0.0;
            }
            let miss = z.x[0] > t;
            let bump = (t - z.x[1]).abs() <= w;
            (miss || bump) as u8 as f64
        })
        .bounded()
    }

    /// `P(|θ − v| ≤ w)`.
    fn bump_probability(&self, theta: f64) -> f64 {
        let a = (theta - self.width).max(self.lo);
        let b = (theta + self.width).min(self.hi);
        ((b - a) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn population_risk(&self, theta: f64) -> f64 {
        if theta >= 1.0 {
            return 0.0;
        }
        let t = theta.clamp(0.0, 1.0);
        1.0 - t * (1.0 - self.bump_probability(theta))
    }
}

impl Population for BumpTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        let u: f64 = rng.random();
        let v = rng.random_range(self.lo..self.hi);
        Sample::new(vec![u, v], Label::Real(0.0))
    }
}

/// `z ~ U(−w, w)` with `ℓ(z; θ) = clamp(c + z − θ, 0, 1) + min(cap, 2·(θ − knee)₊)`.
///
/// The first term falls with slope one through the crossing; the second
/// makes the risk rise again for large θ, so the loss is not monotone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearTask {
    pub center: f64,
    pub half_width: f64,
    pub knee: f64,
    pub cap: f64,
}

impl Default for PiecewiseLinearTask {
    fn default() -> Self {
        PiecewiseLinearTask { center: 0.5, half_width: 0.05, knee: 0.8, cap: 0.5 }
    }
}

impl PiecewiseLinearTask {
    pub fn loss(&self) -> FnLoss {
        let PiecewiseLinearTask { center, knee, cap, .. } = *self;
        FnLoss::scalar(move |z, t| (center + z.x[0] - t).clamp(0.0, 1.0) + (2.0 * (t - knee).max(0.0)).min(cap)).bounded()
    }

    /// Regularity constants that hold on every realization when
    /// `2w + r < α < 1 − 2w − r`.
    pub fn certificate(&self) -> SmoothLossCert {
        SmoothLossCert { lipschitz: 2.0, slope: 1.0, radius: self.half_width }
    }

    /// Whether the certificate is valid for level `alpha`.
    pub fn supports_level(&self, alpha: f64) -> bool {
        let w = self.half_width;
        let r = self.certificate().radius;
        let root_hi = self.center + w - alpha;
        alpha > 2.0 * w + r && 1.0 - alpha - 2.0 * w > r && root_hi + r < self.knee
    }
}

impl Population for PiecewiseLinearTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::scalar(rng.random_range(-self.half_width..self.half_width))
    }
}

/// A loss equal to a Bernoulli(p) label whatever θ is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BernoulliTask {
    pub p: f64,
}

impl BernoulliTask {
    pub fn loss(&self) -> FnLoss {
        FnLoss::scalar(|z, _| z.x[0]).bounded()
    }
}

impl Population for BernoulliTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::scalar((rng.random::<f64>() < self.p) as u8 as f64)
    }
}

/// Confidences `p̂ ~ U(0, 1)` and errors `E ~ Bernoulli(slope·(1 − p̂))`.
/// The selective error above θ is `slope·(1 − θ)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectivePopulation {
    pub slope: f64,
}

impl Default for SelectivePopulation {
    fn default() -> Self {
        SelectivePopulation { slope: 0.8 }
    }
}

impl SelectivePopulation {
    pub fn selective_error(&self, theta: f64) -> f64 {
        self.slope * (1.0 - theta.clamp(0.0, 1.0)) / 2.0
    }

    pub fn prediction_rate(&self, theta: f64) -> f64 {
        1.0 - theta.clamp(0.0, 1.0)
    }

    /// `P(E = 1, p̂ > θ) − α·P(p̂ > θ) + α`.
    pub fn population_risk(&self, theta: f64, alpha: f64) -> f64 {
        let rate = self.prediction_rate(theta);
        rate * self.selective_error(theta) - alpha * rate + alpha
    }

    pub fn instance(&self, n: usize, alpha: f64, rng: &mut dyn RngCore) -> Result<SelectiveInstance> {
        let mut p = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n);
        for _ in 0..n {
            let s = self.draw(rng);
            p.push(s.x[0]);
            e.push(s.y.as_binary().unwrap_or(false));
        }
        SelectiveInstance::new(p, e, alpha)
    }
}

impl Population for SelectivePopulation {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        let p: f64 = rng.random();
        let e = rng.random::<f64>() < self.slope * (1.0 - p);
        Sample::new(vec![p], Label::Binary(e))
    }
}

/// `x ~ U[−1, 1]^d`, `y = xᵀθ* + U(−noise, noise)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressionTask {
    pub theta_star: Vec<f64>,
    pub noise: f64,
}

impl Default for LinearRegressionTask {
    fn default() -> Self {
        LinearRegressionTask { theta_star: vec![1.0, -0.5], noise: 0.5 }
    }
}

impl LinearRegressionTask {
    /// Bounds on `‖x‖` and `|y|` over the support.
    pub fn support_bounds(&self) -> (f64, f64) {
        let d = self.theta_star.len() as f64;
        (d.sqrt(), self.theta_star.iter().map(|t| t.abs()).sum::<f64>() + self.noise)
    }
}

impl Population for LinearRegressionTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        let x: Vec<f64> = self.theta_star.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
        let y = x.iter().zip(&self.theta_star).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-self.noise..=self.noise);
        Sample::new(x, Label::Real(y))
    }
}

/// A finite joint law: atom `k` is `(x_k, y_k)` with probability `p_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteRegressionTask {
    pub atoms: Vec<(Vec<f64>, f64, f64)>,
}

impl Default for DiscreteRegressionTask {
    /// `x = (1, b₁, b₂)` with fair coins, `y = 0.5 + 0.3b₁ − 0.2b₂ + 0.4b₁b₂ ± 0.5`.
    fn default() -> Self {
        let mut atoms = Vec::new();
        for b1 in [0.0, 1.0] {
            for b2 in [0.0, 1.0] {
                let mean = 0.5 + 0.3 * b1 - 0.2 * b2 + 0.4 * b1 * b2;
                for eps in [-0.5, 0.5] {
                    atoms.push((vec![1.0, b1, b2], mean + eps, 0.125));
                }
            }
        }
        DiscreteRegressionTask { atoms }
    }
}

impl DiscreteRegressionTask {
    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.0.len())
    }

    /// `E[f(Z)]` by enumeration.
    pub fn expect<F: Fn(&Sample) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|(x, y, p)| p * f(&Sample::new(x.clone(), Label::Real(*y)))).sum()
    }

    /// `E[∇ℓ(Z; θ)]` for the squared loss.
    pub fn expected_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (x, y, p) in &self.atoms {
            let r = x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - y;
            for k in 0..g.len() {
                g[k] += p * x[k] * r;
            }
        }
        g
    }
}

impl Population for DiscreteRegressionTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (x, y, p) in &self.atoms {
            acc += p;
            if u < acc {
                return Sample::new(x.clone(), Label::Real(*y));
            }
        }
        let (x, y, _) = self.atoms.last().expect("nonempty atoms");
        Sample::new(x.clone(), Label::Real(*y))
    }
}

/// Group-indicator population in the style of a recidivism audit: a race
/// category (three named groups plus an unlisted one) crossed with a sex
/// category (two named plus unrecorded). The five named groups overlap and
/// are not collinear. A base predictor `f` is biased per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupDebiasTask {
    pub race_probs: [f64; 4],
    pub sex_probs: [f64; 3],
    /// Outcome probability per (race, sex) cell.
    pub outcome: [[f64; 3]; 4],
    /// Mean base prediction per cell.
    pub prediction: [[f64; 3]; 4],
    /// Half-width of the uniform jitter on `f` within a cell.
    pub jitter: f64,
}

pub const GROUP_NAMES: [&str; 5] = ["black", "white", "hispanic", "male", "female"];

impl Default for GroupDebiasTask {
    fn default() -> Self {
        GroupDebiasTask {
            race_probs: [0.45, 0.35, 0.1, 0.1],
            sex_probs: [0.7, 0.25, 0.05],
            outcome: [[0.55, 0.4, 0.45], [0.4, 0.3, 0.35], [0.45, 0.3, 0.4], [0.35, 0.25, 0.3]],
            prediction: [[0.62, 0.5, 0.55], [0.33, 0.22, 0.3], [0.4, 0.3, 0.35], [0.4, 0.3, 0.3]],
            jitter: 0.1,
        }
    }
}

impl GroupDebiasTask {
    fn indicators(race: usize, sex: usize) -> Vec<f64> {
        let mut x = vec![0.0; 5];
        if race < 3 {
            x[race] = 1.0;
        }
        if sex < 2 {
            x[3 + sex] = 1.0;
        }
        x
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..4).flat_map(move |r| (0..3).map(move |s| (r, s, self.race_probs[r] * self.sex_probs[s])))
    }

    /// One draw: group indicators with a real label, and the base prediction.
    pub fn draw_with_prediction(&self, rng: &mut dyn RngCore) -> (Sample, f64) {
        let pick = |probs: &[f64], u: f64| {
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            probs.len() - 1
        };
        let race = pick(&self.race_probs, rng.random());
        let sex = pick(&self.sex_probs, rng.random());
        let y = (rng.random::<f64>() < self.outcome[race][sex]) as u8 as f64;
        let f = self.prediction[race][sex] + rng.random_range(-self.jitter..=self.jitter);
        (Sample::new(Self::indicators(race, sex), Label::Real(y)), f)
    }

    pub fn draw_batch(&self, n: usize, rng: &mut dyn RngCore) -> (Vec<Sample>, Vec<f64>) {
        (0..n).map(|_| self.draw_with_prediction(rng)).unzip()
    }

    /// `P(X_j = 1)` for each named group.
    pub fn group_probabilities(&self) -> Vec<f64> {
        (0..5)
            .map(|j| self.cells().filter(|&(r, s, _)| Self::indicators(r, s)[j] == 1.0).map(|c| c.2).sum())
            .collect()
    }

    /// `E[f + Xᵀθ − Y | X_j = 1]` for each group, by enumeration.
    pub fn group_bias(&self, theta: &[f64]) -> Vec<f64> {
        (0..5)
            .map(|j| {
                let (mut num, mut den) = (0.0, 0.0);
                for (r, s, p) in self.cells() {
                    let x = Self::indicators(r, s);
                    if x[j] == 1.0 {
                        let adj: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                        num += p * (self.prediction[r][s] + adj - self.outcome[r][s]);
                        den += p;
                    }
                }
                num / den
            })
            .collect()
    }

    /// Smallest eigenvalue of `E[XXᵀ]`.
    pub fn population_min_eigenvalue(&self) -> f64 {
        let mut m = nalgebra::DMatrix::<f64>::zeros(5, 5);
        for (r, s, p) in self.cells() {
            let x = nalgebra::DVector::from_vec(Self::indicators(r, s));
            m += &x * x.transpose() * p;
        }
        nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::Loss;
    use crate::risk::{draw_iid, empirical_risk, rng_from_seed};

    #[test]
    fn bump_risk_matches_simulation() {
        let task = BumpTask::default();
        let data = draw_iid(&task, 200_000, &mut rng_from_seed(1));
        for t in [0.2, 0.45, 0.5, 0.65, 0.8, 0.95, 1.0] {
            let emp = empirical_risk(&data, &task.loss(), &[t]).unwrap();
            assert!((emp - task.population_risk(t)).abs() < 5e-3, "θ={t}: {emp}");
        }
        // Not monotone: the bump raises the risk mid-range.
        assert!(task.population_risk(0.5) > task.population_risk(0.3));
    }

    #[test]
    fn piecewise_linear_is_not_monotone_and_supports_default_level() {
        let task = PiecewiseLinearTask::default();
        let l = task.loss();
        let z = Sample::scalar(0.0);
        assert!(l.evaluate(&z, &[0.9]) > l.evaluate(&z, &[0.7]));
        assert!(task.supports_level(0.2));
        assert!(!task.supports_level(0.05));
    }

    #[test]
    fn selective_population_error_matches_simulation() {
        let pop = SelectivePopulation::default();
        let data = draw_iid(&pop, 200_000, &mut rng_from_seed(2));
        let theta = 0.4;
        let above: Vec<_> = data.iter().filter(|z| z.x[0] > theta).collect();
        let err = above.iter().filter(|z| z.y.as_binary().unwrap()).count() as f64 / above.len() as f64;
        assert!((err - pop.selective_error(theta)).abs() < 5e-3);
    }

    #[test]
    fn discrete_task_probabilities_sum_to_one() {
        let task = DiscreteRegressionTask::default();
        assert!((task.expect(|_| 1.0) - 1.0).abs() < 1e-15);
        let draws = draw_iid(&task, 1000, &mut rng_from_seed(3));
        assert!(draws.iter().all(|z| z.x[0] == 1.0));
    }

    #[test]
    fn debias_population_is_identifiable() {
        let task = GroupDebiasTask::default();
        assert!(task.population_min_eigenvalue() > 0.01);
        let p = task.group_probabilities();
        assert!((p[0] - 0.45).abs() < 1e-12 && (p[3] - 0.7).abs() < 1e-12);
        // The base predictor is biased for at least one group.
        assert!(task.group_bias(&[0.0; 5]).iter().any(|b| b.abs() > 0.02));
    }
}
