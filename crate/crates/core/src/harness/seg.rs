//! Segmentation losses on per-pixel score fields, and a synthetic generator.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabelKind, Sample};
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::risk::Population;

fn check_shapes(y: &[bool], scores: &[f64]) -> Result<()> {
    if y.len() != scores.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: scores.len() });
    }
    Ok(())
}

fn counts(y: &[bool], scores: &[f64], theta: f64) -> (usize, usize, usize) {
    let (mut pred, mut hit, mut truth) = (0, 0, 0);
    for (&t, &s) in y.iter().zip(scores) {
        let p = s >= theta;
        pred += p as usize;
        truth += t as usize;
        hit += (p && t) as usize;
    }
    (pred, hit, truth)
}

/// `1 − |y ⊙ ŷ|/|ŷ|` with `ŷ = 1{scores ≥ θ}`; zero when nothing is predicted.
pub fn fdr_loss(y: &[bool], scores: &[f64], theta: f64) -> Result<f64> {
    check_shapes(y, scores)?;
    let (pred, hit, _) = counts(y, scores, theta);
    Ok(if pred == 0 { 0.0 } else { 1.0 - hit as f64 / pred as f64 })
}

/// `1 − |y ⊙ ŷ|/|max(y, ŷ)|`; zero when both masks are empty.
pub fn iou_loss(y: &[bool], scores: &[f64], theta: f64) -> Result<f64> {
    check_shapes(y, scores)?;
    let (pred, hit, truth) = counts(y, scores, theta);
    let union = pred + truth - hit;
    Ok(if union == 0 { 0.0 } else { 1.0 - hit as f64 / union as f64 })
}

/// Fraction of pixels predicted positive at `θ`.
pub fn prediction_rate(scores: &[f64], theta: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s >= theta).count() as f64 / scores.len() as f64
}

fn mask_of(z: &Sample) -> &[bool] {
    z.y.as_mask().unwrap_or(&[])
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FdrLoss;

impl Loss for FdrLoss {
    fn dim(&self) -> usize {
        1
    }

    fn label_kind(&self) -> LabelKind {
        LabelKind::Mask
    }

    fn evaluate(&self, z: &Sample, theta: &[f64]) -> f64 {
        fdr_loss(mask_of(z), &z.x, theta[0]).unwrap_or(f64::NAN)
    }

    fn bounded_01(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IouLoss;

impl Loss for IouLoss {
    fn dim(&self) -> usize {
        1
    }

    fn label_kind(&self) -> LabelKind {
        LabelKind::Mask
    }

    fn evaluate(&self, z: &Sample, theta: &[f64]) -> f64 {
        iou_loss(mask_of(z), &z.x, theta[0]).unwrap_or(f64::NAN)
    }

    fn bounded_01(&self) -> bool {
        true
    }
}

/// Images on a `grid_side × grid_side` lattice. A latent field made of a few
/// Gaussian bumps on a negative background drives both the true mask (latent
/// plus logistic noise, thresholded at zero) and the model scores (sigmoid of
/// the latent plus scaled logistic noise).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSegTask {
    pub grid_side: usize,
    pub max_bumps: usize,
    pub background: f64,
    pub amplitude: (f64, f64),
    /// Bump widths as a fraction of the side length.
    pub width: (f64, f64),
    /// Scale of the logistic noise on the true mask.
    pub mask_noise: f64,
    /// Scale of the logistic noise on the score logits.
    pub score_noise: f64,
}

impl Default for SyntheticSegTask {
    fn default() -> Self {
        SyntheticSegTask {
            grid_side: 16,
            max_bumps: 2,
            background: -3.0,
            amplitude: (4.0, 7.0),
            width: (0.1, 0.22),
            mask_noise: 1.0,
            score_noise: 0.75,
        }
    }
}

fn logistic(rng: &mut dyn RngCore) -> f64 {
    let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
    (u / (1.0 - u)).ln()
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl SyntheticSegTask {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grid_side >= 2
            && self.max_bumps >= 1
            && self.amplitude.0 <= self.amplitude.1
            && self.width.0 > 0.0
            && self.width.0 <= self.width.1
            && self.mask_noise > 0.0
            && self.score_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid segmentation task parameters: {self:?}")))
        }
    }

    pub fn pixels(&self) -> usize {
        self.grid_side * self.grid_side
    }

    /// Latent field on the lattice, row-major.
    fn latent(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = self.grid_side as f64;
        let bumps = rng.random_range(1..=self.max_bumps);
        let params: Vec<(f64, f64, f64, f64)> = (0..bumps)
            .map(|_| {
                let cx = rng.random_range(0.0..s);
                let cy = rng.random_range(0.0..s);
                let w = rng.random_range(self.width.0..=self.width.1) * s;
                let a = rng.random_range(self.amplitude.0..=self.amplitude.1);
                (cx, cy, w, a)
            })
            .collect();
        (0..self.pixels())
            .map(|k| {
                let (px, py) = ((k % self.grid_side) as f64 + 0.5, (k / self.grid_side) as f64 + 0.5);
                let bump = params
                    .iter()
                    .map(|&(cx, cy, w, a)| a * (-((px - cx).powi(2) + (py - cy).powi(2)) / (2.0 * w * w)).exp())
                    .fold(0.0, f64::max);
                self.background + bump
            })
            .collect()
    }
}

impl Population for SyntheticSegTask {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        let u = self.latent(rng);
        let mask: Vec<bool> = u.iter().map(|&v| v + self.mask_noise * logistic(rng) > 0.0).collect();
        let scores: Vec<f64> = u.iter().map(|&v| sigmoid(v / self.mask_noise + self.score_noise * logistic(rng))).collect();
        Sample::new(scores, Label::Mask(mask.into()))
    }
}

/// Whether the empirical risk is monotone (either direction) along `grid`.
pub fn risk_is_monotone_on_grid(data: &[Sample], loss: &dyn Loss, grid: &[f64]) -> bool {
    let risks: Vec<f64> = grid
        .iter()
        .map(|&t| data.iter().map(|z| loss.evaluate(z, &[t])).sum::<f64>() / data.len() as f64)
        .collect();
    let up = risks.windows(2).all(|w| w[1] >= w[0]);
    let down = risks.windows(2).all(|w| w[1] <= w[0]);
    up || down
}
