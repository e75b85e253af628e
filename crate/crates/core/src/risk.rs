//! Empirical risk, leave-one-out subsets, stability gaps and the sampling
//! harness used to build exchangeable datasets.

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibrate::{without_index, Calibrator};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::loss::Loss;

fn check_theta(loss: &dyn Loss, theta: &[f64]) -> Result<()> {
    if theta.len() != loss.dim() {
        return Err(Error::DimensionMismatch { expected: loss.dim(), got: theta.len() });
    }
    Ok(())
}

/// Mean loss over `data`, summed in index order.
pub fn empirical_risk(data: &[Sample], loss: &dyn Loss, theta: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_theta(loss, theta)?;
    Ok(loss_sum(data, loss, theta) / data.len() as f64)
}

pub(crate) fn loss_sum(data: &[Sample], loss: &dyn Loss, theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for z in data {
        s += loss.evaluate(z, theta);
    }
    s
}

/// The `|D|` leave-one-out subsets, the `i`-th omitting position `i`.
pub fn loo_datasets(data: &[Sample]) -> Result<Vec<Vec<Sample>>> {
    if data.len() < 2 {
        return Err(Error::TooSmall { need: 2, got: data.len() });
    }
    Ok((0..data.len()).map(|i| without_index(data, i)).collect())
}

/// Per-sample terms `ℓ(Z_i; A(D_{-i})) − ℓ(Z_i; A*(D))`.
pub fn stability_gap_terms(
    data: &[Sample],
    algo: &dyn Calibrator,
    ref_algo: &dyn Calibrator,
    loss: &dyn Loss,
) -> Result<Vec<f64>> {
    if data.len() < 2 {
        return Err(Error::TooSmall { need: 2, got: data.len() });
    }
    let full = ref_algo.calibrate(data, loss)?;
    let theta_full = full.theta_hat.to_vec(loss.dim());
    let loo = algo.calibrate_leave_one_out(data, loss)?;
    Ok(data
        .iter()
        .zip(&loo)
        .map(|(z, r)| loss.evaluate(z, &r.theta_hat.to_vec(loss.dim())) - loss.evaluate(z, &theta_full))
        .collect())
}

/// The empirical stability gap of `algo` against `ref_algo` on one dataset.
pub fn stability_gap(
    data: &[Sample],
    algo: &dyn Calibrator,
    ref_algo: &dyn Calibrator,
    loss: &dyn Loss,
) -> Result<f64> {
    let terms = stability_gap_terms(data, algo, ref_algo, loss)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Componentwise gap of a vector-valued functional `g`, usually the gradient.
pub fn stability_gap_vector(
    data: &[Sample],
    algo: &dyn Calibrator,
    ref_algo: &dyn Calibrator,
    loss: &dyn Loss,
) -> Result<Vec<f64>> {
    if data.len() < 2 {
        return Err(Error::TooSmall { need: 2, got: data.len() });
    }
    let d = loss.dim();
    let full = ref_algo.calibrate(data, loss)?.theta_hat.to_vec(d);
    let loo = algo.calibrate_leave_one_out(data, loss)?;
    let mut acc = vec![0.0; d];
    for (z, r) in data.iter().zip(&loo) {
        let a = loss.gradient(z, &r.theta_hat.to_vec(d)).ok_or(Error::MissingCapability("a gradient"))?;
        let b = loss.gradient(z, &full).ok_or(Error::MissingCapability("a gradient"))?;
        for k in 0..d {
            acc[k] += a[k] - b[k];
        }
    }
    let n = data.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// A data-generating distribution.
pub trait Population: Send + Sync {
    fn draw(&self, rng: &mut dyn RngCore) -> Sample;
}

impl<F> Population for F
where
    F: Fn(&mut dyn RngCore) -> Sample + Send + Sync,
{
    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        self(rng)
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for Monte Carlo trial `i` of a run seeded with `seed`.
pub fn trial_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_add(i)
}

/// Seed for bootstrap replicate `b`.
pub fn replicate_seed(seed: u64, b: u64) -> u64 {
    seed ^ b
}

/// `n` i.i.d. draws.
pub fn draw_iid(pop: &dyn Population, n: usize, rng: &mut dyn RngCore) -> Vec<Sample> {
    (0..n).map(|_| pop.draw(rng)).collect()
}

/// `n` draws without replacement from a finite pool. The result is
/// exchangeable but not independent.
pub fn draw_exchangeable(pool: &[Sample], n: usize, rng: &mut dyn RngCore) -> Result<Vec<Sample>> {
    if n > pool.len() {
        return Err(Error::TooSmall { need: n, got: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    Ok(index::sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i].clone()).collect())
}
