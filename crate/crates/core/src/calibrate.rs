//! Calibration results and the calibrator interface.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::loss::Loss;

/// A fitted parameter. Scalar leftmost-root calibrators can return the
/// infimum of an unbounded set, which is kept as an explicit sentinel so that
/// index arithmetic can treat it as position 0.
#[derive(Clone, Debug, PartialEq)]
pub enum ThetaHat {
    NegInf,
    Point(Vec<f64>),
}

impl ThetaHat {
    pub fn scalar(v: f64) -> Self {
        ThetaHat::Point(vec![v])
    }

    pub fn is_neg_inf(&self) -> bool {
        matches!(self, ThetaHat::NegInf)
    }

    /// The parameter as a vector of length `dim`; the sentinel maps to −∞ in
    /// every coordinate.
    pub fn to_vec(&self, dim: usize) -> Vec<f64> {
        match self {
            ThetaHat::NegInf => vec![f64::NEG_INFINITY; dim],
            ThetaHat::Point(v) => v.clone(),
        }
    }

    /// First coordinate, −∞ for the sentinel.
    pub fn scalar_value(&self) -> f64 {
        match self {
            ThetaHat::NegInf => f64::NEG_INFINITY,
            ThetaHat::Point(v) => v.first().copied().unwrap_or(f64::NAN),
        }
    }
}

impl Serialize for ThetaHat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ThetaHat::NegInf => s.serialize_str("-inf"),
            ThetaHat::Point(v) if v.len() == 1 => s.serialize_f64(v[0]),
            ThetaHat::Point(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for x in v {
                    seq.serialize_element(x)?;
                }
                seq.end()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub theta_hat: ThetaHat,
    pub algorithm: String,
    pub alpha_effective: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl CalibrationResult {
    pub fn new(theta_hat: ThetaHat, algorithm: impl Into<String>, alpha_effective: f64) -> Self {
        CalibrationResult {
            theta_hat,
            algorithm: algorithm.into(),
            alpha_effective,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, name: &str, value: f64) -> Self {
        self.diagnostics.insert(name.to_string(), value);
        self
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.get(name).copied()
    }

    /// Boolean diagnostics are stored as 0/1.
    pub fn flag(&self, name: &str) -> bool {
        self.diagnostic(name).is_some_and(|v| v != 0.0)
    }
}

/// An algorithm `A` mapping a dataset to a parameter.
///
/// Implementations must be symmetric (invariant to permutations of the
/// input) up to floating point reassociation.
pub trait Calibrator: Send + Sync {
    fn id(&self) -> String;

    fn calibrate(&self, data: &[Sample], loss: &dyn Loss) -> Result<CalibrationResult>;

    /// `A(D_{-i})` for every position `i`. Families with a cheaper route than
    /// `|D|` independent refits override this; the result must match the naive
    /// path.
    fn calibrate_leave_one_out(&self, data: &[Sample], loss: &dyn Loss) -> Result<Vec<CalibrationResult>> {
        naive_leave_one_out(self, data, loss)
    }
}

/// Refits on every leave-one-out subset, reducing in index order.
pub fn naive_leave_one_out<C: Calibrator + ?Sized>(
    algo: &C,
    data: &[Sample],
    loss: &dyn Loss,
) -> Result<Vec<CalibrationResult>> {
    if data.len() < 2 {
        return Err(Error::TooSmall { need: 2, got: data.len() });
    }
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let subset = without_index(data, i);
            algo.calibrate(&subset, loss).map_err(|e| Error::LooFailure {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub(crate) fn without_index(data: &[Sample], i: usize) -> Vec<Sample> {
    let mut v = Vec::with_capacity(data.len() - 1);
    v.extend_from_slice(&data[..i]);
    v.extend_from_slice(&data[i + 1..]);
    v
}

/// Ignores its input and always returns the same parameter.
#[derive(Clone, Debug)]
pub struct ConstantCalibrator {
    pub theta: ThetaHat,
}

impl ConstantCalibrator {
    pub fn scalar(theta: f64) -> Self {
        ConstantCalibrator { theta: ThetaHat::scalar(theta) }
    }
}

impl Calibrator for ConstantCalibrator {
    fn id(&self) -> String {
        "constant".into()
    }

    fn calibrate(&self, _data: &[Sample], _loss: &dyn Loss) -> Result<CalibrationResult> {
        Ok(CalibrationResult::new(self.theta.clone(), self.id(), f64::NAN))
    }
}
