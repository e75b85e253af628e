//! Samples, labels and datasets.
//!
//! A dataset is an ordered sequence of feature/label pairs. Order matters
//! because leave-one-out operations are positional, and repeated entries are
//! allowed (bootstrap replicates are full of them). Feature and mask storage is
//! reference counted so that subsetting a dataset never copies payloads.

use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three label shapes a loss can consume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Real,
    Binary,
    Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    Real(f64),
    Binary(bool),
    Mask(Arc<[bool]>),
}

impl Label {
    pub fn kind(&self) -> LabelKind {
        match self {
            Label::Real(_) => LabelKind::Real,
            Label::Binary(_) => LabelKind::Binary,
            Label::Mask(_) => LabelKind::Mask,
        }
    }

    /// Numeric view of scalar labels; binary labels map to 0/1.
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Label::Real(v) => Some(*v),
            Label::Binary(b) => Some(if *b { 1.0 } else { 0.0 }),
            Label::Mask(_) => None,
        }
    }

    pub fn as_binary(&self) -> Option<bool> {
        match self {
            Label::Binary(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_mask(&self) -> Option<&[bool]> {
        match self {
            Label::Mask(m) => Some(m),
            _ => None,
        }
    }

    /// Builds a mask label from numeric entries, rejecting anything but 0 and 1.
    pub fn mask_from_values(values: &[f64]) -> Result<Label> {
        let mut bits = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v == 0.0 {
                bits.push(false);
            } else if v == 1.0 {
                bits.push(true);
            } else {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: format!("mask entries must be 0 or 1, got {v}"),
                });
            }
        }
        Ok(Label::Mask(bits.into()))
    }
}

/// One feature/label pair `z = (x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Arc<[f64]>,
    pub y: Label,
}

impl Sample {
    pub fn new(x: impl Into<Arc<[f64]>>, y: Label) -> Self {
        Sample { x: x.into(), y }
    }

    /// A sample carrying a single scalar feature and a dummy real label.
    pub fn scalar(z: f64) -> Self {
        Sample::new(vec![z], Label::Real(0.0))
    }

    pub fn feature_len(&self) -> usize {
        self.x.len()
    }
}

/// A validated dataset: constant feature length and a single label shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let len = first.feature_len();
            let kind = first.y.kind();
            let mask_len = first.y.as_mask().map(<[bool]>::len);
            for (index, s) in samples.iter().enumerate().skip(1) {
                if s.feature_len() != len {
                    return Err(Error::InvalidSample {
                        index,
                        reason: format!("feature length {} differs from {}", s.feature_len(), len),
                    });
                }
                if s.y.kind() != kind {
                    return Err(Error::InvalidSample {
                        index,
                        reason: format!("label kind {:?} differs from {:?}", s.y.kind(), kind),
                    });
                }
                if s.y.as_mask().map(<[bool]>::len) != mask_len {
                    return Err(Error::InvalidSample {
                        index,
                        reason: "mask length differs from the first sample".into(),
                    });
                }
            }
        }
        Ok(Dataset { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn feature_len(&self) -> Option<usize> {
        self.samples.first().map(Sample::feature_len)
    }

    pub fn label_kind(&self) -> Option<LabelKind> {
        self.samples.first().map(|s| s.y.kind())
    }

    /// Checks that every label has the shape `kind`.
    pub fn validate_labels(&self, kind: LabelKind) -> Result<()> {
        for (index, s) in self.samples.iter().enumerate() {
            if s.y.kind() != kind {
                return Err(Error::InvalidSample {
                    index,
                    reason: format!("expected a {:?} label, found {:?}", kind, s.y.kind()),
                });
            }
        }
        Ok(())
    }
}

impl Deref for Dataset {
    type Target = [Sample];

    fn deref(&self) -> &[Sample] {
        &self.samples
    }
}

impl TryFrom<Vec<Sample>> for Dataset {
    type Error = Error;

    fn try_from(samples: Vec<Sample>) -> Result<Self> {
        Dataset::new(samples)
    }
}
