//! The loss abstraction `ℓ(x, y; θ)` shared by every calibrator.

use std::fmt;

use crate::data::{LabelKind, Sample};

/// A loss together with the metadata calibrators rely on.
///
/// `evaluate` must be deterministic. When `bounded_01` is true the value must
/// lie in `[0, 1]` for every input, and `gradient`, when provided, must return
/// a vector of length `dim`.
pub trait Loss: Send + Sync {
    /// Dimension `d` of the parameter.
    fn dim(&self) -> usize;

    /// Label shape this loss consumes.
    fn label_kind(&self) -> LabelKind;

    fn evaluate(&self, z: &Sample, theta: &[f64]) -> f64;

    fn bounded_01(&self) -> bool {
        false
    }

    /// Nonincreasing in θ (scalar parameters only).
    fn monotone_nonincreasing(&self) -> bool {
        false
    }

    fn gradient(&self, _z: &Sample, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Per-sample Lipschitz modulus `ρ(z)`.
    fn lipschitz_rho(&self, _z: &Sample) -> Option<f64> {
        None
    }

    /// True when the loss is `½(xᵀθ − y)²`, so that regularized ERM has a
    /// closed form.
    fn is_squared_error(&self) -> bool {
        false
    }
}

type EvalFn = dyn Fn(&Sample, &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Sample, &[f64]) -> Vec<f64> + Send + Sync;
type RhoFn = dyn Fn(&Sample) -> f64 + Send + Sync;

/// A loss assembled from closures.
pub struct FnLoss {
    dim: usize,
    kind: LabelKind,
    eval: Box<EvalFn>,
    grad: Option<Box<GradFn>>,
    rho: Option<Box<RhoFn>>,
    bounded: bool,
    monotone: bool,
}

impl FnLoss {
    pub fn new<F>(dim: usize, kind: LabelKind, eval: F) -> Self
    where
        F: Fn(&Sample, &[f64]) -> f64 + Send + Sync + 'static,
    {
        FnLoss {
            dim,
            kind,
            eval: Box::new(eval),
            grad: None,
            rho: None,
            bounded: false,
            monotone: false,
        }
    }

    /// Scalar-parameter loss over samples with real labels, the common case.
    pub fn scalar<F>(eval: F) -> Self
    where
        F: Fn(&Sample, f64) -> f64 + Send + Sync + 'static,
    {
        FnLoss::new(1, LabelKind::Real, move |z, t| eval(z, t[0]))
    }

    pub fn bounded(mut self) -> Self {
        self.bounded = true;
        self
    }

    pub fn monotone(mut self) -> Self {
        self.monotone = true;
        self
    }

    pub fn with_label_kind(mut self, kind: LabelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&Sample, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn with_rho<R>(mut self, rho: R) -> Self
    where
        R: Fn(&Sample) -> f64 + Send + Sync + 'static,
    {
        self.rho = Some(Box::new(rho));
        self
    }
}

impl fmt::Debug for FnLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLoss")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("bounded", &self.bounded)
            .field("monotone", &self.monotone)
            .field("gradient", &self.grad.is_some())
            .field("rho", &self.rho.is_some())
            .finish()
    }
}

impl Loss for FnLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn label_kind(&self) -> LabelKind {
        self.kind
    }

    fn evaluate(&self, z: &Sample, theta: &[f64]) -> f64 {
        (self.eval)(z, theta)
    }

    fn bounded_01(&self) -> bool {
        self.bounded
    }

    fn monotone_nonincreasing(&self) -> bool {
        self.monotone
    }

    fn gradient(&self, z: &Sample, theta: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(z, theta))
    }

    fn lipschitz_rho(&self, z: &Sample) -> Option<f64> {
        self.rho.as_ref().map(|r| r(z))
    }
}
