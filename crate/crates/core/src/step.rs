//! Step-size schedules `alpha_t`.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `alpha / sqrt(t)`.
    InverseSqrt,
}

/// Base step size in parameter units, optionally scaled per element.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    kind: ScheduleKind,
    alpha: f64,
    scale: Option<Array2<f64>>,
}

/// Step size emitted for one iteration: either a scalar or one value per
/// element of the block.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSize {
    Scalar(f64),
    PerElement(Array2<f64>),
}

impl StepSchedule {
    pub fn new(kind: ScheduleKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self {
            kind,
            alpha,
            scale: None,
        })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, alpha)
    }

    pub fn inverse_sqrt(alpha: f64) -> Result<Self> {
        Self::new(ScheduleKind::InverseSqrt, alpha)
    }

    /// Attaches a strictly positive per-element scaling.
    pub fn with_scale(mut self, scale: Array2<f64>) -> Result<Self> {
        if let Some(bad) = scale.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "per-element step scaling must be strictly positive, found {bad}"
            )));
        }
        self.scale = Some(scale);
        Ok(self)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> Option<&Array2<f64>> {
        self.scale.as_ref()
    }

    /// Scalar part of the step at iteration `t` (1-based).
    ///
    /// Panics if `t == 0`.
    pub fn base_at(&self, t: u64) -> f64 {
        assert!(t >= 1, "step schedules are indexed from t = 1");
        match self.kind {
            ScheduleKind::Constant => self.alpha,
            ScheduleKind::InverseSqrt => self.alpha / (t as f64).sqrt(),
        }
    }

    /// Step at iteration `t`, including the per-element scaling when present.
    ///
    /// Panics if `t == 0`.
    pub fn step_at(&self, t: u64) -> StepSize {
        let base = self.base_at(t);
        match &self.scale {
            None => StepSize::Scalar(base),
            Some(s) => StepSize::PerElement(s * base),
        }
    }
}

impl StepSize {
    /// Largest step value.
    pub fn max(&self) -> f64 {
        match self {
            StepSize::Scalar(a) => *a,
            StepSize::PerElement(a) => a.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Step value for element `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            StepSize::Scalar(a) => *a,
            StepSize::PerElement(a) => a[[i, j]],
        }
    }
}
