use ndarray::Array2;

use crate::error::{Error, Result};
use crate::prox::ProxChain;
use crate::step::StepSchedule;

/// One named block of parameters being optimized (e.g. the factor `A` or `S`).
#[derive(Debug, Clone)]
pub struct ParameterBlock {
    pub name: String,
    pub values: Array2<f64>,
    pub step: StepSchedule,
    pub prox: ProxChain,
}

impl ParameterBlock {
    pub fn new(
        name: impl Into<String>,
        values: Array2<f64>,
        step: StepSchedule,
        prox: ProxChain,
    ) -> Result<Self> {
        let name = name.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: name,
                what: "initial values".into(),
            });
        }
        if let Some(scale) = step.scale() {
            if scale.shape() != values.shape() {
                return Err(Error::ShapeMismatch {
                    context: format!("step scaling of block '{name}'"),
                    expected: values.shape().to_vec(),
                    got: scale.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            name,
            values,
            step,
            prox,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}
