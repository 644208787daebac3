//! Proximal operators `prox_{step * r}(x)` and ordered chains of them.
//!
//! All built-in operators are independent of the step: they are projections
//! or, for hard thresholding, use the threshold `lambda` as given.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// User-supplied proximal operator `(x, step) -> prox(x)`; must preserve the
/// shape of `x`.
pub type CustomProxFn = dyn Fn(&Array2<f64>, f64) -> Array2<f64> + Send + Sync;

#[derive(Clone)]
pub enum ProxOperator {
    Identity,
    /// Projection onto the non-negative orthant, `max(0, x)`.
    NonNeg,
    /// Each row replaced by `|x| / sum |x|`.
    UnityRows,
    /// Keeps `x` where `|x| > lambda`, zero elsewhere.
    HardThreshold(f64),
    /// Hard thresholding with one `lambda` per row.
    HardThresholdRows(Vec<f64>),
    Custom { name: String, op: Arc<CustomProxFn> },
}

impl fmt::Debug for ProxOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProxOperator::Identity => f.write_str("Identity"),
            ProxOperator::NonNeg => f.write_str("NonNeg"),
            ProxOperator::UnityRows => f.write_str("UnityRows"),
            ProxOperator::HardThreshold(l) => write!(f, "HardThreshold({l})"),
            ProxOperator::HardThresholdRows(l) => write!(f, "HardThresholdRows({l:?})"),
            ProxOperator::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ProxOperator {
    pub fn hard_threshold(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "hard threshold lambda must be positive, got {lambda}"
            )));
        }
        Ok(ProxOperator::HardThreshold(lambda))
    }

    pub fn hard_threshold_rows(lambdas: Vec<f64>) -> Result<Self> {
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "hard threshold lambda must be positive, got {l}"
            )));
        }
        Ok(ProxOperator::HardThresholdRows(lambdas))
    }

    pub fn custom<F>(name: impl Into<String>, op: F) -> Self
    where
        F: Fn(&Array2<f64>, f64) -> Array2<f64> + Send + Sync + 'static,
    {
        ProxOperator::Custom {
            name: name.into(),
            op: Arc::new(op),
        }
    }

    /// True when each output element depends only on the same input element.
    pub fn is_elementwise(&self) -> bool {
        matches!(
            self,
            ProxOperator::Identity
                | ProxOperator::NonNeg
                | ProxOperator::HardThreshold(_)
                | ProxOperator::HardThresholdRows(_)
        )
    }

    pub fn apply_in_place(&self, x: &mut Array2<f64>, step: f64) -> Result<()> {
        match self {
            ProxOperator::Identity => {}
            ProxOperator::NonNeg => x.mapv_inplace(|v| v.max(0.0)),
            ProxOperator::UnityRows => unity_rows_in_place(x),
            ProxOperator::HardThreshold(lambda) => {
                let lambda = *lambda;
                x.mapv_inplace(|v| if v.abs() > lambda { v } else { 0.0 });
            }
            ProxOperator::HardThresholdRows(lambdas) => {
                if lambdas.len() != x.nrows() {
                    return Err(Error::ShapeMismatch {
                        context: "row-wise hard threshold".into(),
                        expected: vec![x.nrows()],
                        got: vec![lambdas.len()],
                    });
                }
                for (mut row, &lambda) in x.axis_iter_mut(Axis(0)).zip(lambdas) {
                    row.mapv_inplace(|v| if v.abs() > lambda { v } else { 0.0 });
                }
            }
            ProxOperator::Custom { name, op } => {
                let out = op(x, step);
                if out.shape() != x.shape() {
                    return Err(Error::ShapeMismatch {
                        context: format!("custom prox '{name}'"),
                        expected: x.shape().to_vec(),
                        got: out.shape().to_vec(),
                    });
                }
                *x = out;
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &Array2<f64>, step: f64) -> Result<Array2<f64>> {
        let mut out = x.clone();
        self.apply_in_place(&mut out, step)?;
        Ok(out)
    }
}

fn unity_rows_in_place(x: &mut Array2<f64>) {
    for (c, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let total: f64 = row.iter().map(|v| v.abs()).sum();
        if total > 0.0 && total.is_finite() {
            row.mapv_inplace(|v| v.abs() / total);
        } else {
            log::warn!("unity normalization: row {c} has zero mass, replacing with uniform row");
            let d = row.len() as f64;
            row.fill(1.0 / d);
        }
    }
}

/// Operators applied left to right with a common step. An empty chain is the
/// identity.
#[derive(Debug, Clone, Default)]
pub struct ProxChain {
    ops: Vec<ProxOperator>,
}

impl ProxChain {
    pub fn new(ops: Vec<ProxOperator>) -> Self {
        Self { ops }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn nonneg() -> Self {
        Self::new(vec![ProxOperator::NonNeg])
    }

    pub fn then(mut self, op: ProxOperator) -> Self {
        self.ops.push(op);
        self
    }

    pub fn ops(&self) -> &[ProxOperator] {
        &self.ops
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn is_elementwise(&self) -> bool {
        self.ops.iter().all(ProxOperator::is_elementwise)
    }

    pub fn apply_in_place(&self, x: &mut Array2<f64>, step: f64) -> Result<()> {
        for op in &self.ops {
            op.apply_in_place(x, step)?;
        }
        Ok(())
    }

    pub fn apply(&self, x: &Array2<f64>, step: f64) -> Result<Array2<f64>> {
        let mut out = x.clone();
        self.apply_in_place(&mut out, step)?;
        Ok(out)
    }
}

impl From<Vec<ProxOperator>> for ProxChain {
    fn from(ops: Vec<ProxOperator>) -> Self {
        Self::new(ops)
    }
}

pub fn prox_identity(x: &Array2<f64>, _step: f64) -> Array2<f64> {
    x.clone()
}

pub fn prox_nonneg(x: &Array2<f64>, _step: f64) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Row-wise `|x| / sum |x|`. All-zero rows become uniform (`1/d`).
pub fn prox_unity_rows(x: &Array2<f64>, _step: f64) -> Array2<f64> {
    let mut out = x.clone();
    unity_rows_in_place(&mut out);
    out
}

/// Panics unless `lambda > 0`.
pub fn prox_hard_threshold(x: &Array2<f64>, _step: f64, lambda: f64) -> Array2<f64> {
    assert!(lambda > 0.0, "hard threshold requires lambda > 0, got {lambda}");
    x.mapv(|v| if v.abs() > lambda { v } else { 0.0 })
}

pub fn prox_chain_apply(chain: &ProxChain, x: &Array2<f64>, step: f64) -> Result<Array2<f64>> {
    chain.apply(x, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-5.0f64..5.0, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    }

    #[test]
    fn identity_ignores_step() {
        let x = array![[1.5, -2.0]];
        assert_eq!(prox_identity(&x, 0.1), x);
        assert_eq!(prox_identity(&x, 10.0), x);
        assert_eq!(ProxChain::identity().apply(&x, 1.0).unwrap(), x);
    }

    #[test]
    fn nonneg_clamps() {
        assert_eq!(prox_nonneg(&array![[-1.0, 2.0]], 1.0), array![[0.0, 2.0]]);
        assert_eq!(prox_nonneg(&array![[0.0, 0.0]], 1.0), array![[0.0, 0.0]]);
    }

    #[test]
    fn unity_rows_normalizes_absolute_values() {
        assert_eq!(prox_unity_rows(&array![[1.0, 3.0]], 1.0), array![[0.25, 0.75]]);
        assert_eq!(prox_unity_rows(&array![[-1.0, 1.0]], 1.0), array![[0.5, 0.5]]);
    }

    #[test]
    fn unity_rows_zero_row_falls_back_to_uniform() {
        let out = prox_unity_rows(&array![[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 1.0]], 1.0);
        assert_eq!(out.row(0).to_vec(), vec![0.25; 4]);
        assert_eq!(out.row(1).to_vec(), vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn hard_threshold_is_strict() {
        let out = prox_hard_threshold(&array![[0.5, -2.0, 1.5]], 1.0, 1.0);
        assert_eq!(out, array![[0.0, -2.0, 1.5]]);
        let out = prox_hard_threshold(&array![[1.0, -1.0]], 1.0, 1.0);
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn hard_threshold_small_lambda_is_near_identity() {
        let x = array![[0.3, -1e-3, 7.0]];
        assert_eq!(prox_hard_threshold(&x, 1.0, 1e-12), x);
    }

    #[test]
    #[should_panic]
    fn hard_threshold_rejects_nonpositive_lambda() {
        prox_hard_threshold(&array![[1.0]], 1.0, 0.0);
    }

    #[test]
    fn hard_threshold_constructor_validates() {
        assert!(ProxOperator::hard_threshold(0.0).is_err());
        assert!(ProxOperator::hard_threshold(-1.0).is_err());
        assert!(ProxOperator::hard_threshold_rows(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn row_thresholds_apply_per_row() {
        let op = ProxOperator::hard_threshold_rows(vec![1.0, 0.1]).unwrap();
        let out = op.apply(&array![[0.5, 2.0], [0.5, 0.05]], 1.0).unwrap();
        assert_eq!(out, array![[0.0, 2.0], [0.5, 0.0]]);
        assert!(op.apply(&array![[1.0]], 1.0).is_err());
    }

    #[test]
    fn chain_composes_left_to_right() {
        let chain = ProxChain::new(vec![
            ProxOperator::hard_threshold(1.0).unwrap(),
            ProxOperator::NonNeg,
            ProxOperator::UnityRows,
        ]);
        let out = chain.apply(&array![[-3.0, 0.5, 2.0]], 1.0).unwrap();
        assert_eq!(out, array![[0.0, 0.0, 1.0]]);

        let x = array![[-1.0, 2.0], [3.0, -4.0]];
        assert_eq!(ProxChain::nonneg().apply(&x, 0.3).unwrap(), prox_nonneg(&x, 0.3));
    }

    #[test]
    fn custom_operator_receives_step() {
        let chain = ProxChain::identity().then(ProxOperator::custom("shrink", |x, step| {
            x.mapv(|v| v / (1.0 + step))
        }));
        let out = chain.apply(&array![[2.0]], 1.0).unwrap();
        assert_eq!(out, array![[1.0]]);
        assert!(!chain.is_elementwise());

        let bad = ProxChain::identity().then(ProxOperator::custom("bad", |_, _| Array2::zeros((2, 2))));
        assert!(bad.apply(&array![[1.0]], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn nonneg_is_idempotent(x in matrix(3, 4)) {
            let once = prox_nonneg(&x, 1.0);
            prop_assert_eq!(prox_nonneg(&once, 1.0), once);
        }

        #[test]
        fn nonneg_is_nonexpansive(x in matrix(2, 3), y in matrix(2, 3)) {
            let d_out = (prox_nonneg(&x, 1.0) - prox_nonneg(&y, 1.0)).mapv(|v| v * v).sum().sqrt();
            let d_in = (&x - &y).mapv(|v| v * v).sum().sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nonneg_matches_grid_minimizer(x in prop::collection::vec(-2.0f64..2.0, 3)) {
            // argmin over z >= 0 of 0.5 |z - x|^2 on a 0.02 grid
            let h = 0.02;
            let grid: Vec<f64> = (0..=100).map(|i| i as f64 * h).collect();
            let mut best = (f64::INFINITY, [0.0; 3]);
            for &a in &grid { for &b in &grid { for &c in &grid {
                let f = 0.5 * ((a - x[0]).powi(2) + (b - x[1]).powi(2) + (c - x[2]).powi(2));
                if f < best.0 { best = (f, [a, b, c]); }
            }}}
            let p = prox_nonneg(&Array2::from_shape_vec((1, 3), x.clone()).unwrap(), 1.0);
            for i in 0..3 {
                prop_assert!((p[[0, i]] - best.1[i]).abs() <= h / 2.0 + 1e-12);
            }
        }

    }

    proptest! {
        #[test]
        fn unity_rows_land_in_simplex(x in matrix(4, 5)) {
            let out = prox_unity_rows(&x, 1.0);
            for row in out.rows() {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn hard_threshold_sparsifies_and_is_idempotent(x in matrix(3, 3), lambda in 0.01f64..3.0) {
            let once = prox_hard_threshold(&x, 1.0, lambda);
            let nnz = |m: &Array2<f64>| m.iter().filter(|v| **v != 0.0).count();
            prop_assert!(nnz(&once) <= nnz(&x));
            prop_assert_eq!(prox_hard_threshold(&once, 1.0, lambda), once);
        }
    }
}
