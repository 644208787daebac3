//! Constrained matrix factorization problems `Y ~ A S`.
//!
//! Each problem exposes its loss, the partial gradient with respect to each
//! block and, for the proximal gradient baseline, an analytic Lipschitz
//! constant of that partial gradient at the current value of the other block.
//! Blocks are always ordered `[A, S]`.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, Axis};

use crate::error::{check_shape, Error, Result};
use crate::linalg::PowerIteration;
use crate::prox::{ProxChain, ProxOperator};
use crate::step::StepSchedule;

/// Lower bound on returned Lipschitz constants, keeps `1/L` finite for
/// all-zero blocks.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Lower bound on per-component step sizes.
pub const STEP_FLOOR: f64 = 1e-12;

pub const BLOCK_A: usize = 0;
pub const BLOCK_S: usize = 1;

/// A differentiable loss over an ordered list of blocks.
pub trait Problem: Send + Sync {
    fn block_names(&self) -> &[&'static str];

    fn loss(&self, blocks: &[&Array2<f64>]) -> Result<f64>;

    /// Partial gradient with respect to `blocks[index]`.
    fn gradient(&self, blocks: &[&Array2<f64>], index: usize) -> Result<Array2<f64>>;

    /// Lipschitz constant of the partial gradient with respect to
    /// `blocks[index]`, at the current value of the other blocks.
    fn lipschitz(&self, blocks: &[&Array2<f64>], index: usize) -> Result<f64>;

    /// Number of spectral-norm computations performed so far.
    fn spectral_evaluations(&self) -> u64;
}

fn factor_shapes(context: &str, a: &Array2<f64>, s: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    check_shape(&format!("{context}: A"), &[y.nrows(), s.nrows()], a.shape())?;
    check_shape(&format!("{context}: S"), &[a.ncols(), y.ncols()], s.shape())
}

fn block_pair<'a>(blocks: &[&'a Array2<f64>]) -> Result<(&'a Array2<f64>, &'a Array2<f64>)> {
    match blocks {
        [a, s] => Ok((a, s)),
        _ => Err(Error::InvalidArgument(format!(
            "factorization problems take two blocks [A, S], got {}",
            blocks.len()
        ))),
    }
}

fn bad_index(index: usize) -> Error {
    Error::InvalidArgument(format!("block index {index} out of range for [A, S]"))
}

/// `0.5 * |A S - Y|^2` summed over all elements.
pub fn nmf_loss(a: &Array2<f64>, s: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    factor_shapes("nmf loss", a, s, y)?;
    let r = a.dot(s) - y;
    Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>())
}

/// `((A S - Y) S^T, A^T (A S - Y))`.
pub fn nmf_grads(
    a: &Array2<f64>,
    s: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    factor_shapes("nmf gradient", a, s, y)?;
    let r = a.dot(s) - y;
    Ok((r.dot(&s.t()), a.t().dot(&r)))
}

/// `(|S S^T|_s, |A^T A|_s)`, the Lipschitz constants of the gradients with
/// respect to `A` and `S`.
pub fn nmf_lipschitz(a: &Array2<f64>, s: &Array2<f64>) -> (f64, f64) {
    let pi = PowerIteration::default();
    (
        pi.gram_norm(s).value.max(LIPSCHITZ_FLOOR),
        pi.gram_norm(a).value.max(LIPSCHITZ_FLOOR),
    )
}

fn check_sigma(sigma: &[f64], bands: usize) -> Result<()> {
    if sigma.len() != bands {
        return Err(Error::ShapeMismatch {
            context: "per-band noise levels".into(),
            expected: vec![bands],
            got: vec![sigma.len()],
        });
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "noise levels must be positive, got {s}"
        )));
    }
    Ok(())
}

fn inverse_variances(sigma: &[f64]) -> Array1<f64> {
    sigma.iter().map(|s| 1.0 / (s * s)).collect()
}

/// `0.5 * sum_l sigma_l^-2 |A_l S - Y_l|^2`, where row `l` of `A` and `Y`
/// belongs to band `l`.
pub fn multiband_loss(a: &Array2<f64>, s: &Array2<f64>, y: &Array2<f64>, sigma: &[f64]) -> Result<f64> {
    factor_shapes("multiband loss", a, s, y)?;
    check_sigma(sigma, y.nrows())?;
    let w = inverse_variances(sigma);
    let r = a.dot(s) - y;
    Ok(0.5
        * r.indexed_iter()
            .map(|((l, _), v)| w[l] * v * v)
            .sum::<f64>())
}

/// With `R_l = sigma_l^-2 (A_l S - Y_l)`: row `l` of the `A` gradient is
/// `R_l S^T` and the `S` gradient is `sum_l A_l^T R_l`.
pub fn multiband_grads(
    a: &Array2<f64>,
    s: &Array2<f64>,
    y: &Array2<f64>,
    sigma: &[f64],
) -> Result<(Array2<f64>, Array2<f64>)> {
    factor_shapes("multiband gradient", a, s, y)?;
    check_sigma(sigma, y.nrows())?;
    let w = inverse_variances(sigma).insert_axis(Axis(1));
    let r = (a.dot(s) - y) * &w;
    Ok((r.dot(&s.t()), a.t().dot(&r)))
}

/// `L_A = max_l sigma_l^-2 |S S^T|_s` (rows of `A` decouple) and
/// `L_S = |sum_l sigma_l^-2 A_l^T A_l|_s`.
pub fn multiband_lipschitz(a: &Array2<f64>, s: &Array2<f64>, sigma: &[f64]) -> Result<(f64, f64)> {
    check_sigma(sigma, a.nrows())?;
    Ok((
        multiband_lipschitz_a(s, sigma, &PowerIteration::default()),
        multiband_lipschitz_s(a, sigma, &PowerIteration::default()),
    ))
}

fn multiband_lipschitz_a(s: &Array2<f64>, sigma: &[f64], pi: &PowerIteration) -> f64 {
    let wmax = sigma.iter().map(|sg| 1.0 / (sg * sg)).fold(0.0, f64::max);
    (wmax * pi.gram_norm(s).value).max(LIPSCHITZ_FLOOR)
}

fn multiband_lipschitz_s(a: &Array2<f64>, sigma: &[f64], pi: &PowerIteration) -> f64 {
    let sqrt_w = Array1::from_iter(sigma.iter().map(|sg| 1.0 / sg)).insert_axis(Axis(1));
    let weighted = a * &sqrt_w;
    pi.gram_norm(&weighted).value.max(LIPSCHITZ_FLOOR)
}

/// Per-component step sizes for the multi-band problem.
///
/// Column `k` of `A` gets `(alpha_rel_a / C) * sum_c A_ck`, i.e. a fraction of
/// its mean amplitude; `S` gets the constant `alpha_s`. Dark columns are
/// floored at [`STEP_FLOOR`].
pub fn astro_step_sizes(
    a_init: &Array2<f64>,
    alpha_rel_a: f64,
    alpha_s: f64,
) -> Result<(StepSchedule, StepSchedule)> {
    let c = a_init.nrows() as f64;
    let per_column: Vec<f64> = a_init
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(k, col)| {
            let step = alpha_rel_a / c * col.sum();
            if step > STEP_FLOOR {
                step
            } else {
                log::warn!("component {k} has a non-positive mean amplitude; flooring its step at {STEP_FLOOR:e}");
                STEP_FLOOR
            }
        })
        .collect();
    let scale = Array2::from_shape_fn(a_init.raw_dim(), |(_, k)| per_column[k]);
    let step_a = StepSchedule::constant(1.0)?.with_scale(scale)?;
    let step_s = StepSchedule::constant(alpha_s)?;
    Ok((step_a, step_s))
}

/// Hard-threshold levels `rel * max(row)` for each row of `s`, floored at a
/// tiny positive value.
pub fn relative_l0_thresholds(s: &Array2<f64>, rel: f64) -> Vec<f64> {
    s.axis_iter(Axis(0))
        .map(|row| (rel * row.iter().copied().fold(0.0, f64::max)).max(LIPSCHITZ_FLOOR))
        .collect()
}

fn validate_data(y: &Array2<f64>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("component count K must be at least 1".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block: "Y".into(),
            what: "data".into(),
        });
    }
    Ok(())
}

/// Non-negative matrix factorization of `Y` (C x N) into `A` (C x K) and
/// `S` (K x N).
#[derive(Debug)]
pub struct NmfProblem {
    y: Array2<f64>,
    k: usize,
    power: PowerIteration,
    spectral_evals: AtomicU64,
}

impl NmfProblem {
    pub fn new(y: Array2<f64>, k: usize) -> Result<Self> {
        validate_data(&y, k)?;
        Ok(Self {
            y,
            k,
            power: PowerIteration::default(),
            spectral_evals: AtomicU64::new(0),
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn components(&self) -> usize {
        self.k
    }

    /// Shapes of `A` and `S`.
    pub fn block_shapes(&self) -> [(usize, usize); 2] {
        [(self.y.nrows(), self.k), (self.k, self.y.ncols())]
    }

    /// `[prox_+, prox_+]`.
    pub fn default_chains(&self) -> [ProxChain; 2] {
        [ProxChain::nonneg(), ProxChain::nonneg()]
    }
}

impl Problem for NmfProblem {
    fn block_names(&self) -> &[&'static str] {
        &["A", "S"]
    }

    fn loss(&self, blocks: &[&Array2<f64>]) -> Result<f64> {
        let (a, s) = block_pair(blocks)?;
        nmf_loss(a, s, &self.y)
    }

    fn gradient(&self, blocks: &[&Array2<f64>], index: usize) -> Result<Array2<f64>> {
        let (a, s) = block_pair(blocks)?;
        factor_shapes("nmf gradient", a, s, &self.y)?;
        let r = a.dot(s) - &self.y;
        match index {
            BLOCK_A => Ok(r.dot(&s.t())),
            BLOCK_S => Ok(a.t().dot(&r)),
            _ => Err(bad_index(index)),
        }
    }

    fn lipschitz(&self, blocks: &[&Array2<f64>], index: usize) -> Result<f64> {
        let (a, s) = block_pair(blocks)?;
        let m = match index {
            BLOCK_A => s,
            BLOCK_S => a,
            _ => return Err(bad_index(index)),
        };
        self.spectral_evals.fetch_add(1, Ordering::Relaxed);
        Ok(self.power.gram_norm(m).value.max(LIPSCHITZ_FLOOR))
    }

    fn spectral_evaluations(&self) -> u64 {
        self.spectral_evals.load(Ordering::Relaxed)
    }
}

/// NMF whose mixing rows `A_c` are additionally constrained to sum to one.
/// The loss is the NMF loss; the constraint lives in the prox chain of `A`.
#[derive(Debug)]
pub struct MixMfProblem(NmfProblem);

impl MixMfProblem {
    pub fn new(y: Array2<f64>, k: usize) -> Result<Self> {
        NmfProblem::new(y, k).map(Self)
    }

    pub fn inner(&self) -> &NmfProblem {
        &self.0
    }

    pub fn block_shapes(&self) -> [(usize, usize); 2] {
        self.0.block_shapes()
    }

    /// `[prox_+ then row normalization, prox_+]`.
    pub fn default_chains(&self) -> [ProxChain; 2] {
        [
            ProxChain::new(vec![ProxOperator::NonNeg, ProxOperator::UnityRows]),
            ProxChain::nonneg(),
        ]
    }
}

impl Problem for MixMfProblem {
    fn block_names(&self) -> &[&'static str] {
        self.0.block_names()
    }

    fn loss(&self, blocks: &[&Array2<f64>]) -> Result<f64> {
        self.0.loss(blocks)
    }

    fn gradient(&self, blocks: &[&Array2<f64>], index: usize) -> Result<Array2<f64>> {
        self.0.gradient(blocks, index)
    }

    fn lipschitz(&self, blocks: &[&Array2<f64>], index: usize) -> Result<f64> {
        self.0.lipschitz(blocks, index)
    }

    fn spectral_evaluations(&self) -> u64 {
        self.0.spectral_evaluations()
    }
}

/// Joint factorization of `C` band images with per-band noise `sigma_l`.
///
/// `Y` is `C x N` with each row a band image flattened row-major from
/// `image_shape = (H, W)`; `A` holds per-band amplitudes (C x K) and `S` the
/// spatial maps (K x N).
#[derive(Debug)]
pub struct MultiBandProblem {
    y: Array2<f64>,
    sigma: Vec<f64>,
    k: usize,
    image_shape: (usize, usize),
    power: PowerIteration,
    spectral_evals: AtomicU64,
}

impl MultiBandProblem {
    pub fn new(y: Array2<f64>, sigma: Vec<f64>, k: usize, image_shape: (usize, usize)) -> Result<Self> {
        validate_data(&y, k)?;
        check_sigma(&sigma, y.nrows())?;
        if image_shape.0 * image_shape.1 != y.ncols() {
            return Err(Error::ShapeMismatch {
                context: "band image size".into(),
                expected: vec![y.ncols()],
                got: vec![image_shape.0, image_shape.1],
            });
        }
        Ok(Self {
            y,
            sigma,
            k,
            image_shape,
            power: PowerIteration::default(),
            spectral_evals: AtomicU64::new(0),
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn block_shapes(&self) -> [(usize, usize); 2] {
        [(self.y.nrows(), self.k), (self.k, self.y.ncols())]
    }

    /// `A`: `prox_+`; `S`: row-wise hard thresholding, `prox_+`, then unit-sum
    /// normalization of every map.
    pub fn default_chains(&self, l0_thresholds: Vec<f64>) -> Result<[ProxChain; 2]> {
        Ok([
            ProxChain::nonneg(),
            ProxChain::new(vec![
                ProxOperator::hard_threshold_rows(l0_thresholds)?,
                ProxOperator::NonNeg,
                ProxOperator::UnityRows,
            ]),
        ])
    }
}

impl Problem for MultiBandProblem {
    fn block_names(&self) -> &[&'static str] {
        &["A", "S"]
    }

    fn loss(&self, blocks: &[&Array2<f64>]) -> Result<f64> {
        let (a, s) = block_pair(blocks)?;
        multiband_loss(a, s, &self.y, &self.sigma)
    }

    fn gradient(&self, blocks: &[&Array2<f64>], index: usize) -> Result<Array2<f64>> {
        let (a, s) = block_pair(blocks)?;
        factor_shapes("multiband gradient", a, s, &self.y)?;
        let w = inverse_variances(&self.sigma).insert_axis(Axis(1));
        let r = (a.dot(s) - &self.y) * &w;
        match index {
            BLOCK_A => Ok(r.dot(&s.t())),
            BLOCK_S => Ok(a.t().dot(&r)),
            _ => Err(bad_index(index)),
        }
    }

    fn lipschitz(&self, blocks: &[&Array2<f64>], index: usize) -> Result<f64> {
        let (a, s) = block_pair(blocks)?;
        let l = match index {
            BLOCK_A => multiband_lipschitz_a(s, &self.sigma, &self.power),
            BLOCK_S => multiband_lipschitz_s(a, &self.sigma, &self.power),
            _ => return Err(bad_index(index)),
        };
        self.spectral_evals.fetch_add(1, Ordering::Relaxed);
        Ok(l)
    }

    fn spectral_evaluations(&self) -> u64 {
        self.spectral_evals.load(Ordering::Relaxed)
    }
}
