//! Proximal gradient method (PGM) and AdaProx.
//!
//! Both engines update the blocks of a [`Problem`] alternately, in declared
//! order, each block seeing the freshly updated values of the blocks before
//! it. A run stops once every block satisfies the relative-change test
//! `|x_{t+1} - x_t| < tol |x_{t+1}|`, or after `max_iter` outer iterations.
//!
//! PGM takes the step `1/L` from the problem's Lipschitz constant, recomputed
//! for every block at every iteration. AdaProx takes the adaptive step
//! `x_hat = x - alpha_t * phi_t / psi_t` and then solves the proximal problem
//! in the metric `H = Diag(psi_t)` by inner PGM iterations that only call the
//! ordinary proximal operator:
//!
//! ```text
//! z_1     = x_hat
//! z_{k+1} = prox_{gamma r}( z_k - (psi / max psi) * (z_k - x_hat) ),  gamma = alpha_t / max psi
//! ```

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::block::ParameterBlock;
use crate::error::{check_shape, Error, Result};
use crate::linalg::{fro_norm, rel_change, rel_converged};
use crate::problems::Problem;
use crate::prox::ProxChain;
use crate::scheme::{Beta1Schedule, Scheme, SchemeConfig, SchemeState};
use crate::step::StepSize;

/// Lower clamp applied to `psi` before any division. Separate from the Adam
/// `eps`.
pub const PSI_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pgm,
    AdaProx,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pgm => "pgm",
            Mode::AdaProx => "adaprox",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(Mode::Pgm),
            "adaprox" => Ok(Mode::AdaProx),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}' (expected pgm or adaprox)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: SchemeConfig,
    pub max_iter: usize,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_subiter: usize,
}

impl SolverConfig {
    /// `max_iter = 1000`, `tol_outer = tol_inner = 1e-4`, `max_subiter = 100`.
    pub fn new(scheme: SchemeConfig) -> Self {
        Self {
            scheme,
            max_iter: 1000,
            tol_outer: 1e-4,
            tol_inner: 1e-4,
            max_subiter: 100,
        }
    }

    /// Sets both the outer and the inner tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_outer = tol;
        self.tol_inner = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.max_subiter == 0 {
            return Err(Error::InvalidConfig("max_subiter must be at least 1".into()));
        }
        for (name, tol) in [("tol_outer", self.tol_outer), ("tol_inner", self.tol_inner)] {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {tol}")));
            }
        }
        Ok(())
    }
}

/// One PGM step `prox_{r/L}(x - grad / L)`.
pub fn pgm_block_step(block: &ParameterBlock, grad: &Array2<f64>, lipschitz: f64) -> Result<Array2<f64>> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant of block '{}' must be positive, got {lipschitz}",
            block.name
        )));
    }
    check_shape(&format!("gradient of block '{}'", block.name), block.values.shape(), grad.shape())?;
    let step = 1.0 / lipschitz;
    let mut x = &block.values - &(grad * step);
    block.prox.apply_in_place(&mut x, step)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block: block.name.clone(),
            what: "PGM update".into(),
        });
    }
    Ok(x)
}

/// Result of the inner variable-metric proximal solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledProx {
    pub z: Array2<f64>,
    /// Number of proximal evaluations performed.
    pub subiters: usize,
    /// `false` when `max_subiter` was reached before the stopping test held.
    pub converged: bool,
}

/// Solves `argmin_z r(z) + 1/2 |z - x_hat|^2_H` with `H = Diag(psi / alpha)`
/// by PGM sub-iterations using only the ordinary prox of `chain`.
///
/// For a scalar `alpha` this is the metric `Diag(psi)` with step
/// `gamma = alpha / max(psi)`. A per-element `alpha` divides into the metric
/// element-wise. `psi` must be strictly positive.
pub fn scaled_prox_solve(
    x_hat: &Array2<f64>,
    psi: &Array2<f64>,
    alpha: &StepSize,
    chain: &ProxChain,
    tol_inner: f64,
    max_subiter: usize,
) -> Result<ScaledProx> {
    check_shape("scaled prox metric", x_hat.shape(), psi.shape())?;
    if let StepSize::PerElement(a) = alpha {
        check_shape("scaled prox step", x_hat.shape(), a.shape())?;
    }
    if max_subiter == 0 {
        return Err(Error::InvalidArgument("max_subiter must be at least 1".into()));
    }

    let mut metric = psi.clone();
    match alpha {
        StepSize::Scalar(a) => metric.mapv_inplace(|p| p / a),
        StepSize::PerElement(a) => Zip::from(&mut metric).and(a).for_each(|h, &a| *h /= a),
    }
    let h_max = metric.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scaled prox needs a positive finite metric, max(psi/alpha) = {h_max}"
        )));
    }
    let gamma = 1.0 / h_max;
    metric.mapv_inplace(|h| h * gamma);

    let mut z = x_hat.clone();
    let mut next = Array2::zeros(x_hat.raw_dim());
    for tau in 1..=max_subiter {
        Zip::from(&mut next)
            .and(&z)
            .and(x_hat)
            .and(&metric)
            .for_each(|n, &zi, &xi, &w| *n = zi - w * (zi - xi));
        chain.apply_in_place(&mut next, gamma)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: "<scaled prox>".into(),
                what: format!("sub-iterate {tau}"),
            });
        }
        let done = rel_converged(&next, &z, tol_inner);
        std::mem::swap(&mut z, &mut next);
        if done {
            return Ok(ScaledProx {
                z,
                subiters: tau,
                converged: true,
            });
        }
    }
    log::debug!("scaled prox hit the sub-iteration cap of {max_subiter}");
    Ok(ScaledProx {
        z,
        subiters: max_subiter,
        converged: false,
    })
}

/// One AdaProx update of `block` at outer iteration `t`: scheme update,
/// adaptive gradient step, scaled prox.
pub fn adaprox_block_step(
    block: &ParameterBlock,
    state: &mut SchemeState,
    grad: &Array2<f64>,
    cfg: &SolverConfig,
    t: u64,
) -> Result<ScaledProx> {
    check_shape(&format!("gradient of block '{}'", block.name), block.values.shape(), grad.shape())?;
    let (phi, mut psi) = state.update(grad, &cfg.scheme)?;
    psi.mapv_inplace(|p| p.max(PSI_FLOOR));

    let alpha = block.step.step_at(t);
    let mut x_hat = block.values.clone();
    match &alpha {
        StepSize::Scalar(a) => Zip::from(&mut x_hat)
            .and(&phi)
            .and(&psi)
            .for_each(|x, &f, &p| *x -= a * f / p),
        StepSize::PerElement(a) => Zip::from(&mut x_hat)
            .and(&phi)
            .and(&psi)
            .and(a)
            .for_each(|x, &f, &p, &a| *x -= a * f / p),
    }
    if x_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block: block.name.clone(),
            what: "adaptive gradient step".into(),
        });
    }
    scaled_prox_solve(&x_hat, &psi, &alpha, &block.prox, cfg.tol_inner, cfg.max_subiter).map_err(
        |e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite {
                block: block.name.clone(),
                what,
            },
            other => other,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Total loss after all blocks were updated.
    pub loss: f64,
    /// Proximal evaluations per block (always 1 for PGM).
    pub subiters: Vec<usize>,
    pub rel_change: Vec<f64>,
    /// Frobenius norm of every block after the update.
    pub block_norms: Vec<f64>,
    /// Wall-clock seconds since the start of the solve.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: Mode,
    /// `None` in PGM mode.
    pub scheme: Option<Scheme>,
    /// Base step size of every block (AdaProx only).
    pub alpha: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub p: f64,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_iter: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub blocks: Vec<String>,
    pub initial_loss: f64,
    pub records: Vec<IterationRecord>,
    /// `None` only in the partial trace of an aborted run.
    pub termination: Option<Termination>,
    pub metadata: RunMetadata,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn converged(&self) -> bool {
        self.termination == Some(Termination::Converged)
    }

    /// Mean sub-iteration count of every block over the run.
    pub fn mean_subiters(&self) -> Vec<f64> {
        if self.records.is_empty() {
            return vec![0.0; self.blocks.len()];
        }
        let n = self.records.len() as f64;
        (0..self.blocks.len())
            .map(|b| self.records.iter().map(|r| r.subiters[b] as f64).sum::<f64>() / n)
            .collect()
    }

    /// Wall-clock seconds of the whole solve.
    pub fn elapsed_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed_s)
    }
}

/// A run that stopped on a numerical failure. `trace` holds every iteration
/// completed before the failure; the blocks are left at their last good
/// values.
#[derive(Debug, Clone, ThisError)]
#[error("solve aborted after {} iterations: {error}", trace.records.len())]
pub struct SolveFailure {
    pub error: Error,
    pub trace: Box<RunTrace>,
}

pub fn solve(
    problem: &dyn Problem,
    blocks: &mut [ParameterBlock],
    cfg: &SolverConfig,
    mode: Mode,
) -> std::result::Result<RunTrace, SolveFailure> {
    solve_with_observer(problem, blocks, cfg, mode, |_, _| {})
}

/// Like [`solve`], calling `observer(iteration, blocks)` after every outer
/// iteration.
pub fn solve_with_observer<F>(
    problem: &dyn Problem,
    blocks: &mut [ParameterBlock],
    cfg: &SolverConfig,
    mode: Mode,
    mut observer: F,
) -> std::result::Result<RunTrace, SolveFailure>
where
    F: FnMut(usize, &[ParameterBlock]),
{
    let start = Instant::now();
    let beta1 = match cfg.scheme.beta1 {
        Beta1Schedule::Constant(b) => b,
        Beta1Schedule::Geometric { beta1, .. } => beta1,
    };
    let mut trace = RunTrace {
        blocks: blocks.iter().map(|b| b.name.clone()).collect(),
        initial_loss: f64::NAN,
        records: Vec::new(),
        termination: None,
        metadata: RunMetadata {
            mode,
            scheme: (mode == Mode::AdaProx).then_some(cfg.scheme.scheme),
            alpha: match mode {
                Mode::Pgm => Vec::new(),
                Mode::AdaProx => blocks.iter().map(|b| b.step.alpha()).collect(),
            },
            beta1,
            beta2: cfg.scheme.beta2,
            eps: cfg.scheme.eps,
            p: cfg.scheme.p,
            tol_outer: cfg.tol_outer,
            tol_inner: cfg.tol_inner,
            max_iter: cfg.max_iter,
            seed: None,
        },
    };
    macro_rules! bail {
        ($e:expr) => {
            return Err(SolveFailure { error: $e, trace: Box::new(trace) })
        };
    }

    if let Err(e) = cfg.validate() {
        bail!(e);
    }
    if blocks.len() != problem.block_names().len() {
        bail!(Error::InvalidArgument(format!(
            "problem expects {} blocks, got {}",
            problem.block_names().len(),
            blocks.len()
        )));
    }
    match loss_of(problem, blocks) {
        Ok(l) if l.is_finite() => trace.initial_loss = l,
        Ok(_) => bail!(Error::NonFinite {
            block: "<all>".into(),
            what: "initial loss".into()
        }),
        Err(e) => bail!(e),
    }

    let mut states: Vec<SchemeState> = blocks
        .iter()
        .map(|b| SchemeState::new(b.name.clone(), b.shape()))
        .collect();

    for iteration in 1..=cfg.max_iter {
        let previous: Vec<Array2<f64>> = blocks.iter().map(|b| b.values.clone()).collect();
        let mut subiters = Vec::with_capacity(blocks.len());

        for i in 0..blocks.len() {
            let step = block_update(problem, blocks, &mut states[i], i, cfg, mode, iteration as u64);
            match step {
                Ok((values, n)) => {
                    blocks[i].values = values;
                    subiters.push(n);
                }
                Err(e) => {
                    restore(blocks, previous);
                    bail!(e);
                }
            }
        }

        let loss = match loss_of(problem, blocks) {
            Ok(l) if l.is_finite() => l,
            Ok(_) => {
                restore(blocks, previous);
                bail!(Error::NonFinite {
                    block: "<all>".into(),
                    what: format!("loss at iteration {iteration}")
                });
            }
            Err(e) => {
                restore(blocks, previous);
                bail!(e);
            }
        };

        let rel: Vec<f64> = blocks
            .iter()
            .zip(&previous)
            .map(|(b, old)| rel_change(&b.values, old))
            .collect();
        let converged = blocks
            .iter()
            .zip(&previous)
            .all(|(b, old)| rel_converged(&b.values, old, cfg.tol_outer));

        trace.records.push(IterationRecord {
            iteration,
            loss,
            subiters,
            rel_change: rel,
            block_norms: blocks.iter().map(|b| fro_norm(&b.values)).collect(),
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        observer(iteration, blocks);

        if converged {
            trace.termination = Some(Termination::Converged);
            return Ok(trace);
        }
    }
    trace.termination = Some(Termination::MaxIterReached);
    Ok(trace)
}

fn loss_of(problem: &dyn Problem, blocks: &[ParameterBlock]) -> Result<f64> {
    let views: Vec<&Array2<f64>> = blocks.iter().map(|b| &b.values).collect();
    problem.loss(&views)
}

fn restore(blocks: &mut [ParameterBlock], previous: Vec<Array2<f64>>) {
    for (b, old) in blocks.iter_mut().zip(previous) {
        b.values = old;
    }
}

fn block_update(
    problem: &dyn Problem,
    blocks: &[ParameterBlock],
    state: &mut SchemeState,
    index: usize,
    cfg: &SolverConfig,
    mode: Mode,
    t: u64,
) -> Result<(Array2<f64>, usize)> {
    let views: Vec<&Array2<f64>> = blocks.iter().map(|b| &b.values).collect();
    let grad = problem.gradient(&views, index)?;
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block: blocks[index].name.clone(),
            what: "gradient".into(),
        });
    }
    match mode {
        Mode::Pgm => {
            let lipschitz = problem.lipschitz(&views, index)?;
            Ok((pgm_block_step(&blocks[index], &grad, lipschitz)?, 1))
        }
        Mode::AdaProx => {
            let out = adaprox_block_step(&blocks[index], state, &grad, cfg, t)?;
            Ok((out.z, out.subiters))
        }
    }
}
