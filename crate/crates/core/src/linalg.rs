//! Small dense helpers: norms, relative change, power iteration.

use ndarray::{Array1, Array2};

pub fn fro_norm(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|new - old| / |new|` in the Frobenius norm. A zero `new` gives `0` when
/// nothing moved and `inf` otherwise.
pub fn rel_change(new: &Array2<f64>, old: &Array2<f64>) -> f64 {
    let diff = new
        .iter()
        .zip(old.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom = fro_norm(new);
    if denom == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / denom
    }
}

/// The relative-change stopping test `|new - old| < tol |new|`; an all-zero
/// `new` counts as converged only if it did not move.
pub fn rel_converged(new: &Array2<f64>, old: &Array2<f64>, tol: f64) -> bool {
    let diff = new
        .iter()
        .zip(old.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom = fro_norm(new);
    if denom == 0.0 {
        diff == 0.0
    } else {
        diff < tol * denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PowerIteration {
    /// Largest eigenvalue of `M^T M` (equivalently of `M M^T`), i.e. the
    /// squared largest singular value of `m`.
    ///
    /// Matrix-free: each iteration applies `m` and `m^T` once. Starts from the
    /// normalized all-ones vector. Without convergence after `max_iter`
    /// iterations the squared Frobenius norm, an upper bound, is returned.
    pub fn gram_norm(&self, m: &Array2<f64>) -> SpectralEstimate {
        let (rows, cols) = m.dim();
        if rows == 0 || cols == 0 {
            return SpectralEstimate {
                value: 0.0,
                iterations: 0,
                converged: true,
            };
        }
        let mt = m.t();
        // iterate in the smaller space
        let transpose = rows < cols;
        let dim = if transpose { rows } else { cols };
        let mut v = Array1::from_elem(dim, 1.0 / (dim as f64).sqrt());
        let mut lambda = 0.0;
        for it in 1..=self.max_iter {
            let w = if transpose {
                m.dot(&mt.dot(&v))
            } else {
                mt.dot(&m.dot(&v))
            };
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                return SpectralEstimate {
                    value: 0.0,
                    iterations: it,
                    converged: true,
                };
            }
            let prev = lambda;
            lambda = norm;
            v = w / norm;
            if (lambda - prev).abs() < self.tol * lambda {
                return SpectralEstimate {
                    value: lambda,
                    iterations: it,
                    converged: true,
                };
            }
        }
        let fro2 = m.iter().map(|x| x * x).sum::<f64>();
        log::warn!(
            "power iteration did not converge in {} iterations; using Frobenius bound {fro2:e}",
            self.max_iter
        );
        SpectralEstimate {
            value: fro2,
            iterations: self.max_iter,
            converged: false,
        }
    }
}
