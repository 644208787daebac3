use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use adaprox::{Mode, Scheme};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Nmf,
    MixMf,
    MultiBand,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Nmf => "nmf",
            ProblemKind::MixMf => "mixmf",
            ProblemKind::MultiBand => "multiband",
        }
    }

    pub fn is_astro(self) -> bool {
        self == ProblemKind::MultiBand
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "nmf" => Ok(ProblemKind::Nmf),
            "mixmf" => Ok(ProblemKind::MixMf),
            "multiband" | "astro" => Ok(ProblemKind::MultiBand),
            other => Err(BenchError::Usage(format!(
                "unknown problem '{other}' (expected nmf, mixmf or multiband)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(BenchError::Usage(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// One cell of the run matrix, swept over `seeds`.
///
/// For the multi-band problem `alpha` is the relative step of `A` (a fraction
/// of each component's mean amplitude) and `alpha_s` the absolute step of
/// `S`; elsewhere `alpha` is the step of both blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub mode: Mode,
    /// Ignored in PGM mode.
    pub scheme: Scheme,
    pub alpha: f64,
    pub alpha_s: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Only read by PAdam.
    pub p: f64,
    /// Hard-threshold level relative to each component's peak in `S_init`.
    pub lambda_l0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

impl ExperimentSpec {
    /// Defaults for `problem`: AMSGrad, `alpha = 0.1`, betas 0.9/0.999,
    /// `eps = 1e-8`, `p = 0.125` (0.45 for multiband), `tol = 1e-4` (1e-3 for
    /// multiband), 1000 iterations, seed 0.
    pub fn new(problem: ProblemKind, mode: Mode) -> Self {
        let astro = problem.is_astro();
        Self {
            problem,
            mode,
            scheme: Scheme::AmsGrad,
            alpha: 0.1,
            alpha_s: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            p: if astro { 0.45 } else { 0.125 },
            lambda_l0: 1e-4,
            tol: if astro { 1e-3 } else { 1e-4 },
            max_iter: 1000,
            seeds: vec![0],
            jobs: 1,
            out: PathBuf::from("runs"),
            format: OutputFormat::Csv,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seeds(mut self, seeds: impl Into<Vec<u64>>) -> Self {
        self.seeds = seeds.into();
        self
    }

    pub fn with_out(mut self, out: impl Into<PathBuf>) -> Self {
        self.out = out.into();
        self
    }

    /// Betas of 0.5 and 0.8, a compromise that tames the oscillations of the
    /// defaults on the factorization problems.
    pub fn relaxed_betas(mut self) -> Self {
        self.beta1 = 0.5;
        self.beta2 = 0.8;
        self
    }

    /// Label used in file names and tables: `pgm` or `adaprox-<scheme>`.
    pub fn method(&self) -> String {
        match self.mode {
            Mode::Pgm => "pgm".to_string(),
            Mode::AdaProx => format!("adaprox-{}", self.scheme),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(BenchError::Usage(format!("--{name} must be positive, got {v}")))
            }
        };
        if self.seeds.is_empty() {
            return Err(BenchError::Usage("at least one seed is required".into()));
        }
        if self.max_iter == 0 {
            return Err(BenchError::Usage("--max-iter must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(BenchError::Usage("--jobs must be at least 1".into()));
        }
        positive("tol", self.tol)?;
        positive("lambda-l0", self.lambda_l0)?;
        if self.mode == Mode::AdaProx {
            positive("alpha", self.alpha)?;
            if self.problem.is_astro() {
                positive("alpha-s", self.alpha_s)?;
            }
            self.scheme_config().validate().map_err(|e| BenchError::Usage(e.to_string()))?;
        }
        Ok(())
    }

    pub fn scheme_config(&self) -> adaprox::SchemeConfig {
        adaprox::SchemeConfig::new(self.scheme)
            .with_betas(self.beta1, self.beta2)
            .with_eps(self.eps)
            .with_p(self.p)
    }

    pub fn solver_config(&self) -> adaprox::SolverConfig {
        adaprox::SolverConfig::new(self.scheme_config())
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn astro_defaults_differ() {
        let nmf = ExperimentSpec::new(ProblemKind::Nmf, Mode::AdaProx);
        let astro = ExperimentSpec::new(ProblemKind::MultiBand, Mode::AdaProx);
        assert_eq!((nmf.p, nmf.tol), (0.125, 1e-4));
        assert_eq!((astro.p, astro.tol), (0.45, 1e-3));
    }

    #[test]
    fn empty_seeds_rejected() {
        let spec = ExperimentSpec::new(ProblemKind::Nmf, Mode::Pgm).with_seeds(vec![]);
        assert!(matches!(spec.validate(), Err(BenchError::Usage(_))));
    }

    #[test]
    fn scheme_ignored_in_pgm_mode() {
        let mut spec = ExperimentSpec::new(ProblemKind::Nmf, Mode::Pgm).with_scheme(Scheme::PAdam);
        spec.p = 7.0;
        spec.alpha = -1.0;
        assert!(spec.validate().is_ok());
        assert_eq!(spec.method(), "pgm");
    }

    #[test]
    fn parse_names() {
        assert_eq!("MixMF".parse::<ProblemKind>().unwrap(), ProblemKind::MixMf);
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("tensor".parse::<ProblemKind>().is_err());
    }
}
