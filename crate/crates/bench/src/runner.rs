use std::fs;
use std::time::Instant;

use adaprox::datagen::{init_astro, init_nmf, make_astro_scene, make_nmf_scene};
use adaprox::problems::{astro_step_sizes, relative_l0_thresholds, BLOCK_A, BLOCK_S};
use adaprox::{
    solve_with_observer, Mode, MixMfProblem, MultiBandProblem, NmfProblem, ParameterBlock, Problem, RunTrace,
    StepSchedule,
};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentSpec, ProblemKind};
use crate::report::{write_summaries, write_trace};
use crate::scene_io::Scene;
use crate::BenchError;

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: ProblemKind,
    pub method: String,
    pub alpha: f64,
    pub seed: u64,
    pub final_loss: f64,
    pub iterations: usize,
    pub subiters_a: f64,
    pub subiters_s: f64,
    pub runtime_s: f64,
    pub converged: bool,
    /// `*` when the run stopped at `max_iter`.
    pub marker: String,
    pub failed: bool,
    pub error: String,
    pub spectral_evals: u64,
    pub trace_file: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trace: RunTrace,
    /// Filled only when the run was asked to keep iterates.
    pub iterates: Vec<Vec<Array2<f64>>>,
}

/// A problem instance with its starting blocks.
pub struct Setup {
    pub problem: Box<dyn Problem>,
    pub blocks: Vec<ParameterBlock>,
}

impl std::fmt::Debug for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setup").field("blocks", &self.blocks).finish_non_exhaustive()
    }
}

pub fn generate_scene(problem: ProblemKind, seed: u64) -> Scene {
    match problem {
        ProblemKind::Nmf | ProblemKind::MixMf => Scene::Nmf(make_nmf_scene(seed)),
        ProblemKind::MultiBand => Scene::Astro(make_astro_scene(seed)),
    }
}

fn step_for(spec: &ExperimentSpec, alpha: f64) -> Result<StepSchedule, BenchError> {
    // PGM takes 1/L and never reads the schedule
    let alpha = if spec.mode == Mode::Pgm { 1.0 } else { alpha };
    Ok(StepSchedule::constant(alpha)?)
}

/// Builds the problem and its initial blocks from `scene`, drawing the
/// initialization from `seed`.
pub fn setup(spec: &ExperimentSpec, scene: &Scene, seed: u64) -> Result<Setup, BenchError> {
    match (spec.problem, scene) {
        (ProblemKind::Nmf | ProblemKind::MixMf, Scene::Nmf(s)) => {
            let (k, c, n) = (s.s_true.nrows(), s.y.nrows(), s.y.ncols());
            let (a0, s0) = init_nmf(seed, (c, k), (k, n));
            let (problem, [ca, cs]): (Box<dyn Problem>, _) = if spec.problem == ProblemKind::Nmf {
                let p = NmfProblem::new(s.y.clone(), k)?;
                let chains = p.default_chains();
                (Box::new(p), chains)
            } else {
                let p = MixMfProblem::new(s.y.clone(), k)?;
                let chains = p.default_chains();
                (Box::new(p), chains)
            };
            let blocks = vec![
                ParameterBlock::new("A", a0, step_for(spec, spec.alpha)?, ca)?,
                ParameterBlock::new("S", s0, step_for(spec, spec.alpha)?, cs)?,
            ];
            Ok(Setup { problem, blocks })
        }
        (ProblemKind::MultiBand, Scene::Astro(s)) => {
            let init = init_astro(s, seed);
            let p = MultiBandProblem::new(s.y.clone(), s.sigma.clone(), s.sources(), s.image_shape)?;
            let [ca, cs] = p.default_chains(relative_l0_thresholds(&init.s0, spec.lambda_l0))?;
            let (step_a, step_s) = match spec.mode {
                Mode::AdaProx => astro_step_sizes(&init.a0, spec.alpha, spec.alpha_s)?,
                Mode::Pgm => (step_for(spec, 1.0)?, step_for(spec, 1.0)?),
            };
            let blocks = vec![
                ParameterBlock::new("A", init.a0, step_a, ca)?,
                ParameterBlock::new("S", init.s0, step_s, cs)?,
            ];
            Ok(Setup {
                problem: Box::new(p),
                blocks,
            })
        }
        (problem, scene) => Err(BenchError::Usage(format!(
            "problem '{problem}' cannot run on a scene of kind '{}'",
            scene.kind()
        ))),
    }
}

/// File stem shared by the trace and curve files of one run.
pub fn run_stem(spec: &ExperimentSpec, seed: u64) -> String {
    format!("{}_{}_a{:?}_seed{}", spec.problem, spec.method(), spec.alpha, seed)
}

/// Generates the scene for `seed` and solves it. No files are written.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<RunOutcome, BenchError> {
    run_on_scene(spec, &generate_scene(spec.problem, seed), seed, false)
}

/// Solves `scene`; with `keep_iterates` every post-iteration value of every
/// block is returned as well.
pub fn run_on_scene(
    spec: &ExperimentSpec,
    scene: &Scene,
    seed: u64,
    keep_iterates: bool,
) -> Result<RunOutcome, BenchError> {
    spec.validate()?;
    let Setup { problem, mut blocks } = setup(spec, scene, seed)?;
    let cfg = spec.solver_config();
    let mut iterates = Vec::new();

    let start = Instant::now();
    let result = solve_with_observer(problem.as_ref(), &mut blocks, &cfg, spec.mode, |_, bs| {
        if keep_iterates {
            iterates.push(bs.iter().map(|b| b.values.clone()).collect());
        }
    });
    let runtime_s = start.elapsed().as_secs_f64();

    let (mut trace, error) = match result {
        Ok(trace) => (trace, None),
        Err(failure) => {
            log::error!("{} seed {seed}: {}", spec.method(), failure.error);
            (*failure.trace, Some(failure.error.to_string()))
        }
    };
    trace.metadata.seed = Some(seed);

    let subiters = match spec.mode {
        Mode::Pgm => vec![1.0; trace.blocks.len()],
        Mode::AdaProx => trace.mean_subiters(),
    };
    let converged = trace.converged();
    let summary = RunSummary {
        problem: spec.problem,
        method: spec.method(),
        alpha: spec.alpha,
        seed,
        final_loss: trace.final_loss(),
        iterations: trace.iterations(),
        subiters_a: subiters[BLOCK_A],
        subiters_s: subiters[BLOCK_S],
        runtime_s,
        converged,
        marker: if converged || error.is_some() { String::new() } else { "*".into() },
        failed: error.is_some(),
        error: error.unwrap_or_default(),
        spectral_evals: problem.spectral_evaluations(),
        trace_file: format!("{}.trace.{}", run_stem(spec, seed), spec.format.extension()),
    };
    Ok(RunOutcome {
        summary,
        trace,
        iterates,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summaries: Vec<RunSummary>,
    pub summary_file: std::path::PathBuf,
}

impl ExperimentReport {
    /// True when no run aborted on a numerical failure.
    pub fn all_ok(&self) -> bool {
        self.summaries.iter().all(|s| !s.failed)
    }
}

/// Runs every seed of `spec` on up to `spec.jobs` threads, writes one trace
/// file per seed and a summary table into `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, BenchError> {
    spec.validate()?;
    fs::create_dir_all(&spec.out).map_err(|e| BenchError::io(&spec.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| BenchError::Usage(format!("cannot start {} workers: {e}", spec.jobs)))?;

    let outcomes: Vec<Result<RunOutcome, BenchError>> =
        pool.install(|| spec.seeds.par_iter().map(|&seed| run_seed(spec, seed)).collect());

    let mut summaries = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let outcome = outcome?;
        write_trace(&outcome.trace, &spec.out.join(&outcome.summary.trace_file), spec.format)?;
        log::info!(
            "{} seed {}: loss {:.6} after {}{} iterations",
            outcome.summary.method,
            outcome.summary.seed,
            outcome.summary.final_loss,
            outcome.summary.iterations,
            outcome.summary.marker
        );
        summaries.push(outcome.summary);
    }
    let summary_file = spec.out.join(format!(
        "summary_{}_{}_a{:?}.{}",
        spec.problem,
        spec.method(),
        spec.alpha,
        spec.format.extension()
    ));
    write_summaries(&summaries, &summary_file)?;
    Ok(ExperimentReport {
        summaries,
        summary_file,
    })
}
