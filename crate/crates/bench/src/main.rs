use std::path::PathBuf;
use std::process::ExitCode;

use adaprox::{Mode, Scheme};
use adaprox_bench::experiment::{ExperimentSpec, OutputFormat, ProblemKind};
use adaprox_bench::{compare_dir, generate_scene, run_experiment, save_scene, BenchError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaprox-bench", version, about = "Run and compare AdaProx / PGM factorization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration over a list of seeds.
    Run(RunArgs),
    /// Generate a scene and write it to a file.
    GenScene {
        #[arg(long)]
        problem: ProblemKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge the summaries in a run directory into one sorted table plus loss curves.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    problem: ProblemKind,
    #[arg(long, default_value = "adaprox")]
    mode: Mode,
    #[arg(long, default_value = "amsgrad")]
    scheme: Scheme,
    /// Step size; for multiband the step of A relative to each component's mean amplitude.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Step size of S for multiband.
    #[arg(long, default_value_t = 1e-5)]
    alpha_s: f64,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// Use beta1 = 0.5, beta2 = 0.8 unless given explicitly.
    #[arg(long)]
    relaxed_betas: bool,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// PAdam exponent [default: 0.125, or 0.45 for multiband].
    #[arg(long)]
    p: Option<f64>,
    /// l0 threshold relative to each component's peak in the initial S.
    #[arg(long, default_value_t = 1e-4)]
    lambda_l0: f64,
    /// Relative-change tolerance [default: 1e-4, or 1e-3 for multiband].
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

impl RunArgs {
    fn into_spec(self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(self.problem, self.mode)
            .with_scheme(self.scheme)
            .with_alpha(self.alpha)
            .with_seeds(self.seed)
            .with_out(self.out);
        if self.relaxed_betas {
            spec = spec.relaxed_betas();
        }
        spec.beta1 = self.beta1.unwrap_or(spec.beta1);
        spec.beta2 = self.beta2.unwrap_or(spec.beta2);
        spec.p = self.p.unwrap_or(spec.p);
        spec.tol = self.tol.unwrap_or(spec.tol);
        spec.alpha_s = self.alpha_s;
        spec.eps = self.eps;
        spec.lambda_l0 = self.lambda_l0;
        spec.max_iter = self.max_iter;
        spec.jobs = self.jobs;
        spec.format = self.format;
        spec
    }
}

fn run(cli: Cli) -> Result<bool, BenchError> {
    match cli.command {
        Command::Run(args) => {
            let report = run_experiment(&args.into_spec())?;
            for s in &report.summaries {
                let status = if s.failed { "FAILED" } else if s.converged { "converged" } else { "max_iter" };
                println!(
                    "{} seed {}: loss {:.6} iterations {}{} subiters ({:.2},{:.2}) {:.3}s {status}",
                    s.method, s.seed, s.final_loss, s.iterations, s.marker, s.subiters_a, s.subiters_s, s.runtime_s
                );
            }
            println!("summary written to {}", report.summary_file.display());
            Ok(report.all_ok())
        }
        Command::GenScene { problem, seed, out } => {
            save_scene(&generate_scene(problem, seed), &out)?;
            println!("scene written to {}", out.display());
            Ok(true)
        }
        Command::Compare { input, out } => {
            let cmp = compare_dir(&input, &out)?;
            println!("table written to {} ({} curves)", cmp.table.display(), cmp.curves.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
