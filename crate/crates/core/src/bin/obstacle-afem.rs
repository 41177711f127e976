use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use obstacle_afem::adaptive::MarkingMean;
use obstacle_afem::error::Error;
use obstacle_afem::estimator::EstimatorKind;
use obstacle_afem::run::{run, ProblemSource, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Estimator {
    Eta,
    EtaStd,
    EtaNr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mean {
    Plain,
    Squared,
}

/// Adaptive finite elements for the singularly perturbed obstacle problem.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// `example1`, `example2`, or a JSON problem descriptor.
    #[arg(long)]
    problem: String,
    /// Diffusion parameter; repeat for a sweep.
    #[arg(long, required = true, allow_negative_numbers = true)]
    eps: Vec<f64>,
    /// Estimator driving refinement; repeat to run several.
    #[arg(long, value_enum, default_values_t = [Estimator::Eta])]
    estimator: Vec<Estimator>,
    #[arg(long, default_value_t = 1.2)]
    marking_factor: f64,
    /// Mean-value threshold on indicators or on squared indicators.
    #[arg(long, value_enum, default_value_t = Mean::Plain)]
    marking_mean: Mean,
    #[arg(long, default_value_t = 20_000)]
    max_elements: usize,
    /// Override the problem's number of uniform pre-refinements.
    #[arg(long)]
    initial_refinements: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Run jobs one at a time in a fixed order.
    #[arg(long)]
    reference_mode: bool,
    /// Worker threads for independent jobs (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn config(args: &Args) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::new(ProblemSource::parse(&args.problem)?, args.eps.clone(), &args.out);
    let mut estimators = Vec::new();
    for e in &args.estimator {
        let kind = match e {
            Estimator::Eta => EstimatorKind::Eta,
            Estimator::EtaStd => EstimatorKind::EtaStd,
            Estimator::EtaNr => EstimatorKind::EtaNr,
        };
        if !estimators.contains(&kind) {
            estimators.push(kind);
        }
    }
    cfg.estimators = estimators;
    cfg.marking_factor = args.marking_factor;
    cfg.marking_mean = match args.marking_mean {
        Mean::Plain => MarkingMean::Plain,
        Mean::Squared => MarkingMean::Squared,
    };
    cfg.max_elements = args.max_elements;
    cfg.initial_refinements = args.initial_refinements;
    cfg.reference_mode = args.reference_mode;
    cfg.jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) | Err(e @ Error::Expression { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for job in &report.jobs {
        let label = format!("{} eps={} {}", job.problem, job.eps, job.estimator.name());
        match &job.result {
            Ok(s) => println!(
                "{label}: {} iterations, {} elements, estimate {:.4e}, efficiency {}",
                s.iterations,
                s.elements,
                s.estimate,
                s.efficiency.map_or("-".into(), |e| format!("{e:.3}"))
            ),
            Err(e) => println!("{label}: FAILED: {e}"),
        }
    }
    println!("results in {}", cfg.out.display());
    ExitCode::from(report.exit_code() as u8)
}
