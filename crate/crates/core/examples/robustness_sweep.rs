//! Efficiency indices across a sweep of the diffusion parameter, run in
//! parallel through the batch driver. Artifacts land in `results/sweep`.
//!
//!     cargo run --release --example robustness_sweep

use obstacle_afem::estimator::EstimatorKind;
use obstacle_afem::run::{run, ProblemSource, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::new(
        ProblemSource::Named("example1".into()),
        vec![0.4, 0.2, 0.1, 0.05],
        "results/sweep",
    );
    cfg.estimators = vec![EstimatorKind::Eta, EstimatorKind::EtaNr];
    let report = run(&cfg)?;

    println!("{:>6} {:>8} {:>8} {:>10}", "eps", "est", "nodes", "index");
    for job in &report.jobs {
        match &job.result {
            Ok(s) => println!(
                "{:>6} {:>8} {:>8} {:>10.3}",
                job.eps,
                job.estimator.name(),
                s.nodes,
                s.efficiency.unwrap_or(f64::NAN)
            ),
            Err(e) => println!("{:>6} {:>8} failed: {e}", job.eps, job.estimator.name()),
        }
    }
    println!("robust eta keeps its index; the h-weighted variant drifts as eps shrinks");
    println!("tables in {}", cfg.out.display());
    std::process::exit(report.exit_code());
}
