//! Adaptive loop on the strip benchmark with boundary layers forced by the
//! obstacle. Prints the trace and the convergence rate.
//!
//!     cargo run --release --example adaptive_example1 -- [eps] [eta|eta_std|eta_nr] [max elements]

use obstacle_afem::adaptive::{run_adaptive, AdaptiveConfig};
use obstacle_afem::benchmarks::{eoc_fit, example1};
use obstacle_afem::estimator::EstimatorKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(Ok(0.08), |s| s.parse())?;
    let estimator = match args.get(2) {
        Some(s) => EstimatorKind::parse(s).ok_or("estimator must be eta, eta_std or eta_nr")?,
        None => EstimatorKind::Eta,
    };
    let max_elements: usize = args.get(3).map_or(Ok(20_000), |s| s.parse())?;

    let cfg = AdaptiveConfig {
        estimator,
        max_elements,
        ..Default::default()
    };
    let run = run_adaptive(&example1(eps), &cfg)?;

    println!(
        "{:>3} {:>7} {:>6} {:>10} {:>10} {:>7} {:>5} {:>5} {:>5}",
        "it", "elems", "dofs", "eta", "error", "eff", "sC", "fC", "pdas"
    );
    for r in &run.trace {
        println!(
            "{:>3} {:>7} {:>6} {:>10.4e} {:>10.4e} {:>7.3} {:>5} {:>5} {:>5}",
            r.iteration,
            r.elements,
            r.dofs,
            r.eta,
            r.error_energy.unwrap(),
            r.efficiency_eta.unwrap(),
            r.semi_contact,
            r.full_contact,
            r.pdas_iterations
        );
    }
    let points: Vec<(usize, f64)> = run.trace.iter().map(|r| (r.dofs, r.error_energy.unwrap())).collect();
    if let Some(rate) = eoc_fit(&points[points.len().saturating_sub(5)..]) {
        println!("EOC over the last iterations: {rate:.3} (optimal 0.5)");
    }
    Ok(())
}
