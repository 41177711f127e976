//! Splits the robust estimator into its seven parts on the strip
//! benchmark and compares it with the standard residual estimator.
//!
//!     cargo run --example estimator_breakdown -- [eps] [breakdown.csv]

use std::fs::File;

use obstacle_afem::adaptive::{solve_and_estimate, AdaptiveConfig};
use obstacle_afem::benchmarks::{energy_error, example1, ErrorQuadrature};
use obstacle_afem::estimator::NodeClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(Ok(0.1), |s| s.parse())?;

    let problem = example1(eps);
    let mesh = problem.initial_mesh();
    let step = solve_and_estimate(&mesh, &problem, &AdaptiveConfig::default(), None)?;
    let b = &step.breakdown;

    println!("eps = {eps}, {} elements", mesh.n_elements());
    for class in [NodeClass::NoContact, NodeClass::SemiContact, NodeClass::FullContact] {
        println!("  {:<5} contact nodes: {}", class.label(), b.count(class));
    }
    let names = ["interior residual", "edge jumps", "Neumann residual", "constraining force", "obstacle data", "obstacle pairing", "obstacle excess"];
    for (k, name) in names.iter().enumerate() {
        println!("  eta{} {:<20} {:.4e}", k + 1, name, b.totals.components[k]);
    }
    let t = &b.totals;
    println!("  eta {:.4e}   eta_std {:.4e}   eta_nr {:.4e}", t.eta, t.eta_std, t.eta_nr);
    println!("  osc_f {:.2e}   osc_neumann {:.2e}", t.osc_f, t.osc_pi);

    let exact = problem.canonical_exact().unwrap();
    let (err, _) = energy_error(&mesh, &step.solution.phi, &exact, eps, &ErrorQuadrature::default());
    println!("  energy error {err:.4e}, efficiency {:.3}", t.eta / err);

    if let Some(path) = args.get(2) {
        b.write_csv(File::create(path)?)?;
        println!("per-node breakdown written to {path}");
    }
    Ok(())
}
