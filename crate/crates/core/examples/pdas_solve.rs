//! One obstacle solve with the primal-dual active set method on a fixed
//! mesh of the radial benchmark, with the iteration log and the KKT check.
//!
//!     cargo run --example pdas_solve -- [eps] [uniform refinements]

use obstacle_afem::benchmarks::example2;
use obstacle_afem::quadrature::{EdgeRule, QuadratureRule};
use obstacle_afem::solver::{solve_pdas, ObstacleSystem, PdasConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(Ok(0.05), |s| s.parse())?;
    let levels: usize = args.get(2).map_or(Ok(5), |s| s.parse())?;

    let problem = example2(eps);
    let mut mesh = problem.mesh.clone();
    for _ in 0..levels {
        mesh = mesh.uniform_refine();
    }
    let sys = ObstacleSystem::assemble(&mesh, &problem.data, &QuadratureRule::degree5(), &EdgeRule::gauss(4))?;
    println!("{} elements, {} free nodes, {} nonzeros", mesh.n_elements(), sys.n_free(), sys.op.nnz());

    let sol = solve_pdas(&sys, &PdasConfig::default(), None)?;
    println!("{:>4} {:>7} {:>8} {:>6} {:>10}", "it", "active", "changed", "cg", "residual");
    for s in &sol.history {
        println!(
            "{:>4} {:>7} {:>8} {:>6} {:>10.2e}",
            s.iteration, s.active, s.changed, s.linear_iterations, s.linear_residual
        );
    }

    let k = sol.kkt;
    println!(
        "feasibility {:.1e}, complementarity {:.1e}, min multiplier on contact {:.2e} -> {}",
        k.feasibility,
        k.complementarity,
        k.min_contact_multiplier,
        if k.holds() { "KKT holds" } else { "KKT VIOLATED" }
    );

    // The free boundary sits on the unit circle.
    let contact_radius = mesh
        .vertices()
        .iter()
        .zip(&sol.active)
        .filter(|(_, a)| **a)
        .map(|(p, _)| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    println!("outermost contact node at r = {contact_radius:.4}");
    Ok(())
}
