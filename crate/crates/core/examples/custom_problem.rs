//! A problem given as a JSON descriptor: an L-shaped membrane pressed
//! against a sloped obstacle, mixed boundary conditions, no exact solution.
//!
//!     cargo run --release --example custom_problem -- [descriptor.json]

use obstacle_afem::adaptive::{run_adaptive, AdaptiveConfig};
use obstacle_afem::expr::ProblemDescriptor;

const L_SHAPE: &str = r#"{
    "name": "l_shape",
    "eps": 0.05,
    "domain": {
        "polygon": [[-1,-1],[1,-1],[1,0.2],[0.2,0.2],[0.2,1],[-1,1]],
        "tags": ["D", "N", "N", "N", "N", "D"]
    },
    "initial_refinements": 3,
    "f": [
        {"when": "x < 0", "value": "2"},
        {"value": "1 + sin(pi*y)"}
    ],
    "neumann": 0,
    "obstacle": "0.4 + 0.3*x",
    "dirichlet": 0
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let descriptor = match std::env::args().nth(1) {
        Some(path) => ProblemDescriptor::load(path.as_ref())?,
        None => ProblemDescriptor::from_json(L_SHAPE)?,
    };
    let problem = descriptor.build(None)?;
    let cfg = AdaptiveConfig {
        max_elements: 8000,
        ..Default::default()
    };
    let run = run_adaptive(&problem, &cfg)?;
    for r in &run.trace {
        println!(
            "it {:>2}: {:>6} elements, eta {:.4e} (eta4..7: {:.2e}), contact nodes {}",
            r.iteration,
            r.elements,
            r.eta,
            r.eta_components[3..].iter().sum::<f64>(),
            r.semi_contact + r.full_contact
        );
    }
    Ok(())
}
