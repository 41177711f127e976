//! Radial benchmark with a circular free boundary: compares where the
//! robust and the standard estimator put their elements.
//!
//!     cargo run --release --example adaptive_example2 -- [eps] [max elements]

use obstacle_afem::adaptive::{run_adaptive, AdaptiveConfig};
use obstacle_afem::benchmarks::example2;
use obstacle_afem::estimator::EstimatorKind;
use obstacle_afem::mesh::Mesh;

/// Mean element diameter with centroid radius in `[lo, hi]`.
fn mean_diameter(mesh: &Mesh, lo: f64, hi: f64) -> f64 {
    let hs: Vec<f64> = (0..mesh.n_elements())
        .filter(|&e| {
            let c = mesh.centroid(e);
            (lo..=hi).contains(&c[0].hypot(c[1]))
        })
        .map(|e| mesh.element_diameter(e))
        .collect();
    hs.iter().sum::<f64>() / hs.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map_or(Ok(0.01), |s| s.parse())?;
    let max_elements: usize = args.get(2).map_or(Ok(20_000), |s| s.parse())?;

    for estimator in [EstimatorKind::Eta, EstimatorKind::EtaStd] {
        let cfg = AdaptiveConfig {
            estimator,
            max_elements,
            ..Default::default()
        };
        let run = run_adaptive(&example2(eps), &cfg)?;
        let last = run.trace.last().unwrap();
        let core = mean_diameter(&run.mesh, 0.0, 0.8);
        let ring = mean_diameter(&run.mesh, 0.9, 1.1);
        println!("{} driven, eps = {eps}:", estimator.name());
        println!(
            "  {} iterations, {} elements, error {:.3e}, eta {:.3e}",
            run.trace.len(),
            last.elements,
            last.error_energy.unwrap(),
            last.eta
        );
        println!("  mean diameter: core {core:.3e}, free boundary {ring:.3e}, ratio {:.2}", core / ring);
        println!("  full-contact nodes {}, semi-contact nodes {}", last.full_contact, last.semi_contact);
    }
    Ok(())
}
