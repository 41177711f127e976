//! Newest vertex bisection on the unit square: refine towards a corner a
//! few times, check conformity and print shape statistics.
//!
//!     cargo run --example mesh_refinement -- [steps] [out.json]

use obstacle_afem::mesh::{rectangle_two_triangles, BoundaryTag};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(Ok(8), |s| s.parse())?;

    use BoundaryTag::{Dirichlet as D, Neumann as N};
    let mut mesh = rectangle_two_triangles(0.0, 1.0, 0.0, 1.0, [D, N, N, D]).uniform_refine();
    let initial_angle = mesh.min_angle().to_degrees();
    println!("{:>4} {:>8} {:>8} {:>10} {:>10}", "step", "elements", "vertices", "min h", "min angle");

    for step in 0..steps {
        // Mark every element touching the lower left corner.
        let marked: Vec<usize> = (0..mesh.n_elements())
            .filter(|&e| mesh.element_coords(e).iter().any(|p| p[0].hypot(p[1]) < 1e-12))
            .collect();
        let (refined, prolongation) = mesh.bisect(&marked)?;
        // Nodal values of a linear function survive prolongation unchanged.
        let f = |p: [f64; 2]| 2.0 * p[0] - p[1];
        let carried = prolongation.apply(&mesh.vertices().iter().map(|&p| f(p)).collect::<Vec<_>>());
        let worst = carried.iter().zip(refined.vertices()).map(|(v, &p)| (v - f(p)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-14);

        mesh = refined;
        mesh.check_conformity()?;
        let hmin = (0..mesh.n_elements()).map(|e| mesh.element_diameter(e)).fold(f64::INFINITY, f64::min);
        println!(
            "{step:>4} {:>8} {:>8} {hmin:>10.2e} {:>9.2}°",
            mesh.n_elements(),
            mesh.n_vertices(),
            mesh.min_angle().to_degrees()
        );
    }
    println!("initial min angle {initial_angle:.2}°, area {:.15}", mesh.total_area());

    if let Some(path) = args.get(2) {
        std::fs::write(path, serde_json::to_string_pretty(&mesh.to_snapshot())?)?;
        println!("mesh written to {path}");
    }
    Ok(())
}
