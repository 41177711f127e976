mod common;

use nalgebra::DMatrix;

use common::{max_abs_diff, scrambled};
use obstacle_afem::adaptive::{run_adaptive, run_adaptive_observed, solve_and_estimate, AdaptiveConfig};
use obstacle_afem::benchmarks::{energy_error, example1, example2, ErrorQuadrature, ExactSolution, ProblemDefinition};
use obstacle_afem::estimator::{EstimatorKind, NodeClass};
use obstacle_afem::fem::{assemble_load, assemble_operator, basis_integrals, field, P1Function};
use obstacle_afem::mesh::{crossed_grid, BoundaryTag, Point};
use obstacle_afem::quadrature::{EdgeRule, QuadratureRule};
use obstacle_afem::solver::{solve_pdas, ObstacleSystem, PdasConfig};

fn short(estimator: EstimatorKind, max_elements: usize) -> AdaptiveConfig {
    AdaptiveConfig {
        estimator,
        max_elements,
        ..Default::default()
    }
}

#[test]
fn discrete_obstacle_has_no_obstacle_terms() {
    // g ≡ 0 and an affine obstacle are both P1, so g = g_m.
    let mut tilted = example2(0.05);
    tilted.data = tilted.data.clone().with_obstacle(field(|p| 0.02 + 0.01 * p[0] - 0.005 * p[1]));
    tilted.exact = None;
    for def in [example2(0.2), example2(0.01), tilted] {
        let mut runs = 0;
        let mut contact = 0;
        run_adaptive_observed(&def, &short(EstimatorKind::Eta, 6000), |_, step, row| {
            runs += 1;
            contact += row.semi_contact + row.full_contact;
            for e in &step.breakdown.eta {
                assert_eq!(&e[4..], &[0.0; 3]);
            }
        })
        .unwrap();
        assert!(runs > 1 && contact > 0);
    }
}

#[test]
fn localization_holds_on_every_iteration() {
    for def in [example1(0.1), example2(0.05)] {
        run_adaptive_observed(&def, &short(EstimatorKind::Eta, 8000), |_, step, _| {
            let b = &step.breakdown;
            for p in 0..b.classes.len() {
                if b.eta[p][3] > 0.0 {
                    assert_eq!(b.classes[p], NodeClass::SemiContact);
                }
                if b.classes[p] == NodeClass::FullContact {
                    assert_eq!(&b.eta[p][..3], &[0.0; 3]);
                }
            }
        })
        .unwrap();
    }
}

#[test]
fn restricted_standard_part_never_exceeds_eta() {
    for (def, kind) in [
        (example1(0.2), EstimatorKind::Eta),
        (example1(0.05), EstimatorKind::EtaStd),
        (example2(0.01), EstimatorKind::EtaNr),
    ] {
        let run = run_adaptive(&def, &short(kind, 6000)).unwrap();
        for row in &run.trace {
            assert!(row.eta_123 <= row.eta * (1.0 + 1e-14));
            assert!(row.eta_rss <= row.eta * (1.0 + 1e-14));
            let sum: f64 = row.eta_components.iter().sum();
            assert!((sum - row.eta).abs() <= 1e-12 * row.eta);
        }
    }
}

fn scaled(def: &ProblemDefinition, t: f64) -> ProblemDefinition {
    let mut out = def.clone();
    let d = def.data.clone();
    let (f, n, g, u) = (d.f.clone(), d.neumann.clone(), d.obstacle.clone(), d.dirichlet.clone());
    out.data = d
        .with_neumann(field(move |p| t * n(p)))
        .with_obstacle(field(move |p| t * g(p)))
        .with_dirichlet(field(move |p| t * u(p)));
    out.data.f = field(move |p| t * f(p));
    out.exact = None;
    out
}

#[test]
fn estimator_is_positively_homogeneous_in_the_data() {
    let cfg = short(EstimatorKind::Eta, 1);
    for def in [example1(0.1), example2(0.05)] {
        let mesh = def.initial_mesh();
        let base = solve_and_estimate(&mesh, &def, &cfg, None).unwrap();
        for t in [0.25, 3.0] {
            let s = solve_and_estimate(&mesh, &scaled(&def, t), &cfg, None).unwrap();
            assert_eq!(s.breakdown.classes, base.breakdown.classes);
            let phi: Vec<f64> = base.solution.phi.values.iter().map(|v| t * v).collect();
            let lam: Vec<f64> = base.solution.lambda.iter().map(|v| t * v).collect();
            let scale = 1e-10 * t * (1.0 + base.solution.phi.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
            assert!(max_abs_diff(&s.solution.phi.values, &phi) <= scale);
            assert!(max_abs_diff(&s.solution.lambda, &lam) <= 1e-9 * t);
            for k in 0..7 {
                let top = base.breakdown.eta.iter().fold(0.0_f64, |m, e| m.max(e[k]));
                for p in 0..mesh.n_vertices() {
                    let (a, b) = (s.breakdown.eta[p][k], t * base.breakdown.eta[p][k]);
                    assert!((a - b).abs() <= 1e-8 * t * top.max(1e-30), "k={} p={p}: {a} vs {b}", k + 1);
                }
            }
            assert!((s.breakdown.totals.eta - t * base.breakdown.totals.eta).abs() <= 1e-9 * t * base.breakdown.totals.eta);
        }
    }
}

#[test]
fn warm_and_cold_starts_agree() {
    let def = example1(0.05);
    let cfg = short(EstimatorKind::Eta, 4000);
    let run = run_adaptive(&def, &cfg).unwrap();
    let sys = ObstacleSystem::assemble(&run.mesh, &def.data, &cfg.load_quadrature, &cfg.load_edge_rule).unwrap();
    let cold = solve_pdas(&sys, &PdasConfig::default(), None).unwrap();
    assert!(cold.kkt.holds());
    assert_eq!(cold.active, run.solution.active);
    let scale = 1.0 + cold.phi.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(max_abs_diff(&cold.phi.values, &run.solution.phi.values) <= 1e-9 * scale);
}

#[test]
fn negated_examples_map_back_to_lower_obstacle_solutions() {
    for def in [example1(0.2), example2(0.1)] {
        let run = run_adaptive(&def, &short(EstimatorKind::Eta, 3000)).unwrap();
        let s = def.sign();
        assert_eq!(s, -1.0);
        let g = def.data.obstacle_nodal(&run.mesh);
        for p in 0..run.mesh.n_vertices() {
            let u = s * run.solution.phi.values[p];
            let psi = s * g[p];
            assert!(u >= psi - 1e-9, "lower obstacle violated at {p}");
            // Constraining force of the lower-obstacle problem is ≤ 0.
            assert!(s * run.solution.lambda[p] <= 1e-12);
        }
        let exact = def.canonical_exact().unwrap();
        let v = run.mesh.vertices()[0];
        assert_eq!(exact.value(v), -def.exact.as_ref().unwrap().value(v));
    }
}

#[test]
fn operator_is_symmetric_positive_definite_on_free_nodes() {
    for def in [example1(0.05), example2(0.01)] {
        let (mesh, _) = {
            let m = def.initial_mesh();
            let marked: Vec<usize> = (0..m.n_elements()).step_by(7).collect();
            m.bisect(&marked).unwrap()
        };
        let op = assemble_operator(&mesh, def.eps);
        assert!(op.asymmetry() <= 1e-15);
        let free: Vec<usize> = mesh.is_dirichlet().iter().enumerate().filter(|(_, d)| !**d).map(|(i, _)| i).collect();
        let k = DMatrix::from_fn(free.len(), free.len(), |i, j| op.get(free[i], free[j]));
        assert!(k.clone().cholesky().is_some());
        assert!((k.clone() - k.transpose()).amax() == 0.0);
    }
}

#[test]
fn mass_rows_sum_to_basis_integrals() {
    let mesh = crossed_grid(0.0, 2.0, -1.0, 0.5, 5, 3, BoundaryTag::Neumann).uniform_refine();
    let mass = assemble_operator(&mesh, 0.0);
    let rows = mass.mul_vec(&vec![1.0; mesh.n_vertices()]);
    let exact = basis_integrals(&mesh);
    assert!(max_abs_diff(&rows, &exact) <= 1e-15);
    let total: f64 = exact.iter().sum();
    assert!((total - 3.0).abs() <= 1e-13);
}

#[test]
fn polynomial_loads_are_integrated_exactly() {
    // ∫ x²y² and ∫ x³y² over [0,2]×[0,1].
    let mesh = crossed_grid(0.0, 2.0, 0.0, 1.0, 3, 2, BoundaryTag::Neumann).uniform_refine();
    let data = obstacle_afem::fem::ProblemData::new(1.0, field(|p| p[0] * p[0] * p[1] * p[1]));
    let b = assemble_load(&mesh, &data, &QuadratureRule::degree5(), &EdgeRule::gauss(4));
    let total: f64 = b.iter().sum();
    assert!((total - 8.0 / 9.0).abs() <= 1e-13);
    let moment: f64 = b.iter().zip(mesh.vertices()).map(|(v, p)| v * p[0]).sum();
    assert!((moment - 4.0 / 3.0).abs() <= 1e-13);

    // Neumann flux g_N = y on the right edge x = 2: ∫ y dy = 1/2.
    let data = obstacle_afem::fem::ProblemData::new(1.0, field(|_| 0.0)).with_neumann(field(|p| if p[0] > 1.999 { p[1] } else { 0.0 }));
    let b = assemble_load(&mesh, &data, &QuadratureRule::degree5(), &EdgeRule::gauss(4));
    assert!((b.iter().sum::<f64>() - 0.5).abs() <= 1e-13);
}

struct Affine;

impl ExactSolution for Affine {
    fn value(&self, p: Point) -> f64 {
        0.3 - 1.2 * p[0] + 0.7 * p[1]
    }
    fn gradient(&self, _: Point) -> [f64; 2] {
        [-1.2, 0.7]
    }
    fn crosses_kink(&self, _: &[Point; 3]) -> bool {
        false
    }
}

#[test]
fn energy_error_vanishes_only_for_the_interpolant() {
    let mesh = crossed_grid(-1.0, 1.0, -1.0, 1.0, 4, 4, BoundaryTag::Dirichlet);
    let phi = P1Function::interpolate(&mesh, |p| Affine.value(p));
    let (e, h1) = energy_error(&mesh, &phi, &Affine, 0.1, &ErrorQuadrature::default());
    assert!(e <= 1e-14 && h1 <= 1e-14);
    let mut bumped = phi.clone();
    bumped.values[12] += 1e-3;
    let (e, _) = energy_error(&mesh, &bumped, &Affine, 0.1, &ErrorQuadrature::default());
    assert!(e > 1e-5);
    let noise = P1Function::new(scrambled(mesh.n_vertices(), 3));
    assert!(energy_error(&mesh, &noise, &Affine, 0.1, &ErrorQuadrature::default()).0 > 0.1);
}

#[test]
fn kink_subdivision_changes_errors_by_less_than_one_percent() {
    for def in [example1(0.4), example1(0.05), example2(0.1)] {
        let run = run_adaptive(&def, &short(EstimatorKind::Eta, 3000)).unwrap();
        let exact = def.canonical_exact().unwrap();
        let at = |levels: usize| {
            let q = ErrorQuadrature {
                rule: QuadratureRule::degree5(),
                kink_levels: levels,
            };
            energy_error(&run.mesh, &run.solution.phi, &exact, def.eps, &q).0
        };
        let (default, doubled) = (at(1), at(4));
        assert!((default - doubled).abs() <= 0.01 * doubled, "{}: {default} vs {doubled}", def.name);
    }
}

#[test]
fn pdas_matches_enumeration_on_random_small_problems() {
    let grid = crossed_grid(0.0, 1.0, 0.0, 1.0, 3, 3, BoundaryTag::Dirichlet);
    for seed in 0..40u64 {
        let c: [f64; 6] = scrambled(6, seed).try_into().unwrap();
        let mut def = example2(0.05 + c[0].abs());
        def.data = def
            .data
            .clone()
            .with_obstacle(field(move |p| 0.1 * c[1] + 0.2 * c[2] * p[0] * p[1]))
            .with_dirichlet(field(move |p| -0.3 - c[3].abs() * p[0]));
        def.data.f = field(move |p| 2.0 * c[4] + 3.0 * c[5] * (4.0 * p[0] - 2.0 * p[1]).sin());
        let sys = ObstacleSystem::assemble(&grid, &def.data, &QuadratureRule::degree5(), &EdgeRule::gauss(4)).unwrap();
        let pdas = solve_pdas(&sys, &PdasConfig::default(), None).unwrap();
        let oracle = common::enumerate_active_sets(&sys, 1e-12);
        assert!(max_abs_diff(&pdas.phi.values, &oracle.phi) <= 1e-10, "seed {seed}");
        assert!(max_abs_diff(&pdas.lambda, &oracle.lambda) <= 1e-10, "seed {seed}");
    }
}
