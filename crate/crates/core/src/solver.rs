//! Discrete obstacle problem `u ≤ g` solved by a primal–dual active set
//! iteration, and the nodal constraining force `⟨λ_m, φ_p⟩`.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_operator, P1Function, ProblemData, SparseOperator};
use crate::linalg::{solve_with_fixed, LINEAR_TOLERANCE};
use crate::mesh::Mesh;
use crate::quadrature::{EdgeRule, QuadratureRule};

/// Relative tolerance for feasibility and complementarity checks.
pub const KKT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ObstacleSystem {
    pub op: SparseOperator,
    pub load: Vec<f64>,
    /// Nodal upper obstacle `g_m`; may contain `+∞`.
    pub obstacle: Vec<f64>,
    pub dirichlet: Vec<bool>,
    /// Prescribed values at Dirichlet nodes (ignored elsewhere).
    pub dirichlet_values: Vec<f64>,
}

impl ObstacleSystem {
    pub fn new(
        op: SparseOperator,
        load: Vec<f64>,
        obstacle: Vec<f64>,
        dirichlet: Vec<bool>,
        dirichlet_values: Vec<f64>,
    ) -> Result<Self> {
        let n = op.n();
        if load.len() != n || obstacle.len() != n || dirichlet.len() != n || dirichlet_values.len() != n {
            return Err(Error::Inadmissible("system vectors do not match the operator size".into()));
        }
        let sys = ObstacleSystem {
            op,
            load,
            obstacle,
            dirichlet,
            dirichlet_values,
        };
        let tol = sys.feasibility_tolerance();
        for p in 0..n {
            if sys.dirichlet[p] && sys.dirichlet_values[p] > sys.obstacle[p] + tol {
                return Err(Error::Inadmissible(format!(
                    "Dirichlet value {} exceeds obstacle {} at node {p}",
                    sys.dirichlet_values[p], sys.obstacle[p]
                )));
            }
        }
        Ok(sys)
    }

    pub fn assemble(mesh: &Mesh, data: &ProblemData, quad: &QuadratureRule, edge_rule: &EdgeRule) -> Result<Self> {
        data.validate()?;
        let op = assemble_operator(mesh, data.eps);
        let load = assemble_load(mesh, data, quad, edge_rule);
        let obstacle = data.obstacle_nodal(mesh);
        let dirichlet = mesh.is_dirichlet();
        let dirichlet_values = data
            .dirichlet_nodal(mesh)
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v })
            .collect();
        ObstacleSystem::new(op, load, obstacle, dirichlet, dirichlet_values)
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn free(&self) -> Vec<bool> {
        self.dirichlet.iter().map(|d| !d).collect()
    }

    pub fn n_free(&self) -> usize {
        self.dirichlet.iter().filter(|d| !**d).count()
    }

    fn obstacle_scale(&self) -> f64 {
        self.obstacle
            .iter()
            .filter(|g| g.is_finite())
            .fold(0.0_f64, |a, g| a.max(g.abs()))
    }

    /// `τ_feas = 1e-9 (1 + ‖g_m‖_∞)` over the finite obstacle values.
    pub fn feasibility_tolerance(&self) -> f64 {
        KKT_TOLERANCE * (1.0 + self.obstacle_scale())
    }

    fn load_scale(&self) -> f64 {
        self.load.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
    }
}

/// `b − A φ` at free nodes, zero at Dirichlet nodes.
pub fn constraining_force(sys: &ObstacleSystem, phi: &P1Function) -> Vec<f64> {
    let aphi = sys.op.mul_vec(&phi.values);
    (0..sys.n())
        .map(|p| if sys.dirichlet[p] { 0.0 } else { sys.load[p] - aphi[p] })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdasConfig {
    /// Scaling of the primal part in the active-set test.
    pub c: f64,
    pub max_iter: usize,
    pub linear_tolerance: f64,
}

impl Default for PdasConfig {
    fn default() -> Self {
        PdasConfig {
            c: 1.0,
            max_iter: 200,
            linear_tolerance: LINEAR_TOLERANCE,
        }
    }
}

/// One row of the active-set diagnostic dump.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdasStep {
    pub iteration: usize,
    pub active: usize,
    pub changed: usize,
    pub linear_iterations: usize,
    pub linear_residual: f64,
    pub max_infeasibility: f64,
    pub min_active_multiplier: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct KktReport {
    /// `max_p (φ_m − g_m)⁺(p)`.
    pub feasibility: f64,
    /// `max_p |λ_p (g_m − φ_m)(p)|`, unscaled.
    pub complementarity: f64,
    /// `1 + ‖b‖_∞`, the scale for complementarity.
    pub complementarity_scale: f64,
    /// Smallest multiplier over contact nodes (`+∞` without contact).
    pub min_contact_multiplier: f64,
    pub feasibility_tolerance: f64,
    pub contact_nodes: usize,
}

impl KktReport {
    pub fn holds(&self) -> bool {
        self.feasibility <= self.feasibility_tolerance
            && self.complementarity <= KKT_TOLERANCE * self.complementarity_scale
            && self.min_contact_multiplier >= 0.0
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub phi: P1Function,
    /// `⟨λ_m, φ_p⟩` on active nodes, zero elsewhere.
    pub lambda: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub history: Vec<PdasStep>,
    pub kkt: KktReport,
}

pub fn kkt_report(sys: &ObstacleSystem, phi: &[f64], lambda: &[f64]) -> KktReport {
    let tol = sys.feasibility_tolerance();
    let mut report = KktReport {
        feasibility: 0.0,
        complementarity: 0.0,
        complementarity_scale: 1.0 + sys.load_scale(),
        min_contact_multiplier: f64::INFINITY,
        feasibility_tolerance: tol,
        contact_nodes: 0,
    };
    for p in 0..sys.n() {
        let g = sys.obstacle[p];
        if !g.is_finite() {
            continue;
        }
        report.feasibility = report.feasibility.max(phi[p] - g);
        if sys.dirichlet[p] {
            continue;
        }
        report.complementarity = report.complementarity.max((lambda[p] * (g - phi[p])).abs());
        if (phi[p] - g).abs() <= tol {
            report.contact_nodes += 1;
            report.min_contact_multiplier = report.min_contact_multiplier.min(lambda[p]);
        }
    }
    report
}

/// Primal–dual active set iteration. `warm_start` supplies nodal values
/// (e.g. a prolongated solution); otherwise the unconstrained solution is
/// used. Nodes where the start value reaches the obstacle form the initial
/// active set.
pub fn solve_pdas(sys: &ObstacleSystem, cfg: &PdasConfig, warm_start: Option<&[f64]>) -> Result<DiscreteSolution> {
    if !(cfg.c > 0.0) {
        return Err(Error::Config(format!("active-set scaling must be positive, got {}", cfg.c)));
    }
    let n = sys.n();
    let free = sys.free();
    let g = &sys.obstacle;
    let mut x: Vec<f64> = (0..n)
        .map(|p| if sys.dirichlet[p] { sys.dirichlet_values[p] } else { 0.0 })
        .collect();
    match warm_start {
        Some(w) => {
            assert_eq!(w.len(), n);
            for p in 0..n {
                if free[p] {
                    x[p] = w[p];
                }
            }
        }
        None => {
            solve_with_fixed(&sys.op, &free, &sys.load, &mut x, cfg.linear_tolerance)?;
        }
    }
    let mut active: Vec<bool> = (0..n).map(|p| free[p] && x[p] >= g[p]).collect();
    for p in 0..n {
        if free[p] {
            x[p] = x[p].min(g[p]);
        }
    }

    let tau = 1e-13 * (1.0 + sys.load_scale() + sys.obstacle_scale());
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut history = Vec::new();
    let mut lambda = vec![0.0; n];
    let mut iterations = 0;
    loop {
        if iterations >= cfg.max_iter {
            return Err(Error::ActiveSetNotConverged {
                max_iter: cfg.max_iter,
                cycle: false,
            });
        }
        seen.insert(active.clone());
        let inactive: Vec<bool> = (0..n).map(|p| free[p] && !active[p]).collect();
        for p in 0..n {
            if active[p] {
                x[p] = g[p];
            }
        }
        let stats = solve_with_fixed(&sys.op, &inactive, &sys.load, &mut x, cfg.linear_tolerance)?;
        let ax = sys.op.mul_vec(&x);
        for p in 0..n {
            lambda[p] = if active[p] { sys.load[p] - ax[p] } else { 0.0 };
        }
        let next: Vec<bool> = (0..n)
            .map(|p| free[p] && lambda[p] + cfg.c * (x[p] - g[p]) > tau)
            .collect();
        iterations += 1;
        let changed = (0..n).filter(|&p| next[p] != active[p]).count();
        history.push(PdasStep {
            iteration: iterations,
            active: active.iter().filter(|a| **a).count(),
            changed,
            linear_iterations: stats.iterations,
            linear_residual: stats.residual,
            max_infeasibility: (0..n)
                .filter(|&p| free[p] && g[p].is_finite())
                .fold(0.0_f64, |m, p| m.max(x[p] - g[p])),
            min_active_multiplier: (0..n).filter(|&p| active[p]).fold(f64::INFINITY, |m, p| m.min(lambda[p])),
        });
        if changed == 0 {
            break;
        }
        if seen.contains(&next) {
            return Err(Error::ActiveSetNotConverged {
                max_iter: cfg.max_iter,
                cycle: true,
            });
        }
        active = next;
    }

    let phi = P1Function::new(x);
    let kkt = kkt_report(sys, &phi.values, &lambda);
    Ok(DiscreteSolution {
        phi,
        lambda,
        active,
        iterations,
        history,
        kkt,
    })
}

/// Writes the per-iteration diagnostics as CSV.
pub fn write_history_csv<W: std::io::Write>(history: &[PdasStep], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for step in history {
        w.serialize(step)?;
    }
    w.flush()?;
    Ok(())
}
