//! Solve → estimate → mark → refine loop.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{energy_error, ErrorQuadrature, ExactSolution, ProblemDefinition};
use crate::error::{Error, Result};
use crate::estimator::{element_indicators, estimate, EstimatorBreakdown, EstimatorConfig, EstimatorInput, EstimatorKind, NodeClass};
use crate::mesh::{build_patches, Mesh};
use crate::quadrature::{EdgeRule, QuadratureRule};
use crate::solver::{solve_pdas, DiscreteSolution, KktReport, ObstacleSystem, PdasConfig};

/// How the mean-value threshold is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkingMean {
    /// `ind(e) > θ · mean(ind)`.
    #[default]
    Plain,
    /// `ind(e)² > θ · mean(ind²)`.
    Squared,
}

#[derive(Clone, Debug)]
pub struct AdaptiveConfig {
    pub estimator: EstimatorKind,
    pub marking_factor: f64,
    pub marking_mean: MarkingMean,
    pub max_elements: usize,
    /// Overrides the problem's number of uniform pre-refinements.
    pub initial_refinements: Option<usize>,
    pub pdas: PdasConfig,
    pub estimator_config: EstimatorConfig,
    pub load_quadrature: QuadratureRule,
    pub load_edge_rule: EdgeRule,
    pub error_quadrature: ErrorQuadrature,
    /// Prolongate the previous solution as PDAS starting value.
    pub warm_start: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            estimator: EstimatorKind::Eta,
            marking_factor: 1.2,
            marking_mean: MarkingMean::Plain,
            max_elements: 20_000,
            initial_refinements: None,
            pdas: PdasConfig::default(),
            estimator_config: EstimatorConfig::default(),
            load_quadrature: QuadratureRule::degree5(),
            load_edge_rule: EdgeRule::gauss(4),
            error_quadrature: ErrorQuadrature::default(),
            warm_start: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.marking_factor > 0.0 && self.marking_factor.is_finite()) {
            return Err(Error::Config(format!("marking factor must be positive, got {}", self.marking_factor)));
        }
        if self.max_elements == 0 {
            return Err(Error::Config("max elements must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the adaptive trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub elements: usize,
    pub nodes: usize,
    pub dofs: usize,
    pub eta: f64,
    pub eta_components: [f64; 7],
    pub eta_rss: f64,
    pub eta_123: f64,
    pub eta_std: f64,
    pub eta_nr: f64,
    pub osc_f: f64,
    pub osc_pi: f64,
    pub error_energy: Option<f64>,
    pub error_h1: Option<f64>,
    pub efficiency_eta: Option<f64>,
    pub efficiency_std: Option<f64>,
    pub efficiency_nr: Option<f64>,
    pub no_contact: usize,
    pub semi_contact: usize,
    pub full_contact: usize,
    pub pdas_iterations: usize,
    pub kkt: KktReport,
    pub marked: usize,
    /// Wall time of the iteration in seconds (not written to the CSV).
    pub seconds: f64,
}

/// Trace CSV columns with their definitions.
pub const TRACE_COLUMNS: [(&str, &str); 29] = [
    ("iteration", "adaptive step, 0 = pre-refined initial mesh"),
    ("elements", "number of triangles"),
    ("nodes", "number of mesh vertices"),
    ("dofs", "number of free (non-Dirichlet) vertices"),
    ("eta", "robust estimator, sum of eta1..eta7"),
    ("eta1", "volume residual term (dimensionless norm)"),
    ("eta2", "interior jump term"),
    ("eta3", "Neumann residual term"),
    ("eta4", "semi-contact complementarity term"),
    ("eta5", "semi-contact obstacle approximation term"),
    ("eta6", "full-contact obstacle approximation term"),
    ("eta7", "obstacle consistency term"),
    ("eta_rss", "root sum of squares of eta1..eta7"),
    ("eta_123", "eta1+eta2+eta3 over nodes outside full contact"),
    ("eta_std", "standard residual estimator over all nodes"),
    ("eta_nr", "non-robust estimator with h-weights"),
    ("osc_f", "weighted oscillation of f against element centroid values"),
    ("osc_pi", "weighted oscillation of the Neumann data against edge midpoint values"),
    ("error_energy", "exact error in the eps-weighted energy norm (empty if unknown)"),
    ("error_h1", "exact error in the full H1 norm (empty if unknown)"),
    ("efficiency_eta", "eta / error_energy"),
    ("efficiency_std", "eta_std / error_energy"),
    ("efficiency_nr", "eta_nr / error_h1"),
    ("no_contact", "count of free nodes without contact"),
    ("semi_contact", "count of semi-contact nodes"),
    ("full_contact", "count of full-contact nodes"),
    ("pdas_iterations", "active set iterations"),
    ("kkt_feasibility", "max positive part of phi - g at free nodes"),
    ("marked", "elements marked for refinement (0 on the final step)"),
];

/// Extra KKT columns appended after `TRACE_COLUMNS`.
pub const TRACE_KKT_COLUMNS: [(&str, &str); 2] = [
    ("kkt_complementarity", "max |lambda (g - phi)| over free nodes, unscaled"),
    ("kkt_min_contact_multiplier", "smallest lambda at contact nodes (empty if none)"),
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = TRACE_COLUMNS.iter().chain(TRACE_KKT_COLUMNS.iter()).map(|c| c.0).collect();
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.iteration.to_string(), r.elements.to_string(), r.nodes.to_string(), r.dofs.to_string()];
        rec.push(format!("{:e}", r.eta));
        rec.extend(r.eta_components.iter().map(|v| format!("{v:e}")));
        for v in [r.eta_rss, r.eta_123, r.eta_std, r.eta_nr, r.osc_f, r.osc_pi] {
            rec.push(format!("{v:e}"));
        }
        for v in [r.error_energy, r.error_h1, r.efficiency_eta, r.efficiency_std, r.efficiency_nr] {
            rec.push(opt(v));
        }
        for v in [r.no_contact, r.semi_contact, r.full_contact, r.pdas_iterations] {
            rec.push(v.to_string());
        }
        rec.push(format!("{:e}", r.kkt.feasibility));
        rec.push(r.marked.to_string());
        rec.push(format!("{:e}", r.kkt.complementarity));
        rec.push(if r.kkt.contact_nodes > 0 {
            format!("{:e}", r.kkt.min_contact_multiplier)
        } else {
            String::new()
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Elements whose indicator exceeds `factor` times the mean indicator.
pub fn mark_mean_value(indicators: &[f64], factor: f64) -> Vec<usize> {
    if indicators.is_empty() {
        return Vec::new();
    }
    let mean = indicators.iter().sum::<f64>() / indicators.len() as f64;
    let threshold = factor * mean;
    indicators
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(e, _)| e)
        .collect()
}

pub fn mark(indicators: &[f64], factor: f64, mean: MarkingMean) -> Vec<usize> {
    match mean {
        MarkingMean::Plain => mark_mean_value(indicators, factor),
        MarkingMean::Squared => {
            let sq: Vec<f64> = indicators.iter().map(|v| v * v).collect();
            mark_mean_value(&sq, factor)
        }
    }
}

/// Result of an adaptive run: the trace plus the last mesh, solution and
/// breakdown.
#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub trace: Vec<TraceRow>,
    pub mesh: Mesh,
    pub solution: DiscreteSolution,
    pub breakdown: EstimatorBreakdown,
    pub indicators: Vec<f64>,
}

/// One solve/estimate pass on a fixed mesh.
pub struct Step {
    pub solution: DiscreteSolution,
    pub breakdown: EstimatorBreakdown,
}

pub fn solve_and_estimate(
    mesh: &Mesh,
    problem: &ProblemDefinition,
    cfg: &AdaptiveConfig,
    warm: Option<&[f64]>,
) -> Result<Step> {
    let sys = ObstacleSystem::assemble(mesh, &problem.data, &cfg.load_quadrature, &cfg.load_edge_rule)?;
    let solution = solve_pdas(&sys, &cfg.pdas, warm)?;
    let patches = build_patches(mesh);
    let input = EstimatorInput {
        mesh,
        patches: &patches,
        data: &problem.data,
        phi: &solution.phi,
        obstacle: &sys.obstacle,
        lambda: &solution.lambda,
        dirichlet: &sys.dirichlet,
    };
    let breakdown = estimate(&input, &cfg.estimator_config)?;
    Ok(Step { solution, breakdown })
}

pub fn run_adaptive(problem: &ProblemDefinition, cfg: &AdaptiveConfig) -> Result<AdaptiveRun> {
    run_adaptive_observed(problem, cfg, |_, _, _| {})
}

/// [`run_adaptive`] with a callback invoked after every solve/estimate
/// pass, before refinement.
pub fn run_adaptive_observed(
    problem: &ProblemDefinition,
    cfg: &AdaptiveConfig,
    mut observe: impl FnMut(&Mesh, &Step, &TraceRow),
) -> Result<AdaptiveRun> {
    cfg.validate()?;
    problem.data.validate()?;
    let mut mesh = problem.mesh.clone();
    for _ in 0..cfg.initial_refinements.unwrap_or(problem.initial_refinements) {
        mesh = mesh.uniform_refine();
    }
    let exact = problem.canonical_exact();
    let mut trace = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for iteration in 0.. {
        let start = Instant::now();
        let with_context = |source: Error| Error::AtIteration {
            iteration,
            source: Box::new(source),
        };
        let step = solve_and_estimate(&mesh, problem, cfg, warm.as_deref()).map_err(with_context)?;
        let indicators = element_indicators(&step.breakdown, &mesh, cfg.estimator);
        let done = mesh.n_elements() >= cfg.max_elements;
        let marked = if done {
            Vec::new()
        } else {
            mark(&indicators, cfg.marking_factor, cfg.marking_mean)
        };
        let errors = exact.as_ref().map(|ex| {
            energy_error(&mesh, &step.solution.phi, ex as &dyn ExactSolution, problem.eps, &cfg.error_quadrature)
        });
        let t = &step.breakdown.totals;
        let dirichlet = mesh.is_dirichlet();
        trace.push(TraceRow {
            iteration,
            elements: mesh.n_elements(),
            nodes: mesh.n_vertices(),
            dofs: dirichlet.iter().filter(|d| !**d).count(),
            eta: t.eta,
            eta_components: t.components,
            eta_rss: t.eta_rss,
            eta_123: t.eta_123,
            eta_std: t.eta_std,
            eta_nr: t.eta_nr,
            osc_f: t.osc_f,
            osc_pi: t.osc_pi,
            error_energy: errors.map(|e| e.0),
            error_h1: errors.map(|e| e.1),
            efficiency_eta: errors.map(|e| t.eta / e.0),
            efficiency_std: errors.map(|e| t.eta_std / e.0),
            efficiency_nr: errors.map(|e| t.eta_nr / e.1),
            no_contact: (0..mesh.n_vertices())
                .filter(|&p| !dirichlet[p] && step.breakdown.classes[p] == NodeClass::NoContact)
                .count(),
            semi_contact: step.breakdown.count(NodeClass::SemiContact),
            full_contact: step.breakdown.count(NodeClass::FullContact),
            pdas_iterations: step.solution.iterations,
            kkt: step.solution.kkt,
            marked: marked.len(),
            seconds: 0.0,
        });
        observe(&mesh, &step, trace.last().unwrap());
        if marked.is_empty() {
            trace.last_mut().unwrap().seconds = start.elapsed().as_secs_f64();
            return Ok(AdaptiveRun {
                trace,
                mesh,
                solution: step.solution,
                breakdown: step.breakdown,
                indicators,
            });
        }
        let (refined, prolongation) = mesh.bisect(&marked).map_err(with_context)?;
        if cfg.warm_start {
            warm = Some(prolongation.apply(&step.solution.phi.values));
        }
        mesh = refined;
        trace.last_mut().unwrap().seconds = start.elapsed().as_secs_f64();
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::example2;

    #[test]
    fn mean_value_marking() {
        assert_eq!(mark_mean_value(&[1.0, 1.0, 1.0, 10.0], 1.2), vec![3]);
        assert!(mark_mean_value(&[0.0; 5], 1.2).is_empty());
        assert!(mark_mean_value(&[2.0; 5], 1.2).is_empty());
        // mean 0.5, threshold 0.6
        assert_eq!(mark_mean_value(&[0.1, 0.9, 0.6, 0.61, 0.3], 1.2), vec![1, 3]);
        // squared: mean of squares 0.3... threshold 0.39...
        let sq = mark(&[0.1, 0.9, 0.6, 0.61, 0.3], 1.2, MarkingMean::Squared);
        assert_eq!(sq, vec![1]);
    }

    #[test]
    fn max_elements_below_initial_count_stops_immediately() {
        let problem = example2(0.1);
        let cfg = AdaptiveConfig {
            max_elements: 10,
            initial_refinements: Some(1),
            ..Default::default()
        };
        let run = run_adaptive(&problem, &cfg).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.trace[0].marked, 0);
        assert_eq!(run.trace[0].elements, 8);
    }

    #[test]
    fn short_run_refines_and_records() {
        let problem = example2(0.1);
        let cfg = AdaptiveConfig {
            max_elements: 600,
            ..Default::default()
        };
        let run = run_adaptive(&problem, &cfg).unwrap();
        assert!(run.trace.len() > 2);
        for w in run.trace.windows(2) {
            assert!(w[1].elements > w[0].elements);
        }
        let last = run.trace.last().unwrap();
        assert!(last.elements >= 600 || last.marked == 0);
        for r in &run.trace {
            assert!(r.kkt.holds(), "{:?}", r.kkt);
            assert!(r.error_energy.unwrap() > 0.0);
        }
        let mut buf = Vec::new();
        write_trace_csv(&run.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), run.trace.len() + 1);
        let ncols = text.lines().next().unwrap().split(',').count();
        assert_eq!(ncols, TRACE_COLUMNS.len() + TRACE_KKT_COLUMNS.len());
        for line in text.lines() {
            assert_eq!(line.split(',').count(), ncols);
        }
    }
}
