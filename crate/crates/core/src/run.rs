//! Batch experiments: the (ε, estimator) product for one problem, artifact
//! output and summary tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::adaptive::{run_adaptive, write_trace_csv, AdaptiveConfig, AdaptiveRun, MarkingMean, TraceRow, TRACE_COLUMNS, TRACE_KKT_COLUMNS};
use crate::benchmarks::{self, efficiency_and_eoc, ProblemDefinition};
use crate::error::{Error, Result};
use crate::estimator::{write_indicators_csv, EstimatorKind};
use crate::expr::ProblemDescriptor;
use crate::solver::{write_history_csv, KKT_TOLERANCE};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the problem comes from.
#[derive(Clone, Debug)]
pub enum ProblemSource {
    Named(String),
    Descriptor(Box<ProblemDescriptor>),
}

impl ProblemSource {
    /// A registered name, or a path to a JSON descriptor.
    pub fn parse(arg: &str) -> Result<Self> {
        if benchmarks::PROBLEM_NAMES.contains(&arg) {
            return Ok(ProblemSource::Named(arg.to_string()));
        }
        let path = Path::new(arg);
        if path.extension().is_some_and(|e| e == "json") {
            if !path.is_file() {
                return Err(Error::Config(format!("problem descriptor {arg} not found")));
            }
            return Ok(ProblemSource::Descriptor(Box::new(ProblemDescriptor::load(path)?)));
        }
        Err(Error::Config(format!(
            "unknown problem `{arg}` (expected one of {:?} or a .json descriptor)",
            benchmarks::PROBLEM_NAMES
        )))
    }

    pub fn name(&self) -> &str {
        match self {
            ProblemSource::Named(n) => n,
            ProblemSource::Descriptor(d) => &d.name,
        }
    }

    pub fn build(&self, eps: f64) -> Result<ProblemDefinition> {
        match self {
            ProblemSource::Named(n) => {
                benchmarks::problem(n, eps).ok_or_else(|| Error::Config(format!("unknown problem `{n}`")))
            }
            ProblemSource::Descriptor(d) => d.build(Some(eps)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub eps: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub marking_factor: f64,
    pub marking_mean: MarkingMean,
    pub max_elements: usize,
    pub initial_refinements: Option<usize>,
    pub out: PathBuf,
    /// One job at a time, in a fixed order.
    pub reference_mode: bool,
    pub jobs: usize,
}

impl RunConfig {
    pub fn new(problem: ProblemSource, eps: Vec<f64>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            problem,
            eps,
            estimators: vec![EstimatorKind::Eta],
            marking_factor: 1.2,
            marking_mean: MarkingMean::Plain,
            max_elements: 20_000,
            initial_refinements: None,
            out: out.into(),
            reference_mode: false,
            jobs: 1,
        }
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::Config("at least one eps is required".into()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("eps must be positive, got {e}")));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        self.adaptive_config(EstimatorKind::Eta).validate()?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for &eps in &self.eps {
            self.problem.build(eps)?;
        }
        fs::create_dir_all(&self.out)
            .map_err(|e| Error::Config(format!("output directory {}: {e}", self.out.display())))?;
        let probe = self.out.join(".write-test");
        File::create(&probe)
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", self.out.display())))?;
        Ok(())
    }

    pub fn adaptive_config(&self, estimator: EstimatorKind) -> AdaptiveConfig {
        AdaptiveConfig {
            estimator,
            marking_factor: self.marking_factor,
            marking_mean: self.marking_mean,
            max_elements: self.max_elements,
            initial_refinements: self.initial_refinements,
            ..Default::default()
        }
    }

    fn job_list(&self) -> Vec<(f64, EstimatorKind)> {
        self.eps
            .iter()
            .flat_map(|&e| self.estimators.iter().map(move |&k| (e, k)))
            .collect()
    }
}

/// Final-iteration numbers of one job.
#[derive(Clone, Debug, Serialize)]
pub struct JobSummary {
    pub iterations: usize,
    pub elements: usize,
    pub nodes: usize,
    pub dofs: usize,
    pub eta: f64,
    pub estimate: f64,
    pub error_energy: Option<f64>,
    pub error_h1: Option<f64>,
    /// Efficiency index of the driving estimator.
    pub efficiency: Option<f64>,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug)]
pub struct JobOutcome {
    pub problem: String,
    pub eps: f64,
    pub estimator: EstimatorKind,
    pub dir: PathBuf,
    pub result: std::result::Result<JobSummary, String>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub jobs: Vec<JobOutcome>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.jobs.iter().filter(|j| j.result.is_err()).count()
    }

    /// 0 when every job succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            1
        }
    }
}

pub fn job_dir_name(problem: &str, eps: f64, estimator: EstimatorKind) -> String {
    format!("{problem}_eps{eps}_{}", estimator.name())
}

/// Efficiency index of the estimator that drove a run: `η^nr` is compared
/// with the full `H¹` error, the others with the energy error.
pub fn driving_efficiency(row: &TraceRow, kind: EstimatorKind) -> Option<f64> {
    match kind {
        EstimatorKind::Eta => row.efficiency_eta,
        EstimatorKind::EtaStd => row.efficiency_std,
        EstimatorKind::EtaNr => row.efficiency_nr,
    }
}

/// Runs every (ε, estimator) job and writes all artifacts. Per-job failures
/// are recorded, not propagated.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let jobs = config.job_list();
    let threads = if config.reference_mode { 1 } else { config.jobs };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<JobOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(eps, kind)| {
                let name = config.problem.name().to_string();
                let dir = config.out.join(job_dir_name(&name, eps, kind));
                let result = catch_unwind(AssertUnwindSafe(|| run_job(config, eps, kind, &dir)))
                    .unwrap_or_else(|panic| {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "job panicked".into());
                        Err(Error::Breakdown(msg))
                    })
                    .map_err(|e| {
                        let msg = e.to_string();
                        let _ = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("error.txt"), &msg));
                        msg
                    });
                JobOutcome {
                    problem: name,
                    eps,
                    estimator: kind,
                    dir,
                    result,
                }
            })
            .collect()
    });
    let report = RunReport { jobs: outcomes };
    write_summaries(&report, &config.out)?;
    Ok(report)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_job(config: &RunConfig, eps: f64, kind: EstimatorKind, dir: &Path) -> Result<JobSummary> {
    let start = Instant::now();
    let problem = config.problem.build(eps)?;
    let cfg = config.adaptive_config(kind);
    let run = run_adaptive(&problem, &cfg)?;
    fs::create_dir_all(dir)?;
    write_bundle(&problem, &cfg, &run, dir, start.elapsed().as_secs_f64())?;
    let last = run.trace.last().expect("trace is never empty");
    Ok(JobSummary {
        iterations: run.trace.len(),
        elements: last.elements,
        nodes: last.nodes,
        dofs: last.dofs,
        eta: last.eta,
        estimate: match kind {
            EstimatorKind::Eta => last.eta,
            EstimatorKind::EtaStd => last.eta_std,
            EstimatorKind::EtaNr => last.eta_nr,
        },
        error_energy: last.error_energy,
        error_h1: last.error_h1,
        efficiency: driving_efficiency(last, kind),
        trace: run.trace.clone(),
    })
}

const SOLUTION_COLUMNS: [(&str, &str); 8] = [
    ("node_id", "vertex index"),
    ("x", "vertex x coordinate"),
    ("y", "vertex y coordinate"),
    ("phi", "discrete solution in upper-obstacle form"),
    ("u", "discrete solution in the problem's own sign convention"),
    ("g", "nodal obstacle in upper-obstacle form (inf if none)"),
    ("lambda", "nodal constraining force b - A phi"),
    ("class", "none, semi or full contact"),
];

/// Writes trace, mesh, breakdown, indicators, PDAS log, nodal solution and
/// metadata for one run.
pub fn write_bundle(problem: &ProblemDefinition, cfg: &AdaptiveConfig, run: &AdaptiveRun, dir: &Path, seconds: f64) -> Result<()> {
    write_trace_csv(&run.trace, create(&dir.join("trace.csv"))?)?;
    serde_json::to_writer_pretty(create(&dir.join("mesh.json"))?, &run.mesh.to_snapshot())?;
    run.breakdown.write_csv(create(&dir.join("breakdown.csv"))?)?;
    write_indicators_csv(&run.indicators, create(&dir.join("elements.csv"))?)?;
    write_history_csv(&run.solution.history, create(&dir.join("pdas.csv"))?)?;

    let mut w = csv::Writer::from_writer(create(&dir.join("solution.csv"))?);
    w.write_record(SOLUTION_COLUMNS.iter().map(|c| c.0))?;
    let g = problem.data.obstacle_nodal(&run.mesh);
    for (p, x) in run.mesh.vertices().iter().enumerate() {
        let phi = run.solution.phi.values[p];
        w.write_record([
            p.to_string(),
            format!("{:e}", x[0]),
            format!("{:e}", x[1]),
            format!("{phi:e}"),
            format!("{:e}", problem.sign() * phi),
            format!("{:e}", g[p]),
            format!("{:e}", run.solution.lambda[p]),
            run.breakdown.classes[p].label().to_string(),
        ])?;
    }
    w.flush()?;

    let meta = metadata(problem, cfg, run, seconds);
    let mut f = create(&dir.join("metadata.json"))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.flush()?;
    Ok(())
}

fn columns(cols: &[(&str, &str)]) -> serde_json::Value {
    serde_json::Value::Object(cols.iter().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

fn metadata(problem: &ProblemDefinition, cfg: &AdaptiveConfig, run: &AdaptiveRun, seconds: f64) -> serde_json::Value {
    let last = run.trace.last().unwrap();
    let termination = if last.elements >= cfg.max_elements {
        "element count reached max_elements"
    } else {
        "no element above the marking threshold"
    };
    let trace_cols: Vec<(&str, &str)> = TRACE_COLUMNS.iter().chain(TRACE_KKT_COLUMNS.iter()).copied().collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "software": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "problem": {
            "name": problem.name,
            "eps": problem.eps,
            "negated": problem.negated,
            "initial_mesh": problem.initial_mesh,
            "initial_refinements": cfg.initial_refinements.unwrap_or(problem.initial_refinements),
            "has_exact_solution": problem.exact.is_some(),
        },
        "adaptive": {
            "estimator": cfg.estimator.name(),
            "marking": "mean value: mark e if indicator(e) > factor * mean(indicator)",
            "marking_factor": cfg.marking_factor,
            "marking_mean": cfg.marking_mean,
            "max_elements": cfg.max_elements,
            "refinement": "newest vertex bisection with closure; uniform steps split every element into four",
            "warm_start": cfg.warm_start,
            "iterations": run.trace.len(),
            "termination": termination,
        },
        "tolerances": {
            "pdas_c": cfg.pdas.c,
            "pdas_max_iter": cfg.pdas.max_iter,
            "linear_relative_residual": cfg.pdas.linear_tolerance,
            "kkt": KKT_TOLERANCE,
            "feasibility": "1e-9 * (1 + max|g_m|)",
            "active_set_threshold": "1e-13 * (1 + max|b| + max|g_m|)",
            "contact": format!("{} * (1 + max|g_m|)", cfg.estimator_config.contact_tolerance),
            "full_contact_sign": cfg.estimator_config.sign_tolerance,
        },
        "quadrature": {
            "load_triangle_degree": cfg.load_quadrature.degree,
            "load_edge_degree": cfg.load_edge_rule.degree,
            "estimator_triangle_degree": cfg.estimator_config.quad.degree,
            "estimator_edge_degree": cfg.estimator_config.edge_rule.degree,
            "eta4_rule": "edge midpoints on the corner sub-triangles of two red refinements (exact)",
            "eta7_rule": "triangle rule on one uniform subdivision, obstacle gradient by central differences",
            "error_triangle_degree": cfg.error_quadrature.rule.degree,
            "error_kink_subdivision_levels": cfg.error_quadrature.kink_levels,
        },
        "conventions": {
            "obstacle_form": "upper obstacle phi <= g; lower-obstacle problems are negated (f, dirichlet, obstacle and solution)",
            "jump": "J_s = -eps^2 (grad phi|_e - grad phi|_e') . n_e, the residual density on interior edges",
            "eta": "sum over k of (sum_p eta_{k,p}^2)^(1/2); eta_rss is the root sum of squares",
            "eta_std": "standard residual estimator eta1+eta2+eta3 summed over all nodes, full contact included",
            "eta_nr": "h_p and h_p^(1/2) weights in eta1..eta3, robust eta4..eta7",
            "oscillation_means": "f at element centroids, Neumann data at edge midpoints",
            "element_indicator": "indicator(e)^2 = sum over vertices p of e of eta_p^2 / #elements(patch p)",
            "efficiency": "eta/error_energy, eta_std/error_energy, eta_nr/error_h1",
            "eoc": "-log(e2/e1)/log(N2/N1) with N the number of free nodes",
        },
        "columns": {
            "trace.csv": columns(&trace_cols),
            "breakdown.csv": columns(&[
                ("node_id", "vertex index"),
                ("class", "none, semi or full contact"),
                ("s_p", "lumped constraining force lambda_p / integral of the hat function"),
                ("eta1..eta7", "per-node contributions eta_{k,p}"),
            ]),
            "elements.csv": columns(&[("element_id", "triangle index"), ("indicator", "marking indicator of the driving estimator")]),
            "pdas.csv": columns(&[
                ("iteration", "active set iteration"),
                ("active", "size of the active set"),
                ("changed", "nodes that entered or left the active set"),
                ("linear_iterations", "conjugate gradient steps"),
                ("linear_residual", "final relative residual"),
                ("max_infeasibility", "max (phi - g)+ after the step"),
                ("min_active_multiplier", "smallest lambda on the active set"),
            ]),
            "solution.csv": columns(&SOLUTION_COLUMNS),
            "mesh.json": "vertices [[x,y]], triangles [[a,b,c]] counter-clockwise with refinement edge (a,b), boundary [[i,j,\"D\"|\"N\"]]",
        },
        "timing": {
            "total_seconds": seconds,
            "iteration_seconds": run.trace.iter().map(|r| r.seconds).collect::<Vec<_>>(),
        },
        "final": {
            "elements": last.elements,
            "nodes": last.nodes,
            "eta": last.eta,
            "kkt": last.kkt,
        },
    })
}

/// Efficiency summary row for the final iteration of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub problem: String,
    pub eps: f64,
    pub estimator: String,
    pub status: String,
    pub iterations: Option<usize>,
    pub elements: Option<usize>,
    pub nodes: Option<usize>,
    pub dofs: Option<usize>,
    pub estimate: Option<f64>,
    pub error_energy: Option<f64>,
    pub error_h1: Option<f64>,
    pub efficiency: Option<f64>,
}

/// Spread of final efficiency indices across ε for one estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub problem: String,
    pub estimator: String,
    pub runs: usize,
    pub min_efficiency: f64,
    pub max_efficiency: f64,
    pub ratio: f64,
}

/// Per-iteration efficiency and convergence rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EocRow {
    pub problem: String,
    pub eps: f64,
    pub estimator: String,
    pub iteration: usize,
    pub nodes: usize,
    pub dofs: usize,
    pub error: f64,
    pub efficiency: f64,
    pub eoc: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub runs: Vec<SummaryRow>,
    pub robustness: Vec<RobustnessRow>,
    pub eoc: Vec<EocRow>,
}

pub fn summarize(jobs: &[JobOutcome]) -> Summary {
    let mut s = Summary::default();
    for j in jobs {
        let ok = j.result.as_ref().ok();
        s.runs.push(SummaryRow {
            problem: j.problem.clone(),
            eps: j.eps,
            estimator: j.estimator.name().into(),
            status: match &j.result {
                Ok(_) => "ok".into(),
                Err(e) => format!("error: {e}"),
            },
            iterations: ok.map(|r| r.iterations),
            elements: ok.map(|r| r.elements),
            nodes: ok.map(|r| r.nodes),
            dofs: ok.map(|r| r.dofs),
            estimate: ok.map(|r| r.estimate),
            error_energy: ok.and_then(|r| r.error_energy),
            error_h1: ok.and_then(|r| r.error_h1),
            efficiency: ok.and_then(|r| r.efficiency),
        });
        if let Some(r) = ok {
            let samples: Vec<(usize, f64, f64)> = r
                .trace
                .iter()
                .filter_map(|t| {
                    let (est, err) = match j.estimator {
                        EstimatorKind::Eta => (t.eta, t.error_energy?),
                        EstimatorKind::EtaStd => (t.eta_std, t.error_energy?),
                        EstimatorKind::EtaNr => (t.eta_nr, t.error_h1?),
                    };
                    Some((t.dofs, est, err))
                })
                .collect();
            for (row, t) in efficiency_and_eoc(&samples).into_iter().zip(&r.trace) {
                s.eoc.push(EocRow {
                    problem: j.problem.clone(),
                    eps: j.eps,
                    estimator: j.estimator.name().into(),
                    iteration: row.iteration,
                    nodes: t.nodes,
                    dofs: row.dofs,
                    error: row.error,
                    efficiency: row.efficiency,
                    eoc: row.eoc,
                });
            }
        }
    }
    let mut keys: Vec<(String, String)> = s.runs.iter().map(|r| (r.problem.clone(), r.estimator.clone())).collect();
    keys.dedup();
    keys.sort();
    keys.dedup();
    for (problem, estimator) in keys {
        let effs: Vec<f64> = s
            .runs
            .iter()
            .filter(|r| r.problem == problem && r.estimator == estimator)
            .filter_map(|r| r.efficiency)
            .collect();
        if effs.is_empty() {
            continue;
        }
        let min = effs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = effs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        s.robustness.push(RobustnessRow {
            problem,
            estimator,
            runs: effs.len(),
            min_efficiency: min,
            max_efficiency: max,
            ratio: max / min,
        });
    }
    s
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.csv`, `robustness.csv` and `eoc.csv`.
pub fn write_summaries(report: &RunReport, out: &Path) -> Result<()> {
    let s = summarize(&report.jobs);
    write_rows(
        &s.runs,
        &out.join("summary.csv"),
        &[
            "problem", "eps", "estimator", "status", "iterations", "elements", "nodes", "dofs", "estimate",
            "error_energy", "error_h1", "efficiency",
        ],
    )?;
    write_rows(
        &s.robustness,
        &out.join("robustness.csv"),
        &["problem", "estimator", "runs", "min_efficiency", "max_efficiency", "ratio"],
    )?;
    write_rows(
        &s.eoc,
        &out.join("eoc.csv"),
        &["problem", "eps", "estimator", "iteration", "nodes", "dofs", "error", "efficiency", "eoc"],
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> RunConfig {
        let mut c = RunConfig::new(ProblemSource::Named("example2".into()), vec![0.1], dir);
        c.max_elements = 300;
        c
    }

    #[test]
    fn invalid_configurations() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ProblemSource::parse("example9"), Err(Error::Config(_))));
        assert!(matches!(ProblemSource::parse("missing.json"), Err(Error::Config(_))));
        let mut c = config(dir.path());
        c.eps = vec![];
        assert!(matches!(run(&c), Err(Error::Config(_))));
        c.eps = vec![0.1, -1.0];
        assert!(matches!(run(&c), Err(Error::Config(_))));
        c.eps = vec![0.1];
        c.marking_factor = 0.0;
        assert!(matches!(run(&c), Err(Error::Config(_))));
        // nothing was computed
        assert!(!dir.path().join("summary.csv").exists());
    }

    #[test]
    fn one_job_one_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let report = run(&config(dir.path())).unwrap();
        assert_eq!(report.jobs.len(), 1);
        assert_eq!(report.exit_code(), 0);
        let job = dir.path().join("example2_eps0.1_eta");
        for f in ["trace.csv", "mesh.json", "breakdown.csv", "elements.csv", "pdas.csv", "solution.csv", "metadata.json"] {
            assert!(job.join(f).is_file(), "{f}");
        }
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2);
        let robustness = fs::read_to_string(dir.path().join("robustness.csv")).unwrap();
        let fields: Vec<&str> = robustness.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[2], "1");
        assert_eq!(fields[5], "1.0");
    }

    #[test]
    fn robustness_ratio_of_identical_indices_is_one() {
        let row = |eps: f64| JobOutcome {
            problem: "p".into(),
            eps,
            estimator: EstimatorKind::Eta,
            dir: PathBuf::new(),
            result: Ok(JobSummary {
                iterations: 1,
                elements: 2,
                nodes: 4,
                dofs: 4,
                eta: 2.0,
                estimate: 2.0,
                error_energy: Some(1.0),
                error_h1: Some(1.0),
                efficiency: Some(2.0),
                trace: vec![],
            }),
        };
        let s = summarize(&[row(0.1), row(0.2)]);
        assert_eq!(s.runs.len(), 2);
        assert_eq!(s.robustness.len(), 1);
        assert_eq!(s.robustness[0].ratio, 1.0);
    }
}
