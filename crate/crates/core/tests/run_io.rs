use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use obstacle_afem::adaptive::TRACE_COLUMNS;
use obstacle_afem::estimator::EstimatorKind;
use obstacle_afem::mesh::{Mesh, MeshSnapshot};
use obstacle_afem::run::{run, ProblemSource, RunConfig};

const BIN: &str = env!("CARGO_BIN_EXE_obstacle-afem");

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            for (name, bytes) in csv_files(&path) {
                out.push((format!("{}/{name}", path.file_name().unwrap().to_string_lossy()), bytes));
            }
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push((path.file_name().unwrap().to_string_lossy().into(), fs::read(&path).unwrap()));
        }
    }
    out
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn reference_mode_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, jobs) in [(a.path(), 1), (b.path(), 4)] {
        let mut cfg = RunConfig::new(ProblemSource::Named("example1".into()), vec![0.2, 0.05], dir);
        cfg.estimators = vec![EstimatorKind::Eta, EstimatorKind::EtaNr];
        cfg.max_elements = 3000;
        cfg.reference_mode = true;
        cfg.jobs = jobs;
        assert_eq!(run(&cfg).unwrap().exit_code(), 0);
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 3 + 4 * 5);
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        assert!(x == y, "{name} differs between reruns");
    }
}

#[test]
fn robustness_sweep_writes_eight_bundles_with_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["--problem", "example1", "--max-elements", "1500", "--estimator", "eta", "--estimator", "eta-nr"])
        .args(["--eps", "0.4", "--eps", "0.2", "--eps", "0.1", "--eps", "0.05", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let bundles: BTreeSet<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into())
        .collect();
    assert_eq!(bundles.len(), 8);
    assert!(bundles.contains("example1_eps0.05_eta_nr"));

    let summary = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap().into_records().count();
    assert_eq!(summary, 8);
    assert_eq!(
        header(&dir.path().join("robustness.csv")),
        ["problem", "estimator", "runs", "min_efficiency", "max_efficiency", "ratio"]
    );

    let job = dir.path().join("example1_eps0.1_eta");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(job.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["problem"]["eps"], 0.1);
    for (file, expected) in [
        ("breakdown.csv", vec!["node_id", "class", "s_p", "eta1", "eta2", "eta3", "eta4", "eta5", "eta6", "eta7"]),
        ("elements.csv", vec!["element_id", "indicator"]),
    ] {
        assert_eq!(header(&job.join(file)), expected);
    }
    // Every column carries a definition in the metadata.
    let trace_header = header(&job.join("trace.csv"));
    assert_eq!(&trace_header[..TRACE_COLUMNS.len()], TRACE_COLUMNS.map(|c| c.0));
    for file in ["trace.csv", "pdas.csv", "solution.csv"] {
        let defs = meta["columns"][file].as_object().unwrap();
        for col in header(&job.join(file)) {
            let text = defs.get(&col).and_then(|v| v.as_str()).unwrap_or("");
            assert!(!text.is_empty(), "{file}: column {col} is undocumented");
        }
    }
    // The final mesh reloads and matches the trace.
    let snapshot: MeshSnapshot = serde_json::from_str(&fs::read_to_string(job.join("mesh.json")).unwrap()).unwrap();
    let mesh = Mesh::from_snapshot(&snapshot).unwrap();
    let last = csv::Reader::from_path(job.join("trace.csv")).unwrap().into_records().last().unwrap().unwrap();
    assert_eq!(last[1].parse::<usize>().unwrap(), mesh.n_elements());
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(job.join("mesh.json")).unwrap()).unwrap();
    let tag = &raw["boundary"][0][2];
    assert!(tag == "N" || tag == "D");
}

#[test]
fn configuration_errors_exit_with_two_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("never");
    for args in [
        vec!["--problem", "example7", "--eps", "0.1"],
        vec!["--problem", "example1", "--eps", "-0.1"],
        vec!["--problem", "example1", "--eps", "0.1", "--marking-factor", "0"],
        vec!["--problem", "missing.json", "--eps", "0.1"],
    ] {
        let status = Command::new(BIN).args(&args).arg("--out").arg(&out_dir).status().unwrap();
        assert_eq!(status.code(), Some(2), "{args:?}");
        assert!(!out_dir.exists());
    }
}

#[test]
fn custom_problem_with_one_failing_job_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // The obstacle drops below the Dirichlet value 0 when eps < 0.15.
    let descriptor = r#"{
        "name": "tilted",
        "domain": {"polygon": [[0,0],[2,0],[2,1],[0,1]], "tags": ["D", "N", "N", "N"]},
        "initial_refinements": 3,
        "f": "if(x > 1, 2, -1) + y",
        "neumann": "0.5*x",
        "obstacle": "eps - 0.15 + 0.3*x*y",
        "dirichlet": 0
    }"#;
    let path = dir.path().join("tilted.json");
    fs::write(&path, descriptor).unwrap();
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .arg("--problem")
        .arg(&path)
        .args(["--eps", "0.3", "--eps", "0.1", "--max-elements", "2000", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(out_dir.join("tilted_eps0.3_eta/trace.csv").is_file());
    let err = fs::read_to_string(out_dir.join("tilted_eps0.1_eta/error.txt")).unwrap();
    assert!(err.contains("obstacle"), "{err}");
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
