use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use restora::cli::{EXIT_INPUT, EXIT_OK, EXIT_UNSOLVED};
use restora::cluster_file::ClusterFile;
use restora::compare::CompareReport;
use restora::manifest::RunManifest;
use restora::plan_file::PlanFile;
use restora::trace_file::read_trace_file;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"))
}

fn restora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restora")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cluster_defaults_and_overrides() {
    let out = restora(&["cluster", s(&fixture("f6"))]);
    assert_eq!(code(&out), EXIT_OK);
    let cf = ClusterFile::from_json_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cf.k, 2);
    assert_eq!(cf.sizes.iter().sum::<usize>(), 6);

    let out = restora(&["cluster", s(&fixture("f6")), "--k", "1"]);
    let cf = ClusterFile::from_json_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cf.sizes, vec![6]);
    assert!(cf.joint_lines.is_empty());

    assert_eq!(code(&restora(&["cluster", s(&fixture("f6")), "--k", "0"])), EXIT_INPUT);
}

#[test]
fn bad_inputs_exit_with_input_error() {
    let out = restora(&["cluster", "/no/such/feeder.json"]);
    assert_eq!(code(&out), EXIT_INPUT);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/feeder.json"));

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"base\": {\"s_mva\": 1, \"v_kv\": 4.16},\n \"nodes\": [}").unwrap();
    let out = restora(&["validate", s(&broken)]);
    assert_eq!(code(&out), EXIT_INPUT);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = restora(&["solve", s(&fixture("f6")), "--eps", "0", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), EXIT_INPUT);
    assert_eq!(code(&restora(&["--threads", "0", "cluster", s(&fixture("f6"))])), EXIT_INPUT);
    assert_eq!(code(&restora(&["frobnicate"])), EXIT_INPUT);
    assert_eq!(code(&restora(&["--help"])), EXIT_OK);
}

#[test]
fn validate_reports_counts() {
    let out = restora(&["validate", s(&fixture("f13"))]);
    assert_eq!(code(&out), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ok"], true);
    assert_eq!(v["nodes"], 13);
    assert_eq!(v["has_scenario"], true);
}

#[test]
fn solve_outputs_reparse_and_reconstruct_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = restora(&["--threads", "2", "solve", s(&fixture("f6")), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));

    let plan = PlanFile::read(&dir.path().join("plan.json")).unwrap();
    assert!(plan.converged && plan.feasible);
    assert_eq!(plan.steps.len(), 2);
    let trace = read_trace_file(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.records.len(), plan.iterations);

    let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.command, "solve");
    assert_eq!(m.threads, 2);
    assert_eq!(m.clustering.as_ref().unwrap().k, 2);
    assert_eq!(m.convergence.iterations, plan.iterations);
    assert!(m.finished_unix_ms >= m.started_unix_ms);
    for key in ["plan", "trace"] {
        assert!(Path::new(&m.outputs[key]).exists(), "{key}");
    }

    // Rerun from the manifest's recorded config; the plan must match.
    let cfg = m.config.to_config().unwrap();
    let again = tempfile::tempdir().unwrap();
    let (rho, c, eps) = (cfg.rho.to_string(), cfg.c.to_string(), cfg.eps.to_string());
    let (iters, prox) = (cfg.max_iters.to_string(), cfg.max_prox_iters.to_string());
    let k = m.clustering.as_ref().unwrap().k.to_string();
    let r = m.clustering.as_ref().unwrap().r.to_string();
    let out = restora(&[
        "solve",
        &m.inputs.feeder,
        "--mode",
        &m.mode,
        "--rho",
        &rho,
        "--c",
        &c,
        "--eps",
        &eps,
        "--max-iters",
        &iters,
        "--max-prox-iters",
        &prox,
        "--k",
        &k,
        "--r",
        &r,
        "--out-dir",
        s(again.path()),
    ]);
    assert_eq!(code(&out), EXIT_OK);
    let replay = PlanFile::read(&again.path().join("plan.json")).unwrap();
    assert_eq!(replay.steps, plan.steps);
    assert_eq!(replay.objective, plan.objective);
}

#[test]
fn compare_against_itself_and_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = restora(&["oracle", s(&fixture("f6")), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), EXIT_OK);
    let oracle: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert!(oracle["feasible"].as_u64().unwrap() > 0);
    let plan = dir.path().join("plan.json");
    assert_eq!(PlanFile::read(&plan).unwrap().mode, "oracle");

    let report = dir.path().join("cmp.json");
    assert_eq!(code(&restora(&["compare", s(&plan), s(&plan), "--out", s(&report)])), EXIT_OK);
    let r: CompareReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r.is_identical());

    let other = tempfile::tempdir().unwrap();
    assert_eq!(code(&restora(&["oracle", s(&fixture("f6_fault")), "--out-dir", s(other.path())])), EXIT_OK);
    let out = restora(&["compare", s(&plan), s(&other.path().join("plan.json"))]);
    assert_eq!(code(&out), EXIT_INPUT);
    assert!(String::from_utf8_lossy(&out.stderr).contains("faults"));
}

#[test]
fn projection_on_the_hard_case_is_reported_unsolved() {
    let dir = tempfile::tempdir().unwrap();
    let out = restora(&[
        "solve",
        s(&fixture("f6_hard")),
        "--mode",
        "projection",
        "--max-iters",
        "500",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), EXIT_UNSOLVED);
    // Outputs are written even when the run fails.
    let plan = PlanFile::read(&dir.path().join("plan.json")).unwrap();
    assert!(!plan.converged || !plan.feasible);
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}
