use std::path::Path;
use std::process::Command;

fn ddpc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddpc"))
}

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "total_samples = 119, 400\nlambda2 = 1, 1000\ntrain_realizations = 2\nnoise_realizations = 2\n";

#[test]
fn bench_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), SMALL);
    let out = dir.path().join("out");
    let st = ddpc().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--jobs", "2"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["results.csv", "summary.csv", "fig_slack.svg", "fig_cost.svg", "fig_oracle.svg", "config.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    // 2 N_bar x 2 train x 2 noise x (oracle, spc, cspc, 2 deepc)
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2 * 5);
    assert!(!results.contains("NaN"));
    let svg = std::fs::read_to_string(out.join("fig_slack.svg")).unwrap();
    assert!(svg.contains("<!-- data") && svg.contains("deepc l2=1000"));
}

#[test]
fn job_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), SMALL);
    let mut bodies = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("out{jobs}"));
        let st = ddpc().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--jobs", jobs]).status().unwrap();
        assert!(st.success());
        bodies.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn infeasible_cell_exits_2() {
    // A single data column cannot span the regressor space, so the strict
    // range constraint of DeePC has no solution.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "past_horizon = 2\nfuture_horizon = 3\ntotal_samples = 5\nlambda2 = 1\ntrain_realizations = 1\nnoise_realizations = 1\n",
    );
    let out = dir.path().join("out");
    let st = ddpc().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.lines().any(|l| l.starts_with("deepc,") && l.ends_with(",infeasible")));
    assert!(results.lines().any(|l| l.starts_with("spc,") && l.ends_with(",optimal")));
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for body in ["q = -1\n", "unknown_key = 3\n", "lambda2 = 1, two\n", "total_samples = 10\n"] {
        let cfg = write_cfg(dir.path(), body);
        let o = ddpc().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(3), "{body}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = write_cfg(dir.path(), "q = 1\nlambda2 = x\n");
    let o = ddpc().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.cfg:2"));
}

#[test]
fn verify_prints_json_lines() {
    let o = ddpc().args(["verify", "--instances", "2", "--seed", "9"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 10);
    assert!(lines.iter().all(|l| l["verdict"] == "pass"));
}

#[test]
fn demo_saves_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddpc().args(["demo", "--total-samples", "300", "--out"]).arg(dir.path()).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("oracle") && text.contains("deepc l2=1000"));
    let (header, record) = ddpc::dataset::load(&dir.path().join("dataset.csv")).unwrap();
    assert_eq!(header.columns, 300 - 49);
    assert_eq!(record.samples(), 300);
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["dims"]["N"], 251);
}
