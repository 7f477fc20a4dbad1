use std::path::PathBuf;
use std::process::{Command, Output};

fn popproto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popproto"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("popproto-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn run_is_deterministic_and_emits_jsonl() {
    let out1 = tmp("det1.jsonl");
    let out2 = tmp("det2.jsonl");
    for out in [&out1, &out2] {
        let o = popproto(&[
            "run", "--stack", "orientation", "--family", "path", "--n", "16", "--seeds", "5",
            "--seed-base", "7", "--tail", "500", "--out", &out.display().to_string(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&out1).unwrap();
    assert_eq!(a, std::fs::read(&out2).unwrap());
    let lines: Vec<&str> = std::str::from_utf8(&a).unwrap().lines().collect();
    assert_eq!(lines.len(), 5);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["stack"], "orientation");
        assert_eq!(v["graph"]["family"], "path");
        assert_eq!(v["capped"], false);
        assert!(v["steps"]["orientation"].is_u64());
    }
}

#[test]
fn invalid_parameters_exit_2() {
    let o = popproto(&["run", "--stack", "bogus", "--family", "path", "--n", "8"]);
    assert_eq!(o.status.code(), Some(2));
    let o = popproto(&["run", "--stack", "orientation", "--family", "path", "--n", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = popproto(&["run", "--stack", "orientation", "--family", "moebius", "--n", "8"]);
    assert_eq!(o.status.code(), Some(2));
    // missing required flags is a clap usage error, also 2
    let o = popproto(&["run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_fit_stats_round_trip() {
    let runs = tmp("sweep.jsonl");
    let o = popproto(&[
        "sweep", "--stack", "orientation", "--family", "balanced-binary", "--n", "16,32,64",
        "--seeds", "6", "--tail", "1000", "--out", &runs.display().to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let fit_csv = tmp("fit.csv");
    let o = popproto(&[
        "fit", "--in", &runs.display().to_string(), "--out", &fit_csv.display().to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&fit_csv).unwrap();
    assert!(csv.starts_with("n,runs,capped,mean_steps,p95_steps\n"));
    assert!(csv.contains("# slope="));

    let o = popproto(&["stats", "--in", &runs.display().to_string()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3); // one line per graph point
    assert!(text.contains("stack=orientation"));
    assert!(text.contains("p95="));
}

#[test]
fn fit_failure_exits_3() {
    // only two sizes: not enough points
    let runs = tmp("short.jsonl");
    let o = popproto(&[
        "sweep", "--stack", "orientation", "--family", "path", "--n", "8,16", "--seeds", "5",
        "--tail", "200", "--out", &runs.display().to_string(),
    ]);
    assert!(o.status.success());
    let o = popproto(&["fit", "--in", &runs.display().to_string()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn trace_produces_step_lines() {
    let runs = tmp("traced.jsonl");
    let trace = tmp("trace.jsonl");
    let o = popproto(&[
        "run", "--stack", "leader", "--family", "star", "--n", "6", "--tail", "200",
        "--out", &runs.display().to_string(), "--trace", &trace.display().to_string(),
        "--instrument", "full", "--sample-every", "10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.lines().count() > 100);
    assert!(text.contains("\"layers_changed\""));
    assert!(text.contains("\"proper\""));
    assert!(text.contains("\"tokens\""));

    // tracing more than one seed is rejected
    let o = popproto(&[
        "run", "--stack", "leader", "--family", "star", "--n", "6", "--seeds", "2",
        "--trace", &trace.display().to_string(), "--instrument", "light",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn descriptor_file_and_edge_list_graphs() {
    let desc = tmp("desc.json");
    std::fs::write(&desc, r#"{"family":"path","n":12}"#).unwrap();
    let o = popproto(&[
        "run", "--stack", "two-colour", "--graph", &desc.display().to_string(),
        "--tail", "500",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8(o.stdout).unwrap().lines().next().unwrap())
            .unwrap();
    assert_eq!(v["graph"]["n"], 12);

    // edge-list file family
    let edges = tmp("tiny.edges");
    std::fs::write(&edges, "3 2\n0 1\n1 2\n").unwrap();
    let o = popproto(&[
        "run", "--stack", "count", "--family", "file", "--graph-file",
        &edges.display().to_string(), "--tail", "300",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
