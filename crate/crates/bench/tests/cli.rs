use std::path::Path;
use std::process::{Command, Output};

fn hpcdag(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpcdag")).args(args).current_dir(dir).output().expect("run the CLI")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn gen_alloc_analyze_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = hpcdag(&["gen", "--index", "2", "--seed", "11", "-o", "set.json"], dir);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let again = hpcdag(&["gen", "--index", "2", "--seed", "11", "-o", "again.json"], dir);
    assert_eq!(code(&again), 0);
    let text = std::fs::read_to_string(dir.join("set.json")).unwrap();
    assert_eq!(text, std::fs::read_to_string(dir.join("again.json")).unwrap());
    assert!(text.contains("\"seed\": 11"));

    let alloc = hpcdag(&["alloc", "set.json", "--heuristic", "BRF-P", "-o", "alloc.json"], dir);
    assert_eq!(code(&alloc), 0, "{}", String::from_utf8_lossy(&alloc.stderr));
    let analyze = hpcdag(&["analyze", "set.json", "alloc.json"], dir);
    assert_eq!(code(&analyze), 0);
    assert!(String::from_utf8_lossy(&analyze.stdout).starts_with("schedulable"));
    let validate = hpcdag(&["validate", "set.json", "--allocation", "alloc.json"], dir);
    assert_eq!(code(&validate), 0);
}

#[test]
fn overload_gives_a_negative_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let gen = hpcdag(&["gen", "--index", "16", "--seed", "3", "-o", "heavy.json"], dir);
    assert_eq!(code(&gen), 0);
    let alloc = hpcdag(&["alloc", "heavy.json", "-o", "partial.json"], dir);
    assert_eq!(code(&alloc), 1);
    let analyze = hpcdag(&["analyze", "heavy.json", "partial.json"], dir);
    assert_eq!(code(&analyze), 1);
    assert!(String::from_utf8_lossy(&analyze.stdout).contains("unallocated"));
}

const SMALL_SET: &str = r#"{
  "architecture": {"engines": [
    {"id": 0, "tag": "CPU", "preemptive": true, "preempt_cost_ratio": 0.0},
    {"id": 1, "tag": "CPU", "preemptive": true, "preempt_cost_ratio": 0.0}
  ]},
  "tasks": [
    {"id": 0, "period": 10, "deadline": 10, "nodes": [
      {"id": 0, "kind": "SubTask", "tag": "CPU", "wcet": 3, "max_preemptions": 1, "split_cost": 0},
      {"id": 1, "kind": "SubTask", "tag": "CPU", "wcet": 2, "max_preemptions": 0, "split_cost": 0}
    ], "edges": [[0, 1]]},
    {"id": 1, "period": 5, "deadline": 4, "nodes": [
      {"id": 0, "kind": "SubTask", "tag": "CPU", "wcet": 2, "max_preemptions": 0, "split_cost": 0}
    ], "edges": []}
  ]
}"#;

#[test]
fn ttbuild_and_table_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.json"), SMALL_SET).unwrap();
    for method in ["global", "partitioned"] {
        let out = hpcdag(&["ttbuild", "small.json", "--method", method, "--max-it", "2", "-o", "table.json"], dir);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let check = hpcdag(&["validate", "small.json", "--table", "table.json"], dir);
        assert_eq!(code(&check), 0, "{}", String::from_utf8_lossy(&check.stdout));
    }
    let lp = hpcdag(&["ttbuild", "small.json", "--export-lp", "model.lp"], dir);
    assert_eq!(code(&lp), 0);
    let text = std::fs::read_to_string(dir.join("model.lp")).unwrap();
    assert!(text.contains("Subject To") && text.trim_end().ends_with("End"));

    // a table that misses a job fails validation
    let table = std::fs::read_to_string(dir.join("table.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&table).unwrap();
    value["reservations"].as_array_mut().unwrap().pop();
    std::fs::write(dir.join("broken.json"), value.to_string()).unwrap();
    let check = hpcdag(&["validate", "small.json", "--table", "broken.json"], dir);
    assert_eq!(code(&check), 1);
}

#[test]
fn usage_and_io_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&hpcdag(&["frobnicate"], dir)), 2);
    assert_eq!(code(&hpcdag(&["alloc"], dir)), 2);
    assert_eq!(code(&hpcdag(&["alloc", "missing.json"], dir)), 2);
    assert_eq!(code(&hpcdag(&["alloc", "missing.json", "--heuristic", "XYZ"], dir)), 2);
    assert_eq!(code(&hpcdag(&["validate", "missing.json"], dir)), 2);
}

#[test]
fn sweep_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = r#"{"steps": 2, "runs": 1, "heuristics": [], "cp_dag": false}"#;
    std::fs::write(dir.join("cfg.json"), cfg).unwrap();
    let out = hpcdag(&["sweep", "--config", "cfg.json", "--out", "res", "--seed", "1"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.join("res/sched_rate.dat")).unwrap(), "# util_index\n");
    let out = hpcdag(&["sweep", "--out", "pre", "--steps", "2", "--runs", "1", "--preemption"], dir);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.join("pre/preemp.dat")).unwrap();
    assert!(text.starts_with("# util_index MAX_PREEMP REDUCED_PREM\n0 1.000000 1.000000\n"));
}
