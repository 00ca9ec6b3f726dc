use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(file)
}

fn dsession(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsession")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_accepts_a_program() {
    let o = dsession(&["check", corpus("equal.sess").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn check_rejects_a_mutant_with_its_rule() {
    let o = dsession(&["check", corpus("negative/wrong_role_send.sess").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let all = stdout(&o) + &String::from_utf8_lossy(&o.stderr);
    assert!(all.contains("guard(send)"), "{all}");
}

#[test]
fn run_prints_outputs_and_main() {
    let o = dsession(&["run", "--seed", "3", corpus("counter.sess").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "7\n8\n9\nmain: ()\n");
}

#[test]
fn run_with_checks_in_every_mode() {
    let f = corpus("queue.sess");
    for flags in [&[][..], &["--materialized"], &["--buffered"], &["--round-robin"]] {
        let mut args = vec!["run", "--check-steps"];
        args.extend_from_slice(flags);
        args.push(f.to_str().unwrap());
        let o = dsession(&args);
        assert_eq!(o.status.code(), Some(0), "{flags:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn step_limit_exits_with_three() {
    let o = dsession(&["run", "--max-steps", "5", corpus("cloud.sess").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn explore_reports_progress() {
    let o = dsession(&["explore", corpus("array.sess").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("AllPathsProgress"));
}

#[test]
fn trace_is_json_lines() {
    let o = dsession(&["trace", corpus("equal.sess").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|v| v["rule"].is_string() && v["step"].is_u64()));
}

#[test]
fn missing_file_is_an_error() {
    let o = dsession(&["check", "/nonexistent/x.sess"]);
    assert_eq!(o.status.code(), Some(1));
}
