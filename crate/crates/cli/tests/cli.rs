use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    root().join("scenarios").join(name)
}

fn qsmn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsmn"))
        .args(args)
        .env("QSMN_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn qsmn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_accepts_every_shipped_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths: Vec<String> = std::fs::read_dir(root().join("scenarios"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| p.display().to_string())
        .collect();
    paths.sort();
    assert!(paths.len() >= 6);
    let mut args = vec!["validate"];
    args.extend(paths.iter().map(String::as_str));
    let o = qsmn(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains(": ok (")).count(), paths.len());
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qsmn(&["run", "--config", "/definitely/not/here.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = qsmn(&["run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n[network]\nbase_stations = []\nues = []\n").unwrap();
    let o = qsmn(&["validate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let cfg = scenario("minimal.toml");
    let o = qsmn(&["run", "--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_writes_outputs_under_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("minimal.toml");
    let o = qsmn(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "trace.ndjson", "kms_audit.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("node,handshakes,rekeys"));
    assert!(stdout(&o).contains("handshakes"));
}

#[test]
fn run_is_deterministic_and_seed_sensitive() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = scenario("minimal.toml");
    let cfg = cfg.to_str().unwrap();
    qsmn(&["run", "--config", cfg, "--seed", "5"], a.path());
    qsmn(&["run", "--config", cfg, "--seed", "5"], b.path());
    qsmn(&["run", "--config", cfg, "--seed", "6"], c.path());
    let read = |d: &Path| std::fs::read(d.join("trace.ndjson")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn tamper_flag_fails_the_targeted_handshake() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("minimal.toml");
    let o = qsmn(&["run", "--config", cfg.to_str().unwrap(), "--tamper", "signature"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let trace = std::fs::read_to_string(dir.path().join("trace.ndjson")).unwrap();
    assert!(trace.contains("\"event\":\"handshake_failed\""));
    assert!(!trace.contains("\"event\":\"session_established\""));
}

#[test]
fn compare_placements_ranks_and_states_rekey_law() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("mobility_4bs.toml");
    let o = qsmn(&["compare-placements", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("option-1 rekeys = handovers = 3"), "{s}");
    assert!(s.contains("ranking by key establishments (exact counts):"));
    assert!(s.contains("ranking by energy (placeholder cost table):"));
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn placement_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("static_ue.toml");
    let o = qsmn(&["run", "--config", cfg.to_str().unwrap(), "--placement", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("placement option-3"));
}

#[test]
fn qkd_demo_separates_clean_and_eve_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let o = qsmn(&["qkd-demo", "--rounds", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("none ") && l.ends_with("distilled")).count(), 3);
    assert_eq!(s.lines().filter(|l| l.starts_with("intercept-resend-all") && l.ends_with("aborted")).count(), 3);
    assert!(dir.path().join("qkd_pulses.csv").is_file());
}

/// `step<TAB>hex` pairs recovered from the annotated listing.
fn listed_messages(s: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut step = None;
    for line in s.lines() {
        if let Some(rest) = line.strip_prefix('[') {
            let after = rest.split_once("] ").unwrap().1;
            step = Some(after.split(" (").next().unwrap().to_string());
        } else if let Some(hex) = line.trim_start().strip_prefix("hex ") {
            out.push((step.take().unwrap(), hex.to_string()));
        }
    }
    out
}

#[test]
fn handshake_trace_matches_golden_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let o = qsmn(&["handshake-trace"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let golden = std::fs::read_to_string(root().join("crates/core/tests/golden/handshake_transcript.txt")).unwrap();
    let expected: Vec<(String, String)> = golden
        .lines()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect();
    assert_eq!(listed_messages(&s), expected);
    let steps: Vec<&str> = expected.iter().map(|(s, _)| s.as_str()).collect();
    assert_eq!(steps, ["AUTH Request", "Authentication Challenge", "Authentication Response", "Key Forward"]);
    assert!(s.lines().last().unwrap().starts_with("outcome: Established, session_key_id "));
}

#[test]
fn handshake_trace_signature_tamper_ends_failed() {
    let dir = tempfile::tempdir().unwrap();
    let o = qsmn(&["handshake-trace", "--tamper", "signature"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("TAMPERED in flight"));
    let last = s.lines().last().unwrap();
    assert!(last.starts_with("outcome: Failed at ue: "), "{last}");
}

#[test]
fn handshake_trace_hybrid_shows_combiner() {
    let dir = tempfile::tempdir().unwrap();
    let o = qsmn(&["handshake-trace", "--hybrid"], dir.path());
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("key schedule:") && l.contains("hybrid_combine")), "{s}");
}
