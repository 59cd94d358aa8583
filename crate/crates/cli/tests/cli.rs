use std::path::Path;
use std::process::{Command, Output};

fn alienzoo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alienzoo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_then_query_counterfactuals() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&alienzoo(
        &[
            "train",
            "--experiment",
            "2",
            "--seed",
            "7",
            "--out",
            "m.json",
        ],
        dir.path(),
    ));
    let found = stdout(&alienzoo(
        &["cfe", "--model", "m.json", "--x", "0,0,0,0,0"],
        dir.path(),
    ));
    let v: serde_json::Value = serde_json::from_str(&found).unwrap();
    assert_eq!(v["suggestion"], serde_json::json!([0, 4, 0, 1, 0]));
    assert_eq!(v["distance"], 5);
    assert!(v["predicted_growth"].as_f64().unwrap() > 1.7);
    let none = stdout(&alienzoo(
        &["cfe", "--model", "m.json", "--x", "0,4,0,1,0"],
        dir.path(),
    ));
    assert_eq!(none.trim(), "none (near-optimal)");
    let strict = stdout(&alienzoo(
        &[
            "cfe",
            "--model",
            "m.json",
            "--x",
            "0,0,0,0,0",
            "--mode",
            "strict-improve",
        ],
        dir.path(),
    ));
    assert!(strict.contains("suggestion"));

    let bad = alienzoo(
        &["cfe", "--model", "m.json", "--x", "0,9,0,0,0"],
        dir.path(),
    );
    assert!(!bad.status.success());
    let missing = alienzoo(
        &["cfe", "--model", "nope.json", "--x", "0,0,0,0,0"],
        dir.path(),
    );
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));
}

#[test]
fn generate_writes_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&alienzoo(
        &["generate", "--experiment", "1", "--out", "grid.csv"],
        dir.path(),
    ));
    let text = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(text.lines().count(), 16_807 + 1);
    assert!(text.starts_with("p1,p2,p3,p4,p5,growth"));
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("study.toml"), "experiment = 1\nseed = 7\n").unwrap();
    let a = stdout(&alienzoo(
        &[
            "simulate",
            "--policy",
            "cfe-follower",
            "--n",
            "12",
            "--config",
            "study.toml",
            "--seed",
            "7",
            "--out",
            "cfe",
        ],
        dir.path(),
    ));
    assert!(a.contains("12 sessions (cfe)"), "{a}");
    stdout(&alienzoo(
        &[
            "simulate", "--policy", "greedy", "--n", "12", "--seed", "7", "--out", "control",
        ],
        dir.path(),
    ));
    stdout(&alienzoo(
        &[
            "simulate", "--policy", "speeder", "--n", "4", "--seed", "7", "--out", "fast",
        ],
        dir.path(),
    ));

    let report = stdout(&alienzoo(
        &[
            "analyze",
            "--export",
            "cfe/long.csv",
            "--export",
            "control/long.csv",
            "--export",
            "fast/long.csv",
            "--survey",
            "cfe/survey.csv",
            "--survey",
            "control/survey.csv",
            "--survey",
            "fast/survey.csv",
            "--out",
            "report",
        ],
        dir.path(),
    ));
    assert!(report.starts_with("28 sessions, 4 excluded"), "{report}");
    assert!(report.contains("final_pack_size: n = 12/12"), "{report}");

    let out = dir.path().join("report");
    let quality = std::fs::read_to_string(out.join("quality.csv")).unwrap();
    assert_eq!(quality.lines().count(), 29);
    assert_eq!(
        quality
            .lines()
            .filter(|l| l.starts_with("speeder-") && l.ends_with(",1"))
            .count(),
        4
    );
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 12);
    let tests = std::fs::read_to_string(out.join("tests.csv")).unwrap();
    assert_eq!(tests.lines().count(), 5);
    let lmm: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("lmm.json")).unwrap()).unwrap();
    assert!(lmm["fixed_effects"]["(Intercept)"].is_number(), "{lmm}");

    // Pooling the same cohort twice is refused.
    let dup = alienzoo(
        &[
            "analyze",
            "--export",
            "cfe/long.csv",
            "--export",
            "cfe/long.csv",
            "--out",
            "r2",
        ],
        dir.path(),
    );
    assert!(!dup.status.success());
}

#[test]
fn follower_needs_the_treatment_arm() {
    let dir = tempfile::tempdir().unwrap();
    let o = alienzoo(
        &[
            "simulate",
            "--policy",
            "cfe-follower",
            "--condition",
            "control",
            "--n",
            "2",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
}

#[test]
fn serve_answers_over_tcp() {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpStream;
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("study.toml"),
        "experiment = 2\nseed = 7\nbind = \"127.0.0.1:0\"\ndata_dir = \"data\"\n",
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_alienzoo"))
        .args(["serve", "--config", "study.toml"])
        .current_dir(dir.path())
        .env("NO_COLOR", "1")
        .env("RUST_LOG", "info")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let addr = lines
        .by_ref()
        .map_while(Result::ok)
        .find_map(|l| {
            l.split("listening on ")
                .nth(1)
                .map(|a| a.trim().to_string())
        })
        .expect("server reports its address");

    let body = r#"{"consent":true}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /api/session HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"kind\":\"instructions\""), "{response}");
    let log = std::fs::read_to_string(dir.path().join("data/events.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.contains("\"kind\":\"created\""));
}
