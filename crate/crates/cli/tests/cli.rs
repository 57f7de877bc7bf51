use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entroscope"))
        .args(args)
        .env("ENTROSCOPE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn parse(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("not JSON ({e}): {}", stdout(o)))
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = format!("{}/schema/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap();
    jsonschema::JSONSchema::compile(&value).expect("schema compiles")
}

fn assert_valid(schema: &jsonschema::JSONSchema, doc: &Value) {
    if let Err(errors) = schema.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:#?}");
    }
}

fn real(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap(),
        Value::String(s) if s == "+inf" => f64::INFINITY,
        other => panic!("not a real: {other}"),
    }
}

fn tmp_file(name: &str, contents: &str) -> String {
    let dir = std::env::temp_dir().join(format!("entroscope-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn verify_kappa_mf_perm_example() {
    let o = run(&["verify", "kappa-mf-perm", "--n", "4", "--ell", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v = parse(&o);
    let computed = real(&v["results"]["computed"]);
    let expected = 6.0 * 2f64.ln() / 24f64.ln();
    assert!((computed - 1.3086258).abs() < 1e-7, "{computed}");
    assert!((computed - expected).abs() / expected <= 1e-6);
    assert!(real(&v["results"]["relative_error"]) <= 1e-6);
}

#[test]
fn reduce_star_example() {
    let star = tmp_file(
        "star4.json",
        r#"{"n": 4, "edges": [[0, 1, 1.0], [0, 2, 1.0], [0, 3, 1.0]]}"#,
    );
    let o = run(&["reduce", "--graph", &star, "--node", "0", "--report"]);
    let v = parse(&o);
    let kappa = &v["results"]["report"]["kappa"];
    assert!((real(&kappa["before"]) - 0.9217860).abs() <= 1e-6, "{kappa}");
    assert!((real(&kappa["after"]) - 0.8412396).abs() <= 1e-7, "{kappa}");
    assert_eq!(v["results"]["report"]["kappa_monotone"], Value::Bool(false));
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn permanent_identity_example() {
    let id3 = tmp_file("id3.csv", "1,0,0\n0,1,0\n0,0,1\n");
    for matrix in [id3.as_str(), "id3"] {
        let o = run(&["permanent", "--matrix", matrix, "--p", "critical"]);
        assert_eq!(o.status.code(), Some(0));
        let b = &parse(&o)["results"]["bound"];
        assert_eq!(real(&b["slack"]), 0.0);
        assert_eq!(b["equality"], "identity");
    }
}

#[test]
fn reports_validate_against_schema() {
    let s = schema("run_report.schema.json");
    let cases: &[&[&str]] = &[
        &["gap", "--graph", "cycle5"],
        &["kappa", "--mean-field", "2:1.0", "--n", "4", "--space", "perm"],
        &["lsi", "--graph", "k3"],
        &["mlsi", "--graph", "path3", "--restarts", "4"],
        &["kappa", "--graph", "k3", "--space", "product:2"],
        &["kappa", "--mean-field", "2:1.0", "--n", "4", "--space", "slice:2"],
        &["verify", "star-bounds", "--n", "4"],
        &["verify", "kappa-bl", "--n", "5", "--r", "2"],
        &["verify", "multislice-conjecture", "--n", "4", "--colors", "2,2"],
        &["tensorize", "--hypergraph", "k3", "--max-N", "2"],
        &["conjecture", "gap", "--graph", "star4"],
        &["conjecture", "octopus", "--graph", "star4", "--node", "0", "--samples", "50"],
        &["conjecture", "cycle-path", "--n-max", "4"],
        &["reduce", "--graph", "path4", "--node", "1"],
        &["permanent", "--matrix", "ones4", "--p", "2", "--correlation"],
        &["permanent", "--fuzz", "40", "--fuzz-max-n", "5"],
        &["decay", "--graph", "k3", "--f0", "dirac"],
        &["decay", "--mean-field", "2:1.0", "--n", "3", "--space", "perm", "--t0", "0.1", "--steps", "5"],
        &["report", "all", "--n-max", "3"],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stdout(&o));
        assert_valid(&s, &parse(&o));
    }
}

#[test]
fn dirac_decay_starts_at_log_state_count() {
    let o = run(&["decay", "--graph", "k3", "--f0", "dirac", "--steps", "3"]);
    let v = parse(&o);
    let ent0 = real(&v["results"]["curve"]["ent_values"][0]);
    assert!((ent0 - 6f64.ln()).abs() < 1e-12);
}

fn strip_wall_time(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("\"wall_time_ms\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn identical_invocations_are_byte_identical() {
    let cases: &[&[&str]] = &[
        &["kappa", "--graph", "cycle5", "--seed", "7", "--restarts", "8"],
        &["decay", "--graph", "k4", "--f0", "random", "--seed", "3", "--steps", "6"],
        &["permanent", "--fuzz", "50", "--seed", "11"],
        &["conjecture", "octopus", "--graph", "path4", "--node", "1", "--samples", "40", "--seed", "5"],
    ];
    for args in cases {
        let a = strip_wall_time(&stdout(&run(args)));
        let b = strip_wall_time(&stdout(&run(args)));
        assert_eq!(a, b, "{args:?}");
        let one = Command::new(env!("CARGO_BIN_EXE_entroscope"))
            .args(*args)
            .env("ENTROSCOPE_THREADS", "1")
            .output()
            .unwrap();
        assert_eq!(a, strip_wall_time(&stdout(&one)), "{args:?} with one thread");
    }
}

#[test]
fn input_errors_exit_2_with_one_json_line() {
    let s = schema("error.schema.json");
    let bad = tmp_file("bad.json", "{ not json");
    let negative = tmp_file("neg.json", r#"{"n": 3, "edges": [[0, 1, -1.0], [1, 2, 1.0]]}"#);
    let cases: &[&[&str]] = &[
        &["kappa", "--graph", &bad],
        &["kappa", "--graph", &negative],
        &["kappa", "--graph", "does-not-exist.json"],
        &["kappa", "--graph", "k4", "--space", "torus"],
        &["kappa"],
        &["verify", "no-such-form", "--n", "4"],
        &["verify", "kappa-mf-perm", "--n", "4"],
        &["permanent", "--matrix", "id3", "--p", "0.5"],
        &["reduce", "--graph", "k3", "--node", "7"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stdout(&o));
        let text = stdout(&o);
        assert_eq!(text.trim_end().lines().count(), 1, "{args:?}: {text}");
        assert_valid(&s, &parse(&o));
    }
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_entroscope"))
        .args(["gap", "--graph", "k3"])
        .env("ENTROSCOPE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(parse(&o)["error"]["kind"], "input");
}

#[test]
fn failed_verification_exits_1_with_report() {
    // an absurd tolerance on an optimized constant cannot be met
    let o = run(&["verify", "lsi-kn", "--n", "4", "--tol", "0", "--restarts", "1", "--max-iters", "1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let v = parse(&o);
    assert_eq!(v["passed"], false);
    assert_valid(&schema("run_report.schema.json"), &v);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let v = run(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn hypergraph_file_formats_are_detected() {
    let graph = tmp_file("k3.json", r#"{"n": 3, "edges": [[0, 1, 1.0], [0, 2, 1.0], [1, 2, 1.0]]}"#);
    let hyper = tmp_file(
        "k3h.json",
        r#"{"n": 3, "blocks": [{"set": [0, 1], "weight": 2.0}, {"set": [0, 2], "weight": 2.0}, {"set": [1, 2], "weight": 2.0}]}"#,
    );
    let mf = tmp_file("mf3.json", r#"{"n": 3, "w": {"2": 2.0}}"#);
    let gaps: Vec<f64> = [&graph, &hyper, &mf]
        .iter()
        .map(|p| real(&parse(&run(&["gap", "--hypergraph", p]))["results"]["value"]))
        .collect();
    assert!((gaps[0] - 3.0).abs() < 1e-12, "{gaps:?}");
    assert!(gaps.iter().all(|g| (g - gaps[0]).abs() < 1e-12), "{gaps:?}");
}
