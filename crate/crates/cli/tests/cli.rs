use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poalab"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn validate_ok_and_broken() {
    let ok = run(&["validate", &fixture("braess.json")]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("ok: 4 nodes, 5 arcs"));

    let bad = run(&["validate", &fixture("broken.json")]);
    assert_eq!(bad.status.code(), Some(3));
    let err = stderr(&bad);
    assert_eq!(err.matches("violation:").count(), 3, "{err}");
}

#[test]
fn poa_matches_closed_form() {
    let o = run(&["poa", &fixture("pigou_b4.json")]);
    assert_eq!(o.status.code(), Some(0));
    let poa = field(&stdout(&o), "poa");
    assert!((poa - poalab::scaling::pigou_poa(4.0, 1.0)).abs() < 1e-6, "{poa}");
}

#[test]
fn solve_reports_flows() {
    let o = run(&["solve", "--objective", "so", "--gap", "1e-10", &fixture("twolink_linear.json")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!((field(&text, "social_cost") - 5.875).abs() < 1e-9);
    let row = text.lines().skip_while(|l| *l != "arc,tail,head,flow").nth(1).unwrap();
    let flow: f64 = row.strip_prefix("0,s,t,").unwrap().parse().unwrap();
    assert!((flow - 1.75).abs() < 1e-9, "{row}");
}

#[test]
fn non_convergence_exits_2() {
    let o = run(&[
        "solve",
        "--gap",
        "1e-15",
        "--max-iters",
        "1",
        &fixture("three_path.json"),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["poa", "/nonexistent/instance.json"]).status.code(), Some(1));
    assert_eq!(
        run(&["sweep", "--t-grid", "log:1:2", &fixture("equal_degree.json")]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["sweep", "--lambda", "0.5,0.6", &fixture("diamond_bpr.json")]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_documents_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let syntax = dir.path().join("syntax.json");
    fs::write(&syntax, "{\"schema_version\": 1,\n \"nodes\": [").unwrap();
    let o = run(&["validate", syntax.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let unknown = dir.path().join("unknown.json");
    let text = fs::read_to_string(fixture("twolink_linear.json"))
        .unwrap()
        .replacen("\"head\": \"t\"", "\"head\": \"q\"", 1);
    fs::write(&unknown, text).unwrap();
    assert_eq!(run(&["solve", unknown.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn oracle_compare_limits_path_count() {
    let o = run(&["oracle-compare", &fixture("three_path.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("paths: 3"));

    // a 3x3 grid has 6 monotone paths, plus backtracking ones
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    let mut arcs = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let n = |a: usize, b: usize| format!("\"{a}{b}\"");
            if i < 2 {
                arcs.push(format!("{{\"tail\": {}, \"head\": {}, \"cost\": {{\"family\": \"affine\", \"slope\": 1.0, \"intercept\": 1.0}}}}", n(i, j), n(i + 1, j)));
            }
            if j < 2 {
                arcs.push(format!("{{\"tail\": {}, \"head\": {}, \"cost\": {{\"family\": \"affine\", \"slope\": 1.0, \"intercept\": 1.0}}}}", n(i, j), n(i, j + 1)));
            }
        }
    }
    arcs.push("{\"tail\": \"01\", \"head\": \"10\", \"cost\": {\"family\": \"constant\", \"value\": 1.0}}".into());
    let nodes: Vec<String> = (0..3).flat_map(|i| (0..3).map(move |j| format!("\"{i}{j}\""))).collect();
    fs::write(
        &grid,
        format!(
            "{{\"schema_version\": 1, \"nodes\": [{}], \"arcs\": [{}], \"od_pairs\": [{{\"origin\": \"00\", \"destination\": \"22\", \"demand\": 1.0}}]}}",
            nodes.join(", "),
            arcs.join(", ")
        ),
    )
    .unwrap();
    assert_eq!(run(&["validate", grid.to_str().unwrap()]).status.code(), Some(0));
    let o = run(&["oracle-compare", grid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stderr(&o).contains("paths"));
}

#[test]
fn tntp_input() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.tntp");
    let trips = dir.path().join("trips.tntp");
    fs::write(
        &net,
        "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 2\n<END OF METADATA>\n~ init term cap len fft B power ;\n1 2 1 1 1 1 1 ;\n1 2 1 1 2 0.5 1 ;\n",
    )
    .unwrap();
    fs::write(&trips, "<TOTAL OD FLOW> 5\n<END OF METADATA>\nOrigin 1\n 2 : 3.0;\n").unwrap();
    let o = run(&[
        "poa",
        "--format",
        "tntp",
        "--trips",
        trips.to_str().unwrap(),
        net.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("declared total ignored"));
    // same instance as the linear two-link fixture shifted by one
    let text = stdout(&o);
    assert!((field(&text, "c_ne") - 9.0).abs() < 1e-6, "{text}");

    let missing = run(&["poa", "--format", "tntp", net.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn sweep_writes_file_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--t-grid",
        "1,10,100,1000",
        "--out",
        out.to_str().unwrap(),
        &fixture("twolink_bpr_b1.json"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let err = stderr(&o);
    for key in ["# saturation_point", "# decay_exponent", "# L_estimate", "# limit_ratio", "# l_upper_bound", "# pigou check"] {
        assert!(err.contains(key), "missing {key} in {err}");
    }
}

#[test]
fn sweep_needs_beta_for_piecewise() {
    let o = run(&["sweep", &fixture("piecewise.json")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--beta"));
}
