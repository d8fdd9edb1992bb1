use std::fs;

use heatlab::cli::run;
use heatlab::report::load_report;

fn heatlab(args: &[&str]) -> i32 {
    run(std::iter::once("heatlab").chain(args.iter().copied()))
}

#[test]
fn same_seed_gives_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let code = heatlab(&[
            "verify", "--model", "path_killed(32)", "--theta", "const(0.5)*pow(3)", "--budget", "2000", "--seed", "7",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let (ra, ok_a) = load_report(&a.join("report.json")).unwrap();
    let (rb, ok_b) = load_report(&b.join("report.json")).unwrap();
    assert!(ok_a && ok_b);
    assert_eq!(ra.hash, rb.hash);
    assert_eq!(ra.config.seed, 7);
    assert!(!ra.library_version.is_empty());
}

#[test]
fn exit_codes_are_distinct() {
    // parse failure
    assert_eq!(heatlab(&["profile", "--phi", "pow(-0.5"]), 2);
    assert_eq!(heatlab(&["profile", "--phi", "pow(0.5)"]), 2);
    assert_eq!(heatlab(&["frobnicate"]), 2);
    // δ = 0 Nash fails on a conservative chain: constant functions have zero energy
    assert_eq!(
        heatlab(&["verify", "--model", "cycle(64)", "--theta", "from-phi:pow(-0.5)", "--delta", "0", "--budget", "2000", "--seed", "7"]),
        3
    );
    assert_eq!(heatlab(&["profile", "--phi", "pow(-1)*logp(1,1)"]), 3);
}

#[test]
fn tampered_report_fails_its_recheck() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    assert_eq!(heatlab(&["constants", "--phi", "pow(-1)", "--out", out.to_str().unwrap()]), 0);
    let path = out.join("report.json");
    assert_eq!(heatlab(&["report", "--input", path.to_str().unwrap()]), 0);
    let text = fs::read_to_string(&path).unwrap().replace("\"seed\":0", "\"seed\":1");
    fs::write(&path, text).unwrap();
    assert_eq!(heatlab(&["report", "--input", path.to_str().unwrap()]), 4);
}

#[test]
fn empty_grid_is_refused() {
    assert_ne!(heatlab(&["profile", "--phi", "pow(-1)", "--grid", "1:10:0"]), 0);
    assert_ne!(heatlab(&["profile", "--phi", "pow(-1)", "--grid", "10:1:5"]), 0);
}

#[test]
fn constants_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k");
    assert_eq!(heatlab(&["constants", "--phi", "pow(-1)", "--eps", "1", "--out", out.to_str().unwrap()]), 0);
    let (r, ok) = load_report(&out.join("report.json")).unwrap();
    assert!(ok);
    let k = &r.results["constants"];
    assert_eq!(k["lambda"].as_u64(), Some(43));
    assert!((k["c_eps"].as_f64().unwrap() - 1893.0238095).abs() < 1e-4);
    assert_eq!(k["small_c_eps"].as_f64(), Some(0.5));
}

#[test]
fn csv_format_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    assert_eq!(heatlab(&["profile", "--phi", "pow(-0.5)", "--grid", "0.1:10:8", "--format", "csv", "--out", out.to_str().unwrap()]), 0);
    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(csv.starts_with("r,phi,theta,theta_tilde"));
    assert_eq!(csv.lines().count(), 9);
}
