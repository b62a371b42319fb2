//! End-to-end CLI checks: exit codes, witnesses, strict parsing, and
//! serialize→parse→serialize round trips.

use std::path::Path;
use std::process::{Command, Output};

fn cpdil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpdil"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn perm_sigma_matches_the_stable_argsort() {
    let out = cpdil(&["perm-sigma", "--values", "2,1,2,1"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["sigma"], serde_json::json!([2, 4, 1, 3]));
    assert_eq!(v["inversions"], serde_json::json!(3));
}

#[test]
fn perm_chains_have_inversion_length() {
    let out = cpdil(&["perm-chains", "--values", "3,2,1"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["length"], serde_json::json!(3));
    assert_eq!(v["count"], serde_json::json!(2));
}

#[test]
fn verify_example_bhat_exits_zero() {
    let out = cpdil(&["verify-example", "bhat", "--param-c", "6"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["verdict"], serde_json::json!(true));
    assert!(v["claims"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["id"] == "norm-T-unit"));
}

#[test]
fn check_exchange_on_flip_example_exits_one_with_witness() {
    let out = cpdil(&["check-exchange", &fixture("flip_example.json")]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["ok"], serde_json::json!(false));
    assert_eq!(v["witness"]["triple"], serde_json::json!([1, 2, 3]));
}

#[test]
fn strong_commute_unitalization_pair_exits_one_with_dimension_witness() {
    let out = cpdil(&["strong-commute", &fixture("unitalization_pair.json")]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["commutes_strongly"], serde_json::json!(false));
    assert_eq!(v["witness"]["kind"], serde_json::json!("dimension"));
}

#[test]
fn kraus_min_collapses_duplicates_and_round_trips() {
    let out = cpdil(&["kraus-min", &fixture("duplicated_kraus.json")]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["kraus"].as_array().unwrap().len(), 1);
    // Serialize→parse→serialize is byte-identical.
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let reparsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&reparsed).unwrap() + "\n";
    assert_eq!(text, again);
}

#[test]
fn dilate_row_reports_strong_tower() {
    let out = cpdil(&["dilate-row", &fixture("bhat_row.json"), "--level", "3"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["strong"], serde_json::json!(true));
    assert!(v["interior_coisometry_residual"].as_f64().unwrap() <= 1e-10);
    assert!(v["compression_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn gns_and_unitalize_of_the_contractive_fixture() {
    let out = cpdil(&["gns", &fixture("bhat_cpmap.json")]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    // Three independent Kraus operators: multiplicity 3 on the single block.
    assert_eq!(v["mult"], serde_json::json!([[3]]));
    let out = cpdil(&["unitalize", &fixture("bhat_cpmap.json")]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["algebra"]["blocks"], serde_json::json!([2, 1]));
}

#[test]
fn build_product_from_swap_flip_validates() {
    let out = cpdil(&[
        "build-product",
        &fixture("swap_flip_d2.json"),
        "--cap",
        "2,2",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["validation_passed"], serde_json::json!(true));
    assert_eq!(v["members"]["1,1"], serde_json::json!([[4]]));
}

#[test]
fn two_param_dilation_of_permutation_pair() {
    let out = cpdil(&[
        "two-param-dilation",
        &fixture("perm_pair_c3.json"),
        "--cap",
        "1,1",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["system"]["validation_passed"], serde_json::json!(true));
}

#[test]
fn classify_and_superproduct_of_the_identity_triple() {
    let out = cpdil(&[
        "classify-triple",
        &fixture("identity_triple.json"),
        "--cap",
        "2",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["is_strong"], serde_json::json!(true));
    assert_eq!(v["is_good"], serde_json::json!(true));
    assert_eq!(v["is_markov_dilated"], serde_json::json!(true));
    let out = cpdil(&[
        "superproduct",
        &fixture("identity_triple.json"),
        "--cap",
        "2",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["is_product"], serde_json::json!(true));
    assert_eq!(v["members"]["1"], serde_json::json!([[1]]));
}

#[test]
fn malformed_json_exits_two_with_pointer_path() {
    let dir = std::env::temp_dir().join("cpdil-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(
        &path,
        r#"{"schema":"cpmap","version":1,"algebra":{"blocks":[2]},"kraus":[[[["oops"]]]]}"#,
    )
    .unwrap();
    let out = cpdil(&["gns", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("kraus"),
        "stderr should point at the offending field: {err}"
    );
}

#[test]
fn unknown_field_is_rejected() {
    let dir = std::env::temp_dir().join("cpdil-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("extra.json");
    std::fs::write(
        &path,
        r#"{"schema":"cpmap","version":1,"algebra":{"blocks":[1]},"kraus":[],"stray":0}"#,
    )
    .unwrap();
    let out = cpdil(&["gns", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seeded_reports_are_deterministic() {
    let a = cpdil(&["verify-example", "parrot", "--trials", "50", "--seed", "7"]);
    let b = cpdil(&["verify-example", "parrot", "--trials", "50", "--seed", "7"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn nonpositive_tolerance_exits_two() {
    let out = cpdil(&["perm-sigma", "--values", "1,2", "--tol-rank", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_a_file() {
    let dir = std::env::temp_dir().join("cpdil-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sigma.json");
    let out = cpdil(&[
        "perm-sigma",
        "--values",
        "1,2,1,2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["sigma"], serde_json::json!([1, 3, 2, 4]));
}
