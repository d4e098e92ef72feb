//! End-to-end tests of the lanesim binary.

use std::path::Path;
use std::process::{Command, Output};

fn lanesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanesim"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn tile_csv_golden_56x56_on_625() {
    let out = stdout(&lanesim(&[
        "tile", "--height", "56", "--width", "56", "--pes", "625",
    ]));
    assert_eq!(out, data("tile_56x56_pes625.csv"));
    assert_eq!(out.lines().count(), 7);
    assert!(out.lines().any(|l| l == "RS,0,50,56,6,336"));
    assert!(out.lines().any(|l| l == "SR,50,0,6,50,300"));
}

#[test]
fn command_stream_fixture_is_bit_exact() {
    let out = stdout(&lanesim(&[
        "commands",
        "--layer",
        "2x6x6x2,k2,s1,p0",
        "--pes",
        "16",
    ]));
    assert_eq!(out, data("commands_2x6x6x2_k2_pes16.txt"));
    assert!(out.lines().nth(2).unwrap().starts_with("0,13,Start"));
}

#[test]
fn analyze_report_is_byte_deterministic() {
    let args = [
        "vgg16",
        "--pes",
        "625",
        "--precision",
        "int8x4",
        "--mode",
        "analyze",
    ];
    let a = stdout(&lanesim(&args));
    let b = stdout(&lanesim(&args));
    assert_eq!(a, b);
    // the 56x56x256x256 rows show the six-tile 83.6% spatial utilization
    let row = a.lines().find(|l| l.starts_with("conv3_2,")).unwrap();
    assert!(row.starts_with("conv3_2,6,0.836267,"), "row was {row}");
    assert!(a.contains("peak_gflops,1250.0000"));
}

#[test]
fn fp32_peak_row_at_16_pes() {
    let out = stdout(&lanesim(&["vgg16", "--pes", "16", "--precision", "fp32"]));
    assert!(out.contains("peak_gflops,8.0000"));
}

#[test]
fn simulate_trivial_layer_with_verify() {
    let out = stdout(&lanesim(&[
        "simulate", "--layer", "1x1x1x1", "--pes", "1", "--verify",
    ]));
    assert!(out.contains("verified against reference"));
}

#[test]
fn verify_canned_seeds() {
    for seed in ["1", "2", "3"] {
        let out = lanesim(&["verify", "--seed", seed, "--count", "25"]);
        assert!(
            out.status.success(),
            "verify --seed {seed} failed:\n{}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn unschedulable_kernel_reports_constraint_and_fails() {
    let out = lanesim(&["simulate", "--layer", "4x16x16x4,k7,s1,p0", "--pes", "64"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unschedulable"), "stderr was: {err}");
    assert!(err.contains("input buffer"), "stderr was: {err}");
}

#[test]
fn config_file_run_with_fixtures_and_outputs() {
    let dir = std::env::temp_dir().join(format!("lanesim-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("run.json");
    let out_tensor = dir.join("out.json");
    let stats = dir.join("stats.json");
    std::fs::write(
        &config,
        r#"{
  "layer": {"c_in": 2, "c_out": 3, "h_in": 6, "w_in": 6,
            "k_y": 3, "k_x": 3, "stride": 1, "pad": 1, "precision": "fp32"},
  "core": {"num_pes": 16, "precision": "fp32"},
  "input": {"layout": "WHC", "dims": [6, 6, 2], "seed": 11},
  "weights": {"layout": "KyKxCiCo", "dims": [3, 3, 2, 3], "seed": 12}
}"#,
    )
    .unwrap();
    let out = stdout(&lanesim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--verify",
        "--out-tensor",
        out_tensor.to_str().unwrap(),
        "--stats",
        stats.to_str().unwrap(),
    ]));
    assert!(out.contains("verified against reference"));

    let tensor: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_tensor).unwrap()).unwrap();
    assert_eq!(tensor["layout"], "CHW");
    assert_eq!(tensor["dims"], serde_json::json!([3, 6, 6]));

    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    let t = &stats["stats"]["total"];
    let total = t["total_cycles"].as_u64().unwrap();
    let parts = t["compute_cycles"].as_u64().unwrap()
        + t["input_stall_cycles"].as_u64().unwrap()
        + t["output_stall_cycles"].as_u64().unwrap()
        + t["pipeline_fill_cycles"].as_u64().unwrap();
    assert_eq!(total, parts);
    assert!(stats["gflops"].as_f64().unwrap() > 0.0);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn scaled_simulation_report_with_threads() {
    let out = Command::new(env!("CARGO_BIN_EXE_lanesim"))
        .args([
            "vgg16",
            "--pes",
            "64",
            "--precision",
            "fp32",
            "--mode",
            "both",
            "--verify",
            "--scale-channels",
            "16",
        ])
        .env("LANESIM_THREADS", "4")
        .output()
        .unwrap();
    let text = stdout(&out);
    assert!(text.contains("overall_gflops,"));
    assert!(text.contains("max_fraction_of_peak,"));
    assert_eq!(text.lines().count(), 1 + 13 + 3);
}

#[test]
fn paper_formula_flag_changes_strip_tile_prediction() {
    let base = stdout(&lanesim(&[
        "analyze",
        "--layer",
        "64x56x56x64,k3,s1,p1",
        "--pes",
        "625",
    ]));
    let square = stdout(&lanesim(&[
        "analyze",
        "--layer",
        "64x56x56x64,k3,s1,p1",
        "--pes",
        "625",
        "--paper-formula",
    ]));
    assert_ne!(base, square);
}
