use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SYSTEM_32: &str = "[system]
carrier_freq_hz = 73e9
bandwidth_hz = 1e9
num_antennas = 32
num_subcarriers = 32
";

/// Two scatterers at fractional bins (15.25, 10.37) and (25.35, 25.43).
const TWO_PATH_SCENE: &str = "
[scene]
scatterers = [
  { gain = [0.5, 0.5], theta_norm = 0.4765625, tau_norm = 0.3240625 },
  { gain = [0.5, 0.5], theta_norm = 0.7921875, tau_norm = 0.7946875 },
]
";

fn dtek(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtek"))
        .args(args)
        .output()
        .expect("spawn dtek")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth_two_path(dir: &TempDir) -> PathBuf {
    let cfg = write(dir, "two.toml", &format!("{SYSTEM_32}{TWO_PATH_SCENE}"));
    let chan = dir.path().join("two.bin");
    assert_ok(&dtek(&["synth", s(&cfg), "-o", s(&chan)]));
    chan
}

fn estimate_json(args: &[&str]) -> Value {
    let out = dtek(args);
    assert_ok(&out);
    serde_json::from_slice(&out.stdout).expect("estimate prints JSON")
}

fn path_coords(doc: &Value) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = doc["paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["theta_norm"].as_f64().unwrap(), p["tau_norm"].as_f64().unwrap()))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[test]
fn synthesized_scene_peaks_at_expected_bins() {
    let dir = TempDir::new().unwrap();
    let chan = synth_two_path(&dir);
    let h = dtek::ChannelMatrix::read_from(std::fs::File::open(&chan).unwrap()).unwrap();
    let g = dtek::spectral::idft2(&h);
    let policy = dtek::ThresholdPolicy::Relative { ratio: 0.5 };
    let mut bins: Vec<(usize, usize)> = dtek::spectral::detect_peaks(&g, &policy)
        .iter()
        .map(|b| (b.i, b.j))
        .collect();
    bins.sort();
    assert_eq!(bins, vec![(15, 10), (25, 25)]);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("two.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["scene"]["scatterers"].as_array().unwrap().len(), 2);
    assert!(manifest["seed"].is_u64());
}

#[test]
fn two_stage_rotation_recovers_fractional_parameters() {
    let dir = TempDir::new().unwrap();
    let chan = synth_two_path(&dir);
    let doc = estimate_json(&[
        "estimate", s(&chan), "--method", "rotation", "--stages", "11,11", "--threshold", "relative:0.5",
    ]);
    assert_eq!(doc["method"], "rotation");
    let coords = path_coords(&doc);
    assert_eq!(coords.len(), 2);
    assert_eq!((round4(coords[0].0), round4(coords[0].1)), (0.4766, 0.3241));
    assert_eq!((round4(coords[1].0), round4(coords[1].1)), (0.7922, 0.7947));
    assert!(doc["runtime_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(doc["settings"]["stages"], serde_json::json!([11, 11]));
}

#[test]
fn dft_method_returns_bin_centres() {
    let dir = TempDir::new().unwrap();
    let chan = synth_two_path(&dir);
    let doc = estimate_json(&["estimate", s(&chan), "--method", "dft", "--threshold", "relative:0.5"]);
    let coords = path_coords(&doc);
    assert_eq!(coords, vec![(15.0 / 32.0, 10.0 / 32.0), (25.0 / 32.0, 25.0 / 32.0)]);
}

#[test]
fn kronecker_omp_over_cap_exits_with_resource_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "big.toml",
        "[system]\ncarrier_freq_hz = 73e9\nbandwidth_hz = 1e9\nnum_antennas = 64\nnum_subcarriers = 64\n\n[experiment]\nnum_paths = 3\n",
    );
    let chan = dir.path().join("big.bin");
    assert_ok(&dtek(&["synth", s(&cfg), "-o", s(&chan), "--seed", "5"]));
    let out = dtek(&["estimate", s(&chan), "--method", "omp1d", "--dict-points", "200", "--paths", "3"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("memory cap"), "{err}");
}

#[test]
fn malformed_config_fails_with_config_code() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.toml", "[system]\ncarrier_freq_hz = \"fast\"\n");
    let out = dtek(&["synth", s(&bad), "-o", s(&dir.path().join("x.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    assert!(!dir.path().join("x.bin").exists());

    let typo = write(&dir, "typo.toml", &format!("{SYSTEM_32}\n[method]\nknid = \"dft\"\n"));
    let out = dtek(&["synth", s(&typo), "-o", s(&dir.path().join("y.bin"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_scene_gives_all_zero_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "zero.toml", &format!("{SYSTEM_32}\n[scene]\nscatterers = []\n"));
    let chan = dir.path().join("zero.bin");
    assert_ok(&dtek(&["synth", s(&cfg), "-o", s(&chan)]));
    let h = dtek::ChannelMatrix::read_from(std::fs::File::open(&chan).unwrap()).unwrap();
    assert_eq!(h.entries.dim(), (32, 32));
    assert!(h.entries.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    let doc = estimate_json(&["estimate", s(&chan)]);
    assert_eq!(doc["num_paths"], 0);
}

#[test]
fn estimate_rejects_bad_channel_file() {
    let dir = TempDir::new().unwrap();
    let junk = write(&dir, "junk.bin", "not a channel");
    assert_eq!(dtek(&["estimate", s(&junk)]).status.code(), Some(2));
}

const SWEEP_CONFIG: &str = "[system]
carrier_freq_hz = 73e9
bandwidth_hz = 1e9
num_antennas = 16
num_subcarriers = 16

[experiment]
trials = 4
num_paths = 2
methods = [\"dft\", \"rotation\", \"omp2d\"]

[method]
dict_points = 48
";

#[test]
fn sweep_shape_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.toml", SWEEP_CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_ok(&dtek(&["sweep", s(&cfg), "-o", s(&a), "--threads", "1"]));
    assert_ok(&dtek(&["sweep", s(&cfg), "-o", s(&b), "--threads", "3"]));
    let body_a = std::fs::read_to_string(&a).unwrap();
    assert_eq!(body_a, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = body_a.lines().collect();
    assert_eq!(lines.len(), 1 + 13 * 3, "default SNR grid has 13 points");
    assert!(lines[0].starts_with("method,snr_db"));

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"]["threads"], 1);
    assert_eq!(manifest["seeds"]["seed_base"], 0);
    assert_eq!(manifest["runtimes"].as_array().unwrap().len(), 39);
    assert!(manifest["host"]["cpus"].is_u64());
}

#[test]
fn sweep_flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.toml", SWEEP_CONFIG);
    let out = dir.path().join("o.csv");
    assert_ok(&dtek(&[
        "sweep", s(&cfg), "-o", s(&out), "--snr", "-10:10:10", "--trials", "2", "--method", "dft,rotation", "--seed", "9",
    ]));
    let body = std::fs::read_to_string(&out).unwrap();
    assert_eq!(body.lines().count(), 1 + 3 * 2);
    assert!(body.lines().nth(1).unwrap().starts_with("dft,-10"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"]["trials"], 2);
    assert_eq!(manifest["seeds"]["seed_base"], 9);
}

#[test]
fn failed_sweep_leaves_no_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.toml", SWEEP_CONFIG);
    let out = dir.path().join("never.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_dtek"))
        .args(["sweep", s(&cfg), "-o", s(&out), "--snr", "0:0:1", "--trials", "1"])
        .env("DTEK_INJECT_WRITE_FAILURE", "1")
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(!out.exists());
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["sweep.toml".to_string()], "temporary files must be cleaned up");
}

#[test]
fn sweep_without_output_path_is_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.toml", SWEEP_CONFIG);
    assert_eq!(dtek(&["sweep", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn runtime_table_layout() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "rt.toml", SYSTEM_32);
    let out = dir.path().join("rt.csv");
    assert_ok(&dtek(&[
        "runtime-table", s(&cfg), "-o", s(&out), "--sizes", "8,16", "--q", "1,2", "--repetitions", "1", "--method",
        "rotation,omp2d,music", "--dict-points", "32", "--music-grid", "32",
    ]));
    let body = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "method,q1_8x8,q1_16x16,q2_8x8,q2_16x16");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 5);
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().unwrap() >= 0.0), "{line}");
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 12);
}
