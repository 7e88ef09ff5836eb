//! End-to-end tests of the command line front end: logging, output files,
//! rerun determinism, error reporting, and the row-count contracts of the
//! table-producing commands.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpt-classify"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn");
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Recursively compares every file of two run directories byte for byte.
fn assert_dirs_identical(a: &Path, b: &Path) {
    let list = |d: &Path| {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let files = list(a);
    assert_eq!(files, list(b), "different file sets");
    for f in files {
        let (ba, bb) = (std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap());
        assert_eq!(ba, bb, "file {f} differs between reruns");
    }
}

/// A small eight-class sphere config; `extra` is appended verbatim.
fn eight_class_config(dir: &Path, extra: &str) -> String {
    let mut cfg = String::from(
        r#"
seed = 11

[frequencies]
lo_radps = 1.0e2
hi_radps = 1.0e6
count = 4

[noise]
snr_train_db = 20.0

[split]
test_fraction = 0.25
mccv_iterations = 4

[methods]
list = ["logistic"]
"#,
    );
    for (i, (alpha, sigma)) in [
        (0.004, 1.0e7),
        (0.006, 1.5e7),
        (0.008, 2.5e7),
        (0.011, 4.0e7),
        (0.015, 6.0e6),
        (0.02, 1.2e7),
        (0.027, 2.0e7),
        (0.035, 3.2e7),
    ]
    .iter()
    .enumerate()
    {
        cfg.push_str(&format!(
            r#"
[[class]]
id = {}
m_alpha_m = {alpha}
s_alpha_m = {}
m_sigma_spm = {sigma}
s_sigma_spm = {}
variations = 12

  [[class.geometry]]
  kind = "sphere"
  alpha_m = {alpha}
  sigma_spm = {sigma}
"#,
            i + 1,
            alpha * 0.01,
            sigma * 0.02,
        ));
    }
    cfg.push_str(extra);
    let path = dir.join("exp.toml");
    std::fs::write(&path, cfg).unwrap();
    path.display().to_string()
}

#[test]
fn build_logs_every_class_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "");
    let run1 = tmp.path().join("run1");
    let run2 = tmp.path().join("run2");
    let out = run_ok(&["build", "--config", &cfg, "--out", run1.to_str().unwrap()]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for class in 1..=8 {
        assert!(
            stdout.contains(&format!("class {class} ")),
            "missing count log for class {class}:\n{stdout}"
        );
    }
    let dict = read(&run1, "dictionary.csv");
    // Header plus 8 x 12 sample rows.
    assert_eq!(dict.lines().count(), 1 + 96);
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(&run1, "dictionary.sidecar.json")).unwrap();
    assert_eq!(sidecar["class_counts"], serde_json::json!([12; 8].to_vec()));
    assert_eq!(sidecar["snr_train_db"], serde_json::json!(20.0));

    run_ok(&["build", "--config", &cfg, "--out", run2.to_str().unwrap()]);
    assert_dirs_identical(&run1, &run2);
}

#[test]
fn manifest_lists_outputs_and_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "");
    let run = tmp.path().join("run");
    run_ok(&["build", "--config", &cfg, "--out", run.to_str().unwrap()]);
    let manifest: serde_json::Value = serde_json::from_str(&read(&run, "manifest.json")).unwrap();
    let files: Vec<&str> =
        manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["dictionary.csv", "dictionary.sidecar.json"]);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    for f in manifest["files"].as_array().unwrap() {
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn p_schedule_builds_one_dictionary_per_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "\n[dictionary]\np_schedule = [8, 16]\n");
    let run = tmp.path().join("run");
    run_ok(&["build", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(read(&run, "dictionary_p8.csv").lines().count(), 1 + 8 * 8);
    assert_eq!(read(&run, "dictionary_p16.csv").lines().count(), 1 + 16 * 8);
}

#[test]
fn compare_emits_methods_times_schedule_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(
        tmp.path(),
        "\n[dictionary]\np_schedule = [12, 16]\n",
    );
    // Two methods, two P values -> four data rows.
    let run = tmp.path().join("run");
    let cfg2 = {
        let text = std::fs::read_to_string(&cfg).unwrap();
        let text = text.replace("list = [\"logistic\"]", "list = [\"logistic\", \"tree\"]");
        std::fs::write(&cfg, text).unwrap();
        cfg
    };
    run_ok(&["compare", "--config", &cfg2, "--out", run.to_str().unwrap()]);
    let csv = read(&run, "compare.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4, "{csv}");
    assert!(lines[0].starts_with("method,p_per_class,snr_train_db,snr_test_db,kappa_mean"));
    assert!(lines[1].starts_with("logistic,12,"));
    assert!(lines[2].starts_with("tree,12,"));
    assert!(lines[3].starts_with("logistic,16,"));
    // Every kappa cell parses as a number in [-1, 1].
    for row in &lines[1..] {
        for cell in row.split(',').skip(4) {
            let v: f64 = cell.parse().unwrap();
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn sweep_without_axes_is_a_single_cell_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "");
    let run = tmp.path().join("run");
    run_ok(&["sweep", "--config", &cfg, "--out", run.to_str().unwrap()]);
    let csv = read(&run, "sweep.csv");
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("logistic,4,20,20,,,,,11,"));
}

#[test]
fn sweep_grid_is_full_factorial() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = r#"
[sweep]
m_values = [2, 4]
snr_values_db = [10.0, 20.0]
seeds = [1, 2, 3]
"#;
    let cfg = eight_class_config(tmp.path(), extra);
    let run = tmp.path().join("run");
    run_ok(&["sweep", "--config", &cfg, "--out", run.to_str().unwrap()]);
    let csv = read(&run, "sweep.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 3, "{csv}");
}

#[test]
fn sweep_hyper_axis_expands_and_applies() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = r#"
[[sweep.hyper_axis]]
method = "logistic"
key = "max_iter"
values = [5, 200]
"#;
    let cfg = eight_class_config(tmp.path(), extra);
    let run = tmp.path().join("run");
    run_ok(&["sweep", "--config", &cfg, "--out", run.to_str().unwrap()]);
    let csv = read(&run, "sweep.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[1].contains(",max_iter,5,"));
    assert!(lines[2].contains(",max_iter,200,"));
    let median = |row: &str| row.split(',').nth(12).unwrap().parse::<f64>().unwrap();
    // Five optimizer iterations must score worse than two hundred.
    assert!(median(lines[1]) < median(lines[2]), "{csv}");
}

#[test]
fn noise_check_reports_calibrated_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "");
    let run = tmp.path().join("run");
    run_ok(&["noise-check", "--config", &cfg, "--out", run.to_str().unwrap()]);
    let csv = read(&run, "noise_check.csv");
    let mut seen = 0;
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let rms: f64 = cells[2].parse().unwrap();
        let expected: f64 = cells[3].parse().unwrap();
        assert!((rms / expected - 1.0).abs() < 0.1, "{line}");
        seen += 1;
    }
    assert_eq!(seen, 3);
}

#[test]
fn loo_reports_held_out_posteriors() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = r#"
[loo]
held_out = [{ class = 1, geometry = "second" }]
"#;
    let cfg_path = eight_class_config(tmp.path(), extra);
    // Give class 1 a second geometry to hold out.
    let text = std::fs::read_to_string(&cfg_path).unwrap();
    let patched = text.replacen(
        "  [[class.geometry]]\n  kind = \"sphere\"\n  alpha_m = 0.004\n  sigma_spm = 10000000\n",
        "  [[class.geometry]]\n  kind = \"sphere\"\n  alpha_m = 0.004\n  sigma_spm = 10000000\n\n  [[class.geometry]]\n  kind = \"sphere\"\n  alpha_m = 0.0042\n  sigma_spm = 10000000\n  id = \"second\"\n",
        1,
    );
    assert_ne!(text, patched, "patch target not found");
    std::fs::write(&cfg_path, patched).unwrap();

    let run = tmp.path().join("run");
    run_ok(&["loo", "--config", &cfg_path, "--out", run.to_str().unwrap()]);
    let csv = read(&run, "loo.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&cells[..3], &["logistic", "1", "second"]);
    let median: f64 = cells[6].parse().unwrap();
    assert!((0.0..=1.0).contains(&median));
    let report: serde_json::Value =
        serde_json::from_str(&read(&run, "loo_logistic_1_second.json")).unwrap();
    assert_eq!(report["summaries"].as_array().unwrap().len(), 8);
}

#[test]
fn file_geometries_load_from_disk() {
    use mpt_classify::signature::{log_grid, sphere_signature, write_signatures, SignatureFormat};
    let tmp = tempfile::tempdir().unwrap();
    let grid = log_grid(1e-2, 1e10, 240);
    let mut sig = sphere_signature(0.005, 1.0e7, 1.0, &grid).unwrap();
    sig.geometry_id = "stored".into();
    let sig_path = tmp.path().join("stored.json");
    write_signatures(&[sig], &sig_path, SignatureFormat::Json).unwrap();

    let cfg = format!(
        r#"
seed = 3
[frequencies]
lo_radps = 1.0e2
hi_radps = 1.0e6
count = 3

[methods]
list = ["tree"]

[[class]]
id = 1
m_alpha_m = 0.005
s_alpha_m = 5.0e-5
m_sigma_spm = 1.0e7
s_sigma_spm = 1.0e5
variations = 8

  [[class.geometry]]
  kind = "file"
  path = "stored.json"

[[class]]
id = 2
m_alpha_m = 0.012
s_alpha_m = 1.0e-4
m_sigma_spm = 2.0e7
s_sigma_spm = 2.0e5
variations = 8

  [[class.geometry]]
  kind = "sphere"
  alpha_m = 0.012
  sigma_spm = 2.0e7
"#
    );
    let cfg_path = tmp.path().join("exp.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let run = tmp.path().join("run");
    let out = run_ok(&[
        "build",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("class 1"), "{stdout}");
    assert_eq!(read(&run, "dictionary.csv").lines().count(), 1 + 16);
}

#[test]
fn missing_signature_file_fails_at_config_load() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"
seed = 3
[frequencies]
lo_radps = 1.0e2
hi_radps = 1.0e6
count = 3

[[class]]
id = 1
m_alpha_m = 0.005
m_sigma_spm = 1.0e7

  [[class.geometry]]
  kind = "file"
  path = "not_there.csv"
"#;
    let cfg_path = tmp.path().join("exp.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let out = run_err(&["build", "--config", cfg_path.to_str().unwrap(), "--out", "/tmp/unused"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("not_there.csv"), "{stderr}");
}

#[test]
fn seed_must_come_from_somewhere() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = eight_class_config(tmp.path(), "");
    let text = std::fs::read_to_string(&cfg_path).unwrap();
    std::fs::write(&cfg_path, text.replace("seed = 11\n", "")).unwrap();
    let out = run_err(&["build", "--config", &cfg_path, "--out", "/tmp/unused2"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("no seed"), "{stderr}");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_ok(&["build", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "101"]);
    run_ok(&["build", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "101"]);
    run_ok(&["build", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "102"]);
    assert_dirs_identical(&a, &b);
    assert_ne!(
        std::fs::read(a.join("dictionary.csv")).unwrap(),
        std::fs::read(c.join("dictionary.csv")).unwrap(),
        "different seeds must draw different samples"
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = eight_class_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["compare", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    run_ok(&["compare", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "4"]);
    assert_dirs_identical(&a, &b);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = eight_class_config(tmp.path(), "\n[frequencies_typo]\nx = 1\n");
    let out = run_err(&["build", "--config", &cfg_path, "--out", "/tmp/unused3"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("frequencies_typo"), "{stderr}");
}
