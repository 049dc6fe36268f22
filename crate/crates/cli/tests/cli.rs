use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use muxclock_cli::commands::{compare_csv, rank_order, CompareRow};
use muxclock_core::format::read_trace_set;
use serde_json::Value;
use tempfile::TempDir;

const KEY: &str = "2b7e151628aed2a6abf7158809cf4f3c";

const FIXED: &str = r#"
[[sets]]
label = "Fixed clock"
base_hz = 10e6
f1 = 10e6
f2 = 10e6
f3 = 10e6
f4 = 10e6
"#;

fn muxclock(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muxclock"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("exp.toml");
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_covers_every_preset_and_is_repeatable() {
    let dir = TempDir::new().unwrap();
    config(&dir, "presets = true\nseed = 3\noverhead_encryptions = 500\nn_base_cycles = 4000\n");
    let a = muxclock(dir.path(), &["simulate", "--config", "exp.toml", "--out", "a"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = muxclock(dir.path(), &["simulate", "--config", "exp.toml", "--out", "b"]);
    assert_eq!(code(&b), 0);
    let summary = json(dir.path().join("a/simulate.json"));
    assert_eq!(summary["sets"].as_array().unwrap().len(), 7);
    assert_eq!(summary["header"]["seed"], 3);
    let csv = fs::read_to_string(dir.path().join("a/simulate.csv")).unwrap();
    assert!(csv.starts_with("# tool: muxclock "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 7);
    // Output directory is not part of the digest, so both runs match byte for byte.
    let (ra, rb) = (dir_contents(&dir.path().join("a")), dir_contents(&dir.path().join("b")));
    assert_eq!(ra.len(), 2 + 7);
    assert!(ra == rb, "outputs differ between identical runs");
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = TempDir::new().unwrap();
    for (body, needle) in [
        ("seed = 1\n", "frequency set"),
        ("presets = true\nbogus = 3\n", "bogus"),
        ("presets = true\ncore_count = 2\n", "key2"),
        ("presets = true\nkey = \"zz\"\n", "key"),
        ("presets = true\n[trace]\noversampling = 1\n", "oversampling"),
    ] {
        config(&dir, body);
        let o = muxclock(dir.path(), &["gen", "--config", "exp.toml"]);
        assert_eq!(code(&o), 2, "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{body}: {err}");
    }
    let o = muxclock(dir.path(), &["simulate", "--config", "missing.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_writes_complete_files_with_stable_digests() {
    let dir = TempDir::new().unwrap();
    config(&dir, &format!("n_traces = 300\nseed = 5\n{FIXED}"));
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["gen", "--config", "exp.toml", "--out", out];
        args.extend_from_slice(extra);
        assert_eq!(code(&muxclock(dir.path(), &args)), 0);
        json(dir.path().join(out).join("gen.json"))
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "6"]);
    let entry = &a["files"][0];
    assert_eq!(entry["n_traces"], 300);
    assert_eq!(entry["sha256"], b["files"][0]["sha256"]);
    assert_ne!(entry["sha256"], c["files"][0]["sha256"]);
    let ts = read_trace_set(dir.path().join("a").join(entry["file"].as_str().unwrap())).unwrap();
    assert_eq!(ts.len(), 300);
}

#[test]
fn dual_core_generation_and_spectrum() {
    let dir = TempDir::new().unwrap();
    config(
        &dir,
        &format!("n_traces = 40\ncore_count = 2\nkey2 = \"{}\"\nsecond_base_hz = 11e6\n{FIXED}", "00".repeat(16)),
    );
    assert_eq!(code(&muxclock(dir.path(), &["gen", "--config", "exp.toml"])), 0);
    let ts = read_trace_set(dir.path().join("out/00-fixed-clock.trc")).unwrap();
    assert_eq!(ts.core_count(), 2);
    let o = muxclock(dir.path(), &["fft", "out/00-fixed-clock.trc"]);
    assert_eq!(code(&o), 0);
    let s = json(dir.path().join("out/00-fixed-clock_spectrum.json"));
    assert_eq!(s["core_count"], 2);
    assert_eq!(s["top_peaks"].as_array().unwrap().len(), 10);
}

#[test]
fn attack_reports_on_a_noiseless_fixed_clock() {
    let dir = TempDir::new().unwrap();
    config(&dir, &format!("n_traces = 1000\nseed = 7\n{FIXED}"));
    assert_eq!(code(&muxclock(dir.path(), &["gen", "--config", "exp.toml"])), 0);
    let o = muxclock(dir.path(), &["attack", "out/00-fixed-clock.trc", "--evaluate", KEY, "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(dir.path().join("rep/00-fixed-clock_attack.json"));
    assert!(r["report"]["min_traces"].as_u64().unwrap() <= 500);
    assert_eq!(r["report"]["removed_fraction"], 0.0);
    assert_eq!(r["cpa"]["recovered_key"], KEY);
    assert!(r["header"]["input_sha256"].is_string());
    let csv = fs::read_to_string(dir.path().join("rep/00-fixed-clock_attack.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("min_traces,")));
    let cpa = fs::read_to_string(dir.path().join("rep/00-fixed-clock_cpa.csv")).unwrap();
    assert_eq!(cpa.lines().filter(|l| !l.starts_with('#')).count(), 1 + 16 * 256);

    // Same input, same flags: identical report.
    let again = muxclock(dir.path(), &["attack", "out/00-fixed-clock.trc", "--evaluate", KEY, "--out", "rep2"]);
    assert_eq!(code(&again), 0);
    assert_eq!(
        fs::read(dir.path().join("rep/00-fixed-clock_attack.json")).unwrap(),
        fs::read(dir.path().join("rep2/00-fixed-clock_attack.json")).unwrap()
    );

    // Without a key the key is still recovered but no count is searched.
    let blind = muxclock(dir.path(), &["attack", "out/00-fixed-clock.trc", "--out", "blind"]);
    assert_eq!(code(&blind), 0);
    let r = json(dir.path().join("blind/00-fixed-clock_attack.json"));
    assert!(r["report"]["min_traces"].is_null());
    assert_eq!(r["cpa"]["recovered_key"], KEY);
}

#[test]
fn skipping_synchronization_leaves_randomized_sets_unbroken() {
    let dir = TempDir::new().unwrap();
    config(
        &dir,
        r#"n_traces = 3000
seed = 2
[trace]
noise_sigma = 2.0
[[sets]]
label = "random"
base_hz = 10e6
f1 = 11.9713e6
f2 = 7.7315e6
f3 = 9.2778e6
f4 = 12.6515e6
"#,
    );
    assert_eq!(code(&muxclock(dir.path(), &["gen", "--config", "exp.toml"])), 0);
    let o = muxclock(dir.path(), &["attack", "out/00-random.trc", "--no-sync", "--evaluate", KEY]);
    assert_eq!(code(&o), 0);
    let r = json(dir.path().join("out/00-random_attack.json"));
    assert!(r["report"]["min_traces"].is_null());
    assert_eq!(r["report"]["synchronized"], false);
    assert!(String::from_utf8_lossy(&o.stdout).contains("not broken"));
}

#[test]
fn attack_and_fft_argument_errors() {
    let dir = TempDir::new().unwrap();
    config(&dir, &format!("n_traces = 20\n{FIXED}"));
    assert_eq!(code(&muxclock(dir.path(), &["gen", "--config", "exp.toml"])), 0);
    let f = "out/00-fixed-clock.trc";
    assert_eq!(code(&muxclock(dir.path(), &["attack", f, "--evaluate"])), 2);
    assert_eq!(code(&muxclock(dir.path(), &["attack", f, "--evaluate", "abcd"])), 2);
    assert_eq!(code(&muxclock(dir.path(), &["attack", f, "--step", "0", "--evaluate", KEY])), 2);
    assert_eq!(code(&muxclock(dir.path(), &["fft", f, "--bin", "0"])), 2);
    assert_eq!(code(&muxclock(dir.path(), &["fft", f, "--bin", "-5"])), 2);
    assert_eq!(code(&muxclock(dir.path(), &["attack", "nope.trc"])), 3);
    fs::write(dir.path().join("junk.trc"), b"not a trace file").unwrap();
    assert_eq!(code(&muxclock(dir.path(), &["fft", "junk.trc"])), 3);
    let mut bytes = fs::read(dir.path().join(f)).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(dir.path().join("cut.trc"), bytes).unwrap();
    assert_eq!(code(&muxclock(dir.path(), &["attack", "cut.trc"])), 3);
    assert_eq!(code(&muxclock(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn fixed_clock_spectrum_peaks_at_the_base_clock() {
    let dir = TempDir::new().unwrap();
    config(
        &dir,
        &format!("n_traces = 50\n[trace]\noversampling = 16\nidle_edge_amplitude = 4.0\ncapture_cycles = 256\nnoise_sigma = 0.5\n{FIXED}"),
    );
    assert_eq!(code(&muxclock(dir.path(), &["gen", "--config", "exp.toml"])), 0);
    let o = muxclock(dir.path(), &["fft", "out/00-fixed-clock.trc", "--bin", "250000"]);
    assert_eq!(code(&o), 0);
    let s = json(dir.path().join("out/00-fixed-clock_spectrum.json"));
    let top = s["top_peaks"][0]["bin_low_hz"].as_f64().unwrap();
    let bin = s["bin_hz"].as_f64().unwrap();
    assert!((top - 10e6).abs() <= bin, "top peak {top}");
    let csv = fs::read_to_string(dir.path().join("out/00-fixed-clock_spectrum.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "bin_low_hz,magnitude"));
}

#[test]
fn compare_ranks_every_set() {
    let dir = TempDir::new().unwrap();
    config(
        &dir,
        &format!("presets = true\nn_traces = 400\noverhead_encryptions = 300\nn_base_cycles = 2000\n{FIXED}"),
    );
    let o = muxclock(dir.path(), &["compare", "--config", "exp.toml", "--step", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(dir.path().join("out/compare.json"));
    let rows = v["ranking"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    // The unrandomized clock needs the fewest traces, so it ranks last.
    assert_eq!(rows[7]["label"], "Fixed clock");

    config(&dir, &format!("n_traces = 10\n{FIXED}"));
    assert_eq!(code(&muxclock(dir.path(), &["compare", "--config", "exp.toml"])), 2);
}

fn row(label: &str, min: Option<usize>, overhead: f64) -> CompareRow {
    CompareRow {
        label: label.into(),
        min_traces: min,
        n_traces: 100,
        kept_traces: 90,
        removed_fraction: 0.1,
        failed_fraction: 0.0,
        max_delay_samples: 3,
        mean_overhead: overhead,
        worst_overhead: overhead,
        error_risk: 0.0,
        n_edges: 10,
        unique_periods: 2,
    }
}

#[test]
fn ranking_breaks_ties_on_overhead() {
    let mut rows = vec![
        row("a", Some(500), 0.1),
        row("b", Some(500), -0.2),
        row("c", None, 0.5),
        row("d", Some(750), 0.0),
    ];
    rows.sort_by(rank_order);
    let order: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(order, ["c", "d", "b", "a"]);
    let csv = compare_csv(&rows);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,c,not broken,"));
}
