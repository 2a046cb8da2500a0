use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gsm-biphoton");

const SMALL_COUNTING: &str = r#"
[pump]
w0 = 0.05e-3
coherence = [0.6]

[crystal]
kind = "type-II"
theta_nc = 0.05

[counting]
n_frames = 200
cols = 101
pixel_pitch = 2.0628e-4
focal_length = 0.2
"#;

const SMALL_PROFILE: &str = r#"
[pump]
coherence = [0.15]

[crystal]
kind = "type-II"
theta_nc = 0.05

[grid]
profile_samples = 20
profile_backend = "monte-carlo"
mc_strata = 4
mc_per_stratum = 2
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .args(["run"])
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env_remove("GSM_SPDC_OUT")
        .output()
        .unwrap()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn frames_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = run(tmp.path(), SMALL_COUNTING, &["frames-synth", "--seed", "9", "--out", a.to_str().unwrap()]);
    assert!(ra.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    let rb = run(tmp.path(), SMALL_COUNTING, &["frames-synth", "--seed", "9", "--threads", "1", "--out", b.to_str().unwrap()]);
    assert!(rb.status.success());
    let (fa, fb) = (read_dir(&a), read_dir(&b));
    assert!(fa.contains_key("frames_00.gsmf") && fa.contains_key("manifest.json"));
    assert_eq!(fa, fb);

    let manifest: serde_json::Value = serde_json::from_slice(&fa["manifest.json"]).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["experiment"], "frames-synth");
}

#[test]
fn seed_changes_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(tmp.path(), SMALL_COUNTING, &["frames-synth", "--seed", "1", "--out", a.to_str().unwrap()]).status.success());
    assert!(run(tmp.path(), SMALL_COUNTING, &["frames-synth", "--seed", "2", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(fs::read(a.join("frames_00.gsmf")).unwrap(), fs::read(b.join("frames_00.gsmf")).unwrap());
}

#[test]
fn monte_carlo_profile_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(tmp.path(), SMALL_PROFILE, &["profile", "--seed", "3", "--out", a.to_str().unwrap()]).status.success());
    assert!(run(tmp.path(), SMALL_PROFILE, &["profile", "--seed", "3", "--out", b.to_str().unwrap()]).status.success());
    let fa = read_dir(&a);
    assert_eq!(fa, read_dir(&b));
    let pgm = &fa["profile_00.pgm"];
    assert!(pgm.starts_with(b"P5\n20 20\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n20 20\n65535\n".len() + 2 * 400);
}

#[test]
fn coincidence_reads_synthesized_stacks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    assert!(run(tmp.path(), SMALL_COUNTING, &["frames-synth", "--out", o]).status.success());
    let r = run(tmp.path(), SMALL_COUNTING, &["coincidence", "--out", o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("coincidence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 100);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_stack_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run(tmp.path(), SMALL_COUNTING, &["coincidence", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(5));
}

#[test]
fn config_errors_exit_3_without_outputs() {
    let bad = [
        // unknown key
        "[pump]\ncoherence = [0.5]\nwaist = 1.0\n[crystal]\n[slits]\n",
        // missing block
        "[pump]\ncoherence = [0.5]\n",
        // out-of-range value
        "[pump]\ncoherence = [1.5]\n[crystal]\n[slits]\n",
        // both coherence forms
        "[pump]\ncoherence = [0.5]\nl_c = [1e-3]\n[crystal]\n[slits]\n",
        // slit overlap
        "[pump]\ncoherence = [0.5]\n[crystal]\n[slits]\na = 1e-3\nd = [0.5e-3]\n",
        // not TOML
        "[pump\n",
    ];
    for cfg in bad {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("o");
        let r = run(tmp.path(), cfg, &["visibility-curve", "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(3), "{cfg}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists(), "partial output for {cfg}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let r = Command::new(BIN).args(["run", "fringes"]).output().unwrap();
    assert_eq!(r.status.code(), Some(2));
    let r = Command::new(BIN).args(["run", "no-such-experiment", "--config", "x"]).output().unwrap();
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[pump]\n[characterization]\na_s = [1e-5, 2e-5]\nd12 = [1e-3]\n").unwrap();
    let out = tmp.path().join("env-out");
    let r = Command::new(BIN)
        .args(["run", "pump-visibility", "--config"])
        .arg(&cfg)
        .env("GSM_SPDC_OUT", &out)
        .output()
        .unwrap();
    assert!(r.status.success());
    let csv = fs::read_to_string(out.join("pump_visibility.csv")).unwrap();
    assert!(csv.starts_with("d12_m,a_s_m,nu,visibility\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let defaults: Vec<String> =
        manifest["defaults_applied"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert!(defaults.iter().any(|d| d.starts_with("pump.w0")));
    assert!(defaults.iter().any(|d| d.starts_with("characterization.f")));
}
