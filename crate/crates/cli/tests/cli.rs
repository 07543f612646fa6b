use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMOOTH: &str = r#"
s = 2
eps = 0.5
theta = 1.0
r = 4
filter = "db6"
kernel = "hilbert"
seed = 11
n_omega = 30
calibration_samples = 5

[window]
level = 5
k_min = 0
k_max = 4
"#;

const MINIMAL: &str = "s = 1\neps = 0.5\nkernel = \"hilbert\"\nfilter = \"haar\"\nmc_samples = 20000\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dyadrep"));
    c.env_remove("DYADREP_OUT");
    c
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin().args(args).arg("-c").arg(cfg).arg("-o").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn grid_stats_within_lemma_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["grid-stats"], &config(tmp.path(), MINIMAL), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("goodness.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "samples,pi_bad_hat,stderr,bound,r,theta,d");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 20000.0);
    assert!(row[1] <= row[3], "pi_bad_hat {} > bound {}", row[1], row[3]);
    assert_eq!((row[4], row[5]), (24.0, 0.25));
    let m = manifest(&out);
    assert_eq!(m["config"]["theta"], 0.25);
    assert_eq!(m["config"]["r"], 24);
}

#[test]
fn wavelet_check_reports_haar_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["wavelet-check"], &config(tmp.path(), MINIMAL), &out);
    assert!(o.status.success());
    let w: Value = serde_json::from_str(&fs::read_to_string(out.join("wavelet.json")).unwrap()).unwrap();
    assert_eq!((&w["system"]["m"], &w["system"]["u"], &w["system"]["v"]), (&1.into(), &0.into(), &0.into()));
}

#[test]
fn convergence_writes_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["convergence"], &config(tmp.path(), SMOOTH), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"slope"));
    let slope: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(slope < 0.0);
    let dat = fs::read_to_string(out.join("curve.dat")).unwrap();
    assert!(dat.lines().all(|l| l.split(' ').count() == 2));
    let m = manifest(&out);
    assert!(m["results"]["c_emp"].as_f64().unwrap() > 0.0);
    assert!(m["results"]["pi_good"].is_array());
    assert!(m["results"]["excluded"]["bad"].as_u64().is_some());
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMOOTH);
    let mut dirs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args(["represent", "-c"])
            .arg(&cfg)
            .arg("-o")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dirs.push(out);
    }
    for f in ["samples.csv", "representation.json", "shifts.json"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    // Manifests differ only in the output path.
    let strip = |d: &Path| {
        let mut m = manifest(d);
        m["config"]["output"] = Value::Null;
        m
    };
    assert_eq!(strip(&dirs[0]), strip(&dirs[1]));
}

#[test]
fn flags_and_environment_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &format!("{MINIMAL}output = \"{}\"\n", tmp.path().join("from-config").display()));
    let env_out = tmp.path().join("from-env");
    let o = bin()
        .env("DYADREP_OUT", &env_out)
        .args(["grid-stats", "--seed", "9", "--mc-samples", "3000", "-c"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(o.status.success());
    let m = manifest(&env_out);
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["mc_samples"], 3000);
    assert!(!tmp.path().join("from-config").exists());

    let flag_out = tmp.path().join("from-flag");
    let o = bin().env("DYADREP_OUT", &env_out).args(["grid-stats", "-c"]).arg(&cfg).arg("-o").arg(&flag_out).output().unwrap();
    assert!(o.status.success());
    assert!(flag_out.join("manifest.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let code = |o: Output| o.status.code().unwrap();

    let no_kernel = config(tmp.path(), "s = 1\neps = 0.5\nfilter = \"haar\"\n");
    let o = run(&["grid-stats"], &no_kernel, &out);
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid config"));
    assert_eq!(code(o), 2);

    let haar_s2 = config(tmp.path(), "s = 2\neps = 0.5\nkernel = \"hilbert\"\nfilter = \"haar\"\n");
    let o = run(&["decay-audit"], &haar_s2, &out);
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient moments"));
    assert_eq!(code(o), 2);

    // With θ = 1, r = 2 the certified good probability 1 − 8·2^{-2} is negative.
    let smooth = config(tmp.path(), SMOOTH);
    assert_eq!(code(run(&["represent", "--r", "2"], &smooth, &out)), 3);

    // Partial sums stopping before the first populated layer carry no rate.
    assert_eq!(code(run(&["convergence", "--n-max", "2"], &smooth, &out)), 4);
}
