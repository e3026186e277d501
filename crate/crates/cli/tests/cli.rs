use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wncs")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn small_sweep_writes_sorted_summary_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# short runs\nsteps = 300\n").unwrap();
    let out = dir.path().join("out");
    let o = wncs(&["--config", path(&cfg), "--lambda", "6e-3,2e-3", "--seeds", "3,1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "lambda,policy,seed,mean_ru_pct,arrived,successful,unstable,unstable_pct,fallback_count");
    assert_eq!(lines.len(), 1 + 2 * 3 * 2);
    let keys: Vec<(f64, String, u64)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let ru: f64 = f[3].parse().unwrap();
            assert!((0.0..=100.0).contains(&ru), "{l}");
            (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], (2e-3, "error".to_string(), 1));

    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    for name in wncs_cli::config::key_names() {
        if name != "track_radius" {
            assert!(manifest.lines().any(|l| l.starts_with(&format!("{name} = "))), "{name} missing");
        }
    }
    assert!(manifest.contains("steps = 300"));
    assert!(manifest.contains("seeds = 3,1"));
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn trace_has_one_row_per_tick_and_run() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = wncs(&[
        "--steps",
        "50",
        "--lambda",
        "5e-3",
        "--seeds",
        "1",
        "--policy",
        "maxsnr",
        "--trace",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 50);
    assert!(trace.starts_with("lambda,policy,seed,tick,"));
}

#[test]
fn default_seeds_follow_the_config_seed() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = wncs(&["--steps", "20", "--policy", "error", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut seeds: Vec<u64> = summary.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let mut want = wncs_cli::sweep::derive_seeds(1, 5);
    seeds.sort();
    want.sort();
    assert_eq!(seeds, want);
}

#[test]
fn repeated_sweep_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = wncs(&["--steps", "400", "--lambda", "8e-3,4e-3", "--seeds", "7,8", "--out", path(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("summary.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "pathloss_exponent = -1\nmystery = 2\n").unwrap();
    let o = wncs(&["--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("pathloss_exponent") && err.contains("mystery"), "{err}");

    let table = dir.path().join("bad.csv");
    fs::write(&table, "mcs_id,modulation_order,code_rate,snr_db,bler\n0,4,0.5,0,1.5\n").unwrap();
    let o = wncs(&["--bler-table", path(&table), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    for args in [
        &["--policy", "fastest"][..],
        &["--lambda", "abc"],
        &["--lambda", "0.5"],
        &["--steps", "0"],
        &["--seeds", "1,1"],
        &["--no-such-flag"],
        &["--config", "/nonexistent/run.cfg"],
    ] {
        let mut all = args.to_vec();
        all.extend(["--out", path(&out)]);
        let o = wncs(&all);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert!(!out.join("summary.csv").exists());

    // the output directory is a regular file
    let file = dir.path().join("occupied");
    fs::write(&file, "").unwrap();
    let o = wncs(&["--steps", "10", "--out", path(&file)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn failed_run_exits_with_two_and_keeps_the_rest() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "steps = 400\narrival_rate = 2e-2\nmax_subdivisions = 1\n").unwrap();
    let out = dir.path().join("out");
    let o = wncs(&["--config", path(&cfg), "--seeds", "1", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# failed cells: 1"));
    assert!(manifest.contains("failed = 0.02,instability,1"));
}

#[test]
fn shipped_table_loads_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let table = concat!(env!("CARGO_MANIFEST_DIR"), "/data/default_bler.csv");
    let a = wncs(&["--steps", "200", "--seeds", "2", "--bler-table", table, "--out", path(&out.join("file"))]);
    let b = wncs(&["--steps", "200", "--seeds", "2", "--out", path(&out.join("builtin"))]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(fs::read(out.join("file/summary.csv")).unwrap(), fs::read(out.join("builtin/summary.csv")).unwrap());
}

#[test]
fn help_exits_cleanly() {
    let o = wncs(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("--bler-table"));
}
