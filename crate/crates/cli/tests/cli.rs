use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn charflow(args: &[&str]) -> Output {
    charflow_env(args, &[])
}

fn charflow_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_charflow"));
    cmd.args(args).env_remove("CHARFLOW_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_pgm(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h).map(|i| f(i % w, i / w)));
    std::fs::write(path, bytes).unwrap();
}

fn disk_mask(w: usize, h: usize, r: f64) -> impl Fn(usize, usize) -> u8 {
    move |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - w as f64 / 2.0, y as f64 + 0.5 - h as f64 / 2.0);
        if dx.hypot(dy) < r { 255 } else { 0 }
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_report_and_raster() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = charflow(&["solve", "--case", "radial", "--grid", "24", "--step", "1e-2", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("report.json"));
    assert!(report.is_object());
    for ext in ["bin", "mask", "pgm", "json"] {
        assert!(dir.path().join("solution").with_extension(ext).exists(), "missing .{ext}");
    }
    let bin = std::fs::read(dir.path().join("solution.bin")).unwrap();
    assert_eq!(bin.len(), 24 * 24 * 8);
}

#[test]
fn solve_prints_json_without_out_dir() {
    let o = charflow(&["solve", "--case", "spiral", "--grid", "16", "--step", "1e-2", "--rhs", "affine"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn verify_fast_mode_passes() {
    let o = charflow(&[
        "verify", "--case", "radial", "--grid", "32", "--step", "1e-2", "--traces", "100", "--samples", "20",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.lines().any(|l| l.starts_with("PASS")));
    assert!(!stderr.lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn false_causality_constant_fails_checks() {
    let args = ["--case", "spiral", "--grid", "16", "--step", "1e-2", "--beta", "0.99"];
    let o = charflow(&[&["verify", "--traces", "50", "--samples", "10"][..], &args].concat());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL causality"));
    assert_eq!(code(&charflow(&[&["solve"][..], &args].concat())), 2);
}

#[test]
fn bad_arguments_exit_two() {
    for args in [
        &["solve", "--step", "0"][..],
        &["solve", "--step", "2"],
        &["solve", "--grid", "4"],
        &["solve", "--q", "1"],
        &["solve", "--case", "hexagon"],
        &["solve", "--data", "noise"],
        &["nonunique", "--damping", "0"],
        &["frobnicate"],
    ] {
        assert_eq!(code(&charflow(args)), 2, "{args:?}");
    }
}

#[test]
fn inpaint_rejects_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_pgm(&p("img.pgm"), 16, 16, |x, _| (x * 16) as u8);
    write_pgm(&p("small.pgm"), 8, 16, |_, _| 255);
    write_pgm(&p("empty.pgm"), 16, 16, |_, _| 0);
    std::fs::write(p("junk.pgm"), b"not an image").unwrap();
    let run = |image: &str, mask: &str| {
        let (image, mask, output) = (p(image), p(mask), p("out.pgm"));
        code(&charflow(&[
            "inpaint",
            "--image",
            image.to_str().unwrap(),
            "--mask",
            mask.to_str().unwrap(),
            "--output",
            output.to_str().unwrap(),
        ]))
    };
    assert_eq!(run("img.pgm", "small.pgm"), 2);
    assert_eq!(run("img.pgm", "empty.pgm"), 2);
    assert_eq!(run("junk.pgm", "img.pgm"), 2);
    assert_eq!(run("missing.pgm", "img.pgm"), 2);
}

fn inpaint_run(dir: &Path, threads: &str, extra: &[&str]) -> (Vec<u8>, String) {
    let (image, mask) = (dir.join("img.pgm"), dir.join("mask.pgm"));
    let (output, report) = (dir.join("out.pgm"), dir.join("report.json"));
    let args = [
        "inpaint",
        "--image",
        image.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ];
    let o = charflow_env(&[&args[..], extra].concat(), &[("CHARFLOW_THREADS", threads)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (std::fs::read(output).unwrap(), std::fs::read_to_string(report).unwrap())
}

#[test]
fn inpaint_reproduces_a_constant_image() {
    let dir = TempDir::new().unwrap();
    write_pgm(&dir.path().join("img.pgm"), 24, 24, |_, _| 77);
    write_pgm(&dir.path().join("mask.pgm"), 24, 24, disk_mask(24, 24, 5.0));
    let (out, _) = inpaint_run(dir.path(), "1", &["--step", "1e-2"]);
    assert_eq!(out, std::fs::read(dir.path().join("img.pgm")).unwrap());
}

#[test]
fn inpaint_is_thread_count_independent() {
    let dir = TempDir::new().unwrap();
    write_pgm(&dir.path().join("img.pgm"), 24, 24, |x, y| if x + y < 24 { 30 } else { 220 });
    write_pgm(&dir.path().join("mask.pgm"), 24, 24, disk_mask(24, 24, 6.0));
    let extra = ["--step", "1e-2", "--blend", "0.5", "--max-iter", "3"];
    assert_eq!(inpaint_run(dir.path(), "1", &extra), inpaint_run(dir.path(), "3", &extra));
}

#[test]
fn nonunique_writes_logs_per_seed() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = charflow(&["nonunique", "--grid", "16", "--step", "1e-2", "--seeds", "-2,0.5,2", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let limits = std::fs::read_to_string(dir.path().join("limits.csv")).unwrap();
    assert_eq!(limits.lines().next(), Some("seed,limit,residual,iterations,converged"));
    assert_eq!(limits.lines().count(), 4);
    for k in 0..3 {
        let log = std::fs::read_to_string(dir.path().join(format!("iterations_{k}.csv"))).unwrap();
        assert_eq!(log.lines().next(), Some("iter,l1_residual,l1_norm,tv"));
    }
    assert!(read_json(&dir.path().join("report.json")).is_object());
}
