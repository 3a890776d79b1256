use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--sources",
    "11",
    "--forward-step",
    "0.0833333333333333",
    "--detector-step",
    "0.125",
    "--inversion-h",
    "0.2",
    "-N",
    "4",
    "--max-iter",
    "10",
    "--set",
    "phantom.radius=0.25",
];

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convex-tomo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .env("CONVEX_TOMO_THREADS", "1")
        .output()
        .unwrap()
}

fn stage(name: &str, out: &Path) -> Output {
    let mut args = vec![name];
    args.extend_from_slice(TINY);
    run(&args, out)
}

#[test]
fn stages_run_one_by_one() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["phantom", "forward", "noise", "project", "reconstruct"] {
        let o = stage(name, dir.path());
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = stage("evaluate", dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("computed_contrast") && text.contains("iterations = 10"), "{text}");
    assert!(stage("export", dir.path()).status.success());
    assert!(dir.path().join("export/n.vtk").exists());
}

#[test]
fn missing_stage_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = stage("project", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("noise"), "{err}");
}

#[test]
fn config_mismatch_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert!(stage("phantom", dir.path()).status.success());
    let mut args = vec!["forward"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "phantom.n_inclusion=1.2"]);
    let o = run(&args, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phantom"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["run", "--lambda", "abc"],
        vec!["run", "--set", "lamda=2"],
        vec!["run", "--set", "noequals"],
        vec!["sweep", "beta", "1,2"],
        vec!["run", "--delta", "2"],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_convex-tomo"))
        .args(["config", "--out", "x"])
        .env("CONVEX_TOMO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "lambda = 2.5\norder = 8\n[phantom]\nkind = \"letter\"\nglyph = \"C\"\n").unwrap();
    let o = run(&["config", "--config", path.to_str().unwrap(), "-N", "10"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("lambda = 2.5"));
    assert!(text.contains("order = 10"));
    assert!(text.contains("kind = \"letter\""));
    std::fs::write(&path, "typo = 1\n").unwrap();
    assert_eq!(run(&["config", "--config", path.to_str().unwrap()], dir.path()).status.code(), Some(1));
}

#[test]
fn sweep_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["phantom", "forward", "noise"] {
        assert!(stage(name, dir.path()).status.success());
    }
    let mut args = vec!["sweep", "lambda", "0,4"];
    args.extend_from_slice(TINY);
    let o = run(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.starts_with("lambda"));
    let mut args = vec!["sweep", "N"];
    args.extend_from_slice(TINY);
    let o = run(&args, dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);
}
