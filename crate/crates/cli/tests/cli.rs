use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shapesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapesim")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SMALL: &[&str] = &["--set", "run.replicas=20", "--set", "lattice.radius=30", "--set", "run.horizon=10"];

#[test]
fn identical_configs_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, workers) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        let mut args = vec!["simulate", "--seed", "5", "--workers", workers, "--out", dir.to_str().unwrap()];
        args.extend(SMALL);
        let o = shapesim(&args);
        assert_eq!(code(&o), 0, "{}", text(&o));
    }
    for f in ["hits.csv", "verdicts.jsonl", "verdict.json", "summary.txt"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
        assert_eq!(read(&a, f), read(&c, f), "{f} depends on the worker count");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    for k in ["provenance", "config", "wall_time_s", "started_unix", "files", "reproduce"] {
        assert!(manifest.get(k).is_some(), "manifest lacks {k}");
    }
    assert_eq!(manifest["provenance"]["seed"], 5);
}

#[test]
fn outputs_name_config_and_seed_and_echo_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let mut args = vec!["sigma", "--seed", "3", "--out", a.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(["--set", "sigma.sites=3;6"]);
    assert!([0, 3].contains(&code(&shapesim(&args))));
    let first = String::from_utf8(read(&a, "sigma.csv")).unwrap();
    let header = first.lines().next().unwrap();
    assert!(header.starts_with("# shapesim") && header.contains("sigma seed=3 config_sha256="), "{header}");
    let echo = a.join("config.txt");
    let b = tmp.path().join("b");
    let o = shapesim(&["sigma", "--config", echo.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!([0, 3].contains(&code(&o)), "{}", text(&o));
    assert_eq!(read(&a, "sigma.csv"), read(&b, "sigma.csv"));
}

#[test]
fn config_errors_exit_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    fs::write(&cfg, "model.name = cp\nmodel.lambda = 2\nrun.replicas = lots\n").unwrap();
    let o = shapesim(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("bad.cfg:3") && text(&o).contains("run.replicas"), "{}", text(&o));

    fs::write(&cfg, "model.name = cp\nmodel.lambda = 2\nrun.replicaz = 4\n").unwrap();
    let o = shapesim(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("bad.cfg:3") && text(&o).contains("unknown key"), "{}", text(&o));

    fs::write(&cfg, "model.name = dop\nmodel.p = 0.5\nmodel.q = 0.2\nmodel.alpha = 2\n").unwrap();
    let o = shapesim(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("alpha"), "{}", text(&o));

    fs::write(&cfg, "this line has no equals sign\n").unwrap();
    let o = shapesim(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("bad.cfg:1"), "{}", text(&o));

    let o = shapesim(&["shape", "--preset", "nope", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("cp-shape"), "{}", text(&o));

    let o = shapesim(&["simulate", "--set", "run.t_surv=99", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("--set #1") && text(&o).contains("run.t_surv"), "{}", text(&o));
}

#[test]
fn capacity_error_is_surfaced_verbatim() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapesim(&[
        "simulate",
        "--set",
        "lattice.dim=4",
        "--set",
        "lattice.radius=2000",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("capacity exceeded"), "{}", text(&o));
}

#[test]
fn failing_check_exits_3_unless_conjectural() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    // a window far too small for t = 20: every survivor is truncated
    let tiny = [
        "--set", "lattice.dim=1", "--set", "lattice.radius=12", "--set", "run.horizon=20", "--set",
        "run.replicas=10", "--set", "shape.grid_reach=9", "--set", "shape.times=20", "--set", "shape.directions=1;-1",
    ];
    let mut args = vec!["shape", "--out", out.to_str().unwrap()];
    args.extend(tiny);
    let o = shapesim(&args);
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("FAIL inclusion"), "{}", text(&o));

    let mut args = vec!["shape", "--preset", "bmcp-shape", "--out", out.to_str().unwrap()];
    args.extend(tiny);
    let o = shapesim(&args);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("conjectural"), "{}", text(&o));
    let v: serde_json::Value = serde_json::from_slice(&read(&out, "verdict.json")).unwrap();
    assert_eq!(v["conjectural"], true);
    assert_eq!(v["pass"], false);
}

#[test]
fn replay_check_default_passes_and_locates_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapesim(&["replay-check", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("PASS horizon-extension prefix (log)"), "{t}");
    assert!(t.contains("PASS corrupted dump detected: stream"), "{t}");
    assert!(tmp.path().join("log.shlb").exists() && tmp.path().join("log.corrupted.shlb").exists());
}

#[test]
fn oracle_reports_tv_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapesim(&["oracle", "--set", "run.replicas=20000", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("PASS dop oracle: TV ="), "{}", text(&o));
    let table = String::from_utf8(read(tmp.path(), "oracle.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("config,exact,empirical,se"), "{table}");

    let o = shapesim(&["oracle", "--set", "model.name=cp", "--set", "model.lambda=1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn one_dimensional_presets_resolve() {
    let tmp = tempfile::tempdir().unwrap();
    for p in ["cpree-shape", "dop-shape", "cpa-shape", "bmcp-shape"] {
        let o = shapesim(&[
            "shape", "--preset", p, "--set", "run.replicas=4", "--set", "run.horizon=20", "--set", "shape.times=20",
            "--set", "shape.grid_reach=8", "--out", tmp.path().to_str().unwrap(),
        ]);
        assert!([0, 3].contains(&code(&o)), "{p}: {}", text(&o));
    }
}

#[test]
fn presets_are_listed() {
    let o = shapesim(&["presets"]);
    assert_eq!(code(&o), 0);
    let t = text(&o);
    for p in ["cp-shape", "cpree-shape", "dop-shape", "bmcp-shape", "cpa-shape"] {
        assert!(t.contains(p), "{t}");
    }
}
