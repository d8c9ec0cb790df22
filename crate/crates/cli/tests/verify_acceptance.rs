//! Acceptance suite: one PASS/FAIL line per criterion, pinned seeds.
//! Runs as a plain binary (`harness = false`); exits 1 if any counted
//! criterion fails. `ACCEPTANCE_ONLY=1,3,12` restricts the run.

use std::time::Instant;

use shapesim::analysis::ks_one_sample;
use shapesim::engine::{check_additivity, dump_log, replay_check, EventLog};
use shapesim::experiments::{simulate, Check, Setup};
use shapesim::lattice::Window;
use shapesim::models::ModelSpec;
use shapesim_cli::{execute, resolve, Command, Layer, RunReport};

type Outcome = Result<(bool, String), String>;

fn run(cmd: Command, preset: Option<&str>, sets: &[&str]) -> Result<RunReport, String> {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    let c = resolve(cmd, preset, None, &sets, Layer::default()).map_err(|e| e.to_string())?;
    execute(cmd, &c, None).map_err(|e| e.to_string())
}

/// Checks whose name starts with one of `prefixes`; all must exist and pass.
fn picked(checks: &[Check], prefixes: &[&str]) -> (bool, String) {
    let sel: Vec<&Check> = checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))).collect();
    let pass = !sel.is_empty() && sel.iter().all(|c| c.pass);
    let detail = sel
        .iter()
        .map(|c| format!("{} {}: {}", if c.pass { "ok" } else { "FAIL" }, c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, if sel.is_empty() { "no matching checks".into() } else { detail })
}

fn all(r: &RunReport) -> (bool, String) {
    picked(&r.checks, &[""])
}

fn c1_oracle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, q, a) in [("0.7", "0.3", "0.1"), ("1", "0.5", "0"), ("0.5", "0.5", "1")] {
        let sets = [
            format!("model.p={p}"),
            format!("model.q={q}"),
            format!("model.alpha={a}"),
            "lattice.radius=2".into(),
            "run.horizon=2".into(),
            "run.replicas=100000".into(),
            "run.seed=1".into(),
        ];
        let sets: Vec<&str> = sets.iter().map(String::as_str).collect();
        let r = run(Command::Oracle, None, &sets)?;
        let (pass, d) = all(&r);
        ok &= pass;
        parts.push(format!("({p},{q},{a}) {d}"));
    }
    Ok((ok, parts.join(" | ")))
}

fn c2_additivity() -> Outcome {
    let w = Window::new(1, 30).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [
        ModelSpec::classical_cp(2.0),
        ModelSpec::cpree(2.0, 1.0, 0.2, 1.0, 0.8),
        ModelSpec::cpa(2.0, 1.0, 3, vec![]),
        ModelSpec::dop(0.8, 0.2, 0.02),
    ] {
        let m = m.map_err(|e| e.to_string())?;
        let r = check_additivity(&m, &w, 20.0, 100, 2, 0.3).map_err(|e| e.to_string())?;
        ok &= r.pass();
        parts.push(format!("{}: {} events, {} violations", r.model, r.events_checked, r.violations.len()));
        if let Some(v) = r.violations.first() {
            parts.push(v.clone());
        }
    }
    Ok((ok, parts.join("; ")))
}

fn c3_determinism() -> Outcome {
    let w = Window::new(1, 20).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [
        ModelSpec::classical_cp(2.0),
        ModelSpec::cpree(2.0, 1.0, 0.2, 1.0, 0.8),
        ModelSpec::cpa(2.0, 1.0, 3, vec![]),
        ModelSpec::dop(0.8, 0.2, 0.02),
        ModelSpec::bmcp(1.0, 3.0),
    ] {
        let m = m.map_err(|e| e.to_string())?;
        let rep = replay_check(&m, &w, 10.0, 3).map_err(|e| e.to_string())?;
        let dump = |s| EventLog::new(&m, &w, 10.0, s).map(|l| dump_log(&l)).map_err(|e| e.to_string());
        let same = dump(3)? == dump(3)?;
        ok &= rep.pass() && same;
        parts.push(format!("{}: replay {}, dumps {}", m.name(), pass_word(rep.pass()), if same { "identical" } else { "DIFFER" }));
    }
    let sets = ["run.replicas=50", "lattice.radius=40", "run.horizon=15", "run.seed=3"];
    let (a, b) = (run(Command::Simulate, None, &sets)?, run(Command::Simulate, None, &sets)?);
    let same = a.files.iter().zip(&b.files).all(|(x, y)| x.name == y.name && x.body == y.body);
    ok &= same;
    parts.push(format!("simulate files {}", if same { "identical" } else { "DIFFER" }));
    Ok((ok, parts.join("; ")))
}

fn c4_single_site() -> Outcome {
    let m = ModelSpec::classical_cp(2.0).map_err(|e| e.to_string())?;
    let s = Setup::new(m, 1, 0, 50.0).map_err(|e| e.to_string())?.with_replicas(10_000).with_seed(4);
    let o = simulate(&s).map_err(|e| e.to_string())?;
    let taus: Vec<f64> = o.runs.iter().filter_map(|r| r.verdict.tau()).collect();
    let ks = ks_one_sample(&taus, |t| 1.0 - (-t).exp()).map_err(|e| e.to_string())?;
    let pass = taus.len() == o.runs.len() && ks.p_value > 0.01;
    Ok((pass, format!("{} of {} died; KS D = {:.4}, p = {:.3}", taus.len(), o.runs.len(), ks.statistic, ks.p_value)))
}

fn c5_sc() -> Outcome {
    let r = run(Command::Tails, None, &["run.seed=1"])?;
    Ok(picked(&r.checks, &["SC"]))
}

fn c6_k_tail() -> Outcome {
    let r = run(
        Command::Tails,
        None,
        &["tails.k_site=10e1", "run.replicas=10000", "lattice.radius=80", "run.horizon=100", "run.seed=5"],
    )?;
    Ok(picked(&r.checks, &["K("]))
}

fn c7_sigma_gap() -> Outcome {
    let r = run(
        Command::Sigma,
        None,
        &["lattice.radius=90", "run.horizon=80", "run.replicas=3000", "run.seed=7", "sigma.max_gap_ratio=0.5"],
    )?;
    Ok(picked(&r.checks, &["gap"]))
}

fn c8_defect() -> Outcome {
    let r = run(Command::Defect, None, &["defect.x=10e1", "defect.y=10e1", "run.replicas=10000", "run.seed=8"])?;
    Ok(picked(&r.checks, &["defect tail"]))
}

fn c9_shift() -> Outcome {
    let r = run(Command::Defect, None, &["defect.x=5e1", "defect.y=5e1", "run.replicas=4000", "run.seed=9"])?;
    Ok(picked(&r.checks, &["shifted sigma"]))
}

fn c10_bad_growth() -> Outcome {
    let r = run(
        Command::BadGrowth,
        None,
        &["run.replicas=1000", "run.seed=10", "badgrowth.l=20", "badgrowth.t_grid=4,8,16", "badgrowth.pilot_replicas=500"],
    )?;
    Ok(picked(&r.checks, &["P(N_L"]))
}

fn c11_shape() -> Outcome {
    let d1 = run(
        Command::Shape,
        None,
        &[
            "lattice.dim=1",
            "model.lambda=2",
            "lattice.radius=200",
            "run.horizon=150",
            "run.replicas=400",
            "run.seed=11",
            "shape.directions=1;-1",
            "shape.grid_reach=80",
            "shape.times=150",
            "shape.eps=0.15",
            "shape.min_pass_rate=0.95",
            "shape.compare_sigma=true",
        ],
    )?;
    let (slopes, sd) = picked(&d1.checks, &["t and sigma slopes"]);
    let (incl1, id) = picked(&d1.checks, &["inclusion"]);
    let d2 = run(Command::Shape, Some("cp-shape"), &[])?;
    let (incl2, i2) = picked(&d2.checks, &["inclusion"]);
    Ok((slopes && incl1 && incl2, format!("d=1 speeds [{sd}] | d=1 [{id}] | d=2 [{i2}]")))
}

fn smoke(preset: &str) -> Outcome {
    let r = run(Command::Shape, Some(preset), &[])?;
    Ok(picked(&r.checks, &["symmetric", "inclusion"]))
}

fn c12_smoke() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in ["cpree-shape", "dop-shape", "cpa-shape"] {
        let (pass, d) = smoke(p)?;
        ok &= pass;
        parts.push(format!("{p} {}: {d}", pass_word(pass)));
    }
    Ok((ok, parts.join(" | ")))
}

fn pass_word(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|o| o.iter().any(|x| x == id));
    let criteria: [(&str, &str, fn() -> Outcome); 12] = [
        ("1", "DOP oracle equivalence", c1_oracle),
        ("2", "additivity exactness", c2_additivity),
        ("3", "determinism and replay", c3_determinism),
        ("4", "single-site extinction law", c4_single_site),
        ("5", "(SC) extinction tail", c5_sc),
        ("6", "K(x) sub-geometric tail", c6_k_tail),
        ("7", "sigma - t gap", c7_sigma_gap),
        ("8", "subadditivity defect tail", c8_defect),
        ("9", "shifted sigma invariance", c9_shift),
        ("10", "bad-growth box bound", c10_bad_growth),
        ("11", "shape convergence", c11_shape),
        ("12", "cross-model smoke shapes", c12_smoke),
    ];
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        if !wanted(id) {
            continue;
        }
        let clock = Instant::now();
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} {id:>2} {title} ({:.1} s): {detail}", pass_word(pass), clock.elapsed().as_secs_f64());
        if !pass {
            failed.push(id);
        }
    }
    if wanted("12") {
        let clock = Instant::now();
        let (pass, detail) = smoke("bmcp-shape").unwrap_or_else(|e| (false, format!("error: {e}")));
        println!(
            "{} 12b bmcp smoke shape, conjectural, not counted ({:.1} s): {detail}",
            pass_word(pass),
            clock.elapsed().as_secs_f64()
        );
    }
    if failed.is_empty() {
        println!("acceptance: all counted criteria passed");
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
