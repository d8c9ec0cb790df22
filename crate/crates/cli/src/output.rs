use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::config::Config;
use crate::run::{CliError, FileKind, RunReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every output file records about the run that produced it.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &'static str, config: &Config) -> Result<Self, CliError> {
        Ok(Provenance { command, seed: config.require("run.seed")?, config_sha256: config.hash() })
    }

    pub fn csv_header(&self) -> String {
        format!(
            "# shapesim {VERSION} {} seed={} config_sha256={} (config echoed in config.txt)\n",
            self.command, self.seed, self.config_sha256
        )
    }

    pub fn json(&self) -> Value {
        json!({ "command": self.command, "code_version": VERSION, "seed": self.seed, "config_sha256": self.config_sha256 })
    }
}

/// One line per check, plus a status line.
pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    for c in &report.checks {
        s.push_str(&format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    let status = match (report.pass(), report.conjectural) {
        (true, _) => "all checks passed",
        (false, true) => "checks failed (conjectural run: exit status unaffected)",
        (false, false) => "checks failed",
    };
    s.push_str(&format!("{}: {status}\n", report.command.name()));
    if let Some(n) = &report.note {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).map_err(|source| CliError::Write { path: p.display().to_string(), source })?;
    Ok(p)
}

/// Writes the report's files, `config.txt`, `verdict.json`, `summary.txt`
/// and `manifest.json` into `dir`. Everything but the manifest is a pure
/// function of the resolved config.
pub fn write_all(
    dir: &Path,
    report: &RunReport,
    config: &Config,
    args: &[String],
    started: SystemTime,
    wall: Duration,
) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.display().to_string(), source })?;
    let prov = Provenance::new(report.command.name(), config)?;
    let mut names = Vec::new();
    for f in &report.files {
        let body = match f.kind {
            FileKind::Csv => [prov.csv_header().into_bytes(), f.body.clone()].concat(),
            FileKind::JsonLines => {
                let meta = json!({ "_meta": prov.json() }).to_string() + "\n";
                [meta.into_bytes(), f.body.clone()].concat()
            }
            FileKind::Binary => f.body.clone(),
        };
        write(dir, &f.name, &body)?;
        names.push(f.name.clone());
    }
    if report.command == crate::run::Command::ReplayCheck && dir.join("log.shlb").exists() {
        names.push("log.shlb".into());
        names.push("log.corrupted.shlb".into());
    }
    let echo = format!(
        "# shapesim {VERSION} {} seed={} config_sha256={}\n# reload with: shapesim {} --config config.txt\n{}",
        prov.command,
        prov.seed,
        prov.config_sha256,
        prov.command,
        config.echo()
    );
    write(dir, "config.txt", echo.as_bytes())?;
    let verdict = json!({
        "provenance": prov.json(),
        "pass": report.pass(),
        "conjectural": report.conjectural,
        "note": report.note,
        "checks": report.checks,
        "data": report.data,
    });
    write(dir, "verdict.json", (serde_json::to_string_pretty(&verdict).unwrap_or_default() + "\n").as_bytes())?;
    write(dir, "summary.txt", format!("{}{}", prov.csv_header(), summary(report)).as_bytes())?;
    names.extend(["config.txt", "verdict.json", "summary.txt", "manifest.json"].map(String::from));
    let manifest = json!({
        "provenance": prov.json(),
        "config": config.to_json(),
        "config_sources": config.sources,
        "workers": config.raw("run.workers").unwrap_or("0"),
        "args": args,
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_time_s": wall.as_secs_f64(),
        "pass": report.pass(),
        "exit_code": report.exit_code(),
        "files": names,
        "reproduce": format!("shapesim {} --config {}", prov.command, dir.join("config.txt").display()),
    });
    write(dir, "manifest.json", (serde_json::to_string_pretty(&manifest).unwrap_or_default() + "\n").as_bytes())?;
    Ok(names)
}
