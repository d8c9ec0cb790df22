use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};

use shapesim_cli::config::{Layer, Origin};
use shapesim_cli::{execute, output, presets, resolve, CliError, Command};

#[derive(Parser)]
#[command(name = "shapesim", version, about = "Shape-theorem experiments for growth models on Z^d")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run replicas from the minimal configuration; hit times and survival.
    Simulate(Common),
    /// Essential hitting times σ(x) and the gap |σ(x) − t(x)|/‖x‖.
    Sigma(Common),
    /// Subadditivity defect r(x,y) and the shifted σ law.
    Defect(Common),
    /// Speeds, asymptotic shape and ε-inclusion.
    Shape(Common),
    /// Extinction-time tail (SC) and the K(x) tail.
    Tails(Common),
    /// Bad-growth count P(N_L ≥ 1) against t.
    Badgrowth(Common),
    /// Engine frequencies against the exact DOP law.
    Oracle(Common),
    /// Log and trajectory replay self-check.
    ReplayCheck(Common),
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Preset applied below the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed (run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to out/<command>.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (run.workers); 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(cmd: Command, a: Common) -> Result<u8, CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut flags = Layer::default();
    if let Some(s) = a.seed {
        flags.push("run.seed", s, Origin::Flag("seed"));
    }
    if let Some(w) = a.workers {
        flags.push("run.workers", w, Origin::Flag("workers"));
    }
    let config = resolve(cmd, a.preset.as_deref(), a.config.as_deref(), &a.sets, flags)?;
    let out = a.out.unwrap_or_else(|| PathBuf::from("out").join(cmd.name()));
    std::fs::create_dir_all(&out).map_err(|source| CliError::Write { path: out.display().to_string(), source })?;
    let report = execute(cmd, &config, Some(&out))?;
    let args: Vec<String> = std::env::args().collect();
    output::write_all(&out, &report, &config, &args, started, clock.elapsed())?;
    // a closed pipe (`| head`) is not an error worth failing the run for
    let mut stdout = std::io::stdout().lock();
    let _ = write!(stdout, "{}results in {}\n", output::summary(&report), out.display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Sigma(c) => (Command::Sigma, c),
        Cmd::Defect(c) => (Command::Defect, c),
        Cmd::Shape(c) => (Command::Shape, c),
        Cmd::Tails(c) => (Command::Tails, c),
        Cmd::Badgrowth(c) => (Command::BadGrowth, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
        Cmd::ReplayCheck(c) => (Command::ReplayCheck, c),
        Cmd::Presets => {
            let mut stdout = std::io::stdout().lock();
            for p in presets::PRESETS {
                let _ = writeln!(stdout, "{:<12} {}", p.name, p.summary);
            }
            return ExitCode::SUCCESS;
        }
    };
    match run(cmd, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
