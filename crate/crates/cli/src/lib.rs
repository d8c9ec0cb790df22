//! Command-line front end: config resolution, presets, experiment dispatch
//! and result files.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{Config, ConfigError, Layer, Origin};
pub use run::{execute, CliError, Command, RunReport};

use std::path::Path;

/// Resolves the config for `cmd`: command defaults, then the preset, the
/// file, `--set` pairs and finally flag overrides.
pub fn resolve(
    cmd: Command,
    preset: Option<&str>,
    file: Option<&Path>,
    sets: &[String],
    flags: Layer,
) -> Result<Config, ConfigError> {
    let mut c = cmd.defaults();
    if let Some(p) = preset {
        c.apply(presets::layer(p)?, format!("preset {p}"));
    }
    if let Some(f) = file {
        c.apply(Layer::from_file(f)?, format!("file {}", f.display()));
    }
    c.apply(Layer::from_pairs(sets)?, "--set");
    c.apply(flags, "flags");
    c.validate_keys()?;
    Ok(c)
}
