//! Shipped presets, one per shape theorem. Window radii leave room for the
//! front at the last inclusion time; replica counts keep each run within a
//! few minutes on one core.

use crate::config::{ConfigError, Layer, Origin};

#[derive(Debug)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "cp-shape",
        summary: "classical contact process, lambda = 1.5, d = 2, eps = 0.25 at t = 60",
        text: "\
model.name = cp
model.lambda = 1.5
lattice.dim = 2
lattice.radius = 230
run.horizon = 60
run.replicas = 60
shape.directions = (1,0); (-1,0); (0,1); (0,-1); (1,1); (-1,-1); (1,-1); (-1,1)
shape.grid_reach = 100
shape.times = 60
shape.eps = 0.25
shape.min_pass_rate = 0.9
",
    },
    Preset {
        name: "cpree-shape",
        summary: "contact process in a randomly evolving environment, d = 1, eps = 0.3 at t = 150",
        text: "\
model.name = cpree
model.lambda = 2
model.delta0 = 1
model.delta1 = 0.2
model.gamma = 1
model.p = 0.8
lattice.dim = 1
lattice.radius = 320
run.horizon = 150
run.replicas = 200
shape.grid_reach = 60
shape.times = 150
shape.eps = 0.3
shape.min_pass_rate = 0.9
",
    },
    Preset {
        name: "dop-shape",
        summary: "discrete oriented percolation with hostile immigration, d = 1, eps = 0.3 at t = 300",
        text: "\
model.name = dop
model.p = 0.8
model.q = 0.2
model.alpha = 0.02
lattice.dim = 1
lattice.radius = 400
run.horizon = 300
run.replicas = 100
shape.grid_reach = 150
shape.times = 300
shape.eps = 0.3
shape.min_pass_rate = 0.9
",
    },
    Preset {
        name: "cpa-shape",
        summary: "contact process with aging, N = 3, d = 1, eps = 0.3 at t = 800",
        text: "\
model.name = cpa
model.lambda = 2
model.gamma = 1
model.max_age = 3
lattice.dim = 1
lattice.radius = 700
run.horizon = 800
run.replicas = 100
shape.grid_reach = 300
shape.times = 800
shape.eps = 0.3
shape.min_pass_rate = 0.9
",
    },
    Preset {
        name: "bmcp-shape",
        summary: "boundary-modified contact process, lambda_e = 1, lambda_i = 3, d = 1 (conjectural)",
        text: "\
model.name = bmcp
model.lambda_e = 1
model.lambda_i = 3
lattice.dim = 1
lattice.radius = 500
run.horizon = 300
run.replicas = 100
shape.grid_reach = 150
shape.times = 300
shape.eps = 0.3
shape.min_pass_rate = 0.9
preset.conjectural = true
preset.note = the growth controls this shape theorem needs are conjectured, not proved, for this model
",
    },
];

pub fn find(name: &str) -> Result<&'static Preset, ConfigError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| ConfigError::UnknownPreset {
        name: name.into(),
        available: PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", "),
    })
}

pub fn layer(name: &str) -> Result<Layer, ConfigError> {
    let p = find(name)?;
    Layer::parse(p.text, |line| Origin::Preset { name: p.name.into(), line })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    #[test]
    fn presets_parse_and_validate() {
        for p in PRESETS {
            let mut c = Config::default();
            c.apply(layer(p.name).unwrap(), p.name);
            c.validate_keys().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
        assert!(find("nope").unwrap_err().to_string().contains("cp-shape"));
    }
}
