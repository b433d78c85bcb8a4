//! Run configuration: a TOML file with `[physics]`, `[sweep]`, `[solver]` and
//! `[output]` tables, plus `key=value` overrides from the command line.
//!
//! Files use the published unit conventions: rates in MHz-labelled units
//! (stored unchanged as rad/µs), length in mm, wavelength in nm, density in
//! cm⁻³ and dipole moments in C·m. Complex amplitudes are either a number or
//! a `[re, im]` pair.

use crate::output::Format;
use crate::par::Execution;
use crate::params::{default_params, units, SystemParams};
use crate::populations::CouplingIntensity;
use crate::propagation::{Acceleration, Launch, Scheme, SolverOptions};
use crate::spectra::{OffPopulations, PopulationMode, SweepOptions, TriggerMode};
use num_complex::Complex64;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

pub const DEFAULT_SWEEP_START: f64 = 3.0;
pub const DEFAULT_SWEEP_STOP: f64 = 10.0;
pub const DEFAULT_SWEEP_POINTS: usize = 200;

const SECTIONS: [&str; 4] = ["physics", "sweep", "solver", "output"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` exists in several sections; qualify it as section.key")]
    AmbiguousKey(String),
    #[error("invalid `{field}`: {constraint}")]
    Invalid { field: String, constraint: String },
}

fn invalid(field: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        constraint: constraint.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub format: Format,
    pub path: PathBuf,
}

/// Fully validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_points: usize,
    pub options: SweepOptions,
    /// Empty means CSV on standard output.
    pub outputs: Vec<OutputSpec>,
    /// Adds a continuity-unwrapped φ⁺ column.
    pub unwrap: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: default_params(),
            sweep_start: DEFAULT_SWEEP_START,
            sweep_stop: DEFAULT_SWEEP_STOP,
            sweep_points: DEFAULT_SWEEP_POINTS,
            options: SweepOptions::default(),
            outputs: Vec::new(),
            unwrap: false,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Vec<f64> {
        crate::spectra::linspace(self.sweep_start, self.sweep_stop, self.sweep_points)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Amplitude {
    Real(f64),
    Pair([f64; 2]),
}

impl From<Amplitude> for Complex64 {
    fn from(a: Amplitude) -> Self {
        match a {
            Amplitude::Real(x) => Complex64::new(x, 0.0),
            Amplitude::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    omega_c_plus: Option<Amplitude>,
    omega_c_minus: Option<Amplitude>,
    omega_p0: Option<Amplitude>,
    omega_t0: Option<Amplitude>,
    delta2: Option<f64>,
    delta3: Option<f64>,
    gamma_10: Option<f64>,
    gamma_20: Option<f64>,
    gamma_30: Option<f64>,
    gamma_11: Option<f64>,
    gamma_22: Option<f64>,
    gamma_33: Option<f64>,
    gamma_12: Option<f64>,
    gamma_13: Option<f64>,
    gamma_23: Option<f64>,
    /// cm⁻³.
    density_n: Option<f64>,
    d10: Option<f64>,
    d30: Option<f64>,
    /// mm.
    length_l: Option<f64>,
    /// nm.
    lambda_probe: Option<f64>,
    delta_omega1: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<i64>,
    populations: Option<PopulationMode>,
    trigger: Option<TriggerMode>,
    off_populations: Option<OffPopulations>,
    coupling: Option<CouplingIntensity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    tolerance: Option<f64>,
    max_iterations: Option<i64>,
    grid_points: Option<i64>,
    damping: Option<f64>,
    adaptive_damping: Option<bool>,
    min_damping: Option<f64>,
    scheme: Option<Scheme>,
    acceleration: Option<Acceleration>,
    anderson_depth: Option<i64>,
    newton_switch: Option<f64>,
    launch: Option<Launch>,
    recompute_populations: Option<bool>,
    execution: Option<Execution>,
    threads: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntry {
    format: Format,
    path: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    files: Option<Vec<FileEntry>>,
    unwrap: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    physics: PhysicsSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

/// Reads `path` (if given), applies `overrides`, and validates.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// As [`load_config`] for configuration text already in memory.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let raw: RawConfig = RawConfig::deserialize(Value::Table(table))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    build(raw)
}

/// Sets `section.key` (or a bare key that names exactly one known field) to
/// the TOML value on the right of `=`; unparseable values are taken as
/// strings.
fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    let value = value.trim();
    let value: Value = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    let (section, field) = match key.split_once('.') {
        Some((s, f)) if SECTIONS.contains(&s) => (s.to_string(), f.to_string()),
        Some(_) => return Err(ConfigError::UnknownKey(key.to_string())),
        None => (section_of(key)?.to_string(), key.to_string()),
    };
    let entry = table
        .entry(section)
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(field, value);
            Ok(())
        }
        _ => Err(ConfigError::Parse(format!(
            "`{key}` does not name a table entry"
        ))),
    }
}

const PHYSICS_KEYS: &[&str] = &[
    "omega_c_plus",
    "omega_c_minus",
    "omega_p0",
    "omega_t0",
    "delta2",
    "delta3",
    "gamma_10",
    "gamma_20",
    "gamma_30",
    "gamma_11",
    "gamma_22",
    "gamma_33",
    "gamma_12",
    "gamma_13",
    "gamma_23",
    "density_n",
    "d10",
    "d30",
    "length_l",
    "lambda_probe",
    "delta_omega1",
];
const SWEEP_KEYS: &[&str] = &[
    "start",
    "stop",
    "points",
    "populations",
    "trigger",
    "off_populations",
    "coupling",
];
const SOLVER_KEYS: &[&str] = &[
    "tolerance",
    "max_iterations",
    "grid_points",
    "damping",
    "adaptive_damping",
    "min_damping",
    "scheme",
    "acceleration",
    "anderson_depth",
    "newton_switch",
    "launch",
    "recompute_populations",
    "execution",
    "threads",
];
const OUTPUT_KEYS: &[&str] = &["files", "unwrap"];

fn section_of(key: &str) -> Result<&'static str, ConfigError> {
    let hits: Vec<&str> = [
        ("physics", PHYSICS_KEYS),
        ("sweep", SWEEP_KEYS),
        ("solver", SOLVER_KEYS),
        ("output", OUTPUT_KEYS),
    ]
    .iter()
    .filter(|(_, keys)| keys.contains(&key))
    .map(|(s, _)| *s)
    .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(ConfigError::UnknownKey(key.to_string())),
        _ => Err(ConfigError::AmbiguousKey(key.to_string())),
    }
}

fn count(field: &str, v: i64, min: i64) -> Result<usize, ConfigError> {
    if v < min {
        return Err(invalid(field, format!("must be >= {min}, got {v}")));
    }
    Ok(v as usize)
}

fn build(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let mut params = default_params();
    let mut missing = Vec::new();
    {
        let ph = &raw.physics;
        let mut amp = |name: &'static str, v: Option<Amplitude>, slot: &mut Complex64| match v {
            Some(a) => *slot = a.into(),
            None => missing.push(name),
        };
        amp("omega_c_plus", ph.omega_c_plus, &mut params.omega_c_plus);
        amp("omega_c_minus", ph.omega_c_minus, &mut params.omega_c_minus);
        amp("omega_p0", ph.omega_p0, &mut params.omega_p0);
        amp("omega_t0", ph.omega_t0, &mut params.omega_t0);
        let mut real =
            |name: &'static str, v: Option<f64>, slot: &mut f64, convert: fn(f64) -> f64| match v {
                Some(x) => *slot = convert(x),
                None => missing.push(name),
            };
        let same = |x| x;
        real("delta2", ph.delta2, &mut params.delta2, same);
        real("delta3", ph.delta3, &mut params.delta3, same);
        real("gamma_10", ph.gamma_10, &mut params.gamma_10, same);
        real("gamma_20", ph.gamma_20, &mut params.gamma_20, same);
        real("gamma_30", ph.gamma_30, &mut params.gamma_30, same);
        real("gamma_11", ph.gamma_11, &mut params.gamma_11, same);
        real("gamma_22", ph.gamma_22, &mut params.gamma_22, same);
        real("gamma_33", ph.gamma_33, &mut params.gamma_33, same);
        real("gamma_12", ph.gamma_12, &mut params.gamma_12, same);
        real("gamma_13", ph.gamma_13, &mut params.gamma_13, same);
        real("gamma_23", ph.gamma_23, &mut params.gamma_23, same);
        real(
            "density_n",
            ph.density_n,
            &mut params.density_n,
            units::per_cm3_to_per_m3,
        );
        real("d10", ph.d10, &mut params.d10, same);
        real("d30", ph.d30, &mut params.d30, same);
        real(
            "length_l",
            ph.length_l,
            &mut params.length_l,
            units::mm_to_m,
        );
        real(
            "lambda_probe",
            ph.lambda_probe,
            &mut params.lambda_probe,
            units::nm_to_m,
        );
        real(
            "delta_omega1",
            ph.delta_omega1,
            &mut params.delta_omega1,
            same,
        );
    }
    if !missing.is_empty() {
        log::info!("physics defaults used for: {}", missing.join(", "));
    }
    let warnings = params
        .validate()
        .map_err(|e| invalid(e.field, e.constraint))?;
    for w in warnings {
        log::warn!("{w}");
    }

    let sw = raw.sweep;
    let sweep_start = sw.start.unwrap_or(DEFAULT_SWEEP_START);
    let sweep_stop = sw.stop.unwrap_or(DEFAULT_SWEEP_STOP);
    let sweep_points = match sw.points {
        Some(n) => count("sweep_points", n, 1)?,
        None => DEFAULT_SWEEP_POINTS,
    };
    if !sweep_start.is_finite() {
        return Err(invalid("sweep_start", "must be finite"));
    }
    if !sweep_stop.is_finite() || sweep_stop < sweep_start {
        return Err(invalid("sweep_stop", "must be finite and >= sweep_start"));
    }

    let so = raw.solver;
    let defaults = SolverOptions::default();
    let solver = SolverOptions {
        grid_points: match so.grid_points {
            Some(n) => count("grid_points", n, 3)?,
            None => defaults.grid_points,
        },
        tolerance: so.tolerance.unwrap_or(defaults.tolerance),
        max_iterations: match so.max_iterations {
            Some(n) => count("max_iterations", n, 1)?,
            None => defaults.max_iterations,
        },
        scheme: so.scheme.unwrap_or(defaults.scheme),
        damping: so.damping.unwrap_or(defaults.damping),
        adaptive_damping: so.adaptive_damping.unwrap_or(defaults.adaptive_damping),
        min_damping: so
            .min_damping
            .unwrap_or(defaults.min_damping.min(so.damping.unwrap_or(1.0))),
        acceleration: so.acceleration.unwrap_or(defaults.acceleration),
        anderson_depth: match so.anderson_depth {
            Some(n) => count("anderson_depth", n, 0)?,
            None => defaults.anderson_depth,
        },
        launch: so.launch.unwrap_or(defaults.launch),
        recompute_populations: so
            .recompute_populations
            .unwrap_or(defaults.recompute_populations),
        newton_switch: so.newton_switch.unwrap_or(defaults.newton_switch),
    };
    solver
        .validate()
        .map_err(|e| invalid("solver", e.to_string()))?;
    let threads = match so.threads {
        Some(n) => Some(count("threads", n, 1)?),
        None => None,
    };

    let options = SweepOptions {
        solver,
        populations: sw.populations.unwrap_or_default(),
        trigger: sw.trigger.unwrap_or_default(),
        off_populations: sw.off_populations.unwrap_or_default(),
        coupling: sw.coupling.unwrap_or_default(),
        execution: so.execution.unwrap_or_default(),
        threads,
    };
    let outputs = raw
        .output
        .files
        .unwrap_or_default()
        .into_iter()
        .map(|f| OutputSpec {
            format: f.format,
            path: f.path,
        })
        .collect();
    Ok(RunConfig {
        params,
        sweep_start,
        sweep_stop,
        sweep_points,
        options,
        outputs,
        unwrap: raw.output.unwrap.unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid().len(), 200);
    }

    #[test]
    fn units_are_converted_at_the_boundary() {
        let c = parse_config(
            "[physics]\nlength_l = 2.0\ndensity_n = 1e12\nlambda_probe = 795",
            &[],
        )
        .unwrap();
        assert!((c.params.length_l - 2e-3).abs() < 1e-18);
        assert!((c.params.density_n - 1e18).abs() < 1.0);
        assert!((c.params.lambda_probe - 795e-9).abs() < 1e-20);
    }

    #[test]
    fn running_wave_override() {
        let c = parse_config("", &["omega_c_minus=0".to_string()]).unwrap();
        assert_eq!(c.params.omega_c_minus, Complex64::new(0.0, 0.0));
        let c = parse_config("", &["physics.omega_c_plus=[4.0, 1.0]".to_string()]).unwrap();
        assert_eq!(c.params.omega_c_plus, Complex64::new(4.0, 1.0));
    }

    #[test]
    fn zero_points_names_the_field() {
        let e = parse_config("[sweep]\npoints = 0", &[]).unwrap_err();
        assert!(e.to_string().contains("sweep_points"), "{e}");
    }

    #[test]
    fn string_overrides_select_modes() {
        let c = parse_config(
            "",
            &[
                "trigger=on".to_string(),
                "populations=balanced".to_string(),
                "scheme=alternating".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(c.options.trigger, TriggerMode::On);
        assert_eq!(c.options.populations, PopulationMode::Balanced);
        assert_eq!(c.options.solver.scheme, Scheme::Alternating);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config("", &["bogus=1".to_string()]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            parse_config("[physics]\nbogus = 1", &[]),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let e = parse_config("[sweep]\nstart = \n", &[]).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn reversed_sweep_is_invalid() {
        let e = parse_config("[sweep]\nstart = 5.0\nstop = 4.0", &[]).unwrap_err();
        assert!(e.to_string().contains("sweep_stop"), "{e}");
    }

    #[test]
    fn negative_rate_is_invalid() {
        let e = parse_config("[physics]\ngamma_10 = -1.0", &[]).unwrap_err();
        assert!(e.to_string().contains("gamma_10"), "{e}");
    }

    #[test]
    fn output_files() {
        let c = parse_config(
            "[output]\nunwrap = true\nfiles = [{ format = \"csv\", path = \"a.csv\" }, { format = \"jsonl\", path = \"b.jsonl\" }]",
            &[],
        )
        .unwrap();
        assert!(c.unwrap);
        assert_eq!(c.outputs.len(), 2);
        assert_eq!(c.outputs[1].format, Format::Jsonl);
    }
}
