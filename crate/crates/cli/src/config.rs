//! Experiment configuration: TOML file, optional preset underneath, `--set` overrides on top.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vacpump_core::steadystate::{FloquetOptions, SweepAxis};
use vacpump_core::{Cutoffs, DissipationParams, SystemParams};

use crate::error::CliError;
use crate::presets;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Fourier spectrum of the ground-state radiation pressure.
    Pressure,
    /// Closed cavity + matter + mirror dynamics.
    EvolveFull,
    /// Mirror alone, driven by the pressure spectrum.
    EvolveEffective,
    /// Steady states along one (or two) parameter axes.
    SteadySweep,
    /// Analytic steady state from the computed `N_k̄`.
    DevicePrediction,
    /// Phonon yield after closed dynamics over a grid of `ξ` and `λ`.
    CrtScan,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Pressure => "pressure",
            Experiment::EvolveFull => "evolve_full",
            Experiment::EvolveEffective => "evolve_effective",
            Experiment::SteadySweep => "steady_sweep",
            Experiment::DevicePrediction => "device_prediction",
            Experiment::CrtScan => "crt_scan",
        }
    }
}

/// `hz`: every frequency-valued field is an ordinary frequency and gets multiplied by 2π.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[serde(alias = "Hz")]
    Hz,
    Angular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("output.formats: unknown format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveMethod {
    Moments,
    Lindblad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    Full,
    Effective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Overrides `params.cutoffs` when present.
    pub cutoffs: Option<Cutoffs>,
    pub k_max: usize,
    /// Ground-state samples per drive period.
    pub samples: usize,
    /// Absolute tolerance on `N_k` while refining the sample grid.
    pub spectrum_tol: f64,
    pub max_sample_doublings: usize,
    /// Run length in drive periods, ignored when `t_final` is set.
    pub periods: f64,
    pub t_final: Option<f64>,
    pub dt_max: Option<f64>,
    pub records_per_period: usize,
    pub krylov_tol: f64,
    pub effective_method: EffectiveMethod,
    /// Add the effective-model phonon number next to the full one.
    pub compare_effective: bool,
    pub floquet: FloquetOptions,
    pub cutoff_convergence: bool,
    /// Relative change of the target observables between cutoff doublings.
    pub convergence_tol: f64,
    pub max_doublings: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            cutoffs: None,
            k_max: vacpump_core::vacuum::DEFAULT_K_MAX,
            samples: vacpump_core::vacuum::DEFAULT_SAMPLES,
            spectrum_tol: 1e-10,
            max_sample_doublings: 4,
            periods: 10.0,
            t_final: None,
            dt_max: None,
            records_per_period: 20,
            krylov_tol: 1e-12,
            effective_method: EffectiveMethod::Moments,
            compare_effective: true,
            floquet: FloquetOptions::default(),
            cutoff_convergence: true,
            convergence_tol: 1e-3,
            max_doublings: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Outer axis; the whole sweep is repeated for each of its values.
    pub series: Option<Series>,
    pub floquet: bool,
    pub moments: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { axis: SweepAxis::Detuning, values: vec![0.0], series: None, floquet: true, moments: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub xi: Vec<f64>,
    /// Empty means `params.lambda0` only.
    pub lambda: Vec<f64>,
    pub method: ScanMethod,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { xi: vec![0.0, 0.5, 1.0], lambda: Vec::new(), method: ScanMethod::Full }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// File stem; defaults to the experiment name.
    pub name: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json], name: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_units")]
    pub units: Units,
    /// Bath temperature in kelvin; sets `dissipation.n_th` at `ω_b` when present.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub params: SystemParams,
    #[serde(default)]
    pub dissipation: DissipationParams,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_units() -> Units {
    Units::Angular
}

fn axis_is_frequency(axis: SweepAxis) -> bool {
    matches!(
        axis,
        SweepAxis::DriveFrequency | SweepAxis::Detuning | SweepAxis::GammaB | SweepAxis::Lambda | SweepAxis::DeltaOmega
    )
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            description: String::new(),
            units: Units::Angular,
            temperature: None,
            params: SystemParams::default(),
            dissipation: DissipationParams::default(),
            numerics: Numerics::default(),
            sweep: SweepConfig::default(),
            scan: ScanConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Angular units, cutoffs folded into `params`, temperature turned into `n_th`.
    /// Applying it twice changes nothing.
    pub fn resolved(&self) -> Result<Self, CliError> {
        let mut c = self.clone();
        if c.units == Units::Hz {
            c.params = c.params.rescaled(TAU);
            c.dissipation = c.dissipation.rescaled(TAU);
            if axis_is_frequency(c.sweep.axis) {
                c.sweep.values.iter_mut().for_each(|v| *v *= TAU);
            }
            if let Some(s) = c.sweep.series.as_mut() {
                if axis_is_frequency(s.axis) {
                    s.values.iter_mut().for_each(|v| *v *= TAU);
                }
            }
            c.scan.lambda.iter_mut().for_each(|v| *v *= TAU);
            c.units = Units::Angular;
        }
        if let Some(cut) = c.numerics.cutoffs.take() {
            c.params.cutoffs = cut;
        }
        c.numerics.cutoffs = Some(c.params.cutoffs);
        if let Some(temp) = c.temperature.take() {
            c.dissipation.n_th = vacpump_core::models::nth_from_temperature(c.params.omega_b, temp)
                .map_err(|e| CliError::Config(format!("temperature: {e}")))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, e: vacpump_core::Error| CliError::Config(format!("{name}: {e}"));
        self.params.validate().map_err(|e| field("params", e))?;
        self.dissipation.validate().map_err(|e| field("dissipation", e))?;
        let n = &self.numerics;
        if let Some(t) = self.temperature {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(CliError::Config(format!("temperature: {t} must be finite and >= 0")));
            }
        }
        let positive = [
            ("numerics.spectrum_tol", n.spectrum_tol),
            ("numerics.periods", n.periods),
            ("numerics.krylov_tol", n.krylov_tol),
            ("numerics.convergence_tol", n.convergence_tol),
            ("numerics.floquet.tol", n.floquet.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("{name}: {v} must be finite and > 0")));
            }
        }
        for (name, v) in [("numerics.t_final", n.t_final), ("numerics.dt_max", n.dt_max)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(CliError::Config(format!("{name}: {v} must be finite and > 0")));
                }
            }
        }
        if n.k_max == 0 {
            return Err(CliError::Config("numerics.k_max: must be >= 1".into()));
        }
        if n.samples < 4 * n.k_max + 1 {
            return Err(CliError::Config(format!("numerics.samples: need at least 4 k_max + 1 = {}", 4 * n.k_max + 1)));
        }
        if n.cutoff_convergence && n.max_doublings == 0 {
            return Err(CliError::Config("numerics.max_doublings: must be >= 1 while cutoff_convergence is on".into()));
        }
        if n.records_per_period == 0 {
            return Err(CliError::Config("numerics.records_per_period: must be >= 1".into()));
        }
        if n.floquet.krylov_dim < 2 {
            return Err(CliError::Config("numerics.floquet.krylov_dim: must be >= 2".into()));
        }
        let finite = |name: &str, vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name}: values must be finite")))
            }
        };
        finite("sweep.values", &self.sweep.values)?;
        if let Some(s) = &self.sweep.series {
            finite("sweep.series.values", &s.values)?;
        }
        finite("scan.xi", &self.scan.xi)?;
        finite("scan.lambda", &self.scan.lambda)?;
        if let Some(x) = self.scan.xi.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(CliError::Config(format!("scan.xi: {x} outside [0, 1]")));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats: at least one format is required".into()));
        }
        if let Some(name) = &self.output.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(CliError::Config(format!("output.name: `{name}` is not a plain file stem")));
            }
        }
        Ok(())
    }

    pub fn output_stem(&self) -> String {
        self.output.name.clone().unwrap_or_else(|| self.experiment.name().to_string())
    }

    /// Simulated time span for the dynamical experiments.
    pub fn t_final(&self) -> Result<f64, CliError> {
        match self.numerics.t_final {
            Some(t) => Ok(t),
            None => Ok(self.numerics.periods * self.params.drive_period().map_err(|e| CliError::Config(format!("params: {e}")))?),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Where the layers of a configuration come from.
#[derive(Clone, Debug, Default)]
pub struct ConfigSource<'a> {
    pub path: Option<&'a Path>,
    pub preset: Option<&'a str>,
    pub sets: &'a [String],
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_set(assignment: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set `{assignment}`: expected key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set `{assignment}`: malformed key")));
    }
    let raw = raw.trim();
    // TOML literal if it parses as one, bare string otherwise
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_set(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {}: `{p}` is not a table", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

pub fn from_table(table: toml::Table) -> Result<ExperimentConfig, CliError> {
    let de = toml::Value::Table(table);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })
}

/// Preset, then file, then `--set` overrides, deserialized and validated (not resolved).
pub fn load(source: &ConfigSource) -> Result<ExperimentConfig, CliError> {
    let mut table = toml::Table::new();
    if let Some(name) = source.preset {
        let preset = presets::preset(name).ok_or_else(|| {
            CliError::Config(format!("unknown preset `{name}`; available: {}", presets::names().join(", ")))
        })?;
        table = toml::Table::try_from(&preset).expect("preset serializes");
    }
    if let Some(path) = source.path {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        merge(&mut table, file);
    }
    if source.path.is_none() && source.preset.is_none() {
        return Err(CliError::Config("a config file or --preset is required".into()));
    }
    for s in source.sets {
        let (path, value) = parse_set(s)?;
        apply_set(&mut table, &path, value)?;
    }
    let config = from_table(table)?;
    config.validate()?;
    Ok(config)
}
