//! Experiment dispatch and the cutoff-convergence loop.

use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vacpump_core::dynamics::{self, closed, lindblad, moments, ClosedRunOptions, MomentState, Trajectory};
use vacpump_core::steadystate::{self, SteadyStateResult, SweepAxis, SweepOptions, SweepPoint};
use vacpump_core::vacuum::{self, ground_state_at, FourierSpectrum, GroundStateTrack};
use vacpump_core::{Cutoffs, DensityMatrix, DissipationParams, Label, PureState, SpaceLayout, SystemParams};

use crate::config::{EffectiveMethod, Experiment, ExperimentConfig, ScanMethod, Units};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnValues {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: ColumnValues,
}

impl Column {
    pub fn real(name: &str, values: Vec<f64>) -> Self {
        Self { name: name.to_string(), values: ColumnValues::Real(values) }
    }

    pub fn complex(name: &str, values: Vec<C64>) -> Self {
        Self { name: name.to_string(), values: ColumnValues::Complex(values) }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ColumnValues::Real(v) => v.len(),
            ColumnValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Columnar result payload; every column has the same length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Real column, or the real part of a complex one.
    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name).map(|c| match &c.values {
            ColumnValues::Real(v) => v.clone(),
            ColumnValues::Complex(v) => v.iter().map(|z| z.re).collect(),
        })
    }

    fn check(&self) -> Result<(), CliError> {
        let rows = self.rows();
        if let Some(c) = self.columns.iter().find(|c| c.len() != rows) {
            return Err(CliError::Config(format!("internal: column {} has {} rows, expected {rows}", c.name, c.len())));
        }
        Ok(())
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut columns = vec![Column::real("t", traj.times.clone())];
        for (name, values) in &traj.observables {
            columns.push(Column::complex(name, values.clone()));
        }
        Self { columns }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStep {
    pub cutoffs: Cutoffs,
    /// Largest change of the target observables relative to their largest magnitude.
    pub relative_change: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub enabled: bool,
    pub target: String,
    pub tolerance: f64,
    pub steps: Vec<ConvergenceStep>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    /// Effective configuration: angular units, final cutoffs.
    pub config: ExperimentConfig,
    pub source_units: Units,
    pub version: &'static str,
    pub walltime_s: f64,
    pub convergence: ConvergenceReport,
    pub diagnostics: Vec<(String, f64)>,
    /// Per-point failures that did not stop the run.
    pub errors: Vec<String>,
    pub payload: Table,
}

struct Outcome {
    table: Table,
    /// Observables watched by the cutoff-convergence loop.
    targets: Vec<f64>,
    target: &'static str,
    diagnostics: Vec<(String, f64)>,
    errors: Vec<String>,
}

fn engine(context: &str) -> impl Fn(vacpump_core::Error) -> CliError + '_ {
    move |e| CliError::engine(context, e)
}

/// Resolve, run with cutoff doubling, and assemble the record.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord, CliError> {
    let source_units = config.units;
    let mut cfg = config.resolved()?;
    let start = Instant::now();
    let mut outcome = evaluate(&cfg)?;
    let tol = cfg.numerics.convergence_tol;
    let mut report = ConvergenceReport {
        enabled: cfg.numerics.cutoff_convergence,
        target: outcome.target.to_string(),
        tolerance: tol,
        steps: vec![ConvergenceStep { cutoffs: cfg.params.cutoffs, relative_change: None }],
        converged: !cfg.numerics.cutoff_convergence,
    };
    if cfg.numerics.cutoff_convergence {
        for _ in 0..cfg.numerics.max_doublings {
            let mut finer = cfg.clone();
            finer.params.cutoffs = cfg.params.cutoffs.doubled();
            finer.numerics.cutoffs = Some(finer.params.cutoffs);
            log::info!("cutoff doubling to {:?}", finer.params.cutoffs);
            let next = evaluate(&finer)?;
            let change = relative_change(&outcome.targets, &next.targets);
            report.steps.push(ConvergenceStep { cutoffs: finer.params.cutoffs, relative_change: Some(change) });
            cfg = finer;
            outcome = next;
            if change < tol {
                report.converged = true;
                break;
            }
        }
        if !report.converged {
            let last = report.steps.last().and_then(|s| s.relative_change).unwrap_or(f64::NAN);
            return Err(CliError::engine(
                "cutoff convergence",
                vacpump_core::Error::Convergence(format!(
                    "{} still moves by {last:e} (> {tol:e}) after {} doublings",
                    outcome.target, cfg.numerics.max_doublings
                )),
            ));
        }
    }
    outcome.table.check()?;
    Ok(RunRecord {
        config: cfg,
        source_units,
        version: env!("CARGO_PKG_VERSION"),
        walltime_s: start.elapsed().as_secs_f64(),
        convergence: report,
        diagnostics: outcome.diagnostics,
        errors: outcome.errors,
        payload: outcome.table,
    })
}

fn relative_change(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let scale = b.iter().filter(|v| v.is_finite()).map(|v| v.abs()).fold(0.0, f64::max);
    let diff = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

fn evaluate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cfg.experiment {
        Experiment::Pressure => run_pressure(cfg),
        Experiment::EvolveFull => run_full(cfg),
        Experiment::EvolveEffective => run_effective(cfg),
        Experiment::SteadySweep => run_sweep(cfg),
        Experiment::DevicePrediction => run_device(cfg),
        Experiment::CrtScan => run_scan(cfg),
    }
}

fn spectrum(cfg: &ExperimentConfig, p: &SystemParams) -> Result<(FourierSpectrum, GroundStateTrack), CliError> {
    let n = &cfg.numerics;
    let (spec, track, _) = vacuum::converged_spectrum(p, n.k_max, n.samples, n.spectrum_tol, n.max_sample_doublings)
        .map_err(engine("pressure spectrum"))?;
    Ok((spec, track))
}

fn run_pressure(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (spec, track) = spectrum(cfg, &cfg.params)?;
    let k_max = cfg.numerics.k_max as i64;
    let ks: Vec<f64> = (0..=k_max).map(|k| k as f64).collect();
    let coeffs: Vec<C64> = (0..=k_max).map(|k| spec.coefficient(k)).collect();
    let mags: Vec<f64> = coeffs.iter().map(|z| z.norm()).collect();
    let targets = coeffs.iter().flat_map(|z| [z.re, z.im]).collect();
    let diagnostics = vec![
        ("samples".to_string(), track.times.len() as f64),
        ("min_gap".to_string(), track.min_gap()),
        ("conjugate_symmetry_error".to_string(), spec.conjugate_symmetry_error()),
        ("reconstruction_error".to_string(), spec.reconstruction_error(&track.times, &track.pressure)),
        ("max_abs_N".to_string(), track.pressure.iter().map(|v| v.abs()).fold(0.0, f64::max)),
    ];
    Ok(Outcome {
        table: Table { columns: vec![Column::real("k", ks), Column::complex("N_k", coeffs), Column::real("abs_N_k", mags)] },
        targets,
        target: "N_k",
        diagnostics,
        errors: Vec::new(),
    })
}

fn full_initial_state(p: &SystemParams) -> Result<PureState, CliError> {
    let gs = ground_state_at(p, 0.0).map_err(engine("initial ground state"))?;
    let phonon = PureState::fock(SpaceLayout::single(Label::Phonon, p.cutoffs.phonon).map_err(engine("phonon layout"))?, &[0])
        .map_err(engine("phonon vacuum"))?;
    gs.state.tensor(&phonon).map_err(engine("initial state"))
}

fn closed_run(cfg: &ExperimentConfig, p: &SystemParams, t_final: f64, emission: bool) -> Result<Trajectory, CliError> {
    let dt = match cfg.numerics.dt_max {
        Some(dt) => dt,
        None => closed::default_dt_max(p).map_err(engine("step size"))?,
    };
    let opts = ClosedRunOptions {
        record_spacing: Some(p.drive_period().map_err(engine("drive period"))? / cfg.numerics.records_per_period as f64),
        krylov_tol: cfg.numerics.krylov_tol,
        emission,
        ..ClosedRunOptions::default()
    };
    let init = full_initial_state(p)?;
    closed::evolve_closed_full(p, t_final, dt, &init, &opts).map_err(engine("closed dynamics"))
}

fn run_full(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let traj = closed_run(cfg, p, cfg.t_final()?, true)?;
    let n_full = traj.real(dynamics::N_PHONON).expect("recorded");
    let mut table = Table::from_trajectory(&traj);
    let mut diagnostics = Vec::new();
    if cfg.numerics.compare_effective {
        let (spec, _) = spectrum(cfg, p)?;
        let eff = moments::evolve_effective_moments_on(p, &spec, &DissipationParams::default(), &traj.times, MomentState::vacuum())
            .map_err(engine("effective dynamics"))?;
        let n_eff = eff.real(dynamics::N_PHONON).expect("recorded");
        let scale = n_eff.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let diff = n_full.iter().zip(&n_eff).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        diagnostics.push(("max_abs_difference_full_effective".to_string(), diff));
        if scale > 0.0 {
            diagnostics.push(("relative_difference_full_effective".to_string(), diff / scale));
        }
        table.columns.push(Column::real("n_effective", n_eff));
    }
    let emission_max = |name| traj.get(name).map_or(0.0, |v| v.iter().map(|z| z.re).fold(0.0, f64::max));
    diagnostics.push(("max_emission_X".to_string(), emission_max(dynamics::EMISSION_X)));
    diagnostics.push(("max_emission_S".to_string(), emission_max(dynamics::EMISSION_S)));
    Ok(Outcome { table, targets: n_full, target: "n_phonon", diagnostics, errors: Vec::new() })
}

fn run_effective(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let d = &cfg.dissipation;
    let (spec, _) = spectrum(cfg, p)?;
    let t_final = cfg.t_final()?;
    let spacing = p.drive_period().map_err(engine("drive period"))? / cfg.numerics.records_per_period as f64;
    let grid = dynamics::record_grid(t_final, spacing).map_err(engine("record grid"))?;
    let traj = match cfg.numerics.effective_method {
        EffectiveMethod::Moments => {
            moments::evolve_effective_moments_on(p, &spec, d, &grid, MomentState::thermal(d.n_th))
        }
        EffectiveMethod::Lindblad => p
            .phonon_layout()
            .and_then(|l| DensityMatrix::thermal(l, d.n_th))
            .and_then(|rho| lindblad::evolve_lindblad_on(p, &spec, d, &grid, &rho)),
    }
    .map_err(engine("effective dynamics"))?;
    let targets = traj.real(dynamics::N_PHONON).expect("recorded");
    Ok(Outcome { table: Table::from_trajectory(&traj), targets, target: "n_phonon", diagnostics: Vec::new(), errors: Vec::new() })
}

fn apply_axis(p: &mut SystemParams, d: &mut DissipationParams, axis: SweepAxis, value: f64) -> Result<(), CliError> {
    match axis {
        SweepAxis::DriveFrequency => p.omega_d = value,
        SweepAxis::Detuning => {
            let k = steadystate::resonance_order(p.omega_b, p.omega_d).map_err(engine("series"))?;
            p.omega_d = (p.omega_b + value) / k as f64;
        }
        SweepAxis::NTh => d.n_th = value,
        SweepAxis::GammaB => d.gamma_b = value,
        SweepAxis::Xi => p.xi = value,
        SweepAxis::Lambda => p.lambda0 = value,
        SweepAxis::DeltaOmega => p.delta_omega = value,
    }
    Ok(())
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::DriveFrequency => "omega_d",
        SweepAxis::Detuning => "detuning",
        SweepAxis::NTh => "n_th",
        SweepAxis::GammaB => "gamma_b",
        SweepAxis::Xi => "xi",
        SweepAxis::Lambda => "lambda0",
        SweepAxis::DeltaOmega => "delta_omega",
    }
}

#[derive(Default)]
struct SweepColumns {
    series: Vec<f64>,
    value: Vec<f64>,
    k_bar: Vec<f64>,
    detuning: Vec<f64>,
    abs_n_kbar: Vec<f64>,
    n_th: Vec<f64>,
    methods: Vec<(&'static str, Vec<C64>, Vec<f64>, Vec<f64>)>,
}

fn push_result(slot: &mut (&'static str, Vec<C64>, Vec<f64>, Vec<f64>), r: Option<&SteadyStateResult>) {
    match r {
        Some(r) => {
            slot.1.push(r.b_ss);
            slot.2.push(r.n_ss);
            slot.3.push(r.residual);
        }
        None => {
            slot.1.push(C64::new(f64::NAN, f64::NAN));
            slot.2.push(f64::NAN);
            slot.3.push(f64::NAN);
        }
    }
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let sc = &cfg.sweep;
    let options = SweepOptions {
        floquet: sc.floquet,
        moments: sc.moments,
        k_max: cfg.numerics.k_max,
        samples: cfg.numerics.samples,
        floquet_options: cfg.numerics.floquet.clone(),
    };
    let series: Vec<Option<f64>> = match &sc.series {
        Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    let mut cols = SweepColumns::default();
    let mut methods = vec![("analytic", Vec::new(), Vec::new(), Vec::new())];
    if sc.floquet {
        methods.push(("floquet", Vec::new(), Vec::new(), Vec::new()));
    }
    if sc.moments {
        methods.push(("moments", Vec::new(), Vec::new(), Vec::new()));
    }
    cols.methods = methods;
    let mut errors = Vec::new();
    let mut diagnostics = Vec::new();
    for s in &series {
        let mut p = cfg.params.clone();
        let mut d = cfg.dissipation.clone();
        if let (Some(v), Some(spec)) = (s, &sc.series) {
            apply_axis(&mut p, &mut d, spec.axis, *v)?;
        }
        let points = steadystate::sweep(&p, &d, sc.axis, &sc.values, &options).map_err(engine("sweep"))?;
        let label = |pt: &SweepPoint| match s {
            Some(v) => format!("series {v}, {} {}", axis_name(sc.axis), pt.value),
            None => format!("{} {}", axis_name(sc.axis), pt.value),
        };
        for pt in &points {
            cols.series.push(s.unwrap_or(f64::NAN));
            cols.value.push(pt.value);
            let k = steadystate::resonance_order(pt.params.omega_b, pt.params.omega_d).ok();
            cols.k_bar.push(k.map_or(f64::NAN, f64::from));
            cols.detuning.push(k.map_or(f64::NAN, |k| k as f64 * pt.params.omega_d - pt.params.omega_b));
            cols.abs_n_kbar.push(match (&pt.spectrum, k) {
                (Some(spec), Some(k)) => spec.coefficient(k as i64).norm(),
                _ => f64::NAN,
            });
            cols.n_th.push(pt.dissipation.n_th);
            let mut record = |slot: usize, r: Option<&vacpump_core::Result<SteadyStateResult>>, name: &str| {
                match r {
                    Some(Ok(r)) => push_result(&mut cols.methods[slot], Some(r)),
                    Some(Err(e)) => {
                        errors.push(format!("{}: {name}: {e}", label(pt)));
                        push_result(&mut cols.methods[slot], None);
                    }
                    None => push_result(&mut cols.methods[slot], None),
                }
            };
            let mut slot = 0;
            record(slot, Some(&pt.analytic), "analytic");
            if sc.floquet {
                slot += 1;
                record(slot, pt.floquet.as_ref(), "floquet");
            }
            if sc.moments {
                slot += 1;
                record(slot, pt.moments.as_ref(), "moments");
            }
        }
        if sc.axis == SweepAxis::Detuning && points.len() >= 3 {
            let best = if sc.floquet { 1 } else { 0 };
            let n0 = cols.value.len() - points.len();
            let excess: Vec<f64> = cols.methods[best].2[n0..]
                .iter()
                .zip(&cols.n_th[n0..])
                .map(|(n, t)| n - t)
                .collect();
            let x = &cols.detuning[n0..];
            if excess.iter().chain(x).all(|v| v.is_finite()) {
                if let Ok(fit) = steadystate::fit_lorentzian(x, &excess, None) {
                    let tag = s.map(|v| format!("[series={v}]")).unwrap_or_default();
                    diagnostics.push((format!("lorentzian_width{tag}"), fit.width));
                    diagnostics.push((format!("lorentzian_relative_residual{tag}"), fit.relative_residual));
                }
            }
        }
    }
    let mut columns = Vec::new();
    if let Some(spec) = &sc.series {
        columns.push(Column::real(&format!("series_{}", axis_name(spec.axis)), cols.series));
    }
    columns.push(Column::real(axis_name(sc.axis), cols.value));
    columns.push(Column::real("k_bar", cols.k_bar));
    columns.push(Column::real("detuning_kbar", cols.detuning));
    columns.push(Column::real("abs_N_kbar", cols.abs_n_kbar));
    columns.push(Column::real("n_th_point", cols.n_th));
    let mut targets = Vec::new();
    for (name, b, n, res) in cols.methods {
        targets.extend(n.iter().copied());
        columns.push(Column::complex(&format!("{name}_b_ss"), b));
        columns.push(Column::real(&format!("{name}_n_ss"), n));
        if name != "analytic" {
            columns.push(Column::real(&format!("{name}_residual"), res));
        }
    }
    Ok(Outcome { table: Table { columns }, targets, target: "n_ss", diagnostics, errors })
}

fn run_device(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let d = &cfg.dissipation;
    let (spec, track) = spectrum(cfg, p)?;
    let k = steadystate::resonance_order(p.omega_b, p.omega_d).map_err(engine("resonance order"))?;
    let r = steadystate::analytic_steady_state(&spec, p, d, k).map_err(engine("analytic steady state"))?;
    let excess = r.n_ss - d.n_th;
    let table = Table {
        columns: vec![
            Column::real("k_bar", vec![k as f64]),
            Column::complex("N_kbar", vec![spec.coefficient(k as i64)]),
            Column::complex("b_ss", vec![r.b_ss]),
            Column::real("abs_b_ss", vec![r.b_ss.norm()]),
            Column::real("n_ss", vec![r.n_ss]),
            Column::real("n_ss_minus_n_th", vec![excess]),
            Column::real("n_th", vec![d.n_th]),
        ],
    };
    let diagnostics = vec![
        ("min_gap".to_string(), track.min_gap()),
        ("reconstruction_error".to_string(), spec.reconstruction_error(&track.times, &track.pressure)),
    ];
    Ok(Outcome { table, targets: vec![r.b_ss.norm(), excess], target: "abs_b_ss, n_ss - n_th", diagnostics, errors: Vec::new() })
}

fn run_scan(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let lambdas = if cfg.scan.lambda.is_empty() { vec![cfg.params.lambda0] } else { cfg.scan.lambda.clone() };
    let grid: Vec<(f64, f64)> = cfg.scan.xi.iter().flat_map(|&x| lambdas.iter().map(move |&l| (x, l))).collect();
    let t_final = cfg.t_final()?;
    let results: Vec<Result<(f64, f64, f64), CliError>> = grid
        .par_iter()
        .map(|&(xi, lambda)| {
            let p = SystemParams { xi, lambda0: lambda, ..cfg.params.clone() };
            p.validate().map_err(|e| CliError::Config(format!("scan point xi={xi}, lambda={lambda}: {e}")))?;
            let (spec, track) = spectrum(cfg, &p)?;
            let max_n = track.pressure.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let n_final = match cfg.scan.method {
                ScanMethod::Full => closed_run(cfg, &p, t_final, false)?.last(dynamics::N_PHONON).expect("recorded").re,
                ScanMethod::Effective => {
                    moments::propagate_moments(&p, &spec, &DissipationParams::default(), 0.0, t_final, MomentState::vacuum())
                        .map_err(engine("effective dynamics"))?
                        .n_mean
                }
            };
            Ok((n_final, max_n, spec.coefficient(1).norm()))
        })
        .collect();
    let mut n = Vec::new();
    let mut max_n = Vec::new();
    let mut n1 = Vec::new();
    for r in results {
        let (a, b, c) = r?;
        n.push(a);
        max_n.push(b);
        n1.push(c);
    }
    let table = Table {
        columns: vec![
            Column::real("xi", grid.iter().map(|g| g.0).collect()),
            Column::real("lambda0", grid.iter().map(|g| g.1).collect()),
            Column::real("n_phonon_final", n.clone()),
            Column::real("max_abs_N", max_n),
            Column::real("abs_N_1", n1),
        ],
    };
    Ok(Outcome { table, targets: n, target: "n_phonon_final", diagnostics: Vec::new(), errors: Vec::new() })
}
