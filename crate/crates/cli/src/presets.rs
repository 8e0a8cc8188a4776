//! Built-in experiment presets.
//!
//! Desk-scale presets work in units of `ω_b`. The cavity sits at `400 ω_b`
//! rather than `4000 ω_b` and the optomechanical coupling and damping rates
//! are raised together, keeping `g/(γ_b + γ_D)` and `γ_D/γ_b` fixed so the
//! steady-state amplitudes are unchanged.

use vacpump_core::steadystate::SweepAxis;
use vacpump_core::{Cutoffs, DissipationParams, MatterKind, ModulationShape, SystemParams};

use crate::config::{ExperimentConfig, Experiment, Series, Units};

const PRESETS: &[(&str, &str)] = &[
    ("fig2", "closed full vs effective phonon dynamics, Rabi model, 10 drive periods"),
    ("fig3a", "steady state at the harmonic resonances omega_d = omega_b / k"),
    ("fig3b", "steady state vs detuning for three mechanical damping rates"),
    ("fig3c", "steady state vs thermal occupation, modulation on and off"),
    ("fig4", "detuning sweep with two coupled harmonic resonators"),
    ("fig6", "phonon yield after 100 closed cycles vs counter-rotating weight"),
    ("device", "transmon device prediction in physical units"),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn summaries() -> &'static [(&'static str, &'static str)] {
    PRESETS
}

const DESK_SCALE: &str = "desk scale in units of omega_b: omega_a = omega_sigma = 400 (physical ratio 4000)";

/// Damping shared by the steady-state presets: `γ_b = 1e-4`, `γ_D = γ_b / 2`.
fn steady_damping() -> DissipationParams {
    DissipationParams { gamma_b: 1e-4, gamma_d: 0.5e-4, ..DissipationParams::default() }
}

/// `g = 3.75e-3` keeps `g/(γ_b + γ_D) = 25` for the damping above.
fn steady_params(phonon: usize) -> SystemParams {
    SystemParams { g: 3.75e-3, cutoffs: Cutoffs { cavity: 15, matter: 2, phonon }, ..SystemParams::default() }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut c;
    match name {
        "fig2" => {
            c = ExperimentConfig::new(Experiment::EvolveFull);
            c.description = format!("{DESK_SCALE}; g = 2e-3 so the phonon signal is visible within 10 periods");
            c.params.cutoffs = Cutoffs { cavity: 10, matter: 2, phonon: 6 };
            c.numerics.periods = 10.0;
            c.numerics.max_doublings = 1;
        }
        "fig3a" => {
            c = ExperimentConfig::new(Experiment::SteadySweep);
            c.description = format!("{DESK_SCALE}; g, gamma_b, gamma_d scaled by 250");
            c.params = steady_params(40);
            c.dissipation = steady_damping();
            c.sweep.axis = SweepAxis::DriveFrequency;
            c.sweep.values = (1..=5).map(|k| 1.0 / k as f64).collect();
            c.numerics.max_doublings = 1;
        }
        "fig3b" => {
            c = ExperimentConfig::new(Experiment::SteadySweep);
            c.description = format!("{DESK_SCALE}; g, gamma_b, gamma_d scaled by 250");
            c.params = steady_params(80);
            c.dissipation = steady_damping();
            c.sweep.axis = SweepAxis::Detuning;
            c.sweep.values = linspace(-7.5e-4, 7.5e-4, 11);
            c.sweep.series = Some(Series { axis: SweepAxis::GammaB, values: vec![0.5e-4, 1e-4, 2e-4] });
            c.numerics.max_doublings = 1;
        }
        "fig3c" => {
            c = ExperimentConfig::new(Experiment::SteadySweep);
            c.description = format!("{DESK_SCALE}; g, gamma_b, gamma_d scaled by 250; density-matrix path capped at n_th = 4");
            c.params = steady_params(100);
            c.dissipation = steady_damping();
            c.sweep.axis = SweepAxis::NTh;
            c.sweep.values = vec![0.0, 1.0, 2.0, 4.0];
            c.sweep.series = Some(Series { axis: SweepAxis::DeltaOmega, values: vec![0.0, 400.0] });
            c.numerics.cutoff_convergence = false;
        }
        "fig4" => {
            c = ExperimentConfig::new(Experiment::SteadySweep);
            c.description = format!("{DESK_SCALE}; two harmonic resonators, lambda = 0.3 omega_a, delta_omega = omega_a / 2");
            c.params = SystemParams {
                g: 7.5e-3,
                lambda0: 120.0,
                delta_omega: 200.0,
                matter_kind: MatterKind::Boson,
                cutoffs: Cutoffs { cavity: 12, matter: 12, phonon: 100 },
                ..SystemParams::default()
            };
            c.dissipation = steady_damping();
            c.sweep.axis = SweepAxis::Detuning;
            c.sweep.values = linspace(-7.5e-4, 7.5e-4, 11);
            c.numerics.max_doublings = 1;
        }
        "fig6" => {
            c = ExperimentConfig::new(Experiment::CrtScan);
            c.description = format!("{DESK_SCALE}; closed dynamics from the dressed vacuum, 100 drive periods");
            c.params.cutoffs = Cutoffs { cavity: 10, matter: 2, phonon: 6 };
            c.numerics.periods = 100.0;
            c.numerics.max_doublings = 1;
            c.scan.xi = vec![0.0, 0.5, 1.0];
        }
        "device" => {
            c = ExperimentConfig::new(Experiment::DevicePrediction);
            c.description = "transmon with Kerr nonlinearity, flux-modulated frequency and coupling; physical units".into();
            c.units = Units::Hz;
            c.temperature = Some(0.01);
            c.params = SystemParams {
                omega_a: 9.2e9,
                omega_sigma: 9.2e9,
                omega_b: 3.8e6,
                omega_d: 3.8e6,
                lambda0: 0.26 * 9.2e9,
                g: 15.0,
                delta_omega: 7e9,
                chi: 270e6,
                xi: 1.0,
                matter_kind: MatterKind::KerrBoson,
                modulation_shape: ModulationShape::Sine,
                time_dependent_lambda: true,
                cutoffs: Cutoffs { cavity: 20, matter: 10, phonon: 10 },
            };
            c.dissipation = DissipationParams { gamma_b: 0.4, gamma_d: 0.2, ..DissipationParams::default() };
        }
        _ => return None,
    }
    c.output.name = Some(name.to_string());
    Some(c)
}
