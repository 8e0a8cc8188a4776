//! First and second moments of the driven, damped mirror.
//!
//! For `H_b(t) = ω_b b†b + (g/2) N(t) (b + b†)` with thermal loss and dephasing,
//!
//! ```text
//! d⟨b⟩/dt   = -iω_b ⟨b⟩ - i(g/2) N(t) - (γ_b + γ_D)/2 ⟨b⟩
//! d⟨b†b⟩/dt = -i(g/2) N(t) (⟨b⟩* - ⟨b⟩) - γ_b ⟨b†b⟩ + n_th γ_b
//! ```
//!
//! The system is linear and closed, so these equations are exact.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{Trajectory, B_MEAN, N_OF_T, N_PHONON};
use crate::error::{Error, Result};
use crate::models::{DissipationParams, SystemParams};
use crate::ode::Dopri5;
use crate::vacuum::FourierSpectrum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub b_mean: C64,
    pub n_mean: f64,
}

impl MomentState {
    pub fn new(b_mean: C64, n_mean: f64) -> Result<Self> {
        let s = Self { b_mean, n_mean };
        s.check()?;
        Ok(s)
    }

    pub fn vacuum() -> Self {
        Self { b_mean: C64::new(0.0, 0.0), n_mean: 0.0 }
    }

    pub fn thermal(n_th: f64) -> Self {
        Self { b_mean: C64::new(0.0, 0.0), n_mean: n_th }
    }

    /// Cauchy–Schwarz at the moment level: `n ≥ |⟨b⟩|²`.
    pub fn check(&self) -> Result<()> {
        if !self.n_mean.is_finite() || !self.b_mean.re.is_finite() || !self.b_mean.im.is_finite() {
            return Err(Error::invalid("moments must be finite"));
        }
        if self.n_mean < self.b_mean.norm_sqr() - 1e-9 {
            return Err(Error::invalid(format!(
                "n_mean = {} below |b_mean|^2 = {}",
                self.n_mean,
                self.b_mean.norm_sqr()
            )));
        }
        Ok(())
    }
}

/// Right-hand side of the moment equations, state packed as `[⟨b⟩, n]`.
pub(crate) fn moment_rhs<'a>(
    omega_b: f64,
    g: f64,
    d: &'a DissipationParams,
    pressure: &'a FourierSpectrum,
) -> impl Fn(f64, &[C64], &mut [C64]) + 'a {
    let gamma = d.coherence_rate();
    let i = C64::new(0.0, 1.0);
    move |t, y, dy| {
        let n_t = pressure.evaluate(t);
        let b = y[0];
        dy[0] = -i * omega_b * b - i * (0.5 * g * n_t) - 0.5 * gamma * b;
        // imaginary part of n is kept at zero exactly
        let drive = -i * (0.5 * g * n_t) * (b.conj() - b);
        dy[1] = C64::new(drive.re - d.gamma_b * y[1].re + d.n_th * d.gamma_b, 0.0);
    }
}

/// Moment propagator with tolerances suitable for acceptance comparisons.
pub(crate) fn moment_integrator(p: &SystemParams) -> Dopri5 {
    let period = std::f64::consts::TAU / p.omega_d.max(p.omega_b);
    Dopri5::new(1e-11, 1e-13).with_max_step(period / 20.0)
}

/// Integrate the moment equations and record on a grid of spacing `period / 20`.
pub fn evolve_effective_moments(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    t_final: f64,
    initial: MomentState,
) -> Result<Trajectory> {
    let spacing = p.drive_period()? / 20.0;
    evolve_effective_moments_on(p, spectrum, d, &super::record_grid(t_final, spacing)?, initial)
}

/// As [`evolve_effective_moments`] on an explicit increasing grid starting at `t = 0`.
pub fn evolve_effective_moments_on(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    grid: &[f64],
    initial: MomentState,
) -> Result<Trajectory> {
    p.validate()?;
    d.validate()?;
    initial.check()?;
    if grid.first() != Some(&0.0) {
        return Err(Error::invalid("record grid must start at t = 0"));
    }
    let pressure = spectrum.with_omega_d(p.omega_d);
    let rhs = moment_rhs(p.omega_b, p.g, d, &pressure);
    let mut ode = moment_integrator(p);
    let mut y = [initial.b_mean, C64::new(initial.n_mean, 0.0)];
    let mut traj = Trajectory::new(&[N_PHONON, B_MEAN, N_OF_T]);
    let mut t = 0.0;
    for &t_next in grid {
        ode.integrate(&rhs, t, t_next, &mut y)?;
        t = t_next;
        traj.push(t, &[y[1], y[0], C64::new(pressure.evaluate(t), 0.0)])?;
    }
    Ok(traj)
}

/// Propagate a moment state across `[t0, t1]`.
pub fn propagate_moments(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    t0: f64,
    t1: f64,
    state: MomentState,
) -> Result<MomentState> {
    let pressure = spectrum.with_omega_d(p.omega_d);
    let rhs = moment_rhs(p.omega_b, p.g, d, &pressure);
    let mut y = [state.b_mean, C64::new(state.n_mean, 0.0)];
    moment_integrator(p).integrate(&rhs, t0, t1, &mut y)?;
    Ok(MomentState { b_mean: y[0], n_mean: y[1].re })
}
