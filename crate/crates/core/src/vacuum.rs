//! Adiabatic ground-state tracking and the radiation pressure `N(t)`.
//!
//! The cavity–matter subsystem is assumed to follow its instantaneous ground
//! state `|ψ₀(t)⟩`. The mirror then feels
//! `N(t) = ⟨ψ₀(t)| 2a†a + a² + a†² |ψ₀(t)⟩`, which is periodic in the drive and
//! is analysed through its Fourier coefficients `N_k`.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{expectation, Operator, PureState};
use crate::krylov;
use crate::models::{usc_hamiltonian_terms, usc_lowering_operators, SystemParams, TimeDependentHamiltonian};

/// Above this USC dimension the lowest pair comes from Lanczos instead of a dense solve.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Relative gap (in units of `ω_a`) below which the ground state is declared degenerate.
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: PureState,
    pub energy: f64,
    /// `E₁ − E₀`.
    pub gap: f64,
}

/// Reusable pieces for repeated ground-state solves at different times.
pub struct GroundStateSolver {
    terms: TimeDependentHamiltonian,
    pressure_op: Operator,
    gap_tolerance: f64,
}

impl GroundStateSolver {
    pub fn new(p: &SystemParams) -> Result<Self> {
        let terms = usc_hamiltonian_terms(p)?;
        let (a, _) = usc_lowering_operators(p, terms.layout())?;
        let ad = a.adjoint();
        let pressure_op = ad.mul(&a)?.scale_real(2.0).add(&a.mul(&a)?)?.add(&ad.mul(&ad)?)?;
        let scale = if p.omega_a > 0.0 { p.omega_a } else { 1.0 };
        Ok(Self { terms, pressure_op, gap_tolerance: DEFAULT_GAP_TOLERANCE * scale })
    }

    /// Absolute gap tolerance.
    pub fn with_gap_tolerance(mut self, tol: f64) -> Self {
        self.gap_tolerance = tol;
        self
    }

    pub fn hamiltonian(&self) -> &TimeDependentHamiltonian {
        &self.terms
    }

    /// `2a†a + a² + a†²` on the USC layout.
    pub fn pressure_operator(&self) -> &Operator {
        &self.pressure_op
    }

    pub fn ground_state(&self, t: f64) -> Result<GroundState> {
        let h = self.terms.at(t)?;
        let layout = h.layout().clone();
        let (e0, e1, vec) = if h.dim() <= DENSE_EIGEN_LIMIT {
            let (vals, vecs) = h.eigh()?;
            (vals[0], vals[1], vecs.column(0).into_owned())
        } else {
            let csr = h.to_csr();
            krylov::lowest_pair(&csr, 1e-12, 400)?
        };
        let gap = e1 - e0;
        if gap < self.gap_tolerance {
            return Err(Error::DegenerateGroundState { t, gap, tolerance: self.gap_tolerance });
        }
        let state = PureState::normalized(layout, canonical_phase(vec))?;
        Ok(GroundState { state, energy: e0, gap })
    }

    pub fn pressure(&self, state: &PureState) -> Result<f64> {
        let n = expectation(&self.pressure_op, state)?;
        if n.im.abs() > 1e-10 * n.re.abs().max(1.0) {
            return Err(Error::Convergence(format!("radiation pressure has imaginary part {}", n.im)));
        }
        Ok(n.re)
    }
}

/// Rotate the global phase so the largest-magnitude amplitude is real positive.
fn canonical_phase(mut v: DVector<C64>) -> DVector<C64> {
    let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|x| *x *= phase);
    }
    v
}

/// Instantaneous ground state of `H_R + H_M(t)` with its energy and gap.
pub fn ground_state_at(p: &SystemParams, t: f64) -> Result<GroundState> {
    GroundStateSolver::new(p)?.ground_state(t)
}

/// `N(t)` evaluated in the instantaneous ground state.
pub fn radiation_pressure(p: &SystemParams, t: f64) -> Result<f64> {
    let solver = GroundStateSolver::new(p)?;
    let gs = solver.ground_state(t)?;
    solver.pressure(&gs.state)
}

fn solve_at(solver: &GroundStateSolver, times: &[f64]) -> Result<Vec<(GroundState, f64)>> {
    times
        .par_iter()
        .map(|&t| {
            let gs = solver.ground_state(t)?;
            let n = solver.pressure(&gs.state)?;
            Ok((gs, n))
        })
        .collect()
}

/// Ground states sampled uniformly over one drive period.
#[derive(Clone, Debug)]
pub struct GroundStateTrack {
    pub omega_d: f64,
    pub times: Vec<f64>,
    pub states: Vec<PureState>,
    pub energies: Vec<f64>,
    pub gaps: Vec<f64>,
    pub pressure: Vec<f64>,
}

/// Minimum `|⟨ψ₀(tᵢ)|ψ₀(tᵢ₊₁)⟩|` accepted along a track.
pub const MIN_TRACK_OVERLAP: f64 = 0.999;

impl GroundStateTrack {
    /// Sample `samples` points `tᵢ = i T / samples` over one period.
    pub fn compute(p: &SystemParams, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::invalid("a track needs at least two samples"));
        }
        let period = p.drive_period()?;
        let solver = GroundStateSolver::new(p)?;
        let times: Vec<f64> = (0..samples).map(|i| period * i as f64 / samples as f64).collect();
        let solved = solve_at(&solver, &times)?;
        Self::assemble(p.omega_d, times, solved)
    }

    /// Same track on a grid twice as fine; existing samples are kept.
    pub fn refined(&self, p: &SystemParams) -> Result<Self> {
        if p.omega_d != self.omega_d {
            return Err(Error::invalid("refinement needs the parameters the track was computed with"));
        }
        let m = self.times.len();
        let period = p.drive_period()?;
        let solver = GroundStateSolver::new(p)?;
        let mids: Vec<f64> = (0..m).map(|i| period * (2 * i + 1) as f64 / (2 * m) as f64).collect();
        let new = solve_at(&solver, &mids)?;
        let mut times = Vec::with_capacity(2 * m);
        let mut solved = Vec::with_capacity(2 * m);
        for (i, (t, item)) in mids.into_iter().zip(new).enumerate() {
            times.push(self.times[i]);
            let old = GroundState { state: self.states[i].clone(), energy: self.energies[i], gap: self.gaps[i] };
            solved.push((old, self.pressure[i]));
            times.push(t);
            solved.push(item);
        }
        Self::assemble(self.omega_d, times, solved)
    }

    fn assemble(omega_d: f64, times: Vec<f64>, solved: Vec<(GroundState, f64)>) -> Result<Self> {
        let samples = times.len();
        let mut states = Vec::with_capacity(samples);
        let mut energies = Vec::with_capacity(samples);
        let mut gaps = Vec::with_capacity(samples);
        let mut pressure = Vec::with_capacity(samples);
        for (gs, n) in solved {
            states.push(gs.state);
            energies.push(gs.energy);
            gaps.push(gs.gap);
            pressure.push(n);
        }
        // parallel transport gauge: consecutive overlaps real positive
        for i in 1..states.len() {
            let ov = states[i - 1].overlap(&states[i])?;
            if ov.norm() < MIN_TRACK_OVERLAP {
                return Err(Error::Convergence(format!(
                    "ground-state track discontinuous at t = {}: overlap {:.6}; increase samples",
                    times[i],
                    ov.norm()
                )));
            }
            states[i] = states[i].with_phase(-ov.arg());
        }
        Ok(Self { omega_d, times, states, energies, gaps, pressure })
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Fourier coefficients `N_k`, `k = -K..=K`, with `N(t) = Σ N_k exp(i k ω_d t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSpectrum {
    pub omega_d: f64,
    pub k_max: usize,
    /// Index `k + k_max`.
    pub coefficients: Vec<C64>,
}

impl FourierSpectrum {
    pub fn coefficient(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.k_max {
            return C64::new(0.0, 0.0);
        }
        self.coefficients[(k + self.k_max as i64) as usize]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..=self.k_max as i64).map(|k| self.coefficient(k).norm()).collect()
    }

    /// Real `N(t)` reconstructed from the retained harmonics.
    pub fn evaluate(&self, t: f64) -> f64 {
        let mut acc = self.coefficient(0).re;
        for k in 1..=self.k_max as i64 {
            let phase = C64::from_polar(1.0, k as f64 * self.omega_d * t);
            acc += 2.0 * (self.coefficient(k) * phase).re;
        }
        acc
    }

    /// `max |N_{-k} - conj(N_k)|`.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        (0..=self.k_max as i64)
            .map(|k| (self.coefficient(-k) - self.coefficient(k).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Max reconstruction error over a sample grid, relative to `max |N|`.
    pub fn reconstruction_error(&self, times: &[f64], values: &[f64]) -> f64 {
        let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = times
            .iter()
            .zip(values)
            .map(|(&t, &v)| (self.evaluate(t) - v).abs())
            .fold(0.0, f64::max);
        if scale > 0.0 { err / scale } else { err }
    }

    /// Same coefficients attached to a different drive frequency.
    pub fn with_omega_d(&self, omega_d: f64) -> Self {
        Self { omega_d, ..self.clone() }
    }

    /// Harmonic-free spectrum with a constant `N(t) = 0`.
    pub fn zero(omega_d: f64, k_max: usize) -> Self {
        Self { omega_d, k_max, coefficients: vec![C64::new(0.0, 0.0); 2 * k_max + 1] }
    }
}

/// Discrete Fourier quadrature of uniformly sampled periodic data.
pub fn fourier_from_samples(omega_d: f64, times: &[f64], values: &[f64], k_max: usize) -> Result<FourierSpectrum> {
    let m = times.len();
    if m != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    if m < 4 * k_max + 1 {
        return Err(Error::invalid(format!("{m} samples cannot resolve {k_max} harmonics (need >= {})", 4 * k_max + 1)));
    }
    if !(omega_d > 0.0) {
        return Err(Error::invalid("omega_d must be > 0"));
    }
    let period = TAU / omega_d;
    let step = period / m as f64;
    for (i, &t) in times.iter().enumerate() {
        let expected = times[0] + step * i as f64;
        if (t - expected).abs() > 1e-9 * period {
            return Err(Error::invalid(format!("time grid is not uniform over one period at sample {i}")));
        }
    }
    let coefficients = (-(k_max as i64)..=k_max as i64)
        .map(|k| {
            let sum: C64 = times
                .iter()
                .zip(values)
                .map(|(&t, &v)| C64::from_polar(v, -(k as f64) * omega_d * t))
                .sum();
            sum / m as f64
        })
        .collect();
    Ok(FourierSpectrum { omega_d, k_max, coefficients })
}

pub fn fourier_components(track: &GroundStateTrack, k_max: usize) -> Result<FourierSpectrum> {
    fourier_from_samples(track.omega_d, &track.times, &track.pressure, k_max)
}

/// Default number of harmonics kept.
pub const DEFAULT_K_MAX: usize = 8;
/// Default samples per drive period.
pub const DEFAULT_SAMPLES: usize = 256;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumConvergence {
    pub samples: usize,
    pub doublings: usize,
    pub max_change: f64,
}

/// Track and transform, doubling the sample count until every `N_k` moves by less than `tol`.
pub fn converged_spectrum(
    p: &SystemParams,
    k_max: usize,
    samples: usize,
    tol: f64,
    max_doublings: usize,
) -> Result<(FourierSpectrum, GroundStateTrack, SpectrumConvergence)> {
    let mut m = samples.max(4 * k_max + 1);
    let mut track = GroundStateTrack::compute(p, m)?;
    let mut spec = fourier_components(&track, k_max)?;
    for doublings in 1..=max_doublings {
        m *= 2;
        let next_track = track.refined(p)?;
        let next = fourier_components(&next_track, k_max)?;
        let change = spec
            .coefficients
            .iter()
            .zip(&next.coefficients)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        track = next_track;
        spec = next;
        if change < tol {
            return Ok((spec, track, SpectrumConvergence { samples: m, doublings, max_change: change }));
        }
    }
    Err(Error::Convergence(format!("N_k not converged after {max_doublings} doublings of the time grid")))
}
