//! Periodic steady states of the driven, damped mirror.
//!
//! Three routes to the same limit cycle:
//!
//! - [`analytic_steady_state`]: rotating-wave closed form around the harmonic `k̄`
//!   closest to resonance, `⟨b⟩ = g N_{-k̄} / (2Δ + iΓ)`, `⟨b†b⟩ = (Γ/γ_b)|⟨b⟩|² + n_th`
//!   with `Γ = γ_b + γ_D` and `Δ = k̄ω_d − ω_b`
//! - [`moment_limit_cycle`]: exact periodic orbit of the moment equations
//! - [`floquet_fixed_point`]: fixed point of the one-period master-equation map
//!
//! Values are stroboscopic, taken at `ω_d t ≡ 0 (mod 2π)`. Since `N(t)` is real,
//! `N_{-k̄} = N_k̄*`; the analytic `⟨b⟩` uses `N_{-k̄}` so that it matches the
//! stroboscopic phase of the numerical routes.


use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::BandLu;
use crate::dynamics::lindblad::PhononLiouvillian;
use crate::dynamics::moments::{propagate_moments, MomentState};
use crate::error::{Error, Result};
use crate::hilbert::{destroy, eigh_sorted, DensityMatrix};
use crate::models::{DissipationParams, SystemParams};
use crate::ode::integrate_fixed;
use crate::vacuum::{fourier_components, FourierSpectrum, GroundStateTrack, DEFAULT_K_MAX, DEFAULT_SAMPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyStateMethod {
    AnalyticRwa,
    MomentLimitCycle,
    FloquetFixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateResult {
    pub b_ss: C64,
    pub n_ss: f64,
    pub method: SteadyStateMethod,
    pub k_bar: u32,
    /// `Δ_k̄ = k̄ω_d − ω_b`.
    pub detuning: f64,
    pub residual: f64,
}

impl SteadyStateResult {
    /// `n_ss − |b_ss|²`, non-negative for a physical state.
    pub fn incoherent_part(&self) -> f64 {
        self.n_ss - self.b_ss.norm_sqr()
    }
}

/// Harmonic `k̄ ≥ 1` closest to resonance, `round(ω_b/ω_d)`; ties go to the lower one.
pub fn resonance_order(omega_b: f64, omega_d: f64) -> Result<u32> {
    if !(omega_b > 0.0) || !(omega_d > 0.0) {
        return Err(Error::invalid("resonance order needs omega_b > 0 and omega_d > 0"));
    }
    let ratio = omega_b / omega_d;
    let lower = ratio.floor();
    let frac = ratio - lower;
    let k = if (frac - 0.5).abs() < 1e-12 {
        log::warn!("omega_b/omega_d = {ratio} is half-integer; both sidebands are off resonance, using k = {lower}");
        lower
    } else {
        ratio.round()
    };
    Ok(k.max(1.0) as u32)
}

/// Rotating-wave steady state around harmonic `k_bar`.
pub fn analytic_steady_state(
    spectrum: &FourierSpectrum,
    p: &SystemParams,
    d: &DissipationParams,
    k_bar: u32,
) -> Result<SteadyStateResult> {
    p.validate()?;
    d.validate()?;
    if k_bar == 0 {
        return Err(Error::invalid("k_bar must be >= 1"));
    }
    if d.gamma_b <= 0.0 {
        return Err(Error::Divergence("gamma_b = 0: undamped mirror has no steady state".into()));
    }
    let detuning = k_bar as f64 * p.omega_d - p.omega_b;
    if detuning.abs() > p.omega_b / 10.0 {
        log::warn!("detuning {detuning} exceeds omega_b/10; rotating-wave result is unreliable");
    }
    let gamma = d.coherence_rate();
    let n_k = spectrum.coefficient(-(k_bar as i64));
    let b_ss = p.g * n_k / C64::new(2.0 * detuning, gamma);
    let n_ss = gamma / d.gamma_b * b_ss.norm_sqr() + d.n_th;
    Ok(SteadyStateResult { b_ss, n_ss, method: SteadyStateMethod::AnalyticRwa, k_bar, detuning, residual: 0.0 })
}

/// Exact periodic orbit of the moment equations.
///
/// `⟨b⟩` obeys an affine one-period map `b ↦ e^{(-iω_b − Γ/2)T} b + c_b`, and
/// `n` likewise with factor `e^{-γ_b T}` once `⟨b⟩` is on its orbit.
pub fn moment_limit_cycle(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
) -> Result<SteadyStateResult> {
    p.validate()?;
    d.validate()?;
    if d.gamma_b <= 0.0 {
        return Err(Error::Divergence("gamma_b = 0: undamped mirror has no steady state".into()));
    }
    let period = p.drive_period()?;
    let k_bar = resonance_order(p.omega_b, p.omega_d)?;
    let gamma = d.coherence_rate();
    let m_b = (C64::new(-0.5 * gamma, -p.omega_b) * period).exp();
    let c_b = propagate_moments(p, spectrum, d, 0.0, period, MomentState::vacuum())?.b_mean;
    let b_star = c_b / (C64::new(1.0, 0.0) - m_b);
    let from_orbit = propagate_moments(p, spectrum, d, 0.0, period, MomentState { b_mean: b_star, n_mean: 0.0 })?;
    let decay = (-d.gamma_b * period).exp();
    let n_star = from_orbit.n_mean / (1.0 - decay);
    let check = propagate_moments(p, spectrum, d, 0.0, period, MomentState { b_mean: b_star, n_mean: n_star })?;
    let residual = (check.b_mean - b_star).norm() + (check.n_mean - n_star).abs();
    Ok(SteadyStateResult {
        b_ss: b_star,
        n_ss: n_star,
        method: SteadyStateMethod::MomentLimitCycle,
        k_bar,
        detuning: k_bar as f64 * p.omega_d - p.omega_b,
        residual,
    })
}

/// Lab-frame stroboscopic map over one drive period, integrated with fixed steps
/// so that it is exactly linear.
#[derive(Clone, Debug)]
pub struct FloquetMap {
    pub liouvillian: PhononLiouvillian,
    pub period: f64,
    pub steps: usize,
}

impl FloquetMap {
    pub fn new(p: &SystemParams, spectrum: &FourierSpectrum, d: &DissipationParams) -> Result<Self> {
        let liouvillian = PhononLiouvillian::new(p, spectrum, d)?;
        let period = p.drive_period()?;
        let pressure = liouvillian.pressure();
        let scale = pressure.coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let k_eff = (1..=pressure.k_max as i64)
            .rev()
            .find(|&k| pressure.coefficient(k).norm() > 1e-14 * scale)
            .unwrap_or(0) as f64;
        let fastest = p.omega_b + k_eff * p.omega_d;
        let n = p.cutoffs.phonon as f64;
        let stiff = d.gamma_b * (1.0 + 2.0 * d.n_th) * n + 0.5 * d.gamma_d * n * n + p.g * scale * n.sqrt();
        let steps = ((period * fastest / 0.25).ceil().max((period * stiff).ceil()) as usize).max(16);
        Ok(Self { liouvillian, period, steps })
    }

    pub fn dim(&self) -> usize {
        self.liouvillian.n * self.liouvillian.n
    }

    pub fn apply(&self, rho: &[C64]) -> Vec<C64> {
        let mut y = rho.to_vec();
        let l = &self.liouvillian;
        integrate_fixed(|t, x, dx| l.rhs(t, x, dx), 0.0, self.period, self.steps, &mut y);
        l.rotate(&mut y, self.period, 1.0);
        y
    }
}

/// The full one-period map as a dense `n² × n²` matrix; only for small cutoffs.
pub fn floquet_map_matrix(p: &SystemParams, spectrum: &FourierSpectrum, d: &DissipationParams) -> Result<DMatrix<C64>> {
    let map = FloquetMap::new(p, spectrum, d)?;
    let dim = map.dim();
    if dim > 4096 {
        return Err(Error::invalid(format!("dense Floquet map of dimension {dim} is too large")));
    }
    let columns: Vec<Vec<C64>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[j] = C64::new(1.0, 0.0);
            map.apply(&e)
        })
        .collect();
    Ok(DMatrix::from_fn(dim, dim, |r, c| columns[c][r]))
}

/// Eigenvalues of a dense matrix sorted by decreasing modulus.
pub fn eigenvalues_by_modulus(m: DMatrix<C64>) -> Vec<C64> {
    let (_, t) = nalgebra::Schur::new(m).unpack();
    let mut vals: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    vals.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    vals
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloquetOptions {
    /// Target trace-norm residual `‖Φρ − ρ‖₁`.
    pub tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self { tol: 1e-10, krylov_dim: 30, max_restarts: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct FloquetSolution {
    pub result: SteadyStateResult,
    pub state: DensityMatrix,
    /// `⟨ρ, Φρ⟩ / ⟨ρ, ρ⟩`.
    pub eigenvalue: C64,
    pub map_applications: usize,
}

fn trace_norm_of_hermitian_part(n: usize, x: &[C64]) -> Result<f64> {
    let m = DMatrix::from_row_slice(n, n, x);
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let (vals, _) = eigh_sorted(h)?;
    Ok(vals.iter().map(|v| v.abs()).sum())
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Displaced thermal state with the given first and second moments.
fn displaced_thermal(n: usize, beta: C64, n_total: f64) -> Result<DMatrix<C64>> {
    let ext = n + 40 + (4.0 * beta.norm_sqr()).ceil() as usize;
    let b = destroy(ext)?.to_dense();
    let gen = &b.adjoint() * beta - &b * beta.conj();
    let disp = gen.exp();
    let n_eff = (n_total - beta.norm_sqr()).max(0.0);
    let ratio = n_eff / (1.0 + n_eff);
    let weights = DVector::from_fn(ext, |k, _| C64::new(ratio.powi(k as i32) * (1.0 - ratio), 0.0));
    let thermal = DMatrix::from_diagonal(&weights);
    let full = &disp * thermal * disp.adjoint();
    let mut rho = full.view((0, 0), (n, n)).into_owned();
    let tr = rho.trace();
    rho /= tr;
    Ok(rho)
}

/// Preconditioner: `T·L_rwa − s` with `L_rwa` the time-independent rotating-wave
/// generator in the frame turning at `k̄ω_d`, which shares its stroboscopic
/// states with the lab frame.
fn rwa_preconditioner(map: &FloquetMap, p: &SystemParams, d: &DissipationParams) -> Result<BandLu> {
    let l = &map.liouvillian;
    let k_bar = resonance_order(p.omega_b, p.omega_d)?;
    let detuning = k_bar as f64 * p.omega_d - p.omega_b;
    let c = 0.5 * p.g * l.pressure().coefficient(k_bar as i64);
    let n = l.n;
    let slowest = d.gamma_b.min(0.5 * d.coherence_rate()).max(1e-300);
    let shift = 1e-2 * slowest * map.period;
    let mut band = BandLu::zeros(n * n, n + 1, n + 1);
    for (r, col, v) in l.static_generator_entries(-detuning, c) {
        band.add(r, col, v * map.period);
    }
    for i in 0..n * n {
        band.add(i, i, C64::new(-shift, 0.0));
    }
    band.factorize()?;
    Ok(band)
}

/// Fixed point of the one-period map, solved as `(Φ − 1)ρ = 0` with right-
/// preconditioned restarted GMRES on trace-free corrections. The Krylov space
/// is the Arnoldi space of `Φ`; the minimal-residual extraction picks the
/// eigenvector with eigenvalue 1.
pub fn floquet_fixed_point_with(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    options: &FloquetOptions,
) -> Result<FloquetSolution> {
    p.validate()?;
    d.validate()?;
    if d.gamma_b <= 0.0 {
        return Err(Error::Divergence("gamma_b = 0: undamped mirror has no steady state".into()));
    }
    let map = FloquetMap::new(p, spectrum, d)?;
    let n = map.liouvillian.n;
    let guess = moment_limit_cycle(p, spectrum, d)?;
    let mut x = PhononLiouvillian::from_matrix(&displaced_thermal(n, guess.b_ss, guess.n_ss)?);
    let precond = rwa_preconditioner(&map, p, d)?;
    let inner_tol = 0.02 * options.tol / (n as f64).sqrt();
    let mut applications = 0usize;
    let mut residual = f64::INFINITY;
    let mut phi_x = Vec::new();
    for _restart in 0..=options.max_restarts {
        phi_x = map.apply(&x);
        applications += 1;
        let defect: Vec<C64> = phi_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        residual = trace_norm_of_hermitian_part(n, &defect)?;
        if residual < options.tol {
            break;
        }
        let r: Vec<C64> = defect.iter().map(|v| -v).collect();
        let beta = norm(&r);
        let m = options.krylov_dim.max(1);
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut z: Vec<Vec<C64>> = Vec::new();
        let mut h = DMatrix::<C64>::zeros(m + 1, m);
        let mut y = DVector::<C64>::zeros(0);
        for j in 0..m {
            let mut zj = v[j].clone();
            precond.solve(&mut zj)?;
            let mut w = map.apply(&zj);
            applications += 1;
            w.iter_mut().zip(&zj).for_each(|(a, b)| *a -= b);
            z.push(zj);
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dotc(vi, &w);
                    h[(i, j)] += c;
                    w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
                }
            }
            let hn = norm(&w);
            h[(j + 1, j)] = C64::new(hn, 0.0);
            let hj = h.view((0, 0), (j + 2, j + 1)).into_owned();
            let mut rhs = DVector::<C64>::zeros(j + 2);
            rhs[0] = C64::new(beta, 0.0);
            let svd = hj.clone().svd(true, true);
            y = svd.solve(&rhs, 1e-300).map_err(|e| Error::Convergence(e.to_string()))?;
            let est = (&rhs - &hj * &y).norm();
            if est < inner_tol || hn <= 1e-14 * beta {
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        for (yj, zj) in y.iter().zip(&z) {
            x.iter_mut().zip(zj).for_each(|(a, b)| *a += yj * b);
        }
        // the exact fixed point is Hermitian with unit trace
        let xm = DMatrix::from_row_slice(n, n, &x);
        let mut herm = (&xm + xm.adjoint()) * C64::new(0.5, 0.0);
        let tr = herm.trace();
        herm /= tr;
        x = PhononLiouvillian::from_matrix(&herm);
        if applications > options.max_restarts * (options.krylov_dim + 1) + 1 {
            break;
        }
    }
    if !(residual < options.tol) {
        let slowest = d.gamma_b.min(0.5 * d.coherence_rate());
        return Err(Error::Convergence(format!(
            "Floquet fixed point residual {residual:e} above {:e} after {applications} map applications; \
             subdominant eigenvalue ≈ {:.6}",
            options.tol,
            (-slowest * map.period).exp()
        )));
    }
    let liou = &map.liouvillian;
    liou.check_leak(&x, 0.0)?;
    let eigenvalue = dotc(&x, &phi_x) / dotc(&x, &x);
    let k_bar = resonance_order(p.omega_b, p.omega_d)?;
    let result = SteadyStateResult {
        b_ss: liou.b_mean(&x),
        n_ss: liou.n_mean(&x),
        method: SteadyStateMethod::FloquetFixedPoint,
        k_bar,
        detuning: k_bar as f64 * p.omega_d - p.omega_b,
        residual,
    };
    let state = DensityMatrix::new(crate::hilbert::SpaceLayout::single(crate::hilbert::Label::Phonon, n)?, liou.to_matrix(&x))?;
    Ok(FloquetSolution { result, state, eigenvalue, map_applications: applications })
}

pub fn floquet_fixed_point(p: &SystemParams, spectrum: &FourierSpectrum, d: &DissipationParams) -> Result<SteadyStateResult> {
    Ok(floquet_fixed_point_with(p, spectrum, d, &FloquetOptions::default())?.result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `ω_d`
    DriveFrequency,
    /// `Δ_k̄`, realized by moving `ω_d` at fixed `k̄`
    Detuning,
    NTh,
    GammaB,
    Xi,
    Lambda,
    /// Modulation depth `Δ_ω`
    DeltaOmega,
}

impl SweepAxis {
    /// Whether the axis changes the cavity–matter spectrum and hence `N_k`.
    pub fn changes_usc(&self) -> bool {
        matches!(self, SweepAxis::Xi | SweepAxis::Lambda | SweepAxis::DeltaOmega)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub floquet: bool,
    pub moments: bool,
    pub k_max: usize,
    pub samples: usize,
    pub floquet_options: FloquetOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            floquet: true,
            moments: false,
            k_max: DEFAULT_K_MAX,
            samples: DEFAULT_SAMPLES,
            floquet_options: FloquetOptions::default(),
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub params: SystemParams,
    pub dissipation: DissipationParams,
    pub spectrum: Option<FourierSpectrum>,
    pub analytic: Result<SteadyStateResult>,
    pub moments: Option<Result<SteadyStateResult>>,
    pub floquet: Option<Result<SteadyStateResult>>,
}

/// Pressure spectrum of the adiabatic ground state.
pub fn pressure_spectrum(p: &SystemParams, k_max: usize, samples: usize) -> Result<FourierSpectrum> {
    let track = GroundStateTrack::compute(p, samples.max(4 * k_max + 1))?;
    fourier_components(&track, k_max)
}

fn point_inputs(
    p: &SystemParams,
    d: &DissipationParams,
    axis: SweepAxis,
    value: f64,
    base_k: u32,
) -> Result<(SystemParams, DissipationParams)> {
    let mut p = p.clone();
    let mut d = d.clone();
    match axis {
        SweepAxis::DriveFrequency => p.omega_d = value,
        SweepAxis::Detuning => p.omega_d = (p.omega_b + value) / base_k as f64,
        SweepAxis::NTh => d.n_th = value,
        SweepAxis::GammaB => d.gamma_b = value,
        SweepAxis::Xi => p.xi = value,
        SweepAxis::Lambda => p.lambda0 = value,
        SweepAxis::DeltaOmega => p.delta_omega = value,
    }
    p.validate()?;
    d.validate()?;
    Ok((p, d))
}

/// Steady states along one parameter axis. Points run in parallel and failures
/// are recorded per point.
pub fn sweep(
    p: &SystemParams,
    d: &DissipationParams,
    axis: SweepAxis,
    values: &[f64],
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    p.validate()?;
    d.validate()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sweep values must be finite"));
    }
    let base_k = resonance_order(p.omega_b, p.omega_d)?;
    let shared = if axis.changes_usc() || values.is_empty() {
        None
    } else {
        Some(pressure_spectrum(p, options.k_max, options.samples)?)
    };
    let points = values
        .par_iter()
        .map(|&value| {
            let inputs = point_inputs(p, d, axis, value, base_k);
            let (pp, dd) = match inputs {
                Ok(v) => v,
                Err(e) => {
                    return SweepPoint {
                        value,
                        params: p.clone(),
                        dissipation: d.clone(),
                        spectrum: None,
                        analytic: Err(e),
                        moments: None,
                        floquet: None,
                    }
                }
            };
            let spectrum = match &shared {
                Some(s) => Ok(s.with_omega_d(pp.omega_d)),
                None => pressure_spectrum(&pp, options.k_max, options.samples),
            };
            let spectrum = match spectrum {
                Ok(s) => s,
                Err(e) => {
                    return SweepPoint { value, params: pp, dissipation: dd, spectrum: None, analytic: Err(e), moments: None, floquet: None }
                }
            };
            let analytic = resonance_order(pp.omega_b, pp.omega_d)
                .and_then(|k| analytic_steady_state(&spectrum, &pp, &dd, k));
            let moments = options.moments.then(|| moment_limit_cycle(&pp, &spectrum, &dd));
            let floquet = options
                .floquet
                .then(|| floquet_fixed_point_with(&pp, &spectrum, &dd, &options.floquet_options).map(|s| s.result));
            SweepPoint { value, params: pp, dissipation: dd, spectrum: Some(spectrum), analytic, moments, floquet }
        })
        .collect();
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub width: f64,
    /// `‖y − fit‖ / ‖y‖`.
    pub relative_residual: f64,
}

/// Least-squares fit of `y = A / ((2Δ)² + w²)`; `w` is fitted too when not given.
pub fn fit_lorentzian(detunings: &[f64], excess: &[f64], width: Option<f64>) -> Result<LorentzianFit> {
    if detunings.len() != excess.len() || detunings.is_empty() {
        return Err(Error::invalid("fit needs matching, non-empty data"));
    }
    let y_norm = excess.iter().map(|v| v * v).sum::<f64>().sqrt();
    if y_norm == 0.0 {
        return Err(Error::invalid("cannot fit a Lorentzian to all-zero data"));
    }
    let fit_for = |w: f64| {
        let f: Vec<f64> = detunings.iter().map(|x| 1.0 / (4.0 * x * x + w * w)).collect();
        let amp = f.iter().zip(excess).map(|(a, b)| a * b).sum::<f64>() / f.iter().map(|a| a * a).sum::<f64>();
        let res = f.iter().zip(excess).map(|(a, b)| (b - amp * a).powi(2)).sum::<f64>().sqrt() / y_norm;
        (amp, res)
    };
    let w = match width {
        Some(w) if w > 0.0 => w,
        Some(w) => return Err(Error::invalid(format!("width {w} must be > 0"))),
        None => {
            // golden-section search on log w around the data span
            let span = detunings.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
            let (mut lo, mut hi) = ((span * 1e-4).ln(), (span * 1e2).ln());
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..200 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if fit_for(a.exp()).1 < fit_for(b.exp()).1 {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            (0.5 * (lo + hi)).exp()
        }
    };
    let (amplitude, relative_residual) = fit_for(w);
    Ok(LorentzianFit { amplitude, width: w, relative_residual })
}
