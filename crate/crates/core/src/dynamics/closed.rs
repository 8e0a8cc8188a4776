//! Closed Schrödinger evolution with a fourth-order commutator-free Magnus scheme.
//!
//! Each step of length `h` applies
//! `exp(-i h (α₁H₁ + α₂H₂)) · exp(-i h (α₂H₁ + α₁H₂))` with `Hᵢ = H(t + cᵢh)` at
//! the two Gauss points; the exponentials are evaluated by Lanczos. Since
//! `H(t) = C + f(t) M + λ(t) V`, each combination is just a new coefficient set.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::dressed::dressed_operators_from;
use super::{Trajectory, B_MEAN, EMISSION_S, EMISSION_X, N_OF_T, N_PHONON};
use crate::error::{Error, Result};
use crate::hilbert::{eigh_sorted, Label, PureState};
use crate::krylov::{expm_step_from, SparseTerms};
use crate::models::{
    full_hamiltonian_terms, usc_hamiltonian_terms, usc_lowering_operators, SystemParams,
    TimeDependentHamiltonian,
};

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // √3/6
const GAUSS_1: f64 = 0.5 - SQRT3_6;
const GAUSS_2: f64 = 0.5 + SQRT3_6;
const ALPHA_1: f64 = 0.25 - SQRT3_6; // (3 - 2√3)/12
const ALPHA_2: f64 = 0.25 + SQRT3_6;

#[derive(Clone, Debug)]
pub struct ClosedRunOptions {
    /// Work in the frame where the static mirror displacement is removed.
    pub displaced: bool,
    /// Spacing of the recorded observables; defaults to 1/20 of a drive period.
    pub record_spacing: Option<f64>,
    /// Per-step Lanczos error target.
    pub krylov_tol: f64,
    pub max_krylov_dim: usize,
    /// Allowed `|‖ψ‖ - 1|` accumulated over one drive period.
    pub norm_drift_per_period: f64,
    /// Compute `⟨X⁻X⁺⟩` and `⟨S⁻S⁺⟩` at each record (one USC diagonalization per record).
    pub emission: bool,
}

impl Default for ClosedRunOptions {
    fn default() -> Self {
        Self {
            displaced: true,
            record_spacing: None,
            krylov_tol: 1e-12,
            max_krylov_dim: 60,
            norm_drift_per_period: 1e-8,
            emission: true,
        }
    }
}

/// Time-dependent Hamiltonian prepared for sparse propagation.
pub struct Propagator {
    terms: SparseTerms,
    ham: TimeDependentHamiltonian,
    pub krylov_tol: f64,
    pub max_krylov_dim: usize,
    pub steps: usize,
    /// Krylov dimension of the previous exponential, used to skip early convergence checks.
    hint: usize,
}

impl Propagator {
    pub fn new(ham: TimeDependentHamiltonian) -> Result<Self> {
        let terms = SparseTerms::new(vec![
            ham.constant.to_csr(),
            ham.matter_number.to_csr(),
            ham.coupling.to_csr(),
        ])?;
        Ok(Self { terms, ham, krylov_tol: 1e-12, max_krylov_dim: 60, steps: 0, hint: 4 })
    }

    pub fn hamiltonian(&self) -> &TimeDependentHamiltonian {
        &self.ham
    }

    fn coeffs(&self, t: f64) -> Result<[f64; 3]> {
        let (f, lam) = self.ham.coefficients(t)?;
        Ok([1.0, f, lam])
    }

    fn try_step(&self, t: f64, h: f64, psi: &mut [C64]) -> Result<usize> {
        let c1 = self.coeffs(t + GAUSS_1 * h)?;
        let c2 = self.coeffs(t + GAUSS_2 * h)?;
        let first: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| ALPHA_2 * a + ALPHA_1 * b).collect();
        let second: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| ALPHA_1 * a + ALPHA_2 * b).collect();
        let start = self.hint.saturating_sub(2).max(4);
        let a = expm_step_from(&self.terms, &first, h, psi, self.krylov_tol, self.max_krylov_dim, start)?;
        let b = expm_step_from(&self.terms, &second, h, psi, self.krylov_tol, self.max_krylov_dim, start)?;
        Ok(a.krylov_dim.max(b.krylov_dim))
    }

    /// Advance `psi` from `t0` to `t1` with steps no longer than `dt_max`.
    pub fn advance(&mut self, t0: f64, t1: f64, dt_max: f64, psi: &mut [C64]) -> Result<()> {
        let mut t = t0;
        while t < t1 {
            let mut h = dt_max.min(t1 - t);
            loop {
                let mut trial = psi.to_vec();
                match self.try_step(t, h, &mut trial) {
                    Ok(m) => {
                        self.hint = m;
                        psi.copy_from_slice(&trial);
                        break;
                    }
                    Err(Error::Convergence(_)) if h > 1e-6 * dt_max => h *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            self.steps += 1;
            t = if t + h >= t1 { t1 } else { t + h };
        }
        Ok(())
    }
}

fn check_initial(initial: &PureState, expected: &crate::hilbert::SpaceLayout) -> Result<()> {
    if initial.layout() != expected {
        return Err(Error::invalid(format!(
            "initial state layout {} does not match {}",
            initial.layout(),
            expected
        )));
    }
    Ok(())
}

fn drift_guard(
    norm_at_period_start: &mut f64,
    period_start: &mut f64,
    t: f64,
    period: f64,
    psi: &[C64],
    bound: f64,
    dt_max: f64,
) -> Result<()> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - *norm_at_period_start).abs() > bound {
        return Err(Error::Accuracy {
            drift: (norm - *norm_at_period_start).abs(),
            bound,
            suggested_dt: 0.5 * dt_max,
        });
    }
    if t - *period_start >= period * (1.0 - 1e-12) {
        *period_start = t;
        *norm_at_period_start = norm;
    }
    Ok(())
}

/// Schrödinger evolution of cavity ⊗ matter ⊗ phonon under `H_R + H_M(t) + H_opt`.
///
/// Records `n_phonon`, `b_mean`, `N_of_t`, `emission_X`, `emission_S`, `usc_energy`
/// and `norm`.
pub fn evolve_closed_full(
    p: &SystemParams,
    t_final: f64,
    dt_max: f64,
    initial: &PureState,
    options: &ClosedRunOptions,
) -> Result<Trajectory> {
    p.validate()?;
    if !(dt_max > 0.0) || !(t_final >= 0.0) {
        return Err(Error::invalid("need dt_max > 0 and t_final >= 0"));
    }
    let layout = p.full_layout()?;
    check_initial(initial, &layout)?;
    let period = p.drive_period()?;
    let spacing = options.record_spacing.unwrap_or(period / 20.0);
    let grid = super::record_grid(t_final, spacing)?;

    let mut prop = Propagator::new(full_hamiltonian_terms(p, options.displaced)?)?;
    prop.krylov_tol = options.krylov_tol;
    prop.max_krylov_dim = options.max_krylov_dim;

    let usc = usc_hamiltonian_terms(p)?;
    let usc_layout = usc.layout().clone();
    let (a_usc, m_usc) = usc_lowering_operators(p, &usc_layout)?;
    let x_usc = a_usc.add(&a_usc.adjoint())?.to_dense();
    let s_usc = m_usc.add(&m_usc.adjoint())?.to_dense();
    let pressure_usc = {
        let ad = a_usc.adjoint();
        ad.mul(&a_usc)?.scale_real(2.0).add(&a_usc.mul(&a_usc)?)?.add(&ad.mul(&ad)?)?.to_dense()
    };
    let nb = layout.dim_of(Label::Phonon).expect("full layout has a phonon mode");
    let nu = usc_layout.total_dim();
    let b_local = crate::hilbert::destroy_on(Label::Phonon, nb)?.to_dense();
    let nb_local = b_local.adjoint() * &b_local;

    let mut traj = Trajectory::new(&[N_PHONON, B_MEAN, N_OF_T, EMISSION_X, EMISSION_S, "usc_energy", "norm"]);
    let mut psi: Vec<C64> = initial.amplitudes().iter().copied().collect();

    let record = |t: f64, psi: &[C64], traj: &mut Trajectory| -> Result<()> {
        // Ψ[u, k]: USC index u, phonon index k (row-major in the layout)
        let big = DMatrix::from_row_slice(nu, nb, psi);
        let rho_b = big.transpose() * big.map(|z| z.conj()); // ρ_b[k,l] = Σ_u Ψ[u,k] Ψ*[u,l]
        let rho_u = &big * big.adjoint(); // ρ_u[u,v] = Σ_k Ψ[u,k] Ψ*[v,k]
        let tr = |op: &DMatrix<C64>, rho: &DMatrix<C64>| -> C64 { (op * rho).trace() };
        let n_ph = tr(&nb_local, &rho_b);
        let b_mean = tr(&b_local, &rho_b);
        let pressure = tr(&pressure_usc, &rho_u);
        let h_usc = usc.at(t)?.to_dense();
        let energy = tr(&h_usc, &rho_u);
        let (ex, es) = if options.emission {
            let (vals, vecs) = eigh_sorted(h_usc)?;
            let (xp, sp) = dressed_operators_from(&vals, &vecs, &x_usc, &s_usc, p.omega_a)?;
            let wx = (&xp * &big).norm_squared();
            let ws = (&sp * &big).norm_squared();
            (wx, ws)
        } else {
            (0.0, 0.0)
        };
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        traj.push(
            t,
            &[n_ph, b_mean, pressure, C64::new(ex, 0.0), C64::new(es, 0.0), energy, C64::new(norm, 0.0)],
        )
    };

    record(0.0, &psi, &mut traj)?;
    let mut period_start = 0.0;
    let mut norm_start = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut t = 0.0;
    for &t_next in grid.iter().skip(1) {
        prop.advance(t, t_next, dt_max, &mut psi)?;
        t = t_next;
        drift_guard(&mut norm_start, &mut period_start, t, period, &psi, options.norm_drift_per_period, dt_max)?;
        record(t, &psi, &mut traj)?;
    }
    log::debug!("closed full run: {} Magnus steps", prop.steps);
    Ok(traj)
}

/// Closed evolution of the cavity–matter subsystem alone.
///
/// Records `N_of_t`, `emission_X`, `emission_S`, `usc_energy`, `ground_overlap`
/// (`|⟨ψ₀(t)|ψ(t)⟩|²`) and `norm`.
pub fn evolve_closed_usc(
    p: &SystemParams,
    t_final: f64,
    dt_max: f64,
    initial: &PureState,
    options: &ClosedRunOptions,
) -> Result<Trajectory> {
    p.validate()?;
    if !(dt_max > 0.0) || !(t_final >= 0.0) {
        return Err(Error::invalid("need dt_max > 0 and t_final >= 0"));
    }
    let usc = usc_hamiltonian_terms(p)?;
    let layout = usc.layout().clone();
    check_initial(initial, &layout)?;
    let period = p.drive_period()?;
    let spacing = options.record_spacing.unwrap_or(period / 20.0);
    let grid = super::record_grid(t_final, spacing)?;
    let (a, m) = usc_lowering_operators(p, &layout)?;
    let x = a.add(&a.adjoint())?.to_dense();
    let s = m.add(&m.adjoint())?.to_dense();
    let ad = a.adjoint();
    let pressure_op = ad.mul(&a)?.scale_real(2.0).add(&a.mul(&a)?)?.add(&ad.mul(&ad)?)?.to_dense();

    let mut prop = Propagator::new(usc.clone())?;
    prop.krylov_tol = options.krylov_tol;
    prop.max_krylov_dim = options.max_krylov_dim;

    let mut traj = Trajectory::new(&[N_OF_T, EMISSION_X, EMISSION_S, "usc_energy", "ground_overlap", "norm"]);
    let mut psi: Vec<C64> = initial.amplitudes().iter().copied().collect();
    let record = |t: f64, psi: &[C64], traj: &mut Trajectory| -> Result<()> {
        let v = DVector::from_column_slice(psi);
        let h = usc.at(t)?.to_dense();
        let energy = v.dotc(&(&h * &v));
        let pressure = v.dotc(&(&pressure_op * &v));
        let (vals, vecs) = eigh_sorted(h)?;
        let (xp, sp) = dressed_operators_from(&vals, &vecs, &x, &s, p.omega_a)?;
        let wx = (&xp * &v).norm_squared();
        let ws = (&sp * &v).norm_squared();
        let ground = vecs.column(0).dotc(&v).norm_sqr();
        traj.push(
            t,
            &[pressure, C64::new(wx, 0.0), C64::new(ws, 0.0), energy, C64::new(ground, 0.0), C64::new(v.norm(), 0.0)],
        )
    };
    record(0.0, &psi, &mut traj)?;
    let mut period_start = 0.0;
    let mut norm_start = 1.0;
    let mut t = 0.0;
    for &t_next in grid.iter().skip(1) {
        prop.advance(t, t_next, dt_max, &mut psi)?;
        t = t_next;
        drift_guard(&mut norm_start, &mut period_start, t, period, &psi, options.norm_drift_per_period, dt_max)?;
        record(t, &psi, &mut traj)?;
    }
    Ok(traj)
}

/// Default Magnus step: the smaller of half the fastest bare period and
/// `25 / ‖H‖`, which keeps each Lanczos exponential under 40 vectors. The
/// modulation is slow, so the Magnus error stays far below the Krylov tolerance.
pub fn default_dt_max(p: &SystemParams) -> Result<f64> {
    let fastest = p.omega_a.max(p.omega_sigma + p.delta_omega.abs()).max(p.omega_b);
    let by_period = std::f64::consts::TAU / fastest / 2.0;
    let ham = full_hamiltonian_terms(p, true)?;
    let terms = SparseTerms::new(vec![ham.constant.to_csr(), ham.matter_number.to_csr(), ham.coupling.to_csr()])?;
    let period = p.drive_period()?;
    let mut norm: f64 = 0.0;
    for j in 0..16 {
        let (f, lam) = ham.coefficients(period * j as f64 / 16.0)?;
        norm = norm.max(terms.norm_bound(&[1.0, f, lam]));
    }
    Ok(if norm > 0.0 { by_period.min(25.0 / norm) } else { by_period })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::PureState;
    use crate::models::Cutoffs;
    use crate::vacuum::ground_state_at;

    fn small() -> SystemParams {
        SystemParams {
            omega_a: 20.0,
            omega_sigma: 20.0,
            omega_b: 1.0,
            omega_d: 1.0,
            lambda0: 10.0,
            g: 0.01,
            delta_omega: 0.0,
            cutoffs: Cutoffs { cavity: 8, matter: 4, phonon: 4 },
            ..SystemParams::default()
        }
    }

    #[test]
    fn eigenstate_of_static_usc_is_stationary() {
        let p = small();
        let gs = ground_state_at(&p, 0.0).unwrap();
        let opts = ClosedRunOptions { record_spacing: Some(0.5), ..Default::default() };
        let tr = evolve_closed_usc(&p, 3.0 * p.drive_period().unwrap(), 0.02, &gs.state, &opts).unwrap();
        let n = tr.real(N_OF_T).unwrap();
        let ov = tr.real("ground_overlap").unwrap();
        assert!(n.iter().all(|v| (v - n[0]).abs() < 1e-9));
        assert!(ov.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let norm = tr.real("norm").unwrap();
        assert!(norm.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn wrong_layout_rejected() {
        let p = small();
        let bad = PureState::fock(p.usc_layout().unwrap(), &[0, 0]).unwrap();
        assert!(evolve_closed_full(&p, 1.0, 0.01, &bad, &ClosedRunOptions::default()).is_err());
    }
}
