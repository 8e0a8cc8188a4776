//! Positive-frequency dressed operators of the cavity–matter system.
//!
//! With `|j⟩` the instantaneous eigenstates ordered by energy,
//! `X⁺ = Σ_{j<k} ⟨j|a + a†|k⟩ |j⟩⟨k|` and `S⁺` likewise with the matter
//! quadrature `m + m†`. Both annihilate the instantaneous ground state, so
//! `⟨X⁻X⁺⟩ = ‖X⁺ψ‖²` measures real, emittable excitations.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Trajectory, EMISSION_S, EMISSION_X};
use crate::error::{Error, Result};
use crate::hilbert::{eigh_sorted, DensityMatrix, Operator, PureState};
use crate::models::{usc_hamiltonian_terms, usc_lowering_operators, DissipationParams, SystemParams};
use crate::ode::Dopri5;

/// Relative energy separation below which two levels count as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;
/// Matrix elements below this do not make a degenerate pair ambiguous.
const NEGLIGIBLE_ELEMENT: f64 = 1e-10;

fn positive_part(
    vals: &[f64],
    vecs: &DMatrix<C64>,
    op: &DMatrix<C64>,
    scale: f64,
) -> Result<DMatrix<C64>> {
    let n = vals.len();
    let mut m = vecs.adjoint() * op * vecs;
    for j in 0..n {
        for k in 0..n {
            if k <= j {
                if k < j && (vals[j] - vals[k]).abs() < DEGENERACY_TOLERANCE * scale && m[(j, k)].norm() > NEGLIGIBLE_ELEMENT {
                    return Err(Error::Ordering { separation: (vals[j] - vals[k]).abs() });
                }
                m[(j, k)] = C64::new(0.0, 0.0);
            }
        }
    }
    Ok(vecs * m * vecs.adjoint())
}

/// `(X⁺, S⁺)` as dense matrices from an ascending eigendecomposition.
pub(crate) fn dressed_operators_from(
    vals: &[f64],
    vecs: &DMatrix<C64>,
    x: &DMatrix<C64>,
    s: &DMatrix<C64>,
    energy_scale: f64,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let scale = energy_scale.abs().max(f64::MIN_POSITIVE);
    Ok((positive_part(vals, vecs, x, scale)?, positive_part(vals, vecs, s, scale)?))
}

/// `X⁺(t)` and `S⁺(t)` on the cavity–matter layout.
pub fn dressed_positive_operators(p: &SystemParams, t: f64) -> Result<(Operator, Operator)> {
    let terms = usc_hamiltonian_terms(p)?;
    let layout = terms.layout().clone();
    let (a, m) = usc_lowering_operators(p, &layout)?;
    let x = a.add(&a.adjoint())?.to_dense();
    let s = m.add(&m.adjoint())?.to_dense();
    let (vals, vecs) = eigh_sorted(terms.at(t)?.to_dense())?;
    let (xp, sp) = dressed_operators_from(&vals, &vecs, &x, &s, p.omega_a)?;
    Ok((Operator::from_dense(layout.clone(), xp)?, Operator::from_dense(layout, sp)?))
}

/// `⟨ψ|O⁻O⁺|ψ⟩ = ‖O⁺ψ‖²`.
pub fn emission_weight(positive: &Operator, state: &PureState) -> Result<f64> {
    if positive.layout() != state.layout() {
        return Err(Error::invalid("operator and state layouts differ"));
    }
    Ok(positive.apply(state.amplitudes())?.norm_squared())
}

/// Cavity–matter master equation with dressed dissipators
/// `γ_a D[X⁺] + γ_σ D[S⁺]`, for robustness checks of the adiabatic picture.
///
/// The dressed operators are rediagonalized at every right-hand-side call, so
/// this is only meant for small truncations. Records `emission_X`,
/// `emission_S`, `usc_energy`, `ground_population` and `trace`.
pub fn evolve_usc_dressed_lindblad(
    p: &SystemParams,
    d: &DissipationParams,
    t_final: f64,
    initial: &DensityMatrix,
) -> Result<Trajectory> {
    d.validate()?;
    let terms = usc_hamiltonian_terms(p)?;
    let layout = terms.layout().clone();
    if initial.layout() != &layout {
        return Err(Error::invalid("initial state must live on the cavity–matter layout"));
    }
    let n = layout.total_dim();
    let (a, m) = usc_lowering_operators(p, &layout)?;
    let x = a.add(&a.adjoint())?.to_dense();
    let s = m.add(&m.adjoint())?.to_dense();
    let i = C64::new(0.0, 1.0);
    let generator = |t: f64, rho: &DMatrix<C64>| -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
        let h = terms.at(t)?.to_dense();
        let (vals, vecs) = eigh_sorted(h.clone())?;
        let (xp, sp) = dressed_operators_from(&vals, &vecs, &x, &s, p.omega_a)?;
        let mut out = -(&h * rho - rho * &h) * i;
        for (rate, o) in [(d.gamma_a, &xp), (d.gamma_sigma, &sp)] {
            if rate > 0.0 {
                let od = o.adjoint();
                let odo = &od * o;
                out += (o * rho * &od - (&odo * rho + rho * &odo) * C64::new(0.5, 0.0)) * C64::new(rate, 0.0);
            }
        }
        Ok((out, h, xp, sp))
    };
    let mut failure: Option<Error> = None;
    let mut ode = Dopri5::new(1e-9, 1e-12).with_max_step(std::f64::consts::TAU / p.omega_a.max(1e-300) / 10.0);
    let mut y: Vec<C64> = initial.matrix().transpose().iter().copied().collect();
    let grid = super::record_grid(t_final, p.drive_period()? / 20.0)?;
    let mut traj = Trajectory::new(&[EMISSION_X, EMISSION_S, "usc_energy", "ground_population", "trace"]);
    let mut t = 0.0;
    for &t_next in &grid {
        ode.integrate(
            |tt, yy, dy| {
                let rho = DMatrix::from_row_slice(n, n, yy);
                match generator(tt, &rho) {
                    Ok((out, ..)) => {
                        for r in 0..n {
                            for c in 0..n {
                                dy[r * n + c] = out[(r, c)];
                            }
                        }
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        dy.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                    }
                }
            },
            t,
            t_next,
            &mut y,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        t = t_next;
        let rho = DMatrix::from_row_slice(n, n, &y);
        let (_, h, xp, sp) = generator(t, &rho)?;
        let (_, vecs) = eigh_sorted(h.clone())?;
        let g0 = vecs.column(0);
        let ground = (g0.adjoint() * &rho * g0)[(0, 0)];
        let wx = (xp.adjoint() * &xp * &rho).trace();
        let ws = (sp.adjoint() * &sp * &rho).trace();
        traj.push(t, &[wx, ws, (&h * &rho).trace(), ground, rho.trace()])?;
    }
    Ok(traj)
}
