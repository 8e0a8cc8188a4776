//! Master equation of the mirror mode.
//!
//! ```text
//! dρ/dt = -i[H_b(t), ρ] + (1 + n_th)γ_b D[b]ρ + n_th γ_b D[b†]ρ + γ_D D[b†b]ρ
//! H_b(t) = ω_b b†b + (g/2) N(t) (b + b†)
//! ```
//!
//! Integration happens in the interaction picture with respect to `ω_b b†b`,
//! where the dissipators are unchanged and the drive becomes
//! `(g/2) N(t) (b e^{-iω_b t} + b† e^{iω_b t})`. All operators act through
//! index formulas on the truncated Fock basis; `b b†` is the product of the
//! truncated matrices so the generator is exactly trace preserving.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Trajectory, B_MEAN, N_OF_T, N_PHONON};
use crate::error::{Error, Result};
use crate::hilbert::{eigh_sorted, DensityMatrix, Label, Tolerances};
use crate::models::{DissipationParams, SystemParams};
use crate::ode::Dopri5;
use crate::vacuum::FourierSpectrum;

/// Generator of the phonon master equation on an `n × n` truncation.
#[derive(Clone, Debug)]
pub struct PhononLiouvillian {
    pub n: usize,
    pub omega_b: f64,
    pub g: f64,
    pub gamma_b: f64,
    pub gamma_d: f64,
    pub n_th: f64,
    pressure: FourierSpectrum,
    sqrt: Vec<f64>,
    /// Diagonal of the truncated `b b†`.
    bbd: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub leak_bound: f64,
}

impl PhononLiouvillian {
    pub fn new(p: &SystemParams, spectrum: &FourierSpectrum, d: &DissipationParams) -> Result<Self> {
        p.validate()?;
        d.validate()?;
        let n = p.cutoffs.phonon;
        if n < 2 {
            return Err(Error::invalid("phonon cutoff must be >= 2"));
        }
        let sqrt = (0..=n).map(|k| (k as f64).sqrt()).collect();
        let bbd = (0..n).map(|m| if m + 1 < n { (m + 1) as f64 } else { 0.0 }).collect();
        Ok(Self {
            n,
            omega_b: p.omega_b,
            g: p.g,
            gamma_b: d.gamma_b,
            gamma_d: d.gamma_d,
            n_th: d.n_th,
            pressure: spectrum.with_omega_d(p.omega_d),
            sqrt,
            bbd,
            rtol: 1e-10,
            atol: 1e-13,
            leak_bound: Tolerances::DEFAULT.cutoff_leak,
        })
    }

    pub fn pressure(&self) -> &FourierSpectrum {
        &self.pressure
    }

    /// `dρ̃/dt` in the interaction picture, `ρ̃` row-major.
    pub fn rhs(&self, t: f64, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        let s = &self.sqrt;
        let amp = 0.5 * self.g * self.pressure.evaluate(t);
        // H_I = c b + c* b†
        let c = C64::from_polar(amp, -self.omega_b * t);
        let cc = c.conj();
        let i = C64::new(0.0, 1.0);
        let down = (1.0 + self.n_th) * self.gamma_b;
        let up = self.n_th * self.gamma_b;
        let deph = self.gamma_d;
        for m in 0..n {
            for k in 0..n {
                let idx = m * n + k;
                let r = rho[idx];
                // [b, ρ]_{mk} = √(m+1) ρ_{m+1,k} - √k ρ_{m,k-1}
                let mut b_rho = C64::new(0.0, 0.0);
                if m + 1 < n {
                    b_rho += s[m + 1] * rho[idx + n];
                }
                if k > 0 {
                    b_rho -= s[k] * rho[idx - 1];
                }
                // [b†, ρ]_{mk} = √m ρ_{m-1,k} - √(k+1) ρ_{m,k+1}
                let mut bd_rho = C64::new(0.0, 0.0);
                if m > 0 {
                    bd_rho += s[m] * rho[idx - n];
                }
                if k + 1 < n {
                    bd_rho -= s[k + 1] * rho[idx + 1];
                }
                let mut acc = -i * (c * b_rho + cc * bd_rho);
                // D[b]: √((m+1)(k+1)) ρ_{m+1,k+1} - (m + k)/2 ρ
                if m + 1 < n && k + 1 < n {
                    acc += down * s[m + 1] * s[k + 1] * rho[idx + n + 1];
                }
                acc -= 0.5 * down * (m + k) as f64 * r;
                // D[b†]: √(mk) ρ_{m-1,k-1} - (bb†_m + bb†_k)/2 ρ
                if m > 0 && k > 0 {
                    acc += up * s[m] * s[k] * rho[idx - n - 1];
                }
                acc -= 0.5 * up * (self.bbd[m] + self.bbd[k]) * r;
                // D[b†b]: -(m - k)²/2 ρ
                let dm = m as f64 - k as f64;
                acc -= 0.5 * deph * dm * dm * r;
                out[idx] = acc;
            }
        }
    }

    /// Drive amplitude `c(t)` in the interaction-picture Hamiltonian `c b + c* b†`.
    pub fn drive_amplitude(&self, t: f64) -> C64 {
        C64::from_polar(0.5 * self.g * self.pressure.evaluate(t), -self.omega_b * t)
    }

    /// Entries `(row, col, value)` of the time-independent generator with
    /// `H = h_n b†b + c b + c* b†` and this model's dissipators, acting on
    /// row-major vectorized `ρ`. Bandwidth is `n + 1` on both sides.
    pub fn static_generator_entries(&self, h_n: f64, c: C64) -> Vec<(usize, usize, C64)> {
        let n = self.n;
        let s = &self.sqrt;
        let i = C64::new(0.0, 1.0);
        let cc = c.conj();
        let down = (1.0 + self.n_th) * self.gamma_b;
        let up = self.n_th * self.gamma_b;
        let mut out = Vec::with_capacity(7 * n * n);
        for m in 0..n {
            for k in 0..n {
                let idx = m * n + k;
                if m + 1 < n {
                    out.push((idx, idx + n, -i * c * s[m + 1]));
                }
                if k > 0 {
                    out.push((idx, idx - 1, i * c * s[k]));
                }
                if m > 0 {
                    out.push((idx, idx - n, -i * cc * s[m]));
                }
                if k + 1 < n {
                    out.push((idx, idx + 1, i * cc * s[k + 1]));
                }
                if m + 1 < n && k + 1 < n {
                    out.push((idx, idx + n + 1, C64::new(down * s[m + 1] * s[k + 1], 0.0)));
                }
                if m > 0 && k > 0 {
                    out.push((idx, idx - n - 1, C64::new(up * s[m] * s[k], 0.0)));
                }
                let dm = m as f64 - k as f64;
                let diag = -0.5 * down * (m + k) as f64
                    - 0.5 * up * (self.bbd[m] + self.bbd[k])
                    - 0.5 * self.gamma_d * dm * dm;
                out.push((idx, idx, C64::new(diag, -h_n * dm)));
            }
        }
        out
    }

    fn integrator(&self) -> Dopri5 {
        let fastest = self.omega_b + self.pressure.omega_d * self.pressure.k_max as f64;
        let h_max = if fastest > 0.0 { std::f64::consts::TAU / fastest / 10.0 } else { f64::INFINITY };
        Dopri5::new(self.rtol, self.atol).with_max_step(h_max)
    }

    /// Propagate an interaction-picture state from `t0` to `t1`.
    pub fn propagate(&self, rho: &mut [C64], t0: f64, t1: f64) -> Result<()> {
        self.integrator().integrate(|t, y, dy| self.rhs(t, y, dy), t0, t1, rho)
    }

    /// `(ρ_lab)_{mk} = e^{-iω_b (m-k) t} ρ̃_{mk}`; `sign = -1` undoes it.
    pub fn rotate(&self, rho: &mut [C64], t: f64, sign: f64) {
        let n = self.n;
        for m in 0..n {
            for k in 0..n {
                let phase = -sign * self.omega_b * (m as f64 - k as f64) * t;
                rho[m * n + k] *= C64::from_polar(1.0, phase);
            }
        }
    }

    pub fn trace(&self, rho: &[C64]) -> C64 {
        (0..self.n).map(|m| rho[m * (self.n + 1)]).sum()
    }

    /// `⟨b⟩ = Σ √(m+1) ρ_{m+1,m}` in whichever frame `ρ` is given.
    pub fn b_mean(&self, rho: &[C64]) -> C64 {
        (0..self.n - 1).map(|m| self.sqrt[m + 1] * rho[(m + 1) * self.n + m]).sum()
    }

    pub fn n_mean(&self, rho: &[C64]) -> f64 {
        (0..self.n).map(|m| m as f64 * rho[m * (self.n + 1)].re).sum()
    }

    pub fn top_population(&self, rho: &[C64]) -> f64 {
        rho[self.n * self.n - 1].re.abs()
    }

    pub fn check_leak(&self, rho: &[C64], t: f64) -> Result<()> {
        let top = self.top_population(rho);
        if top > self.leak_bound || !top.is_finite() {
            return Err(Error::CutoffLeak { cutoff: self.n, population: top, t });
        }
        Ok(())
    }

    pub fn to_matrix(&self, rho: &[C64]) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.n, self.n, rho)
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Vec<C64> {
        let n = m.nrows();
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                out.push(m[(r, c)]);
            }
        }
        out
    }

    /// One drive period of the lab-frame stroboscopic map starting at `t = 0`.
    pub fn one_period(&self, rho_lab: &mut [C64], period: f64) -> Result<()> {
        self.propagate(rho_lab, 0.0, period)?;
        self.rotate(rho_lab, period, 1.0);
        Ok(())
    }
}

/// Integrate the master equation from a lab-frame initial state at `t = 0`.
///
/// Records `n_phonon`, `b_mean`, `N_of_t`, `trace`, `min_eigenvalue` and
/// `top_population` on a grid of spacing `period / 20`.
pub fn evolve_lindblad(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    t_final: f64,
    initial: &DensityMatrix,
) -> Result<Trajectory> {
    let grid = super::record_grid(t_final, p.drive_period()? / 20.0)?;
    evolve_lindblad_on(p, spectrum, d, &grid, initial)
}

pub fn evolve_lindblad_on(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    grid: &[f64],
    initial: &DensityMatrix,
) -> Result<Trajectory> {
    let subs = initial.layout().subsystems();
    if subs.len() != 1 || subs[0].0 != Label::Phonon {
        return Err(Error::invalid("master equation needs a phonon-only layout"));
    }
    let mut p = p.clone();
    p.cutoffs.phonon = subs[0].1;
    if grid.first() != Some(&0.0) {
        return Err(Error::invalid("record grid must start at t = 0"));
    }
    let liou = PhononLiouvillian::new(&p, spectrum, d)?;
    let mut ode = liou.integrator();
    let mut rho = PhononLiouvillian::from_matrix(initial.matrix());
    let mut traj =
        Trajectory::new(&[N_PHONON, B_MEAN, N_OF_T, "trace", "min_eigenvalue", "top_population"]);
    let mut t = 0.0;
    for &t_next in grid {
        ode.integrate(|tt, y, dy| liou.rhs(tt, y, dy), t, t_next, &mut rho)?;
        t = t_next;
        liou.check_leak(&rho, t)?;
        let mut lab = rho.clone();
        liou.rotate(&mut lab, t, 1.0);
        let m = liou.to_matrix(&lab);
        let min_eig = eigh_sorted((&m + m.adjoint()) * C64::new(0.5, 0.0))?.0[0];
        traj.push(
            t,
            &[
                C64::new(liou.n_mean(&lab), 0.0),
                liou.b_mean(&lab),
                C64::new(liou.pressure.evaluate(t), 0.0),
                liou.trace(&lab),
                C64::new(min_eig, 0.0),
                C64::new(liou.top_population(&lab), 0.0),
            ],
        )?;
    }
    Ok(traj)
}

/// Final lab-frame state of a master-equation run.
pub fn lindblad_final_state(
    p: &SystemParams,
    spectrum: &FourierSpectrum,
    d: &DissipationParams,
    t_final: f64,
    initial: &DensityMatrix,
) -> Result<DensityMatrix> {
    let mut p = p.clone();
    p.cutoffs.phonon = initial.layout().total_dim();
    let liou = PhononLiouvillian::new(&p, spectrum, d)?;
    let mut rho = PhononLiouvillian::from_matrix(initial.matrix());
    liou.propagate(&mut rho, 0.0, t_final)?;
    liou.check_leak(&rho, t_final)?;
    liou.rotate(&mut rho, t_final, 1.0);
    Ok(DensityMatrix::from_raw(initial.layout().clone(), liou.to_matrix(&rho)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::moments::{evolve_effective_moments_on, MomentState};
    use crate::hilbert::{destroy, SpaceLayout};
    use crate::models::Cutoffs;

    fn params(cutoff: usize, g: f64) -> SystemParams {
        SystemParams { g, cutoffs: Cutoffs { phonon: cutoff, ..Cutoffs::default() }, ..SystemParams::default() }
    }

    fn drive() -> FourierSpectrum {
        let mut s = FourierSpectrum::zero(1.0, 2);
        s.coefficients[2] = C64::new(0.3, 0.0);
        s.coefficients[3] = C64::new(-0.05, 0.01);
        s.coefficients[1] = s.coefficients[3].conj();
        s.coefficients[4] = C64::new(0.004, 0.0);
        s.coefficients[0] = C64::new(0.004, 0.0);
        s
    }

    /// Dense `L[ρ]` built from explicit operator products.
    fn dense_rhs(p: &SystemParams, d: &DissipationParams, s: &FourierSpectrum, t: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = p.cutoffs.phonon;
        let b = destroy(n).unwrap().to_dense();
        let bd = b.adjoint();
        let num = &bd * &b;
        let h = &num * C64::new(p.omega_b, 0.0) + (&b + &bd) * C64::new(0.5 * p.g * s.evaluate(t), 0.0);
        let diss = |o: &DMatrix<C64>, r: &DMatrix<C64>| {
            let od = o.adjoint();
            o * r * &od - (&od * o * r + r * &od * o) * C64::new(0.5, 0.0)
        };
        let i = C64::new(0.0, 1.0);
        -(&h * rho - rho * &h) * i
            + diss(&b, rho) * C64::new((1.0 + d.n_th) * d.gamma_b, 0.0)
            + diss(&bd, rho) * C64::new(d.n_th * d.gamma_b, 0.0)
            + diss(&num, rho) * C64::new(d.gamma_d, 0.0)
    }

    #[test]
    fn index_formulas_match_operator_products() {
        let p = params(7, 0.3);
        let d = DissipationParams { gamma_b: 0.2, gamma_d: 0.07, n_th: 1.3, ..Default::default() };
        let s = drive();
        let liou = PhononLiouvillian::new(&p, &s, &d).unwrap();
        let t = 0.37;
        let rho = DMatrix::from_fn(7, 7, |r, c| C64::new((r + 2 * c) as f64 * 0.01, (r as f64 - c as f64) * 0.02));
        // lab-frame generator = rotation of the interaction-picture one plus -i[ω_b b†b, ρ]
        let mut tilde = PhononLiouvillian::from_matrix(&rho);
        liou.rotate(&mut tilde, t, -1.0);
        let mut out = vec![C64::new(0.0, 0.0); 49];
        liou.rhs(t, &tilde, &mut out);
        liou.rotate(&mut out, t, 1.0);
        let mut lab = liou.to_matrix(&out);
        for m in 0..7 {
            for k in 0..7 {
                lab[(m, k)] += C64::new(0.0, -p.omega_b * (m as f64 - k as f64)) * rho[(m, k)];
            }
        }
        let expected = dense_rhs(&p, &d, &s, t, &rho);
        assert!((lab - expected).norm() < 1e-12);
    }

    #[test]
    fn static_entries_reproduce_rhs() {
        let p = params(6, 0.4);
        let d = DissipationParams { gamma_b: 0.3, gamma_d: 0.1, n_th: 0.7, ..Default::default() };
        let liou = PhononLiouvillian::new(&p, &drive(), &d).unwrap();
        let t = 1.1;
        let rho: Vec<C64> = (0..36).map(|j| C64::new((j as f64).sin(), (j as f64 * 0.3).cos())).collect();
        let mut expected = vec![C64::new(0.0, 0.0); 36];
        liou.rhs(t, &rho, &mut expected);
        let mut got = vec![C64::new(0.0, 0.0); 36];
        for (r, c, v) in liou.static_generator_entries(0.0, liou.drive_amplitude(t)) {
            got[r] += v * rho[c];
        }
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn thermal_state_is_stationary_without_drive() {
        let p = params(40, 0.0);
        let d = DissipationParams { gamma_b: 0.1, gamma_d: 0.05, n_th: 1.5, ..Default::default() };
        let layout = SpaceLayout::single(Label::Phonon, 40).unwrap();
        // the truncated thermal state is exactly stationary under the truncated generator
        let rho0 = DensityMatrix::thermal(layout, 1.5).unwrap();
        let tr = evolve_lindblad(&p, &FourierSpectrum::zero(1.0, 2), &d, 20.0, &rho0).unwrap();
        let n = tr.real(N_PHONON).unwrap();
        assert!(n.iter().all(|v| (v - n[0]).abs() < 1e-8));
    }

    #[test]
    fn matches_moment_equations() {
        let p = params(40, 0.5);
        let d = DissipationParams { gamma_b: 0.05, gamma_d: 0.02, n_th: 1.0, ..Default::default() };
        let s = drive();
        let layout = SpaceLayout::single(Label::Phonon, 40).unwrap();
        let rho0 = DensityMatrix::thermal(layout, 1.0).unwrap();
        let grid = crate::dynamics::record_grid(15.0, 0.5).unwrap();
        let me = evolve_lindblad_on(&p, &s, &d, &grid, &rho0).unwrap();
        let init_n = rho0.populations().iter().enumerate().map(|(k, w)| k as f64 * w).sum();
        let mo = evolve_effective_moments_on(&p, &s, &d, &grid, MomentState::thermal(init_n)).unwrap();
        for (a, b) in me.get(B_MEAN).unwrap().iter().zip(mo.get(B_MEAN).unwrap()) {
            assert!((a - b).norm() < 1e-6);
        }
        for (a, b) in me.real(N_PHONON).unwrap().iter().zip(mo.real(N_PHONON).unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
        for v in me.get("trace").unwrap() {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-8);
        }
        assert!(me.real("min_eigenvalue").unwrap().iter().all(|&v| v > -1e-8));
    }

    #[test]
    fn leak_is_reported() {
        let p = params(6, 2.0);
        let d = DissipationParams { gamma_b: 0.01, ..Default::default() };
        let layout = SpaceLayout::single(Label::Phonon, 6).unwrap();
        let rho0 = DensityMatrix::thermal(layout, 0.0).unwrap();
        let err = evolve_lindblad(&p, &drive(), &d, 30.0, &rho0).unwrap_err();
        assert!(matches!(err, Error::CutoffLeak { .. }));
    }
}
