//! Parameter records and Hamiltonian builders.
//!
//! Frequencies are angular and unit-agnostic: any consistent inverse-time unit
//! works, and every builder is invariant under a common rescaling.
//!
//! The cavity–matter ("USC") Hamiltonian is
//!
//! ```text
//! H(t) = ω_a a†a + [ω_σ + Ω(t)] m†m + λ(t) [(a m† + a† m) + ξ (a m + a† m†)] + χ m†m†mm
//! ```
//!
//! with `m = σ₋` for a qubit and a truncated boson otherwise. The Kerr term is
//! only present for [`MatterKind::KerrBoson`].

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{destroy_on, embed, pauli_lowering, Label, Operator, SpaceLayout};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatterKind {
    Qubit,
    Boson,
    KerrBoson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationShape {
    /// `Ω(t) = Δ_ω [1 + cos(ω_d t)] / 2`
    RaisedCosine,
    /// `Ω(t) = Δ_ω sin(ω_d t)`
    Sine,
}

/// Fock truncations. The matter cutoff is ignored for a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cutoffs {
    pub cavity: usize,
    pub matter: usize,
    pub phonon: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self { cavity: 15, matter: 10, phonon: 30 }
    }
}

impl Cutoffs {
    pub fn doubled(&self) -> Self {
        Self { cavity: 2 * self.cavity, matter: 2 * self.matter, phonon: 2 * self.phonon }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub omega_a: f64,
    pub omega_sigma: f64,
    pub omega_b: f64,
    pub omega_d: f64,
    /// Coupling `λ`, or `λ₀` when the coupling follows the modulation.
    pub lambda0: f64,
    pub g: f64,
    pub delta_omega: f64,
    pub chi: f64,
    pub xi: f64,
    pub matter_kind: MatterKind,
    pub modulation_shape: ModulationShape,
    pub time_dependent_lambda: bool,
    pub cutoffs: Cutoffs,
}

impl Default for SystemParams {
    /// Desk-scale Rabi setup in units of `ω_b`: `ω_a = ω_σ = 400`, `λ = 0.5 ω_a`,
    /// `Δ_ω = ω_a`, resonant drive.
    fn default() -> Self {
        Self {
            omega_a: 400.0,
            omega_sigma: 400.0,
            omega_b: 1.0,
            omega_d: 1.0,
            lambda0: 200.0,
            g: 2e-3,
            delta_omega: 400.0,
            chi: 0.0,
            xi: 1.0,
            matter_kind: MatterKind::Qubit,
            modulation_shape: ModulationShape::RaisedCosine,
            time_dependent_lambda: false,
            cutoffs: Cutoffs::default(),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let freqs = [
            ("omega_a", self.omega_a),
            ("omega_sigma", self.omega_sigma),
            ("omega_b", self.omega_b),
            ("omega_d", self.omega_d),
            ("lambda0", self.lambda0),
            ("g", self.g),
            ("delta_omega", self.delta_omega),
        ];
        for (name, v) in freqs {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !self.chi.is_finite() {
            return Err(Error::invalid("chi must be finite"));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::invalid(format!("xi = {} outside [0, 1]", self.xi)));
        }
        if self.chi != 0.0 && self.matter_kind != MatterKind::KerrBoson {
            return Err(Error::invalid("chi must be 0 unless matter_kind = kerr_boson"));
        }
        if self.time_dependent_lambda {
            if self.modulation_shape != ModulationShape::Sine {
                return Err(Error::invalid("time_dependent_lambda requires modulation_shape = sine"));
            }
            if self.matter_kind == MatterKind::Qubit {
                return Err(Error::invalid("time_dependent_lambda requires a bosonic matter mode"));
            }
            if self.omega_sigma <= 0.0 {
                return Err(Error::invalid("time_dependent_lambda requires omega_sigma > 0"));
            }
        }
        let c = &self.cutoffs;
        if c.cavity < 2 || c.phonon < 2 || (self.matter_kind != MatterKind::Qubit && c.matter < 2) {
            return Err(Error::invalid("every cutoff must be >= 2"));
        }
        Ok(())
    }

    pub fn matter_dim(&self) -> usize {
        match self.matter_kind {
            MatterKind::Qubit => 2,
            _ => self.cutoffs.matter,
        }
    }

    /// Cavity ⊗ matter.
    pub fn usc_layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::new(&[(Label::Cavity, self.cutoffs.cavity), (Label::Matter, self.matter_dim())])
    }

    /// Cavity ⊗ matter ⊗ phonon.
    pub fn full_layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::new(&[
            (Label::Cavity, self.cutoffs.cavity),
            (Label::Matter, self.matter_dim()),
            (Label::Phonon, self.cutoffs.phonon),
        ])
    }

    pub fn phonon_layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::single(Label::Phonon, self.cutoffs.phonon)
    }

    pub fn drive_period(&self) -> Result<f64> {
        if self.omega_d <= 0.0 {
            return Err(Error::invalid("omega_d must be > 0 for a periodic drive"));
        }
        Ok(std::f64::consts::TAU / self.omega_d)
    }

    /// Modulation `Ω(t)` added to the bare matter frequency.
    pub fn modulation(&self, t: f64) -> f64 {
        match self.modulation_shape {
            ModulationShape::RaisedCosine => 0.5 * self.delta_omega * (1.0 + (self.omega_d * t).cos()),
            ModulationShape::Sine => self.delta_omega * (self.omega_d * t).sin(),
        }
    }

    pub fn matter_frequency(&self, t: f64) -> f64 {
        self.omega_sigma + self.modulation(t)
    }

    /// `λ(t)`; constant unless the coupling follows the modulated matter frequency.
    pub fn coupling(&self, t: f64) -> Result<f64> {
        if !self.time_dependent_lambda {
            return Ok(self.lambda0);
        }
        let arg = 1.0 + self.delta_omega * (self.omega_d * t).sin() / self.omega_sigma;
        if arg < 0.0 {
            return Err(Error::invalid(format!(
                "modulation too deep: 1 + Δ_ω sin(ω_d t)/ω_σ = {arg} < 0 at t = {t}"
            )));
        }
        Ok(self.lambda0 * arg.sqrt())
    }

    /// Multiply every frequency-valued field by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            omega_a: self.omega_a * factor,
            omega_sigma: self.omega_sigma * factor,
            omega_b: self.omega_b * factor,
            omega_d: self.omega_d * factor,
            lambda0: self.lambda0 * factor,
            g: self.g * factor,
            delta_omega: self.delta_omega * factor,
            chi: self.chi * factor,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipationParams {
    pub gamma_b: f64,
    pub gamma_d: f64,
    pub n_th: f64,
    pub gamma_a: f64,
    pub gamma_sigma: f64,
}

impl Default for DissipationParams {
    fn default() -> Self {
        Self { gamma_b: 0.0, gamma_d: 0.0, n_th: 0.0, gamma_a: 0.0, gamma_sigma: 0.0 }
    }
}

impl DissipationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_b", self.gamma_b),
            ("gamma_d", self.gamma_d),
            ("n_th", self.n_th),
            ("gamma_a", self.gamma_a),
            ("gamma_sigma", self.gamma_sigma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Total decay rate of the coherence `⟨b⟩`, `γ_b + γ_D`.
    pub fn coherence_rate(&self) -> f64 {
        self.gamma_b + self.gamma_d
    }

    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            gamma_b: self.gamma_b * factor,
            gamma_d: self.gamma_d * factor,
            gamma_a: self.gamma_a * factor,
            gamma_sigma: self.gamma_sigma * factor,
            n_th: self.n_th,
        }
    }
}

/// Lumped-circuit description of a capacitively coupled resonator and transmon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub c_a: f64,
    pub c_sigma: f64,
    pub c_c: f64,
    pub omega_a: f64,
    pub omega_sigma: f64,
}

/// Time-dependent Hamiltonian split as `C + f(t) M + λ(t) V`.
///
/// `M` is the matter number operator with coefficient `ω_σ + Ω(t)` and `V` the
/// light–matter coupling (rotating plus `ξ`-weighted counter-rotating part).
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    params: SystemParams,
    pub constant: Operator,
    pub matter_number: Operator,
    pub coupling: Operator,
}

impl TimeDependentHamiltonian {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.constant.layout()
    }

    /// `(ω_σ + Ω(t), λ(t))`.
    pub fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.params.matter_frequency(t), self.params.coupling(t)?))
    }

    pub fn at(&self, t: f64) -> Result<Operator> {
        let (f, lam) = self.coefficients(t)?;
        self.constant
            .add(&self.matter_number.scale_real(f))?
            .add(&self.coupling.scale_real(lam))
    }
}

/// Matter lowering operator on its own single-mode layout.
fn matter_lowering(p: &SystemParams) -> Result<Operator> {
    match p.matter_kind {
        MatterKind::Qubit => Ok(pauli_lowering()),
        _ => destroy_on(Label::Matter, p.cutoffs.matter),
    }
}

/// Cavity and matter lowering operators embedded in `layout`.
pub fn usc_lowering_operators(p: &SystemParams, layout: &SpaceLayout) -> Result<(Operator, Operator)> {
    let a = embed(&destroy_on(Label::Cavity, p.cutoffs.cavity)?, layout, Label::Cavity)?;
    let m = embed(&matter_lowering(p)?, layout, Label::Matter)?;
    Ok((a, m))
}

/// Phonon lowering operator embedded in `layout`.
pub fn phonon_lowering(p: &SystemParams, layout: &SpaceLayout) -> Result<Operator> {
    embed(&destroy_on(Label::Phonon, p.cutoffs.phonon)?, layout, Label::Phonon)
}

fn usc_terms_on(p: &SystemParams, layout: &SpaceLayout) -> Result<TimeDependentHamiltonian> {
    p.validate()?;
    let (a, m) = usc_lowering_operators(p, layout)?;
    let ad = a.adjoint();
    let md = m.adjoint();
    let mut constant = ad.mul(&a)?.scale_real(p.omega_a);
    if p.matter_kind == MatterKind::KerrBoson && p.chi != 0.0 {
        let kerr = md.mul(&md)?.mul(&m)?.mul(&m)?;
        constant = constant.add(&kerr.scale_real(p.chi))?;
    }
    let matter_number = md.mul(&m)?;
    let rotating = a.mul(&md)?.add(&ad.mul(&m)?)?;
    let counter = a.mul(&m)?.add(&ad.mul(&md)?)?;
    let coupling = rotating.add(&counter.scale_real(p.xi))?;
    Ok(TimeDependentHamiltonian { params: p.clone(), constant, matter_number, coupling })
}

/// The cavity–matter Hamiltonian in its time-dependent decomposition.
pub fn usc_hamiltonian_terms(p: &SystemParams) -> Result<TimeDependentHamiltonian> {
    usc_terms_on(p, &p.usc_layout()?)
}

/// `H_R + H_M(t)` on cavity ⊗ matter.
pub fn build_usc_hamiltonian(p: &SystemParams, t: f64) -> Result<Operator> {
    usc_hamiltonian_terms(p)?.at(t)?.assert_hermitian()
}

/// Optomechanical part on cavity ⊗ matter ⊗ phonon.
///
/// Undisplaced: `ω_b b†b + (g/2)(a + a†)²(b + b†)`. Displaced: the static
/// `(g/2)(b + b†)` term is removed by the shift `b → b - g/2ω_b`, dropping
/// `O(g²)` corrections.
pub fn build_optomech_hamiltonian(p: &SystemParams, displaced: bool) -> Result<Operator> {
    p.validate()?;
    optomech_on(p, &p.full_layout()?, displaced)
}

fn optomech_on(p: &SystemParams, layout: &SpaceLayout, displaced: bool) -> Result<Operator> {
    let a = embed(&destroy_on(Label::Cavity, p.cutoffs.cavity)?, layout, Label::Cavity)?;
    let b = phonon_lowering(p, layout)?;
    let ad = a.adjoint();
    let bd = b.adjoint();
    let pressure = if displaced {
        // 2a†a + a² + a†²
        ad.mul(&a)?.scale_real(2.0).add(&a.mul(&a)?)?.add(&ad.mul(&ad)?)?
    } else {
        let x = a.add(&ad)?;
        x.mul(&x)?
    };
    let x_b = b.add(&bd)?;
    bd.mul(&b)?.scale_real(p.omega_b).add(&pressure.mul(&x_b)?.scale_real(0.5 * p.g))
}

/// Full tripartite Hamiltonian `H_R + H_M(t) + H_opt`.
pub fn full_hamiltonian_terms(p: &SystemParams, displaced: bool) -> Result<TimeDependentHamiltonian> {
    let layout = p.full_layout()?;
    let mut terms = usc_terms_on(p, &layout)?;
    terms.constant = terms.constant.add(&optomech_on(p, &layout, displaced)?)?;
    Ok(terms)
}

/// Static mirror displacement `β = g / 2ω_b`.
pub fn displacement_beta(p: &SystemParams) -> Result<f64> {
    if p.omega_b <= 0.0 {
        return Err(Error::invalid("displacement needs omega_b > 0"));
    }
    Ok(p.g / (2.0 * p.omega_b))
}

/// Coupling with the modulation off: `√(ω_a ω_σ) C_c / 2√((C_a + C_c)(C_σ + C_c))`.
pub fn lambda_from_capacitances(c: &CircuitParams) -> Result<f64> {
    for (name, v) in [("c_a", c.c_a), ("c_sigma", c.c_sigma), ("c_c", c.c_c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("capacitance {name} = {v} must be > 0")));
        }
    }
    if c.omega_a < 0.0 || c.omega_sigma < 0.0 {
        return Err(Error::invalid("circuit frequencies must be >= 0"));
    }
    Ok((c.omega_a * c.omega_sigma).sqrt() * c.c_c / (2.0 * ((c.c_a + c.c_c) * (c.c_sigma + c.c_c)).sqrt()))
}

/// Bose–Einstein occupation of a mode at angular frequency `omega` (rad/s) and temperature `T` (K).
pub fn nth_from_temperature(omega: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature {temperature} K must be > 0")));
    }
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("frequency {omega} must be > 0")));
    }
    Ok(1.0 / (HBAR * omega / (K_B * temperature)).exp_m1())
}

/// Cavity–matter parity `exp[iπ(a†a + m†m)]`, diagonal in the Fock basis.
pub fn parity_operator(p: &SystemParams) -> Result<Operator> {
    let layout = p.usc_layout()?;
    let n = layout.total_dim();
    let triplets: Vec<_> = (0..n)
        .map(|i| {
            let occ = layout.occupations(i);
            let sign = if (occ[0] + occ[1]) % 2 == 0 { 1.0 } else { -1.0 };
            (i, i, C64::new(sign, 0.0))
        })
        .collect();
    Operator::from_triplets(layout, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expectation, PureState};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::TAU;

    fn small(kind: MatterKind) -> SystemParams {
        SystemParams {
            omega_a: 1.0,
            omega_sigma: 1.0,
            omega_b: 0.01,
            omega_d: 0.01,
            lambda0: 0.5,
            g: 1e-3,
            delta_omega: 0.8,
            matter_kind: kind,
            cutoffs: Cutoffs { cavity: 8, matter: 5, phonon: 4 },
            ..SystemParams::default()
        }
    }

    #[test]
    fn uncoupled_undriven_is_diagonal() {
        let p = SystemParams { lambda0: 0.0, delta_omega: 0.0, ..small(MatterKind::Qubit) };
        let h = build_usc_hamiltonian(&p, 0.3).unwrap();
        let d = h.to_dense();
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                if r != c {
                    assert_eq!(d[(r, c)], C64::new(0.0, 0.0));
                }
            }
        }
        let (vals, vecs) = h.eigh().unwrap();
        assert_abs_diff_eq!(vals[0], 0.0);
        assert_abs_diff_eq!(vecs[(0, 0)].norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn raised_cosine_is_full_shift_at_zero() {
        let p = SystemParams { delta_omega: 0.7, ..small(MatterKind::Qubit) };
        assert_abs_diff_eq!(p.modulation(0.0), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(p.modulation(TAU / p.omega_d / 2.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rabi_form_matches_independent_assembly() {
        let p = small(MatterKind::Qubit);
        let layout = p.usc_layout().unwrap();
        let (a, sm) = usc_lowering_operators(&p, &layout).unwrap();
        let x = a.add(&a.adjoint()).unwrap();
        let sx = sm.add(&sm.adjoint()).unwrap();
        for &t in &[0.0, 17.0, 123.4] {
            let omega = p.omega_sigma + 0.5 * p.delta_omega * (1.0 + (p.omega_d * t).cos());
            let reference = a
                .adjoint()
                .mul(&a)
                .unwrap()
                .scale_real(p.omega_a)
                .add(&sm.adjoint().mul(&sm).unwrap().scale_real(omega))
                .unwrap()
                .add(&x.mul(&sx).unwrap().scale_real(p.lambda0))
                .unwrap();
            let h = build_usc_hamiltonian(&p, t).unwrap();
            assert!(h.sub(&reference).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn parity_commutes_with_rabi() {
        let p = small(MatterKind::Qubit);
        let parity = parity_operator(&p).unwrap();
        for &t in &[0.0, 40.0, 271.0] {
            let h = build_usc_hamiltonian(&p, t).unwrap();
            assert!(h.commutator(&parity).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn kerr_and_time_dependent_coupling() {
        let p = SystemParams {
            chi: 0.03,
            modulation_shape: ModulationShape::Sine,
            time_dependent_lambda: true,
            ..small(MatterKind::KerrBoson)
        };
        let t = 0.25 * TAU / p.omega_d;
        let lam = p.coupling(t).unwrap();
        assert_relative_eq!(lam, 0.5 * (1.8f64).sqrt(), max_relative = 1e-14);
        let h = build_usc_hamiltonian(&p, t).unwrap();
        let layout = p.usc_layout().unwrap();
        // |0, 2⟩: matter frequency (1 + 0.8) per quantum, Kerr χ·2
        let i = layout.index_of(&[0, 2]).unwrap();
        assert_relative_eq!(h.entry(i, i).re, 2.0 * 1.8 + 2.0 * 0.03, max_relative = 1e-14);
        let j = layout.index_of(&[1, 1]).unwrap();
        assert_relative_eq!(h.entry(i, j).re, lam * 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn too_deep_coupling_modulation() {
        let p = SystemParams {
            delta_omega: 1.5,
            modulation_shape: ModulationShape::Sine,
            time_dependent_lambda: true,
            ..small(MatterKind::Boson)
        };
        let t = 0.75 * TAU / p.omega_d;
        assert!(matches!(build_usc_hamiltonian(&p, t), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hermitian_over_random_draws() {
        // deterministic LCG draws
        let mut state = 0x2545_f491_4f6c_dd1d_u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..100 {
            let kind = [MatterKind::Qubit, MatterKind::Boson, MatterKind::KerrBoson][i % 3];
            let p = SystemParams {
                omega_a: 0.5 + next(),
                omega_sigma: 0.5 + next(),
                lambda0: next(),
                delta_omega: next(),
                xi: next(),
                chi: if kind == MatterKind::KerrBoson { 0.1 * next() } else { 0.0 },
                cutoffs: Cutoffs { cavity: 6, matter: 4, phonon: 3 },
                matter_kind: kind,
                ..SystemParams::default()
            };
            let h = build_usc_hamiltonian(&p, 10.0 * next()).unwrap();
            assert!(h.hermiticity_error() < 1e-12);
            let opt = build_optomech_hamiltonian(&p, i % 2 == 0).unwrap();
            assert!(opt.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn optomech_zero_coupling() {
        let p = SystemParams { g: 0.0, ..small(MatterKind::Qubit) };
        let h = build_optomech_hamiltonian(&p, false).unwrap();
        let layout = p.full_layout().unwrap();
        let b = phonon_lowering(&p, &layout).unwrap();
        let reference = b.adjoint().mul(&b).unwrap().scale_real(p.omega_b);
        assert_eq!(h.sub(&reference).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn displacement_removes_static_term() {
        let p = small(MatterKind::Qubit);
        let layout = p.full_layout().unwrap();
        let plain = build_optomech_hamiltonian(&p, false).unwrap();
        let shifted = build_optomech_hamiltonian(&p, true).unwrap();
        let b = phonon_lowering(&p, &layout).unwrap();
        let static_term = b.add(&b.adjoint()).unwrap().scale_real(0.5 * p.g);
        // [a, a†] = 1 fails on the top cavity level of the truncation
        let diff = plain.sub(&shifted).unwrap().sub(&static_term).unwrap();
        for (r, c, v) in diff.triplets() {
            let below_top = |i| layout.occupations(i)[0] + 1 < p.cutoffs.cavity;
            if below_top(r) && below_top(c) {
                assert!(v.norm() < 1e-15);
            }
        }

        let from = layout.index_of(&[0, 0, 0]).unwrap();
        let to = layout.index_of(&[0, 0, 1]).unwrap();
        assert_eq!(shifted.entry(to, from).norm(), 0.0);
        assert_abs_diff_eq!(plain.entry(to, from).re, p.g / 2.0, epsilon = 1e-18);
    }

    #[test]
    fn displaced_frame_has_no_linear_term_on_vacuum() {
        let p = SystemParams { lambda0: 0.0, ..small(MatterKind::Qubit) };
        let layout = p.full_layout().unwrap();
        let h = build_optomech_hamiltonian(&p, true).unwrap();
        for matter in 0..2 {
            for k in 0..p.cutoffs.phonon - 1 {
                let from = layout.index_of(&[0, matter, k]).unwrap();
                let to = layout.index_of(&[0, matter, k + 1]).unwrap();
                assert_eq!(h.entry(to, from).norm(), 0.0);
            }
        }
        let vac = PureState::fock(layout.clone(), &[0, 0, 0]).unwrap();
        let b = phonon_lowering(&p, &layout).unwrap();
        assert_eq!(expectation(&b, &vac).unwrap().norm(), 0.0);
    }

    #[test]
    fn beta_values() {
        let tau = TAU;
        let p = SystemParams { g: tau * 15.0, omega_b: tau * 1e6, ..SystemParams::default() };
        assert_relative_eq!(displacement_beta(&p).unwrap(), 7.5e-6, max_relative = 1e-15);
        let p0 = SystemParams { g: 0.0, ..p.clone() };
        assert_eq!(displacement_beta(&p0).unwrap(), 0.0);
        let p1 = SystemParams { g: p.omega_b, ..p.clone() };
        assert_eq!(displacement_beta(&p1).unwrap(), 0.5);
        let bad = SystemParams { omega_b: 0.0, ..p };
        assert!(displacement_beta(&bad).is_err());
    }

    #[test]
    fn capacitive_coupling() {
        let w = 3.0;
        let big = CircuitParams { c_a: 1.0, c_sigma: 1.0, c_c: 1e9, omega_a: w, omega_sigma: w };
        assert_relative_eq!(lambda_from_capacitances(&big).unwrap(), w / 2.0, max_relative = 1e-6);
        let eq = CircuitParams { c_c: 1.0, ..big.clone() };
        assert_relative_eq!(lambda_from_capacitances(&eq).unwrap(), w / 4.0, max_relative = 1e-15);
        let tiny = CircuitParams { c_c: 1e-12, ..big.clone() };
        assert!(lambda_from_capacitances(&tiny).unwrap() < 1e-11);
        let bad = CircuitParams { c_a: 0.0, ..big };
        assert!(lambda_from_capacitances(&bad).is_err());
    }

    #[test]
    fn bose_einstein_occupation() {
        let n_mech = nth_from_temperature(TAU * 1e6, 0.01).unwrap();
        assert!((200.0..215.0).contains(&n_mech), "{n_mech}");
        let n_opt = nth_from_temperature(TAU * 4e9, 0.01).unwrap();
        assert!(n_opt > 4e-9 && n_opt < 6e-9, "{n_opt}");
        let t = 0.05;
        let omega = 2f64.ln() * K_B * t / HBAR;
        assert_relative_eq!(nth_from_temperature(omega, t).unwrap(), 1.0, max_relative = 1e-12);
        assert!(nth_from_temperature(1.0, 0.0).is_err());
        assert!(nth_from_temperature(1.0, -1.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        let mut p = small(MatterKind::Qubit);
        p.xi = 1.5;
        assert!(p.validate().is_err());
        let p = SystemParams { time_dependent_lambda: true, ..small(MatterKind::Boson) };
        assert!(p.validate().is_err());
        let p = SystemParams { chi: 0.1, ..small(MatterKind::Boson) };
        assert!(p.validate().is_err());
        let p = SystemParams { g: -1.0, ..small(MatterKind::Boson) };
        assert!(p.validate().is_err());
    }
}
