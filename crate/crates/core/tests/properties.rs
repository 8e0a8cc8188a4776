use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vacpump_core::dynamics::moments::{evolve_effective_moments, MomentState};
use vacpump_core::hilbert::{kron, Label, SpaceLayout};
use vacpump_core::models::{build_usc_hamiltonian, parity_operator};
use vacpump_core::steadystate::{analytic_steady_state, pressure_spectrum, resonance_order};
use vacpump_core::vacuum::GroundStateSolver;
use vacpump_core::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn small_usc(lambda_frac: f64, delta_frac: f64, xi: f64, kind: MatterKind) -> SystemParams {
    SystemParams {
        omega_a: 40.0,
        omega_sigma: 40.0,
        lambda0: 40.0 * lambda_frac,
        delta_omega: 40.0 * delta_frac,
        xi,
        matter_kind: kind,
        cutoffs: Cutoffs { cavity: 8, matter: 4, phonon: 10 },
        ..SystemParams::default()
    }
}

fn matter_kind() -> impl Strategy<Value = MatterKind> {
    prop_oneof![Just(MatterKind::Qubit), Just(MatterKind::Boson), Just(MatterKind::KerrBoson)]
}

fn complex_matrix(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
        .prop_map(move |v| DMatrix::from_iterator(n, n, v.into_iter().map(|(a, b)| c(a, b))))
}

fn unit_state(n: usize) -> impl Strategy<Value = DVector<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| DVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| c(a, b))).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn number_operator_is_diagonal_ladder(n in 2usize..24) {
        let a = destroy(n).unwrap();
        let num = a.adjoint().mul(&a).unwrap().to_dense();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { i as f64 } else { 0.0 };
                prop_assert!((num[(i, j)] - c(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn embedding_repeats_spectrum(n in 2usize..5, other in 2usize..4, m in complex_matrix(4)) {
        let h = m.view((0, 0), (n, n)).into_owned();
        let h = (&h + h.adjoint()) * c(0.5, 0.0);
        let op = Operator::from_dense(SpaceLayout::single(Label::Matter, n).unwrap(), h).unwrap();
        let layout = SpaceLayout::new(&[(Label::Cavity, other), (Label::Matter, n)]).unwrap();
        let (small, _) = op.eigh().unwrap();
        let (big, _) = embed(&op, &layout, Label::Matter).unwrap().eigh().unwrap();
        prop_assert_eq!(big.len(), small.len() * other);
        for (i, e) in big.iter().enumerate() {
            prop_assert!((e - small[i / other]).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_is_linear_and_conjugate_symmetric(
        m1 in complex_matrix(6),
        m2 in complex_matrix(6),
        s in -3.0..3.0f64,
        psi in unit_state(6),
    ) {
        let layout = SpaceLayout::new(&[(Label::Cavity, 3), (Label::Matter, 2)]).unwrap();
        let a = Operator::from_dense(layout.clone(), m1).unwrap();
        let b = Operator::from_dense(layout.clone(), m2).unwrap();
        let state = PureState::new(layout, psi).unwrap();
        let ea = expectation(&a, &state).unwrap();
        let eb = expectation(&b, &state).unwrap();
        let combo = a.add(&b.scale_real(s)).unwrap();
        prop_assert!((expectation(&combo, &state).unwrap() - (ea + eb * s)).norm() < 1e-12);
        prop_assert!((expectation(&a.adjoint(), &state).unwrap() - ea.conj()).norm() < 1e-12);
    }

    #[test]
    fn kron_of_hermitian_is_hermitian(m1 in complex_matrix(3), m2 in complex_matrix(2)) {
        let h1 = Operator::from_dense(SpaceLayout::single(Label::Cavity, 3).unwrap(), &m1 + m1.adjoint()).unwrap();
        let h2 = Operator::from_dense(SpaceLayout::single(Label::Matter, 2).unwrap(), &m2 + m2.adjoint()).unwrap();
        prop_assert!(kron(&h1, &h2).unwrap().hermiticity_error() < 1e-12);
    }

    #[test]
    fn thermal_state_is_a_valid_density_matrix(n in 2usize..40, n_mean in 0.0..5.0f64) {
        let rho = DensityMatrix::thermal(SpaceLayout::single(Label::Phonon, n).unwrap(), n_mean).unwrap();
        prop_assert!((rho.trace() - c(1.0, 0.0)).norm() < 1e-8);
        prop_assert!(rho.min_eigenvalue().unwrap() >= -1e-8);
    }

    #[test]
    fn usc_hamiltonian_is_hermitian(
        lambda in 0.0..0.8f64,
        delta in 0.0..1.0f64,
        xi in 0.0..1.0f64,
        chi in 0.0..5.0f64,
        phase in 0.0..std::f64::consts::TAU,
        kind in matter_kind(),
        sine in any::<bool>(),
    ) {
        let mut p = small_usc(lambda, delta, xi, kind);
        if kind == MatterKind::KerrBoson {
            p.chi = chi;
        }
        if sine {
            p.modulation_shape = ModulationShape::Sine;
            p.delta_omega = 0.9 * p.delta_omega;
        }
        let h = build_usc_hamiltonian(&p, phase / p.omega_d).unwrap();
        prop_assert!(h.hermiticity_error() < 1e-12);
    }

    #[test]
    fn rabi_hamiltonian_conserves_parity(lambda in 0.0..0.8f64, delta in 0.0..1.0f64, t in 0.0..7.0f64) {
        let p = small_usc(lambda, delta, 1.0, MatterKind::Qubit);
        let h = build_usc_hamiltonian(&p, t).unwrap();
        let parity = parity_operator(&p).unwrap();
        prop_assert!(h.commutator(&parity).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn pressure_is_gauge_independent(lambda in 0.05..0.6f64, t in 0.0..7.0f64, phase in 0.0..std::f64::consts::TAU) {
        let p = small_usc(lambda, 0.5, 1.0, MatterKind::Qubit);
        let solver = GroundStateSolver::new(&p).unwrap();
        let gs = solver.ground_state(t).unwrap();
        let n0 = solver.pressure(&gs.state).unwrap();
        let n1 = solver.pressure(&gs.state.with_phase(phase)).unwrap();
        prop_assert!((n0 - n1).abs() < 1e-12 * n0.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fourier_components_are_conjugate_symmetric(lambda in 0.1..0.6f64, delta in 0.1..1.0f64, kind in matter_kind()) {
        let p = small_usc(lambda, delta, 1.0, kind);
        let s = pressure_spectrum(&p, 6, 64).unwrap();
        for k in 0..=6i64 {
            prop_assert!((s.coefficient(-k) - s.coefficient(k).conj()).norm() < 1e-10);
        }
        prop_assert!(s.coefficient(0).im.abs() < 1e-12);
    }

    #[test]
    fn jaynes_cummings_vacuum_exerts_no_pressure(lambda in 0.1..0.6f64, delta in 0.1..1.0f64) {
        let p = small_usc(lambda, delta, 0.0, MatterKind::Qubit);
        let s = pressure_spectrum(&p, 4, 32).unwrap();
        prop_assert!(s.magnitudes().iter().all(|m| *m < 1e-12));
    }

    #[test]
    fn steady_state_dominates_coherent_part(
        lambda in 0.1..0.6f64,
        detuning in -5.0..5.0f64,
        gamma_b in 1e-4..1e-2f64,
        ratio in 0.0..2.0f64,
        n_th in 0.0..10.0f64,
    ) {
        let mut p = small_usc(lambda, 0.5, 1.0, MatterKind::Qubit);
        let d = DissipationParams { gamma_b, gamma_d: ratio * gamma_b, n_th, ..DissipationParams::default() };
        p.omega_d = 1.0 + detuning * d.coherence_rate();
        let s = pressure_spectrum(&p, 4, 64).unwrap();
        let r = analytic_steady_state(&s, &p, &d, 1).unwrap();
        prop_assert!(r.n_ss >= r.b_ss.norm_sqr() - 1e-9);
        prop_assert!(r.incoherent_part() >= n_th - 1e-9);
    }

    #[test]
    fn analytic_population_is_linear_in_thermal_occupation(lambda in 0.1..0.6f64, n_th in 0.0..200.0f64) {
        let p = small_usc(lambda, 0.5, 1.0, MatterKind::Qubit);
        let s = pressure_spectrum(&p, 4, 64).unwrap();
        let d0 = DissipationParams { gamma_b: 1e-3, gamma_d: 5e-4, ..DissipationParams::default() };
        let d1 = DissipationParams { n_th, ..d0.clone() };
        let r0 = analytic_steady_state(&s, &p, &d0, 1).unwrap();
        let r1 = analytic_steady_state(&s, &p, &d1, 1).unwrap();
        // exact up to one rounding of the final sum
        prop_assert!((r1.n_ss - r0.n_ss - n_th).abs() <= 4.0 * f64::EPSILON * r1.n_ss);
    }

    #[test]
    fn steady_state_is_scale_invariant(lambda in 0.1..0.6f64, detuning in -3.0..3.0f64, factor in 1e-3..1e4f64) {
        let d = DissipationParams { gamma_b: 1e-3, gamma_d: 5e-4, n_th: 0.7, ..DissipationParams::default() };
        let mut p = small_usc(lambda, 0.5, 1.0, MatterKind::Qubit);
        p.omega_d = 1.0 + detuning * d.coherence_rate();
        let k = resonance_order(p.omega_b, p.omega_d).unwrap();
        let base = analytic_steady_state(&pressure_spectrum(&p, 4, 64).unwrap(), &p, &d, k).unwrap();
        let ps = p.rescaled(factor);
        let ds = d.rescaled(factor);
        let scaled = analytic_steady_state(&pressure_spectrum(&ps, 4, 64).unwrap(), &ps, &ds, k).unwrap();
        prop_assert!((base.b_ss.norm() - scaled.b_ss.norm()).abs() < 1e-9 * base.b_ss.norm().max(1e-3));
        prop_assert!((base.n_ss - scaled.n_ss).abs() < 1e-9 * base.n_ss);
    }

    #[test]
    fn moments_respect_cauchy_schwarz(
        lambda in 0.1..0.6f64,
        gamma_b in 0.0..0.05f64,
        n_th in 0.0..3.0f64,
        b_re in -1.0..1.0f64,
        b_im in -1.0..1.0f64,
        excess in 0.0..2.0f64,
    ) {
        let mut p = small_usc(lambda, 0.5, 1.0, MatterKind::Qubit);
        p.g = 0.05;
        let s = pressure_spectrum(&p, 4, 64).unwrap();
        let d = DissipationParams { gamma_b, gamma_d: 0.5 * gamma_b, n_th, ..DissipationParams::default() };
        let b = c(b_re, b_im);
        let start = MomentState::new(b, b.norm_sqr() + excess).unwrap();
        let traj = evolve_effective_moments(&p, &s, &d, 3.0 * p.drive_period().unwrap(), start).unwrap();
        let n = traj.get("n_phonon").unwrap();
        let bm = traj.get("b_mean").unwrap();
        for (n, b) in n.iter().zip(bm) {
            prop_assert!(n.re >= b.norm_sqr() - 1e-9);
        }
    }
}
