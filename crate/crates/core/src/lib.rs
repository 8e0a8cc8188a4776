//! Simulation engine for phonon pumping by a modulated ultrastrong-coupling vacuum.
//!
//! A cavity ultrastrongly coupled to a qubit (or a second bosonic mode) holds
//! virtual photons in its ground state. Slowly modulating the matter frequency
//! modulates the radiation pressure `N(t) = ⟨2a†a + a² + a†²⟩` that the ground
//! state exerts on a mechanical mode, which then oscillates coherently.
//!
//! Modules, bottom-up:
//! - [`hilbert`]: layouts, operators, states, expectation values
//! - [`models`]: Hamiltonian builders and parameter records
//! - [`vacuum`]: adiabatic ground-state tracking and Fourier analysis of `N(t)`
//! - [`dynamics`]: closed, effective and dissipative time evolution
//! - [`steadystate`]: analytic, limit-cycle and Floquet steady states, sweeps

pub mod band;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod krylov;
pub mod models;
pub mod ode;
pub mod steadystate;
pub mod vacuum;

pub use error::{Error, Result};
pub use hilbert::{
    destroy, embed, expectation, pauli_lowering, DensityMatrix, Label, Operator, PureState,
    SpaceLayout, Tolerances,
};
pub use models::{
    CircuitParams, Cutoffs, DissipationParams, MatterKind, ModulationShape, SystemParams,
};
pub use num_complex::Complex64;
pub use steadystate::{SteadyStateMethod, SteadyStateResult};
pub use vacuum::{FourierSpectrum, GroundStateTrack};
