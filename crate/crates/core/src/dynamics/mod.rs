//! Time evolution of the tripartite system and of the effective mirror model.
//!
//! - [`closed`]: Schrödinger dynamics of the full Hamiltonian or the USC part alone
//! - [`moments`]: exact first/second-moment equations of the driven, damped mirror
//! - [`lindblad`]: master equation of the mirror with thermal loss and dephasing
//! - [`dressed`]: positive-frequency dressed operators and the emission diagnostic

pub mod closed;
pub mod dressed;
pub mod lindblad;
pub mod moments;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use closed::{evolve_closed_full, evolve_closed_usc, ClosedRunOptions};
pub use dressed::{dressed_positive_operators, emission_weight};
pub use lindblad::{evolve_lindblad, PhononLiouvillian};
pub use moments::{evolve_effective_moments, MomentState};

pub const N_PHONON: &str = "n_phonon";
pub const B_MEAN: &str = "b_mean";
pub const N_OF_T: &str = "N_of_t";
pub const EMISSION_X: &str = "emission_X";
pub const EMISSION_S: &str = "emission_S";

/// Observables recorded on a monotone time grid, stored column-wise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub observables: Vec<(String, Vec<C64>)>,
}

impl Trajectory {
    pub fn new(names: &[&str]) -> Self {
        Self {
            times: Vec::new(),
            observables: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        }
    }

    /// Append one record; `values` must follow the column order given at construction.
    pub fn push(&mut self, t: f64, values: &[C64]) -> Result<()> {
        if values.len() != self.observables.len() {
            return Err(Error::invalid("record does not match the observable set"));
        }
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::invalid(format!("record time {t} not after {last}")));
            }
        }
        self.times.push(t);
        for ((_, col), v) in self.observables.iter_mut().zip(values) {
            col.push(*v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.observables.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[C64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Real parts of an observable column.
    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        self.get(name).map(|v| v.iter().map(|z| z.re).collect())
    }

    pub fn last(&self, name: &str) -> Option<C64> {
        self.get(name).and_then(|v| v.last().copied())
    }
}

/// Record times `t₀ + k·spacing` up to and including `t_final`.
pub fn record_grid(t_final: f64, spacing: f64) -> Result<Vec<f64>> {
    if !(t_final >= 0.0) || !(spacing > 0.0) {
        return Err(Error::invalid("record grid needs t_final >= 0 and spacing > 0"));
    }
    let steps = (t_final / spacing - 1e-9).ceil().max(0.0) as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| (k as f64 * spacing).min(t_final)).collect();
    grid.dedup();
    Ok(grid)
}
