use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate ground state at t = {t}: gap {gap:e} below tolerance {tolerance:e}")]
    DegenerateGroundState { t: f64, gap: f64, tolerance: f64 },

    #[error("near-degenerate eigenvalues ({separation:e}) prevent energy ordering of dressed operators")]
    Ordering { separation: f64 },

    #[error("integration accuracy: norm drift {drift:e} exceeds {bound:e}; try dt_max <= {suggested_dt:e}")]
    Accuracy { drift: f64, bound: f64, suggested_dt: f64 },

    #[error("Fock cutoff {cutoff} too small: top-level population {population:e} at t = {t}")]
    CutoffLeak { cutoff: usize, population: f64, t: f64 },

    #[error("no steady state: {0}")]
    Divergence(String),

    #[error("convergence failure: {0}")]
    Convergence(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
