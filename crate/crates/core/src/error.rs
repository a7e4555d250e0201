use num_complex::Complex64;
use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Every variant names the module it originates from so that the command line
/// front end can report where a computation stopped.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        module: &'static str,
        name: String,
        reason: String,
    },

    #[error("[{module}] truncation at n_ph = {n_ph} leaves a weight deficit of {deficit:.3e} (tolerance {tol:.1e})")]
    Truncation {
        module: &'static str,
        n_ph: usize,
        deficit: f64,
        tol: f64,
    },

    #[error("[transient] pole confluence beyond multiplicity 2 at {poles:?}")]
    Confluence { poles: Vec<Complex64> },

    #[error("[{module}] quadrature did not reach tolerance {tol:.1e}: worst panel [{lo}, {hi}] with error {err:.3e}")]
    Quadrature {
        module: &'static str,
        lo: f64,
        hi: f64,
        err: f64,
        tol: f64,
    },

    #[error("[oracle] step size underflow at t = {t} (h = {h:.3e}); try a coarser mode spacing or smaller gamma_c")]
    Stiffness { t: f64, h: f64 },

    #[error("[oracle] window W = {window} does not cover the packet: need |delta| + 10 epsilon < W (have {needed})")]
    Coverage { window: f64, needed: f64 },

    #[error("[spectrum] degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("[cli] {0}")]
    Config(String),

    #[error("[cli] i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(module: &'static str, name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Confluence { .. } | Error::Quadrature { .. } | Error::Stiffness { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
