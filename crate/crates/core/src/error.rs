use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid angular momentum arguments (negative j, |m| > j, mixed parity).
    #[error("angular momentum domain error: {0}")]
    Domain(String),

    #[error("invalid molecule: {0}")]
    InvalidMolecule(String),

    #[error("unknown molecule `{0}`")]
    UnknownMolecule(String),

    #[error("diagonalization failed: {0}")]
    Diagonalization(String),

    /// States that cannot be connected by any declared dipole.
    #[error("state mismatch: {0}")]
    Mismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("named resonance {0} is dipole-forbidden or absent from the level set")]
    NoResonance(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
