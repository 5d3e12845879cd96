use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while building references, stepping the plant,
/// running a controller or writing results.
#[derive(Debug, Error)]
pub enum Error {
    /// The plant received non-finite inputs or produced a non-finite state.
    #[error("state integrity violated at t = {t}: {what}")]
    StateIntegrity { t: f64, what: String },

    /// A controller was fed a non-finite measurement or produced a non-finite output.
    #[error("controller fault at t = {t}: {what}")]
    ControllerFault { t: f64, what: String },

    /// The exponent guard of the two-point boundary solver was exceeded.
    #[error("horizon too long: |alpha * (t_f - t_i)| = {product} exceeds {limit}")]
    ShrinkHorizon { product: f64, limit: f64 },

    /// Arguments outside an operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No obstacle bypass could be constructed.
    #[error("infeasible bypass: {0}")]
    InfeasibleBypass(String),

    /// A path description that does not define a usable reference.
    #[error("invalid path: {0}")]
    InvalidPath(String),

    /// Scenario configuration failed validation or parsing.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
