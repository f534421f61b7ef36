//! Broadcast-performance models for slotted CSMA/CA beaconing under
//! multi-RAT co-channel coexistence.
//!
//! The crate evaluates, both in closed form and by Monte Carlo simulation,
//! how reliably periodic safety beacons survive on a shared channel when
//! the sending population mixes direct short-range broadcast nodes with
//! Wi-Fi and cellular-sidelink interferers:
//!
//! - [`geometry`]: the planar deployment model. Poisson node sampling on a
//!   square, separation-distance laws, pairwise collision (lens) areas and
//!   the quadratic inverse-area fit used to push those laws into area space.
//! - [`temporal`]: the frozen-countdown backoff chain. Per-slot transmit
//!   probability, the self-consistent busy-slot probability, and the
//!   start/synchronous-collision/hidden-node probabilities built on it.
//! - [`interference`]: cross-technology composition. Slot and
//!   resource-block conflict maps, busy-probability composition, and the
//!   superposed competitor distribution.
//! - [`metrics`]: packet delivery ratio and its spatiotemporal refinement,
//!   including the geometry-weighted averages and sweep drivers.
//! - [`montecarlo`]: slot-level trial simulator with event-driven
//!   contention, collision flagging and batch estimators.
//! - [`experiment`]: config-file driven runs producing deterministic CSV
//!   artifacts, plus validation and comparison entry points.

pub mod experiment;
pub mod geometry;
pub mod interference;
pub mod metrics;
pub mod montecarlo;
mod numeric;
pub mod temporal;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error in {op}: {message}")]
    Domain { op: &'static str, message: String },

    /// A numerical routine failed to reach its convergence target.
    #[error("{op} did not converge: {message}")]
    NoConvergence { op: &'static str, message: String },

    /// A scenario or config violated a structural precondition.
    #[error("invalid configuration: {message}")]
    InvalidConfig { message: String },

    /// A config file failed to parse; `line` is 1-based.
    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    /// Filesystem failure while reading configs or writing artifacts.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(op: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { op, message: message.into() }
    }

    pub(crate) fn no_convergence(op: &'static str, message: impl Into<String>) -> Self {
        Error::NoConvergence { op, message: message.into() }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig { message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
