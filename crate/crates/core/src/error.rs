//! One error type for the whole crate. Variants map onto the distinct failure
//! classes callers dispatch on: bad input, a capacity guard, a numerically
//! degenerate transform, an iteration budget, floating-point overflow, an
//! internal identity that must hold, an infeasible weight search, and the
//! blow-up signal raised by the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("capacity exceeded: {what} would need {requested} (limit {limit})")]
    Capacity {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("diagonalizing transform is numerically singular (condition estimate {cond:.3e})")]
    SingularTransform { cond: f64 },

    #[error("{what} did not converge within {budget} iterations")]
    NonConvergence { what: &'static str, budget: usize },

    /// The offending magnitude is reported on a log10 scale because the value
    /// itself is not representable.
    #[error("overflow in {context} (magnitude ~ 1e{log10:.0})")]
    Overflow { context: &'static str, log10: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error(
        "no passing weights found (best margin {best_margin:.3e} after {doublings} doublings)"
    )]
    Infeasible { best_margin: f64, doublings: usize },

    #[error("solution norm crossed the blow-up threshold at t = {t}")]
    BlowUp { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
