//! Invariant cones and Lyapunov certificates for m-component reaction-diffusion
//! systems whose diffusion matrix is tri-diagonal Toeplitz.
//!
//! The crate is organized around one change of coordinates. A diffusion matrix
//! with constant diagonals `(c, a, b)`, all positive, has a transpose that
//! diagonalizes in closed form ([`spectral`]). The rows of that eigenbasis cut
//! state space into `2^m` sign-pattern cones ([`regions`]); inside a cone the
//! transformed field `W = P^T U` is componentwise nonnegative, and the system
//! decouples into scalar heat equations coupled only through the reaction term.
//! A weighted homogeneous polynomial in `W` ([`lyapunov`]) serves as the
//! Lyapunov functional; checking that its dissipation term has the right sign
//! reduces to positive-definiteness of a family of small symmetric matrices,
//! which [`certificate`] verifies through leading principal minors and a
//! determinant recursion. [`reaction`] supplies reaction families in the
//! diagonal coordinates together with an empirical audit of the structural
//! assumptions (quasi-positivity, polynomial growth, a linear-combination
//! bound), and [`simulate`] integrates the diagonalized system with an IMEX
//! scheme to watch the certificate do its work along trajectories.
//!
//! Hot loops (multi-index sweeps, audit sampling, per-component solves) go
//! through [`exec`], which hands work to rayon when the `parallel` feature is
//! enabled and the job is large enough, and otherwise runs sequentially.
//! Results are combined in a fixed order either way, so thread count never
//! changes output values.

pub mod certificate;
pub mod error;
pub mod exec;
pub mod expr;
pub mod linalg;
pub mod lyapunov;
pub mod reaction;
pub mod regions;
pub mod simulate;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
