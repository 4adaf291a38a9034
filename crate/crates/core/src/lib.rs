//! Batched, time-chunked implicit ODE integration.
//!
//! Integrates `n_batch` independent time series at once and, on top of that,
//! groups `n_chunk` consecutive time steps into one coupled implicit system.
//! Newton's method on a chunk produces a lower block-bidiagonal linear system
//! which is solved with Thomas's algorithm, parallel cyclic reduction, or a
//! hybrid of the two ([`linalg`]). Parameter gradients of a loss over the
//! integrated trajectory come from a discrete adjoint pass that is chunked in
//! the same way ([`adjoint`]).
//!
//! Array layout conventions used throughout:
//!
//! | quantity            | shape                                  |
//! |---------------------|----------------------------------------|
//! | chunk state / rates | `(n_chunk, n_batch, n_size)`           |
//! | state Jacobians     | `(n_chunk, n_batch, n_size, n_size)`   |
//! | chunk times         | `(n_chunk, n_batch)`                   |
//! | trajectories        | `(n_time + 1, n_batch, n_size)`        |
//!
//! All arithmetic is `f64`.

pub mod adjoint;
pub mod dual;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod models;

pub use error::{Error, Result};
