//! Strong interference alignment for the 3-user single-antenna interference
//! channel over finite symbol extensions.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tolerance-aware complex linear algebra (rank, spans,
//!   column-set containment, Hermitian eigenvectors).
//! - [`channel`]: seeded realizations of the symbol-extended channel and the
//!   diagonal alignment operator.
//! - [`precoding`]: the precoder chain, alignment verification and the
//!   linear-alignment infeasibility construction.
//! - [`receivers`]: interference covariances, MMSE combining, zero-forcing
//!   filters and per-stream rates.
//! - [`strong_ia`]: the strong-interference decision, SIC at receiver 2 and
//!   the strong / fallback schemes.
//! - [`experiments`]: Monte Carlo SNR sweeps, DoF utilities and CSV/JSON
//!   output used by the `sia-sim` binary.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod precoding;
pub mod receivers;
pub mod strong_ia;

pub use error::{Error, Result};
pub use numerics::{CMat, CVec, Tolerance, C64};
