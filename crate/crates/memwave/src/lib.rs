//! Numerical laboratory for 1-D wave equations with memory.
//!
//! The crate simulates y_tt - Δy + ∫₀ᵗ M(t,s) y(s) ds = χ_O(t) u on (0,1)
//! with a moving control region O(t), synthesizes memory-type null controls
//! by a conjugate-gradient HUM solve on an exactly transposed discrete
//! Gramian, and ships the side experiments (observability sharpness family,
//! kernel structure checks, Müntz moment analysis, post-horizon rest
//! certification) as CLI-driven, reproducible runs.

pub mod analysis;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kernel;
pub mod report;

pub use error::MemwaveError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, MemwaveError>;
