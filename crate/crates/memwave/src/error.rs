use thiserror::Error;

/// All failure modes surfaced by the crate.
#[derive(Debug, Error)]
pub enum MemwaveError {
    #[error("kernel vanishes near t = {t}: |M(t,0)| or |M(T,t)| < 1e-14, derived kernels undefined")]
    DivisionByVanishingKernel { t: f64 },

    #[error("cutoff margin eps0 = {eps0} too large for region of minimal width {min_width} (need eps0 < width/3)")]
    MarginTooLarge { eps0: f64, min_width: f64 },

    #[error("CFL violated: dt = {dt} exceeds {cfl} * h = {limit}")]
    CflViolation { dt: f64, cfl: f64, limit: f64 },

    #[error("non-finite state detected at step {step} (max |y| overflowed)")]
    NonFiniteState { step: usize },

    #[error("conjugate gradient stagnated after {iters} iterations (relative residual {residual:.3e})")]
    CgStagnation { iters: usize, residual: f64 },

    #[error("mode j = {j} unresolvable on grid with n = {n} interior points (need j <= n/4)")]
    ModeUnresolvable { j: usize, n: usize },

    #[error("degenerate operator: {0}")]
    Degenerate(String),

    #[error("invalid config at {path}: {message}")]
    ConfigInvalid { path: String, message: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl MemwaveError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        MemwaveError::Io { path: path.into(), source }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        MemwaveError::ConfigInvalid { path: path.into(), message: message.into() }
    }
}
