//! Memory kernels M(t,s), the derived kernels M1 and M2, and the structural
//! checks (non-vanishing product and the multiplicative factorization).

use serde::{Deserialize, Serialize};

use crate::{MemwaveError, Result};

/// Number of lattice points per axis used by the structural checks.
const CHECK_SAMPLES: usize = 64;

/// Kernel shapes. `Separable` holds samples of f on a uniform grid over
/// [0,T] with M(t,s) = f(s); `Tabulated` holds values on a uniform grid of
/// [0,T]² (row index = t, column index = s), evaluated bilinearly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    Constant { c: f64 },
    Exponential { alpha: f64 },
    Power,
    Separable { f: Vec<f64> },
    Tabulated { values: Vec<Vec<f64>> },
}

/// A memory kernel M(t,s) on [0,T]².
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    pub horizon: f64,
    pub kind: KernelKind,
}

fn interp1(samples: &[f64], horizon: f64, s: f64) -> f64 {
    let m = samples.len();
    if m == 1 {
        return samples[0];
    }
    let pos = (s / horizon).clamp(0.0, 1.0) * (m - 1) as f64;
    let i = (pos.floor() as usize).min(m - 2);
    let w = pos - i as f64;
    samples[i] * (1.0 - w) + samples[i + 1] * w
}

impl MemoryKernel {
    pub fn new(kind: KernelKind, horizon: f64) -> Self {
        MemoryKernel { horizon, kind }
    }

    /// Evaluate M(t,s). Analytic kinds extend smoothly beyond [0,T]², which
    /// the post-horizon extension relies on; sampled kinds clamp.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match &self.kind {
            KernelKind::Constant { c } => *c,
            KernelKind::Exponential { alpha } => (alpha * (t - s)).exp(),
            KernelKind::Power => (s + 1.0).powf(t),
            KernelKind::Separable { f } => interp1(f, self.horizon, s),
            KernelKind::Tabulated { values } => {
                let rows = values.len();
                let cols = values[0].len();
                if rows == 1 && cols == 1 {
                    return values[0][0];
                }
                let tp = (t / self.horizon).clamp(0.0, 1.0) * (rows - 1) as f64;
                let sp = (s / self.horizon).clamp(0.0, 1.0) * (cols - 1) as f64;
                let i = (tp.floor() as usize).min(rows.saturating_sub(2));
                let j = (sp.floor() as usize).min(cols.saturating_sub(2));
                let wt = tp - i as f64;
                let ws = sp - j as f64;
                let i1 = (i + 1).min(rows - 1);
                let j1 = (j + 1).min(cols - 1);
                values[i][j] * (1.0 - wt) * (1.0 - ws)
                    + values[i1][j] * wt * (1.0 - ws)
                    + values[i][j1] * (1.0 - wt) * ws
                    + values[i1][j1] * wt * ws
            }
        }
    }

    /// True when the derivative formulas below are closed forms rather than
    /// difference quotients.
    pub fn is_analytic(&self) -> bool {
        !matches!(self.kind, KernelKind::Tabulated { .. })
    }
}

/// M1(t,s) = M(t,s)/M(t,0) and M2(s,t) = M(s,t)/M(T,t) with their partial
/// derivatives in t (difference quotients for tabulated kernels, closed
/// forms otherwise).
#[derive(Debug, Clone)]
pub struct DerivedKernels {
    kernel: MemoryKernel,
    h_k: f64,
}

/// Construct the derived kernels, verifying the normalizing denominators do
/// not vanish on a uniform sample lattice.
pub fn derive_kernels(k: &MemoryKernel, h_k: f64) -> Result<DerivedKernels> {
    let t_end = k.horizon;
    for i in 0..=CHECK_SAMPLES {
        let t = t_end * i as f64 / CHECK_SAMPLES as f64;
        if k.eval(t, 0.0).abs() < 1e-14 || k.eval(t_end, t).abs() < 1e-14 {
            return Err(MemwaveError::DivisionByVanishingKernel { t });
        }
    }
    Ok(DerivedKernels { kernel: k.clone(), h_k })
}

impl DerivedKernels {
    pub fn kernel(&self) -> &MemoryKernel {
        &self.kernel
    }

    pub fn m1(&self, t: f64, s: f64) -> f64 {
        self.kernel.eval(t, s) / self.kernel.eval(t, 0.0)
    }

    /// ∂M1/∂t (first argument).
    pub fn m1_t(&self, t: f64, s: f64) -> f64 {
        match &self.kernel.kind {
            KernelKind::Constant { .. } | KernelKind::Separable { .. } => 0.0,
            // M1(t,s) = e^{-alpha s} is t-independent.
            KernelKind::Exponential { .. } => 0.0,
            // M(t,0) = 1, so M1(t,s) = (s+1)^t and ∂_t M1 = (s+1)^t ln(s+1).
            KernelKind::Power => (s + 1.0).powf(t) * (s + 1.0).ln(),
            KernelKind::Tabulated { .. } => {
                (self.m1(t + self.h_k, s) - self.m1(t - self.h_k, s)) / (2.0 * self.h_k)
            }
        }
    }

    pub fn m2(&self, s: f64, t: f64) -> f64 {
        self.kernel.eval(s, t) / self.kernel.eval(self.kernel.horizon, t)
    }

    /// ∂M2/∂t (second argument).
    pub fn m2_t(&self, s: f64, t: f64) -> f64 {
        let t_end = self.kernel.horizon;
        match &self.kernel.kind {
            KernelKind::Constant { .. } | KernelKind::Separable { .. } => 0.0,
            // M2(s,t) = e^{alpha(s-T)} is t-independent.
            KernelKind::Exponential { .. } => 0.0,
            // M2(s,t) = (t+1)^{s-T}; ∂_t M2 = (s-T)(t+1)^{s-T-1}.
            KernelKind::Power => (s - t_end) * (t + 1.0).powf(s - t_end - 1.0),
            KernelKind::Tabulated { .. } => {
                (self.m2(s, t + self.h_k) - self.m2(s, t - self.h_k)) / (2.0 * self.h_k)
            }
        }
    }
}

/// Result of the structural kernel checks.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCheckReport {
    pub a1_pass: bool,
    /// min over sampled t of |M(t,0) M(T,t)|.
    pub a1_min_abs: f64,
    pub multiplicative_pass: bool,
    pub worst_triple: (f64, f64, f64),
    pub worst_residual: f64,
    pub tol_mult: f64,
}

/// Candidate factor M̃(t1,t2) = M(t1,0)/M(t2,0) for the factorization
/// M(t1,t3) = M̃(t1,t2) M(t2,t3).
pub fn witness_mtilde(k: &MemoryKernel, t1: f64, t2: f64) -> Result<f64> {
    let denom = k.eval(t2, 0.0);
    if denom.abs() < 1e-14 {
        return Err(MemwaveError::DivisionByVanishingKernel { t: t2 });
    }
    Ok(k.eval(t1, 0.0) / denom)
}

/// Check |M(t,0) M(T,t)| > 1e-12 on a uniform t-lattice.
pub fn check_a1(k: &MemoryKernel, n_samples: usize) -> KernelCheckReport {
    let n = n_samples.max(2);
    let mut min_abs = f64::INFINITY;
    for i in 0..=n {
        let t = k.horizon * i as f64 / n as f64;
        let prod = (k.eval(t, 0.0) * k.eval(k.horizon, t)).abs();
        min_abs = min_abs.min(prod);
    }
    KernelCheckReport {
        a1_pass: min_abs > 1e-12,
        a1_min_abs: min_abs,
        multiplicative_pass: true,
        worst_triple: (0.0, 0.0, 0.0),
        worst_residual: 0.0,
        tol_mult: 0.0,
    }
}

/// Test the factorization M(t1,t3) = M̃(t1,t2) M(t2,t3) over ordered triples
/// t3 <= t2 <= t1 on a uniform lattice. The default tolerance is
/// 1e-9 * max sampled |M|.
pub fn check_multiplicative(
    k: &MemoryKernel,
    n_samples: usize,
    tol_mult: Option<f64>,
) -> Result<KernelCheckReport> {
    let n = n_samples.max(3).min(CHECK_SAMPLES);
    let ts: Vec<f64> = (0..n).map(|i| k.horizon * i as f64 / (n - 1) as f64).collect();
    let mut max_abs_m = 0.0f64;
    for &t in &ts {
        for &s in &ts {
            max_abs_m = max_abs_m.max(k.eval(t, s).abs());
        }
    }
    let tol = tol_mult.unwrap_or(1e-9 * max_abs_m.max(f64::MIN_POSITIVE));
    let mut worst = (0.0, 0.0, 0.0);
    let mut worst_res = 0.0f64;
    for (i1, &t1) in ts.iter().enumerate() {
        for (i2, &t2) in ts.iter().enumerate().take(i1 + 1) {
            for &t3 in ts.iter().take(i2 + 1) {
                let mt = witness_mtilde(k, t1, t2)?;
                let res = (k.eval(t1, t3) - mt * k.eval(t2, t3)).abs();
                if res > worst_res {
                    worst_res = res;
                    worst = (t1, t2, t3);
                }
            }
        }
    }
    let a1 = check_a1(k, CHECK_SAMPLES);
    Ok(KernelCheckReport {
        a1_pass: a1.a1_pass,
        a1_min_abs: a1.a1_min_abs,
        multiplicative_pass: worst_res <= tol,
        worst_triple: worst,
        worst_residual: worst_res,
        tol_mult: tol,
    })
}
