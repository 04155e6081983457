//! Quantitative side experiments: the observability sharpness family built
//! from the real root of μ³ + λμ + 1 = 0, the moment analysis for the kernel
//! (s+1)^t, and rest certification past the control horizon.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::{extend_past_t, ExtensionMode, PrimalState, TimeMesh};
use crate::geometry::{DirichletSpectrum, Grid1D};
use crate::kernel::MemoryKernel;
use crate::{MemwaveError, Result};

/// Cardano data for the real root of μ³ + λμ + 1 = 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MuRoot {
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    /// Whether |μ| < 6/λ holds.
    pub bound_holds: bool,
}

/// Real root via Cardano: μ = a^{1/3} + b^{1/3} with
/// a,b = -1/2 ± sqrt(1/4 + λ³/27).
pub fn solve_mu(lambda: f64) -> MuRoot {
    assert!(lambda > 0.0);
    let disc = (0.25 + lambda.powi(3) / 27.0).sqrt();
    let a = -0.5 + disc;
    let b = -0.5 - disc;
    let mu = a.cbrt() + b.cbrt();
    MuRoot { mu, a, b, bound_holds: mu.abs() < 6.0 / lambda }
}

/// One row of the sharpness experiment.
#[derive(Debug, Clone, Serialize)]
pub struct SharpnessRecord {
    pub j: usize,
    pub lambda: f64,
    pub mu: f64,
    /// ‖p(0)‖²_{H¹} + ‖p_t(0)‖²_{L²} + ‖q(0)‖²_{L²}.
    pub lhs: f64,
    /// ‖p‖²_{H^s(Q)} for each probed s, in s_list order.
    pub rhs_s: Vec<f64>,
    /// lhs/rhs_s for each probed s.
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpnessSummary {
    pub s_list: Vec<f64>,
    pub records: Vec<SharpnessRecord>,
    /// Fitted exponent of lhs/rhs_s against λ_j for each s (expected 2-s).
    pub slopes: Vec<f64>,
    /// min over j of lhs - λ_j²/36 (nonnegative when the lower bound holds).
    pub lower_bound_margin: f64,
}

/// Discrete H^s(Q) squared norm of a modal trajectory c(t)·φ_j: the spectral
/// weight λ^s on the spatial part plus the L² norm of the ⌈s⌉-th time
/// difference quotient.
fn hs_q_norm_sq(c: &[f64], lambda: f64, s: f64, dt: f64) -> f64 {
    let trap = |v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (m, x) in v.iter().enumerate() {
            let w = if m == 0 || m == v.len() - 1 { 0.5 } else { 1.0 };
            acc += w * x * x;
        }
        acc * dt
    };
    let mut total = lambda.powf(s) * trap(c);
    let order = s.ceil() as usize;
    if order >= 1 && s > 0.0 {
        let mut d = c.to_vec();
        for _ in 0..order {
            let mut next = vec![0.0; d.len()];
            let len = d.len();
            for m in 0..len {
                next[m] = if m == 0 {
                    (d[1] - d[0]) / dt
                } else if m == len - 1 {
                    (d[len - 1] - d[len - 2]) / dt
                } else {
                    (d[m + 1] - d[m - 1]) / (2.0 * dt)
                };
            }
            d = next;
        }
        total += trap(&d);
    }
    total
}

/// Build the explicit adjoint family p^j = e^{μ_j(T-t)}φ_j,
/// q^j = (1/μ_j) e^{μ_j(T-t)}φ_j (valid for M ≡ 1) and measure both sides of
/// the observability-type inequality with discrete norms.
pub fn sharpness_experiment(
    grid: &Grid1D,
    mesh: &TimeMesh,
    s_list: &[f64],
    j_list: &[usize],
) -> Result<SharpnessSummary> {
    let spec = DirichletSpectrum::new(*grid);
    let mut records = Vec::with_capacity(j_list.len());
    let mut margin = f64::INFINITY;
    for &j in j_list {
        if j == 0 || j > grid.n / 4 {
            return Err(MemwaveError::ModeUnresolvable { j, n: grid.n });
        }
        let lambda = spec.lambda_cont[j - 1];
        let root = solve_mu(lambda);
        let mu = root.mu;
        let e0 = (mu * mesh.t_end).exp();
        // ‖φ_j‖_{L²}=1, ‖φ_j‖²_{H¹}=λ_j spectrally.
        let lhs = e0 * e0 * (lambda + mu * mu + 1.0 / (mu * mu));
        margin = margin.min(lhs - lambda * lambda / 36.0);

        let c: Vec<f64> =
            (0..=mesh.n_t).map(|m| (mu * (mesh.t_end - mesh.t(m))).exp()).collect();
        let mut rhs_s = Vec::with_capacity(s_list.len());
        let mut ratio = Vec::with_capacity(s_list.len());
        for &s in s_list {
            let r = hs_q_norm_sq(&c, lambda, s, mesh.dt);
            rhs_s.push(r);
            ratio.push(lhs / r);
        }
        records.push(SharpnessRecord { j, lambda, mu, lhs, rhs_s, ratio });
    }

    // Least-squares slope of log(ratio) vs log(λ) per s.
    let mut slopes = Vec::with_capacity(s_list.len());
    for (si, _) in s_list.iter().enumerate() {
        let xs: Vec<f64> = records.iter().map(|r| r.lambda.ln()).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.ratio[si].ln()).collect();
        let nf = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        slopes.push(num / den);
    }
    Ok(SharpnessSummary { s_list: s_list.to_vec(), records, slopes, lower_bound_margin: margin })
}

/// Moment analysis report for the kernel (s+1)^t.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub k: usize,
    pub moments: Vec<f64>,
    pub sigma_min: f64,
    /// Norm of the minimum-norm least-squares η fitting zero moments.
    pub ls_norm: f64,
}

/// Gauss–Legendre 4-point nodes/weights on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_W: [f64; 4] = [
    0.34785484513745385,
    0.6521451548625461,
    0.6521451548625461,
    0.34785484513745385,
];

/// Assemble the K×(n_t+1) moment matrix Φ[k][j] = ∫_1^{T+1} s^{k+T} hat_j(s-1) ds
/// over the piecewise-linear nodal basis, composite GL4 per mesh cell.
pub fn moment_matrix(t_end: f64, n_t: usize, k_count: usize) -> DMatrix<f64> {
    let dt = t_end / n_t as f64;
    let mut phi = DMatrix::<f64>::zeros(k_count, n_t + 1);
    for cell in 0..n_t {
        let t0 = dt * cell as f64;
        for (gx, gw) in GL4_X.iter().zip(&GL4_W) {
            let t = t0 + 0.5 * dt * (gx + 1.0);
            let wq = 0.5 * dt * gw;
            let s = t + 1.0;
            let frac = (t - t0) / dt;
            // hat_cell contributes (1 - frac), hat_{cell+1} contributes frac.
            for k in 0..k_count {
                let val = s.powf(k as f64 + t_end) * wq;
                phi[(k, cell)] += val * (1.0 - frac);
                phi[(k, cell + 1)] += val * frac;
            }
        }
    }
    phi
}

/// Moments of a sampled η plus the SVD diagnostics of the moment matrix.
/// Rows are normalized before the SVD so the huge dynamic range of s^{k+T}
/// does not swamp the singular spectrum; the raw moments are reported
/// unnormalized.
pub fn muntz_moments(eta: &[f64], t_end: f64, k_count: usize) -> MomentReport {
    assert!(k_count >= 1);
    let n_t = eta.len() - 1;
    let phi = moment_matrix(t_end, n_t, k_count);
    let moments: Vec<f64> = (0..k_count)
        .map(|k| (0..=n_t).map(|j| phi[(k, j)] * eta[j]).sum())
        .collect();

    let mut scaled = phi.clone();
    for k in 0..k_count {
        let norm = scaled.row(k).norm();
        if norm > 0.0 {
            let mut row = scaled.row_mut(k);
            row /= norm;
        }
    }
    let svd = scaled.clone().svd(true, true);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    // Minimum-norm least-squares solution of Φη = 0 via the truncated
    // pseudo-inverse; annihilating all moments forces η to (numerical) zero.
    let zero_rhs = nalgebra::DVector::<f64>::zeros(k_count);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let ls = svd
        .solve(&zero_rhs, 1e-12 * sigma_max)
        .expect("svd solve with computed factors");
    MomentReport { k: k_count, moments, sigma_min, ls_norm: ls.norm() }
}

/// Fit η from a target moment vector by the truncated pseudo-inverse of the
/// row-normalized moment matrix (the same normalization is applied to the
/// target).
pub fn moment_fit(target: &[f64], t_end: f64, n_t: usize) -> Vec<f64> {
    let k_count = target.len();
    let phi = moment_matrix(t_end, n_t, k_count);
    let mut scaled = phi.clone();
    let mut rhs = nalgebra::DVector::<f64>::from_column_slice(target);
    for k in 0..k_count {
        let norm = scaled.row(k).norm();
        if norm > 0.0 {
            let mut row = scaled.row_mut(k);
            row /= norm;
            rhs[k] /= norm;
        }
    }
    let svd = scaled.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let sol = svd.solve(&rhs, 1e-12 * sigma_max).expect("svd solve with computed factors");
    sol.iter().cloned().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RestReport {
    pub pass: bool,
    pub tol: f64,
    pub max_y: f64,
    pub max_yt: f64,
}

/// Extend a controlled run past the horizon with u = 0 and certify that it
/// stays at rest: max over (T, 2T] of ‖y‖ + ‖y_t‖ ≤ tol.
pub fn rest_certificate(
    k: &MemoryKernel,
    grid: &Grid1D,
    mesh: &TimeMesh,
    controlled: &PrimalState,
    tol: f64,
) -> Result<RestReport> {
    let ext = extend_past_t(k, grid, mesh, controlled, ExtensionMode::Multiplicative)?;
    let mut max_y = 0.0f64;
    let mut max_yt = 0.0f64;
    for m in 1..=mesh.n_t {
        max_y = max_y.max(grid.norm(&ext.y[m]));
        max_yt = max_yt.max(grid.norm(&ext.yt[m]));
    }
    Ok(RestReport { pass: max_y + max_yt <= tol, tol, max_y, max_yt })
}
