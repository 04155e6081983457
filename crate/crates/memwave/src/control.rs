//! HUM control synthesis: the duality Gramian built from the exact
//! transpose, conjugate gradient in filtered modal coordinates, the
//! quadratic functional J with its gradient, and a filtered-subspace
//! estimator for the observability constant.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::{ControlField, CoupledSystem, ForwardRun, SpaceTimeField, TransposeRun};
use crate::geometry::DirichletSpectrum;
use crate::Result;

/// What the adjoint is observed through: the sharp indicator of O(t) or the
/// smooth weight ρ (the synthesized source is then ρ²p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObservationMode {
    Indicator,
    WeightRho,
}

/// The HUM duality operator Λ on filtered final data ξ = (p0, p1, q0),
/// expanded over the first `j_max` Dirichlet modes per block. With
/// `include_memory = false` the q0 block is dropped and the memory target
/// is left uncontrolled (partial-target variant).
pub struct GramianOperator {
    pub sys: CoupledSystem,
    pub spectrum: DirichletSpectrum,
    pub j_max: usize,
    pub include_memory: bool,
}

impl GramianOperator {
    pub fn new(sys: CoupledSystem, spectrum: DirichletSpectrum, j_max: usize) -> Self {
        assert!(j_max >= 1 && j_max <= spectrum.grid.n);
        GramianOperator { sys, spectrum, j_max, include_memory: true }
    }

    pub fn dim(&self) -> usize {
        self.j_max * if self.include_memory { 3 } else { 2 }
    }

    /// Expand filtered coordinates into (p0, p1, q0) grid fields.
    pub fn synth_triple(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let j = self.j_max;
        let p0 = self.spectrum.synth(&xi[0..j]);
        let p1 = self.spectrum.synth(&xi[j..2 * j]);
        let q0 = if self.include_memory {
            self.spectrum.synth(&xi[2 * j..3 * j])
        } else {
            vec![0.0; self.spectrum.grid.n]
        };
        (p0, p1, q0)
    }

    /// Filtered terminal pairing vector of a forward run: the coordinates of
    /// ξ ↦ (p0,V) - (p1,y(T)) - M(T,0)(q0,z(T)).
    pub fn pairvec(&self, run: &ForwardRun) -> Vec<f64> {
        let j = self.j_max;
        let cv = self.spectrum.coeffs(&run.v_term);
        let cy = self.spectrum.coeffs(run.y.last().unwrap());
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&cv[0..j]);
        out.extend(cy[0..j].iter().map(|c| -c));
        if self.include_memory {
            let cz = self.spectrum.coeffs(run.z.last().unwrap());
            out.extend(cz[0..j].iter().map(|c| -self.sys.m_t0 * c));
        }
        out
    }

    /// The observation of an adjoint trajectory: mask·p, which is also the
    /// synthesized control.
    pub fn observation(&self, run: &TransposeRun) -> SpaceTimeField {
        run.p
            .iter()
            .zip(&self.sys.mask)
            .map(|(ps, ms)| ps.iter().zip(ms).map(|(p, m)| m * p).collect())
            .collect()
    }

    /// Space-time L² inner product h·dt·Σ (trapezoid in t).
    pub fn st_inner(&self, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
        let nt = self.sys.mesh.n_t;
        let mut acc = 0.0;
        for m in 0..=nt {
            let tw = if m == 0 || m == nt { 0.5 } else { 1.0 };
            let dot: f64 = a[m].iter().zip(&b[m]).map(|(x, y)| x * y).sum();
            acc += tw * dot;
        }
        acc * self.sys.grid.h * self.sys.mesh.dt
    }

    /// Apply Λ: adjoint solve, observe, control the primal from rest, pair.
    pub fn apply(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let (p0, p1, q0) = self.synth_triple(xi);
        let trans = self.sys.transpose(&p0, &p1, &q0)?;
        let u = self.observation(&trans);
        let n = self.sys.grid.n;
        let zero = vec![0.0; n];
        let run = self.sys.forward(&zero, &zero, &zero, Some(&u))?;
        Ok(self.pairvec(&run))
    }
}

/// Conjugate-gradient settings for the HUM solve.
#[derive(Debug, Clone, Serialize)]
pub struct CgConfig {
    pub max_iter: usize,
    pub tol_rel: f64,
    pub tikhonov_eps: f64,
    pub j_max: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig { max_iter: 300, tol_rel: 1e-10, tikhonov_eps: 0.0, j_max: 16 }
    }
}

/// Terminal norms of the three null-control targets: ‖y(T)‖_{L²},
/// ‖y_t(T)‖_{H^{-1}}, ‖∫₀ᵀ M(T,s) y ds‖_{L²}.
#[derive(Debug, Clone, Serialize)]
pub struct TerminalNorms {
    pub y: f64,
    pub yt: f64,
    pub memory: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlReport {
    pub terminal: TerminalNorms,
    pub free_terminal: TerminalNorms,
    pub control_norm: f64,
    pub cg_iters: usize,
    pub residuals: Vec<f64>,
    pub stagnated: bool,
    pub obs_constant: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn terminal_norms(g: &GramianOperator, run: &ForwardRun) -> TerminalNorms {
    let grid = &g.sys.grid;
    TerminalNorms {
        y: grid.norm(run.y.last().unwrap()),
        yt: g.spectrum.norm_s(&run.v_term, -1.0),
        memory: g.sys.m_t0.abs() * grid.norm(run.z.last().unwrap()),
    }
}

/// HUM synthesis: CG on (Λ + εI)ξ = -(free terminal pairing), then the
/// control u = mask·p̂ and an end-to-end re-simulation for honest norms.
/// Stagnation (expected on MGCC-violating regions) is reported in the
/// `stagnated` flag rather than an error so failure runs stay comparable.
pub fn hum_solve(
    g: &GramianOperator,
    y0: &[f64],
    y1: &[f64],
    z0: &[f64],
    cfg: &CgConfig,
) -> Result<(ControlField, ControlReport)> {
    let free = g.sys.forward(y0, y1, z0, None)?;
    let b: Vec<f64> = g.pairvec(&free).iter().map(|v| -v).collect();
    let dim = g.dim();
    let bnorm = dot(&b, &b).sqrt().max(f64::MIN_POSITIVE);

    let apply_reg = |x: &[f64]| -> Result<Vec<f64>> {
        let mut ax = g.apply(x)?;
        if cfg.tikhonov_eps > 0.0 {
            for (a, v) in ax.iter_mut().zip(x) {
                *a += cfg.tikhonov_eps * v;
            }
        }
        Ok(ax)
    };

    // Block-Jacobi preconditioner: one small block of Λ per filtered mode,
    // coupling the (p0, p1, q0) components of that mode. Blocks are inverted
    // through an eigenvalue decomposition with a floor so unobservable
    // directions do not amplify round-off.
    let blocks_per_mode = if g.include_memory { 3 } else { 2 };
    let j_max = g.j_max;
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(j_max);
    let mut max_eig = f64::MIN_POSITIVE;
    for j in 0..j_max {
        let idx: Vec<usize> = (0..blocks_per_mode).map(|c| j + c * g.j_max).collect();
        let mut fields = Vec::with_capacity(blocks_per_mode);
        for &a in &idx {
            let mut e = vec![0.0; dim];
            e[a] = 1.0;
            let (p0, p1, q0) = g.synth_triple(&e);
            let trans = g.sys.transpose(&p0, &p1, &q0)?;
            fields.push(g.observation(&trans));
        }
        let mut b = DMatrix::<f64>::zeros(blocks_per_mode, blocks_per_mode);
        for a in 0..blocks_per_mode {
            for c in a..blocks_per_mode {
                let v = g.st_inner(&fields[a], &fields[c])
                    + if a == c { cfg.tikhonov_eps } else { 0.0 };
                b[(a, c)] = v;
                b[(c, a)] = v;
            }
        }
        max_eig = max_eig.max(b.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max));
        blocks.push(b);
    }
    let floor = 1e-14 * max_eig;
    let inv_blocks: Vec<DMatrix<f64>> = blocks
        .into_iter()
        .map(|b| {
            let eig = b.symmetric_eigen();
            let mut inv = DMatrix::<f64>::zeros(blocks_per_mode, blocks_per_mode);
            for k in 0..blocks_per_mode {
                let l = eig.eigenvalues[k].max(floor);
                let v = eig.eigenvectors.column(k);
                for a in 0..blocks_per_mode {
                    for c in 0..blocks_per_mode {
                        inv[(a, c)] += v[a] * v[c] / l;
                    }
                }
            }
            inv
        })
        .collect();
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut z = vec![0.0; dim];
        for j in 0..j_max {
            let inv = &inv_blocks[j];
            for a in 0..blocks_per_mode {
                let mut acc = 0.0;
                for c in 0..blocks_per_mode {
                    acc += inv[(a, c)] * r[j + c * g.j_max];
                }
                z[j + a * g.j_max] = acc;
            }
        }
        z
    };

    let mut x = vec![0.0; dim];
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residuals = vec![dot(&r, &r).sqrt() / bnorm];
    let mut stagnated = false;
    let mut iters = 0;
    // The residual is non-monotonic on ill-conditioned Gramians; track the
    // best iterate and call the run stagnated only when the best residual
    // has not improved over a long window.
    let mut best_x = x.clone();
    let mut best_res = residuals[0];
    let mut best_iter = 0usize;
    for it in 0..cfg.max_iter {
        if residuals.last().unwrap() <= &cfg.tol_rel {
            break;
        }
        let ap = apply_reg(&p)?;
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            stagnated = true;
            break;
        }
        let alpha = rz / pap;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residuals.push(dot(&r, &r).sqrt() / bnorm);
        iters = it + 1;
        if *residuals.last().unwrap() < best_res * (1.0 - 1e-6) {
            best_res = *residuals.last().unwrap();
            best_x.copy_from_slice(&x);
            best_iter = iters;
        } else if iters >= best_iter + 60 {
            stagnated = true;
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
    }
    if best_res < *residuals.last().unwrap() {
        x.copy_from_slice(&best_x);
    }

    let (p0, p1, q0) = g.synth_triple(&x);
    let trans = g.sys.transpose(&p0, &p1, &q0)?;
    let u = g.observation(&trans);
    let controlled = g.sys.forward(y0, y1, z0, Some(&u))?;
    let report = ControlReport {
        terminal: terminal_norms(g, &controlled),
        free_terminal: terminal_norms(g, &free),
        control_norm: g.st_inner(&u, &u).sqrt(),
        cg_iters: iters,
        residuals,
        stagnated,
        obs_constant: None,
    };
    Ok((ControlField { u }, report))
}

/// Which quadratic form the functional J uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JMode {
    /// ½ ∫_O |(∂_tt + Δ_h)(mask·p)|².
    H2Weighted,
    /// ½ ∫_O |mask·p|² (the shifted form the CG operator realizes).
    L2Shifted,
}

/// (∂_tt + Δ_h) applied to a space-time field, one-sided second order at the
/// temporal endpoints.
fn wave_residual(g: &GramianOperator, w: &SpaceTimeField) -> SpaceTimeField {
    let nt = g.sys.mesh.n_t;
    let n = g.sys.grid.n;
    let dt = g.sys.mesh.dt;
    let mut out = vec![vec![0.0; n]; nt + 1];
    for m in 0..=nt {
        let lap = g.sys.grid.laplacian(&w[m]);
        let dtt: Vec<f64> = (0..n)
            .map(|i| {
                if m == 0 {
                    (2.0 * w[0][i] - 5.0 * w[1][i] + 4.0 * w[2][i] - w[3][i]) / (dt * dt)
                } else if m == nt {
                    (2.0 * w[nt][i] - 5.0 * w[nt - 1][i] + 4.0 * w[nt - 2][i] - w[nt - 3][i])
                        / (dt * dt)
                } else {
                    (w[m + 1][i] - 2.0 * w[m][i] + w[m - 1][i]) / (dt * dt)
                }
            })
            .collect();
        for i in 0..n {
            out[m][i] = dtt[i] + lap[i];
        }
    }
    out
}

struct JPieces {
    quad_field: SpaceTimeField,
    linear: f64,
}

fn j_pieces(
    g: &GramianOperator,
    xi: &[f64],
    targets: (&[f64], &[f64], &[f64]),
    mode: JMode,
) -> Result<JPieces> {
    let (p0, p1, q0) = g.synth_triple(xi);
    let trans = g.sys.transpose(&p0, &p1, &q0)?;
    let quad_field = match mode {
        JMode::L2Shifted => g.observation(&trans),
        JMode::H2Weighted => {
            let weighted = g.observation(&trans);
            let res = wave_residual(g, &weighted);
            // Restrict to the support of the mask.
            res.iter()
                .zip(&g.sys.mask)
                .map(|(rs, ms)| {
                    rs.iter()
                        .zip(ms)
                        .map(|(r, m)| if *m > 0.0 { *r } else { 0.0 })
                        .collect()
                })
                .collect()
        }
    };
    // The linear part is the exact dual pairing of the adjoint run against
    // the target data, via the transpose cotangents.
    let linear = dot(&trans.a_hat, targets.0)
        + dot(&trans.b_hat, targets.1)
        + if g.include_memory { dot(&trans.c_hat, targets.2) } else { 0.0 };
    Ok(JPieces { quad_field, linear })
}

/// Evaluate the HUM functional J(ξ) for the given target data.
pub fn evaluate_j(
    g: &GramianOperator,
    xi: &[f64],
    targets: (&[f64], &[f64], &[f64]),
    mode: JMode,
) -> Result<f64> {
    let pieces = j_pieces(g, xi, targets, mode)?;
    Ok(0.5 * g.st_inner(&pieces.quad_field, &pieces.quad_field) + pieces.linear)
}

/// Exact directional derivative dJ(ξ)[η].
pub fn evaluate_j_directional(
    g: &GramianOperator,
    xi: &[f64],
    eta: &[f64],
    targets: (&[f64], &[f64], &[f64]),
    mode: JMode,
) -> Result<f64> {
    let at_xi = j_pieces(g, xi, targets, mode)?;
    let at_eta = j_pieces(g, eta, targets, mode)?;
    Ok(g.st_inner(&at_xi.quad_field, &at_eta.quad_field) + at_eta.linear)
}

/// Lower-bound estimate of the observability constant on the filtered
/// subspace: the largest generalized Rayleigh quotient of
/// (‖p(0)‖²_{-1} + ‖p_t(0)‖²_{V'} + ‖q(0)‖²_{V'}) / ‖observation‖²,
/// found by power iteration on the assembled pair of quadratic forms.
pub fn estimate_observability_constant(g: &GramianOperator, seed: u64) -> Result<f64> {
    let dim = g.dim();
    let n = g.sys.grid.n;
    let h = g.sys.grid.h;
    let nmodes = n;

    // Both quadratic forms are kept in factored form: the constant is
    // max ‖G x‖² / ‖F x‖² over the filtered subspace, where F stacks the
    // quadrature-weighted observation trajectories and G the scaled spectral
    // coefficients of the recovered initial data. Assembling FᵀF instead
    // would destroy the exponentially small observation norms of
    // non-observable regions by cancellation; small singular values of the
    // factors themselves survive to absolute precision eps·σ_max, so the
    // factored route resolves constants far beyond the Gramian route.
    let nt = g.sys.mesh.n_t;
    let w_scale = (g.sys.grid.h * g.sys.mesh.dt).sqrt();
    let _ = seed; // deterministic direct solve; kept for interface stability
    let mut f = DMatrix::<f64>::zeros((nt + 1) * n, dim);
    let mut gmat = DMatrix::<f64>::zeros(3 * nmodes, dim);
    for a in 0..dim {
        let mut e = vec![0.0; dim];
        e[a] = 1.0;
        let (p0, p1, q0) = g.synth_triple(&e);
        let trans = g.sys.transpose(&p0, &p1, &q0)?;
        let obs = g.observation(&trans);
        for m in 0..=nt {
            let tw = if m == 0 || m == nt { 0.5f64 } else { 1.0 };
            let row_w = w_scale * tw.sqrt();
            for i in 0..n {
                f[(m * n + i, a)] = row_w * obs[m][i];
            }
        }
        let p_init = trans.p[0].clone();
        let pt_init: Vec<f64> = trans.a_hat.iter().map(|v| -v / h).collect();
        let q_init = g.sys.q_from_transpose_slice(&trans, 0);
        let cp = g.spectrum.coeffs(&p_init);
        let ct = g.spectrum.coeffs(&pt_init);
        let cq = g.spectrum.coeffs(&q_init);
        for j in 0..nmodes {
            let l = g.spectrum.lambda_disc[j];
            gmat[(j, a)] = cp[j] / l.sqrt();
            gmat[(nmodes + j, a)] = ct[j] / l;
            gmat[(2 * nmodes + j, a)] = cq[j] / l;
        }
    }

    // Whiten the data norm: G = Q·R with R invertible on the filtered
    // subspace, then the quotient becomes ‖w‖²/‖F R⁻¹ w‖².
    let r_g = gmat.qr().unpack_r();
    let m_t = r_g
        .transpose()
        .solve_lower_triangular(&f.transpose())
        .ok_or_else(|| {
            crate::MemwaveError::Degenerate("data-norm factor is singular on the filtered subspace".into())
        })?;
    // σ_min of M = (F R⁻¹); reduce the tall factor by QR first.
    let r_m = m_t.transpose().qr().unpack_r();
    let sv = r_m.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax <= 0.0 {
        return Err(crate::MemwaveError::Degenerate(
            "observation factor is singular on the filtered subspace".into(),
        ));
    }
    // Singular values below eps·σ_max are indistinguishable from round-off;
    // clamping keeps the result a finite lower bound of the constant.
    let floor = f64::EPSILON * smax;
    let smin = sv.iter().cloned().fold(f64::MAX, f64::min).max(floor);
    Ok(1.0 / (smin * smin))
}

