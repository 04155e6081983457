//! Time-stepping solvers: leapfrog for the wave part, trapezoidal quadrature
//! for every memory integral, and an exact algorithmic transpose of the
//! coupled one-step map that serves as the adjoint solver. The transpose is
//! built statement-by-statement from the forward scheme, so the discrete
//! duality pairing holds to round-off — the property the HUM Gramian needs.

use serde::Serialize;

use crate::geometry::Grid1D;
use crate::kernel::{DerivedKernels, KernelKind, MemoryKernel};
use crate::{MemwaveError, Result};

/// A space-time field: one spatial slice per mesh node, times 0..=n_t.
pub type SpaceTimeField = Vec<Vec<f64>>;

/// Uniform time mesh on [0, T].
#[derive(Debug, Clone, Copy)]
pub struct TimeMesh {
    pub t_end: f64,
    pub n_t: usize,
    pub dt: f64,
}

impl TimeMesh {
    pub fn new(t_end: f64, n_t: usize) -> Self {
        assert!(n_t >= 2 && t_end > 0.0);
        TimeMesh { t_end, n_t, dt: t_end / n_t as f64 }
    }

    pub fn t(&self, m: usize) -> f64 {
        self.dt * m as f64
    }

    pub fn check_cfl(&self, h: f64, cfl: f64) -> Result<()> {
        let cfl = cfl.min(1.0);
        if self.dt > cfl * h * (1.0 + 1e-12) {
            return Err(MemwaveError::CflViolation { dt: self.dt, cfl, limit: cfl * h });
        }
        Ok(())
    }
}

/// Primal trajectory (y, y_t, z) sampled on the mesh.
#[derive(Debug, Clone)]
pub struct PrimalState {
    pub times: Vec<f64>,
    pub y: SpaceTimeField,
    pub yt: SpaceTimeField,
    pub z: SpaceTimeField,
}

/// Adjoint trajectory (p, p_t, q) sampled on the mesh.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub times: Vec<f64>,
    pub p: SpaceTimeField,
    pub pt: SpaceTimeField,
    pub q: SpaceTimeField,
}

/// A control as a space-time field; the solvers multiply it by the support
/// mask, so it acts only inside O(t).
#[derive(Debug, Clone)]
pub struct ControlField {
    pub u: SpaceTimeField,
}

impl ControlField {
    pub fn zero(n_t: usize, n: usize) -> Self {
        ControlField { u: vec![vec![0.0; n]; n_t + 1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AdjointVariant {
    Coupled,
    ScalarMemory,
}

fn axpy(out: &mut [f64], a: f64, v: &[f64]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o += a * x;
    }
}

fn check_finite(v: &[f64], step: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MemwaveError::NonFiniteState { step });
    }
    Ok(())
}

/// Trapezoid weight for node k on 0..=m.
fn trap_w(k: usize, m: usize) -> f64 {
    if m == 0 {
        0.0
    } else if k == 0 || k == m {
        0.5
    } else {
        1.0
    }
}

/// Trapezoid weight for node k on m..=nt.
fn trap_w_rev(k: usize, m: usize, nt: usize) -> f64 {
    if m == nt {
        0.0
    } else if k == m || k == nt {
        0.5
    } else {
        1.0
    }
}

// ---------------------------------------------------------------------------
// Coupled system: y_tt = Δy - M(t,0) z + mask·u,
//                 z_t  = M1(t,t) y + ∫₀ᵗ M1_t(t,s) y(s) ds.
// ---------------------------------------------------------------------------

/// Precomputed tables and mask for the coupled solver and its transpose.
pub struct CoupledSystem {
    pub grid: Grid1D,
    pub mesh: TimeMesh,
    /// mask[m][i]: χ_O or ρ at (t_m, x_i).
    pub mask: SpaceTimeField,
    /// a[m] = M(t_m, 0).
    a: Vec<f64>,
    /// b[m] = M1(t_m, t_m).
    b: Vec<f64>,
    /// c[m][k] = M1_t(t_m, t_k), k <= m; None when identically zero.
    c: Option<Vec<Vec<f64>>>,
    /// mt[m] = M(T, t_m).
    mt: Vec<f64>,
    /// M(T, 0).
    pub m_t0: f64,
}

/// Raw output of a forward coupled run.
pub struct ForwardRun {
    pub y: SpaceTimeField,
    pub z: SpaceTimeField,
    /// Second-order velocity at t = T (ghost-step centered difference).
    pub v_term: Vec<f64>,
}

/// Raw output of the transposed (adjoint) run. `p` is the adjoint wave
/// trajectory and `w` the memory adjoint; the hat vectors are the exact
/// cotangents of the forward inputs, i.e. the discrete dual pairing reads
///   (p0,V) - (p1,y(T)) - M(T,0)(q0,z(T))
///     = <a_hat,y0> + <b_hat,y1> + <c_hat,z0> + Σ_m <u_hat[m], u[m]>.
pub struct TransposeRun {
    pub p: SpaceTimeField,
    /// w[m] ≈ M(T,0) q0 + ∫_{t_m}^T M(s,0) p(s) ds.
    pub w: SpaceTimeField,
    pub a_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub u_hat: SpaceTimeField,
}

impl CoupledSystem {
    pub fn new(
        dk: &DerivedKernels,
        grid: Grid1D,
        mesh: TimeMesh,
        mask: SpaceTimeField,
        cfl: f64,
    ) -> Result<Self> {
        mesh.check_cfl(grid.h, cfl)?;
        let k = dk.kernel();
        let nt = mesh.n_t;
        let a: Vec<f64> = (0..=nt).map(|m| k.eval(mesh.t(m), 0.0)).collect();
        let b: Vec<f64> = (0..=nt).map(|m| dk.m1(mesh.t(m), mesh.t(m))).collect();
        let mt: Vec<f64> = (0..=nt).map(|m| k.eval(k.horizon, mesh.t(m))).collect();
        let c = match k.kind {
            KernelKind::Constant { .. }
            | KernelKind::Exponential { .. }
            | KernelKind::Separable { .. } => None,
            _ => Some(
                (0..=nt)
                    .map(|m| (0..=m).map(|kk| dk.m1_t(mesh.t(m), mesh.t(kk))).collect())
                    .collect(),
            ),
        };
        Ok(CoupledSystem { grid, mesh, mask, a, b, c, mt, m_t0: k.eval(k.horizon, 0.0) })
    }

    /// Full-pass mask helper for runs that never use a control.
    pub fn ones_mask(grid: &Grid1D, mesh: &TimeMesh) -> SpaceTimeField {
        vec![vec![1.0; grid.n]; mesh.n_t + 1]
    }

    fn source(&self, m: usize, u: Option<&SpaceTimeField>) -> Option<Vec<f64>> {
        u.map(|uu| self.mask[m].iter().zip(&uu[m]).map(|(w, x)| w * x).collect())
    }

    /// g^m = M1(t_m,t_m) y^m + trapezoid of ∫₀^{t_m} M1_t(t_m,s) y ds.
    fn g_slice(&self, m: usize, y: &SpaceTimeField) -> Vec<f64> {
        let mut g = vec![0.0; self.grid.n];
        axpy(&mut g, self.b[m], &y[m]);
        if let Some(c) = &self.c {
            let dt = self.mesh.dt;
            for k in 0..=m {
                let wgt = dt * trap_w(k, m) * c[m][k];
                if wgt != 0.0 {
                    axpy(&mut g, wgt, &y[k]);
                }
            }
        }
        g
    }

    pub fn forward(
        &self,
        y0: &[f64],
        y1: &[f64],
        z0: &[f64],
        u: Option<&SpaceTimeField>,
    ) -> Result<ForwardRun> {
        let n = self.grid.n;
        let nt = self.mesh.n_t;
        let dt = self.mesh.dt;
        let mut y: SpaceTimeField = Vec::with_capacity(nt + 1);
        let mut z: SpaceTimeField = Vec::with_capacity(nt + 1);
        let mut g: SpaceTimeField = Vec::with_capacity(nt + 1);
        y.push(y0.to_vec());
        z.push(z0.to_vec());
        g.push(self.g_slice(0, &y));

        // Startup: y^1 = y^0 + dt y_1 + dt²/2 (Δy^0 - M(0,0)z^0 + src^0).
        let lap0 = self.grid.laplacian(&y[0]);
        let src0 = self.source(0, u);
        let mut y1v = vec![0.0; n];
        for i in 0..n {
            let s = src0.as_ref().map_or(0.0, |s| s[i]);
            y1v[i] = y[0][i] + dt * y1[i] + 0.5 * dt * dt * (lap0[i] - self.a[0] * z[0][i] + s);
        }
        y.push(y1v);
        g.push(self.g_slice(1, &y));
        let mut z1v = vec![0.0; n];
        for i in 0..n {
            z1v[i] = z[0][i] + 0.5 * dt * (g[0][i] + g[1][i]);
        }
        z.push(z1v);

        for m in 1..nt {
            let lap = self.grid.laplacian(&y[m]);
            let src = self.source(m, u);
            let mut ynext = vec![0.0; n];
            for i in 0..n {
                let s = src.as_ref().map_or(0.0, |s| s[i]);
                ynext[i] = 2.0 * y[m][i] - y[m - 1][i]
                    + dt * dt * (lap[i] - self.a[m] * z[m][i] + s);
            }
            if m % 64 == 0 {
                check_finite(&ynext, m + 1)?;
            }
            y.push(ynext);
            g.push(self.g_slice(m + 1, &y));
            let mut znext = vec![0.0; n];
            for i in 0..n {
                znext[i] = z[m][i] + 0.5 * dt * (g[m][i] + g[m + 1][i]);
            }
            z.push(znext);
        }
        check_finite(&y[nt], nt)?;

        let lap_n = self.grid.laplacian(&y[nt]);
        let src_n = self.source(nt, u);
        let mut v_term = vec![0.0; n];
        for i in 0..n {
            let s = src_n.as_ref().map_or(0.0, |s| s[i]);
            v_term[i] = (y[nt][i] - y[nt - 1][i]) / dt
                + 0.5 * dt * (lap_n[i] - self.a[nt] * z[nt][i] + s);
        }
        Ok(ForwardRun { y, z, v_term })
    }

    /// Exact transpose of `forward`, seeded with the cotangent of the
    /// terminal pairing P = (p0,V) - (p1,y^N) - M(T,0)(q0,z^N).
    pub fn transpose(&self, p0: &[f64], p1: &[f64], q0: &[f64]) -> Result<TransposeRun> {
        let n = self.grid.n;
        let nt = self.mesh.n_t;
        let dt = self.mesh.dt;
        let h = self.grid.h;
        let mut yh: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        let mut zh: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        let mut gh: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        let mut uh: SpaceTimeField = vec![vec![0.0; n]; nt + 1];

        let lap_p0 = self.grid.laplacian(p0);
        for i in 0..n {
            yh[nt][i] = h * (p0[i] / dt + 0.5 * dt * lap_p0[i] - p1[i]);
            yh[nt - 1][i] = -h * p0[i] / dt;
            zh[nt][i] = -h * (self.m_t0 * q0[i] + 0.5 * dt * self.a[nt] * p0[i]);
            uh[nt][i] = 0.5 * h * dt * self.mask[nt][i] * p0[i];
        }

        // Reverse the time loop; statements within a step run in reverse
        // program order: z-update, then g-assembly, then leapfrog.
        for m in (1..nt).rev() {
            {
                let (zh_head, zh_tail) = zh.split_at_mut(m + 1);
                let znext = &zh_tail[0];
                let (gh_head, gh_tail) = gh.split_at_mut(m + 1);
                for i in 0..n {
                    zh_head[m][i] += znext[i];
                    gh_head[m][i] += 0.5 * dt * znext[i];
                    gh_tail[0][i] += 0.5 * dt * znext[i];
                }
            }
            {
                let (yh_head, yh_tail) = yh.split_at_mut(m + 1);
                axpy(&mut yh_tail[0], self.b[m + 1], &gh[m + 1]);
                if let Some(c) = &self.c {
                    for k in 0..=m {
                        let wgt = dt * trap_w(k, m + 1) * c[m + 1][k];
                        if wgt != 0.0 {
                            axpy(&mut yh_head[k], wgt, &gh[m + 1]);
                        }
                    }
                    let wgt = dt * trap_w(m + 1, m + 1) * c[m + 1][m + 1];
                    if wgt != 0.0 {
                        axpy(&mut yh_tail[0], wgt, &gh[m + 1]);
                    }
                }
            }
            let lap = self.grid.laplacian(&yh[m + 1]);
            {
                let (yh_head, yh_tail) = yh.split_at_mut(m + 1);
                let ynext = &yh_tail[0];
                for i in 0..n {
                    yh_head[m][i] += 2.0 * ynext[i] + dt * dt * lap[i];
                    yh_head[m - 1][i] -= ynext[i];
                    zh[m][i] -= dt * dt * self.a[m] * ynext[i];
                    uh[m][i] += dt * dt * self.mask[m][i] * ynext[i];
                }
            }
        }

        // Reverse of the startup step.
        {
            let (zh_head, zh_tail) = zh.split_at_mut(1);
            let z1 = &zh_tail[0];
            let (gh_head, gh_tail) = gh.split_at_mut(1);
            for i in 0..n {
                zh_head[0][i] += z1[i];
                gh_head[0][i] += 0.5 * dt * z1[i];
                gh_tail[0][i] += 0.5 * dt * z1[i];
            }
        }
        {
            let mut diag = self.b[1];
            if let Some(c) = &self.c {
                diag += 0.5 * dt * c[1][1];
                let (yh_head, _) = yh.split_at_mut(1);
                axpy(&mut yh_head[0], 0.5 * dt * c[1][0], &gh[1]);
            }
            let (_, yh_tail) = yh.split_at_mut(1);
            axpy(&mut yh_tail[0], diag, &gh[1]);
        }
        let lap1 = self.grid.laplacian(&yh[1]);
        let mut b_hat = vec![0.0; n];
        {
            let (yh_head, yh_tail) = yh.split_at_mut(1);
            let y1v = &yh_tail[0];
            for i in 0..n {
                yh_head[0][i] += y1v[i] + 0.5 * dt * dt * lap1[i];
                b_hat[i] = dt * y1v[i];
                zh[0][i] -= 0.5 * dt * dt * self.a[0] * y1v[i];
                uh[0][i] += 0.5 * dt * dt * self.mask[0][i] * y1v[i];
            }
        }
        {
            let (yh_head, _) = yh.split_at_mut(1);
            axpy(&mut yh_head[0], self.b[0], &gh[0]);
        }
        let a_hat = yh[0].clone();
        let c_hat = zh[0].clone();

        // Identify the adjoint trajectory: p(t_m) = (dt/h) ŷ^{m+1} solves a
        // second-order backward scheme for p_tt - Δp + M(T,t) q = 0.
        let mut p: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        for m in 0..nt {
            for i in 0..n {
                p[m][i] = dt / h * yh[m + 1][i];
            }
        }
        p[nt].copy_from_slice(p0);
        // Memory adjoint w(t_m) = M(T,0) q0 + trapezoid of ∫_{t_m}^T M(s,0)p;
        // the raw cotangent -ẑ/h carries a half-cell surplus (dt/2)M(t_m,0)p^m
        // that the identification removes. The startup step already uses the
        // half weight dt²/2, so ẑ⁰ is trapezoid-complete as is.
        let mut w: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        for m in 0..=nt {
            let corr = if m == 0 { 0.0 } else { 0.5 * dt * self.a[m] };
            for i in 0..n {
                w[m][i] = -zh[m][i] / h - corr * p[m][i];
            }
        }
        Ok(TransposeRun { p, w, a_hat, b_hat, c_hat, u_hat: uh })
    }

    /// Recover q at one time index from the transpose run via
    /// M(T,t) q(t) = M1(t,t) w(t) + ∫_t^T M1_t(s,t) w(s) ds.
    pub fn q_from_transpose_slice(&self, run: &TransposeRun, m: usize) -> Vec<f64> {
        let n = self.grid.n;
        let nt = self.mesh.n_t;
        let dt = self.mesh.dt;
        let mut r = vec![0.0; n];
        axpy(&mut r, self.b[m], &run.w[m]);
        if let Some(c) = &self.c {
            for k in m..=nt {
                let wgt = dt * trap_w_rev(k, m, nt) * c[k][m];
                if wgt != 0.0 {
                    axpy(&mut r, wgt, &run.w[k]);
                }
            }
        }
        for v in r.iter_mut() {
            *v /= self.mt[m];
        }
        r
    }

    /// Recover the full q trajectory from the transpose run.
    pub fn q_from_transpose(&self, run: &TransposeRun) -> SpaceTimeField {
        (0..=self.mesh.n_t).map(|m| self.q_from_transpose_slice(run, m)).collect()
    }

    /// Package a forward run as a primal state with second-order velocity
    /// stencils consistent with the scheme.
    pub fn to_primal_state(&self, run: &ForwardRun, u: Option<&SpaceTimeField>) -> PrimalState {
        let nt = self.mesh.n_t;
        let dt = self.mesh.dt;
        let n = self.grid.n;
        let mut yt: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        let lap0 = self.grid.laplacian(&run.y[0]);
        let src0 = self.source(0, u);
        for i in 0..n {
            let s = src0.as_ref().map_or(0.0, |s| s[i]);
            yt[0][i] = (run.y[1][i] - run.y[0][i]) / dt
                - 0.5 * dt * (lap0[i] - self.a[0] * run.z[0][i] + s);
        }
        for m in 1..nt {
            for i in 0..n {
                yt[m][i] = (run.y[m + 1][i] - run.y[m - 1][i]) / (2.0 * dt);
            }
        }
        yt[nt].copy_from_slice(&run.v_term);
        PrimalState {
            times: (0..=nt).map(|m| self.mesh.t(m)).collect(),
            y: run.y.clone(),
            yt,
            z: run.z.clone(),
        }
    }

    /// Package a transpose run as an adjoint state.
    pub fn to_adjoint_state(&self, run: &TransposeRun, p1: &[f64]) -> AdjointState {
        let nt = self.mesh.n_t;
        let dt = self.mesh.dt;
        let n = self.grid.n;
        let q = self.q_from_transpose(run);
        let mut pt: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
        for i in 0..n {
            pt[0][i] = (-3.0 * run.p[0][i] + 4.0 * run.p[1][i] - run.p[2][i]) / (2.0 * dt);
        }
        for m in 1..nt {
            for i in 0..n {
                pt[m][i] = (run.p[m + 1][i] - run.p[m - 1][i]) / (2.0 * dt);
            }
        }
        pt[nt].copy_from_slice(p1);
        AdjointState {
            times: (0..=nt).map(|m| self.mesh.t(m)).collect(),
            p: run.p.clone(),
            pt,
            q,
        }
    }
}

// ---------------------------------------------------------------------------
// Raw memory form: y_tt = Δy - ∫₀ᵗ M(t,s) y ds + mask·u.
// ---------------------------------------------------------------------------

/// Solve the memory wave equation in its raw integro-differential form.
/// The returned `z` field holds the raw memory integral ∫₀ᵗ M(t,s) y ds,
/// which relates to the coupled variable by z_raw(t) = M(t,0) z(t).
pub fn solve_primal_memory(
    k: &MemoryKernel,
    grid: &Grid1D,
    mesh: &TimeMesh,
    y0: &[f64],
    y1: &[f64],
    u: Option<(&SpaceTimeField, &SpaceTimeField)>,
    cfl: f64,
) -> Result<PrimalState> {
    mesh.check_cfl(grid.h, cfl)?;
    let n = grid.n;
    let nt = mesh.n_t;
    let dt = mesh.dt;
    let mm: Vec<Vec<f64>> =
        (0..=nt).map(|m| (0..=m).map(|kk| k.eval(mesh.t(m), mesh.t(kk))).collect()).collect();
    let src = |m: usize| -> Option<Vec<f64>> {
        u.map(|(mask, uu)| mask[m].iter().zip(&uu[m]).map(|(w, x)| w * x).collect())
    };
    let integral = |m: usize, y: &SpaceTimeField| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for kk in 0..=m {
            let wgt = dt * trap_w(kk, m) * mm[m][kk];
            if wgt != 0.0 {
                axpy(&mut out, wgt, &y[kk]);
            }
        }
        out
    };

    let mut y: SpaceTimeField = Vec::with_capacity(nt + 1);
    let mut z: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    y.push(y0.to_vec());
    let lap0 = grid.laplacian(&y[0]);
    let s0 = src(0);
    let mut y1v = vec![0.0; n];
    for i in 0..n {
        let s = s0.as_ref().map_or(0.0, |s| s[i]);
        y1v[i] = y[0][i] + dt * y1[i] + 0.5 * dt * dt * (lap0[i] + s);
    }
    y.push(y1v);
    for m in 1..nt {
        let lap = grid.laplacian(&y[m]);
        let im = integral(m, &y);
        let s = src(m);
        let mut ynext = vec![0.0; n];
        for i in 0..n {
            let si = s.as_ref().map_or(0.0, |s| s[i]);
            ynext[i] = 2.0 * y[m][i] - y[m - 1][i] + dt * dt * (lap[i] - im[i] + si);
        }
        if m % 64 == 0 {
            check_finite(&ynext, m + 1)?;
        }
        z[m] = im;
        y.push(ynext);
    }
    check_finite(&y[nt], nt)?;
    z[nt] = integral(nt, &y);

    let mut yt: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    let sn = src(nt);
    let lap_n = grid.laplacian(&y[nt]);
    for i in 0..n {
        let s0i = s0.as_ref().map_or(0.0, |s| s[i]);
        yt[0][i] = (y[1][i] - y[0][i]) / dt - 0.5 * dt * (lap0[i] + s0i);
        let sni = sn.as_ref().map_or(0.0, |s| s[i]);
        yt[nt][i] = (y[nt][i] - y[nt - 1][i]) / dt + 0.5 * dt * (lap_n[i] - z[nt][i] + sni);
    }
    for m in 1..nt {
        for i in 0..n {
            yt[m][i] = (y[m + 1][i] - y[m - 1][i]) / (2.0 * dt);
        }
    }
    Ok(PrimalState { times: (0..=nt).map(|m| mesh.t(m)).collect(), y, yt, z })
}

/// Backward solver for the adjoint in its scalar-memory form:
/// p_tt - Δp + ∫_t^T M(s,t) p(s) ds + M(T,t) q0 = 0, from (p0, p1) at t = T.
/// q is reported as q0 + (∫_t^T M(s,t) p ds)/M(T,t).
pub fn solve_adjoint_scalar_memory(
    k: &MemoryKernel,
    grid: &Grid1D,
    mesh: &TimeMesh,
    p0: &[f64],
    p1: &[f64],
    q0: &[f64],
    cfl: f64,
) -> Result<AdjointState> {
    mesh.check_cfl(grid.h, cfl)?;
    let n = grid.n;
    let nt = mesh.n_t;
    let dt = mesh.dt;
    let ms: Vec<Vec<f64>> =
        (0..=nt).map(|kk| (0..=kk).map(|m| k.eval(mesh.t(kk), mesh.t(m))).collect()).collect();
    let mtq: Vec<f64> = (0..=nt).map(|m| k.eval(k.horizon, mesh.t(m))).collect();
    let integral = |m: usize, p: &SpaceTimeField| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for kk in m..=nt {
            let wgt = dt * trap_w_rev(kk, m, nt) * ms[kk][m];
            if wgt != 0.0 {
                axpy(&mut out, wgt, &p[kk]);
            }
        }
        out
    };

    let mut p: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    p[nt].copy_from_slice(p0);
    let lap_n = grid.laplacian(p0);
    {
        let mut prev = vec![0.0; n];
        for i in 0..n {
            prev[i] = p0[i] - dt * p1[i] + 0.5 * dt * dt * (lap_n[i] - mtq[nt] * q0[i]);
        }
        p[nt - 1] = prev;
    }
    for m in (1..nt).rev() {
        let lap = grid.laplacian(&p[m]);
        let im = integral(m, &p);
        let mut prev = vec![0.0; n];
        for i in 0..n {
            prev[i] = 2.0 * p[m][i] - p[m + 1][i] + dt * dt * (lap[i] - im[i] - mtq[m] * q0[i]);
        }
        check_finite(&prev, m)?;
        p[m - 1] = prev;
    }
    let mut q: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    for m in 0..=nt {
        let im = integral(m, &p);
        for i in 0..n {
            q[m][i] = q0[i] + im[i] / mtq[m];
        }
    }

    let mut pt: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    for i in 0..n {
        pt[0][i] = (-3.0 * p[0][i] + 4.0 * p[1][i] - p[2][i]) / (2.0 * dt);
    }
    for m in 1..nt {
        for i in 0..n {
            pt[m][i] = (p[m + 1][i] - p[m - 1][i]) / (2.0 * dt);
        }
    }
    pt[nt].copy_from_slice(p1);
    Ok(AdjointState { times: (0..=nt).map(|m| mesh.t(m)).collect(), p, pt, q })
}

/// Adjoint solve dispatching on the variant. The coupled variant is the
/// exact transpose of the coupled forward scheme.
pub fn solve_adjoint(
    dk: &DerivedKernels,
    grid: &Grid1D,
    mesh: &TimeMesh,
    p0: &[f64],
    p1: &[f64],
    q0: &[f64],
    variant: AdjointVariant,
    cfl: f64,
) -> Result<AdjointState> {
    match variant {
        AdjointVariant::Coupled => {
            let mask = CoupledSystem::ones_mask(grid, mesh);
            let sys = CoupledSystem::new(dk, *grid, *mesh, mask, cfl)?;
            let run = sys.transpose(p0, p1, q0)?;
            Ok(sys.to_adjoint_state(&run, p1))
        }
        AdjointVariant::ScalarMemory => {
            solve_adjoint_scalar_memory(dk.kernel(), grid, mesh, p0, p1, q0, cfl)
        }
    }
}

/// Standard discrete wave energy ½ Σ (yt² + |D_h y|²) h at a time index.
pub fn energy(grid: &Grid1D, state: &PrimalState, t_index: usize) -> f64 {
    let y = &state.y[t_index];
    let yt = &state.yt[t_index];
    let n = grid.n;
    let mut e = 0.0;
    for v in yt.iter() {
        e += v * v;
    }
    for i in 0..=n {
        let left = if i > 0 { y[i - 1] } else { 0.0 };
        let right = if i < n { y[i] } else { 0.0 };
        let d = (right - left) / grid.h;
        e += d * d;
    }
    0.5 * grid.h * e
}

/// How the history integral is continued past the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtensionMode {
    /// Keep the full quadrature over [0, t].
    CarryHistory,
    /// Use the factorization ∫₀ᵗ M(t,s) y ds = M̃(t,T)·(memory at T)
    /// + ∫_T^t M(t,s) y ds, valid for multiplicative kernels.
    Multiplicative,
}

/// Continue the uncontrolled memory dynamics on [T, 2T] from a primal state
/// computed on [0, T] with the same mesh spacing. The kernel's analytic
/// formula is evaluated beyond its nominal horizon.
pub fn extend_past_t(
    k: &MemoryKernel,
    grid: &Grid1D,
    mesh: &TimeMesh,
    state: &PrimalState,
    mode: ExtensionMode,
) -> Result<PrimalState> {
    let n = grid.n;
    let nt = mesh.n_t;
    let dt = mesh.dt;
    let t_end = mesh.t_end;
    // Joined history nodes: indices 0..=2nt at times 0..2T; the first nt+1
    // slices come from the input state.
    let mut hist: SpaceTimeField = Vec::with_capacity(2 * nt + 1);
    hist.extend(state.y.iter().cloned());

    // Memory stored at T with the shifted kernel row, for multiplicative mode.
    let mem_t_row = |t: f64, hist: &SpaceTimeField| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for kk in 0..=nt {
            let wgt = dt * trap_w(kk, nt) * k.eval(t, dt * kk as f64);
            if wgt != 0.0 {
                axpy(&mut out, wgt, &hist[kk]);
            }
        }
        out
    };

    let mem_at = |j: usize, hist: &SpaceTimeField| -> Vec<f64> {
        let t = dt * j as f64;
        match mode {
            ExtensionMode::CarryHistory => {
                let mut out = vec![0.0; n];
                for kk in 0..=j {
                    let wgt = dt * trap_w(kk, j) * k.eval(t, dt * kk as f64);
                    if wgt != 0.0 {
                        axpy(&mut out, wgt, &hist[kk]);
                    }
                }
                out
            }
            ExtensionMode::Multiplicative => {
                let mem_t = mem_t_row(t_end, hist);
                let scale = k.eval(t, 0.0) / k.eval(t_end, 0.0);
                let mut out = vec![0.0; n];
                axpy(&mut out, scale, &mem_t);
                for kk in nt..=j {
                    let wgt = dt * trap_w_rev(kk, nt, j.max(nt)) * k.eval(t, dt * kk as f64);
                    let wgt = if j == nt { 0.0 } else { wgt };
                    if wgt != 0.0 {
                        axpy(&mut out, wgt, &hist[kk]);
                    }
                }
                out
            }
        }
    };

    let mut z: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    z[0] = mem_at(nt, &hist);
    {
        let lap = grid.laplacian(&hist[nt]);
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = hist[nt][i] + dt * state.yt[nt][i] + 0.5 * dt * dt * (lap[i] - z[0][i]);
        }
        hist.push(next);
    }
    for j in nt + 1..2 * nt {
        let lap = grid.laplacian(&hist[j]);
        let im = mem_at(j, &hist);
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = 2.0 * hist[j][i] - hist[j - 1][i] + dt * dt * (lap[i] - im[i]);
        }
        check_finite(&next, j)?;
        z[j - nt] = im;
        hist.push(next);
    }
    z[nt] = mem_at(2 * nt, &hist);

    let y: SpaceTimeField = hist[nt..].to_vec();
    let mut yt: SpaceTimeField = vec![vec![0.0; n]; nt + 1];
    yt[0].copy_from_slice(&state.yt[nt]);
    for m in 1..nt {
        for i in 0..n {
            yt[m][i] = (y[m + 1][i] - y[m - 1][i]) / (2.0 * dt);
        }
    }
    let lap_end = grid.laplacian(&y[nt]);
    for i in 0..n {
        yt[nt][i] = (y[nt][i] - y[nt - 1][i]) / dt + 0.5 * dt * (lap_end[i] - z[nt][i]);
    }
    Ok(PrimalState { times: (0..=nt).map(|m| t_end + mesh.t(m)).collect(), y, yt, z })
}

/// Trapezoidal (Crank–Nicolson) solver for the scalar Volterra IDE
/// dη/dt + ∫₀ᵗ M(t,s) η(s) ds = v.
pub fn solve_scalar_ode(k: &MemoryKernel, mesh: &TimeMesh, eta0: f64, v: &[f64]) -> Vec<f64> {
    let nt = mesh.n_t;
    let dt = mesh.dt;
    assert!(v.len() >= nt + 1);
    let mm: Vec<Vec<f64>> =
        (0..=nt).map(|m| (0..=m).map(|kk| k.eval(mesh.t(m), mesh.t(kk))).collect()).collect();
    let mut eta = vec![0.0; nt + 1];
    eta[0] = eta0;
    for m in 0..nt {
        let im: f64 = (0..=m).map(|kk| dt * trap_w(kk, m) * mm[m][kk] * eta[kk]).sum();
        // I(t_{m+1}) splits into its known part plus the implicit diagonal
        // (dt/2) M(t_{m+1},t_{m+1}) η^{m+1}.
        let known: f64 =
            (0..=m).map(|kk| dt * trap_w(kk, m + 1) * mm[m + 1][kk] * eta[kk]).sum();
        let diag = 0.5 * dt * mm[m + 1][m + 1];
        let rhs = eta[m] + 0.5 * dt * (v[m] + v[m + 1] - im - known);
        eta[m + 1] = rhs / (1.0 + 0.5 * dt * diag);
    }
    eta
}
