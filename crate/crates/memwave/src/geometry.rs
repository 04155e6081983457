//! Spatial grid, Dirichlet spectrum, moving control regions with smooth
//! cutoff weights, and the moving geometric control condition checker.

use serde::{Deserialize, Serialize};

use crate::{MemwaveError, Result};

/// Uniform grid of n interior points on (x_min, x_max) with homogeneous
/// Dirichlet values implied at both ends.
#[derive(Debug, Clone, Copy)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub h: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Self {
        assert!(n >= 2, "grid needs at least two interior points");
        assert!(x_max > x_min);
        let h = (x_max - x_min) / (n + 1) as f64;
        Grid1D { x_min, x_max, n, h }
    }

    pub fn unit(n: usize) -> Self {
        Grid1D::new(0.0, 1.0, n)
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Interior point x_i, i = 0..n.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i + 1) as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Three-point Laplacian with Dirichlet closure.
    pub fn laplacian(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            out[i] = (left - 2.0 * v[i] + right) * inv_h2;
        }
        out
    }

    /// Discrete L² inner product h Σ u_i v_i.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.dot(v, v).sqrt()
    }
}

/// Eigenpairs of the Dirichlet Laplacian: continuum eigenvalues
/// λ_j = (jπ/L)², discrete eigenvalues of the difference operator, and the
/// sine eigenvectors normalized in the discrete L² norm.
#[derive(Debug, Clone)]
pub struct DirichletSpectrum {
    pub grid: Grid1D,
    pub lambda_cont: Vec<f64>,
    pub lambda_disc: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
}

impl DirichletSpectrum {
    pub fn new(grid: Grid1D) -> Self {
        let l = grid.length();
        let n = grid.n;
        let mut lambda_cont = Vec::with_capacity(n);
        let mut lambda_disc = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        for j in 1..=n {
            let jf = j as f64;
            lambda_cont.push((jf * std::f64::consts::PI / l).powi(2));
            let arg = jf * std::f64::consts::PI * grid.h / (2.0 * l);
            lambda_disc.push(4.0 / (grid.h * grid.h) * arg.sin().powi(2));
            let scale = (2.0 / l).sqrt();
            let v: Vec<f64> = (0..n)
                .map(|i| {
                    scale * (jf * std::f64::consts::PI * (grid.x(i) - grid.x_min) / l).sin()
                })
                .collect();
            phi.push(v);
        }
        DirichletSpectrum { grid, lambda_cont, lambda_disc, phi }
    }

    /// Coefficients c_j = h Σ_i φ_j(x_i) v_i against the full discrete basis.
    pub fn coeffs(&self, v: &[f64]) -> Vec<f64> {
        self.phi.iter().map(|p| self.grid.dot(p, v)).collect()
    }

    /// Synthesize Σ_j c_j φ_j (c may be shorter than n).
    pub fn synth(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n];
        for (cj, p) in c.iter().zip(&self.phi) {
            if *cj != 0.0 {
                for (o, q) in out.iter_mut().zip(p) {
                    *o += cj * q;
                }
            }
        }
        out
    }

    /// Spectral H^s norm (Σ_j c_j² (λ_j^h)^s)^{1/2}; s = -1 is the H^{-1}
    /// surrogate and s = -2 the V' surrogate.
    pub fn norm_s(&self, v: &[f64], s: f64) -> f64 {
        let c = self.coeffs(v);
        self.norm_s_coeffs(&c, s)
    }

    pub fn norm_s_coeffs(&self, c: &[f64], s: f64) -> f64 {
        c.iter()
            .zip(&self.lambda_disc)
            .map(|(cj, lj)| cj * cj * lj.powf(s))
            .sum::<f64>()
            .sqrt()
    }
}

/// Moving-interval control region configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RegionSpec {
    Static { a: f64, b: f64 },
    Sweep { center0: f64, speed: f64, halfwidth: f64 },
    Full,
}

/// A moving open interval O(t) = (a(t), b(t)) clipped to the domain.
#[derive(Debug, Clone)]
pub struct MovingRegion {
    pub spec: RegionSpec,
    pub x_min: f64,
    pub x_max: f64,
}

impl MovingRegion {
    pub fn new(spec: RegionSpec, grid: &Grid1D) -> Self {
        MovingRegion { spec, x_min: grid.x_min, x_max: grid.x_max }
    }

    /// Unclipped endpoints.
    fn raw_endpoints(&self, t: f64) -> (f64, f64) {
        match &self.spec {
            RegionSpec::Static { a, b } => (*a, *b),
            RegionSpec::Sweep { center0, speed, halfwidth } => {
                let c = center0 + speed * t;
                (c - halfwidth, c + halfwidth)
            }
            RegionSpec::Full => (self.x_min, self.x_max),
        }
    }

    /// Clipped endpoints (a(t), b(t)).
    pub fn endpoints(&self, t: f64) -> (f64, f64) {
        let (a, b) = self.raw_endpoints(t);
        (a.max(self.x_min), b.min(self.x_max))
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        let (a, b) = self.endpoints(t);
        x > a && x < b
    }

    pub fn indicator(&self, t: f64, x: f64) -> f64 {
        if self.contains(t, x) {
            1.0
        } else {
            0.0
        }
    }

    /// Minimal clipped width over a uniform time sample.
    pub fn min_width(&self, t_end: f64) -> f64 {
        let samples = 256;
        (0..=samples)
            .map(|i| {
                let t = t_end * i as f64 / samples as f64;
                let (a, b) = self.endpoints(t);
                b - a
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smooth space-time weight ρ: 1 on the region shrunk by eps0 from its
/// interior walls, 0 within eps0/2 of them (and outside the region), with a
/// quintic-smoothstep transition. Walls lying on the domain boundary do not
/// shrink the plateau.
#[derive(Debug, Clone)]
pub struct CutoffWeight {
    pub region: MovingRegion,
    pub eps0: f64,
}

fn smoothstep5(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// Build the cutoff weight; fails when eps0 is not small against the
/// narrowest instantaneous width.
pub fn build_cutoff(region: &MovingRegion, eps0: f64, t_end: f64) -> Result<CutoffWeight> {
    let min_width = region.min_width(t_end);
    if !(eps0 > 0.0) || eps0 >= min_width / 3.0 {
        return Err(MemwaveError::MarginTooLarge { eps0, min_width });
    }
    Ok(CutoffWeight { region: region.clone(), eps0 })
}

impl CutoffWeight {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (a, b) = self.region.endpoints(t);
        if !(x > a && x < b) {
            return 0.0;
        }
        // Distance to interior walls only; domain-boundary walls are not
        // shrink-from boundaries.
        let mut d = f64::INFINITY;
        if a > self.region.x_min {
            d = d.min(x - a);
        }
        if b < self.region.x_max {
            d = d.min(b - x);
        }
        if !d.is_finite() {
            return 1.0;
        }
        let half = self.eps0 / 2.0;
        if d <= half {
            0.0
        } else if d >= self.eps0 {
            1.0
        } else {
            smoothstep5((d - half) / half)
        }
    }
}

/// Result of the MGCC check.
#[derive(Debug, Clone, Serialize)]
pub struct MgccReport {
    pub rays_pass: bool,
    /// Seed point, direction, and first-hit time (None = never before T).
    pub worst_ray: (f64, i8, Option<f64>),
    pub vertical_pass: bool,
    /// Minimum over grid points of the longest single dwell interval.
    pub l_u: f64,
    pub worst_point: f64,
    pub mgcc_pass: bool,
}

/// Fold a free position into [x_min, x_max] by specular reflection.
fn reflect(x: f64, x_min: f64, x_max: f64) -> f64 {
    let l = x_max - x_min;
    let mut xi = (x - x_min).rem_euclid(2.0 * l);
    if xi > l {
        xi = 2.0 * l - xi;
    }
    x_min + xi
}

/// First time a speed-1 ray from (0, x0) with direction ±1 enters the moving
/// region, sampled every dt_ray; None if it stays outside until T.
pub fn trace_ray(
    x0: f64,
    dir: i8,
    grid: &Grid1D,
    t_end: f64,
    region: &MovingRegion,
    dt_ray: f64,
) -> Option<f64> {
    let steps = (t_end / dt_ray).ceil() as usize;
    for m in 0..=steps {
        let t = (m as f64 * dt_ray).min(t_end);
        let x = reflect(x0 + dir as f64 * t, grid.x_min, grid.x_max);
        if region.contains(t, x) {
            return Some(t);
        }
        if t >= t_end {
            break;
        }
    }
    None
}

/// Check both MGCC conditions: every ray (condition 1) and every vertical
/// line (condition 2) must meet O before T, and report the uniform dwell
/// time L_U (the min over points of the longest single stay inside O).
pub fn check_mgcc(
    region: &MovingRegion,
    grid: &Grid1D,
    t_end: f64,
    n_rays: usize,
    dt_ray: f64,
) -> MgccReport {
    let n_rays = n_rays.max(2 * grid.n);
    let mut rays_pass = true;
    let mut worst_ray = (grid.x(0), 1i8, Some(0.0));
    let mut worst_hit = -1.0f64;
    for r in 0..n_rays {
        let x0 = grid.x_min + grid.length() * (r as f64 + 0.5) / n_rays as f64;
        for dir in [-1i8, 1] {
            let hit = trace_ray(x0, dir, grid, t_end, region, dt_ray);
            match hit {
                None => {
                    rays_pass = false;
                    worst_ray = (x0, dir, None);
                    worst_hit = f64::INFINITY;
                }
                Some(t) => {
                    if t > worst_hit {
                        worst_hit = t;
                        worst_ray = (x0, dir, Some(t));
                    }
                }
            }
        }
    }

    let n_time = (t_end / dt_ray).ceil() as usize;
    let mut vertical_pass = true;
    let mut l_u = f64::INFINITY;
    let mut worst_point = grid.x(0);
    for i in 0..grid.n {
        let x = grid.x(i);
        let mut best_run = 0usize;
        let mut run = 0usize;
        for m in 0..=n_time {
            let t = (m as f64 * dt_ray).min(t_end);
            if region.contains(t, x) {
                run += 1;
                best_run = best_run.max(run);
            } else {
                run = 0;
            }
        }
        if best_run == 0 {
            vertical_pass = false;
        }
        let dwell = best_run.saturating_sub(1) as f64 * dt_ray;
        if dwell < l_u {
            l_u = dwell;
            worst_point = x;
        }
    }

    MgccReport {
        rays_pass,
        worst_ray,
        vertical_pass,
        l_u,
        worst_point,
        mgcc_pass: rays_pass && vertical_pass && l_u > 0.0,
    }
}
