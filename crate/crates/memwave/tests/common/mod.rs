//! Shared oracles for the integration tests: closed-form modal references,
//! dense ODE integration, bisection root finding, and deterministic random
//! fields.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memwave::analysis::solve_mu;
use memwave::dynamics::SpaceTimeField;

/// Modal coefficient for the memory wave with M ≡ 1:
/// c'' + λ c + ∫₀ᵗ c = -z0 offset form; differentiating gives
/// c''' + λ c' + c = 0 with c(0)=c0, c'(0)=c1, c''(0)=-λ c0 - z0.
/// Solved in closed form from the roots of r³ + λ r + 1 = 0.
pub struct ModalRef {
    mu: f64,
    sigma: f64,
    omega: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl ModalRef {
    pub fn new(lambda: f64, c0: f64, c1: f64, z0: f64) -> Self {
        let mu = solve_mu(lambda).mu;
        // r³ + λr + 1 = (r - μ)(r² + μ r + (μ² + λ)).
        let sigma = -mu / 2.0;
        let omega = (lambda + 0.75 * mu * mu).sqrt();
        let c2 = -lambda * c0 - z0;
        // Solve A + B = c0; μA + σB + ωC = c1; μ²A + (σ²-ω²)B + 2σωC = c2.
        let m = [
            [1.0, 1.0, 0.0],
            [mu, sigma, omega],
            [mu * mu, sigma * sigma - omega * omega, 2.0 * sigma * omega],
        ];
        let rhs = [c0, c1, c2];
        let sol = solve3(m, rhs);
        ModalRef { mu, sigma, omega, a: sol[0], b: sol[1], c: sol[2] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.a * (self.mu * t).exp()
            + (self.sigma * t).exp() * (self.b * (self.omega * t).cos() + self.c * (self.omega * t).sin())
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = r[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Dense RK4 for c''' = -λ c' - c, for cross-checking the closed form.
pub fn rk4_modal(lambda: f64, c0: f64, c1: f64, z0: f64, t_end: f64, steps: usize) -> f64 {
    let f = |s: [f64; 3]| [s[1], s[2], -lambda * s[1] - s[0]];
    let mut s = [c0, c1, -lambda * c0 - z0];
    let dt = t_end / steps as f64;
    for _ in 0..steps {
        let k1 = f(s);
        let s2 = std::array::from_fn(|i| s[i] + 0.5 * dt * k1[i]);
        let k2 = f(s2);
        let s3 = std::array::from_fn(|i| s[i] + 0.5 * dt * k2[i]);
        let k3 = f(s3);
        let s4 = std::array::from_fn(|i| s[i] + dt * k3[i]);
        let k4 = f(s4);
        for i in 0..3 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s[0]
}

/// Bisection for a continuous function with a sign change on [lo, hi].
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on bracket");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if flo * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_spacetime(rng: &mut ChaCha8Rng, n_t: usize, n: usize) -> SpaceTimeField {
    (0..=n_t).map(|_| random_field(rng, n)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
