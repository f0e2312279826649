//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Uniform cubic B-spline blending functions and their time derivatives,
/// written out term by term.
pub fn blend(u: f64, order: u8, tau: f64) -> [f64; 4] {
    match order {
        0 => [
            (1.0 - u).powi(3) / 6.0,
            (3.0 * u.powi(3) - 6.0 * u * u + 4.0) / 6.0,
            (-3.0 * u.powi(3) + 3.0 * u * u + 3.0 * u + 1.0) / 6.0,
            u.powi(3) / 6.0,
        ],
        1 => [
            -(1.0 - u).powi(2) / 2.0 / tau,
            (3.0 * u * u - 4.0 * u) / 2.0 / tau,
            (-3.0 * u * u + 2.0 * u + 1.0) / 2.0 / tau,
            u * u / 2.0 / tau,
        ],
        _ => [
            (1.0 - u) / (tau * tau),
            (3.0 * u - 2.0) / (tau * tau),
            (1.0 - 3.0 * u) / (tau * tau),
            u / (tau * tau),
        ],
    }
}

pub fn combine(points: &[DVector<f64>], w: &[f64; 4]) -> DVector<f64> {
    let mut out = DVector::zeros(points[0].len());
    for (p, wi) in points.iter().zip(w) {
        out += p * *wi;
    }
    out
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain linear Kalman filter on the stacked four-point state with GPS
/// observations, tracking its own knot lattice.
pub struct PlainKalman {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub origin: f64,
    pub tau: f64,
    pub knots: usize,
    d: usize,
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl PlainKalman {
    pub fn new(first_t: f64, first_pos: &DVector<f64>, sigma0: f64, tau: f64, omega: f64, nu: f64, r: DMatrix<f64>) -> Self {
        let d = first_pos.len();
        let n = 4 * d;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..3 * d {
            a[(i, i + d)] = 1.0;
        }
        for k in 0..d {
            a[(3 * d + k, k)] = -1.0;
            a[(3 * d + k, 2 * d + k)] = 2.0;
        }
        let q = DMatrix::from_fn(n, n, |i, j| if i != j { 0.0 } else if i < 3 * d { omega } else { nu });
        let x = DVector::from_fn(n, |i, _| first_pos[i % d]);
        Self {
            x,
            p: DMatrix::identity(n, n) * sigma0 * sigma0,
            origin: first_t - 2.0 * tau,
            tau,
            knots: 4,
            d,
            a,
            q,
            r,
        }
    }

    fn terminal_end(&self) -> f64 {
        self.origin + (self.knots - 1) as f64 * self.tau
    }

    pub fn update(&mut self, t: f64, z: &DVector<f64>) {
        while t > self.terminal_end() + 1e-9 * self.tau {
            self.x = &self.a * &self.x;
            self.p = &self.a * &self.p * self.a.transpose() + &self.q;
            self.knots += 1;
        }
        let start = self.origin + (self.knots - 2) as f64 * self.tau;
        let mut u = ((t - start) / self.tau).clamp(0.0, 1.0);
        // timestamps within 1e-9 τ of a knot sit exactly on it
        if (1.0 - u) <= 1e-9 {
            u = 1.0;
        } else if u <= 1e-9 {
            u = 0.0;
        }
        let w = blend(u, 0, self.tau);
        let d = self.d;
        let h = DMatrix::from_fn(d, 4 * d, |r, c| if c % d == r { w[c / d] } else { 0.0 });
        let s = &h * &self.p * h.transpose() + &self.r;
        let k = &self.p * h.transpose() * s.try_inverse().expect("innovation covariance invertible");
        self.x = &self.x + &k * (z - &h * &self.x);
        let i = DMatrix::identity(4 * d, 4 * d);
        self.p = (&i - &k * &h) * &self.p;
        self.p = (&self.p + self.p.transpose()) * 0.5;
    }
}
