#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random trigonometric polynomial `a_0 + Σ a_m cos(mx) + b_m sin(mx)`,
/// `m <= modes`, on the `2π`-periodic line.
#[derive(Clone, Debug)]
pub struct BandLimited {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl BandLimited {
    pub fn random(seed: u64, modes: usize, mean: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let cos = draw();
        let sin = draw();
        BandLimited { mean, cos, sin }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.mean;
        for (i, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let m = (i + 1) as f64;
            v += a * (m * x).cos() + b * (m * x).sin();
        }
        v
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for (i, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let m = (i + 1) as f64;
            v += m * (b * (m * x).cos() - a * (m * x).sin());
        }
        v
    }
}

pub fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| -PI + 2.0 * PI * j as f64 / n as f64).collect()
}

pub fn sample(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid_points(n).into_iter().map(f).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Coefficient of `e^{i n x}` by direct summation on `x_j = -π + 2πj/N`.
pub fn mode_coefficient(field: &[f64], n: u64) -> (f64, f64) {
    let pts = grid_points(field.len());
    let m = field.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (x, f) in pts.iter().zip(field) {
        re += f * (n as f64 * x).cos();
        im -= f * (n as f64 * x).sin();
    }
    (re / m, im / m)
}

pub fn lp_norm(values: &[f64], p: Option<f64>, dx: f64) -> f64 {
    match p {
        None => values.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        Some(p) => (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * dx).powf(1.0 / p),
    }
}
