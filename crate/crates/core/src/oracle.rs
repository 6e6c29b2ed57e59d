//! Deliberately simple reference implementations used to cross-check the
//! spectral pipeline: direct quadrature convolution, second-order finite
//! differences and an adaptive Runge–Kutta integrator for the kinetics.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::model::{ModelParams, BLOW_UP_FLOOR};
use crate::quadrature;

/// Uniform periodic grid on `(-L, L)` with index wrap-around.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdGrid {
    pub n: usize,
    pub half_length: f64,
}

impl FdGrid {
    pub fn new(n: usize, half_length: f64) -> Result<Self> {
        if n < 4 || !(half_length > 0.0) {
            return Err(Error::param("finite-difference grid needs n >= 4 and L > 0"));
        }
        Ok(FdGrid { n, half_length })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_length + self.dx() * j as f64
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|j| f(self.point(j))).collect()
    }

    fn next(&self, j: usize) -> usize {
        (j + 1) % self.n
    }

    fn prev(&self, j: usize) -> usize {
        (j + self.n - 1) % self.n
    }

    pub fn second_difference(&self, f: &[f64]) -> Vec<f64> {
        let h2 = self.dx() * self.dx();
        (0..self.n)
            .map(|j| (f[self.next(j)] - 2.0 * f[j] + f[self.prev(j)]) / h2)
            .collect()
    }

    pub fn central_difference(&self, f: &[f64]) -> Vec<f64> {
        let h = self.dx();
        (0..self.n)
            .map(|j| (f[self.next(j)] - f[self.prev(j)]) / (2.0 * h))
            .collect()
    }

    /// `(a b_x)_x` in flux form with face values `½(a_j + a_{j+1})` and
    /// one-sided face gradients of `b`.
    pub fn flux_divergence(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let h = self.dx();
        let face = |j: usize| {
            let k = self.next(j);
            0.5 * (a[j] + a[k]) * (b[k] - b[j]) / h
        };
        (0..self.n).map(|j| (face(j) - face(self.prev(j))) / h).collect()
    }
}

/// Points where `y ↦ G(x - y)` may be non-smooth, reduced into `[lo, hi]`.
fn kernel_breaks(kernel: &Kernel, x: f64, lo: f64, hi: f64) -> Vec<f64> {
    let l = kernel.half_length();
    let mut offsets = vec![0.0, l, -l];
    if kernel.family() == KernelFamily::TopHat {
        offsets.extend([kernel.radius(), -kernel.radius()]);
    }
    let mut pts: Vec<f64> = Vec::new();
    for off in offsets {
        for shift in [-2.0 * l, 0.0, 2.0 * l] {
            let p = x - off + shift;
            if p > lo && p < hi {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts
}

const GL4_X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL4_W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// `(2L)^{-1} ∫ G(x - y) k(y) dy` with `k` replaced by its piecewise-linear
/// interpolant, integrated cell by cell and split at the kernel's
/// discontinuities. Second order in `dx`; `O(N²)` work.
pub fn quadrature_convolve(kernel: &Kernel, field: &[f64]) -> Result<Vec<f64>> {
    let grid = FdGrid::new(field.len(), kernel.half_length())?;
    let h = grid.dx();
    let inv = 1.0 / (2.0 * kernel.half_length());
    Ok((0..grid.n)
        .map(|i| {
            let x = grid.point(i);
            let mut total = 0.0;
            for j in 0..grid.n {
                let (y0, y1) = (grid.point(j), grid.point(j) + h);
                let (k0, k1) = (field[j], field[grid.next(j)]);
                let mut cuts = vec![y0];
                cuts.extend(kernel_breaks(kernel, x, y0, y1));
                cuts.push(y1);
                for w in cuts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                    for (t, wt) in GL4_X.iter().zip(GL4_W) {
                        let y = mid + half * t;
                        let ky = k0 + (k1 - k0) * (y - y0) / h;
                        total += wt * half * kernel.evaluate(x - y) * ky;
                    }
                }
            }
            inv * total
        })
        .collect())
}

/// High-accuracy convolution of a continuous periodic field at the given
/// points, by adaptive quadrature on the smooth pieces of the kernel.
pub fn quadrature_convolve_fn(kernel: &Kernel, field: impl Fn(f64) -> f64, points: &[f64], abs_tol: f64) -> Vec<f64> {
    let l = kernel.half_length();
    points
        .iter()
        .map(|&x| {
            let (lo, hi) = (x - l, x + l);
            let mut cuts = vec![lo];
            cuts.extend(kernel_breaks(kernel, x, lo, hi));
            cuts.push(hi);
            let total: f64 = cuts
                .windows(2)
                .map(|w| {
                    // Stay strictly inside each piece so one-sided values are used.
                    quadrature::integrate(|y| kernel.evaluate(x - y) * field(y), w[0], w[1], abs_tol)
                })
                .sum();
            total / (2.0 * l)
        })
        .collect()
}

/// One explicit Euler step with central differences and quadrature
/// convolution. Returns the advanced `(u, k)`.
pub fn fd_step(params: &ModelParams, kernel: &Kernel, u: &[f64], k: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if u.len() != k.len() {
        return Err(Error::param("u and k must share a grid"));
    }
    let grid = FdGrid::new(u.len(), params.half_length)?;
    let k_bar = quadrature_convolve(kernel, k)?;
    let uxx = grid.second_difference(u);
    let transport = grid.flux_divergence(u, &k_bar);
    let mut un = Vec::with_capacity(u.len());
    let mut kn = Vec::with_capacity(u.len());
    for j in 0..u.len() {
        let du = params.d * uxx[j] + params.alpha * transport[j] + params.f(u[j]).value;
        un.push(u[j] + dt * du);
        kn.push(k[j] + dt * params.h(u[j], k[j]));
    }
    if let Some(j) = un.iter().position(|v| !v.is_finite() || *v < BLOW_UP_FLOOR) {
        return Err(Error::BlowUp {
            step: 1,
            time: dt,
            reason: format!("u = {} at grid index {j}", un[j]),
        });
    }
    Ok((un, kn))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub k: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, f64) {
        (*self.u.last().unwrap(), *self.k.last().unwrap())
    }
}

// Dormand–Prince 5(4) tableau (autonomous, so the nodes are not needed).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates the space-free kinetics `u' = f(u)`, `k' = h(u, k)` with
/// adaptive Dormand–Prince steps (relative tolerance `1e-10`).
pub fn ode_kinetics(params: &ModelParams, u0: f64, k0: f64, horizon: f64) -> Trajectory {
    let rhs = |y: [f64; 2]| [params.f(y[0]).value, params.h(y[0], y[1])];
    let (rtol, atol) = (1e-10, 1e-12);
    let mut traj = Trajectory { t: vec![0.0], u: vec![u0], k: vec![k0] };
    let (mut t, mut y) = (0.0, [u0, k0]);
    let mut h = 1e-3f64.min(horizon);
    while t < horizon {
        h = h.min(horizon - t);
        let mut stages = [[0.0; 2]; 7];
        for i in 0..7 {
            let mut yi = y;
            for (j, stage) in stages.iter().enumerate().take(i) {
                for c in 0..2 {
                    yi[c] += h * A[i][j] * stage[c];
                }
            }
            stages[i] = rhs(yi);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for c in 0..2 {
            let (mut s5, mut s4) = (0.0, 0.0);
            for i in 0..7 {
                s5 += B5[i] * stages[i][c];
                s4 += B4[i] * stages[i][c];
            }
            y5[c] += h * s5;
            let sc = atol + rtol * y[c].abs().max(y5[c].abs());
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            traj.t.push(t);
            traj.u.push(y[0]);
            traj.k.push(y[1]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    traj
}

/// `cos(nπx/L)` sampled on an oracle grid.
pub fn cosine_mode(grid: &FdGrid, n: u64) -> Vec<f64> {
    let q = n as f64 * PI / grid.half_length;
    grid.sample(|x| (q * x).cos())
}
