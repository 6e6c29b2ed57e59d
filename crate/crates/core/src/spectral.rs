//! Periodic grid, discrete Fourier transforms and spectral operators.
//!
//! Coefficients follow the inner product `c_m = (2L)^{-1} ∫ h(x) e^{-imπx/L} dx`
//! evaluated on the grid `x_j = -L + 2Lj/N`, so a sampled `cos(mπx/L)` has
//! `c_{±m} = 1/2`. Internally the transforms work on the raw DFT ordering
//! (index `j` holds mode `j` for `j <= N/2`, mode `j - N` above).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on `(-L, L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    half_length: f64,
}

impl Grid {
    pub fn new(n: usize, half_length: f64) -> Result<Self> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(Error::param(format!(
                "grid size must be even and at least 16 (got {n})"
            )));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::param(format!(
                "half-length must be positive (got {half_length})"
            )));
        }
        Ok(Grid { n, half_length })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_length + self.spacing() * j as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Signed mode number stored at DFT index `j`. The Nyquist index maps
    /// to `+N/2`.
    pub fn mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Angular wavenumber `mπ/L` at DFT index `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        self.mode(j) as f64 * PI / self.half_length
    }

    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Samples `f` at the grid points.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|j| f(self.point(j))).collect()
    }
}

/// Forward/inverse FFT plans for one grid. Immutable once built; share it
/// behind an `Arc` and give each worker its own scratch buffers.
pub struct FourierTransform {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierTransform")
            .field("grid", &self.grid)
            .finish()
    }
}

impl FourierTransform {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        FourierTransform {
            grid,
            forward: planner.plan_fft_forward(grid.len()),
            inverse: planner.plan_fft_inverse(grid.len()),
        }
    }

    pub fn shared(grid: Grid) -> Arc<Self> {
        Arc::new(Self::new(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Raw normalized DFT: `out[j] = N^{-1} Σ_l values[l] e^{-2πijl/N}`.
    pub fn forward_raw(&self, values: &[f64], out: &mut [Complex64]) {
        let inv_n = 1.0 / self.grid.len() as f64;
        for (o, &v) in out.iter_mut().zip(values) {
            *o = Complex64::new(v * inv_n, 0.0);
        }
        self.forward.process(out);
    }

    /// Inverse of [`forward_raw`](Self::forward_raw); the buffer is consumed
    /// as scratch and the real part written to `out`.
    pub fn inverse_raw(&self, coeffs: &mut [Complex64], out: &mut [f64]) {
        self.inverse.process(coeffs);
        for (o, c) in out.iter_mut().zip(coeffs.iter()) {
            *o = c.re;
        }
    }

    /// Coefficients in the `φ_m = e^{imπx/L}` basis (raw ordering).
    pub fn coefficients(&self, values: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        self.forward_raw(values, &mut out);
        for (j, c) in out.iter_mut().enumerate() {
            if self.grid.mode(j) % 2 != 0 {
                *c = -*c;
            }
        }
        out
    }

    pub fn values(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| if self.grid.mode(j) % 2 != 0 { -*c } else { *c })
            .collect();
        let mut out = vec![0.0; self.grid.len()];
        self.inverse_raw(&mut buf, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sync {
    Physical,
    Spectral,
    Both,
}

/// A real periodic field held in physical and/or spectral form; whichever
/// representation is missing is computed on first access.
#[derive(Clone, Debug)]
pub struct SpectralField {
    transform: Arc<FourierTransform>,
    values: Vec<f64>,
    coeffs: Vec<Complex64>,
    sync: Sync,
}

impl SpectralField {
    pub fn from_values(transform: Arc<FourierTransform>, values: Vec<f64>) -> Result<Self> {
        if values.len() != transform.grid().len() {
            return Err(Error::param(format!(
                "field has {} samples but the grid has {}",
                values.len(),
                transform.grid().len()
            )));
        }
        Ok(SpectralField {
            transform,
            values,
            coeffs: Vec::new(),
            sync: Sync::Physical,
        })
    }

    pub fn from_fn(transform: Arc<FourierTransform>, f: impl Fn(f64) -> f64) -> Self {
        let values = transform.grid().sample(f);
        SpectralField {
            transform,
            values,
            coeffs: Vec::new(),
            sync: Sync::Physical,
        }
    }

    /// Builds a field from basis coefficients. The caller is responsible for
    /// Hermitian symmetry; only the real part of the synthesis is kept.
    pub fn from_coefficients(
        transform: Arc<FourierTransform>,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if coeffs.len() != transform.grid().len() {
            return Err(Error::param("coefficient vector does not match grid"));
        }
        Ok(SpectralField {
            transform,
            values: Vec::new(),
            coeffs,
            sync: Sync::Spectral,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.transform.grid()
    }

    pub fn transform(&self) -> &Arc<FourierTransform> {
        &self.transform
    }

    pub fn values(&mut self) -> &[f64] {
        if self.sync == Sync::Spectral {
            self.values = self.transform.values(&self.coeffs);
            self.sync = Sync::Both;
        }
        &self.values
    }

    pub fn coefficients(&mut self) -> &[Complex64] {
        if self.sync == Sync::Physical {
            self.coeffs = self.transform.coefficients(&self.values);
            self.sync = Sync::Both;
        }
        &self.coeffs
    }

    pub fn into_values(mut self) -> Vec<f64> {
        self.values();
        self.values
    }

    /// Coefficient of mode `m` (negative modes allowed, `|m| <= N/2`).
    pub fn coefficient(&mut self, m: i64) -> Complex64 {
        let n = self.grid().len() as i64;
        let idx = m.rem_euclid(n) as usize;
        self.coefficients()[idx]
    }

    fn map_coefficients(mut self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        self.coefficients();
        for (j, c) in self.coeffs.iter_mut().enumerate() {
            *c = f(j, *c);
        }
        self.sync = Sync::Spectral;
        self
    }

    /// Spectral derivative of order `order` (1 or 2). The Nyquist mode of odd
    /// derivatives is zeroed.
    pub fn derivative(self, order: u32) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::param(format!(
                "derivative order must be 1 or 2 (got {order})"
            )));
        }
        let grid = *self.grid();
        Ok(self.map_coefficients(|j, c| {
            let q = grid.wavenumber(j);
            if order == 1 {
                if j == grid.nyquist() {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, q)
                }
            } else {
                c * (-q * q)
            }
        }))
    }

    /// Two-thirds rule: zero every mode with `|m| > N/3`.
    pub fn dealias(self) -> Self {
        let grid = *self.grid();
        let cutoff = grid.len() as f64 / 3.0;
        self.map_coefficients(|j, c| {
            if (grid.mode(j).unsigned_abs() as f64) > cutoff {
                Complex64::new(0.0, 0.0)
            } else {
                c
            }
        })
    }

    /// Multiplies mode `m` by `multiplier(|m|)`.
    pub fn apply_even_multiplier(self, multiplier: impl Fn(u64) -> f64) -> Self {
        let grid = *self.grid();
        self.map_coefficients(|j, c| c * multiplier(grid.mode(j).unsigned_abs()))
    }

    /// Grid average of the squared field.
    pub fn mean_square(&mut self) -> f64 {
        let v = self.values();
        v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
    }

    /// Sum of squared coefficient magnitudes.
    pub fn spectral_energy(&mut self) -> f64 {
        self.coefficients().iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Mask for the two-thirds rule in raw DFT ordering.
pub fn dealias_mask(grid: &Grid) -> Vec<bool> {
    let cutoff = grid.len() as f64 / 3.0;
    (0..grid.len())
        .map(|j| (grid.mode(j).unsigned_abs() as f64) <= cutoff)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transform(n: usize) -> Arc<FourierTransform> {
        FourierTransform::shared(Grid::new(n, PI).unwrap())
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(15, PI).is_err());
        assert!(Grid::new(8, PI).is_err());
        assert!(Grid::new(64, 0.0).is_err());
        let g = Grid::new(64, PI).unwrap();
        assert!((g.spacing() - 2.0 * PI / 64.0).abs() < 1e-15);
        assert_eq!(g.point(0), -PI);
    }

    #[test]
    fn cosine_has_half_coefficients() {
        let t = transform(32);
        let mut f = SpectralField::from_fn(t, |x| (3.0 * x).cos());
        assert!((f.coefficient(3).re - 0.5).abs() < 1e-14);
        assert!((f.coefficient(-3).re - 0.5).abs() < 1e-14);
        assert!(f.coefficient(2).norm() < 1e-14);
    }

    #[test]
    fn round_trip_non_power_of_two() {
        let t = transform(96);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = t.coefficients(&v);
        let back = t.values(&c);
        assert!(max_diff(&v, &back) < 1e-12);
    }

    #[test]
    fn second_derivative_of_cosine() {
        let t = transform(64);
        let f = SpectralField::from_fn(t.clone(), |x| (2.0 * x).cos());
        let d = f.derivative(2).unwrap().into_values();
        let expect = t.grid().sample(|x| -4.0 * (2.0 * x).cos());
        assert!(max_diff(&d, &expect) < 1e-12);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let t = transform(32);
        let d = SpectralField::from_fn(t, |_| 7.0)
            .derivative(1)
            .unwrap()
            .into_values();
        assert!(d.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn derivative_rejects_third_order() {
        let t = transform(32);
        assert!(SpectralField::from_fn(t, |x| x.sin()).derivative(3).is_err());
    }

    #[test]
    fn odd_derivative_drops_nyquist() {
        let t = transform(16);
        // Nyquist mode alternates sign on the grid.
        let f = SpectralField::from_fn(t, |x| (8.0 * x).cos());
        let d = f.derivative(1).unwrap().into_values();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    /// Sixth-order centred differences of `f` at `x` with step `h`.
    fn fd6(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        let d = |k: f64| f(x + k * h) - f(x - k * h);
        (45.0 * d(1.0) - 9.0 * d(2.0) + d(3.0)) / (60.0 * h)
    }

    #[test]
    fn derivative_matches_sixth_order_differences() {
        let t = transform(128);
        let g = |x: f64| x.sin().exp();
        let spec = SpectralField::from_fn(t.clone(), g)
            .derivative(1)
            .unwrap()
            .into_values();
        // Step dx/4 keeps the stencil's own truncation error well below 1e-8.
        let h = t.grid().spacing() / 4.0;
        let fd: Vec<f64> = t.grid().points().iter().map(|&x| fd6(g, x, h)).collect();
        assert!(max_diff(&fd, &spec) < 1e-8, "{}", max_diff(&fd, &spec));
    }

    #[test]
    fn dealias_keeps_low_modes_and_drops_high() {
        let n = 48;
        let t = transform(n);
        let low = t.grid().sample(|x| (12.0 * x).cos() + (5.0 * x).sin());
        let kept = SpectralField::from_values(t.clone(), low.clone())
            .unwrap()
            .dealias()
            .into_values();
        assert!(max_diff(&low, &kept) < 1e-13);
        let high = SpectralField::from_fn(t, |x| ((n / 2 - 1) as f64 * x).cos())
            .dealias()
            .into_values();
        assert!(high.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn dealiased_product_has_no_energy_above_cutoff() {
        let n = 96;
        let t = transform(n);
        let m = (n / 3) as f64;
        let mut f = SpectralField::from_fn(t, |x| (m * x).cos() * (m * x).cos()).dealias();
        let grid = *f.grid();
        let coeffs = f.coefficients().to_vec();
        for (j, c) in coeffs.iter().enumerate() {
            if grid.mode(j).unsigned_abs() as f64 > n as f64 / 3.0 {
                assert!(c.norm() < 1e-14);
            }
        }
        // The constant half of cos² survives the filter.
        assert!((coeffs[0].re - 0.5).abs() < 1e-13);
    }

    #[test]
    fn parseval_on_random_field() {
        let t = transform(64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut f = SpectralField::from_values(t, v).unwrap();
        assert!((f.mean_square() - f.spectral_energy()).abs() < 1e-10);
    }
}
