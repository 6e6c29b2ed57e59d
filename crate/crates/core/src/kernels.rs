//! Detection kernels on the periodic domain `(-L, L)`, their Fourier
//! coefficients and the nonlocal convolution operator
//! `k̄(x) = (2L)^{-1} ∫ G(x - y) k(y) dy`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectral::{FourierTransform, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Gaussian,
    Exponential,
    TopHat,
}

/// How the kernel is scaled on `(-L, L)`.
///
/// `MassOne` integrates to one, so with the `(2L)^{-1}` convolution prefactor
/// the top-hat coefficient is `sin(qR) / (2L qR)`. `MeanOne` multiplies the
/// kernel by `2L` so that constants are reproduced (`C_0 = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    MassOne,
    MeanOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    family: KernelFamily,
    radius: f64,
    half_length: f64,
    normalization: Normalization,
}

const SINC_SERIES_CUTOFF: f64 = 1e-4;
const COEFF_TOL: f64 = 1e-13;

fn sinc(t: f64) -> f64 {
    if t.abs() < SINC_SERIES_CUTOFF {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        t.sin() / t
    }
}

impl Kernel {
    pub fn new(
        family: KernelFamily,
        radius: f64,
        half_length: f64,
        normalization: Normalization,
    ) -> Result<Self> {
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::param(format!(
                "half-length must be positive (got {half_length})"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(format!(
                "perceptual radius must be positive (got {radius})"
            )));
        }
        if family == KernelFamily::TopHat && radius >= half_length {
            return Err(Error::param(format!(
                "top-hat radius must satisfy 0 < R < L (R = {radius}, L = {half_length})"
            )));
        }
        Ok(Kernel {
            family,
            radius,
            half_length,
            normalization,
        })
    }

    /// Mass-one top-hat on `(-L, L)`.
    pub fn top_hat(radius: f64, half_length: f64) -> Result<Self> {
        Self::new(
            KernelFamily::TopHat,
            radius,
            half_length,
            Normalization::MassOne,
        )
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    fn scale(&self) -> f64 {
        match self.normalization {
            Normalization::MassOne => 1.0,
            Normalization::MeanOne => 2.0 * self.half_length,
        }
    }

    /// Mass-one profile on `[-L, L]` (no periodic reduction).
    fn profile(&self, x: f64) -> f64 {
        let (r, l) = (self.radius, self.half_length);
        let ax = x.abs();
        match self.family {
            KernelFamily::TopHat => {
                if ax < r {
                    0.5 / r
                } else if ax == r {
                    0.25 / r
                } else {
                    0.0
                }
            }
            KernelFamily::Exponential => {
                (-ax / r).exp() / (2.0 * r * (-(-l / r).exp_m1()))
            }
            KernelFamily::Gaussian => {
                let z = libm::erf(l / (std::f64::consts::SQRT_2 * r));
                (-0.5 * x * x / (r * r)).exp() / ((2.0 * PI).sqrt() * r * z)
            }
        }
    }

    /// Kernel value at `x`, extended `2L`-periodically.
    pub fn evaluate(&self, x: f64) -> f64 {
        let l = self.half_length;
        let mut y = (x + l).rem_euclid(2.0 * l) - l;
        // Keep the boundary point symmetric.
        if (y + l).abs() < 1e-15 * l {
            y = l;
        }
        self.scale() * self.profile(y)
    }

    /// `C_n = (2L)^{-1} ∫ cos(nπy/L) G(y) dy`; even in `n`.
    pub fn fourier_coefficient(&self, n: i64) -> f64 {
        let n = n.unsigned_abs() as f64;
        let (r, l) = (self.radius, self.half_length);
        let q = n * PI / l;
        let mass_one = match self.family {
            KernelFamily::TopHat => sinc(q * r) / (2.0 * l),
            KernelFamily::Exponential => {
                let decay = (-l / r).exp();
                let sign = if (n as u64).is_multiple_of(2) { 1.0 } else { -1.0 };
                (1.0 - sign * decay) / ((1.0 + q * q * r * r) * (-(-l / r).exp_m1()) * 2.0 * l)
            }
            KernelFamily::Gaussian => {
                let half = quadrature::integrate(|y| (q * y).cos() * self.profile(y), 0.0, l, COEFF_TOL);
                half / l
            }
        };
        self.scale() * mass_one
    }

    pub fn coefficients(&self, n_max: usize) -> FourierCoefficients {
        FourierCoefficients {
            values: (0..=n_max as i64).map(|n| self.fourier_coefficient(n)).collect(),
            kernel: *self,
        }
    }
}

/// Cached `C_0, …, C_{n_max}` for one kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficients {
    values: Vec<f64>,
    kernel: Kernel,
}

impl FourierCoefficients {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `C_n` for `|n| <= n_max`; computed directly beyond the cache.
    pub fn get(&self, n: i64) -> f64 {
        let m = n.unsigned_abs() as usize;
        match self.values.get(m) {
            Some(&c) => c,
            None => self.kernel.fourier_coefficient(n),
        }
    }
}

/// Spectral convolution with a fixed kernel on a fixed grid. Owns its
/// scratch buffer, so give each worker its own instance.
#[derive(Debug, Clone)]
pub struct Convolver {
    transform: Arc<FourierTransform>,
    multipliers: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Convolver {
    pub fn new(kernel: &Kernel, transform: Arc<FourierTransform>) -> Result<Self> {
        let grid = *transform.grid();
        if (grid.half_length() - kernel.half_length()).abs() > 1e-12 * kernel.half_length() {
            return Err(Error::param(format!(
                "kernel half-length {} does not match grid half-length {}",
                kernel.half_length(),
                grid.half_length()
            )));
        }
        let coeffs = kernel.coefficients(grid.nyquist());
        let multipliers = (0..grid.len()).map(|j| coeffs.get(grid.mode(j))).collect();
        Ok(Convolver {
            transform,
            multipliers,
            scratch: vec![Complex64::new(0.0, 0.0); grid.len()],
        })
    }

    pub fn grid(&self) -> &Grid {
        self.transform.grid()
    }

    /// Multiplier applied at each raw DFT index.
    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn convolve_into(&mut self, field: &[f64], out: &mut [f64]) {
        self.transform.forward_raw(field, &mut self.scratch);
        for (c, m) in self.scratch.iter_mut().zip(&self.multipliers) {
            *c *= *m;
        }
        self.transform.inverse_raw(&mut self.scratch, out);
    }

    /// `∂_x (G ∗ field)`, Nyquist mode dropped.
    pub fn convolve_gradient_into(&mut self, field: &[f64], out: &mut [f64]) {
        let grid = *self.transform.grid();
        self.transform.forward_raw(field, &mut self.scratch);
        for (j, c) in self.scratch.iter_mut().enumerate() {
            *c = if j == grid.nyquist() {
                Complex64::new(0.0, 0.0)
            } else {
                *c * Complex64::new(0.0, grid.wavenumber(j) * self.multipliers[j])
            };
        }
        self.transform.inverse_raw(&mut self.scratch, out);
    }
}

/// Convenience wrapper building a one-off [`Convolver`].
pub fn convolve(kernel: &Kernel, transform: Arc<FourierTransform>, field: &[f64]) -> Result<Vec<f64>> {
    if field.len() != transform.grid().len() {
        return Err(Error::param("field length does not match grid"));
    }
    let mut conv = Convolver::new(kernel, transform)?;
    let mut out = vec![0.0; field.len()];
    conv.convolve_into(field, &mut out);
    Ok(out)
}

/// `(z(x + R) - z(x - R)) / (2R)`, the derivative of the unit-mass top-hat
/// average without the `(2L)^{-1}` prefactor. Shifts that land on the grid
/// lattice use index arithmetic; other shifts use Fourier phase factors.
pub fn convolved_gradient_tophat(field: &[f64], radius: f64, transform: &FourierTransform) -> Result<Vec<f64>> {
    let grid = *transform.grid();
    if field.len() != grid.len() {
        return Err(Error::param("field length does not match grid"));
    }
    if !(radius > 0.0 && radius < grid.half_length()) {
        return Err(Error::param(format!(
            "top-hat radius must satisfy 0 < R < L (R = {radius}, L = {})",
            grid.half_length()
        )));
    }
    let n = grid.len();
    let steps = radius / grid.spacing();
    if (steps - steps.round()).abs() < 1e-10 {
        let s = steps.round() as usize;
        return Ok((0..n)
            .map(|j| (field[(j + s) % n] - field[(j + n - s) % n]) / (2.0 * radius))
            .collect());
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    transform.forward_raw(field, &mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        *c = if j == grid.nyquist() {
            Complex64::new(0.0, 0.0)
        } else {
            *c * Complex64::new(0.0, (grid.wavenumber(j) * radius).sin() / radius)
        };
    }
    let mut out = vec![0.0; n];
    transform.inverse_raw(&mut buf, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_kernels(r: f64) -> Vec<Kernel> {
        let mut out = Vec::new();
        for fam in [KernelFamily::TopHat, KernelFamily::Exponential, KernelFamily::Gaussian] {
            for norm in [Normalization::MassOne, Normalization::MeanOne] {
                out.push(Kernel::new(fam, r, PI, norm).unwrap());
            }
        }
        out
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(Kernel::top_hat(PI, PI).is_err());
        assert!(Kernel::top_hat(0.0, PI).is_err());
        assert!(Kernel::new(KernelFamily::Gaussian, 5.0, PI, Normalization::MassOne).is_ok());
        assert!(Kernel::new(KernelFamily::Exponential, -1.0, PI, Normalization::MassOne).is_err());
    }

    #[test]
    fn top_hat_closed_form_values() {
        let k = Kernel::top_hat(2.5, PI).unwrap();
        let expect = 2.5f64.sin() / (5.0 * PI);
        assert!((k.fourier_coefficient(1) - expect).abs() < 1e-15);
        assert!((expect - 0.038099).abs() < 1e-6);
        let mean = k.with_normalization(Normalization::MeanOne);
        assert!((mean.fourier_coefficient(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn top_hat_zero_at_radius_pi() {
        // R = π is outside the admissible range for the top-hat on (-π, π),
        // so check the closed form through a wider domain where sin(nR)=0.
        let k = Kernel::top_hat(PI, 2.0 * PI).unwrap();
        assert!(k.fourier_coefficient(2).abs() < 1e-16);
    }

    #[test]
    fn small_argument_series_is_continuous() {
        let t = SINC_SERIES_CUTOFF;
        assert!((sinc(t * (1.0 - 1e-9)) - sinc(t * (1.0 + 1e-9))).abs() < 1e-15);
        assert_eq!(sinc(0.0), 1.0);
    }

    #[test]
    fn kernels_are_even_nonnegative_and_normalized() {
        for k in all_kernels(1.3) {
            for &x in &[0.0, 0.4, 1.0, 2.0, 3.0] {
                assert!(k.evaluate(x) >= 0.0);
                assert!((k.evaluate(x) - k.evaluate(-x)).abs() < 1e-15);
            }
            let breaks: &[f64] = if k.family() == KernelFamily::TopHat { &[-1.3, 1.3] } else { &[] };
            let mut pts = vec![-PI];
            pts.extend_from_slice(breaks);
            pts.push(PI);
            let total: f64 = pts
                .windows(2)
                .map(|w| quadrature::integrate(|x| k.evaluate(x), w[0], w[1], 1e-13))
                .sum();
            let expect = match k.normalization() {
                Normalization::MassOne => 1.0,
                Normalization::MeanOne => 2.0 * PI,
            };
            assert!((total - expect).abs() < 1e-10, "{:?}: {total}", k);
        }
    }

    #[test]
    fn coefficients_match_quadrature() {
        for k in all_kernels(0.9) {
            for n in 0..8i64 {
                let q = n as f64;
                let f = |y: f64| (q * y).cos() * k.evaluate(y);
                let quad = if k.family() == KernelFamily::TopHat {
                    quadrature::integrate(f, -0.9, 0.9, 1e-14)
                } else {
                    quadrature::integrate(f, -PI, PI, 1e-14)
                } / (2.0 * PI);
                assert!((quad - k.fourier_coefficient(n)).abs() < 1e-10, "{:?} n={n}", k.family());
                assert_eq!(k.fourier_coefficient(n), k.fourier_coefficient(-n));
            }
        }
    }

    #[test]
    fn coefficients_are_square_summable() {
        let c = Kernel::top_hat(2.5, PI).unwrap().coefficients(512);
        let tail: f64 = c.values()[256..].iter().map(|v| v * v).sum();
        assert!(tail.is_finite() && tail < 1e-4);
        assert_eq!(c.n_max(), 512);
        assert_eq!(c.get(600), c.kernel().fourier_coefficient(600));
    }

    #[test]
    fn trig_modes_are_eigenfunctions() {
        let t = FourierTransform::shared(Grid::new(64, PI).unwrap());
        for k in all_kernels(2.5) {
            let mut conv = Convolver::new(&k, t.clone()).unwrap();
            for n in 1..=10 {
                let nf = n as f64;
                let c = k.fourier_coefficient(n);
                for phase in [0.0, PI / 2.0] {
                    let f = t.grid().sample(|x| (nf * x + phase).cos());
                    let mut out = vec![0.0; 64];
                    conv.convolve_into(&f, &mut out);
                    let expect: Vec<f64> = f.iter().map(|v| c * v).collect();
                    assert!(max_diff(&out, &expect) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn mean_one_preserves_constants() {
        let t = FourierTransform::shared(Grid::new(32, PI).unwrap());
        let k = Kernel::new(KernelFamily::Gaussian, 0.7, PI, Normalization::MeanOne).unwrap();
        let out = convolve(&k, t, &[3.5; 32]).unwrap();
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-10));
    }

    #[test]
    fn convolver_rejects_mismatched_domain() {
        let t = FourierTransform::shared(Grid::new(32, 2.0).unwrap());
        assert!(Convolver::new(&Kernel::top_hat(1.0, PI).unwrap(), t).is_err());
    }

    #[test]
    fn shift_gradient_of_constant_is_zero() {
        let t = FourierTransform::new(Grid::new(64, PI).unwrap());
        let out = convolved_gradient_tophat(&[2.0; 64], 1.1, &t).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn shift_gradient_of_cosine() {
        let t = FourierTransform::new(Grid::new(64, PI).unwrap());
        let f = t.grid().sample(f64::cos);
        let expect = t.grid().sample(|x| -2.0 / PI * x.sin());
        // R = π/2 sits on the lattice for N = 64.
        let on = convolved_gradient_tophat(&f, PI / 2.0, &t).unwrap();
        assert!(max_diff(&on, &expect) < 1e-13);
        let r = 1.234;
        let off = convolved_gradient_tophat(&f, r, &t).unwrap();
        let expect_off = t.grid().sample(|x| ((x + r).cos() - (x - r).cos()) / (2.0 * r));
        assert!(max_diff(&off, &expect_off) < 1e-12);
    }

    #[test]
    fn shift_gradient_matches_spectral_gradient_of_convolution() {
        // Mass-one top-hat without the (2L)^{-1} prefactor equals 2L times the
        // spectral convolution used by the solver.
        let t = FourierTransform::shared(Grid::new(64, PI).unwrap());
        let k = Kernel::top_hat(1.7, PI).unwrap();
        let mut conv = Convolver::new(&k, t.clone()).unwrap();
        let f = t.grid().sample(|x| (x.sin() + 0.3 * (4.0 * x).cos()).exp());
        let mut spec = vec![0.0; 64];
        conv.convolve_gradient_into(&f, &mut spec);
        let spec: Vec<f64> = spec.iter().map(|v| v * 2.0 * PI).collect();
        let shift = convolved_gradient_tophat(&f, 1.7, &t).unwrap();
        assert!(max_diff(&spec, &shift) < 1e-10);
    }

    fn norm_p(v: &[f64], p: f64, dx: f64) -> f64 {
        if p.is_infinite() {
            v.iter().fold(0.0, |m, x| m.max(x.abs()))
        } else {
            (v.iter().map(|x| x.abs().powf(p)).sum::<f64>() * dx).powf(1.0 / p)
        }
    }

    #[test]
    fn shift_gradient_lp_bound_on_random_fields() {
        let t = FourierTransform::new(Grid::new(128, PI).unwrap());
        let dx = t.grid().spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..50 {
            let steps = 1 + trial % 60;
            let r = steps as f64 * dx;
            let f: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = convolved_gradient_tophat(&f, r, &t).unwrap();
            for p in [1.0, 2.0, f64::INFINITY] {
                assert!(norm_p(&g, p, dx) <= norm_p(&f, p, dx) / r * (1.0 + 1e-12));
            }
        }
    }
}
