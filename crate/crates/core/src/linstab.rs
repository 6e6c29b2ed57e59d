//! Linearization about the constant state: per-mode dispersion relation,
//! bifurcation thresholds `α_n` and the stability window `(α_l, α_r)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::kernels::{FourierCoefficients, Kernel};
use crate::model::{ModelParams, SteadyStateBundle};

/// Default mode truncation for window searches.
pub const DEFAULT_N_MAX: usize = 512;

/// `|λ⁺|` below this counts as a zero eigenvalue.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Laplacian eigenvalue `(nπ/L)²`.
pub fn laplacian_eigenvalue(n: u64, half_length: f64) -> f64 {
    let q = n as f64 * PI / half_length;
    q * q
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub n: u64,
    pub l_n: f64,
    /// Kernel coefficient `C_n(G)`.
    pub kernel_coeff: f64,
    pub b_n: f64,
    pub c_char: f64,
    #[serde(serialize_with = "ser_complex")]
    pub lambda_plus: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub lambda_minus: Complex64,
}

fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Roots of `λ² - Bλ + C = 0`, ordered so that `Re λ⁻ <= Re λ⁺`. The
/// small root is recovered from the product to avoid cancellation.
pub fn quadratic_roots(b: f64, c: f64) -> (Complex64, Complex64) {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let big = if b <= 0.0 { 0.5 * (b - s) } else { 0.5 * (b + s) };
        let small = if big != 0.0 { c / big } else { 0.0 };
        let (lo, hi) = if big <= small { (big, small) } else { (small, big) };
        (Complex64::new(hi, 0.0), Complex64::new(lo, 0.0))
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(0.5 * b, im), Complex64::new(0.5 * b, -im))
    }
}

/// Dispersion relation for mode `n` given the kernel coefficient.
pub fn dispersion_with_coeff(params: &ModelParams, s: &SteadyStateBundle, c_n: f64, n: u64) -> DispersionPoint {
    let l_n = laplacian_eigenvalue(n, params.half_length);
    let b_n = s.tr_j - params.d * l_n;
    let c_char = s.det_j + (params.alpha * s.u_star * s.h_u * c_n - params.d * s.h_k) * l_n;
    let (lambda_plus, lambda_minus) = quadratic_roots(b_n, c_char);
    DispersionPoint {
        n,
        l_n,
        kernel_coeff: c_n,
        b_n,
        c_char,
        lambda_plus,
        lambda_minus,
    }
}

pub fn dispersion(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> DispersionPoint {
    dispersion_with_coeff(params, s, kernel.fourier_coefficient(n as i64), n)
}

fn coefficient_vanishes(c_n: f64, c_0: f64) -> bool {
    c_n.abs() <= 1e-12 * c_0.abs().max(f64::MIN_POSITIVE)
}

/// Threshold `α_n` at which mode `n` acquires a zero eigenvalue, or `None`
/// when `C_n(G) = 0` or the coupling `u_* h_u` vanishes.
pub fn bifurcation_alpha_with_coeff(params: &ModelParams, s: &SteadyStateBundle, c_n: f64, c_0: f64, n: u64) -> Option<f64> {
    if n == 0 || coefficient_vanishes(c_n, c_0) {
        return None;
    }
    let l_n = laplacian_eigenvalue(n, params.half_length);
    let coupling = s.u_star * s.h_u * c_n * l_n;
    if coupling == 0.0 {
        return None;
    }
    let alpha = -(s.det_j - params.d * s.h_k * l_n) / coupling;
    alpha.is_finite().then_some(alpha)
}

pub fn bifurcation_alpha(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Option<f64> {
    bifurcation_alpha_with_coeff(
        params,
        s,
        kernel.fourier_coefficient(n as i64),
        kernel.fourier_coefficient(0),
        n,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityWindow {
    /// `max_{n ∈ Σ⁻} α_n`, negative.
    pub alpha_l: Option<f64>,
    /// `min_{n ∈ Σ⁺} α_n`, positive.
    pub alpha_r: Option<f64>,
    pub n_l: Option<u64>,
    pub n_r: Option<u64>,
    /// Modes with `α_n > 0`.
    pub sigma_plus: Vec<u64>,
    /// Modes with `α_n < 0`.
    pub sigma_minus: Vec<u64>,
    pub n_max: usize,
    pub warnings: Vec<String>,
}

impl StabilityWindow {
    pub fn contains(&self, alpha: f64) -> bool {
        self.alpha_l.is_none_or(|a| alpha > a) && self.alpha_r.is_none_or(|a| alpha < a)
    }

    /// Whether `n` attains either endpoint.
    pub fn is_endpoint(&self, n: u64) -> bool {
        self.n_l == Some(n) || self.n_r == Some(n)
    }
}

pub fn stability_window_with_coeffs(params: &ModelParams, s: &SteadyStateBundle, coeffs: &FourierCoefficients) -> StabilityWindow {
    let n_max = coeffs.n_max();
    let c_0 = coeffs.get(0);
    let mut w = StabilityWindow {
        alpha_l: None,
        alpha_r: None,
        n_l: None,
        n_r: None,
        sigma_plus: Vec::new(),
        sigma_minus: Vec::new(),
        n_max,
        warnings: Vec::new(),
    };
    for n in 1..=n_max as u64 {
        let Some(a) = bifurcation_alpha_with_coeff(params, s, coeffs.get(n as i64), c_0, n) else {
            continue;
        };
        if a > 0.0 {
            w.sigma_plus.push(n);
            if w.alpha_r.is_none_or(|r| a < r) {
                w.alpha_r = Some(a);
                w.n_r = Some(n);
            }
        } else if a < 0.0 {
            w.sigma_minus.push(n);
            if w.alpha_l.is_none_or(|l| a > l) {
                w.alpha_l = Some(a);
                w.n_l = Some(n);
            }
        }
    }
    if w.alpha_r.is_none() {
        w.warnings.push(format!("no mode n <= {n_max} has a positive threshold; window unbounded above"));
    }
    if w.alpha_l.is_none() {
        w.warnings.push(format!("no mode n <= {n_max} has a negative threshold; window unbounded below"));
    }
    w
}

pub fn stability_window(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n_max: usize) -> StabilityWindow {
    stability_window_with_coeffs(params, s, &kernel.coefficients(n_max.max(1)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable { modes: Vec<u64> },
    Marginal { n: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateClassification {
    pub alpha: f64,
    pub verdict: Verdict,
    /// Largest `Re λ⁺` over the inspected modes and the mode attaining it.
    pub max_growth: f64,
    pub max_growth_mode: u64,
    /// The infinite-multiplicity spectral point `h_k`.
    pub essential_point: f64,
    pub essential_negative: bool,
}

pub fn classify_constant_state(
    params: &ModelParams,
    s: &SteadyStateBundle,
    kernel: &Kernel,
    alpha: f64,
    n_max: usize,
) -> StateClassification {
    let p = params.with_alpha(alpha);
    let coeffs = kernel.coefficients(n_max.max(1));
    let mut unstable = Vec::new();
    let mut marginal = None;
    let mut max_growth = f64::NEG_INFINITY;
    let mut max_mode = 0;
    for n in 0..=coeffs.n_max() as u64 {
        let re = dispersion_with_coeff(&p, s, coeffs.get(n as i64), n).lambda_plus.re;
        if re > max_growth {
            max_growth = re;
            max_mode = n;
        }
        if re.abs() < MARGINAL_TOL {
            marginal.get_or_insert(n);
        } else if re > 0.0 {
            unstable.push(n);
        }
    }
    let verdict = if !unstable.is_empty() {
        Verdict::Unstable { modes: unstable }
    } else if let Some(n) = marginal {
        Verdict::Marginal { n }
    } else {
        Verdict::Stable
    };
    StateClassification {
        alpha,
        verdict,
        max_growth,
        max_growth_mode: max_mode,
        essential_point: s.h_k,
        essential_negative: s.h_k < 0.0,
    }
}
