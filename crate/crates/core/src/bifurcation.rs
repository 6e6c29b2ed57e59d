//! Pitchfork normal form at `α = α_n`: the second-order correction `Θ`,
//! the curvature `α_n''(0)`, branch direction and stability, and a
//! simulation-based onset probe.
//!
//! Two routes to `α_n''(0)` are kept side by side. The assembled route
//! builds the multilinear forms of the steady-state operator on a grid and
//! takes inner products with the adjoint null vector; the printed route
//! evaluates the published closed forms as written. They are compared and
//! never reconciled.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Convolver, Kernel, KernelFamily, Normalization};
use crate::linstab::{self, laplacian_eigenvalue, StabilityWindow};
use crate::model::{GrowthVariant, ModelParams, SteadyStateBundle, System};
use crate::solver::{self, InitialCondition, SimConfig, StopRule};
use crate::spectral::{FourierTransform, Grid};

/// `|α''(0)|` below this is treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// Relative tolerance for agreement between the two `α''(0)` routes.
pub const AGREEMENT_TOL: f64 = 1e-8;

/// `Θ₁ = Θ₁¹ + Θ₁² cos(2nπx/L)`, `Θ₂ = Θ₂¹ + Θ₂² cos(2nπx/L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaCoefficients {
    pub theta_1_1: f64,
    pub theta_1_2: f64,
    pub theta_2_1: f64,
    pub theta_2_2: f64,
}

struct ModeData {
    alpha: f64,
    l_n: f64,
    c_n: f64,
    c_2n: f64,
    /// k-component of the null vector `(1, a) cos`.
    a: f64,
    /// k-component of the adjoint null vector `(1, r) cos`.
    r: f64,
}

fn mode_data(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Result<ModeData> {
    if n == 0 {
        return Err(Error::param("bifurcation analysis needs n >= 1"));
    }
    let alpha = linstab::bifurcation_alpha(params, s, kernel, n).ok_or_else(|| {
        Error::Degenerate(format!("threshold undefined for mode {n} (C_n(G) = 0 or h_u = 0)"))
    })?;
    Ok(ModeData {
        alpha,
        l_n: laplacian_eigenvalue(n, params.half_length),
        c_n: kernel.fourier_coefficient(n as i64),
        c_2n: kernel.fourier_coefficient(2 * n as i64),
        a: -s.h_u / s.h_k,
        r: (params.d * laplacian_eigenvalue(n, params.half_length) - s.f_u) / s.h_u,
    })
}

fn check_denominator(value: f64, scale: f64, what: &str) -> Result<()> {
    if value.abs() <= 1e-12 * scale.abs().max(1.0) || !value.is_finite() {
        return Err(Error::Degenerate(format!("{what} vanishes ({value:e})")));
    }
    Ok(())
}

fn theta_with(
    params: &ModelParams,
    s: &SteadyStateBundle,
    m: &ModeData,
    c_2n: f64,
    h_kk_term: bool,
) -> Result<ThetaCoefficients> {
    let (d, l, a, al) = (params.d, m.l_n, m.a, m.alpha);
    let q = s.h_uu + 2.0 * a * s.h_uk + if h_kk_term { a * a * s.h_kk } else { 0.0 };
    check_denominator(s.f_u * s.h_k, s.f_u.abs() * s.h_k.abs(), "f_u h_k")?;
    let theta_1_1 = -s.f_uu / (2.0 * s.f_u);
    let theta_2_1 = (s.h_u * s.f_uu - s.f_u * q) / (2.0 * s.f_u * s.h_k);
    let den = s.h_k * (s.f_u - 4.0 * d * l) + 4.0 * al * s.u_star * s.h_u * l * c_2n;
    check_denominator(den, s.h_k * (s.f_u - 4.0 * d * l), "2n-mode determinant")?;
    let e = 0.5 * s.f_uu - 2.0 * al * a * m.c_n * l;
    Ok(ThetaCoefficients {
        theta_1_1,
        theta_1_2: -(s.h_k * e + 2.0 * al * s.u_star * l * c_2n * q) / den,
        theta_2_1,
        theta_2_2: (s.h_u * e - 0.5 * (s.f_u - 4.0 * d * l) * q) / den,
    })
}

/// `Θ` solving `F_UU[φ, φ] + F_U[Θ] = 0` with `φ = (1, -h_u/h_k) cos(nπx/L)`.
/// The `cos(2nπx/L)` block couples through `C_{2n}(G)`.
pub fn theta_coefficients(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Result<ThetaCoefficients> {
    let m = mode_data(params, s, kernel, n)?;
    theta_with(params, s, &m, m.c_2n, true)
}

/// The published closed forms, which carry `C_n(G)` in the `2n` block and
/// omit `h_kk`.
pub fn theta_coefficients_printed(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Result<ThetaCoefficients> {
    let m = mode_data(params, s, kernel, n)?;
    theta_with(params, s, &m, m.c_n, false)
}

/// Grid evaluation of the multilinear forms of the steady-state operator
/// `F(α, u, k) = (d u_xx + α(u k̄_x)_x + f(u), h(u, k))` at the constant state.
struct Forms<'a> {
    params: &'a ModelParams,
    s: &'a SteadyStateBundle,
    alpha: f64,
    grid: Grid,
    transform: Arc<FourierTransform>,
    conv: Convolver,
}

type Pair = (Vec<f64>, Vec<f64>);

impl<'a> Forms<'a> {
    fn new(params: &'a ModelParams, s: &'a SteadyStateBundle, kernel: &Kernel, alpha: f64, n: u64) -> Result<Self> {
        let size = (8 * n as usize).max(64);
        let grid = Grid::new(size + size % 2, params.half_length)?;
        let transform = FourierTransform::shared(grid);
        let conv = Convolver::new(kernel, transform.clone())?;
        Ok(Forms { params, s, alpha, grid, transform, conv })
    }

    fn dx(&self, f: &[f64]) -> Vec<f64> {
        self.multiplier(f, |q| Complex64::new(0.0, q))
    }

    fn dxx(&self, f: &[f64]) -> Vec<f64> {
        self.multiplier(f, |q| Complex64::new(-q * q, 0.0))
    }

    fn multiplier(&self, f: &[f64], m: impl Fn(f64) -> Complex64) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); f.len()];
        self.transform.forward_raw(f, &mut buf);
        for (j, c) in buf.iter_mut().enumerate() {
            *c = if j == self.grid.nyquist() { Complex64::new(0.0, 0.0) } else { *c * m(self.grid.wavenumber(j)) };
        }
        let mut out = vec![0.0; f.len()];
        self.transform.inverse_raw(&mut buf, &mut out);
        out
    }

    fn bar_x(&mut self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.conv.convolve_gradient_into(f, &mut out);
        out
    }

    fn f_u(&mut self, v: &Pair) -> Pair {
        let s = self.s;
        let vxx = self.dxx(&v.0);
        let bx = self.bar_x(&v.1);
        let flux: Vec<f64> = bx.iter().map(|b| s.u_star * b).collect();
        let div = self.dx(&flux);
        let first = (0..v.0.len())
            .map(|j| self.params.d * vxx[j] + self.alpha * div[j] + s.f_u * v.0[j])
            .collect();
        let second = (0..v.0.len()).map(|j| s.h_u * v.0[j] + s.h_k * v.1[j]).collect();
        (first, second)
    }

    fn f_uu(&mut self, v: &Pair, w: &Pair) -> Pair {
        let s = self.s;
        let vb = self.bar_x(&v.1);
        let wb = self.bar_x(&w.1);
        let flux: Vec<f64> = (0..v.0.len()).map(|j| v.0[j] * wb[j] + w.0[j] * vb[j]).collect();
        let div = self.dx(&flux);
        let first = (0..v.0.len()).map(|j| self.alpha * div[j] + s.f_uu * v.0[j] * w.0[j]).collect();
        let second = (0..v.0.len())
            .map(|j| s.h_uu * v.0[j] * w.0[j] + s.h_uk * (v.0[j] * w.1[j] + v.1[j] * w.0[j]) + s.h_kk * v.1[j] * w.1[j])
            .collect();
        (first, second)
    }

    fn f_uuu(&self, v: &Pair) -> Pair {
        let s = self.s;
        let first = v.0.iter().map(|x| s.f_uuu * x * x * x).collect();
        let second = (0..v.0.len())
            .map(|j| {
                let (p, q) = (v.0[j], v.1[j]);
                s.h_uuu * p * p * p + 3.0 * s.h_uuk * p * p * q + 3.0 * s.h_ukk * p * q * q + s.h_kkk * q * q * q
            })
            .collect();
        (first, second)
    }

    fn f_alpha_u(&mut self, v: &Pair) -> Pair {
        let bx = self.bar_x(&v.1);
        let flux: Vec<f64> = bx.iter().map(|b| self.s.u_star * b).collect();
        (self.dx(&flux), vec![0.0; v.0.len()])
    }

    fn inner(&self, a: &Pair, b: &Pair) -> f64 {
        let dx = self.grid.spacing();
        (0..a.0.len()).map(|j| a.0[j] * b.0[j] + a.1[j] * b.1[j]).sum::<f64>() * dx
    }

    fn mode(&self, n: u64, c: (f64, f64)) -> Pair {
        let q = n as f64 * PI / self.grid.half_length();
        (self.grid.sample(|x| c.0 * (q * x).cos()), self.grid.sample(|x| c.1 * (q * x).cos()))
    }

    fn theta(&self, n: u64, t: &ThetaCoefficients) -> Pair {
        let q = 2.0 * n as f64 * PI / self.grid.half_length();
        (
            self.grid.sample(|x| t.theta_1_1 + t.theta_1_2 * (q * x).cos()),
            self.grid.sample(|x| t.theta_2_1 + t.theta_2_2 * (q * x).cos()),
        )
    }
}

/// Sup-norm of `F_UU[φ, φ] + F_U[Θ]` on a grid resolving modes up to `3n`.
pub fn theta_residual(
    params: &ModelParams,
    s: &SteadyStateBundle,
    kernel: &Kernel,
    n: u64,
    theta: &ThetaCoefficients,
) -> Result<f64> {
    let m = mode_data(params, s, kernel, n)?;
    let mut forms = Forms::new(params, s, kernel, m.alpha, n)?;
    let phi = forms.mode(n, (1.0, m.a));
    let th = forms.theta(n, theta);
    let quad = forms.f_uu(&phi, &phi);
    let lin = forms.f_u(&th);
    Ok(quad
        .0
        .iter()
        .zip(&lin.0)
        .chain(quad.1.iter().zip(&lin.1))
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaSecond {
    /// Inner-product assembly with the solved `Θ`.
    pub assembled: f64,
    /// Published general closed form with the published `Θ`.
    pub printed: f64,
    /// Published specialization for the saturating preset
    /// (`d = μ = β = 1`, `ρ = 5`, `L = π`, mass-one top-hat); `None` otherwise.
    pub printed_case_one: Option<f64>,
}

impl AlphaSecond {
    pub fn relative_gap(&self) -> f64 {
        (self.assembled - self.printed).abs() / self.assembled.abs().max(self.printed.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn paths_agree(&self) -> bool {
        self.relative_gap() <= AGREEMENT_TOL
    }
}

fn assembled_second(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64, sign: f64) -> Result<f64> {
    let m = mode_data(params, s, kernel, n)?;
    let theta = theta_with(params, s, &m, m.c_2n, true)?;
    let mut forms = Forms::new(params, s, kernel, m.alpha, n)?;
    let phi = forms.mode(n, (sign, sign * m.a));
    let zeta = forms.mode(n, (1.0, m.r));
    let th = forms.theta(n, &theta);
    let cubic = forms.inner(&zeta, &forms.f_uuu(&phi));
    let mixed = {
        let v = forms.f_uu(&phi, &th);
        forms.inner(&zeta, &v)
    };
    let drive = {
        let v = forms.f_alpha_u(&phi);
        forms.inner(&zeta, &v)
    };
    check_denominator(drive, 1.0, "<ζ, F_αU[φ]>")?;
    Ok(-cubic / (3.0 * drive) - mixed / drive)
}

fn printed_second(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Result<f64> {
    let m = mode_data(params, s, kernel, n)?;
    let t = theta_with(params, s, &m, m.c_n, false)?;
    let (al, l, c, r) = (m.alpha, m.l_n, m.c_n, m.r);
    let hh = s.h_u / s.h_k;
    let num = 0.5 * (s.f_uuu + r * s.g_uuu)
        + s.f_uu * (t.theta_1_1 + 0.5 * t.theta_1_2)
        + al * hh * l * c * (t.theta_1_1 - 0.5 * t.theta_1_2)
        - al * l * c * t.theta_2_2
        + r * ((s.h_uu - s.h_uk * hh) * (t.theta_1_1 + 0.5 * t.theta_1_2) + s.h_uk * (t.theta_2_1 + 0.5 * t.theta_2_2));
    let den = hh * l * c;
    check_denominator(den, 1.0, "h_u/h_k l_n C_n")?;
    Ok(num / den)
}

fn is_case_one(params: &ModelParams, kernel: &Kernel) -> bool {
    params.system == System::A
        && params.growth == GrowthVariant::Saturating
        && params.d == 1.0
        && params.mu == 1.0
        && params.beta == 1.0
        && params.rho == 5.0
        && (params.half_length - PI).abs() < 1e-15
        && kernel.family() == KernelFamily::TopHat
        && kernel.normalization() == Normalization::MassOne
}

/// `(-2n⁴ - 143n²/24 - 5/24) / (-(5/4) n² C_n(G))`.
pub fn printed_case_one_second(kernel: &Kernel, n: u64) -> f64 {
    let nf = n as f64;
    let n2 = nf * nf;
    (-2.0 * n2 * n2 - 143.0 / 24.0 * n2 - 5.0 / 24.0) / (-1.25 * n2 * kernel.fourier_coefficient(n as i64))
}

pub fn alpha_second_derivative(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Result<AlphaSecond> {
    Ok(AlphaSecond {
        assembled: assembled_second(params, s, kernel, n, 1.0)?,
        printed: printed_second(params, s, kernel, n)?,
        printed_case_one: is_case_one(params, kernel).then(|| printed_case_one_second(kernel, n)),
    })
}

/// Assembled `α''(0)` along `-φ`; equal to the `+φ` value by evenness.
pub fn alpha_second_reflected(params: &ModelParams, s: &SteadyStateBundle, kernel: &Kernel, n: u64) -> Result<f64> {
    assembled_second(params, s, kernel, n, -1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStability {
    Stable,
    Unstable,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BifurcationPoint {
    pub n: u64,
    pub alpha_n: f64,
    /// Assembled `α''(0)`; drives the classification.
    pub alpha_second: f64,
    pub alpha_second_printed: f64,
    pub alpha_second_printed_case_one: Option<f64>,
    pub paths_agree: bool,
    /// Direction the printed value would give, for comparison.
    pub printed_direction: Direction,
    pub direction: Direction,
    pub branch_stability: BranchStability,
    /// `r'(α_n) = u_* h_u C_n l_n / B_n`.
    pub r_prime: f64,
    pub is_endpoint: bool,
}

fn direction_of(a2: f64) -> Direction {
    if a2 > DEGENERATE_TOL {
        Direction::Forward
    } else if a2 < -DEGENERATE_TOL {
        Direction::Backward
    } else {
        Direction::Degenerate
    }
}

pub fn classify_pitchfork(
    params: &ModelParams,
    s: &SteadyStateBundle,
    kernel: &Kernel,
    n: u64,
    window: &StabilityWindow,
) -> Result<BifurcationPoint> {
    let m = mode_data(params, s, kernel, n)?;
    let a2 = alpha_second_derivative(params, s, kernel, n)?;
    let direction = direction_of(a2.assembled);
    let b_n = s.tr_j - params.d * m.l_n;
    let r_prime = s.u_star * s.h_u * m.c_n * m.l_n / b_n;
    let at_right = window.n_r == Some(n) && m.alpha > 0.0;
    let at_left = window.n_l == Some(n) && m.alpha < 0.0;
    let branch_stability = match direction {
        Direction::Degenerate => BranchStability::Undetermined,
        Direction::Forward if at_right => BranchStability::Stable,
        Direction::Backward if at_left => BranchStability::Stable,
        _ => BranchStability::Unstable,
    };
    Ok(BifurcationPoint {
        n,
        alpha_n: m.alpha,
        alpha_second: a2.assembled,
        alpha_second_printed: a2.printed,
        alpha_second_printed_case_one: a2.printed_case_one,
        paths_agree: a2.paths_agree(),
        printed_direction: direction_of(a2.printed),
        direction,
        branch_stability,
        r_prime,
        is_endpoint: at_right || at_left,
    })
}

/// Leading-order branch amplitude `sqrt(2(α - α_n)/α''(0))`, when real.
pub fn predicted_amplitude(alpha: f64, alpha_n: f64, alpha_second: f64) -> Option<f64> {
    let s2 = 2.0 * (alpha - alpha_n) / alpha_second;
    (s2 >= 0.0 && s2.is_finite()).then(|| s2.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OnsetKind {
    Supercritical,
    Subcritical,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnsetOptions {
    pub grid_n: usize,
    pub t_max: f64,
    /// Tolerance on `(max|Δu| + max|Δk|)/dt`.
    pub tol: f64,
    /// Relative offsets past the threshold, e.g. `α_n(1 + 0.02)`.
    pub beyond: [f64; 2],
    /// Relative offset back inside the window for the hysteresis run.
    pub inside: f64,
    pub epsilon: f64,
}

impl Default for OnsetOptions {
    fn default() -> Self {
        OnsetOptions {
            grid_n: 32,
            t_max: 20000.0,
            tol: 1e-8,
            beyond: [0.02, 0.04],
            inside: 0.02,
            epsilon: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnsetRun {
    pub alpha: f64,
    /// `2|c_n|` of u in the final state.
    pub amplitude: f64,
    pub dominant_mode: u64,
    pub converged: bool,
    pub final_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnsetProbe {
    pub n: u64,
    pub alpha_n: f64,
    pub kind: OnsetKind,
    pub beyond: Vec<OnsetRun>,
    /// Run started from the pattern at the larger offset, placed back
    /// inside the window.
    pub hysteresis: OnsetRun,
    /// `A(2δ)² / A(δ)²`; close to 2 for a continuous onset.
    pub amplitude_ratio_sq: f64,
}

/// Amplitude below which the hysteresis run counts as having returned to
/// the constant state.
const RETURN_AMPLITUDE: f64 = 1e-3;

/// Runs the solver just past `α_n` and once back inside the window. A
/// pattern that survives inside the window marks a subcritical onset; one
/// that decays while the amplitude grows with the offset marks a
/// supercritical onset.
pub fn probe_onset(params: &ModelParams, kernel: &Kernel, n: u64, opts: &OnsetOptions) -> Result<OnsetProbe> {
    let s = params.steady_state()?;
    let m = mode_data(params, &s, kernel, n)?;
    if 3 * n as usize >= opts.grid_n {
        return Err(Error::param(format!("mode {n} is not resolved on N = {}", opts.grid_n)));
    }
    let run = |alpha: f64, ic: InitialCondition| -> Result<(OnsetRun, solver::SimResult)> {
        let mut c = SimConfig::new(params.with_alpha(alpha), *kernel, opts.grid_n);
        c.t_max = opts.t_max;
        c.steady_tol = opts.tol;
        c.stop_rule = StopRule::RatePerTime;
        c.record_every = u64::MAX;
        c.ic = ic;
        let res = solver::run_to_steady(&c)?;
        let amplitude = solver::mode_amplitudes(&res.u, n as usize)[n as usize - 1];
        Ok((
            OnsetRun {
                alpha,
                amplitude,
                dominant_mode: res.dominant_u_mode().0,
                converged: res.converged,
                final_time: res.final_time,
            },
            res,
        ))
    };
    let seed = InitialCondition::ConstantPlusMode { n, epsilon: opts.epsilon, shape: [1.0, m.a] };
    let (first, _) = run(m.alpha * (1.0 + opts.beyond[0]), seed.clone())?;
    let (second, pattern) = run(m.alpha * (1.0 + opts.beyond[1]), seed)?;
    let (hysteresis, _) = run(
        m.alpha * (1.0 - opts.inside),
        InitialCondition::Explicit { u: pattern.u, k: pattern.k },
    )?;
    let ratio = (second.amplitude / first.amplitude).powi(2);
    let expected = opts.beyond[1] / opts.beyond[0];
    let kind = if hysteresis.amplitude > 0.5 * second.amplitude.max(RETURN_AMPLITUDE) {
        OnsetKind::Subcritical
    } else if hysteresis.amplitude < RETURN_AMPLITUDE
        && first.amplitude > RETURN_AMPLITUDE
        && ratio > 1.0 + 0.25 * (expected - 1.0)
    {
        OnsetKind::Supercritical
    } else {
        OnsetKind::Indeterminate
    };
    Ok(OnsetProbe {
        n,
        alpha_n: m.alpha,
        kind,
        beyond: vec![first, second],
        hysteresis,
        amplitude_ratio_sq: ratio,
    })
}
