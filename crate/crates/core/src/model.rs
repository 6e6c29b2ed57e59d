//! Model parameters, growth functions, constant steady states and the
//! partial-derivative bundle used by the stability and normal-form code.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Memory equation variant.
///
/// * `A`: `k_t = g(u) - (μ + βu) k`
/// * `B`: `k_t = g(u) (κ - k) - (μ + βu) k`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum System {
    A,
    B,
}

/// Value and first three derivatives of a scalar function at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Jet {
    pub fn new(value: f64, d1: f64, d2: f64, d3: f64) -> Self {
        Jet { value, d1, d2, d3 }
    }
}

pub type JetFn = Arc<dyn Fn(f64) -> Jet + Send + Sync>;

/// User-supplied growth functions with analytic derivatives.
#[derive(Clone)]
pub struct CustomGrowth {
    pub name: String,
    pub f: JetFn,
    pub g: JetFn,
}

impl fmt::Debug for CustomGrowth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomGrowth").field("name", &self.name).finish()
    }
}

impl Serialize for CustomGrowth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

/// Memory uptake `g`. The three presets pair with the logistic
/// `f(u) = u(1 - u)`:
///
/// * `Saturating`: `2ρu² / (1 + u²)`
/// * `Ratio`: `2ρu² / (1 + u)`
/// * `Quadratic`: `ρu²`
#[derive(Clone, Debug, Serialize)]
pub enum GrowthVariant {
    Saturating,
    Ratio,
    Quadratic,
    Custom(CustomGrowth),
}

impl PartialEq for GrowthVariant {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (GrowthVariant::Custom(a), GrowthVariant::Custom(b)) => {
                Arc::ptr_eq(&a.f, &b.f) && Arc::ptr_eq(&a.g, &b.g)
            }
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

/// Logistic growth `u(1 - u)`.
pub fn logistic(u: f64) -> Jet {
    Jet::new(u * (1.0 - u), 1.0 - 2.0 * u, -2.0, 0.0)
}

impl GrowthVariant {
    pub fn f(&self, u: f64) -> Jet {
        match self {
            GrowthVariant::Custom(c) => (c.f)(u),
            _ => logistic(u),
        }
    }

    pub fn g(&self, u: f64, rho: f64) -> Jet {
        match self {
            GrowthVariant::Saturating => {
                let s = 1.0 + u * u;
                Jet::new(
                    2.0 * rho * u * u / s,
                    4.0 * rho * u / (s * s),
                    4.0 * rho * (1.0 - 3.0 * u * u) / (s * s * s),
                    -48.0 * rho * u * (1.0 - u * u) / (s * s * s * s),
                )
            }
            GrowthVariant::Ratio => {
                let s = 1.0 + u;
                Jet::new(
                    2.0 * rho * u * u / s,
                    2.0 * rho * (1.0 - 1.0 / (s * s)),
                    4.0 * rho / (s * s * s),
                    -12.0 * rho / (s * s * s * s),
                )
            }
            GrowthVariant::Quadratic => Jet::new(rho * u * u, 2.0 * rho * u, 2.0 * rho, 0.0),
            GrowthVariant::Custom(c) => (c.g)(u),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            GrowthVariant::Saturating => "saturating",
            GrowthVariant::Ratio => "ratio",
            GrowthVariant::Quadratic => "quadratic",
            GrowthVariant::Custom(c) => &c.name,
        }
    }
}

/// The three preset experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    I,
    II,
    III,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub d: f64,
    pub alpha: f64,
    pub mu: f64,
    pub beta: f64,
    pub rho: f64,
    pub kappa: f64,
    pub half_length: f64,
    pub system: System,
    pub growth: GrowthVariant,
}

impl ModelParams {
    /// `d = μ = β = 1`, `ρ = 5`, `κ = 1`, `L = π`, `α = 0`.
    pub fn preset(case: Case) -> Self {
        let (system, growth) = match case {
            Case::I => (System::A, GrowthVariant::Saturating),
            Case::II => (System::A, GrowthVariant::Ratio),
            Case::III => (System::B, GrowthVariant::Quadratic),
        };
        ModelParams {
            d: 1.0,
            alpha: 0.0,
            mu: 1.0,
            beta: 1.0,
            rho: 5.0,
            kappa: 1.0,
            half_length: std::f64::consts::PI,
            system,
            growth,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        ModelParams {
            alpha,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.d,
            self.alpha,
            self.mu,
            self.beta,
            self.rho,
            self.kappa,
            self.half_length,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("parameters must be finite"));
        }
        if self.d <= 0.0 {
            return Err(Error::param(format!("d must be positive (got {})", self.d)));
        }
        if self.rho <= 0.0 {
            return Err(Error::param(format!("rho must be positive (got {})", self.rho)));
        }
        if self.half_length <= 0.0 {
            return Err(Error::param("half-length must be positive"));
        }
        if self.mu < 0.0 || self.beta < 0.0 {
            return Err(Error::param("mu and beta must be nonnegative"));
        }
        if self.mu + self.beta <= 0.0 {
            return Err(Error::param("mu + beta must be positive"));
        }
        if self.system == System::B && self.kappa <= 0.0 {
            return Err(Error::param(format!("kappa must be positive (got {})", self.kappa)));
        }
        Ok(())
    }

    pub fn f(&self, u: f64) -> Jet {
        self.growth.f(u)
    }

    pub fn g(&self, u: f64) -> Jet {
        self.growth.g(u, self.rho)
    }

    /// Right-hand side of the memory equation.
    pub fn h(&self, u: f64, k: f64) -> f64 {
        let g = self.g(u).value;
        match self.system {
            System::A => g - (self.mu + self.beta * u) * k,
            System::B => g * (self.kappa - k) - (self.mu + self.beta * u) * k,
        }
    }

    /// Constant steady state and all partials there.
    pub fn steady_state(&self) -> Result<SteadyStateBundle> {
        self.validate()?;
        let u = 1.0;
        let f = self.f(u);
        let g = self.g(u);
        let (mu, beta) = (self.mu, self.beta);
        let b = SteadyStateBundle::at(self, u, match self.system {
            System::A => g.value / (mu + beta * u),
            System::B => {
                let den = g.value + mu + beta * u;
                if den <= 0.0 {
                    return Err(Error::param("g(1) + mu + beta must be positive"));
                }
                self.kappa * g.value / den
            }
        });
        if f.value.abs() > 1e-12 {
            return Err(Error::param("f(1) must vanish at the constant state"));
        }
        Ok(b)
    }

    /// Pointwise kinetics on a grid. `k_bar_x` is the gradient of the
    /// convolved memory field; the transport divergence is left to the caller.
    pub fn rhs(&self, u: &[f64], k: &[f64], k_bar_x: &[f64]) -> Result<Kinetics> {
        let n = u.len();
        if k.len() != n || k_bar_x.len() != n {
            return Err(Error::param("u, k and k_bar_x must share a grid"));
        }
        let mut out = Kinetics {
            reaction: vec![0.0; n],
            flux: vec![0.0; n],
            dk: vec![0.0; n],
        };
        self.rhs_into(u, k, k_bar_x, &mut out)?;
        Ok(out)
    }

    pub fn rhs_into(&self, u: &[f64], k: &[f64], k_bar_x: &[f64], out: &mut Kinetics) -> Result<()> {
        for j in 0..u.len() {
            let uj = u[j];
            if uj < BLOW_UP_FLOOR || !uj.is_finite() || !k[j].is_finite() {
                return Err(Error::BlowUp {
                    step: 0,
                    time: 0.0,
                    reason: format!("u = {uj} at grid index {j}"),
                });
            }
            out.reaction[j] = self.f(uj).value;
            out.flux[j] = uj * k_bar_x[j];
            out.dk[j] = self.h(uj, k[j]);
        }
        Ok(())
    }

    /// Checks the structural hypotheses on `f`, `g` and, for system A,
    /// whether `g(z) <= M (μ + βz)` holds for some finite `M`.
    pub fn validate_hypotheses(&self) -> HypothesisReport {
        let mut notes = Vec::new();
        let f0 = self.f(0.0);
        let f1 = self.f(1.0);
        let h1 = f0.value.abs() < 1e-12 && f1.value.abs() < 1e-12 && f0.d1 > 0.0 && f1.d1 < 0.0;
        if !h1 {
            notes.push("f must satisfy f(0) = f(1) = 0, f'(0) > 0, f'(1) < 0".to_string());
        }
        let g0 = self.g(0.0).value;
        let g1 = self.g(1.0).value;
        let h2 = g0.abs() < 1e-12 && (g1 - self.rho).abs() <= 1e-12 * self.rho && self.rho > 0.0;
        if !h2 {
            notes.push(format!("g must satisfy g(0) = 0, g(1) = rho (got g(0) = {g0}, g(1) = {g1})"));
        }

        let (growth_bound, reference_bound, admissible) = match self.system {
            System::B => (None, None, h1 && h2),
            System::A => {
                let ratio = |z: f64| self.g(z).value / (self.mu + self.beta * z);
                let slope = (ratio(1e6) / ratio(1e5)).ln() / 10f64.ln();
                let reference = (self.beta > 0.0).then(|| 2.0 * self.rho / self.beta);
                if slope > 1e-2 || !slope.is_finite() {
                    notes.push("g grows faster than mu + beta z; no linear bound exists".to_string());
                    (None, reference, false)
                } else {
                    let m = sup_on_log_grid(ratio, 1e6);
                    (Some(m), reference, h1 && h2)
                }
            }
        };
        HypothesisReport {
            system: self.system,
            growth: self.growth.label().to_string(),
            h1,
            h2,
            admissible,
            growth_bound,
            reference_bound,
            notes,
        }
    }
}

/// `u` below this is treated as divergence rather than a transient.
pub const BLOW_UP_FLOOR: f64 = -0.1;

fn sup_on_log_grid(f: impl Fn(f64) -> f64, z_max: f64) -> f64 {
    let samples = 4000;
    let (lo, hi) = (1e-6f64.ln(), z_max.ln());
    let mut best = (f(0.0), 0.0);
    for i in 0..=samples {
        let z = (lo + (hi - lo) * i as f64 / samples as f64).exp();
        let v = f(z);
        if v > best.0 {
            best = (v, z);
        }
    }
    // Golden-section polish around the best sample.
    let step = ((hi - lo) / samples as f64).exp();
    let (mut a, mut b) = (best.1 / step, (best.1 * step).min(z_max));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.0.max(f(0.5 * (a + b)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub system: System,
    pub growth: String,
    pub h1: bool,
    pub h2: bool,
    pub admissible: bool,
    /// Tight `sup g(z) / (μ + βz)` over `z ∈ [0, 10⁶]` (system A only).
    pub growth_bound: Option<f64>,
    /// The closed-form bound `2ρ/β` (system A, `β > 0`).
    pub reference_bound: Option<f64>,
    pub notes: Vec<String>,
}

/// Pointwise kinetic terms on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Kinetics {
    /// `f(u)`
    pub reaction: Vec<f64>,
    /// `u k̄_x`
    pub flux: Vec<f64>,
    /// `h(u, k)`
    pub dk: Vec<f64>,
}

impl Kinetics {
    pub fn zeros(n: usize) -> Self {
        Kinetics {
            reaction: vec![0.0; n],
            flux: vec![0.0; n],
            dk: vec![0.0; n],
        }
    }
}

/// Constant steady state with the partials of `f`, `g` and `h` there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyStateBundle {
    pub u_star: f64,
    pub k_star: f64,
    pub f_u: f64,
    pub f_uu: f64,
    pub f_uuu: f64,
    pub g_u: f64,
    pub g_uu: f64,
    pub g_uuu: f64,
    pub h_u: f64,
    pub h_k: f64,
    pub h_uu: f64,
    pub h_uk: f64,
    pub h_kk: f64,
    pub h_uuu: f64,
    pub h_uuk: f64,
    pub h_ukk: f64,
    pub h_kkk: f64,
    pub tr_j: f64,
    pub det_j: f64,
}

impl SteadyStateBundle {
    /// Partials evaluated at an arbitrary point `(u, k)`.
    pub fn at(params: &ModelParams, u: f64, k: f64) -> Self {
        let f = params.f(u);
        let g = params.g(u);
        let (mu, beta) = (params.mu, params.beta);
        let (h_u, h_k, h_uu, h_uk, h_uuu, h_uuk) = match params.system {
            System::A => (g.d1 - beta * k, -(mu + beta * u), g.d2, -beta, g.d3, 0.0),
            System::B => {
                let free = params.kappa - k;
                (
                    g.d1 * free - beta * k,
                    -g.value - mu - beta * u,
                    g.d2 * free,
                    -g.d1 - beta,
                    g.d3 * free,
                    -g.d2,
                )
            }
        };
        SteadyStateBundle {
            u_star: u,
            k_star: k,
            f_u: f.d1,
            f_uu: f.d2,
            f_uuu: f.d3,
            g_u: g.d1,
            g_uu: g.d2,
            g_uuu: g.d3,
            h_u,
            h_k,
            h_uu,
            h_uk,
            h_kk: 0.0,
            h_uuu,
            h_uuk,
            h_ukk: 0.0,
            h_kkk: 0.0,
            tr_j: f.d1 + h_k,
            det_j: f.d1 * h_k,
        }
    }

    /// Eigenvalues of the kinetic Jacobian `[[f_u, 0], [h_u, h_k]]`.
    pub fn kinetic_eigenvalues(&self) -> (f64, f64) {
        (self.f_u, self.h_k)
    }

    pub fn is_kinetically_stable(&self) -> bool {
        self.tr_j < 0.0 && self.det_j > 0.0
    }
}
