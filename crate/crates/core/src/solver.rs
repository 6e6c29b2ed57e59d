//! Pseudo-spectral forward-Euler integration of the coupled system and
//! mode diagnostics.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Convolver, Kernel};
use crate::linstab;
use crate::model::{Kinetics, ModelParams, BLOW_UP_FLOOR};
use crate::spectral::{dealias_mask, FourierTransform, Grid};

/// Fraction of the explicit diffusion limit `dx² / (2d)` used by default.
pub const CFL_SAFETY: f64 = 0.4;

/// Number of low modes tracked in the amplitude history.
pub const TRACKED_MODES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `(u, k) = (u_*, k_*) + ε·shape·cos(nπx/L)`.
    ConstantPlusMode { n: u64, epsilon: f64, shape: [f64; 2] },
    /// `u = u_* + ε·U(-1, 1)` pointwise, `k = k_*`.
    ConstantPlusSeededNoise { epsilon: f64, seed: u64 },
    Explicit { u: Vec<f64>, k: Vec<f64> },
}

/// How "subsequent steps agree" is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `max|Δu| + max|Δk| <= tol` for one step.
    PerStep,
    /// The same difference divided by `dt`.
    RatePerTime,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub kernel: Kernel,
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub steady_tol: f64,
    pub stop_rule: StopRule,
    pub ic: InitialCondition,
    /// Steps between amplitude-history snapshots.
    pub record_every: u64,
    pub dealias: bool,
    /// Halve `dt` and restart once if the run blows up.
    pub derate_on_blow_up: bool,
}

pub fn default_dt(n: usize, half_length: f64, d: f64) -> f64 {
    let dx = 2.0 * half_length / n as f64;
    CFL_SAFETY * dx * dx / (2.0 * d)
}

impl SimConfig {
    pub fn new(params: ModelParams, kernel: Kernel, n: usize) -> Self {
        let dt = default_dt(n, params.half_length, params.d);
        SimConfig {
            params,
            kernel,
            n,
            dt,
            t_max: 5000.0,
            steady_tol: 1e-6,
            stop_rule: StopRule::PerStep,
            ic: InitialCondition::ConstantPlusSeededNoise {
                epsilon: 0.01,
                seed: 42,
            },
            record_every: 100,
            dealias: true,
            derate_on_blow_up: true,
        }
    }

    pub fn validate(&self) -> Result<Grid> {
        self.params.validate()?;
        let grid = Grid::new(self.n, self.params.half_length)?;
        let limit = default_dt(self.n, self.params.half_length, self.params.d);
        if !(self.dt > 0.0) || self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "dt = {} exceeds the explicit limit {limit:.3e} for N = {}",
                self.dt, self.n
            )));
        }
        if !(self.t_max > 0.0) || !(self.steady_tol > 0.0) {
            return Err(Error::param("t_max and steady_tol must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every must be at least 1"));
        }
        match &self.ic {
            InitialCondition::ConstantPlusMode { epsilon, .. }
            | InitialCondition::ConstantPlusSeededNoise { epsilon, .. }
                if !(*epsilon > 0.0) =>
            {
                return Err(Error::param("initial perturbation must be positive"));
            }
            InitialCondition::Explicit { u, k } if u.len() != self.n || k.len() != self.n => {
                return Err(Error::param("explicit initial fields must have N samples"));
            }
            _ => {}
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub u: Vec<f64>,
    pub k: Vec<f64>,
    pub t: f64,
    pub step: u64,
}

impl SimState {
    pub fn initial(config: &SimConfig) -> Result<Self> {
        let grid = config.validate()?;
        let s = config.params.steady_state()?;
        let (u, k) = match &config.ic {
            InitialCondition::ConstantPlusMode { n, epsilon, shape } => {
                let q = *n as f64 * std::f64::consts::PI / grid.half_length();
                (
                    grid.sample(|x| s.u_star + epsilon * shape[0] * (q * x).cos()),
                    grid.sample(|x| s.k_star + epsilon * shape[1] * (q * x).cos()),
                )
            }
            InitialCondition::ConstantPlusSeededNoise { epsilon, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (
                    (0..grid.len())
                        .map(|_| s.u_star + epsilon * rng.gen_range(-1.0..=1.0))
                        .collect(),
                    vec![s.k_star; grid.len()],
                )
            }
            InitialCondition::Explicit { u, k } => (u.clone(), k.clone()),
        };
        Ok(SimState { u, k, t: 0.0, step: 0 })
    }
}

/// Reusable stepping machinery for one configuration.
pub struct Stepper {
    params: ModelParams,
    grid: Grid,
    transform: Arc<FourierTransform>,
    convolver: Convolver,
    mask: Vec<bool>,
    dealias: bool,
    dt: f64,
    kin: Kinetics,
    k_bar_x: Vec<f64>,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
    du: Vec<f64>,
}

impl Stepper {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let grid = config.validate()?;
        let transform = FourierTransform::shared(grid);
        let convolver = Convolver::new(&config.kernel, transform.clone())?;
        let n = grid.len();
        Ok(Stepper {
            params: config.params.clone(),
            grid,
            transform,
            convolver,
            mask: dealias_mask(&grid),
            dealias: config.dealias,
            dt: config.dt,
            kin: Kinetics::zeros(n),
            k_bar_x: vec![0.0; n],
            spec_a: vec![Complex64::new(0.0, 0.0); n],
            spec_b: vec![Complex64::new(0.0, 0.0); n],
            du: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time derivatives `(u_t, k_t)` at the given state.
    pub fn tendencies(&mut self, u: &[f64], k: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.evaluate(u, k)?;
        Ok((self.du.clone(), self.kin.dk.clone()))
    }

    fn evaluate(&mut self, u: &[f64], k: &[f64]) -> Result<()> {
        self.convolver.convolve_gradient_into(k, &mut self.k_bar_x);
        self.params.rhs_into(u, k, &self.k_bar_x, &mut self.kin)?;
        let (d, alpha) = (self.params.d, self.params.alpha);
        let nyq = self.grid.nyquist();

        // u_t = d u_xx + α (u k̄_x)_x + f(u), assembled in spectral space.
        self.transform.forward_raw(u, &mut self.spec_a);
        for (j, c) in self.spec_a.iter_mut().enumerate() {
            let q = self.grid.wavenumber(j);
            *c *= -d * q * q;
        }
        self.transform.forward_raw(&self.kin.flux, &mut self.spec_b);
        for (j, c) in self.spec_b.iter().enumerate() {
            if j != nyq && (!self.dealias || self.mask[j]) {
                self.spec_a[j] += *c * Complex64::new(0.0, alpha * self.grid.wavenumber(j));
            }
        }
        if self.dealias {
            self.transform.forward_raw(&self.kin.reaction, &mut self.spec_b);
            for (j, c) in self.spec_b.iter().enumerate() {
                if self.mask[j] {
                    self.spec_a[j] += *c;
                }
            }
            self.transform.inverse_raw(&mut self.spec_a, &mut self.du);

            self.transform.forward_raw(&self.kin.dk, &mut self.spec_b);
            for (c, &keep) in self.spec_b.iter_mut().zip(&self.mask) {
                if !keep {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
            let mut dk = std::mem::take(&mut self.kin.dk);
            self.transform.inverse_raw(&mut self.spec_b, &mut dk);
            self.kin.dk = dk;
        } else {
            self.transform.inverse_raw(&mut self.spec_a, &mut self.du);
            for (du, f) in self.du.iter_mut().zip(&self.kin.reaction) {
                *du += f;
            }
        }
        Ok(())
    }

    /// One forward-Euler step in place. Returns `max|Δu| + max|Δk|`.
    pub fn step(&mut self, state: &mut SimState) -> Result<f64> {
        self.evaluate(&state.u, &state.k).map_err(|e| relabel(e, state))?;
        let dt = self.dt;
        let (mut du_max, mut dk_max) = (0.0f64, 0.0f64);
        for j in 0..state.u.len() {
            let du = dt * self.du[j];
            let dk = dt * self.kin.dk[j];
            state.u[j] += du;
            state.k[j] += dk;
            du_max = du_max.max(du.abs());
            dk_max = dk_max.max(dk.abs());
        }
        state.t += dt;
        state.step += 1;
        let diff = du_max + dk_max;
        if !diff.is_finite() {
            return Err(Error::BlowUp {
                step: state.step,
                time: state.t,
                reason: "non-finite field values".into(),
            });
        }
        if let Some((j, &u)) = state
            .u
            .iter()
            .enumerate()
            .find(|(_, &u)| u < BLOW_UP_FLOOR)
        {
            return Err(Error::BlowUp {
                step: state.step,
                time: state.t,
                reason: format!("u = {u} at grid index {j}"),
            });
        }
        Ok(diff)
    }
}

fn relabel(e: Error, state: &SimState) -> Error {
    match e {
        Error::BlowUp { reason, .. } => Error::BlowUp {
            step: state.step,
            time: state.t,
            reason,
        },
        other => other,
    }
}

/// One step from `state`, returning the advanced state.
pub fn step(state: &SimState, config: &SimConfig) -> Result<SimState> {
    let mut stepper = Stepper::new(config)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSnapshot {
    pub t: f64,
    /// `2|c_n|` of u for `n = 1..=TRACKED_MODES`.
    pub u_modes: Vec<f64>,
    pub k_modes: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    /// Grid points on `(-L, L)`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub k: Vec<f64>,
    pub converged: bool,
    pub steps: u64,
    pub final_time: f64,
    pub dt: f64,
    pub derated: bool,
    pub last_diff: f64,
    pub history: Vec<ModeSnapshot>,
    pub u_min: f64,
    pub u_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// `sup_t ‖k(t)‖_∞` over the run.
    pub k_sup: f64,
    pub k0_sup: f64,
}

impl SimResult {
    pub fn dominant_u_mode(&self) -> (u64, f64) {
        dominant_mode(&self.u)
    }
}

/// Amplitudes `2|c_n|`, `n = 1..=count`, of a real field on a uniform grid.
pub fn mode_amplitudes(field: &[f64], count: usize) -> Vec<f64> {
    let n = field.len();
    let coeffs = raw_coefficients(field);
    (1..=count.min(n / 2))
        .map(|m| if 2 * m == n { coeffs[m].norm() } else { 2.0 * coeffs[m].norm() })
        .collect()
}

fn raw_coefficients(field: &[f64]) -> Vec<Complex64> {
    let n = field.len();
    let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v / n as f64, 0.0)).collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Mode `n >= 1` with the largest amplitude `2|c_n|`, or `(0, 0)` for a
/// numerically constant field.
pub fn dominant_mode(field: &[f64]) -> (u64, f64) {
    let amps = mode_amplitudes(field, field.len() / 2);
    let (i, a) = amps
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, &a)| if a > best.1 { (i, a) } else { best });
    if a < 1e-12 {
        (0, 0.0)
    } else {
        (i as u64 + 1, a)
    }
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn run_once(config: &SimConfig) -> Result<SimResult> {
    let mut stepper = Stepper::new(config)?;
    let mut state = SimState::initial(config)?;
    let k0_sup = sup_abs(&state.k);
    let mut res = SimResult {
        x: stepper.grid().points(),
        u: Vec::new(),
        k: Vec::new(),
        converged: false,
        steps: 0,
        final_time: 0.0,
        dt: config.dt,
        derated: false,
        last_diff: f64::INFINITY,
        history: Vec::new(),
        u_min: f64::INFINITY,
        u_max: f64::NEG_INFINITY,
        k_min: f64::INFINITY,
        k_max: f64::NEG_INFINITY,
        k_sup: k0_sup,
        k0_sup,
    };
    let snapshot = |state: &SimState| ModeSnapshot {
        t: state.t,
        u_modes: mode_amplitudes(&state.u, TRACKED_MODES),
        k_modes: mode_amplitudes(&state.k, TRACKED_MODES),
    };
    let track = |res: &mut SimResult, state: &SimState| {
        for (&u, &k) in state.u.iter().zip(&state.k) {
            res.u_min = res.u_min.min(u);
            res.u_max = res.u_max.max(u);
            res.k_min = res.k_min.min(k);
            res.k_max = res.k_max.max(k);
            res.k_sup = res.k_sup.max(k.abs());
        }
    };
    track(&mut res, &state);
    res.history.push(snapshot(&state));
    let threshold = match config.stop_rule {
        StopRule::PerStep => config.steady_tol,
        StopRule::RatePerTime => config.steady_tol * config.dt,
    };
    while state.t < config.t_max {
        let diff = stepper.step(&mut state)?;
        track(&mut res, &state);
        res.last_diff = diff;
        if state.step % config.record_every == 0 {
            res.history.push(snapshot(&state));
        }
        if diff <= threshold {
            res.converged = true;
            break;
        }
    }
    if res.history.last().map(|s| s.t) != Some(state.t) {
        res.history.push(snapshot(&state));
    }
    res.steps = state.step;
    res.final_time = state.t;
    res.u = state.u;
    res.k = state.k;
    Ok(res)
}

/// Integrates until the stop rule is met or `t_max` is reached. A blow-up
/// is retried once with `dt / 2` when the config allows it.
pub fn run_to_steady(config: &SimConfig) -> Result<SimResult> {
    match run_once(config) {
        Err(Error::BlowUp { .. }) if config.derate_on_blow_up => {
            let mut retry = config.clone();
            retry.dt *= 0.5;
            retry.derate_on_blow_up = false;
            let mut res = run_once(&retry)?;
            res.derated = true;
            Ok(res)
        }
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthMeasurement {
    pub n: u64,
    pub alpha: f64,
    pub rate: f64,
    /// `Re λ⁺` from the dispersion relation, for reference.
    pub predicted: f64,
    pub horizon: f64,
    /// Set when the mode decayed to roundoff or grew past `10ε`.
    pub low_confidence: bool,
}

/// Seeds mode `n` along the leading eigenvector with amplitude `ε` and fits
/// the log-amplitude slope over `[0, horizon]`. Growing modes are cut off
/// once the amplitude could exceed `10ε`.
pub fn measure_growth_rate(
    params: &ModelParams,
    kernel: &Kernel,
    n: u64,
    epsilon: f64,
    horizon: f64,
    grid_n: usize,
) -> Result<GrowthMeasurement> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::param("growth probes need 0 < ε <= 1e-3"));
    }
    if n == 0 || n as usize >= grid_n / 3 {
        return Err(Error::param(format!("mode {n} is not resolved on N = {grid_n}")));
    }
    let s = params.steady_state()?;
    let disp = linstab::dispersion(params, &s, kernel, n);
    let lam = disp.lambda_plus;
    // Null vector of the second row, (λ - h_k, h_u), scaled to unit sup norm.
    let shape = if lam.im == 0.0 {
        let v = [lam.re - s.h_k, s.h_u];
        let m = v[0].abs().max(v[1].abs());
        [v[0] / m, v[1] / m]
    } else {
        [1.0, 0.0]
    };
    let mut horizon = horizon;
    if lam.re > 0.0 {
        horizon = horizon.min(10f64.ln() / lam.re);
    }
    let mut config = SimConfig::new(params.clone(), *kernel, grid_n);
    config.t_max = horizon;
    config.ic = InitialCondition::ConstantPlusMode { n, epsilon, shape };
    let mut stepper = Stepper::new(&config)?;
    let mut state = SimState::initial(&config)?;
    let stride = ((horizon / config.dt) as u64 / 200).max(1);
    let amp = |st: &SimState| {
        let cu = raw_coefficients(&st.u)[n as usize].norm();
        let ck = raw_coefficients(&st.k)[n as usize].norm();
        (cu * cu + ck * ck).sqrt()
    };
    let mut samples = vec![(0.0, amp(&state))];
    while state.t < horizon {
        stepper.step(&mut state)?;
        if state.step % stride == 0 {
            samples.push((state.t, amp(&state)));
        }
    }
    let mut low_confidence = false;
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(_, a)| {
            let ok = a > 1e-13;
            low_confidence |= !ok;
            ok
        })
        .collect();
    if usable.len() < 3 {
        return Ok(GrowthMeasurement {
            n,
            alpha: params.alpha,
            rate: f64::NAN,
            predicted: lam.re,
            horizon,
            low_confidence: true,
        });
    }
    let m = usable.len() as f64;
    let (st, sy) = usable.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y.ln()));
    let (tm, ym) = (st / m, sy / m);
    let (num, den) = usable.iter().fold((0.0, 0.0), |(a, b), &(t, y)| {
        (a + (t - tm) * (y.ln() - ym), b + (t - tm) * (t - tm))
    });
    if usable.last().is_some_and(|&(_, a)| a > 10.0 * epsilon) {
        low_confidence = true;
    }
    Ok(GrowthMeasurement {
        n,
        alpha: params.alpha,
        rate: num / den,
        predicted: lam.re,
        horizon,
        low_confidence,
    })
}
