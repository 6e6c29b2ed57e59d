//! Command-line front end: bifurcation curves, profile probes, stability
//! reports, pitchfork classification and single simulations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bifurcation::{self, BranchStability, OnsetKind, OnsetOptions};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily, Normalization};
use crate::linstab::{self, StabilityWindow};
use crate::model::{Case, ModelParams, System};
use crate::solver::{self, InitialCondition, SimConfig, SimResult, StopRule};

pub const SCHEMA_VERSION: u32 = 1;
pub const CURVE_SCHEMA: &str = "R,alpha_l,alpha_r,n_l,n_r,abs_alpha_l";
pub const PROFILE_SCHEMA: &str = "x,u,k";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseArg {
    I,
    Ii,
    Iii,
}

impl From<CaseArg> for Case {
    fn from(c: CaseArg) -> Case {
        match c {
            CaseArg::I => Case::I,
            CaseArg::Ii => Case::II,
            CaseArg::Iii => Case::III,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NormArg {
    MassOne,
    MeanOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    TopHat,
    Gaussian,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StopArg {
    PerStep,
    RatePerTime,
}

#[derive(Debug, Parser)]
#[command(name = "memoryscape", version, about = "Bifurcation analysis and simulation of memory-driven nonlocal advection")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the perceptual radius and write the stability window edges.
    BifurcationCurve {
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        /// Number of radii in the sweep.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Simulate just inside, just outside and at twice each window edge.
    Profiles {
        /// Offset from the window edges.
        #[arg(long)]
        offset: Option<f64>,
    },
    /// Linear stability report for the constant state at `--alpha`.
    Stability {
        /// Number of modes listed in the dispersion table.
        #[arg(long)]
        modes: Option<u64>,
    },
    /// Pitchfork direction, branch stability and empirical onset type.
    Classify {
        /// Mode to analyse; defaults to both window edges.
        #[arg(long = "mode")]
        mode: Option<u64>,
        /// Skip the simulation-based onset probe.
        #[arg(long)]
        no_probe: bool,
    },
    /// Run one simulation to steady state.
    Simulate,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, global = true, value_enum)]
    case: Option<CaseArg>,
    #[arg(long = "R", global = true)]
    radius: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long = "N", global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    tmax: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    stop_rule: Option<StopArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, value_enum)]
    normalization: Option<NormArg>,
    #[arg(long, global = true, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long, global = true)]
    d: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exit with status 4 when a run does not converge.
    #[arg(long, global = true)]
    strict: bool,
}

/// Keys accepted in a `--config` file. Every key is optional; flags win.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub case: Option<CaseArg>,
    pub d: Option<f64>,
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub kappa: Option<f64>,
    pub kernel: Option<KernelFamily>,
    pub normalization: Option<Normalization>,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "N")]
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub tol: Option<f64>,
    pub stop_rule: Option<StopRule>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub n_max: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_count: Option<usize>,
    pub offset: Option<f64>,
    pub modes: Option<u64>,
    pub mode: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub strict: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Keeps `self` where set, otherwise takes `other`.
    fn or(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: self.$f.or(other.$f)),* } };
        }
        pick!(
            case, d, mu, beta, rho, kappa, kernel, normalization, radius, alpha, grid_n, dt, tmax, tol, stop_rule,
            seed, epsilon, n_max, r_min, r_max, r_count, offset, modes, mode, jobs, out, strict
        )
    }
}

/// Fully resolved settings; embedded verbatim in every JSON output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub case: CaseArg,
    pub d: f64,
    pub mu: f64,
    pub beta: f64,
    pub rho: f64,
    pub kappa: f64,
    pub kernel: KernelFamily,
    pub normalization: Normalization,
    #[serde(rename = "R")]
    pub radius: f64,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub grid_n: usize,
    pub dt: f64,
    pub tmax: f64,
    pub tol: f64,
    pub stop_rule: StopRule,
    pub seed: u64,
    pub epsilon: f64,
    pub n_max: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub r_count: usize,
    pub offset: f64,
    pub modes: u64,
    pub mode: Option<u64>,
    pub jobs: usize,
    pub out: PathBuf,
    pub strict: bool,
}

impl Settings {
    pub fn resolve(c: ConfigFile) -> Result<Self> {
        let case = c.case.unwrap_or(CaseArg::I);
        let base = ModelParams::preset(case.into());
        let d = c.d.unwrap_or(base.d);
        let grid_n = c.grid_n.unwrap_or(128);
        let s = Settings {
            case,
            d,
            mu: c.mu.unwrap_or(base.mu),
            beta: c.beta.unwrap_or(base.beta),
            rho: c.rho.unwrap_or(base.rho),
            kappa: c.kappa.unwrap_or(base.kappa),
            kernel: c.kernel.unwrap_or(KernelFamily::TopHat),
            normalization: c.normalization.unwrap_or(Normalization::MassOne),
            radius: c.radius.unwrap_or(2.5),
            alpha: c.alpha.unwrap_or(0.0),
            grid_n,
            dt: c.dt.unwrap_or_else(|| solver::default_dt(grid_n, base.half_length, d)),
            tmax: c.tmax.unwrap_or(5000.0),
            tol: c.tol.unwrap_or(1e-6),
            stop_rule: c.stop_rule.unwrap_or(StopRule::PerStep),
            seed: c.seed.unwrap_or(42),
            epsilon: c.epsilon.unwrap_or(0.01),
            n_max: c.n_max.unwrap_or(linstab::DEFAULT_N_MAX),
            r_min: c.r_min.unwrap_or(0.1),
            r_max: c.r_max.unwrap_or(3.0),
            r_count: c.r_count.unwrap_or(200),
            offset: c.offset.unwrap_or(0.1),
            modes: c.modes.unwrap_or(10),
            mode: c.mode,
            jobs: c.jobs.unwrap_or(1),
            out: c.out.unwrap_or_else(|| PathBuf::from(".")),
            strict: c.strict.unwrap_or(false),
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        let l = std::f64::consts::PI;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(self.r_min > 0.0 && self.r_max < l && self.r_min <= self.r_max) {
            return Err(Error::Config(format!(
                "sweep bounds must satisfy 0 < r_min <= r_max < L (got {}..{})",
                self.r_min, self.r_max
            )));
        }
        self.params().validate()?;
        self.make_kernel()?;
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            d: self.d,
            mu: self.mu,
            beta: self.beta,
            rho: self.rho,
            kappa: self.kappa,
            ..ModelParams::preset(self.case.into())
        }
        .with_alpha(self.alpha)
    }

    pub fn make_kernel(&self) -> Result<Kernel> {
        self.kernel_at(self.radius)
    }

    fn kernel_at(&self, radius: f64) -> Result<Kernel> {
        Kernel::new(self.kernel, radius, std::f64::consts::PI, self.normalization)
    }

    pub fn sim_config(&self, alpha: f64) -> Result<SimConfig> {
        let mut c = SimConfig::new(self.params().with_alpha(alpha), self.make_kernel()?, self.grid_n);
        c.dt = self.dt;
        c.t_max = self.tmax;
        c.steady_tol = self.tol;
        c.stop_rule = self.stop_rule;
        c.ic = InitialCondition::ConstantPlusSeededNoise {
            epsilon: self.epsilon,
            seed: self.seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn sweep(&self) -> Result<Vec<f64>> {
        match self.r_count {
            0 => Err(Error::Config("empty R sweep (count = 0)".into())),
            1 => Ok(vec![self.r_min]),
            m => Ok((0..m)
                .map(|i| self.r_min + (self.r_max - self.r_min) * i as f64 / (m - 1) as f64)
                .collect()),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Outcome of a subcommand: the JSON document and the exit status.
pub struct Outcome {
    pub report: Value,
    pub status: i32,
}

fn envelope(command: &str, settings: &Settings, body: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": settings,
        "params": settings.params(),
        "result": body,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    #[serde(rename = "R")]
    pub radius: f64,
    pub alpha_l: Option<f64>,
    pub alpha_r: Option<f64>,
    pub n_l: Option<u64>,
    pub n_r: Option<u64>,
    pub abs_alpha_l: Option<f64>,
}

pub fn curve_rows(settings: &Settings) -> Result<(Vec<CurveRow>, Vec<String>)> {
    let radii = settings.sweep()?;
    let params = settings.params();
    let s = params.steady_state()?;
    let windows: Vec<Result<StabilityWindow>> = settings.pool()?.install(|| {
        radii
            .par_iter()
            .map(|&r| Ok(linstab::stability_window(&params, &s, &settings.kernel_at(r)?, settings.n_max)))
            .collect()
    });
    let mut rows = Vec::with_capacity(radii.len());
    let mut warnings = Vec::new();
    for (r, w) in radii.iter().zip(windows) {
        let w = w?;
        warnings.extend(w.warnings.iter().map(|m| format!("R = {r}: {m}")));
        rows.push(CurveRow {
            radius: *r,
            alpha_l: w.alpha_l,
            alpha_r: w.alpha_r,
            n_l: w.n_l,
            n_r: w.n_r,
            abs_alpha_l: w.alpha_l.map(f64::abs),
        });
    }
    Ok((rows, warnings))
}

pub fn cmd_bifurcation_curve(settings: &Settings) -> Result<Outcome> {
    let (rows, warnings) = curve_rows(settings)?;
    prepare_out(&settings.out)?;
    let csv_path = settings.out.join("bifurcation_curve.csv");
    let mut w = csv_writer(&csv_path)?;
    for row in &rows {
        w.serialize(row).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let ordered = rows
        .iter()
        .filter(|r| matches!((r.abs_alpha_l, r.alpha_r), (Some(a), Some(b)) if a < b))
        .count();
    let report = envelope(
        "bifurcation-curve",
        settings,
        json!({
            "csv": "bifurcation_curve.csv",
            "csv_schema": CURVE_SCHEMA,
            "kernel_normalization": settings.normalization,
            "n_max": settings.n_max,
            "points": rows.len(),
            "points_with_abs_alpha_l_below_alpha_r": ordered,
            "warnings": warnings,
        }),
    );
    write_json(&settings.out.join("bifurcation_curve.json"), &report)?;
    Ok(Outcome { report, status: EXIT_OK })
}

fn write_profile(path: &Path, res: &SimResult, half_length: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PROFILE_SCHEMA.split(',')).map_err(|e| csv_error(path, e))?;
    for ((x, u), k) in res.x.iter().zip(&res.u).zip(&res.k) {
        w.serialize((x + half_length, u, k)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_summary(res: &SimResult, params: &ModelParams) -> Value {
    let (mode, amplitude) = res.dominant_u_mode();
    let bound = sup_bound(params).map(|m| m + res.k0_sup);
    json!({
        "converged": res.converged,
        "steps": res.steps,
        "final_time": res.final_time,
        "dt": res.dt,
        "derated": res.derated,
        "last_diff": res.last_diff,
        "dominant_mode": mode,
        "amplitude": amplitude,
        "u_min": res.u_min,
        "u_max": res.u_max,
        "k_min": res.k_min,
        "k_max": res.k_max,
        "k_sup": res.k_sup,
        "k_sup_bound": bound,
        "k_sup_bound_holds": bound.map(|b| res.k_sup <= b + 1e-8),
    })
}

/// The constant `M` in `sup k <= M + sup k_0`, for system A.
pub fn sup_bound(params: &ModelParams) -> Option<f64> {
    match params.system {
        System::A => params.validate_hypotheses().growth_bound,
        System::B => None,
    }
}

fn status_of(blown_up: bool, unconverged: bool, strict: bool) -> i32 {
    if blown_up {
        EXIT_BLOW_UP
    } else if strict && unconverged {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    }
}

pub fn cmd_profiles(settings: &Settings) -> Result<Outcome> {
    let params = settings.params();
    let s = params.steady_state()?;
    let kernel = settings.make_kernel()?;
    let window = linstab::stability_window(&params, &s, &kernel, settings.n_max);
    let mut probes = Vec::new();
    for (side, edge) in [("right", window.alpha_r), ("left", window.alpha_l)] {
        let Some(a) = edge else { continue };
        let inward = -a.signum() * settings.offset;
        probes.push((format!("{side}_inside"), a + inward));
        probes.push((format!("{side}_outside"), a - inward));
        probes.push((format!("{side}_double"), 2.0 * a));
    }
    let configs = probes
        .iter()
        .map(|(_, a)| settings.sim_config(*a))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<SimResult>> =
        settings.pool()?.install(|| configs.par_iter().map(solver::run_to_steady).collect());
    prepare_out(&settings.out)?;
    let (mut blown, mut unconverged) = (false, false);
    let mut summaries = Vec::new();
    for ((label, alpha), res) in probes.iter().zip(results) {
        let entry = match res {
            Ok(r) => {
                let file = format!("profile_{label}.csv");
                write_profile(&settings.out.join(&file), &r, params.half_length)?;
                unconverged |= !r.converged;
                let mut v = run_summary(&r, &params);
                v["csv"] = json!(file);
                v
            }
            Err(e @ Error::BlowUp { .. }) => {
                blown = true;
                json!({ "blow_up": e.to_string() })
            }
            Err(e) => return Err(e),
        };
        summaries.push(json!({ "label": label, "alpha": alpha, "run": entry }));
    }
    let report = envelope(
        "profiles",
        settings,
        json!({ "window": window, "csv_schema": PROFILE_SCHEMA, "probes": summaries }),
    );
    write_json(&settings.out.join("profiles.json"), &report)?;
    Ok(Outcome {
        report,
        status: status_of(blown, unconverged, settings.strict),
    })
}

pub fn cmd_stability(settings: &Settings) -> Result<Outcome> {
    let params = settings.params();
    let s = params.steady_state()?;
    let kernel = settings.make_kernel()?;
    let window = linstab::stability_window(&params, &s, &kernel, settings.n_max);
    let state = linstab::classify_constant_state(&params, &s, &kernel, settings.alpha, settings.n_max);
    let modes: Vec<Value> = (0..=settings.modes)
        .map(|n| {
            let p = linstab::dispersion(&params, &s, &kernel, n);
            json!({
                "n": n,
                "C_n": p.kernel_coeff,
                "alpha_n": linstab::bifurcation_alpha(&params, &s, &kernel, n),
                "lambda_plus": [p.lambda_plus.re, p.lambda_plus.im],
                "lambda_minus": [p.lambda_minus.re, p.lambda_minus.im],
            })
        })
        .collect();
    let report = envelope(
        "stability",
        settings,
        json!({
            "steady_state": { "u": s.u_star, "k": s.k_star },
            "kinetically_stable": s.is_kinetically_stable(),
            "hypotheses": params.validate_hypotheses(),
            "window": window,
            "classification": state,
            "dispersion": modes,
        }),
    );
    if settings.out != Path::new(".") {
        prepare_out(&settings.out)?;
        write_json(&settings.out.join("stability.json"), &report)?;
    }
    Ok(Outcome { report, status: EXIT_OK })
}

fn expected_onset(stability: BranchStability) -> Option<OnsetKind> {
    match stability {
        BranchStability::Stable => Some(OnsetKind::Supercritical),
        BranchStability::Unstable => Some(OnsetKind::Subcritical),
        BranchStability::Undetermined => None,
    }
}

pub fn cmd_classify(settings: &Settings, probe: bool) -> Result<Outcome> {
    let params = settings.params();
    let s = params.steady_state()?;
    let kernel = settings.make_kernel()?;
    let window = linstab::stability_window(&params, &s, &kernel, settings.n_max);
    let modes: Vec<u64> = match settings.mode {
        Some(n) => vec![n],
        None => window.n_l.into_iter().chain(window.n_r).collect(),
    };
    let opts = OnsetOptions {
        epsilon: settings.epsilon,
        ..OnsetOptions::default()
    };
    let mut entries = Vec::new();
    for n in modes {
        if linstab::bifurcation_alpha(&params, &s, &kernel, n).is_none() {
            entries.push(json!({ "n": n, "status": "undefined threshold" }));
            continue;
        }
        let point = match bifurcation::classify_pitchfork(&params, &s, &kernel, n, &window) {
            Ok(p) => p,
            Err(e @ Error::Degenerate(_)) => {
                entries.push(json!({ "n": n, "status": "degenerate", "detail": e.to_string() }));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut entry = json!({ "n": n, "status": "ok", "analytic": point });
        if !point.paths_agree {
            entry["analytic_paths_disagree"] = json!({
                "assembled": point.alpha_second,
                "printed": point.alpha_second_printed,
                "printed_case_one": point.alpha_second_printed_case_one,
            });
        }
        if probe && point.is_endpoint {
            let p = bifurcation::probe_onset(&params, &kernel, n, &opts)?;
            let expected = expected_onset(point.branch_stability);
            entry["empirical"] = json!(p);
            entry["expected_onset"] = json!(expected);
            entry["analytic_matches_empirical"] = json!(expected.map(|e| e == p.kind));
        }
        entries.push(entry);
    }
    let report = envelope(
        "classify",
        settings,
        json!({ "window": window, "probe_options": opts, "modes": entries }),
    );
    if settings.out != Path::new(".") {
        prepare_out(&settings.out)?;
        write_json(&settings.out.join("classify.json"), &report)?;
    }
    Ok(Outcome { report, status: EXIT_OK })
}

pub fn cmd_simulate(settings: &Settings) -> Result<Outcome> {
    let config = settings.sim_config(settings.alpha)?;
    let params = settings.params();
    let res = match solver::run_to_steady(&config) {
        Ok(r) => r,
        Err(e @ Error::BlowUp { .. }) => {
            let report = envelope("simulate", settings, json!({ "blow_up": e.to_string() }));
            prepare_out(&settings.out)?;
            write_json(&settings.out.join("simulate.json"), &report)?;
            return Ok(Outcome { report, status: EXIT_BLOW_UP });
        }
        Err(e) => return Err(e),
    };
    prepare_out(&settings.out)?;
    write_profile(&settings.out.join("simulate.csv"), &res, params.half_length)?;
    let mut body = run_summary(&res, &params);
    body["csv"] = json!("simulate.csv");
    let report = envelope("simulate", settings, body);
    write_json(&settings.out.join("simulate.json"), &report)?;
    Ok(Outcome {
        report,
        status: status_of(false, !res.converged, settings.strict),
    })
}

impl CommonArgs {
    fn overrides(&self) -> ConfigFile {
        ConfigFile {
            case: self.case,
            d: self.d,
            mu: self.mu,
            beta: self.beta,
            rho: self.rho,
            kappa: self.kappa,
            kernel: self.kernel.map(|k| match k {
                KernelArg::TopHat => KernelFamily::TopHat,
                KernelArg::Gaussian => KernelFamily::Gaussian,
                KernelArg::Exponential => KernelFamily::Exponential,
            }),
            normalization: self.normalization.map(|n| match n {
                NormArg::MassOne => Normalization::MassOne,
                NormArg::MeanOne => Normalization::MeanOne,
            }),
            radius: self.radius,
            alpha: self.alpha,
            grid_n: self.grid_n,
            dt: self.dt,
            tmax: self.tmax,
            tol: self.tol,
            stop_rule: self.stop_rule.map(|s| match s {
                StopArg::PerStep => StopRule::PerStep,
                StopArg::RatePerTime => StopRule::RatePerTime,
            }),
            seed: self.seed,
            epsilon: self.epsilon,
            n_max: self.n_max,
            jobs: self.jobs,
            out: self.out.clone(),
            strict: self.strict.then_some(true),
            ..ConfigFile::default()
        }
    }
}

impl Cli {
    pub fn settings(&self) -> Result<Settings> {
        let mut layer = self.common.overrides();
        match &self.command {
            Command::BifurcationCurve { r_min, r_max, count } => {
                layer.r_min = *r_min;
                layer.r_max = *r_max;
                layer.r_count = *count;
            }
            Command::Profiles { offset } => layer.offset = *offset,
            Command::Stability { modes } => layer.modes = *modes,
            Command::Classify { mode, .. } => layer.mode = *mode,
            Command::Simulate => {}
        }
        let file = match &self.common.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Settings::resolve(layer.or(file).or(self.command_defaults()))
    }

    /// Defaults that differ from the global ones for a given command.
    fn command_defaults(&self) -> ConfigFile {
        match self.command {
            // Probes sit within 0.1 of a threshold where growth rates are
            // about 1e-3, so the per-step rule would stop them immediately.
            Command::Profiles { .. } => ConfigFile {
                stop_rule: Some(StopRule::RatePerTime),
                tol: Some(1e-8),
                tmax: Some(20000.0),
                ..ConfigFile::default()
            },
            _ => ConfigFile::default(),
        }
    }

    pub fn execute(&self) -> Result<Outcome> {
        let settings = self.settings()?;
        match &self.command {
            Command::BifurcationCurve { .. } => cmd_bifurcation_curve(&settings),
            Command::Profiles { .. } => cmd_profiles(&settings),
            Command::Stability { .. } => cmd_stability(&settings),
            Command::Classify { no_probe, .. } => cmd_classify(&settings, !no_probe),
            Command::Simulate => cmd_simulate(&settings),
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Config(_) => EXIT_USAGE,
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        Error::Degenerate(_) | Error::Io { .. } => EXIT_FAILURE,
    }
}

/// Parses `std::env::args`, runs the command, prints the JSON report and
/// returns the process exit status.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match cli.execute() {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.report).expect("JSON values always serialize");
            // A closed stdout (e.g. piped into `head`) is not an error for us.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            out.status
        }
        Err(e) => {
            eprintln!("memoryscape: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("memoryscape").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_are_materialized() {
        let s = parse(&["stability"]).settings().unwrap();
        assert_eq!(s.case, CaseArg::I);
        assert_eq!(s.radius, 2.5);
        assert_eq!(s.normalization, Normalization::MassOne);
        assert!((s.dt - solver::default_dt(128, std::f64::consts::PI, 1.0)).abs() < 1e-15);
        let p = parse(&["profiles"]).settings().unwrap();
        assert_eq!((p.stop_rule, p.tol, p.tmax), (StopRule::RatePerTime, 1e-8, 20000.0));
    }

    #[test]
    fn flags_override_config_file() {
        let file = ConfigFile::parse("case = \"iii\"\nR = 1.5\nN = 32\nrho = 4.0\n").unwrap();
        let cli = parse(&["simulate", "--R", "2.0", "--alpha", "-3.5"]);
        let s = Settings::resolve(cli.common.overrides().or(file)).unwrap();
        assert_eq!((s.case, s.radius, s.grid_n, s.rho, s.alpha), (CaseArg::Iii, 2.0, 32, 4.0, -3.5));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(matches!(ConfigFile::parse("radius = 2.0"), Err(Error::Config(_))));
    }

    #[test]
    fn empty_sweep_is_a_usage_error() {
        let err = parse(&["bifurcation-curve", "--count", "0"]).execute().err().unwrap();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn sweep_bounds_must_lie_inside_the_domain() {
        assert!(parse(&["bifurcation-curve", "--r-max", "3.2"]).settings().is_err());
    }

    #[test]
    fn stability_report_at_zero() {
        let out = parse(&["stability"]).execute().unwrap();
        let r = &out.report["result"];
        assert_eq!(r["classification"]["verdict"]["state"], json!("stable"));
        assert_eq!(r["classification"]["essential_point"], json!(-2.0));
        let out = parse(&["stability", "--case", "iii"]).execute().unwrap();
        assert_eq!(out.report["result"]["classification"]["essential_point"], json!(-7.0));
    }

    #[test]
    fn zero_coefficient_mode_is_undefined() {
        let out = parse(&["classify", "--R", "1.5707963267948966", "--mode", "2", "--no-probe"])
            .execute()
            .unwrap();
        assert_eq!(out.report["result"]["modes"][0]["status"], json!("undefined threshold"));
    }
}
