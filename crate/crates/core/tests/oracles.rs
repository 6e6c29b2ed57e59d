mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use memoryscape::kernels::{self, Convolver, Kernel, KernelFamily, Normalization};
use memoryscape::model::{Case, ModelParams};
use memoryscape::oracle::{self, FdGrid};
use memoryscape::solver::{self, InitialCondition, SimConfig, SimState, Stepper};
use memoryscape::spectral::{FourierTransform, Grid};

use common::{max_abs_diff, BandLimited};

fn transform(n: usize) -> Arc<FourierTransform> {
    FourierTransform::shared(Grid::new(n, PI).unwrap())
}

#[test]
fn spectral_convolution_matches_quadrature() {
    let t = transform(128);
    let grid = *t.grid();
    let points = grid.points();
    let kernel = Kernel::top_hat(2.5, PI).unwrap();
    for seed in 0..100 {
        let f = BandLimited::random(seed, 16, 0.5);
        let spectral = kernels::convolve(&kernel, Arc::clone(&t), &grid.sample(|x| f.eval(x))).unwrap();
        let quad = oracle::quadrature_convolve_fn(&kernel, |y| f.eval(y), &points, 1e-12);
        assert!(max_abs_diff(&spectral, &quad) < 1e-8, "seed {seed}");
    }
}

#[test]
fn gradient_of_convolution_is_convolution_of_gradient() {
    let t = transform(128);
    let grid = *t.grid();
    let points = grid.points();
    let mut worst: f64 = 0.0;
    for (i, family) in [KernelFamily::TopHat, KernelFamily::Gaussian, KernelFamily::Exponential].into_iter().enumerate() {
        let kernel = Kernel::new(family, 0.9, PI, Normalization::MeanOne).unwrap();
        let mut conv = Convolver::new(&kernel, Arc::clone(&t)).unwrap();
        let mut grad = vec![0.0; 128];
        for seed in 0..34 {
            let f = BandLimited::random(1000 * i as u64 + seed, 20, 0.0);
            conv.convolve_gradient_into(&grid.sample(|x| f.eval(x)), &mut grad);
            let quad = oracle::quadrature_convolve_fn(&kernel, |y| f.derivative(y), &points, 1e-13);
            worst = worst.max(max_abs_diff(&grad, &quad));
        }
    }
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn grid_quadrature_converges_at_second_order() {
    let f = BandLimited::random(5, 4, 1.0);
    let kernel = Kernel::top_hat(1.7, PI).unwrap();
    let err = |n: usize| {
        let t = transform(n);
        let vals = t.grid().sample(|x| f.eval(x));
        let exact = kernels::convolve(&kernel, Arc::clone(&t), &vals).unwrap();
        max_abs_diff(&oracle::quadrature_convolve(&kernel, &vals).unwrap(), &exact)
    };
    let (e1, e2) = (err(64), err(128));
    assert!(e2 < 1e-3);
    assert!((e1 / e2 - 4.0).abs() < 0.5, "{}", e1 / e2);
}

fn smooth_state(n: usize, k_star: f64) -> (Vec<f64>, Vec<f64>) {
    let g = FdGrid::new(n, PI).unwrap();
    (
        g.sample(|x| 1.0 + 0.1 * x.cos() + 0.05 * (2.0 * x).sin()),
        g.sample(|x| k_star + 0.2 * (x + 0.3).cos()),
    )
}

#[test]
fn single_step_agrees_with_finite_differences() {
    for case in [Case::I, Case::II, Case::III] {
        let p = ModelParams::preset(case).with_alpha(-6.0);
        let kernel = Kernel::top_hat(2.5, PI).unwrap();
        let (u, k) = smooth_state(64, p.steady_state().unwrap().k_star);
        let mut config = SimConfig::new(p.clone(), kernel, 64);
        config.ic = InitialCondition::Explicit { u: u.clone(), k: k.clone() };
        let mut state = SimState::initial(&config).unwrap();
        Stepper::new(&config).unwrap().step(&mut state).unwrap();
        let (uf, kf) = oracle::fd_step(&p, &kernel, &u, &k, config.dt).unwrap();
        assert!(max_abs_diff(&state.u, &uf) < 1e-3);
        assert!(max_abs_diff(&state.k, &kf) < 1e-3);
    }
}

#[test]
fn finite_difference_discrepancy_shrinks_fourfold() {
    let p = ModelParams::preset(Case::II).with_alpha(12.0);
    let kernel = Kernel::new(KernelFamily::Gaussian, 0.8, PI, Normalization::MassOne).unwrap();
    let k_star = p.steady_state().unwrap().k_star;
    let err = |n: usize| {
        let (u, k) = smooth_state(n, k_star);
        let config = SimConfig::new(p.clone(), kernel, n);
        let (du, _) = Stepper::new(&config).unwrap().tendencies(&u, &k).unwrap();
        let dt = 1e-4;
        let (uf, _) = oracle::fd_step(&p, &kernel, &u, &k, dt).unwrap();
        let du_fd: Vec<f64> = uf.iter().zip(&u).map(|(a, b)| (a - b) / dt).collect();
        max_abs_diff(&du, &du_fd)
    };
    let ratio = err(64) / err(128);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn uniform_solver_state_follows_the_kinetic_ode() {
    for case in [Case::I, Case::III] {
        let p = ModelParams::preset(case).with_alpha(20.0);
        let kernel = Kernel::top_hat(2.5, PI).unwrap();
        let mut config = SimConfig::new(p.clone(), kernel, 16);
        config.dt = 1e-3;
        config.ic = InitialCondition::Explicit { u: vec![0.2; 16], k: vec![0.1; 16] };
        let mut state = SimState::initial(&config).unwrap();
        let mut stepper = Stepper::new(&config).unwrap();
        while state.t < 4.0 - 1e-9 {
            stepper.step(&mut state).unwrap();
        }
        let (u, k) = oracle::ode_kinetics(&p, 0.2, 0.1, state.t).last();
        assert!((state.u[3] - u).abs() < 2e-3 && (state.k[9] - k).abs() < 2e-3, "{case:?}");
        assert!(state.u.iter().all(|v| (v - state.u[0]).abs() < 1e-12));
    }
}

#[test]
fn sup_bound_holds_from_large_initial_memory() {
    for case in [Case::I, Case::II] {
        let p = ModelParams::preset(case).with_alpha(-30.0);
        let m = memoryscape::cli::sup_bound(&p).unwrap();
        let kernel = Kernel::top_hat(2.0, PI).unwrap();
        let g = Grid::new(32, PI).unwrap();
        let mut config = SimConfig::new(p, kernel, 32);
        config.t_max = 30.0;
        config.ic = InitialCondition::Explicit {
            u: g.sample(|x| 1.0 + 0.5 * x.cos()),
            k: g.sample(|x| 8.0 + 4.0 * (2.0 * x).sin()),
        };
        let r = solver::run_to_steady(&config).unwrap();
        assert!(r.k_sup <= m + r.k0_sup + 1e-8, "{case:?}: {} > {}", r.k_sup, m + r.k0_sup);
    }
}
