mod common;

use common::kubo;
use sdha::harness::{
    estimate_ms_order, estimate_weak_order, fit_weak_order, histogram, run_ensemble, run_path, uniform_edges,
    EnsembleConfig, InitialCondition, Method, Observable, OrderConfig,
};
use sdha::models::{kubo_exact, kubo_mean_energy, sample_initial_lb, vfp_lb_system, KuboParams, LbGibbs, VfpLbParams};
use sdha::noise::PathRng;
use sdha::{BrownianDriver, Error, ForcedHamiltonian, IncrementMode, SolveMode, SolverConfig, State};

fn point(q: f64, p: f64) -> InitialCondition {
    InitialCondition::Point(State::new(&[q], &[p]).unwrap())
}

fn path_h(method: &Method, sys: &impl ForcedHamiltonian, seed: u64, steps: usize) -> Vec<f64> {
    let mut driver = BrownianDriver::new(seed, 0, 1, 0.05, IncrementMode::Gaussian).unwrap();
    let z0 = State::new(&[1.0], &[0.0]).unwrap();
    run_path(sys, method, 0.05, steps, &mut driver, z0, &[Observable::Hamiltonian], 1, &SolverConfig::default())
        .unwrap()
        .values
}

#[test]
fn undamped_noise_free_energy_is_constant() {
    let h = path_h(&Method::Midpoint, &kubo(0.0, 0.0), 1, 400);
    assert_eq!(h.len(), 401);
    assert_eq!(h[0], 0.5);
    assert!(h.iter().all(|v| (v - 0.5).abs() <= 1e-10));
}

#[test]
fn run_path_is_deterministic() {
    let sys = kubo(0.5, 0.5);
    for method in [Method::Midpoint, Method::dirk(0.5), Method::Heun] {
        assert_eq!(path_h(&method, &sys, 7, 100), path_h(&method, &sys, 7, 100));
    }
    assert_ne!(path_h(&Method::Midpoint, &sys, 7, 10), path_h(&Method::Midpoint, &sys, 8, 10));
}

#[test]
fn run_path_records_with_stride() {
    let sys = kubo(0.5, 0.5);
    let mut driver = BrownianDriver::new(3, 0, 1, 0.1, IncrementMode::Gaussian).unwrap();
    let z0 = State::new(&[2.0], &[1.0]).unwrap();
    let obs = [Observable::Hamiltonian, Observable::Position(0), Observable::Momentum(0)];
    let cfg = SolverConfig::default();
    let s = run_path(&sys, &Method::Midpoint, 0.1, 20, &mut driver, z0.clone(), &obs, 5, &cfg).unwrap();
    assert_eq!(s.len(), 5);
    assert_eq!(s.record(0), &[2.5, 2.0, 1.0]);
    assert_eq!(s.record(4)[1..], [s.final_state.q()[0], s.final_state.p()[0]]);
    let mut driver = BrownianDriver::new(3, 0, 1, 0.1, IncrementMode::Gaussian).unwrap();
    let err = run_path(&sys, &Method::Midpoint, 0.1, 20, &mut driver, z0, &obs, 3, &cfg).unwrap_err();
    assert_eq!(err.step, 0);
}

#[test]
fn solver_failure_marks_the_path() {
    let sys = kubo(0.5, 0.5);
    let strict = SolverConfig { max_iter: 1, mode: SolveMode::FixedPoint, ..SolverConfig::default() };
    let mut driver = BrownianDriver::new(3, 0, 1, 0.1, IncrementMode::Gaussian).unwrap();
    let z0 = State::new(&[1.0], &[0.0]).unwrap();
    let err = run_path(&sys, &Method::Midpoint, 0.1, 10, &mut driver, z0, &[Observable::Hamiltonian], 1, &strict)
        .unwrap_err();
    assert_eq!(err.step, 1);
    assert!(matches!(err.source, Error::Solver(_)));

    let ens = EnsembleConfig { solver: strict, ..EnsembleConfig::new(Method::Midpoint, 0.1, 1.0, 20, point(1.0, 0.0)) };
    let series = run_ensemble(&sys, &ens).unwrap();
    assert_eq!(series.n_failed, 20);
    assert!(series.degraded);
    assert_eq!(series.failures.len(), 20);
    assert!(series.failures.iter().enumerate().all(|(i, f)| *f == (i, 1)));
}

#[test]
fn ensemble_starts_at_the_initial_energy() {
    let sys = kubo(0.5, 0.5);
    let cfg = EnsembleConfig::new(Method::Midpoint, 0.1, 1.0, 50, point(2.0, 0.0));
    let s = run_ensemble(&sys, &cfg).unwrap();
    assert_eq!(s.times.len(), 11);
    assert_eq!(s.mean[0][0], 2.0);
    assert_eq!(s.sem[0][0], 0.0);
    assert_eq!((s.n_paths, s.n_failed, s.degraded), (50, 0, false));
    assert!(s.sem.iter().flatten().all(|v| *v >= 0.0));
    assert!(s.sem[10][0] > 0.0);
}

#[test]
fn ensemble_rejects_bad_configs() {
    let sys = kubo(0.5, 0.5);
    let base = EnsembleConfig::new(Method::Midpoint, 0.4, 1.0, 10, point(1.0, 0.0));
    assert!(run_ensemble(&sys, &base).is_err());
    let stride = EnsembleConfig { record_stride: 3, dt: 0.1, ..base.clone() };
    assert!(run_ensemble(&sys, &stride).is_err());
    let planar = EnsembleConfig { observables: vec![Observable::MomentumMapSo2], dt: 0.1, ..base.clone() };
    assert!(matches!(run_ensemble(&sys, &planar), Err(Error::Unsupported(_))));
    let none = EnsembleConfig { n_paths: 0, dt: 0.1, ..base };
    assert!(run_ensemble(&sys, &none).is_err());
}

#[test]
fn ensemble_is_identical_across_thread_counts() {
    let sys = kubo(0.5, 0.5);
    let mut cfg = EnsembleConfig::new(Method::dirk(0.5), 0.1, 2.0, 1000, point(1.0, 0.5));
    cfg.observables = vec![Observable::Hamiltonian, Observable::Position(0)];
    cfg.master_seed = 99;
    cfg.keep_final_states = true;
    cfg.threads = 1;
    let one = run_ensemble(&sys, &cfg).unwrap();
    cfg.threads = 8;
    let eight = run_ensemble(&sys, &cfg).unwrap();
    assert_eq!(one, eight);
    assert_eq!(one.final_states.as_ref().unwrap().len(), 1000);
}

#[test]
fn sem_scales_with_path_count() {
    let sys = kubo(0.5, 0.5);
    let sem = |n| {
        let cfg = EnsembleConfig { record_stride: 10, ..EnsembleConfig::new(Method::Midpoint, 0.1, 1.0, n, point(1.0, 0.0)) };
        run_ensemble(&sys, &cfg).unwrap().sem[1][0]
    };
    let ratio = sem(1000) / sem(4000);
    assert!((ratio / 2.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn kubo_desk_scale_mean_energy() {
    let params = KuboParams { q0: 2.0, p0: 0.0, beta: 0.5, nu: 0.001 };
    let sys = sdha::models::kubo_system(params).unwrap();
    let cfg = EnsembleConfig {
        record_stride: 10,
        master_seed: 2024,
        ..EnsembleConfig::new(Method::dirk(0.5), 0.1, 50.0, 10_000, InitialCondition::Point(params.initial_state()))
    };
    let s = run_ensemble(&sys, &cfg).unwrap();
    for (k, t) in s.times.iter().enumerate() {
        let exact = kubo_mean_energy(&params, *t);
        let err = (s.mean[k][0] - exact).abs();
        assert!(err <= 3.0 * s.sem[k][0] + 0.01, "t = {t}: {err} vs sem {}", s.sem[k][0]);
    }
}

fn order_cfg(dts: Vec<f64>, n_paths: usize) -> OrderConfig {
    OrderConfig { dts, t_end: 1.0, n_paths, master_seed: 5, solver: SolverConfig::default(), threads: 0 }
}

fn dyadic() -> Vec<f64> {
    (4..=8).map(|k| 2f64.powi(-k)).collect()
}

#[test]
fn mean_square_orders() {
    let sys = kubo(0.5, 0.5);
    let cfg = order_cfg(dyadic(), 500);
    for method in [Method::Midpoint, Method::StormerVerlet, Method::dirk(0.5)] {
        let fit = estimate_ms_order(&sys, &method, &cfg).unwrap();
        assert!((0.85..=1.15).contains(&fit.slope), "{}: {}", method.name(), fit.slope);
        assert_eq!(fit.n_failed, 0);
        assert!(fit.errors.windows(2).all(|w| w[0] > w[1]));
    }
}

#[test]
fn deterministic_midpoint_is_second_order() {
    let fit = estimate_ms_order(&kubo(0.0, 0.5), &Method::Midpoint, &order_cfg(dyadic(), 16)).unwrap();
    assert!((fit.slope - 2.0).abs() <= 0.1, "slope {}", fit.slope);
}

#[test]
fn order_fit_needs_four_points() {
    let sys = kubo(0.5, 0.5);
    let err = estimate_ms_order(&sys, &Method::Midpoint, &order_cfg(vec![0.1, 0.05, 0.025], 10));
    assert!(err.is_err());
    let err = estimate_ms_order(&sys, &Method::Midpoint, &order_cfg(vec![0.1, 0.05, 0.025, 0.3], 10));
    assert!(err.is_err());
}

#[test]
fn exact_sampler_bias_is_inconclusive() {
    let params = KuboParams { q0: 1.0, p0: 0.0, beta: 0.5, nu: 0.5 };
    let exact = kubo_mean_energy(&params, 1.0);
    let dts = [0.05, 0.1, 0.2, 0.4];
    let (mut biases, mut sems) = (Vec::new(), Vec::new());
    for (k, _) in dts.iter().enumerate() {
        let mut rng = PathRng::from_seed(k as u64);
        let n = 20_000;
        let h: Vec<f64> = (0..n)
            .map(|_| {
                let z = kubo_exact(&params, 1.0, rng.normal());
                0.5 * (z.q()[0].powi(2) + z.p()[0].powi(2))
            })
            .collect();
        let mean = h.iter().sum::<f64>() / n as f64;
        let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        biases.push(mean - exact);
        sems.push((var / n as f64).sqrt());
    }
    assert!(fit_weak_order(&dts, &biases, &sems).unwrap().inconclusive);
}

#[test]
fn weak_order_estimator_runs() {
    // small ensemble: the coarse biases are resolved, the fine ones need far more paths
    let params = KuboParams { q0: 1.0, p0: 0.0, beta: 0.5, nu: 0.5 };
    let sys = sdha::models::kubo_system(params).unwrap();
    let cfg = OrderConfig { t_end: 1.2, ..order_cfg(vec![0.05, 0.1, 0.2, 0.4], 20_000) };
    let exact = kubo_mean_energy(&params, 1.2);
    let fit =
        estimate_weak_order(&sys, &Method::srkw2(), &cfg, &params.initial_state(), &Observable::Hamiltonian, exact)
            .unwrap();
    assert_eq!(fit.errors.len(), 4);
    assert!(fit.sems.iter().all(|s| *s > 0.0 && *s < 2e-3));
    assert!(fit.inconclusive);
}

#[test]
fn histogram_examples() {
    let h = histogram(&[0.25], &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(h.counts, vec![1, 0]);
    assert_eq!(h.density, vec![2.0, 0.0]);
    // the right edge belongs to the last bin, outside samples are dropped
    let h = histogram(&[1.0, 0.0, 2.0, -1.0], &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(h.counts, vec![1, 1]);
    // density is normalised by every sample offered, so half the mass is binned
    assert_eq!(h.density, vec![0.5, 0.5]);
    assert!(histogram(&[0.0], &[1.0, 0.0]).is_err());
    assert!(histogram(&[0.0], &[1.0]).is_err());
}

#[test]
fn histogram_of_normal_samples() {
    let mut rng = PathRng::from_seed(12);
    let xs: Vec<f64> = (0..1_000_000).map(|_| rng.normal()).collect();
    let edges = uniform_edges(-5.0, 5.0, 50);
    let h = histogram(&xs, &edges).unwrap();
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for (w, d) in edges.windows(2).zip(&h.density) {
        assert!((d - pdf(0.5 * (w[0] + w[1]))).abs() <= 0.01);
    }
    let mass: f64 = h.density.iter().zip(edges.windows(2)).map(|(d, w)| d * (w[1] - w[0])).sum();
    assert!((mass - 1.0).abs() < 1e-5);
}

#[test]
fn lenard_bernstein_velocity_marginal() {
    let params = VfpLbParams::default();
    let sys = vfp_lb_system(params).unwrap();
    let gibbs = LbGibbs::new(&params).unwrap();
    let cfg = EnsembleConfig {
        record_stride: 3000,
        master_seed: 8,
        keep_final_states: true,
        ..EnsembleConfig::new(
            Method::dirk(0.5),
            0.1,
            300.0,
            2000,
            InitialCondition::sampled(move |rng| sample_initial_lb(&params, rng)),
        )
    };
    let s = run_ensemble(&sys, &cfg).unwrap();
    let v: Vec<f64> = s.final_states.unwrap().iter().map(|z| z.p()[0]).collect();
    let edges = uniform_edges(-4.0, 4.0, 8);
    let h = histogram(&v, &edges).unwrap();
    for (w, d) in edges.windows(2).zip(&h.density) {
        // bin average of the marginal by the midpoint rule on 100 subintervals
        let avg = (0..100).map(|i| gibbs.marginal_v(w[0] + (i as f64 + 0.5) * 0.01)).sum::<f64>() / 100.0;
        assert!((d - avg).abs() <= 0.05, "bin {w:?}: {d} vs {avg}");
    }
}
