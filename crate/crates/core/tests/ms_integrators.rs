mod common;

use common::{coupled_oscillator, kubo, pendulum, random_increments, random_state, unforced_2d};
use sdha::harness::{estimate_ms_order, Method, OrderConfig};
use sdha::models::{central_force_system, kubo_exact, kubo_system, KuboParams};
use sdha::ms::stormer_verlet_step_with_stats;
use sdha::noise::PathRng;
use sdha::structure::{momentum_map_so2, step_jacobian, FD_STEP};
use sdha::{
    check_sprk_order_conditions, check_sprk_symplectic_conditions, dirk_step, heun_step, midpoint_step,
    sprk_step, stormer_verlet_step, ForcedHamiltonian, SolverConfig, SprkTableau, State,
};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn all_tableaus() -> Vec<SprkTableau> {
    let mut v = vec![SprkTableau::midpoint(), SprkTableau::stormer_verlet()];
    v.extend([0.0, 0.3, 0.5, 1.0].map(SprkTableau::dirk));
    v
}

#[test]
fn shipped_tableaus_satisfy_conditions() {
    for t in all_tableaus() {
        let sym = check_sprk_symplectic_conditions(&t, 1e-12);
        let ord = check_sprk_order_conditions(&t, 1e-12);
        assert!(sym.passed() && sym.max_violation() <= 1e-12, "{}: {sym:?}", t.name);
        assert!(ord.passed() && ord.max_violation() <= 1e-12, "{}: {ord:?}", t.name);
        assert_eq!(sym.conditions.len(), 8);
        assert_eq!(ord.conditions.len(), 10);
    }
}

#[test]
fn perturbed_tableaus_are_rejected() {
    let mut t = SprkTableau::midpoint();
    t.a[0] = 0.6;
    let rep = check_sprk_symplectic_conditions(&t, 1e-12);
    assert_eq!(rep.violated()[0], 0);
    assert!((rep.conditions[0].max_violation - 0.1).abs() < 1e-14);

    let mut t = SprkTableau::dirk(0.3);
    t.alpha = vec![0.4, 0.4];
    assert!(!check_sprk_order_conditions(&t, 1e-12).passed());
}

#[test]
fn zero_step_is_identity() {
    let mut rng = PathRng::from_seed(1);
    let sys = coupled_oscillator();
    for t in all_tableaus() {
        let z = random_state(&mut rng, 1);
        let out = sprk_step(&sys, &t, &z, 0.0, &[0.0], &cfg()).unwrap();
        assert!(out.max_abs_diff(&z) <= 1e-15, "{}", t.name);
    }
    let z = random_state(&mut rng, 1);
    assert!(stormer_verlet_step(&sys, &z, 0.0, &[0.0], &cfg()).unwrap().max_abs_diff(&z) <= 1e-15);
    assert!(midpoint_step(&sys, &z, 0.0, &[0.0], &cfg()).unwrap().max_abs_diff(&z) <= 1e-15);
    assert_eq!(heun_step(&sys, &z, 0.0, &[0.0]).unwrap(), z);
}

#[test]
fn midpoint_tableau_conserves_undamped_kubo_energy() {
    let sys = kubo(0.5, 0.0);
    let mut rng = PathRng::from_seed(2);
    for _ in 0..20 {
        let z = random_state(&mut rng, 1);
        let dw = random_increments(&mut rng, 1, 0.1);
        let out = sprk_step(&sys, &SprkTableau::midpoint(), &z, 0.1, &dw, &cfg()).unwrap();
        let h0 = sys.hamiltonian(z.q(), z.p());
        let h1 = sys.hamiltonian(out.q(), out.p());
        assert!((h1 - h0).abs() <= 1e-10, "{h0} -> {h1}");
    }
}

#[test]
fn midpoint_specialisation_matches_engine() {
    let mut rng = PathRng::from_seed(3);
    let damped = kubo(0.5, 0.5);
    let coupled = coupled_oscillator();
    for _ in 0..50 {
        let dt = 0.01 + 0.2 * rng.uniform();
        let z = random_state(&mut rng, 1);
        let dw = random_increments(&mut rng, 1, dt);
        let a = midpoint_step(&damped, &z, dt, &dw, &cfg()).unwrap();
        let b = sprk_step(&damped, &SprkTableau::midpoint(), &z, dt, &dw, &cfg()).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12, "{}", a.max_abs_diff(&b));
        let a = midpoint_step(&coupled, &z, dt, &dw, &cfg()).unwrap();
        let b = sprk_step(&coupled, &SprkTableau::midpoint(), &z, dt, &dw, &cfg()).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-11, "{}", a.max_abs_diff(&b));
    }
}

#[test]
fn midpoint_without_noise_is_the_cayley_rotation() {
    // implicit midpoint on q' = p, p' = -q: z1 = [[1-h^2, 2h], [-2h, 1-h^2]] z0 / (1+h^2), h = dt/2
    let sys = kubo(0.0, 0.0);
    let mut rng = PathRng::from_seed(4);
    for _ in 0..10 {
        let z = random_state(&mut rng, 1);
        let dt = 0.3 * rng.uniform();
        let dw = [rng.normal()];
        let out = midpoint_step(&sys, &z, dt, &dw, &cfg()).unwrap();
        let h = dt / 2.0;
        let d = 1.0 + h * h;
        let (q, p) = (z.q()[0], z.p()[0]);
        let q1 = ((1.0 - h * h) * q + 2.0 * h * p) / d;
        let p1 = (-2.0 * h * q + (1.0 - h * h) * p) / d;
        assert!((out.q()[0] - q1).abs() <= 1e-12 && (out.p()[0] - p1).abs() <= 1e-12);
    }
}

#[test]
fn one_step_error_against_exact_kubo() {
    let params = KuboParams { q0: 1.2, p0: -0.4, beta: 0.5, nu: 0.5 };
    let sys = kubo_system(params).unwrap();
    let z0 = params.initial_state();
    let local = |dt: f64, step: &dyn Fn(f64, f64) -> State| {
        let w = 0.7 * dt.sqrt();
        step(dt, w).max_abs_diff(&kubo_exact(&params, dt, w))
    };
    let mid = |dt: f64, w: f64| midpoint_step(&sys, &z0, dt, &[w], &cfg()).unwrap();
    let sv = |dt: f64, w: f64| stormer_verlet_step(&sys, &z0, dt, &[w], &cfg()).unwrap();
    let dirk = |dt: f64, w: f64| dirk_step(&sys, 0.5, &z0, dt, &[w], &cfg()).unwrap();
    for step in [&mid as &dyn Fn(f64, f64) -> State, &sv, &dirk] {
        let coarse = local(1e-2, step) / 1e-2f64.powf(1.5);
        let fine = local(1e-4, step) / 1e-4f64.powf(1.5);
        assert!(fine <= 2.0 * coarse, "C(1e-4) = {fine}, C(1e-2) = {coarse}");
        assert!(local(1e-3, step) <= 2.0 * coarse * 1e-3f64.powf(1.5));
    }
}

#[test]
fn stormer_verlet_matches_engine() {
    let mut rng = PathRng::from_seed(5);
    let t = SprkTableau::stormer_verlet();
    let damped = kubo(0.5, 0.5);
    let pend = pendulum();
    let coupled = coupled_oscillator();
    for _ in 0..30 {
        let dt = 0.01 + 0.2 * rng.uniform();
        let z = random_state(&mut rng, 1);
        let dw = random_increments(&mut rng, 1, dt);
        let a = stormer_verlet_step(&damped, &z, dt, &dw, &cfg()).unwrap();
        let b = sprk_step(&damped, &t, &z, dt, &dw, &cfg()).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12, "kubo {}", a.max_abs_diff(&b));
        let a = stormer_verlet_step(&pend, &z, dt, &dw, &cfg()).unwrap();
        let b = sprk_step(&pend, &t, &z, dt, &dw, &cfg()).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12, "pendulum {}", a.max_abs_diff(&b));
        let a = stormer_verlet_step(&coupled, &z, dt, &dw, &cfg()).unwrap();
        let b = sprk_step(&coupled, &t, &z, dt, &dw, &cfg()).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-11, "coupled {}", a.max_abs_diff(&b));
    }
}

#[test]
fn stormer_verlet_is_explicit_for_position_forcing() {
    let sys = pendulum();
    let z = State::new(&[0.4], &[-0.3]).unwrap();
    let (_, stats) = stormer_verlet_step_with_stats(&sys, &z, 0.1, &[0.2], &cfg()).unwrap();
    assert_eq!(stats.solver_iterations, 0);
    let (_, stats) = stormer_verlet_step_with_stats(&coupled_oscillator(), &z, 0.1, &[0.2], &cfg()).unwrap();
    assert!(stats.solver_iterations > 0);
}

#[test]
fn dirk_endpoints_reduce_to_midpoint() {
    let mut rng = PathRng::from_seed(6);
    let sys = kubo(0.5, 0.5);
    for _ in 0..20 {
        let z = random_state(&mut rng, 1);
        let dw = random_increments(&mut rng, 1, 0.1);
        let mid = midpoint_step(&sys, &z, 0.1, &dw, &cfg()).unwrap();
        for lambda in [0.0, 1.0] {
            let d = dirk_step(&sys, lambda, &z, 0.1, &dw, &cfg()).unwrap();
            assert!(d.max_abs_diff(&mid) <= 1e-10);
            // the general engine on the same tableau, not the shortcut
            let e = sprk_step(&sys, &SprkTableau::dirk(lambda), &z, 0.1, &dw, &cfg()).unwrap();
            assert!(e.max_abs_diff(&mid) <= 1e-10, "lambda {lambda}: {}", e.max_abs_diff(&mid));
        }
    }
}

#[test]
fn dirk_sequential_solve_matches_coupled_engine() {
    let mut rng = PathRng::from_seed(7);
    let sys = kubo(0.5, 0.5);
    let coupled = coupled_oscillator();
    for lambda in [0.5, 0.3, -1.5] {
        let t = SprkTableau::dirk(lambda);
        for _ in 0..10 {
            let z = random_state(&mut rng, 1);
            let dw = random_increments(&mut rng, 1, 0.1);
            let a = dirk_step(&sys, lambda, &z, 0.1, &dw, &cfg()).unwrap();
            let b = sprk_step(&sys, &t, &z, 0.1, &dw, &cfg()).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12, "{}", a.max_abs_diff(&b));
            let a = dirk_step(&coupled, lambda, &z, 0.1, &dw, &cfg()).unwrap();
            let b = sprk_step(&coupled, &t, &z, 0.1, &dw, &cfg()).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-11, "{}", a.max_abs_diff(&b));
        }
    }
}

#[test]
fn dirk_is_continuous_in_lambda() {
    let sys = coupled_oscillator();
    let z = State::new(&[0.7], &[0.2]).unwrap();
    for lambda in [0.25, 0.5, 0.75] {
        let base = dirk_step(&sys, lambda, &z, 0.1, &[0.3], &cfg()).unwrap();
        let near = dirk_step(&sys, lambda + 1e-7, &z, 0.1, &[0.3], &cfg()).unwrap();
        assert!(base.max_abs_diff(&near) <= 1e-6);
    }
    // approaching the delegated endpoints from inside
    let mid = midpoint_step(&sys, &z, 0.1, &[0.3], &cfg()).unwrap();
    for lambda in [1e-7, 1.0 - 1e-7] {
        let d = dirk_step(&sys, lambda, &z, 0.1, &[0.3], &cfg()).unwrap();
        assert!(d.max_abs_diff(&mid) <= 1e-6);
    }
}

#[test]
fn heun_matches_hand_computation() {
    let sys = coupled_oscillator();
    let z = State::new(&[0.5], &[-0.8]).unwrap();
    let (dt, w) = (0.1, 0.25);
    let field = |q: f64, p: f64| {
        let a = [p * (1.0 + 0.25 * q * q), -(0.25 * p * p * q + q) - 0.2 * p];
        let b = [0.3 * q, -0.3 * p - 0.1 * q];
        [a[0] * dt + b[0] * w, a[1] * dt + b[1] * w]
    };
    let k0 = field(0.5, -0.8);
    let k1 = field(0.5 + k0[0], -0.8 + k0[1]);
    let out = heun_step(&sys, &z, dt, &[w]).unwrap();
    assert!((out.q()[0] - (0.5 + 0.5 * (k0[0] + k1[0]))).abs() < 1e-15);
    assert!((out.p()[0] - (-0.8 + 0.5 * (k0[1] + k1[1]))).abs() < 1e-15);
}

#[test]
fn heun_has_deterministic_order_two() {
    let sys = kubo(0.0, 0.0);
    let z0 = State::new(&[1.0], &[0.0]).unwrap();
    let err = |n: usize| {
        let dt = 1.0 / n as f64;
        let mut z = z0.clone();
        for _ in 0..n {
            z = heun_step(&sys, &z, dt, &[0.0]).unwrap();
        }
        ((z.q()[0] - 1f64.cos()).powi(2) + (z.p()[0] + 1f64.sin()).powi(2)).sqrt()
    };
    let slope = (err(32) / err(256)).ln() / 8f64.ln();
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn heun_mean_square_order_near_one() {
    let sys = kubo_system(KuboParams { q0: 1.0, p0: 0.0, beta: 0.5, nu: 0.5 }).unwrap();
    let cfg = OrderConfig {
        dts: (4..=8).map(|k| 2f64.powi(-k)).collect(),
        t_end: 1.0,
        n_paths: 500,
        master_seed: 99,
        solver: SolverConfig::default(),
        threads: 1,
    };
    let fit = estimate_ms_order(&sys, &Method::Heun, &cfg).unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.15, "slope {}", fit.slope);
}

#[test]
fn unforced_steps_are_symplectic() {
    let sys = unforced_2d();
    let undamped = kubo(0.5, 0.0);
    let mut rng = PathRng::from_seed(8);
    for t in all_tableaus() {
        for _ in 0..3 {
            let z = random_state(&mut rng, 2);
            let dw = random_increments(&mut rng, 1, 0.05);
            let rep = step_jacobian(|x| sprk_step(&sys, &t, x, 0.05, &dw, &cfg()), &z, FD_STEP).unwrap();
            assert!(rep.unit_residual <= 1e-6, "{}: {}", t.name, rep.unit_residual);
            let z = random_state(&mut rng, 1);
            let rep = step_jacobian(|x| sprk_step(&undamped, &t, x, 0.1, &dw, &cfg()), &z, FD_STEP).unwrap();
            assert!(rep.unit_residual <= 1e-6, "{}: {}", t.name, rep.unit_residual);
        }
    }
}

#[test]
fn midpoint_keeps_angular_momentum_under_radial_forcing() {
    let sys = central_force_system(0.3, 0.4).unwrap();
    let mut rng = PathRng::from_seed(9);
    let mut z = State::new(&[1.0, 0.2], &[-0.1, 0.8]).unwrap();
    let c = cfg();
    for _ in 0..200 {
        let dw = random_increments(&mut rng, 1, 0.05);
        let next = midpoint_step(&sys, &z, 0.05, &dw, &c).unwrap();
        let drift = momentum_map_so2(&next).unwrap() - momentum_map_so2(&z).unwrap();
        assert!(drift.abs() <= 10.0 * c.tol, "{drift}");
        z = next;
    }
}

#[test]
fn mismatched_increments_rejected() {
    let sys = kubo(0.5, 0.5);
    let z = State::new(&[1.0], &[0.0]).unwrap();
    assert!(midpoint_step(&sys, &z, 0.1, &[0.1, 0.2], &cfg()).is_err());
    assert!(sprk_step(&sys, &SprkTableau::midpoint(), &z, -0.1, &[0.1], &cfg()).is_err());
    assert!(heun_step(&sys, &z, 0.1, &[f64::NAN]).is_err());
    let two = State::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    assert!(stormer_verlet_step(&sys, &two, 0.1, &[0.1], &cfg()).is_err());
}
