use std::f64::consts::PI;

use sdha::models::*;
use sdha::noise::PathRng;
use sdha::system::self_check_gradients;
use sdha::{midpoint_step, BrownianDriver, ForcedHamiltonian, IncrementMode, SolverConfig, State};

fn kubo(q0: f64, p0: f64, beta: f64, nu: f64) -> KuboParams {
    KuboParams { q0, p0, beta, nu }
}

#[test]
fn every_model_passes_gradient_check() {
    let models: Vec<Model> = vec![
        Model::Kubo(kubo_system(kubo(1.0, 0.0, 0.5, 0.5)).unwrap()),
        Model::VanDerPol(vdp_system(0.05, 0.001).unwrap()),
        Model::LenardBernstein(vfp_lb_system(VfpLbParams::default()).unwrap()),
        Model::Lorentz(vfp_lorentz_system(VfpLorentzParams::default()).unwrap()),
        Model::CentralForce(central_force_system(0.3, 0.2).unwrap()),
    ];
    for m in &models {
        let report = self_check_gradients(m, 10, 1e-6, 17).unwrap();
        assert!(report.passed(), "{report:?}");
    }
    let k = kubo_system(kubo(1.0, 0.0, 0.5, 0.5)).unwrap();
    assert!(self_check_gradients(&k, 10, 1e-8, 3).unwrap().passed());
}

#[test]
fn linear_forcing_matches_force_callbacks() {
    let models: Vec<Model> = vec![
        Model::Kubo(kubo_system(kubo(1.0, 0.0, 0.5, 0.5)).unwrap()),
        Model::LenardBernstein(vfp_lb_system(VfpLbParams::default()).unwrap()),
        Model::Lorentz(vfp_lorentz_system(VfpLorentzParams::default()).unwrap()),
    ];
    let mut rng = PathRng::from_seed(5);
    for m in &models {
        let lf = m.linear_forcing().unwrap();
        let n = m.dim();
        for _ in 0..20 {
            let q: Vec<f64> = (0..n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            let p: Vec<f64> = (0..n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            for (r, g) in lf.gammas().iter().enumerate() {
                let mut f = vec![0.0; n];
                if r == 0 {
                    m.force(&q, &p, &mut f);
                } else {
                    m.noise_force(r - 1, &q, &p, &mut f);
                }
                for i in 0..n {
                    let expect: f64 = -(0..n).map(|j| g[i * n + j] * p[j]).sum::<f64>();
                    assert!((f[i] - expect).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn kubo_mean_energy_at_zero_is_initial_energy() {
    let mut rng = PathRng::from_seed(9);
    for _ in 0..10 {
        let p = kubo(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0, rng.uniform(), 1.9 * rng.uniform());
        let h0 = 0.5 * (p.q0 * p.q0 + p.p0 * p.p0);
        assert!((kubo_mean_energy(&p, 0.0) - h0).abs() <= 1e-12);
    }
}

#[test]
fn kubo_mean_energy_without_damping_is_constant() {
    let p = kubo(1.5, -0.5, 0.7, 0.0);
    for t in [0.0, 1.0, 17.0, 300.0] {
        assert!((kubo_mean_energy(&p, t) - 1.25).abs() < 1e-13);
    }
}

/// E[H(exact(t, W))] with W ~ N(0, t), integrated over w by Simpson's rule.
fn quadrature_mean_energy(p: &KuboParams, t: f64) -> f64 {
    let sd = t.sqrt();
    let (lo, hi, n) = (-12.0 * sd, 12.0 * sd, 20_000);
    let h = (hi - lo) / n as f64;
    let f = |w: f64| {
        let z = kubo_exact(p, t, w);
        let energy = 0.5 * (z.q()[0].powi(2) + z.p()[0].powi(2));
        energy * (-0.5 * w * w / t).exp() / (2.0 * PI * t).sqrt()
    };
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

#[test]
fn kubo_mean_energy_matches_gaussian_average_of_exact_solution() {
    for p in [kubo(2.0, 0.0, 0.5, 0.001), kubo(1.0, 0.3, 0.5, 0.5), kubo(-0.4, 1.2, 0.3, 1.2)] {
        for t in [0.3, 1.0, 4.0] {
            let a = kubo_mean_energy(&p, t);
            let b = quadrature_mean_energy(&p, t);
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{p:?} t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn kubo_mean_energy_envelope_at_desk_parameters() {
    let p = kubo(2.0, 0.0, 0.5, 0.001);
    let rate = p.nu * (2.0 - p.beta * p.beta * p.nu) / 2.0;
    let a = 2.0 * 4.0 / (4.0 - p.nu * p.nu);
    // the oscillating part has decayed after a few time units
    for t in [50.0, 500.0, 5000.0] {
        let e = kubo_mean_energy(&p, t);
        assert!((e - a * (-rate * t).exp()).abs() < 1e-12, "t={t}");
    }
    assert!(kubo_mean_energy(&p, 5000.0) < kubo_mean_energy(&p, 500.0));
}

#[test]
fn kubo_exact_matches_fine_midpoint_integration() {
    let p = kubo(1.0, 0.0, 0.3, 0.5);
    let sys = kubo_system(p).unwrap();
    let dt = 1e-5;
    let steps = 100_000;
    // A frozen path: constant increments summing to W(1) = 0.2.
    let dw = [0.2 / steps as f64];
    let cfg = SolverConfig::default();
    let mut z = p.initial_state();
    for _ in 0..steps {
        z = midpoint_step(&sys, &z, dt, &dw, &cfg).unwrap();
    }
    let exact = kubo_exact(&p, 1.0, 0.2);
    assert!(z.max_abs_diff(&exact) < 1e-4, "{z:?} vs {exact:?}");
}

#[test]
fn van_der_pol_fields() {
    let v = vdp_system(0.05, 0.3).unwrap();
    let mut out = [0.0];
    v.force(&[2.0], &[1.0], &mut out);
    assert!((out[0] + 0.9).abs() < 1e-15);
    v.noise_force(0, &[2.0], &[1.0], &mut out);
    assert_eq!(out[0], 0.0);
    v.noise_dh_dq(0, &[2.0], &[1.0], &mut out);
    assert_eq!(out[0], -0.05);
    v.noise_dh_dp(0, &[2.0], &[1.0], &mut out);
    assert_eq!(out[0], 0.0);
    assert_eq!(v.reference_ergodic_energy(), 2.3165);
}

#[test]
fn lb_fields() {
    let sys = vfp_lb_system(VfpLbParams::default()).unwrap();
    let mut out = [0.0];
    sys.force(&[0.3], &[2.0], &mut out);
    assert!((out[0] + 2.0 * 0.01).abs() < 1e-15);
}

#[test]
fn lb_ergodic_energy_reproduces_reference() {
    let e = lb_ergodic_energy(&VfpLbParams::default()).unwrap();
    assert!((e - 0.471705).abs() < 1e-4, "{e}");
}

#[test]
fn lb_ergodic_energy_without_field_is_gaussian_second_moment() {
    let p = VfpLbParams { e0: 0.0, ..VfpLbParams::default() };
    assert!((lb_ergodic_energy(&p).unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn lb_ergodic_energy_independent_of_nu() {
    let a = lb_ergodic_energy(&VfpLbParams::default()).unwrap();
    let b = lb_ergodic_energy(&VfpLbParams { nu: 0.7, ..VfpLbParams::default() }).unwrap();
    assert!((a - b).abs() <= 1e-12);
}

/// Tensor midpoint rule, independent of the Simpson rule used internally.
fn midpoint_mass(g: &LbGibbs, nx: usize, nv: usize) -> f64 {
    let (hx, hv) = (1.0 / nx as f64, 2.0 * LB_V_MAX / nv as f64);
    let mut total = 0.0;
    for i in 0..nx {
        let x = (i as f64 + 0.5) * hx;
        for j in 0..nv {
            let v = -LB_V_MAX + (j as f64 + 0.5) * hv;
            total += g.density(x, v);
        }
    }
    total * hx * hv
}

#[test]
fn lb_gibbs_density_normalises() {
    for e0 in [0.0, 3.0, 10.0] {
        let g = LbGibbs::new(&VfpLbParams { e0, ..VfpLbParams::default() }).unwrap();
        let mass = midpoint_mass(&g, 400, 4000);
        assert!((mass - 1.0).abs() < 1e-8, "E0={e0}: {mass}");
    }
}

#[test]
fn lb_gibbs_density_properties() {
    let p = VfpLbParams { e0: 0.0, ..VfpLbParams::default() };
    let var = p.d * p.d / (2.0 * p.mu);
    for (x, v) in [(0.1, 0.0), (0.7, 1.3), (0.5, -2.0)] {
        let expect = (-v * v / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        assert!((lb_gibbs_density(&p, x, v).unwrap() - expect).abs() < 1e-10);
    }
    let g = LbGibbs::new(&VfpLbParams::default()).unwrap();
    for (x, v) in [(0.1, 0.4), (0.8, 2.5)] {
        assert_eq!(g.density(x, v), g.density(x, -v));
    }
}

#[test]
fn lb_sampler_moments() {
    let p = VfpLbParams::default();
    let mut rng = PathRng::from_seed(2024);
    let n = 1_000_000;
    let (mut sx, mut sv) = (0.0, 0.0);
    for _ in 0..n {
        let z = sample_initial_lb(&p, &mut rng);
        sx += z.q()[0];
        sv += z.p()[0];
    }
    assert!((sv / n as f64 - 4.0 / 3.0).abs() < 0.01);
    assert!((sx / n as f64 - 0.5).abs() < 0.005);
}

#[test]
fn lb_sampler_unperturbed_is_uniform() {
    let p = VfpLbParams { eps: 0.0, ..VfpLbParams::default() };
    let mut rng = PathRng::from_seed(77);
    let n = 20_000;
    let mut xs: Vec<f64> = (0..n).map(|_| sample_initial_lb(&p, &mut rng).q()[0]).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).abs().max((x - i as f64 / n as f64).abs()))
        .fold(0.0, f64::max);
    // 99% critical value of the Kolmogorov-Smirnov statistic
    assert!(ks < 1.628 / (n as f64).sqrt(), "{ks}");
}

#[test]
fn lorentz_noise_force_is_orthogonal_to_velocity() {
    let sys = vfp_lorentz_system(VfpLorentzParams::default()).unwrap();
    let mut rng = PathRng::from_seed(1);
    let mut f = [0.0; 2];
    for _ in 0..50 {
        let q = [rng.uniform(), rng.uniform()];
        let p = [3.0 * rng.normal(), 3.0 * rng.normal()];
        sys.noise_force(0, &q, &p, &mut f);
        assert!((f[0] * p[0] + f[1] * p[1]).abs() < 1e-14);
        let k = (2.0f64 * 0.005).sqrt();
        assert_eq!(f, [k * p[1], -k * p[0]]);
    }
}

#[test]
fn lorentz_fine_midpoint_conserves_energy() {
    let params = VfpLorentzParams::default();
    let sys = vfp_lorentz_system(params).unwrap();
    let mut rng = PathRng::from_seed(8);
    let mut z = sample_initial_lorentz(&params, &mut rng);
    let h0 = sys.hamiltonian(z.q(), z.p());
    let dt = 1e-4;
    let mut driver = BrownianDriver::new(8, 0, 1, dt, IncrementMode::Gaussian).unwrap();
    let cfg = SolverConfig::default();
    let mut dw = [0.0];
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        driver.next_increments(&mut dw);
        z = midpoint_step(&sys, &z, dt, &dw, &cfg).unwrap();
        worst = worst.max((sys.hamiltonian(z.q(), z.p()) - h0).abs());
    }
    assert!(worst <= 1e-7, "{worst}");
}

#[test]
fn lorentz_sampler_moments() {
    let params = VfpLorentzParams::default();
    let sys = vfp_lorentz_system(params).unwrap();
    let mut rng = PathRng::from_seed(31);
    let n = 1_000_000;
    let (mut kin, mut energy) = (0.0, 0.0);
    for _ in 0..n {
        let z = sample_initial_lorentz(&params, &mut rng);
        kin += 0.5 * (z.p()[0].powi(2) + z.p()[1].powi(2));
        energy += sys.hamiltonian(z.q(), z.p());
    }
    assert!((kin / n as f64 - 1.0).abs() < 0.01);
    assert!((energy / n as f64 - 1.0).abs() < 0.01);
}

#[test]
fn lorentz_potential_value() {
    assert!((lorentz_potential(3.0, 0.125, 0.125) + 3.0 / (4.0 * PI)).abs() < 1e-15);
}

#[test]
fn central_force_is_radial_and_invariant() {
    let sys = central_force_system(0.4, 0.3).unwrap();
    let mut rng = PathRng::from_seed(4);
    let mut f = [0.0; 2];
    for _ in 0..20 {
        let q = [rng.normal(), rng.normal()];
        let p = [rng.normal(), rng.normal()];
        sys.force(&q, &p, &mut f);
        assert!((f[0] * -q[1] + f[1] * q[0]).abs() < 1e-14);
        sys.noise_force(0, &q, &p, &mut f);
        assert_eq!(f, [0.0, 0.0]);
        let th: f64 = 2.0 * PI * rng.uniform();
        let (s, c) = th.sin_cos();
        let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let (rq, rp) = (rot(q), rot(p));
        assert!((sys.hamiltonian(&rq, &rp) - sys.hamiltonian(&q, &p)).abs() < 1e-13);
        assert!((sys.noise_hamiltonian(0, &rq, &rp) - sys.noise_hamiltonian(0, &q, &p)).abs() < 1e-13);
    }
}

#[test]
fn model_enum_delegates() {
    let m = Model::Kubo(kubo_system(kubo(2.0, 0.0, 0.5, 0.1)).unwrap());
    assert_eq!(m.hamiltonian(&[2.0], &[0.0]), 2.0);
    assert!(m.traits().separable);
    let s = State::new(&[1.0], &[1.0]).unwrap();
    assert_eq!(s.dim(), m.dim());
}
