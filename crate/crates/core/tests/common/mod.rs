#![allow(dead_code)]

use sdha::models::{kubo_system, Kubo, KuboParams};
use sdha::noise::PathRng;
use sdha::{CallbackSystem, State, SystemTraits};

pub fn kubo(beta: f64, nu: f64) -> Kubo {
    kubo_system(KuboParams { q0: 1.0, p0: 0.0, beta, nu }).unwrap()
}

pub fn random_state(rng: &mut PathRng, n: usize) -> State {
    let z: Vec<f64> = (0..2 * n).map(|_| rng.normal()).collect();
    State::from_flat(&z).unwrap()
}

pub fn random_increments(rng: &mut PathRng, m: usize, dt: f64) -> Vec<f64> {
    (0..m).map(|_| dt.sqrt() * rng.normal()).collect()
}

/// N = 1, m = 1 with H = p^2 (1 + q^2/4)/2 + q^2/2, h = 0.3 q p,
/// F = -0.2 p, f = -0.1 q.
pub fn coupled_oscillator() -> CallbackSystem {
    CallbackSystem::new(1, 1)
        .hamiltonian(
            |q, p| 0.5 * p[0] * p[0] * (1.0 + 0.25 * q[0] * q[0]) + 0.5 * q[0] * q[0],
            |q, p, o| o[0] = 0.25 * p[0] * p[0] * q[0] + q[0],
            |q, p, o| o[0] = p[0] * (1.0 + 0.25 * q[0] * q[0]),
        )
        .noise_hamiltonian(|_, q, p| 0.3 * q[0] * p[0], |_, _, p, o| o[0] = 0.3 * p[0], |_, q, _, o| o[0] = 0.3 * q[0])
        .force(|_, p, o| o[0] = -0.2 * p[0])
        .noise_force(|_, q, _, o| o[0] = -0.1 * q[0])
}

/// Forced pendulum whose forces depend on q only: H = p^2/2 - cos q,
/// h = 0.2 sin q, F = -0.1 sin q, f = 0.
pub fn pendulum() -> CallbackSystem {
    CallbackSystem::new(1, 1)
        .hamiltonian(|q, p| 0.5 * p[0] * p[0] - q[0].cos(), |q, _, o| o[0] = q[0].sin(), |_, p, o| o[0] = p[0])
        .noise_hamiltonian(|_, q, _| 0.2 * q[0].sin(), |_, q, _, o| o[0] = 0.2 * q[0].cos(), |_, _, _, o| o[0] = 0.0)
        .force(|q, _, o| o[0] = -0.1 * q[0].sin())
        .with_traits(SystemTraits { separable: true, forcing_free_of_p: true })
}

/// Unforced two-dimensional system with nonlinear separable energy and noise:
/// H = |p|^2/2 + q1^4/4 + q1 q2 + q2^2/2, h = 0.5 q1 q2 + 0.1 p1^2.
pub fn unforced_2d() -> CallbackSystem {
    CallbackSystem::new(2, 1)
        .hamiltonian(
            |q, p| 0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.25 * q[0].powi(4) + q[0] * q[1] + 0.5 * q[1] * q[1],
            |q, _, o| {
                o[0] = q[0].powi(3) + q[1];
                o[1] = q[0] + q[1];
            },
            |_, p, o| o.copy_from_slice(p),
        )
        .noise_hamiltonian(
            |_, q, p| 0.5 * q[0] * q[1] + 0.1 * p[0] * p[0],
            |_, q, _, o| {
                o[0] = 0.5 * q[1];
                o[1] = 0.5 * q[0];
            },
            |_, _, p, o| {
                o[0] = 0.2 * p[0];
                o[1] = 0.0;
            },
        )
        .with_traits(SystemTraits { separable: true, forcing_free_of_p: true })
}
