//! Reference systems: the damped Kubo oscillator, stochastic van der Pol,
//! Lenard-Bernstein and Lorentz particle models, and a planar central-force
//! model with radial forcing.

use std::f64::consts::{PI, TAU};

use crate::error::{invalid, Error, Result};
use crate::noise::PathRng;
use crate::system::{ForcedHamiltonian, LinearForcing, State, SystemTraits};

const SEPARABLE_P_FORCED: SystemTraits = SystemTraits { separable: true, forcing_free_of_p: false };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KuboParams {
    pub q0: f64,
    pub p0: f64,
    pub beta: f64,
    pub nu: f64,
}

impl KuboParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.q0, self.p0, self.beta, self.nu].iter().all(|v| v.is_finite());
        if !finite || !(0.0..2.0).contains(&self.nu) {
            return Err(invalid(format!("Kubo parameters need finite values and 0 <= nu < 2, got nu = {}", self.nu)));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        0.5 * (4.0 - self.nu * self.nu).sqrt()
    }

    pub fn initial_state(&self) -> State {
        State::new(&[self.q0], &[self.p0]).expect("validated parameters")
    }
}

/// H = (p^2 + q^2)/2, h = beta H, F = -nu p, f = -beta nu p.
#[derive(Debug, Clone, PartialEq)]
pub struct Kubo {
    pub params: KuboParams,
    forcing: LinearForcing,
}

pub fn kubo_system(params: KuboParams) -> Result<Kubo> {
    params.validate()?;
    Ok(Kubo { params, forcing: LinearForcing::scalar(&[params.nu, params.beta * params.nu]) })
}

impl ForcedHamiltonian for Kubo {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        0.5 * (p[0] * p[0] + q[0] * q[0])
    }
    fn dh_dq(&self, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = q[0];
    }
    fn dh_dp(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = p[0];
    }
    fn noise_hamiltonian(&self, _r: usize, q: &[f64], p: &[f64]) -> f64 {
        self.params.beta * self.hamiltonian(q, p)
    }
    fn noise_dh_dq(&self, _r: usize, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = self.params.beta * q[0];
    }
    fn noise_dh_dp(&self, _r: usize, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = self.params.beta * p[0];
    }
    fn force(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = -self.params.nu * p[0];
    }
    fn noise_force(&self, _r: usize, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = -self.params.beta * self.params.nu * p[0];
    }
    fn traits(&self) -> SystemTraits {
        SEPARABLE_P_FORCED
    }
    fn linear_forcing(&self) -> Option<&LinearForcing> {
        Some(&self.forcing)
    }
}

/// Pathwise solution: the damped oscillator run for the shifted time t + beta W(t).
pub fn kubo_exact(params: &KuboParams, t: f64, w: f64) -> State {
    let KuboParams { q0, p0, beta, nu } = *params;
    let omega = params.omega();
    let tau = t + beta * w;
    let decay = (-0.5 * nu * tau).exp();
    let (s, c) = (omega * tau).sin_cos();
    let q = decay * (q0 * c + (p0 + 0.5 * nu * q0) / omega * s);
    let p = decay * (p0 * c - (q0 + 0.5 * nu * p0) / omega * s);
    State::new(&[q], &[p]).expect("finite closed form")
}

/// E[H(q(t), p(t))] for the damped Kubo oscillator.
pub fn kubo_mean_energy(params: &KuboParams, t: f64) -> f64 {
    let KuboParams { q0, p0, beta, nu } = *params;
    let omega = params.omega();
    let b2 = beta * beta;
    let denom = 4.0 - nu * nu;
    let a = 2.0 * (p0 * p0 + q0 * q0 + nu * p0 * q0) / denom;
    let b = -(nu * nu * (p0 * p0 + q0 * q0) + 4.0 * nu * p0 * q0) / (2.0 * denom);
    let c = nu * (q0 * q0 - p0 * p0) / (2.0 * denom.sqrt());
    let phase = 2.0 * (1.0 - b2 * nu) * omega * t;
    a * (-0.5 * nu * (2.0 - b2 * nu) * t).exp()
        + (-((2.0 - nu * nu) * b2 + nu) * t).exp() * (b * phase.cos() + c * phase.sin())
}

/// Van der Pol oscillator with additive noise: H = (p^2 + q^2)/2,
/// F = nu (1 - q^2) p, h = -sigma q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPol {
    pub sigma: f64,
    pub nu: f64,
}

/// Long-time mean energy reported for sigma = 0.05, nu = 0.001.
pub const VDP_ERGODIC_ENERGY: f64 = 2.3165;

pub fn vdp_system(sigma: f64, nu: f64) -> Result<VanDerPol> {
    if !(sigma >= 0.0 && nu >= 0.0) || !sigma.is_finite() || !nu.is_finite() {
        return Err(invalid("van der Pol needs finite sigma, nu >= 0"));
    }
    Ok(VanDerPol { sigma, nu })
}

impl VanDerPol {
    pub fn reference_ergodic_energy(&self) -> f64 {
        VDP_ERGODIC_ENERGY
    }
}

impl ForcedHamiltonian for VanDerPol {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        0.5 * (p[0] * p[0] + q[0] * q[0])
    }
    fn dh_dq(&self, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = q[0];
    }
    fn dh_dp(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = p[0];
    }
    fn noise_hamiltonian(&self, _r: usize, q: &[f64], _p: &[f64]) -> f64 {
        -self.sigma * q[0]
    }
    fn noise_dh_dq(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = -self.sigma;
    }
    fn noise_dh_dp(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn force(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = self.nu * (1.0 - q[0] * q[0]) * p[0];
    }
    fn noise_force(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn traits(&self) -> SystemTraits {
        SEPARABLE_P_FORCED
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfpLbParams {
    pub nu: f64,
    pub mu: f64,
    pub d: f64,
    pub e0: f64,
    /// Spatial perturbation of the initial density.
    pub eps: f64,
    /// Weight of the bump relative to the bulk.
    pub a: f64,
    pub v0: f64,
    pub sigma: f64,
}

/// The bump-on-tail setup whose ergodic energy is about 0.471705.
impl Default for VfpLbParams {
    fn default() -> Self {
        Self { nu: 0.01, mu: 1.0, d: 2f64.sqrt(), e0: 3.0, eps: 0.25, a: 0.5, v0: 4.0, sigma: 0.5 }
    }
}

impl VfpLbParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.nu, self.mu, self.d, self.e0, self.eps, self.a, self.v0, self.sigma];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("Lenard-Bernstein parameters must be finite"));
        }
        if !(self.nu > 0.0 && self.mu > 0.0 && self.d > 0.0 && self.e0 >= 0.0) {
            return Err(invalid("Lenard-Bernstein needs nu, mu, D > 0 and E0 >= 0"));
        }
        if !(self.eps.abs() < 1.0 && self.a >= 0.0 && self.sigma > 0.0) {
            return Err(invalid("initial density needs |eps| < 1, a >= 0, sigma > 0"));
        }
        Ok(())
    }
}

/// phi(x) = -E0/(4 pi) sin(4 pi x).
pub fn lb_potential(e0: f64, x: f64) -> f64 {
    -e0 / (4.0 * PI) * (4.0 * PI * x).sin()
}

/// Particle in the periodic potential with Lenard-Bernstein collisions:
/// H = V^2/2 - phi(X), h = -sqrt(nu) D X, F = -nu mu V, f = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LenardBernstein {
    pub params: VfpLbParams,
    forcing: LinearForcing,
}

pub fn vfp_lb_system(params: VfpLbParams) -> Result<LenardBernstein> {
    params.validate()?;
    Ok(LenardBernstein { params, forcing: LinearForcing::scalar(&[params.nu * params.mu, 0.0]) })
}

impl ForcedHamiltonian for LenardBernstein {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        0.5 * p[0] * p[0] - lb_potential(self.params.e0, q[0])
    }
    fn dh_dq(&self, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = self.params.e0 * (4.0 * PI * q[0]).cos();
    }
    fn dh_dp(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = p[0];
    }
    fn noise_hamiltonian(&self, _r: usize, q: &[f64], _p: &[f64]) -> f64 {
        -self.params.nu.sqrt() * self.params.d * q[0]
    }
    fn noise_dh_dq(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = -self.params.nu.sqrt() * self.params.d;
    }
    fn noise_dh_dp(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn force(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = -self.params.nu * self.params.mu * p[0];
    }
    fn noise_force(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn traits(&self) -> SystemTraits {
        SEPARABLE_P_FORCED
    }
    fn linear_forcing(&self) -> Option<&LinearForcing> {
        Some(&self.forcing)
    }
}

/// Velocity cutoff of the quadrature domain.
pub const LB_V_MAX: f64 = 10.0;
const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_LEVEL: u32 = 22;

/// Composite Simpson rule on 2^level panels, doubled until successive values
/// differ by less than `QUAD_TOL`.
fn refined_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let simpson = |panels: usize| {
        let h = (hi - lo) / panels as f64;
        let inner: f64 = (1..panels).map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        (f(lo) + f(hi) + inner) * h / 3.0
    };
    let mut prev = simpson(16);
    for level in 5..=QUAD_MAX_LEVEL {
        let next = simpson(1 << level);
        if (next - prev).abs() < QUAD_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("Simpson refinement did not settle below {QUAD_TOL}")))
}

/// Invariant density exp(-2 mu H / D^2) / Z of the Lenard-Bernstein model on
/// [0, 1] x [-LB_V_MAX, LB_V_MAX]. The density factorises, so the tensor
/// Simpson rule is evaluated as a product of one-dimensional rules.
#[derive(Debug, Clone, PartialEq)]
pub struct LbGibbs {
    params: VfpLbParams,
    zx: f64,
    zv: f64,
}

impl LbGibbs {
    pub fn new(params: &VfpLbParams) -> Result<Self> {
        params.validate()?;
        let p = *params;
        let zx = refined_simpson(|x| Self::weight_x(&p, x), 0.0, 1.0)?;
        let zv = refined_simpson(|v| Self::weight_v(&p, v), -LB_V_MAX, LB_V_MAX)?;
        Ok(Self { params: p, zx, zv })
    }

    fn weight_x(p: &VfpLbParams, x: f64) -> f64 {
        (2.0 * p.mu * lb_potential(p.e0, x) / (p.d * p.d)).exp()
    }

    fn weight_v(p: &VfpLbParams, v: f64) -> f64 {
        (-p.mu * v * v / (p.d * p.d)).exp()
    }

    pub fn normalization(&self) -> f64 {
        self.zx * self.zv
    }

    pub fn density(&self, x: f64, v: f64) -> f64 {
        Self::weight_x(&self.params, x) * Self::weight_v(&self.params, v) / self.normalization()
    }

    /// Marginal density of x on [0, 1].
    pub fn marginal_x(&self, x: f64) -> f64 {
        Self::weight_x(&self.params, x) / self.zx
    }

    pub fn marginal_v(&self, v: f64) -> f64 {
        Self::weight_v(&self.params, v) / self.zv
    }

    /// Mean of H under the invariant density.
    pub fn mean_energy(&self) -> Result<f64> {
        let p = self.params;
        let kinetic = refined_simpson(|v| 0.5 * v * v * Self::weight_v(&p, v), -LB_V_MAX, LB_V_MAX)? / self.zv;
        let potential = refined_simpson(|x| -lb_potential(p.e0, x) * Self::weight_x(&p, x), 0.0, 1.0)? / self.zx;
        Ok(kinetic + potential)
    }
}

pub fn lb_gibbs_density(params: &VfpLbParams, x: f64, v: f64) -> Result<f64> {
    Ok(LbGibbs::new(params)?.density(x, v))
}

pub fn lb_ergodic_energy(params: &VfpLbParams) -> Result<f64> {
    LbGibbs::new(params)?.mean_energy()
}

/// Draws x from (1 + eps cos 2 pi x) on [0, 1] by rejection under the flat
/// envelope 1 + |eps|.
fn perturbed_uniform(eps: f64, rng: &mut PathRng) -> f64 {
    loop {
        let x = rng.uniform();
        if rng.uniform() * (1.0 + eps.abs()) < 1.0 + eps * (TAU * x).cos() {
            return x;
        }
    }
}

/// Initial condition from the bump-on-tail density.
pub fn sample_initial_lb(params: &VfpLbParams, rng: &mut PathRng) -> State {
    let x = perturbed_uniform(params.eps, rng);
    let bump = rng.uniform() < params.a / (1.0 + params.a);
    let z = rng.normal();
    let v = if bump { params.v0 + params.sigma * z } else { z };
    State::new(&[x], &[v]).expect("finite sample")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfpLorentzParams {
    pub nu: f64,
    pub e0: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for VfpLorentzParams {
    fn default() -> Self {
        Self { nu: 0.005, e0: 3.0, eps1: 0.25, eps2: 0.25 }
    }
}

impl VfpLorentzParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.nu, self.e0, self.eps1, self.eps2];
        if all.iter().any(|v| !v.is_finite()) || self.nu < 0.0 || self.e0 < 0.0 {
            return Err(invalid("Lorentz model needs finite nu, E0 >= 0"));
        }
        if !(self.eps1.abs() < 1.0 && self.eps2.abs() < 1.0) {
            return Err(invalid("initial density needs |eps1|, |eps2| < 1"));
        }
        Ok(())
    }
}

/// phi(x, y) = -E0/(4 pi) sin(4 pi x) sin(4 pi y).
pub fn lorentz_potential(e0: f64, x: f64, y: f64) -> f64 {
    -e0 / (4.0 * PI) * (4.0 * PI * x).sin() * (4.0 * PI * y).sin()
}

/// Particle in a periodic 2D potential with pitch-angle scattering:
/// H = |V|^2/2 - phi, h = 0, F = 0, f = sqrt(2 nu) (V_y, -V_x).
#[derive(Debug, Clone, PartialEq)]
pub struct Lorentz {
    pub params: VfpLorentzParams,
    forcing: LinearForcing,
}

pub fn vfp_lorentz_system(params: VfpLorentzParams) -> Result<Lorentz> {
    params.validate()?;
    let k = (2.0 * params.nu).sqrt();
    let forcing = LinearForcing::new(2, vec![vec![0.0; 4], vec![0.0, -k, k, 0.0]])?;
    Ok(Lorentz { params, forcing })
}

impl ForcedHamiltonian for Lorentz {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        0.5 * (p[0] * p[0] + p[1] * p[1]) - lorentz_potential(self.params.e0, q[0], q[1])
    }
    fn dh_dq(&self, q: &[f64], _p: &[f64], out: &mut [f64]) {
        let (sx, cx) = (4.0 * PI * q[0]).sin_cos();
        let (sy, cy) = (4.0 * PI * q[1]).sin_cos();
        out[0] = self.params.e0 * cx * sy;
        out[1] = self.params.e0 * sx * cy;
    }
    fn dh_dp(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&p[..2]);
    }
    fn noise_hamiltonian(&self, _r: usize, _q: &[f64], _p: &[f64]) -> f64 {
        0.0
    }
    fn noise_dh_dq(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn noise_dh_dp(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn force(&self, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn noise_force(&self, _r: usize, _q: &[f64], p: &[f64], out: &mut [f64]) {
        let k = (2.0 * self.params.nu).sqrt();
        out[0] = k * p[1];
        out[1] = -k * p[0];
    }
    fn traits(&self) -> SystemTraits {
        SEPARABLE_P_FORCED
    }
    fn linear_forcing(&self) -> Option<&LinearForcing> {
        Some(&self.forcing)
    }
}

pub fn sample_initial_lorentz(params: &VfpLorentzParams, rng: &mut PathRng) -> State {
    let x = perturbed_uniform(params.eps1, rng);
    let y = perturbed_uniform(params.eps2, rng);
    let vx = rng.normal();
    let vy = rng.normal();
    State::new(&[x, y], &[vx, vy]).expect("finite sample")
}

/// Planar oscillator H = |p|^2/2 + |q|^2/2 with h = beta H and radial
/// forcing F = -nu (q . p) q, f = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralForce {
    pub nu: f64,
    pub beta: f64,
}

pub fn central_force_system(nu: f64, beta: f64) -> Result<CentralForce> {
    if !nu.is_finite() || !beta.is_finite() {
        return Err(invalid("central-force parameters must be finite"));
    }
    Ok(CentralForce { nu, beta })
}

impl ForcedHamiltonian for CentralForce {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        0.5 * (p[0] * p[0] + p[1] * p[1] + q[0] * q[0] + q[1] * q[1])
    }
    fn dh_dq(&self, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&q[..2]);
    }
    fn dh_dp(&self, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&p[..2]);
    }
    fn noise_hamiltonian(&self, _r: usize, q: &[f64], p: &[f64]) -> f64 {
        self.beta * self.hamiltonian(q, p)
    }
    fn noise_dh_dq(&self, _r: usize, q: &[f64], _p: &[f64], out: &mut [f64]) {
        out[0] = self.beta * q[0];
        out[1] = self.beta * q[1];
    }
    fn noise_dh_dp(&self, _r: usize, _q: &[f64], p: &[f64], out: &mut [f64]) {
        out[0] = self.beta * p[0];
        out[1] = self.beta * p[1];
    }
    fn force(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let qp = q[0] * p[0] + q[1] * p[1];
        out[0] = -self.nu * qp * q[0];
        out[1] = -self.nu * qp * q[1];
    }
    fn noise_force(&self, _r: usize, _q: &[f64], _p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn traits(&self) -> SystemTraits {
        SEPARABLE_P_FORCED
    }
}

/// Any of the shipped models behind one concrete type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Kubo(Kubo),
    VanDerPol(VanDerPol),
    LenardBernstein(LenardBernstein),
    Lorentz(Lorentz),
    CentralForce(CentralForce),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $body:expr) => {
        match $self {
            Model::Kubo($m) => $body,
            Model::VanDerPol($m) => $body,
            Model::LenardBernstein($m) => $body,
            Model::Lorentz($m) => $body,
            Model::CentralForce($m) => $body,
        }
    };
}

impl ForcedHamiltonian for Model {
    fn dim(&self) -> usize {
        delegate!(self, m => m.dim())
    }
    fn noise_dim(&self) -> usize {
        delegate!(self, m => m.noise_dim())
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        delegate!(self, m => m.hamiltonian(q, p))
    }
    fn dh_dq(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.dh_dq(q, p, out))
    }
    fn dh_dp(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.dh_dp(q, p, out))
    }
    fn noise_hamiltonian(&self, r: usize, q: &[f64], p: &[f64]) -> f64 {
        delegate!(self, m => m.noise_hamiltonian(r, q, p))
    }
    fn noise_dh_dq(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.noise_dh_dq(r, q, p, out))
    }
    fn noise_dh_dp(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.noise_dh_dp(r, q, p, out))
    }
    fn force(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.force(q, p, out))
    }
    fn noise_force(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.noise_force(r, q, p, out))
    }
    fn traits(&self) -> SystemTraits {
        delegate!(self, m => m.traits())
    }
    fn linear_forcing(&self) -> Option<&LinearForcing> {
        delegate!(self, m => m.linear_forcing())
    }
}
