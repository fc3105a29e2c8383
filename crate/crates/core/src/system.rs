//! Phase-space states and the forced Hamiltonian system interface.
//!
//! A system is the Stratonovich SDE
//!
//! ```text
//! dq =  H_p dt + sum_r h_{r,p} o dW^r
//! dp = (-H_q + F) dt + sum_r (-h_{r,q} + f_r) o dW^r
//! ```
//!
//! with configuration space R^N and m noise channels.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};

/// Small inline vector used for positions and momenta.
pub type Vector = SmallVec<[f64; 4]>;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    q: Vector,
    p: Vector,
}

impl State {
    pub fn new(q: &[f64], p: &[f64]) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), found: p.len() });
        }
        if q.is_empty() {
            return Err(invalid("state dimension must be at least 1"));
        }
        if !q.iter().chain(p).all(|x| x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { q: q.into(), p: p.into() })
    }

    /// Builds a state from `[q, p]` stacked into one slice of length 2N.
    pub fn from_flat(z: &[f64]) -> Result<Self> {
        if z.len() % 2 != 0 {
            return Err(invalid("flat state must have even length"));
        }
        let n = z.len() / 2;
        Self::new(&z[..n], &z[n..])
    }

    /// Assembles a state from buffers the caller has already sized; rejects non-finite output.
    pub(crate) fn from_parts(q: Vector, p: Vector) -> Result<Self> {
        debug_assert_eq!(q.len(), p.len());
        if !q.iter().chain(p.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { q, p })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.q.iter().chain(self.p.iter()).copied().collect()
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.q
            .iter()
            .chain(self.p.iter())
            .zip(other.q.iter().chain(other.p.iter()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Structural hypotheses a system can advertise so integrators may exploit them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SystemTraits {
    /// H and every h_r split as T(p) + U(q).
    pub separable: bool,
    /// F and every f_r depend on q only.
    pub forcing_free_of_p: bool,
}

/// Constant matrices with F = -Gamma_0 p and f_r = -Gamma_r p, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForcing {
    n: usize,
    gammas: Vec<Vec<f64>>,
}

impl LinearForcing {
    /// `gammas[0]` is the drift matrix, `gammas[r]` belongs to noise channel r.
    pub fn new(n: usize, gammas: Vec<Vec<f64>>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(invalid("linear forcing needs at least the drift matrix"));
        }
        for g in &gammas {
            if g.len() != n * n {
                return Err(Error::DimensionMismatch { expected: n * n, found: g.len() });
            }
        }
        Ok(Self { n, gammas })
    }

    pub fn scalar(gammas: &[f64]) -> Self {
        Self { n: 1, gammas: gammas.iter().map(|&g| vec![g]).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn gammas(&self) -> &[Vec<f64>] {
        &self.gammas
    }

    /// gamma = dt Gamma_0 + sum_r dW^r Gamma_r, row-major N x N.
    pub fn combined(&self, dt: f64, dw: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.gammas[0].iter().map(|g| dt * g).collect();
        for (g, w) in self.gammas[1..].iter().zip(dw) {
            for (o, x) in out.iter_mut().zip(g) {
                *o += w * x;
            }
        }
        out
    }
}

/// The forced Hamiltonian SDE interface. Gradients and forces are written into
/// caller-provided slices of length N so integrator inner loops stay allocation-free.
/// Noise channels are indexed `0..noise_dim()`.
pub trait ForcedHamiltonian: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;

    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64;
    fn dh_dq(&self, q: &[f64], p: &[f64], out: &mut [f64]);
    fn dh_dp(&self, q: &[f64], p: &[f64], out: &mut [f64]);

    fn noise_hamiltonian(&self, r: usize, q: &[f64], p: &[f64]) -> f64;
    fn noise_dh_dq(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]);
    fn noise_dh_dp(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]);

    fn force(&self, q: &[f64], p: &[f64], out: &mut [f64]);
    fn noise_force(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]);

    fn traits(&self) -> SystemTraits {
        SystemTraits::default()
    }

    fn linear_forcing(&self) -> Option<&LinearForcing> {
        None
    }
}

/// Drift vector field a(z) = (H_p, -H_q + F) written into `out` as `[q-part, p-part]`.
pub fn drift<S: ForcedHamiltonian + ?Sized>(sys: &S, q: &[f64], p: &[f64], out: &mut [f64]) {
    let n = q.len();
    let (oq, op) = out.split_at_mut(n);
    sys.dh_dp(q, p, oq);
    let mut f: Vector = SmallVec::from_elem(0.0, n);
    sys.dh_dq(q, p, op);
    sys.force(q, p, &mut f);
    for (o, fi) in op.iter_mut().zip(&f) {
        *o = -*o + fi;
    }
}

/// Noise vector field b_r(z) = (h_{r,p}, -h_{r,q} + f_r) written into `out`.
pub fn diffusion<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    r: usize,
    q: &[f64],
    p: &[f64],
    out: &mut [f64],
) {
    let n = q.len();
    let (oq, op) = out.split_at_mut(n);
    sys.noise_dh_dp(r, q, p, oq);
    let mut f: Vector = SmallVec::from_elem(0.0, n);
    sys.noise_dh_dq(r, q, p, op);
    sys.noise_force(r, q, p, &mut f);
    for (o, fi) in op.iter_mut().zip(&f) {
        *o = -*o + fi;
    }
}

pub(crate) fn check_dims<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    state: &State,
    dw: &[f64],
) -> Result<()> {
    if state.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: state.dim() });
    }
    if dw.len() != sys.noise_dim() {
        return Err(Error::DimensionMismatch { expected: sys.noise_dim(), found: dw.len() });
    }
    Ok(())
}

type ScalarFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
type ChannelScalarFn = Box<dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync>;
type ChannelVectorFn = Box<dyn Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A system assembled from closures. Unset callbacks are identically zero.
pub struct CallbackSystem {
    n: usize,
    m: usize,
    h: ScalarFn,
    h_q: VectorFn,
    h_p: VectorFn,
    noise_h: ChannelScalarFn,
    noise_h_q: ChannelVectorFn,
    noise_h_p: ChannelVectorFn,
    force: VectorFn,
    noise_force: ChannelVectorFn,
    traits: SystemTraits,
    linear: Option<LinearForcing>,
}

impl CallbackSystem {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            h: Box::new(|_, _| 0.0),
            h_q: Box::new(|_, _, o| o.fill(0.0)),
            h_p: Box::new(|_, _, o| o.fill(0.0)),
            noise_h: Box::new(|_, _, _| 0.0),
            noise_h_q: Box::new(|_, _, _, o| o.fill(0.0)),
            noise_h_p: Box::new(|_, _, _, o| o.fill(0.0)),
            force: Box::new(|_, _, o| o.fill(0.0)),
            noise_force: Box::new(|_, _, _, o| o.fill(0.0)),
            traits: SystemTraits::default(),
            linear: None,
        }
    }

    pub fn hamiltonian(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        h_q: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        h_p: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.h = Box::new(h);
        self.h_q = Box::new(h_q);
        self.h_p = Box::new(h_p);
        self
    }

    pub fn noise_hamiltonian(
        mut self,
        h: impl Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        h_q: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        h_p: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.noise_h = Box::new(h);
        self.noise_h_q = Box::new(h_q);
        self.noise_h_p = Box::new(h_p);
        self
    }

    pub fn force(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.force = Box::new(f);
        self
    }

    pub fn noise_force(
        mut self,
        f: impl Fn(usize, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.noise_force = Box::new(f);
        self
    }

    pub fn with_traits(mut self, traits: SystemTraits) -> Self {
        self.traits = traits;
        self
    }

    pub fn with_linear_forcing(mut self, lf: LinearForcing) -> Self {
        self.linear = Some(lf);
        self
    }
}

impl ForcedHamiltonian for CallbackSystem {
    fn dim(&self) -> usize {
        self.n
    }
    fn noise_dim(&self) -> usize {
        self.m
    }
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        (self.h)(q, p)
    }
    fn dh_dq(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.h_q)(q, p, out)
    }
    fn dh_dp(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.h_p)(q, p, out)
    }
    fn noise_hamiltonian(&self, r: usize, q: &[f64], p: &[f64]) -> f64 {
        (self.noise_h)(r, q, p)
    }
    fn noise_dh_dq(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.noise_h_q)(r, q, p, out)
    }
    fn noise_dh_dp(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.noise_h_p)(r, q, p, out)
    }
    fn force(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.force)(q, p, out)
    }
    fn noise_force(&self, r: usize, q: &[f64], p: &[f64], out: &mut [f64]) {
        (self.noise_force)(r, q, p, out)
    }
    fn traits(&self) -> SystemTraits {
        self.traits
    }
    fn linear_forcing(&self) -> Option<&LinearForcing> {
        self.linear.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<State>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("trajectory spacing must be positive"));
        }
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Largest deviation seen for one gradient callback.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub callback: String,
    pub max_deviation: f64,
    /// Index of the first test point where the deviation exceeded the tolerance.
    pub first_failure: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub checks: Vec<GradientCheck>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.first_failure.is_none())
    }
}

/// Compares every gradient callback against central finite differences at
/// `n_points` pseudo-random states drawn uniformly from [-2, 2]^{2N}.
/// Deviations are relative to max(1, |gradient|).
pub fn self_check_gradients<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    n_points: usize,
    tol: f64,
    seed: u64,
) -> Result<GradientReport> {
    if !(tol > 0.0) {
        return Err(invalid("gradient check tolerance must be positive"));
    }
    let n = sys.dim();
    let m = sys.noise_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: Vec<GradientCheck> = std::iter::once("dH_dq".to_string())
        .chain(std::iter::once("dH_dp".to_string()))
        .chain((0..m).flat_map(|r| [format!("dh{r}_dq"), format!("dh{r}_dp")]))
        .map(|callback| GradientCheck { callback, max_deviation: 0.0, first_failure: None })
        .collect();

    let mut grad = vec![0.0; n];
    for point in 0..n_points {
        let z: Vec<f64> = (0..2 * n).map(|_| 4.0 * crate::noise::unit_f64(rng.next_u64()) - 2.0).collect();
        let (q, p) = z.split_at(n);
        for (slot, check) in checks.iter_mut().enumerate() {
            let channel = if slot < 2 { None } else { Some((slot - 2) / 2) };
            let wrt_p = slot % 2 == 1;
            let value = |q: &[f64], p: &[f64]| match channel {
                None => sys.hamiltonian(q, p),
                Some(r) => sys.noise_hamiltonian(r, q, p),
            };
            match (channel, wrt_p) {
                (None, false) => sys.dh_dq(q, p, &mut grad),
                (None, true) => sys.dh_dp(q, p, &mut grad),
                (Some(r), false) => sys.noise_dh_dq(r, q, p, &mut grad),
                (Some(r), true) => sys.noise_dh_dp(r, q, p, &mut grad),
            }
            for i in 0..n {
                let idx = if wrt_p { n + i } else { i };
                let h = 1e-6 * z[idx].abs().max(1.0);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[idx] += h;
                zm[idx] -= h;
                let fd = (value(&zp[..n], &zp[n..]) - value(&zm[..n], &zm[n..])) / (zp[idx] - zm[idx]);
                let dev = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
                check.max_deviation = check.max_deviation.max(dev);
                if !(dev <= tol) && check.first_failure.is_none() {
                    check.first_failure = Some(point);
                }
            }
        }
    }
    Ok(GradientReport { checks })
}
