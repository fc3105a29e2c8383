//! Monte Carlo ensembles, convergence-order estimation and histograms.
//!
//! Paths are split into fixed chunks that depend only on the number of paths.
//! Each chunk accumulates its statistics in path order and the chunk results
//! are merged along a fixed binary tree, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::error::{invalid, Error, Result};
use crate::models::{kubo_exact, Kubo};
use crate::ms::{dirk_step_with_tableau, heun_step, midpoint_step_with_stats, sprk_step_with_stats};
use crate::ms::{stormer_verlet_step_with_stats, StepStats};
use crate::noise::{aggregate_path, BrownianDriver, FinePath, IncrementMode, PathRng};
use crate::solver::SolverConfig;
use crate::sprk::SprkTableau;
use crate::structure::momentum_map_so2;
use crate::system::{ForcedHamiltonian, State};
use crate::wrk::{wrk_step_with_stats, WrkTableau};

/// Ensembles with more than this fraction of failed paths are flagged.
pub const DEGRADED_FRACTION: f64 = 0.01;
const MAX_CHUNKS: usize = 256;
const MIN_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Midpoint,
    StormerVerlet,
    Dirk { lambda: f64, tableau: SprkTableau },
    /// Any partitioned tableau, all stages solved together.
    Sprk(SprkTableau),
    Heun,
    Wrk(WrkTableau),
}

impl Method {
    pub fn dirk(lambda: f64) -> Self {
        Method::Dirk { lambda, tableau: SprkTableau::dirk(lambda) }
    }

    pub fn srkw1(lambda: f64) -> Self {
        Method::Wrk(WrkTableau::srkw1(lambda))
    }

    pub fn srkw2() -> Self {
        Method::Wrk(WrkTableau::srkw2())
    }

    pub fn name(&self) -> String {
        match self {
            Method::Midpoint => "midpoint".into(),
            Method::StormerVerlet => "stormer-verlet".into(),
            Method::Dirk { tableau, .. } => tableau.name.clone(),
            Method::Sprk(t) => t.name.clone(),
            Method::Heun => "heun".into(),
            Method::Wrk(t) => t.name.clone(),
        }
    }

    /// Weak schemes are driven by three-point increments.
    pub fn is_weak(&self) -> bool {
        matches!(self, Method::Wrk(_))
    }

    pub fn default_increments(&self) -> IncrementMode {
        if self.is_weak() {
            IncrementMode::ThreePoint
        } else {
            IncrementMode::Gaussian
        }
    }

    pub fn step<S: ForcedHamiltonian + ?Sized>(
        &self,
        sys: &S,
        state: &State,
        dt: f64,
        dw: &[f64],
        cfg: &SolverConfig,
    ) -> Result<(State, StepStats)> {
        match self {
            Method::Midpoint => midpoint_step_with_stats(sys, state, dt, dw, cfg),
            Method::StormerVerlet => stormer_verlet_step_with_stats(sys, state, dt, dw, cfg),
            Method::Dirk { lambda, tableau } => dirk_step_with_tableau(sys, tableau, *lambda, state, dt, dw, cfg),
            Method::Sprk(t) => sprk_step_with_stats(sys, t, state, dt, dw, cfg),
            Method::Heun => heun_step(sys, state, dt, dw).map(|z| (z, StepStats::default())),
            Method::Wrk(t) => wrk_step_with_stats(sys, t, state, dt, dw, cfg),
        }
    }
}

type ObservableFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;

/// A scalar function of the state recorded along paths.
#[derive(Clone)]
pub enum Observable {
    Hamiltonian,
    Position(usize),
    Momentum(usize),
    /// q1 p2 - q2 p1, for planar models.
    MomentumMapSo2,
    Custom { name: String, f: ObservableFn },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Observable {
    pub fn custom(name: &str, f: impl Fn(&State) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Custom { name: name.into(), f: Arc::new(f) }
    }

    /// Accepts `H`, `J`, `q<i>` and `p<i>`.
    pub fn parse(name: &str) -> Result<Self> {
        let index = |rest: &str| rest.parse::<usize>().map_err(|_| invalid(format!("unknown observable `{name}`")));
        match name {
            "H" => Ok(Observable::Hamiltonian),
            "J" => Ok(Observable::MomentumMapSo2),
            _ if name.starts_with('q') => Ok(Observable::Position(index(&name[1..])?)),
            _ if name.starts_with('p') => Ok(Observable::Momentum(index(&name[1..])?)),
            _ => Err(invalid(format!("unknown observable `{name}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Observable::Hamiltonian => "H".into(),
            Observable::Position(i) => format!("q{i}"),
            Observable::Momentum(i) => format!("p{i}"),
            Observable::MomentumMapSo2 => "J".into(),
            Observable::Custom { name, .. } => name.clone(),
        }
    }

    pub fn check<S: ForcedHamiltonian + ?Sized>(&self, sys: &S) -> Result<()> {
        match self {
            Observable::Position(i) | Observable::Momentum(i) if *i >= sys.dim() => {
                Err(invalid(format!("observable `{}` out of range for N = {}", self.name(), sys.dim())))
            }
            Observable::MomentumMapSo2 if sys.dim() != 2 => {
                Err(Error::Unsupported("momentum map observable needs N = 2".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval<S: ForcedHamiltonian + ?Sized>(&self, sys: &S, z: &State) -> f64 {
        match self {
            Observable::Hamiltonian => sys.hamiltonian(z.q(), z.p()),
            Observable::Position(i) => z.q()[*i],
            Observable::Momentum(i) => z.p()[*i],
            Observable::MomentumMapSo2 => momentum_map_so2(z).unwrap_or(f64::NAN),
            Observable::Custom { f, .. } => f(z),
        }
    }
}

type Sampler = Arc<dyn Fn(&mut PathRng) -> State + Send + Sync>;

#[derive(Clone)]
pub enum InitialCondition {
    Point(State),
    /// Drawn per path from the path's initial-condition stream.
    Sampled(Sampler),
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Point(z) => write!(f, "Point({z:?})"),
            InitialCondition::Sampled(_) => f.write_str("Sampled"),
        }
    }
}

impl InitialCondition {
    pub fn sampled(f: impl Fn(&mut PathRng) -> State + Send + Sync + 'static) -> Self {
        InitialCondition::Sampled(Arc::new(f))
    }

    pub fn draw(&self, master_seed: u64, path: u64) -> State {
        match self {
            InitialCondition::Point(z) => z.clone(),
            InitialCondition::Sampled(f) => f(&mut PathRng::initial(master_seed, path)),
        }
    }
}

#[derive(Debug, ThisError)]
#[error("path failed at step {step}: {source}")]
pub struct PathFailure {
    pub step: usize,
    #[source]
    pub source: Error,
}

/// Observable samples of one path, row-major `[record][observable]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub values: Vec<f64>,
    pub n_observables: usize,
    pub final_state: State,
}

impl PathSeries {
    pub fn record(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_observables..(k + 1) * self.n_observables]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n_observables.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Integrates one path for `steps` steps, recording observables every
/// `record_stride` steps starting at step 0.
#[allow(clippy::too_many_arguments)]
pub fn run_path<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    method: &Method,
    dt: f64,
    steps: usize,
    driver: &mut BrownianDriver,
    initial: State,
    observables: &[Observable],
    record_stride: usize,
    cfg: &SolverConfig,
) -> std::result::Result<PathSeries, PathFailure> {
    let fail = |step, source| PathFailure { step, source };
    if record_stride == 0 || steps % record_stride != 0 {
        return Err(fail(0, invalid("record stride must divide the number of steps")));
    }
    if driver.channels() != sys.noise_dim() {
        return Err(fail(0, Error::DimensionMismatch { expected: sys.noise_dim(), found: driver.channels() }));
    }
    let mut values = Vec::with_capacity((steps / record_stride + 1) * observables.len());
    let mut z = initial;
    let mut dw = vec![0.0; sys.noise_dim()];
    let push = |values: &mut Vec<f64>, z: &State| values.extend(observables.iter().map(|o| o.eval(sys, z)));
    push(&mut values, &z);
    for k in 1..=steps {
        driver.next_increments(&mut dw);
        z = method.step(sys, &z, dt, &dw, cfg).map_err(|e| fail(k, e))?.0;
        if k % record_stride == 0 {
            push(&mut values, &z);
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(fail(steps, Error::NonFinite));
    }
    Ok(PathSeries { values, n_observables: observables.len(), final_state: z })
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub observables: Vec<Observable>,
    pub record_stride: usize,
    pub initial: InitialCondition,
    /// Defaults to three-point increments for weak methods, Gaussian otherwise.
    pub increments: Option<IncrementMode>,
    pub solver: SolverConfig,
    /// Worker threads, 0 for the rayon default.
    pub threads: usize,
    /// Keep the final state of every successful path.
    pub keep_final_states: bool,
}

impl EnsembleConfig {
    pub fn new(method: Method, dt: f64, t_end: f64, n_paths: usize, initial: InitialCondition) -> Self {
        Self {
            method,
            dt,
            t_end,
            n_paths,
            master_seed: 0,
            observables: vec![Observable::Hamiltonian],
            record_stride: 1,
            initial,
            increments: None,
            solver: SolverConfig::default(),
            threads: 0,
            keep_final_states: false,
        }
    }

    pub fn steps(&self) -> Result<usize> {
        step_count(self.t_end, self.dt)
    }
}

/// Number of steps of size `dt` covering [0, t_end]; errors unless t_end/dt is
/// an integer up to rounding.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end > 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(invalid("dt and T must be positive"));
    }
    let ratio = t_end / dt;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(invalid(format!("dt = {dt} does not divide T = {t_end}")));
    }
    Ok(k as usize)
}

/// Per-slot count, mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(slots: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; slots], m2: vec![0.0; slots] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / self.count;
            *s += delta * (v - *m);
        }
    }

    fn merge(mut self, other: Moments) -> Moments {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return other;
        }
        let n = self.count + other.count;
        let w = other.count / n;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * w;
            self.m2[k] += other.m2[k] + delta * delta * self.count * w;
        }
        self.count = n;
        self
    }

    fn sem(&self) -> Vec<f64> {
        if self.count < 2.0 {
            return vec![0.0; self.mean.len()];
        }
        let c = self.count;
        self.m2.iter().map(|s| (s.max(0.0) / (c - 1.0) / c).sqrt()).collect()
    }
}

/// Merges along a fixed balanced binary tree over the input order.
fn tree_merge(mut parts: Vec<Moments>, slots: usize) -> Moments {
    if parts.is_empty() {
        return Moments::new(slots);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("one part left")
}

fn chunk_ranges(n_paths: usize) -> Vec<std::ops::Range<usize>> {
    let size = n_paths.div_ceil(MAX_CHUNKS).max(MIN_CHUNK);
    (0..n_paths).step_by(size.max(1)).map(|s| s..(s + size).min(n_paths)).collect()
}

fn with_threads<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub observables: Vec<String>,
    /// `[time][observable]`
    pub mean: Vec<Vec<f64>>,
    pub sem: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub n_failed: usize,
    /// More than 1% of paths failed.
    pub degraded: bool,
    /// Step index of each failure, in path order.
    pub failures: Vec<(usize, usize)>,
    /// Final states of successful paths in path order, when requested.
    pub final_states: Option<Vec<State>>,
}

impl EnsembleSeries {
    pub fn column(&self, observable: usize) -> (Vec<f64>, Vec<f64>) {
        (self.mean.iter().map(|r| r[observable]).collect(), self.sem.iter().map(|r| r[observable]).collect())
    }
}

struct ChunkResult {
    moments: Moments,
    failures: Vec<(usize, usize)>,
    finals: Vec<State>,
}

pub fn run_ensemble<S: ForcedHamiltonian + ?Sized>(sys: &S, cfg: &EnsembleConfig) -> Result<EnsembleSeries> {
    let steps = cfg.steps()?;
    if cfg.n_paths == 0 {
        return Err(invalid("need at least one path"));
    }
    if cfg.record_stride == 0 || steps % cfg.record_stride != 0 {
        return Err(invalid(format!("record stride {} does not divide {steps} steps", cfg.record_stride)));
    }
    if cfg.observables.is_empty() {
        return Err(invalid("no observables requested"));
    }
    for o in &cfg.observables {
        o.check(sys)?;
    }
    cfg.solver.validate()?;
    let mode = cfg.increments.unwrap_or_else(|| cfg.method.default_increments());
    let records = steps / cfg.record_stride + 1;
    let slots = records * cfg.observables.len();
    let m = sys.noise_dim();

    let run_chunk = |range: std::ops::Range<usize>| -> Result<ChunkResult> {
        let mut out = ChunkResult { moments: Moments::new(slots), failures: Vec::new(), finals: Vec::new() };
        for path in range {
            let mut driver = BrownianDriver::new(cfg.master_seed, path as u64, m, cfg.dt, mode)?;
            let z0 = cfg.initial.draw(cfg.master_seed, path as u64);
            let series = run_path(
                sys,
                &cfg.method,
                cfg.dt,
                steps,
                &mut driver,
                z0,
                &cfg.observables,
                cfg.record_stride,
                &cfg.solver,
            );
            match series {
                Ok(s) => {
                    out.moments.push(&s.values);
                    if cfg.keep_final_states {
                        out.finals.push(s.final_state);
                    }
                }
                Err(f) => out.failures.push((path, f.step)),
            }
        }
        Ok(out)
    };
    let chunks = chunk_ranges(cfg.n_paths);
    let results: Vec<ChunkResult> =
        with_threads(cfg.threads, || chunks.into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>())??;

    let mut failures = Vec::new();
    let mut finals = Vec::new();
    let mut parts = Vec::with_capacity(results.len());
    for r in results {
        failures.extend(r.failures);
        finals.extend(r.finals);
        parts.push(r.moments);
    }
    let total = tree_merge(parts, slots);
    let sem = total.sem();
    let k = cfg.observables.len();
    let n_failed = failures.len();
    Ok(EnsembleSeries {
        times: (0..records).map(|i| (i * cfg.record_stride) as f64 * cfg.dt).collect(),
        observables: cfg.observables.iter().map(Observable::name).collect(),
        mean: total.mean.chunks(k).map(<[f64]>::to_vec).collect(),
        sem: sem.chunks(k).map(<[f64]>::to_vec).collect(),
        n_paths: cfg.n_paths,
        n_failed,
        degraded: n_failed as f64 > DEGRADED_FRACTION * cfg.n_paths as f64,
        failures,
        final_states: cfg.keep_final_states.then_some(finals),
    })
}

/// Ordinary least squares fit of ln(error) against ln(dt).
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// Monte Carlo standard errors of the errors, where meaningful.
    pub sems: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub n_failed: usize,
    /// Some error is not resolved above Monte Carlo noise.
    pub inconclusive: bool,
}

pub fn fit_log_log(dts: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if dts.len() != errors.len() || dts.len() < 4 {
        return Err(invalid("order fits need at least 4 step sizes"));
    }
    if let Some(&e) = errors.iter().find(|e| !(e.abs() >= 1e-12)) {
        return Err(Error::PrecisionFloor(e));
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("step sizes must not all be equal"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Builds a weak-order fit from biases and their standard errors; the fit is
/// inconclusive when some |bias| <= 2 sem.
pub fn fit_weak_order(dts: &[f64], biases: &[f64], sems: &[f64]) -> Result<OrderFit> {
    let inconclusive = biases.iter().zip(sems).any(|(b, s)| b.abs() <= 2.0 * s);
    let (slope, intercept) = match fit_log_log(dts, biases) {
        Ok(fit) => fit,
        Err(Error::PrecisionFloor(_)) if inconclusive => (f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    Ok(OrderFit {
        dts: dts.to_vec(),
        errors: biases.to_vec(),
        sems: sems.to_vec(),
        slope,
        intercept,
        n_failed: 0,
        inconclusive,
    })
}

/// Systems with a closed-form pathwise solution for one noise channel.
pub trait PathwiseExact: ForcedHamiltonian {
    fn initial_state(&self) -> State;
    fn exact(&self, t: f64, w: &[f64]) -> State;
}

impl PathwiseExact for Kubo {
    fn initial_state(&self) -> State {
        self.params.initial_state()
    }
    fn exact(&self, t: f64, w: &[f64]) -> State {
        kubo_exact(&self.params, t, w[0])
    }
}

/// Shared settings of the order estimators.
#[derive(Debug, Clone)]
pub struct OrderConfig {
    pub dts: Vec<f64>,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
    pub threads: usize,
}

/// Root-mean-square endpoint error against the exact solution. Every step
/// size reuses one fine Brownian path per path, aggregated to the coarser grids.
pub fn estimate_ms_order<S: PathwiseExact + ?Sized>(sys: &S, method: &Method, cfg: &OrderConfig) -> Result<OrderFit> {
    if cfg.dts.len() < 4 {
        return Err(invalid("order fits need at least 4 step sizes"));
    }
    let fine_dt = cfg.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let fine_steps = step_count(cfg.t_end, fine_dt)?;
    let factors = cfg
        .dts
        .iter()
        .map(|&dt| {
            let f = step_count(dt, fine_dt)?;
            if fine_steps % f != 0 {
                return Err(invalid(format!("dt = {dt} is not a multiple of {fine_dt} dividing T")));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    cfg.solver.validate()?;
    let m = sys.noise_dim();
    let k = cfg.dts.len();
    let z0 = sys.initial_state();

    let run_chunk = |range: std::ops::Range<usize>| -> Result<(Moments, usize)> {
        let mut acc = Moments::new(k);
        let mut failed = 0;
        let mut sq = vec![0.0; k];
        for path in range {
            let mut driver = BrownianDriver::new(cfg.master_seed, path as u64, m, fine_dt, IncrementMode::Gaussian)?;
            let fine = FinePath::generate(&mut driver, fine_steps);
            let w: Vec<f64> = (0..m).map(|r| fine.total(r)).collect();
            let exact = sys.exact(cfg.t_end, &w);
            let mut ok = true;
            for (slot, (&dt, &factor)) in cfg.dts.iter().zip(&factors).enumerate() {
                let coarse = aggregate_path(&fine, factor)?;
                let mut z = z0.clone();
                for dw in coarse.rows() {
                    match method.step(sys, &z, dt, dw, &cfg.solver) {
                        Ok((next, _)) => z = next,
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    break;
                }
                let e = z.q().iter().chain(z.p()).zip(exact.q().iter().chain(exact.p()));
                sq[slot] = e.map(|(a, b)| (a - b).powi(2)).sum();
            }
            if ok {
                acc.push(&sq);
            } else {
                failed += 1;
            }
        }
        Ok((acc, failed))
    };
    let chunks = chunk_ranges(cfg.n_paths);
    let results =
        with_threads(cfg.threads, || chunks.into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>())??;
    let n_failed = results.iter().map(|r| r.1).sum();
    let total = tree_merge(results.into_iter().map(|r| r.0).collect(), k);
    let errors: Vec<f64> = total.mean.iter().map(|v| v.sqrt()).collect();
    let sems = total.sem();
    // delta method: sem(sqrt(x)) = sem(x) / (2 sqrt(x))
    let sems: Vec<f64> = sems.iter().zip(&errors).map(|(s, e)| if *e > 0.0 { s / (2.0 * e) } else { 0.0 }).collect();
    let (slope, intercept) = fit_log_log(&cfg.dts, &errors)?;
    Ok(OrderFit { dts: cfg.dts.clone(), errors, sems, slope, intercept, n_failed, inconclusive: false })
}

/// Bias of E[phi(z_K)] against `exact` for each step size, from independent
/// ensembles started at `initial`.
pub fn estimate_weak_order<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    method: &Method,
    cfg: &OrderConfig,
    initial: &State,
    phi: &Observable,
    exact: f64,
) -> Result<OrderFit> {
    if cfg.dts.len() < 4 {
        return Err(invalid("order fits need at least 4 step sizes"));
    }
    let mut biases = Vec::with_capacity(cfg.dts.len());
    let mut sems = Vec::with_capacity(cfg.dts.len());
    let mut n_failed = 0;
    for &dt in &cfg.dts {
        let steps = step_count(cfg.t_end, dt)?;
        let ens = EnsembleConfig {
            observables: vec![phi.clone()],
            record_stride: steps,
            master_seed: cfg.master_seed,
            solver: cfg.solver,
            threads: cfg.threads,
            ..EnsembleConfig::new(method.clone(), dt, cfg.t_end, cfg.n_paths, InitialCondition::Point(initial.clone()))
        };
        let series = run_ensemble(sys, &ens)?;
        n_failed += series.n_failed;
        biases.push(series.mean[1][0] - exact);
        sems.push(series.sem[1][0]);
    }
    let mut fit = fit_weak_order(&cfg.dts, &biases, &sems)?;
    fit.n_failed = n_failed;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// counts / (n * width), n the number of samples offered.
    pub density: Vec<f64>,
}

pub fn histogram(samples: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("histogram edges must be strictly increasing"));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if !(x >= edges[0] && x <= edges[bins]) {
            continue;
        }
        let i = edges.partition_point(|&e| e <= x).saturating_sub(1).min(bins - 1);
        counts[i] += 1;
    }
    let n = samples.len().max(1) as f64;
    let density = counts.iter().zip(edges.windows(2)).map(|(&c, w)| c as f64 / (n * (w[1] - w[0]))).collect();
    Ok(Histogram { edges: edges.to_vec(), counts, density })
}

/// `n + 1` equally spaced edges on [lo, hi].
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}
