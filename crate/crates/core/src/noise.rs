//! Reproducible per-path random increments.
//!
//! Every path owns a ChaCha8 stream keyed by
//! `path_state = master_seed ^ (path_index * 0x9E3779B97F4A7C15)` (wrapping),
//! expanded with `ChaCha8Rng::seed_from_u64`. Stream 0 carries the Wiener
//! increments, stream 1 is reserved for initial-condition sampling.
//! Increment `(k, r)` of a path with m channels is the `k*m + r`-th variate of
//! stream 0, so the sequence is a pure function of
//! `(master_seed, path_index, step_index, channel)`.
//!
//! Gaussian variates come from Box-Muller on 53-bit uniforms, both outputs of
//! each pair being used in order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub const PATH_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

const INCREMENT_STREAM: u64 = 0;
const INITIAL_STREAM: u64 = 1;

pub fn path_state(master_seed: u64, path_index: u64) -> u64 {
    master_seed ^ path_index.wrapping_mul(PATH_MIX)
}

/// Maps the top 53 bits of `x` to [0, 1).
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform and Gaussian variates from one ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct PathRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl PathRng {
    fn with_stream(master_seed: u64, path_index: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(path_state(master_seed, path_index));
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// The stream used to sample a path's initial condition.
    pub fn initial(master_seed: u64, path_index: u64) -> Self {
        Self::with_stream(master_seed, path_index, INITIAL_STREAM)
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::with_stream(seed, 0, INITIAL_STREAM)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementMode {
    Gaussian,
    /// Gaussian increments clipped to [-A, A].
    Truncated(f64),
    /// Values in {-sqrt(3 dt), 0, sqrt(3 dt)} with probabilities 1/6, 2/3, 1/6.
    ThreePoint,
}

#[derive(Debug, Clone)]
pub struct BrownianDriver {
    rng: PathRng,
    channels: usize,
    dt: f64,
    sqrt_dt: f64,
    mode: IncrementMode,
    step: u64,
}

impl BrownianDriver {
    pub fn new(
        master_seed: u64,
        path_index: u64,
        channels: usize,
        dt: f64,
        mode: IncrementMode,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("time step must be positive"));
        }
        if let IncrementMode::Truncated(a) = mode {
            if !(a > 0.0) {
                return Err(invalid("truncation threshold must be positive"));
            }
        }
        Ok(Self {
            rng: PathRng::with_stream(master_seed, path_index, INCREMENT_STREAM),
            channels,
            dt,
            sqrt_dt: dt.sqrt(),
            mode,
            step: 0,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> IncrementMode {
        self.mode
    }

    /// Number of increment vectors emitted so far.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Fills `out` (length m) with the next increment vector in the driver's mode.
    pub fn next_increments(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        match self.mode {
            IncrementMode::Gaussian => {
                for o in out.iter_mut() {
                    *o = self.sqrt_dt * self.rng.normal();
                }
            }
            IncrementMode::Truncated(a) => {
                for o in out.iter_mut() {
                    *o = clip(self.sqrt_dt * self.rng.normal(), a);
                }
            }
            IncrementMode::ThreePoint => {
                let h = (3.0 * self.dt).sqrt();
                for o in out.iter_mut() {
                    *o = three_point(self.rng.uniform(), h);
                }
            }
        }
        self.step += 1;
    }

    /// Like [`next_increments`](Self::next_increments) but insists on three-point mode.
    pub fn next_three_point(&mut self, out: &mut [f64]) -> Result<()> {
        if self.mode != IncrementMode::ThreePoint {
            return Err(Error::Unsupported("driver is not in three-point mode".into()));
        }
        self.next_increments(out);
        Ok(())
    }
}

fn three_point(u: f64, h: f64) -> f64 {
    if u < 1.0 / 6.0 {
        -h
    } else if u < 1.0 / 3.0 {
        h
    } else {
        0.0
    }
}

fn clip(w: f64, a: f64) -> f64 {
    if w > a {
        a
    } else if w < -a {
        -a
    } else {
        w
    }
}

pub fn truncate_increment(w: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(invalid("truncation threshold must be positive"));
    }
    Ok(clip(w, a))
}

/// Threshold A = 2 sqrt(dt) sqrt(2 |ln dt|) used when truncation is requested without a value.
pub fn default_truncation(dt: f64) -> f64 {
    2.0 * dt.sqrt() * (2.0 * dt.ln().abs()).sqrt()
}

/// Fine increments are rounded to multiples of 2^-46. With |W| < 2^7 every
/// partial sum is then exactly representable, so aggregation to coarser grids
/// is exact in any summation order. The rounding error (< 1e-14) is far below
/// any discretisation error of interest.
const QUANTUM: f64 = 1.0 / (1u64 << 46) as f64;

/// Increments on a fine grid, stored row-major as `[step][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    dt: f64,
    channels: usize,
    increments: Vec<f64>,
}

impl FinePath {
    /// Draws `steps` increment vectors from `driver`, quantised to the dyadic grid.
    pub fn generate(driver: &mut BrownianDriver, steps: usize) -> Self {
        let m = driver.channels();
        let mut increments = vec![0.0; steps * m];
        for row in increments.chunks_mut(m.max(1)) {
            driver.next_increments(&mut row[..m]);
            for w in row.iter_mut() {
                *w = (*w / QUANTUM).round() * QUANTUM;
            }
        }
        Self { dt: driver.dt(), channels: m, increments }
    }

    pub fn from_increments(dt: f64, channels: usize, increments: Vec<f64>) -> Result<Self> {
        if channels == 0 || increments.len() % channels != 0 {
            return Err(invalid("increment array is not a whole number of rows"));
        }
        Ok(Self { dt, channels, increments })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.channels
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.channels..(k + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.increments.chunks(self.channels)
    }

    /// Left-to-right sum of channel `r` over the whole path.
    pub fn total(&self, r: usize) -> f64 {
        self.rows().map(|row| row[r]).sum()
    }
}

/// Sums consecutive blocks of `factor` fine increments, left to right.
pub fn aggregate_path(path: &FinePath, factor: usize) -> Result<FinePath> {
    if factor == 0 || path.steps() % factor != 0 {
        return Err(invalid(format!(
            "aggregation factor {factor} does not divide {} fine steps",
            path.steps()
        )));
    }
    let m = path.channels;
    let mut increments = Vec::with_capacity(path.increments.len() / factor);
    for block in path.increments.chunks(factor * m) {
        for r in 0..m {
            increments.push(block.iter().skip(r).step_by(m).sum());
        }
    }
    Ok(FinePath { dt: path.dt * factor as f64, channels: m, increments })
}
