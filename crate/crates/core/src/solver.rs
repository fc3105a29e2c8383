//! Nonlinear solves for implicit stage equations.
//!
//! Residuals follow the convention R(x) = x - G(x), so the fixed-point
//! iteration is x <- x - damping * R(x).

use nalgebra::{DMatrix, DVector};
use smallvec::SmallVec;
use thiserror::Error;

use crate::error::{invalid, Result};

/// Inline buffer for stage unknowns.
pub type Point = SmallVec<[f64; 16]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    FixedPoint,
    Newton,
    /// Fixed-point for the first half of the budget, Newton afterwards.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bound on the infinity norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    pub fd_jacobian_step: f64,
    pub mode: SolveMode,
    pub damping: f64,
    /// When Newton stops making progress at roundoff level, the best iterate
    /// is accepted if its residual is at most this bound.
    pub stagnation_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100, fd_jacobian_step: 1e-7, mode: SolveMode::Hybrid, damping: 1.0, stagnation_tol: 1e-9 }
    }
}

impl SolverConfig {
    pub fn with_mode(mut self, mode: SolveMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("solver tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("solver needs at least one iteration"));
        }
        if !(self.fd_jacobian_step > 0.0) {
            return Err(invalid("finite-difference step must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping must lie in (0, 1]"));
        }
        if !(self.stagnation_tol >= self.tol) {
            return Err(invalid("stagnation tolerance must not be below the solver tolerance"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("solver failed to converge after {iterations} iterations (residual {residual_norm:e})")]
pub struct SolverError {
    pub last_iterate: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Point,
    pub residual_norm: f64,
    /// Number of iterations taken; 0 when the initial guess already satisfies the tolerance.
    pub iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| if x.is_nan() { f64::NAN } else { acc.max(x.abs()) })
}

struct Search<F> {
    residual: F,
    x: Point,
    r: Point,
    norm: f64,
    best_x: Point,
    best_norm: f64,
    iterations: usize,
}

impl<F: FnMut(&[f64], &mut [f64])> Search<F> {
    fn evaluate(&mut self) {
        (self.residual)(&self.x, &mut self.r);
        self.norm = inf_norm(&self.r);
        if self.norm < self.best_norm {
            self.best_norm = self.norm;
            self.best_x.clone_from(&self.x);
        }
    }

    fn fixed_point(&mut self, budget: usize, cfg: &SolverConfig) -> bool {
        for _ in 0..budget {
            for (x, r) in self.x.iter_mut().zip(&self.r) {
                *x -= cfg.damping * r;
            }
            self.iterations += 1;
            self.evaluate();
            if self.norm <= cfg.tol {
                return true;
            }
            if !self.norm.is_finite() {
                return false;
            }
        }
        false
    }

    fn newton(&mut self, budget: usize, cfg: &SolverConfig) -> bool {
        if self.norm.is_nan() || self.best_norm < self.norm {
            self.x.clone_from(&self.best_x);
            self.evaluate();
        }
        let d = self.x.len();
        let mut shifted: Point = self.x.clone();
        let mut r_shift: Point = SmallVec::from_elem(0.0, d);
        let mut stalled = 0;
        for _ in 0..budget {
            if !self.norm.is_finite() {
                return false;
            }
            let mut jac = DMatrix::<f64>::zeros(d, d);
            for j in 0..d {
                let h = cfg.fd_jacobian_step * self.x[j].abs().max(1.0);
                shifted.clone_from(&self.x);
                shifted[j] += h;
                let h = shifted[j] - self.x[j];
                (self.residual)(&shifted, &mut r_shift);
                for i in 0..d {
                    jac[(i, j)] = (r_shift[i] - self.r[i]) / h;
                }
            }
            let rhs = DVector::from_iterator(d, self.r.iter().map(|v| -v));
            let Some(step) = jac.lu().solve(&rhs) else {
                return false;
            };
            for (x, s) in self.x.iter_mut().zip(step.iter()) {
                *x += s;
            }
            let before = self.best_norm;
            self.iterations += 1;
            self.evaluate();
            if self.norm <= cfg.tol {
                return true;
            }
            stalled = if self.best_norm < 0.5 * before { 0 } else { stalled + 1 };
            if stalled >= STALL_LIMIT {
                break;
            }
        }
        self.accept_best(cfg)
    }

    fn accept_best(&mut self, cfg: &SolverConfig) -> bool {
        if self.best_norm <= cfg.stagnation_tol {
            self.x.clone_from(&self.best_x);
            self.evaluate();
            self.norm <= cfg.stagnation_tol
        } else {
            false
        }
    }
}

/// Newton iterations without halving the best residual before giving up.
const STALL_LIMIT: usize = 3;

/// Finds x with ||residual(x)||_inf <= cfg.tol starting from `x0`.
///
/// On success the last call to `residual` was made at the returned point, so
/// callers may read state the closure cached during that call.
pub fn solve<F>(residual: F, x0: &[f64], cfg: &SolverConfig) -> std::result::Result<Solution, SolverError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let d = x0.len();
    let mut search = Search {
        residual,
        x: x0.into(),
        r: SmallVec::from_elem(0.0, d),
        norm: f64::INFINITY,
        best_x: x0.into(),
        best_norm: f64::INFINITY,
        iterations: 0,
    };
    search.evaluate();
    let converged = search.norm <= cfg.tol
        || match cfg.mode {
            SolveMode::FixedPoint => search.fixed_point(cfg.max_iter, cfg),
            SolveMode::Newton => search.newton(cfg.max_iter, cfg),
            SolveMode::Hybrid => {
                let half = cfg.max_iter / 2;
                search.fixed_point(half, cfg) || search.newton(cfg.max_iter - half, cfg)
            }
        };
    if converged {
        Ok(Solution { x: search.x, residual_norm: search.norm, iterations: search.iterations })
    } else {
        Err(SolverError {
            last_iterate: search.x.to_vec(),
            residual_norm: search.norm,
            iterations: search.iterations,
        })
    }
}
