//! Mean-square one-step maps: the general partitioned Runge-Kutta engine, the
//! midpoint, Störmer-Verlet and DIRK specialisations, and the explicit
//! Stratonovich Heun baseline.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::solver::{solve, SolverConfig};
use crate::sprk::SprkTableau;
use crate::stages::{zeros, Buf, StageFields};
use crate::system::{check_dims, diffusion, drift, ForcedHamiltonian, State, Vector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Nonlinear solver iterations summed over all stage solves of the step.
    pub solver_iterations: usize,
}

/// Euler increment dt a(z) + sum_r dW^r b_r(z), stacked as [q-part, p-part].
pub(crate) fn euler_increment<S: ForcedHamiltonian + ?Sized>(sys: &S, state: &State, dt: f64, dw: &[f64]) -> Buf {
    let n = state.dim();
    let mut inc = zeros(2 * n);
    drift(sys, state.q(), state.p(), &mut inc);
    inc.iter_mut().for_each(|v| *v *= dt);
    let mut b = zeros(2 * n);
    for (r, &w) in dw.iter().enumerate() {
        if w != 0.0 {
            diffusion(sys, r, state.q(), state.p(), &mut b);
            inc.iter_mut().zip(&b).for_each(|(v, bi)| *v += w * bi);
        }
    }
    inc
}

fn check_step_inputs<S: ForcedHamiltonian + ?Sized>(sys: &S, state: &State, dt: f64, dw: &[f64]) -> Result<()> {
    check_dims(sys, state, dw)?;
    if !(dt >= 0.0) || !dt.is_finite() || dw.iter().any(|w| !w.is_finite()) {
        return Err(invalid("time step and increments must be finite with dt >= 0"));
    }
    Ok(())
}

/// Solves the stage equations block by block. Within a block all stages are
/// coupled; earlier blocks are already known. Only coefficients of stages
/// before the end of the current block are read.
pub(crate) fn solve_sprk_blocks<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    blocks: &[Range<usize>],
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    check_step_inputs(sys, state, dt, dw)?;
    if !t.dims_consistent() {
        return Err(invalid(format!("tableau `{}` has inconsistent dimensions", t.name)));
    }
    let (n, m, s) = (sys.dim(), sys.noise_dim(), t.s);
    let sep = sys.traits().separable;
    if sep && blocks.iter().all(|b| b.len() == 1) {
        return solve_diagonal_separable(sys, t, blocks, state, dt, dw, cfg);
    }
    let (q, p) = (state.q(), state.p());

    let mut fields = StageFields::new(n, m, s);
    let mut qs = zeros(s * n);
    let mut ps = zeros(s * n);
    let inc = euler_increment(sys, state, dt, dw);
    for i in 0..s {
        let cq: f64 = t.a[i * s..(i + 1) * s].iter().sum();
        let cp: f64 = t.abar[i * s..(i + 1) * s].iter().sum();
        for k in 0..n {
            qs[i * n + k] = q[k] + cq * inc[k];
            ps[i * n + k] = p[k] + cp * inc[n + k];
        }
    }

    let mut stats = StepStats::default();
    let mut tmp: Vector = SmallVec::from_elem(0.0, n);
    for block in blocks {
        let (start, end) = (block.start, block.end);
        let width = end - start;
        let mut x0: Buf = SmallVec::new();
        if !sep {
            x0.extend_from_slice(&qs[start * n..end * n]);
        }
        x0.extend_from_slice(&ps[start * n..end * n]);

        let mut residual = |x: &[f64], res: &mut [f64]| {
            let (xq, xp) = if sep { (&[][..], x) } else { x.split_at(width * n) };
            ps[start * n..end * n].copy_from_slice(xp);
            if sep {
                for j in block.clone() {
                    fields.eval_drift_velocity(sys, j, q, &ps[j * n..(j + 1) * n]);
                    for r in 0..m {
                        fields.eval_noise_velocity(sys, r, j, q, &ps[j * n..(j + 1) * n]);
                    }
                }
                for i in block.clone() {
                    let qi = &mut qs[i * n..(i + 1) * n];
                    qi.copy_from_slice(q);
                    fields.add_drift_q(qi, dt, &t.a[i * s..i * s + end]);
                    for (r, &w) in dw.iter().enumerate() {
                        fields.add_noise_q(qi, r, w, &t.b[i * s..i * s + end]);
                    }
                }
            } else {
                qs[start * n..end * n].copy_from_slice(xq);
            }
            for j in block.clone() {
                let (qj, pj) = (&qs[j * n..(j + 1) * n], &ps[j * n..(j + 1) * n]);
                if !sep {
                    fields.eval_drift_velocity(sys, j, qj, pj);
                }
                fields.eval_drift_momentum(sys, j, qj, pj);
                for r in 0..m {
                    if !sep {
                        fields.eval_noise_velocity(sys, r, j, qj, pj);
                    }
                    fields.eval_noise_momentum(sys, r, j, qj, pj);
                }
            }
            let mut out = 0;
            if !sep {
                for i in block.clone() {
                    tmp.copy_from_slice(q);
                    fields.add_drift_q(&mut tmp, dt, &t.a[i * s..i * s + end]);
                    for (r, &w) in dw.iter().enumerate() {
                        fields.add_noise_q(&mut tmp, r, w, &t.b[i * s..i * s + end]);
                    }
                    for k in 0..n {
                        res[out] = qs[i * n + k] - tmp[k];
                        out += 1;
                    }
                }
            }
            for i in block.clone() {
                let row = i * s..i * s + end;
                tmp.copy_from_slice(p);
                fields.add_drift_p(&mut tmp, dt, &t.abar[row.clone()], &t.ahat[row.clone()]);
                for (r, &w) in dw.iter().enumerate() {
                    fields.add_noise_p(&mut tmp, r, w, &t.bbar[row.clone()], &t.bhat[row.clone()]);
                }
                for k in 0..n {
                    res[out] = ps[i * n + k] - tmp[k];
                    out += 1;
                }
            }
        };
        let sol = solve(&mut residual, &x0, cfg)?;
        stats.solver_iterations += sol.iterations;
    }

    let mut qn: Vector = SmallVec::from_slice(q);
    let mut pn: Vector = SmallVec::from_slice(p);
    fields.add_drift_q(&mut qn, dt, &t.alpha);
    fields.add_drift_p(&mut pn, dt, &t.alpha, &t.alphahat);
    for (r, &w) in dw.iter().enumerate() {
        fields.add_noise_q(&mut qn, r, w, &t.beta);
        fields.add_noise_p(&mut pn, r, w, &t.beta, &t.betahat);
    }
    Ok((State::from_parts(qn, pn)?, stats))
}

/// Stage-by-stage solve for a separable system: each stage has only its
/// momentum as unknown, and contributions of earlier stages are summed once
/// before the stage is solved.
fn solve_diagonal_separable<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    blocks: &[Range<usize>],
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    let (n, m, s) = (sys.dim(), sys.noise_dim(), t.s);
    let (q, p) = (state.q(), state.p());
    let mut fields = StageFields::new(n, m, s);
    let mut qi: Vector = SmallVec::from_elem(0.0, n);
    let mut base_q: Vector = SmallVec::from_elem(0.0, n);
    let mut base_p: Vector = SmallVec::from_elem(0.0, n);
    let mut acc: Vector = SmallVec::from_elem(0.0, n);
    let inc = euler_increment(sys, state, dt, dw);
    let mut stats = StepStats::default();

    for block in blocks {
        let i = block.start;
        let (known, diag) = (i * s..i * s + i, i * s + i);
        base_q.copy_from_slice(q);
        base_p.copy_from_slice(p);
        fields.add_drift_q(&mut base_q, dt, &t.a[known.clone()]);
        fields.add_drift_p(&mut base_p, dt, &t.abar[known.clone()], &t.ahat[known.clone()]);
        for (r, &w) in dw.iter().enumerate() {
            fields.add_noise_q(&mut base_q, r, w, &t.b[known.clone()]);
            fields.add_noise_p(&mut base_p, r, w, &t.bbar[known.clone()], &t.bhat[known.clone()]);
        }
        let (a, abar, ahat) = (t.a[diag], t.abar[diag], t.ahat[diag]);
        let (b, bbar, bhat) = (t.b[diag], t.bbar[diag], t.bhat[diag]);
        let cp: f64 = t.abar[i * s..(i + 1) * s].iter().sum();
        let x0: Buf = (0..n).map(|k| p[k] + cp * inc[n + k]).collect();

        let mut residual = |x: &[f64], res: &mut [f64]| {
            fields.eval_drift_velocity(sys, i, q, x);
            for r in 0..m {
                fields.eval_noise_velocity(sys, r, i, q, x);
            }
            qi.copy_from_slice(&base_q);
            fields.add_stage_drift_q(&mut qi, i, dt * a);
            for (r, &w) in dw.iter().enumerate() {
                fields.add_stage_noise_q(&mut qi, r, i, w * b);
            }
            fields.eval_drift_momentum(sys, i, &qi, x);
            for r in 0..m {
                fields.eval_noise_momentum(sys, r, i, &qi, x);
            }
            acc.copy_from_slice(&base_p);
            fields.add_stage_drift_p(&mut acc, i, dt * abar, dt * ahat);
            for (r, &w) in dw.iter().enumerate() {
                fields.add_stage_noise_p(&mut acc, r, i, w * bbar, w * bhat);
            }
            for k in 0..n {
                res[k] = x[k] - acc[k];
            }
        };
        let sol = solve(&mut residual, &x0, cfg)?;
        stats.solver_iterations += sol.iterations;
    }

    let mut qn: Vector = SmallVec::from_slice(q);
    let mut pn: Vector = SmallVec::from_slice(p);
    fields.add_drift_q(&mut qn, dt, &t.alpha);
    fields.add_drift_p(&mut pn, dt, &t.alpha, &t.alphahat);
    for (r, &w) in dw.iter().enumerate() {
        fields.add_noise_q(&mut qn, r, w, &t.beta);
        fields.add_noise_p(&mut pn, r, w, &t.beta, &t.betahat);
    }
    Ok((State::from_parts(qn, pn)?, stats))
}

/// One step of the general scheme, all stage equations solved as one coupled system.
pub fn sprk_step<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<State> {
    sprk_step_with_stats(sys, t, state, dt, dw, cfg).map(|(z, _)| z)
}

pub fn sprk_step_with_stats<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    let all = [0..t.s];
    solve_sprk_blocks(sys, t, &all, state, dt, dw, cfg)
}

/// Stochastic midpoint rule, solved directly for the new point with all
/// fields evaluated at the average of old and new points.
pub fn midpoint_step<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<State> {
    midpoint_step_with_stats(sys, state, dt, dw, cfg).map(|(z, _)| z)
}

pub fn midpoint_step_with_stats<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    check_step_inputs(sys, state, dt, dw)?;
    let n = sys.dim();
    let sep = sys.traits().separable;
    let (q, p) = (state.q(), state.p());

    let inc = euler_increment(sys, state, dt, dw);
    let mut x0: Buf = SmallVec::new();
    if !sep {
        x0.extend(q.iter().zip(&inc[..n]).map(|(a, b)| a + b));
    }
    x0.extend(p.iter().zip(&inc[n..]).map(|(a, b)| a + b));

    let mut qn: Vector = SmallVec::from_elem(0.0, n);
    let mut qbar: Vector = SmallVec::from_elem(0.0, n);
    let mut pbar: Vector = SmallVec::from_elem(0.0, n);
    let mut field = zeros(2 * n);
    let mut vel: Vector = SmallVec::from_elem(0.0, n);

    // new q from the average momentum when H_p and h_{r,p} do not depend on q
    let explicit_q = |pbar: &[f64], qn: &mut [f64], vel: &mut [f64]| {
        sys.dh_dp(q, pbar, vel);
        for k in 0..n {
            qn[k] = q[k] + dt * vel[k];
        }
        for (r, &w) in dw.iter().enumerate() {
            sys.noise_dh_dp(r, q, pbar, vel);
            for k in 0..n {
                qn[k] += w * vel[k];
            }
        }
    };

    let mut residual = |x: &[f64], res: &mut [f64]| {
        let pn = if sep { x } else { &x[n..] };
        for k in 0..n {
            pbar[k] = 0.5 * (p[k] + pn[k]);
        }
        if sep {
            explicit_q(&pbar, &mut qn, &mut vel);
        } else {
            qn.copy_from_slice(&x[..n]);
        }
        for k in 0..n {
            qbar[k] = 0.5 * (q[k] + qn[k]);
        }
        let mut acc = zeros(2 * n);
        drift(sys, &qbar, &pbar, &mut field);
        acc.iter_mut().zip(&field).for_each(|(a, f)| *a = dt * f);
        for (r, &w) in dw.iter().enumerate() {
            diffusion(sys, r, &qbar, &pbar, &mut field);
            acc.iter_mut().zip(&field).for_each(|(a, f)| *a += w * f);
        }
        if sep {
            for k in 0..n {
                res[k] = pn[k] - p[k] - acc[n + k];
            }
        } else {
            for k in 0..n {
                res[k] = qn[k] - q[k] - acc[k];
                res[n + k] = pn[k] - p[k] - acc[n + k];
            }
        }
    };
    let sol = solve(&mut residual, &x0, cfg)?;
    let (qn, pn): (Vector, Vector) = if sep {
        let pn: Vector = SmallVec::from_slice(&sol.x);
        let pbar: Vector = p.iter().zip(&pn).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut qn: Vector = SmallVec::from_elem(0.0, n);
        let mut vel: Vector = SmallVec::from_elem(0.0, n);
        explicit_q(&pbar, &mut qn, &mut vel);
        (qn, pn)
    } else {
        (SmallVec::from_slice(&sol.x[..n]), SmallVec::from_slice(&sol.x[n..]))
    };
    Ok((State::from_parts(qn, pn)?, StepStats { solver_iterations: sol.iterations }))
}

/// (-H_q + F) dt + sum_r (-h_{r,q} + f_r) dW^r at (q, p), written into `out`.
fn momentum_increment<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    q: &[f64],
    p: &[f64],
    dt: f64,
    dw: &[f64],
    out: &mut [f64],
) {
    let n = q.len();
    let mut g: Vector = SmallVec::from_elem(0.0, n);
    let mut f: Vector = SmallVec::from_elem(0.0, n);
    sys.dh_dq(q, p, &mut g);
    sys.force(q, p, &mut f);
    for k in 0..n {
        out[k] = dt * (f[k] - g[k]);
    }
    for (r, &w) in dw.iter().enumerate() {
        sys.noise_dh_dq(r, q, p, &mut g);
        sys.noise_force(r, q, p, &mut f);
        for k in 0..n {
            out[k] += w * (f[k] - g[k]);
        }
    }
}

/// H_p dt + sum_r h_{r,p} dW^r at (q, p), written into `out`.
fn position_increment<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    q: &[f64],
    p: &[f64],
    dt: f64,
    dw: &[f64],
    out: &mut [f64],
) {
    let n = q.len();
    let mut v: Vector = SmallVec::from_elem(0.0, n);
    sys.dh_dp(q, p, &mut v);
    for k in 0..n {
        out[k] = dt * v[k];
    }
    for (r, &w) in dw.iter().enumerate() {
        sys.noise_dh_dp(r, q, p, &mut v);
        for k in 0..n {
            out[k] += w * v[k];
        }
    }
}

/// Störmer-Verlet in three substeps: implicit half kick for P1, implicit drift
/// for q' (explicit when separable), explicit half kick for p'.
pub fn stormer_verlet_step<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<State> {
    stormer_verlet_step_with_stats(sys, state, dt, dw, cfg).map(|(z, _)| z)
}

pub fn stormer_verlet_step_with_stats<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    check_step_inputs(sys, state, dt, dw)?;
    let n = sys.dim();
    let traits = sys.traits();
    let (q, p) = (state.q(), state.p());
    let mut stats = StepStats::default();
    let mut kick: Vector = SmallVec::from_elem(0.0, n);

    let p1: Vector = if traits.separable && traits.forcing_free_of_p {
        momentum_increment(sys, q, p, dt, dw, &mut kick);
        p.iter().zip(&kick).map(|(a, b)| a + 0.5 * b).collect()
    } else if let (true, Some(lf)) = (traits.separable, sys.linear_forcing()) {
        // (I + gamma/2) P1 = p - (dt U_0' + sum_r dW^r U_r')/2
        let gamma = lf.combined(dt, dw);
        let mut grad: Vector = SmallVec::from_elem(0.0, n);
        let mut rhs: Vector = SmallVec::from_slice(p);
        sys.dh_dq(q, p, &mut grad);
        rhs.iter_mut().zip(&grad).for_each(|(r, g)| *r -= 0.5 * dt * g);
        for (r, &w) in dw.iter().enumerate() {
            sys.noise_dh_dq(r, q, p, &mut grad);
            rhs.iter_mut().zip(&grad).for_each(|(v, g)| *v -= 0.5 * w * g);
        }
        if n == 1 {
            let d = 1.0 + 0.5 * gamma[0];
            if d == 0.0 {
                return Err(Error::SingularMatrix);
            }
            SmallVec::from_elem(rhs[0] / d, 1)
        } else {
            let mat = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.5 * gamma[i * n + j]);
            let sol = mat.lu().solve(&DVector::from_column_slice(&rhs)).ok_or(Error::SingularMatrix)?;
            sol.iter().copied().collect()
        }
    } else {
        momentum_increment(sys, q, p, dt, dw, &mut kick);
        let x0: Buf = p.iter().zip(&kick).map(|(a, b)| a + 0.5 * b).collect();
        let mut residual = |x: &[f64], res: &mut [f64]| {
            momentum_increment(sys, q, x, dt, dw, &mut kick);
            for k in 0..n {
                res[k] = x[k] - p[k] - 0.5 * kick[k];
            }
        };
        let sol = solve(&mut residual, &x0, cfg)?;
        stats.solver_iterations += sol.iterations;
        SmallVec::from_slice(&sol.x)
    };

    let mut v0: Vector = SmallVec::from_elem(0.0, n);
    position_increment(sys, q, &p1, dt, dw, &mut v0);
    let qn: Vector = if traits.separable {
        q.iter().zip(&v0).map(|(a, b)| a + b).collect()
    } else {
        let x0: Buf = q.iter().zip(&v0).map(|(a, b)| a + b).collect();
        let mut v1: Vector = SmallVec::from_elem(0.0, n);
        let mut residual = |x: &[f64], res: &mut [f64]| {
            position_increment(sys, x, &p1, dt, dw, &mut v1);
            for k in 0..n {
                res[k] = x[k] - q[k] - 0.5 * (v0[k] + v1[k]);
            }
        };
        let sol = solve(&mut residual, &x0, cfg)?;
        stats.solver_iterations += sol.iterations;
        SmallVec::from_slice(&sol.x)
    };

    momentum_increment(sys, &qn, &p1, dt, dw, &mut kick);
    let pn: Vector = p1.iter().zip(&kick).map(|(a, b)| a + 0.5 * b).collect();
    Ok((State::from_parts(qn, pn)?, stats))
}

/// Two-stage DIRK step with the stages solved one after the other.
/// lambda = 0 and lambda = 1 delegate to [`midpoint_step`].
pub fn dirk_step<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    lambda: f64,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<State> {
    dirk_step_with_tableau(sys, &SprkTableau::dirk(lambda), lambda, state, dt, dw, cfg).map(|(z, _)| z)
}

pub(crate) fn dirk_step_with_tableau<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    lambda: f64,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    if lambda == 0.0 || lambda == 1.0 {
        return midpoint_step_with_stats(sys, state, dt, dw, cfg);
    }
    solve_sprk_blocks(sys, t, &[0..1, 1..2], state, dt, dw, cfg)
}

/// Explicit Stratonovich Heun: Euler predictor, trapezoidal corrector.
pub fn heun_step<S: ForcedHamiltonian + ?Sized>(sys: &S, state: &State, dt: f64, dw: &[f64]) -> Result<State> {
    check_step_inputs(sys, state, dt, dw)?;
    let n = sys.dim();
    let inc0 = euler_increment(sys, state, dt, dw);
    let z = state.to_flat();
    let bar: Buf = z.iter().zip(&inc0).map(|(a, b)| a + b).collect();
    let predicted = State::from_flat(&bar)?;
    let inc1 = euler_increment(sys, &predicted, dt, dw);
    let new: Buf = (0..2 * n).map(|k| z[k] + 0.5 * (inc0[k] + inc1[k])).collect();
    State::from_parts(SmallVec::from_slice(&new[..n]), SmallVec::from_slice(&new[n..]))
}
