//! Finite-difference verification of geometric properties of one-step maps:
//! symplectic and conformally symplectic Jacobians, the Störmer-Verlet
//! determinant formula, momentum maps and the type-II generating identity.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::ms::stormer_verlet_step;
use crate::solver::{solve, SolverConfig};
use crate::sprk::SprkTableau;
use crate::system::{ForcedHamiltonian, LinearForcing, State};

/// Central difference step used for all derivatives of discrete quantities.
pub const FD_STEP: f64 = 1e-6;

fn fd_h(step: f64, x: f64) -> f64 {
    step * x.abs().max(1.0)
}

fn omega(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        if j == i + n {
            1.0
        } else if i == j + n {
            -1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    /// One-step Jacobian d(q', p')/d(q, p).
    pub d: DMatrix<f64>,
    pub det: f64,
    /// max |D^T Omega D - c Omega| with c the least-squares fit below.
    pub symplectic_residual: f64,
    pub conformal_factor_fitted: f64,
    /// max |D^T Omega D - Omega|.
    pub unit_residual: f64,
}

impl JacobianReport {
    pub fn from_matrix(d: DMatrix<f64>) -> Self {
        let n = d.nrows() / 2;
        let om = omega(n);
        let m = d.transpose() * &om * &d;
        let c = m.component_mul(&om).sum() / (2 * n) as f64;
        let symplectic_residual = (&m - &om * c).amax();
        let unit_residual = (&m - &om).amax();
        let det = d.determinant();
        Self { d, det, symplectic_residual, conformal_factor_fitted: c, unit_residual }
    }
}

/// Jacobian of `step` at `state` by central differences, column by column,
/// with step `fd_step * max(1, |z_j|)`.
pub fn step_jacobian<F>(mut step: F, state: &State, fd_step: f64) -> Result<JacobianReport>
where
    F: FnMut(&State) -> Result<State>,
{
    if !(fd_step > 0.0) {
        return Err(invalid("finite difference step must be positive"));
    }
    let z = state.to_flat();
    let dim = z.len();
    let mut d = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let h = fd_h(fd_step, z[j]);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += h;
        zm[j] -= h;
        let width = zp[j] - zm[j];
        let fp = step(&State::from_flat(&zp)?)?.to_flat();
        let fm = step(&State::from_flat(&zm)?)?.to_flat();
        for i in 0..dim {
            d[(i, j)] = (fp[i] - fm[i]) / width;
        }
    }
    Ok(JacobianReport::from_matrix(d))
}

/// exp(-nu_0 dt - sum_r nu_r dW^r), with `nu` of length m + 1.
pub fn conformal_factor(nu: &[f64], dt: f64, dw: &[f64]) -> f64 {
    let Some((nu0, rest)) = nu.split_first() else {
        return 1.0;
    };
    let exponent = -nu0 * dt - rest.iter().zip(dw).map(|(n, w)| n * w).sum::<f64>();
    exponent.exp()
}

/// exp(-tr Gamma_0 dt - sum_r tr Gamma_r dW^r).
pub fn volume_factor(forcing: &LinearForcing, dt: f64, dw: &[f64]) -> f64 {
    let n = forcing.dim();
    let trace = |g: &[f64]| (0..n).map(|i| g[i * n + i]).sum::<f64>();
    let gammas = forcing.gammas();
    let exponent =
        -trace(&gammas[0]) * dt - gammas[1..].iter().zip(dw).map(|(g, w)| trace(g) * w).sum::<f64>();
    exponent.exp()
}

/// det(I + gamma (I - gamma/2)^{-1}) for a row-major N x N matrix gamma.
pub fn quasi_symplectic_det(gamma: &[f64], n: usize) -> Result<f64> {
    if gamma.len() != n * n || n == 0 {
        return Err(Error::DimensionMismatch { expected: n * n, found: gamma.len() });
    }
    let g = DMatrix::from_row_slice(n, n, gamma);
    let eye = DMatrix::<f64>::identity(n, n);
    let eta = &eye - &g * 0.5;
    let inv = eta.try_inverse().ok_or(Error::SingularMatrix)?;
    let det = (&eye + &g * inv).determinant();
    if det.is_finite() {
        Ok(det)
    } else {
        Err(Error::SingularMatrix)
    }
}

/// Measured Störmer-Verlet Jacobian determinants against the closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiSymplecticReport {
    /// `quasi_symplectic_det(dt Gamma_0 + sum dW^r Gamma_r)`.
    pub predicted: f64,
    /// The same formula evaluated at the negated generator.
    pub predicted_negated: f64,
    pub measured: Vec<f64>,
    /// max |measured - predicted| / |predicted|.
    pub max_relative_deviation: f64,
    pub max_relative_deviation_negated: f64,
    /// max - min of the measured determinants.
    pub spread: f64,
}

pub fn check_quasi_symplectic<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    states: &[State],
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<QuasiSymplecticReport> {
    let forcing = sys
        .linear_forcing()
        .ok_or_else(|| Error::Unsupported("determinant check needs linear forcing".into()))?;
    if !sys.traits().separable {
        return Err(Error::Unsupported("determinant check needs separable Hamiltonians".into()));
    }
    if states.is_empty() {
        return Err(invalid("no states to check"));
    }
    let n = sys.dim();
    let gamma = forcing.combined(dt, dw);
    let predicted = quasi_symplectic_det(&gamma, n)?;
    let negated: Vec<f64> = gamma.iter().map(|g| -g).collect();
    let predicted_negated = quasi_symplectic_det(&negated, n)?;
    let measured = states
        .iter()
        .map(|z| step_jacobian(|x| stormer_verlet_step(sys, x, dt, dw, cfg), z, FD_STEP).map(|r| r.det))
        .collect::<Result<Vec<_>>>()?;
    let rel = |target: f64| measured.iter().map(|d| (d - target).abs() / target.abs()).fold(0.0, f64::max);
    let max = measured.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = measured.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(QuasiSymplecticReport {
        predicted,
        predicted_negated,
        max_relative_deviation: rel(predicted),
        max_relative_deviation_negated: rel(predicted_negated),
        measured,
        spread: max - min,
    })
}

/// Planar rotation momentum map q1 p2 - q2 p1.
pub fn momentum_map_so2(state: &State) -> Result<f64> {
    if state.dim() != 2 {
        return Err(Error::Unsupported(format!("SO(2) momentum map needs N = 2, got N = {}", state.dim())));
    }
    let (q, p) = (state.q(), state.p());
    Ok(q[0] * p[1] - q[1] * p[0])
}

/// Change of the SO(2) momentum map over one application of `step`.
pub fn noether_drift<F>(mut step: F, state: &State) -> Result<f64>
where
    F: FnMut(&State) -> Result<State>,
{
    let before = momentum_map_so2(state)?;
    let after = momentum_map_so2(&step(state)?)?;
    Ok(after - before)
}

/// Discrete Hamiltonian and discrete forces at (q_k, p_{k+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHamiltonian {
    pub h: f64,
    pub f_minus: Vec<f64>,
    pub f_plus: Vec<f64>,
}

/// Stage values of a step posed from (q_k, p_{k+1}).
struct BoundaryStages {
    /// Q stages, row per stage.
    q_stages: Vec<f64>,
    p_stages: Vec<f64>,
    q_next: Vec<f64>,
}

fn weighted<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    qs: &[f64],
    ps: &[f64],
    dt: f64,
    dw: &[f64],
    row: impl Fn(usize) -> Coeffs,
    out_q: &mut [f64],
    out_p: &mut [f64],
) {
    let n = sys.dim();
    let mut g = vec![0.0; n];
    out_q.iter_mut().for_each(|v| *v = 0.0);
    out_p.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..t.s {
        let c = row(j);
        let (q, p) = (&qs[j * n..(j + 1) * n], &ps[j * n..(j + 1) * n]);
        sys.dh_dp(q, p, &mut g);
        out_q.iter_mut().zip(&g).for_each(|(o, v)| *o += dt * c.a * v);
        sys.dh_dq(q, p, &mut g);
        out_p.iter_mut().zip(&g).for_each(|(o, v)| *o -= dt * c.abar * v);
        sys.force(q, p, &mut g);
        out_p.iter_mut().zip(&g).for_each(|(o, v)| *o += dt * c.ahat * v);
        for (r, &w) in dw.iter().enumerate() {
            sys.noise_dh_dp(r, q, p, &mut g);
            out_q.iter_mut().zip(&g).for_each(|(o, v)| *o += w * c.b * v);
            sys.noise_dh_dq(r, q, p, &mut g);
            out_p.iter_mut().zip(&g).for_each(|(o, v)| *o -= w * c.bbar * v);
            sys.noise_force(r, q, p, &mut g);
            out_p.iter_mut().zip(&g).for_each(|(o, v)| *o += w * c.bhat * v);
        }
    }
}

#[derive(Clone, Copy)]
struct Coeffs {
    a: f64,
    abar: f64,
    ahat: f64,
    b: f64,
    bbar: f64,
    bhat: f64,
}

fn solve_boundary<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    qk: &[f64],
    p_next: &[f64],
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<BoundaryStages> {
    let n = sys.dim();
    let s = t.s;
    let stage_row = |i: usize| {
        move |j: usize| Coeffs {
            a: t.a[i * s + j],
            abar: t.abar[i * s + j],
            ahat: t.ahat[i * s + j],
            b: t.b[i * s + j],
            bbar: t.bbar[i * s + j],
            bhat: t.bhat[i * s + j],
        }
    };
    let output_row = |j: usize| Coeffs {
        a: t.alpha[j],
        abar: t.alpha[j],
        ahat: t.alphahat[j],
        b: t.beta[j],
        bbar: t.beta[j],
        bhat: t.betahat[j],
    };
    // x = [Q_1..Q_s, P_1..P_s, p_k]
    let sn = s * n;
    let mut x0 = Vec::with_capacity(2 * sn + n);
    (0..s).for_each(|_| x0.extend_from_slice(qk));
    (0..s).for_each(|_| x0.extend_from_slice(p_next));
    x0.extend_from_slice(p_next);
    let mut iq = vec![0.0; n];
    let mut ip = vec![0.0; n];
    let mut residual = |x: &[f64], res: &mut [f64]| {
        let (qs, rest) = x.split_at(sn);
        let (ps, pk) = rest.split_at(sn);
        for i in 0..s {
            weighted(sys, t, qs, ps, dt, dw, stage_row(i), &mut iq, &mut ip);
            for k in 0..n {
                res[i * n + k] = qs[i * n + k] - qk[k] - iq[k];
                res[sn + i * n + k] = ps[i * n + k] - pk[k] - ip[k];
            }
        }
        weighted(sys, t, qs, ps, dt, dw, output_row, &mut iq, &mut ip);
        for k in 0..n {
            res[2 * sn + k] = p_next[k] - pk[k] - ip[k];
        }
    };
    let sol = solve(&mut residual, &x0, cfg)?;
    let (qs, rest) = sol.x.split_at(sn);
    let ps = &rest[..sn];
    weighted(sys, t, qs, ps, dt, dw, output_row, &mut iq, &mut ip);
    let q_next = qk.iter().zip(&iq).map(|(a, b)| a + b).collect();
    Ok(BoundaryStages { q_stages: qs.to_vec(), p_stages: ps.to_vec(), q_next })
}

fn discrete_hamiltonian_value<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    stages: &BoundaryStages,
    p_next: &[f64],
    dt: f64,
    dw: &[f64],
) -> f64 {
    let n = sys.dim();
    let mut g = vec![0.0; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut h = dot(p_next, &stages.q_next);
    for i in 0..t.s {
        let (q, p) = (&stages.q_stages[i * n..(i + 1) * n], &stages.p_stages[i * n..(i + 1) * n]);
        sys.dh_dp(q, p, &mut g);
        h -= dt * t.alpha[i] * (dot(p, &g) - sys.hamiltonian(q, p));
        for (r, &w) in dw.iter().enumerate() {
            sys.noise_dh_dp(r, q, p, &mut g);
            h -= w * t.beta[i] * (dot(p, &g) - sys.noise_hamiltonian(r, q, p));
        }
    }
    h
}

/// Discrete Hamiltonian H+_d(q_k, p_{k+1}) of the partitioned Runge-Kutta
/// scheme and its discrete forces F-_d, F+_d. The stage Jacobians entering the
/// forces are central differences of re-solved stages.
pub fn evaluate_discrete_hamiltonian<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    qk: &[f64],
    p_next: &[f64],
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<DiscreteHamiltonian> {
    let n = sys.dim();
    if qk.len() != n || p_next.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: qk.len().max(p_next.len()) });
    }
    if dw.len() != sys.noise_dim() {
        return Err(Error::DimensionMismatch { expected: sys.noise_dim(), found: dw.len() });
    }
    if !t.dims_consistent() {
        return Err(invalid(format!("tableau `{}` has inconsistent dimensions", t.name)));
    }
    let base = solve_boundary(sys, t, qk, p_next, dt, dw, cfg)?;
    let h = discrete_hamiltonian_value(sys, t, &base, p_next, dt, dw);

    // Weighted forces at each stage: dt alphahat_i F_i + sum_r dW^r betahat_i f_{r,i}.
    let s = t.s;
    let mut forces = vec![0.0; s * n];
    let mut g = vec![0.0; n];
    for i in 0..s {
        let (q, p) = (&base.q_stages[i * n..(i + 1) * n], &base.p_stages[i * n..(i + 1) * n]);
        let out = &mut forces[i * n..(i + 1) * n];
        sys.force(q, p, &mut g);
        out.iter_mut().zip(&g).for_each(|(o, v)| *o += dt * t.alphahat[i] * v);
        for (r, &w) in dw.iter().enumerate() {
            sys.noise_force(r, q, p, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, v)| *o += w * t.betahat[i] * v);
        }
    }

    let mut f_minus = vec![0.0; n];
    let mut f_plus = vec![0.0; n];
    if forces.iter().any(|&v| v != 0.0) {
        // Column c of dQ/dx contracted with the stage forces gives component c.
        for (target, wrt_p) in [(&mut f_minus, false), (&mut f_plus, true)] {
            for c in 0..n {
                let x = if wrt_p { p_next[c] } else { qk[c] };
                let hstep = fd_h(FD_STEP, x);
                let perturbed = |sign: f64| -> Result<BoundaryStages> {
                    let mut q = qk.to_vec();
                    let mut p = p_next.to_vec();
                    if wrt_p {
                        p[c] += sign * hstep;
                    } else {
                        q[c] += sign * hstep;
                    }
                    solve_boundary(sys, t, &q, &p, dt, dw, cfg)
                };
                let plus = perturbed(1.0)?;
                let minus = perturbed(-1.0)?;
                target[c] = (0..s * n)
                    .map(|k| forces[k] * (plus.q_stages[k] - minus.q_stages[k]) / (2.0 * hstep))
                    .sum();
            }
        }
    }
    Ok(DiscreteHamiltonian { h, f_minus, f_plus })
}

/// Residuals of q_{k+1} = D2 H+_d - F+_d and p_k = D1 H+_d - F-_d along one
/// step of the scheme from `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratingResidual {
    pub r_q: f64,
    pub r_p: f64,
}

pub fn verify_generating_identity<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    state: &State,
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<GeneratingResidual> {
    let next = crate::ms::sprk_step(sys, t, state, dt, dw, cfg)?;
    let n = sys.dim();
    let (qk, pk) = (state.q(), state.p());
    let p_next = next.p();
    let forces = evaluate_discrete_hamiltonian(sys, t, qk, p_next, dt, dw, cfg)?;
    let value = |q: &[f64], p: &[f64]| evaluate_discrete_hamiltonian_value(sys, t, q, p, dt, dw, cfg);
    let mut r_q: f64 = 0.0;
    let mut r_p: f64 = 0.0;
    for c in 0..n {
        let mut qp = qk.to_vec();
        let mut qm = qk.to_vec();
        qp[c] += FD_STEP;
        qm[c] -= FD_STEP;
        let d1 = (value(&qp, p_next)? - value(&qm, p_next)?) / (qp[c] - qm[c]);
        let mut pp = p_next.to_vec();
        let mut pm = p_next.to_vec();
        pp[c] += FD_STEP;
        pm[c] -= FD_STEP;
        let d2 = (value(qk, &pp)? - value(qk, &pm)?) / (pp[c] - pm[c]);
        r_p = r_p.max((pk[c] - (d1 - forces.f_minus[c])).abs());
        r_q = r_q.max((next.q()[c] - (d2 - forces.f_plus[c])).abs());
    }
    Ok(GeneratingResidual { r_q, r_p })
}

fn evaluate_discrete_hamiltonian_value<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &SprkTableau,
    qk: &[f64],
    p_next: &[f64],
    dt: f64,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<f64> {
    let stages = solve_boundary(sys, t, qk, p_next, dt, dw, cfg)?;
    Ok(discrete_hamiltonian_value(sys, t, &stages, p_next, dt, dw))
}
