//! Weak Runge-Kutta schemes driven by three-point increments.
//!
//! Drift stages Z0 and one family of noise stages Z(l) per channel:
//!
//! ```text
//! Z0_i   = z + dt sum_j a0_ij a(Z0_j) + sum_r I_r sum_j b0_ij b_r(Z(r)_j)
//! Z(l)_i = z + dt sum_j a1_ij a(Z0_j) + I_l sum_j b1_ij b_l(Z(l)_j)
//!            + sum_{r != l} I_r sum_j b3_ij b_r(Z(r)_j)
//! z'     = z + dt sum_i alpha_i a(Z0_i) + sum_r I_r sum_i beta_i b_r(Z(r)_i)
//! ```
//!
//! where a = (H_p, -H_q + F) and b_r = (h_{r,p}, -h_{r,q} + f_r).

use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::ms::{euler_increment, StepStats};
use crate::solver::{solve, SolverConfig};
use crate::sprk::{pair_violation, Condition, ConditionReport};
use crate::stages::{zeros, Buf, StageFields};
use crate::system::{check_dims, ForcedHamiltonian, State, Vector};
use crate::tableau_io::{write_header, write_matrix, write_vector, RawTableau, TableauParseError};

/// Row-major s x s matrices. `b3 = None` marks a tableau meant for a single
/// noise channel only, where b3 never enters the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct WrkTableau {
    pub name: String,
    pub s: usize,
    pub a0: Vec<f64>,
    pub b0: Vec<f64>,
    pub a1: Vec<f64>,
    pub b1: Vec<f64>,
    pub b3: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl WrkTableau {
    pub fn srkw1(lambda: f64) -> Self {
        Self {
            name: format!("srkw1({lambda})"),
            s: 1,
            a0: vec![0.5],
            b0: vec![lambda],
            a1: vec![1.0 - lambda],
            b1: vec![0.5],
            b3: Some(vec![0.5]),
            alpha: vec![1.0],
            beta: vec![1.0],
        }
    }

    /// Four-stage weak order 2 scheme for one noise channel, free parameters zero.
    pub fn srkw2() -> Self {
        Self::srkw2_with(0.0, 0.0, 0.0)
    }

    /// The free parameters sit in the third row of b1 and never influence the update.
    pub fn srkw2_with(l1: f64, l2: f64, l3: f64) -> Self {
        let r3 = 3f64.sqrt();
        #[rustfmt::skip]
        let a0 = vec![
            0.125, 0.0, 0.0, 0.0,
            0.25, 0.125, 0.0, 0.0,
            0.25, 0.25, 0.125, 0.0,
            0.25, 0.25, 0.25, 0.125,
        ];
        #[rustfmt::skip]
        let b0 = vec![
            5.0 / 6.0 - r3 / 3.0, -0.5, 0.0, 0.0,
            -1.0 / 6.0 + r3 / 3.0, 0.5, 0.0, 0.0,
            0.5, 0.5, 0.0, 0.0,
            -1.0 / 6.0, 0.5, 0.0, 0.0,
        ];
        #[rustfmt::skip]
        let a1 = vec![
            -1.0 / 6.0 + r3 / 6.0, 1.0 / 3.0 - r3 / 6.0, 0.0, 1.0 / 3.0,
            0.5, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        #[rustfmt::skip]
        let b1 = vec![
            0.25, 0.25 - r3 / 6.0, 0.0, 0.0,
            0.25 + r3 / 6.0, 0.25, 0.0, 0.0,
            l1, l2, 0.0, l3,
            0.0, -0.5, 0.0, 0.0,
        ];
        Self {
            name: "srkw2".into(),
            s: 4,
            a0,
            b0,
            a1,
            b1,
            b3: None,
            alpha: vec![0.25; 4],
            beta: vec![0.5, 0.5, 0.0, 0.0],
        }
    }

    pub fn dims_consistent(&self) -> bool {
        let s = self.s;
        s > 0
            && [&self.a0, &self.b0, &self.a1, &self.b1].iter().all(|m| m.len() == s * s)
            && self.b3.as_ref().map_or(true, |m| m.len() == s * s)
            && self.alpha.len() == s
            && self.beta.len() == s
    }

    /// Noise stages the update depends on: those with nonzero beta or b0
    /// columns, closed under the b1/b3 couplings of their own equations.
    pub fn needed_noise_stages(&self) -> Vec<usize> {
        let s = self.s;
        let mut need: Vec<bool> = (0..s)
            .map(|j| self.beta[j] != 0.0 || (0..s).any(|i| self.b0[i * s + j] != 0.0))
            .collect();
        loop {
            let mut grew = false;
            for i in 0..s {
                if !need[i] {
                    continue;
                }
                for j in 0..s {
                    let coupled = self.b1[i * s + j] != 0.0
                        || self.b3.as_ref().is_some_and(|b3| b3[i * s + j] != 0.0);
                    if coupled && !need[j] {
                        need[j] = true;
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        (0..s).filter(|&j| need[j]).collect()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, TableauParseError> {
        let raw = RawTableau::parse(text)?;
        let name = text
            .lines()
            .next()
            .and_then(|l| l.trim().strip_prefix('#'))
            .map(|n| n.trim().to_string())
            .unwrap_or_else(|| "custom".into());
        Ok(Self {
            name,
            s: raw.s,
            a0: raw.matrix("a0")?,
            b0: raw.matrix("b0")?,
            a1: raw.matrix("a1")?,
            b1: raw.matrix("b1")?,
            b3: if raw.has("b3") { Some(raw.matrix("b3")?) } else { None },
            alpha: raw.vector("alpha")?,
            beta: raw.vector("beta")?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_header(&mut out, &self.name, self.s);
        write_matrix(&mut out, "a0", self.s, &self.a0);
        write_matrix(&mut out, "b0", self.s, &self.b0);
        write_matrix(&mut out, "a1", self.s, &self.a1);
        write_matrix(&mut out, "b1", self.s, &self.b1);
        if let Some(b3) = &self.b3 {
            write_matrix(&mut out, "b3", self.s, b3);
        }
        write_vector(&mut out, "alpha", &self.alpha);
        write_vector(&mut out, "beta", &self.beta);
        out
    }
}

/// The b3 family is checked only when the tableau carries b3; single-channel
/// tableaus never use it.
pub fn check_wrk_symplectic_conditions(t: &WrkTableau, tol: f64) -> ConditionReport {
    if !t.dims_consistent() {
        return ConditionReport::malformed(tol);
    }
    let s = t.s;
    let mut conditions = vec![
        Condition { name: "alpha a0 + alpha a0".into(), max_violation: pair_violation(s, &t.alpha, &t.a0, &t.alpha, &t.a0) },
        Condition { name: "alpha b0 + beta a1".into(), max_violation: pair_violation(s, &t.alpha, &t.b0, &t.beta, &t.a1) },
        Condition { name: "beta b1 + beta b1".into(), max_violation: pair_violation(s, &t.beta, &t.b1, &t.beta, &t.b1) },
    ];
    if let Some(b3) = &t.b3 {
        conditions.push(Condition {
            name: "beta b3 + beta b3".into(),
            max_violation: pair_violation(s, &t.beta, b3, &t.beta, b3),
        });
    }
    ConditionReport { tol, conditions }
}

pub fn wrk_step<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &WrkTableau,
    state: &State,
    dt: f64,
    increments: &[f64],
    cfg: &SolverConfig,
) -> Result<State> {
    wrk_step_with_stats(sys, t, state, dt, increments, cfg).map(|(z, _)| z)
}

/// Solves all drift stages and the needed noise stages as one coupled system.
/// Noise families collapse into one when m = 1 or b3 = b1.
pub fn wrk_step_with_stats<S: ForcedHamiltonian + ?Sized>(
    sys: &S,
    t: &WrkTableau,
    state: &State,
    dt: f64,
    increments: &[f64],
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    check_dims(sys, state, increments)?;
    if !(dt >= 0.0) || !dt.is_finite() || increments.iter().any(|w| !w.is_finite()) {
        return Err(invalid("time step and increments must be finite with dt >= 0"));
    }
    if !t.dims_consistent() {
        return Err(invalid(format!("tableau `{}` has inconsistent dimensions", t.name)));
    }
    let (n, m, s) = (sys.dim(), sys.noise_dim(), t.s);
    let collapsed = m <= 1 || t.b3.as_ref().is_some_and(|b3| b3 == &t.b1);
    if m > 1 && t.b3.is_none() {
        return Err(Error::Unsupported(format!("tableau `{}` supports a single noise channel, system has {m}", t.name)));
    }
    let families = if collapsed { 1 } else { m };
    let need = t.needed_noise_stages();
    let sep = sys.traits().separable;
    let (q, p) = (state.q(), state.p());
    let family_of = |r: usize| if collapsed { 0 } else { r };
    let noise_row = |f: usize, r: usize, i: usize| -> &[f64] {
        let row = i * s..(i + 1) * s;
        if collapsed || r == f {
            &t.b1[row]
        } else {
            &t.b3.as_ref().expect("b3 present for multi-channel tableaus")[row]
        }
    };

    let mut drift_fields = StageFields::new(n, 0, s);
    let mut noise_fields = StageFields::new(n, m, s);
    let mut q0 = zeros(s * n);
    let mut p0 = zeros(s * n);
    let mut qf = zeros(families * s * n);
    let mut pf = zeros(families * s * n);

    let inc = euler_increment(sys, state, dt, increments);
    for i in 0..s {
        for k in 0..n {
            q0[i * n + k] = q[k] + 0.5 * inc[k];
            p0[i * n + k] = p[k] + 0.5 * inc[n + k];
        }
    }
    for f in 0..families {
        for &i in &need {
            for k in 0..n {
                qf[(f * s + i) * n + k] = q[k] + 0.5 * inc[k];
                pf[(f * s + i) * n + k] = p[k] + 0.5 * inc[n + k];
            }
        }
    }

    let mut x0: Buf = SmallVec::new();
    if !sep {
        x0.extend_from_slice(&q0);
    }
    x0.extend_from_slice(&p0);
    for f in 0..families {
        for &i in &need {
            let sp = (f * s + i) * n..(f * s + i + 1) * n;
            if !sep {
                x0.extend_from_slice(&qf[sp.clone()]);
            }
            x0.extend_from_slice(&pf[sp]);
        }
    }

    let mut tmp: Vector = SmallVec::from_elem(0.0, n);
    let mut residual = |x: &[f64], res: &mut [f64]| {
        // unpack
        let mut at = 0;
        let mut take = |len: usize| {
            let sl = &x[at..at + len];
            at += len;
            sl
        };
        if !sep {
            q0.copy_from_slice(take(s * n));
        }
        p0.copy_from_slice(take(s * n));
        for f in 0..families {
            for &i in &need {
                let sp = (f * s + i) * n..(f * s + i + 1) * n;
                if !sep {
                    qf[sp.clone()].copy_from_slice(take(n));
                }
                pf[sp].copy_from_slice(take(n));
            }
        }

        let family_stage = |f: usize, j: usize| (f * s + j) * n..(f * s + j + 1) * n;
        if sep {
            for j in 0..s {
                drift_fields.eval_drift_velocity(sys, j, q, &p0[j * n..(j + 1) * n]);
            }
            for r in 0..m {
                for &j in &need {
                    noise_fields.eval_noise_velocity(sys, r, j, q, &pf[family_stage(family_of(r), j)]);
                }
            }
            for i in 0..s {
                let qi = &mut q0[i * n..(i + 1) * n];
                qi.copy_from_slice(q);
                drift_fields.add_drift_q(qi, dt, &t.a0[i * s..(i + 1) * s]);
                for (r, &w) in increments.iter().enumerate() {
                    noise_fields.add_noise_q(qi, r, w, &t.b0[i * s..(i + 1) * s]);
                }
            }
            for f in 0..families {
                for &i in &need {
                    let qi = &mut qf[family_stage(f, i)];
                    qi.copy_from_slice(q);
                    drift_fields.add_drift_q(qi, dt, &t.a1[i * s..(i + 1) * s]);
                    for (r, &w) in increments.iter().enumerate() {
                        noise_fields.add_noise_q(qi, r, w, noise_row(f, r, i));
                    }
                }
            }
        }
        for j in 0..s {
            let (qj, pj) = (&q0[j * n..(j + 1) * n], &p0[j * n..(j + 1) * n]);
            if !sep {
                drift_fields.eval_drift_velocity(sys, j, qj, pj);
            }
            drift_fields.eval_drift_momentum(sys, j, qj, pj);
        }
        for r in 0..m {
            for &j in &need {
                let sp = family_stage(family_of(r), j);
                if !sep {
                    noise_fields.eval_noise_velocity(sys, r, j, &qf[sp.clone()], &pf[sp.clone()]);
                }
                noise_fields.eval_noise_momentum(sys, r, j, &qf[sp.clone()], &pf[sp]);
            }
        }

        let mut out = 0;
        let mut emit = |res: &mut [f64], stage: &[f64], target: &[f64]| {
            for k in 0..n {
                res[out] = stage[k] - target[k];
                out += 1;
            }
        };
        if !sep {
            for i in 0..s {
                tmp.copy_from_slice(q);
                drift_fields.add_drift_q(&mut tmp, dt, &t.a0[i * s..(i + 1) * s]);
                for (r, &w) in increments.iter().enumerate() {
                    noise_fields.add_noise_q(&mut tmp, r, w, &t.b0[i * s..(i + 1) * s]);
                }
                emit(res, &q0[i * n..(i + 1) * n], &tmp);
            }
        }
        for i in 0..s {
            let row = &t.a0[i * s..(i + 1) * s];
            tmp.copy_from_slice(p);
            drift_fields.add_drift_p(&mut tmp, dt, row, row);
            let nrow = &t.b0[i * s..(i + 1) * s];
            for (r, &w) in increments.iter().enumerate() {
                noise_fields.add_noise_p(&mut tmp, r, w, nrow, nrow);
            }
            emit(res, &p0[i * n..(i + 1) * n], &tmp);
        }
        for f in 0..families {
            for &i in &need {
                let row = &t.a1[i * s..(i + 1) * s];
                if !sep {
                    tmp.copy_from_slice(q);
                    drift_fields.add_drift_q(&mut tmp, dt, row);
                    for (r, &w) in increments.iter().enumerate() {
                        noise_fields.add_noise_q(&mut tmp, r, w, noise_row(f, r, i));
                    }
                    emit(res, &qf[family_stage(f, i)], &tmp);
                }
                tmp.copy_from_slice(p);
                drift_fields.add_drift_p(&mut tmp, dt, row, row);
                for (r, &w) in increments.iter().enumerate() {
                    let nrow = noise_row(f, r, i);
                    noise_fields.add_noise_p(&mut tmp, r, w, nrow, nrow);
                }
                emit(res, &pf[family_stage(f, i)], &tmp);
            }
        }
    };
    let sol = solve(&mut residual, &x0, cfg)?;

    let mut qn: Vector = SmallVec::from_slice(q);
    let mut pn: Vector = SmallVec::from_slice(p);
    drift_fields.add_drift_q(&mut qn, dt, &t.alpha);
    drift_fields.add_drift_p(&mut pn, dt, &t.alpha, &t.alpha);
    for (r, &w) in increments.iter().enumerate() {
        noise_fields.add_noise_q(&mut qn, r, w, &t.beta);
        noise_fields.add_noise_p(&mut pn, r, w, &t.beta, &t.beta);
    }
    Ok((State::from_parts(qn, pn)?, StepStats { solver_iterations: sol.iterations }))
}
