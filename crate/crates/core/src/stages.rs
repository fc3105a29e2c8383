//! Vector-field evaluations at Runge-Kutta stages and their weighted sums.

use smallvec::SmallVec;

use crate::system::ForcedHamiltonian;

pub(crate) type Buf = SmallVec<[f64; 16]>;

pub(crate) fn zeros(len: usize) -> Buf {
    SmallVec::from_elem(0.0, len)
}

/// Gradients and forces at s stages. Noise fields for channel r at stage j
/// live at offset (r*s + j)*n.
pub(crate) struct StageFields {
    n: usize,
    s: usize,
    hp: Buf,
    hq: Buf,
    f: Buf,
    nhp: Buf,
    nhq: Buf,
    nf: Buf,
}

impl StageFields {
    pub fn new(n: usize, m: usize, s: usize) -> Self {
        Self {
            n,
            s,
            hp: zeros(s * n),
            hq: zeros(s * n),
            f: zeros(s * n),
            nhp: zeros(m * s * n),
            nhq: zeros(m * s * n),
            nf: zeros(m * s * n),
        }
    }

    #[inline]
    fn span(&self, j: usize) -> std::ops::Range<usize> {
        j * self.n..(j + 1) * self.n
    }

    #[inline]
    fn noise_span(&self, r: usize, j: usize) -> std::ops::Range<usize> {
        let k = r * self.s + j;
        k * self.n..(k + 1) * self.n
    }

    pub fn eval_drift_velocity<S: ForcedHamiltonian + ?Sized>(&mut self, sys: &S, j: usize, q: &[f64], p: &[f64]) {
        let sp = self.span(j);
        sys.dh_dp(q, p, &mut self.hp[sp]);
    }

    pub fn eval_drift_momentum<S: ForcedHamiltonian + ?Sized>(&mut self, sys: &S, j: usize, q: &[f64], p: &[f64]) {
        let sp = self.span(j);
        sys.dh_dq(q, p, &mut self.hq[sp.clone()]);
        sys.force(q, p, &mut self.f[sp]);
    }

    pub fn eval_noise_velocity<S: ForcedHamiltonian + ?Sized>(
        &mut self,
        sys: &S,
        r: usize,
        j: usize,
        q: &[f64],
        p: &[f64],
    ) {
        let sp = self.noise_span(r, j);
        sys.noise_dh_dp(r, q, p, &mut self.nhp[sp]);
    }

    pub fn eval_noise_momentum<S: ForcedHamiltonian + ?Sized>(
        &mut self,
        sys: &S,
        r: usize,
        j: usize,
        q: &[f64],
        p: &[f64],
    ) {
        let sp = self.noise_span(r, j);
        sys.noise_dh_dq(r, q, p, &mut self.nhq[sp.clone()]);
        sys.noise_force(r, q, p, &mut self.nf[sp]);
    }

    /// out += w H_p(stage j)
    pub fn add_stage_drift_q(&self, out: &mut [f64], j: usize, w: f64) {
        for (o, v) in out.iter_mut().zip(&self.hp[self.span(j)]) {
            *o += w * v;
        }
    }

    /// out += -wg H_q(stage j) + wk F(stage j)
    pub fn add_stage_drift_p(&self, out: &mut [f64], j: usize, wg: f64, wk: f64) {
        let sp = self.span(j);
        for ((o, hq), f) in out.iter_mut().zip(&self.hq[sp.clone()]).zip(&self.f[sp]) {
            *o += wk * f - wg * hq;
        }
    }

    /// out += w h_{r,p}(stage j)
    pub fn add_stage_noise_q(&self, out: &mut [f64], r: usize, j: usize, w: f64) {
        for (o, v) in out.iter_mut().zip(&self.nhp[self.noise_span(r, j)]) {
            *o += w * v;
        }
    }

    /// out += -wg h_{r,q}(stage j) + wk f_r(stage j)
    pub fn add_stage_noise_p(&self, out: &mut [f64], r: usize, j: usize, wg: f64, wk: f64) {
        let sp = self.noise_span(r, j);
        for ((o, hq), f) in out.iter_mut().zip(&self.nhq[sp.clone()]).zip(&self.nf[sp]) {
            *o += wk * f - wg * hq;
        }
    }

    /// out += scale * sum_j c_j H_p(stage j)
    pub fn add_drift_q(&self, out: &mut [f64], scale: f64, c: &[f64]) {
        for (j, &cj) in c.iter().enumerate() {
            if cj != 0.0 {
                let w = scale * cj;
                for (o, v) in out.iter_mut().zip(&self.hp[self.span(j)]) {
                    *o += w * v;
                }
            }
        }
    }

    /// out += scale * sum_j (-g_j H_q + k_j F)(stage j)
    pub fn add_drift_p(&self, out: &mut [f64], scale: f64, g: &[f64], k: &[f64]) {
        for j in 0..g.len() {
            let (wg, wk) = (scale * g[j], scale * k[j]);
            let sp = self.span(j);
            for ((o, hq), f) in out.iter_mut().zip(&self.hq[sp.clone()]).zip(&self.f[sp]) {
                *o += wk * f - wg * hq;
            }
        }
    }

    /// out += scale * sum_j c_j h_{r,p}(stage j)
    pub fn add_noise_q(&self, out: &mut [f64], r: usize, scale: f64, c: &[f64]) {
        for (j, &cj) in c.iter().enumerate() {
            if cj != 0.0 {
                let w = scale * cj;
                for (o, v) in out.iter_mut().zip(&self.nhp[self.noise_span(r, j)]) {
                    *o += w * v;
                }
            }
        }
    }

    /// out += scale * sum_j (-g_j h_{r,q} + k_j f_r)(stage j)
    pub fn add_noise_p(&self, out: &mut [f64], r: usize, scale: f64, g: &[f64], k: &[f64]) {
        for j in 0..g.len() {
            let (wg, wk) = (scale * g[j], scale * k[j]);
            let sp = self.noise_span(r, j);
            for ((o, hq), f) in out.iter_mut().zip(&self.nhq[sp.clone()]).zip(&self.nf[sp]) {
                *o += wk * f - wg * hq;
            }
        }
    }
}
