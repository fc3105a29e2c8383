//! Coefficient sets of mean-square partitioned Runge-Kutta schemes and their
//! symplecticity and order conditions.

use crate::tableau_io::{write_header, write_matrix, write_vector, RawTableau, TableauParseError};

/// Stage equations:
///
/// ```text
/// Q_i = q + dt sum_j a_ij H_p + sum_r dW^r sum_j b_ij h_{r,p}
/// P_i = p - dt sum_j abar_ij H_q - sum_r dW^r sum_j bbar_ij h_{r,q}
///         + dt sum_j ahat_ij F   + sum_r dW^r sum_j bhat_ij f_r
/// ```
///
/// with all fields evaluated at (Q_j, P_j). The update uses `alpha` and `beta`
/// for the gradient terms, `alphahat` and `betahat` for the forces.
/// Matrices are row-major s x s.
#[derive(Debug, Clone, PartialEq)]
pub struct SprkTableau {
    pub name: String,
    pub s: usize,
    pub a: Vec<f64>,
    pub abar: Vec<f64>,
    pub ahat: Vec<f64>,
    pub b: Vec<f64>,
    pub bbar: Vec<f64>,
    pub bhat: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alphahat: Vec<f64>,
    pub beta: Vec<f64>,
    pub betahat: Vec<f64>,
}

const MATRIX_LABELS: [&str; 6] = ["a", "abar", "ahat", "b", "bbar", "bhat"];
const VECTOR_LABELS: [&str; 4] = ["alpha", "alphahat", "beta", "betahat"];

impl SprkTableau {
    /// Builds a tableau in which all six matrices coincide and all four weight vectors coincide.
    pub fn uniform(name: &str, matrix: Vec<f64>, weights: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            s: weights.len(),
            a: matrix.clone(),
            abar: matrix.clone(),
            ahat: matrix.clone(),
            b: matrix.clone(),
            bbar: matrix.clone(),
            bhat: matrix,
            alpha: weights.clone(),
            alphahat: weights.clone(),
            beta: weights.clone(),
            betahat: weights,
        }
    }

    pub fn midpoint() -> Self {
        Self::uniform("midpoint", vec![0.5], vec![1.0])
    }

    pub fn stormer_verlet() -> Self {
        let explicit_first = vec![0.0, 0.0, 0.5, 0.5];
        let left_column = vec![0.5, 0.0, 0.5, 0.0];
        let w = vec![0.5, 0.5];
        Self {
            name: "stormer-verlet".into(),
            s: 2,
            a: explicit_first.clone(),
            abar: left_column.clone(),
            ahat: left_column.clone(),
            b: explicit_first,
            bbar: left_column.clone(),
            bhat: left_column,
            alpha: w.clone(),
            alphahat: w.clone(),
            beta: w.clone(),
            betahat: w,
        }
    }

    /// Two-stage diagonally implicit family; lambda = 0 and 1 reduce to the midpoint rule.
    pub fn dirk(lambda: f64) -> Self {
        let m = vec![lambda / 2.0, 0.0, lambda, (1.0 - lambda) / 2.0];
        Self::uniform(&format!("dirk({lambda})"), m, vec![lambda, 1.0 - lambda])
    }

    pub fn dims_consistent(&self) -> bool {
        let s = self.s;
        s > 0
            && self.matrices().iter().all(|m| m.len() == s * s)
            && self.vectors().iter().all(|v| v.len() == s)
    }

    fn matrices(&self) -> [&Vec<f64>; 6] {
        [&self.a, &self.abar, &self.ahat, &self.b, &self.bbar, &self.bhat]
    }

    fn vectors(&self) -> [&Vec<f64>; 4] {
        [&self.alpha, &self.alphahat, &self.beta, &self.betahat]
    }

    pub fn parse(text: &str) -> Result<Self, TableauParseError> {
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
            a: raw.matrix("a")?,
            abar: raw.matrix("abar")?,
            ahat: raw.matrix("ahat")?,
            b: raw.matrix("b")?,
            bbar: raw.matrix("bbar")?,
            bhat: raw.matrix("bhat")?,
            alpha: raw.vector("alpha")?,
            alphahat: raw.vector("alphahat")?,
            beta: raw.vector("beta")?,
            betahat: raw.vector("betahat")?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_header(&mut out, &self.name, self.s);
        for (label, m) in MATRIX_LABELS.iter().zip(self.matrices()) {
            write_matrix(&mut out, label, self.s, m);
        }
        for (label, v) in VECTOR_LABELS.iter().zip(self.vectors()) {
            write_vector(&mut out, label, v);
        }
        out
    }

    /// Splits the stages into consecutive blocks that can be solved one after
    /// another. Stage i belongs to a later block than j whenever any coefficient
    /// couples j to a later stage.
    pub fn sequential_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let s = self.s;
        let couples = |i: usize, j: usize| {
            [&self.a, &self.abar, &self.ahat, &self.b, &self.bbar, &self.bhat]
                .iter()
                .any(|m| m[i * s + j] != 0.0)
        };
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < s {
            let mut end = start + 1;
            // extend while some stage inside depends on a stage at or beyond `end`
            loop {
                let reach = (start..end)
                    .flat_map(|i| (end..s).filter(move |&j| couples(i, j)))
                    .max();
                match reach {
                    Some(j) => end = j + 1,
                    None => break,
                }
            }
            blocks.push(start..end);
            start = end;
        }
        blocks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub tol: f64,
    pub conditions: Vec<Condition>,
}

impl ConditionReport {
    pub fn max_violation(&self) -> f64 {
        self.conditions.iter().map(|c| c.max_violation).fold(0.0, |a, v| if v.is_nan() { v } else { a.max(v) })
    }

    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.max_violation <= self.tol)
    }

    /// Indices into `conditions` of the families exceeding the tolerance.
    pub fn violated(&self) -> Vec<usize> {
        self.conditions
            .iter()
            .enumerate()
            .filter(|(_, c)| !(c.max_violation <= self.tol))
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn malformed(tol: f64) -> Self {
        Self { tol, conditions: vec![Condition { name: "dimensions".into(), max_violation: f64::INFINITY }] }
    }
}

/// max over i, j of |w_i X_ij + v_j Y_ji - w_i v_j|
pub(crate) fn pair_violation(s: usize, w: &[f64], x: &[f64], v: &[f64], y: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..s {
        for j in 0..s {
            let d = (w[i] * x[i * s + j] + v[j] * y[j * s + i] - w[i] * v[j]).abs();
            worst = if d.is_nan() { d } else { worst.max(d) };
        }
    }
    worst
}

pub fn check_sprk_symplectic_conditions(t: &SprkTableau, tol: f64) -> ConditionReport {
    if !t.dims_consistent() {
        return ConditionReport::malformed(tol);
    }
    let s = t.s;
    let families: [(&str, &[f64], &[f64], &[f64], &[f64]); 8] = [
        ("alpha abar + alpha a", &t.alpha, &t.abar, &t.alpha, &t.a),
        ("beta bbar + beta b", &t.beta, &t.bbar, &t.beta, &t.b),
        ("beta abar + alpha b", &t.beta, &t.abar, &t.alpha, &t.b),
        ("alpha bbar + beta a", &t.alpha, &t.bbar, &t.beta, &t.a),
        ("alpha ahat + alphahat a", &t.alpha, &t.ahat, &t.alphahat, &t.a),
        ("alpha bhat + betahat a", &t.alpha, &t.bhat, &t.betahat, &t.a),
        ("beta ahat + alphahat b", &t.beta, &t.ahat, &t.alphahat, &t.b),
        ("beta bhat + betahat b", &t.beta, &t.bhat, &t.betahat, &t.b),
    ];
    let conditions = families
        .iter()
        .map(|(name, w, x, v, y)| Condition { name: (*name).into(), max_violation: pair_violation(s, w, x, v, y) })
        .collect();
    ConditionReport { tol, conditions }
}

pub fn check_sprk_order_conditions(t: &SprkTableau, tol: f64) -> ConditionReport {
    if !t.dims_consistent() {
        return ConditionReport::malformed(tol);
    }
    let s = t.s;
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let double = |w: &[f64], m: &[f64]| (0..s).map(|i| w[i] * m[i * s..(i + 1) * s].iter().sum::<f64>()).sum::<f64>();
    let mut conditions: Vec<Condition> = [("sum alpha", &t.alpha), ("sum alphahat", &t.alphahat), ("sum beta", &t.beta), ("sum betahat", &t.betahat)]
        .iter()
        .map(|(name, v)| Condition { name: (*name).into(), max_violation: (sum(v) - 1.0).abs() })
        .collect();
    let doubles: [(&str, &[f64], &[f64]); 6] = [
        ("beta b e", &t.beta, &t.b),
        ("beta bbar e", &t.beta, &t.bbar),
        ("beta bhat e", &t.beta, &t.bhat),
        ("betahat b e", &t.betahat, &t.b),
        ("betahat bbar e", &t.betahat, &t.bbar),
        ("betahat bhat e", &t.betahat, &t.bhat),
    ];
    conditions.extend(
        doubles
            .iter()
            .map(|(name, w, m)| Condition { name: (*name).into(), max_violation: (double(w, m) - 0.5).abs() }),
    );
    ConditionReport { tol, conditions }
}
