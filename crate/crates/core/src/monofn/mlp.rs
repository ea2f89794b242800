use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::numkit::{sigmoid, softplus, softplus_inv};

/// Serialized form of [`MonotoneMlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    pub u_raw: Vec<f64>,
    pub v_raw: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub b_out: f64,
}

/// One-hidden-layer increasing network `f(x) = Σ v_k σ(u_k x + b_k) + b`.
///
/// The weights are stored raw and mapped through softplus, so the effective
/// `u_k, v_k` are always positive while the biases stay unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpParams", into = "MlpParams")]
pub struct MonotoneMlp {
    raw: MlpParams,
    // softplus(raw) and sigmoid(raw) for u and v, refreshed on every update
    u: Vec<f64>,
    v: Vec<f64>,
    du: Vec<f64>,
    dv: Vec<f64>,
}

impl TryFrom<MlpParams> for MonotoneMlp {
    type Error = LabError;

    fn try_from(p: MlpParams) -> Result<Self> {
        MonotoneMlp::new(p.u_raw, p.v_raw, p.b_hidden, p.b_out)
    }
}

impl From<MonotoneMlp> for MlpParams {
    fn from(m: MonotoneMlp) -> Self {
        m.raw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGrad {
    pub u_raw: Vec<f64>,
    pub v_raw: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub b_out: f64,
}

impl MlpGrad {
    pub fn zeros(hidden: usize) -> Self {
        MlpGrad {
            u_raw: vec![0.0; hidden],
            v_raw: vec![0.0; hidden],
            b_hidden: vec![0.0; hidden],
            b_out: 0.0,
        }
    }

    pub fn merge(&mut self, other: &MlpGrad) {
        for (a, b) in [
            (&mut self.u_raw, &other.u_raw),
            (&mut self.v_raw, &other.v_raw),
            (&mut self.b_hidden, &other.b_hidden),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.b_out += other.b_out;
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.u_raw.len() + 1);
        out.extend(&self.u_raw);
        out.extend(&self.v_raw);
        out.extend(&self.b_hidden);
        out.push(self.b_out);
        out
    }
}

impl MonotoneMlp {
    pub fn new(u_raw: Vec<f64>, v_raw: Vec<f64>, b_hidden: Vec<f64>, b_out: f64) -> Result<Self> {
        let k = u_raw.len();
        if k == 0 {
            return invalid("monotone MLP needs at least one hidden unit");
        }
        if v_raw.len() != k || b_hidden.len() != k {
            return Err(LabError::DimensionMismatch(format!(
                "hidden sizes differ: u {k}, v {}, b {}",
                v_raw.len(),
                b_hidden.len()
            )));
        }
        if u_raw.iter().chain(&v_raw).chain(&b_hidden).any(|x| !x.is_finite()) || !b_out.is_finite() {
            return invalid("MLP parameters must be finite");
        }
        let mut m = MonotoneMlp {
            raw: MlpParams { u_raw, v_raw, b_hidden, b_out },
            u: vec![0.0; k],
            v: vec![0.0; k],
            du: vec![0.0; k],
            dv: vec![0.0; k],
        };
        m.refresh();
        Ok(m)
    }

    fn refresh(&mut self) {
        for k in 0..self.hidden() {
            self.u[k] = softplus(self.raw.u_raw[k]);
            self.v[k] = softplus(self.raw.v_raw[k]);
            self.du[k] = sigmoid(self.raw.u_raw[k]);
            self.dv[k] = sigmoid(self.raw.v_raw[k]);
        }
    }

    pub fn raw(&self) -> &MlpParams {
        &self.raw
    }

    /// Build from effective (positive) weights.
    pub fn from_effective(u: &[f64], v: &[f64], b_hidden: Vec<f64>, b_out: f64) -> Result<Self> {
        if u.iter().chain(v).any(|w| !(*w > 0.0)) {
            return invalid("effective MLP weights must be positive");
        }
        Self::new(
            u.iter().map(|&w| softplus_inv(w)).collect(),
            v.iter().map(|&w| softplus_inv(w)).collect(),
            b_hidden,
            b_out,
        )
    }

    /// Approximately the identity on `[-span, span]`: unit input weights,
    /// evenly spread biases and output weights equal to the bias spacing.
    pub fn near_identity(hidden: usize, span: f64) -> Result<Self> {
        if hidden == 0 {
            return invalid("monotone MLP needs at least one hidden unit");
        }
        let spacing = if hidden > 1 { 2.0 * span / (hidden - 1) as f64 } else { 1.0 };
        let b: Vec<f64> = (0..hidden).map(|k| span - spacing * k as f64).collect();
        let offset = -spacing * hidden as f64 / 2.0;
        Self::from_effective(&vec![1.0; hidden], &vec![spacing; hidden], b, offset)
    }

    pub fn hidden(&self) -> usize {
        self.raw.u_raw.len()
    }

    /// Effective (positive) input weights.
    pub fn input_weights(&self) -> &[f64] {
        &self.u
    }

    /// Effective (positive) output weights.
    pub fn output_weights(&self) -> &[f64] {
        &self.v
    }

    pub fn value(&self, x: f64) -> f64 {
        let mut acc = self.raw.b_out;
        for k in 0..self.hidden() {
            acc += self.v[k] * sigmoid(self.u[k] * x + self.raw.b_hidden[k]);
        }
        acc
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.value_and_deriv(x).1
    }

    /// Value and input derivative in one pass.
    pub fn value_and_deriv(&self, x: f64) -> (f64, f64) {
        let (mut f, mut df) = (self.raw.b_out, 0.0);
        for k in 0..self.hidden() {
            let s = sigmoid(self.u[k] * x + self.raw.b_hidden[k]);
            f += self.v[k] * s;
            df += self.v[k] * self.u[k] * s * (1.0 - s);
        }
        (f, df)
    }

    pub fn accumulate(&self, x: f64, upstream: f64, grad: &mut MlpGrad) {
        for k in 0..self.hidden() {
            let s = sigmoid(self.u[k] * x + self.raw.b_hidden[k]);
            let ds = upstream * self.v[k] * s * (1.0 - s);
            grad.v_raw[k] += upstream * s * self.dv[k];
            grad.u_raw[k] += ds * x * self.du[k];
            grad.b_hidden[k] += ds;
        }
        grad.b_out += upstream;
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.hidden() + 1);
        out.extend(&self.raw.u_raw);
        out.extend(&self.raw.v_raw);
        out.extend(&self.raw.b_hidden);
        out.push(self.raw.b_out);
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let k = self.hidden();
        if flat.len() != 3 * k + 1 {
            return Err(LabError::DimensionMismatch(format!(
                "MLP with {k} hidden units has {} parameters, got {}",
                3 * k + 1,
                flat.len()
            )));
        }
        self.raw.u_raw.copy_from_slice(&flat[..k]);
        self.raw.v_raw.copy_from_slice(&flat[k..2 * k]);
        self.raw.b_hidden.copy_from_slice(&flat[2 * k..3 * k]);
        self.raw.b_out = flat[3 * k];
        self.refresh();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_unit_at_zero_is_half() {
        let m = MonotoneMlp::from_effective(&[1.0], &[1.0], vec![0.0], 0.0).unwrap();
        assert!((m.value(0.0) - 0.5).abs() < 1e-15);
        assert!((m.deriv(0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn near_identity_tracks_identity_in_span() {
        let m = MonotoneMlp::near_identity(32, 8.0).unwrap();
        for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0, 4.0] {
            assert!((m.value(x) - x).abs() < 0.05, "x={x}: {}", m.value(x));
            assert!((m.deriv(x) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn positivity_holds_for_any_raw_values() {
        let m = MonotoneMlp::new(vec![-40.0, 3.0], vec![-5.0, 0.1], vec![1.0, -1.0], 2.0).unwrap();
        let mut prev = m.value(-10.0);
        for i in 1..200 {
            let x = -10.0 + 0.1 * i as f64;
            let v = m.value(x);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn shape_errors() {
        assert!(MonotoneMlp::new(vec![], vec![], vec![], 0.0).is_err());
        assert!(MonotoneMlp::new(vec![0.0], vec![0.0, 1.0], vec![0.0], 0.0).is_err());
        let mut m = MonotoneMlp::near_identity(3, 1.0).unwrap();
        assert!(m.set_params(&[0.0; 9]).is_err());
        assert!(m.set_params(&[0.0; 10]).is_ok());
    }
}
