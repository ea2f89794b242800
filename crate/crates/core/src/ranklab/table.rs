use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numkit::Matrix;

/// How a [`ValueTableFn`] treats inputs between table entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableMode {
    /// `f(b_i) = c_i` for inputs within `tol` of a table entry, identity
    /// elsewhere.
    Lookup { tol: f64 },
    /// Linear interpolation between consecutive anchors, identity outside
    /// `[b_1, b_T]`.
    Interpolate,
}

/// A pointwise function given by a table `b_1 < … < b_T ↦ c_1 … c_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTableFn {
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    mode: TableMode,
}

impl ValueTableFn {
    pub fn new(inputs: Vec<f64>, outputs: Vec<f64>, mode: TableMode) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return invalid(format!(
                "value table needs matching non-empty inputs and outputs ({} vs {})",
                inputs.len(),
                outputs.len()
            ));
        }
        if inputs.iter().chain(&outputs).any(|x| !x.is_finite()) {
            return invalid("value table entries must be finite");
        }
        if inputs.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("value table inputs must be strictly increasing");
        }
        Ok(ValueTableFn { inputs, outputs, mode })
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    /// True when consecutive outputs are strictly increasing.
    pub fn is_increasing(&self) -> bool {
        self.outputs.windows(2).all(|w| w[0] < w[1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.inputs;
        let c = &self.outputs;
        match self.mode {
            TableMode::Lookup { tol } => {
                let i = b.partition_point(|&v| v < x);
                let near = [i.checked_sub(1), Some(i)]
                    .into_iter()
                    .flatten()
                    .filter(|&k| k < b.len())
                    .min_by(|&p, &q| (b[p] - x).abs().total_cmp(&(b[q] - x).abs()));
                match near {
                    Some(k) if (b[k] - x).abs() <= tol => c[k],
                    _ => x,
                }
            }
            TableMode::Interpolate => {
                if x < b[0] || x > b[b.len() - 1] {
                    return x;
                }
                let i = b.partition_point(|&v| v <= x);
                if i == 0 {
                    return c[0];
                }
                if i == b.len() {
                    return c[b.len() - 1];
                }
                let t = (x - b[i - 1]) / (b[i] - b[i - 1]);
                c[i - 1] + t * (c[i] - c[i - 1])
            }
        }
    }

    pub fn apply(&self, a: &Matrix) -> Matrix {
        a.map(|x| self.eval(x))
    }
}

/// Sorted distinct values of `values`; entries closer than `tol` merge into
/// the first of the run.
pub fn distinct_values(values: &[f64], tol: f64) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&last) if x - last <= tol => {}
            _ => out.push(x),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_hits_and_misses() {
        let f = ValueTableFn::new(vec![1.0, 2.0, 4.0], vec![10.0, 20.0, 40.0], TableMode::Lookup { tol: 1e-9 }).unwrap();
        assert_eq!(f.eval(2.0), 20.0);
        assert_eq!(f.eval(4.0 + 1e-12), 40.0);
        assert_eq!(f.eval(3.0), 3.0);
        assert_eq!(f.eval(-7.0), -7.0);
    }

    #[test]
    fn interpolation_with_identity_tails() {
        let f = ValueTableFn::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0], TableMode::Interpolate).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(2.0), 2.5);
        assert_eq!(f.eval(3.0), 3.0);
        assert_eq!(f.eval(5.0), 5.0);
        assert_eq!(f.eval(-1.0), -1.0);
        assert!(f.is_increasing());
    }

    #[test]
    fn validation_and_distinct() {
        assert!(ValueTableFn::new(vec![1.0, 1.0], vec![0.0, 1.0], TableMode::Interpolate).is_err());
        assert!(ValueTableFn::new(vec![], vec![], TableMode::Interpolate).is_err());
        assert_eq!(distinct_values(&[3.0, 1.0, 1.0 + 1e-15, 2.0, 3.0], 1e-12), vec![1.0, 2.0, 3.0]);
    }
}
