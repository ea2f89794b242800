//! Pointwise increasing functions applied to logits before the softmax.
//!
//! Every variant exposes its value, its input derivative, and (for the
//! parameterized variants) gradient contributions w.r.t. its own parameters.
//! `Power(p)` is only increasing for odd `p`; it exists for the rank
//! experiments, not as a head non-linearity.

mod mlp;
mod plif;

use serde::{Deserialize, Serialize};

pub use mlp::{MlpGrad, MlpParams, MonotoneMlp};
pub use plif::{
    max_grid_error, plif_approx, plif_interpolate, plif_interpolate_fn, ApproxTarget, Plif, PlifApproxReport, PlifGrad,
    PlifGradAccum, PlifParams,
};

use crate::error::{invalid, LabError, Result};
use crate::numkit::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneFn {
    Identity,
    /// `2x - log(1 + eˣ)`.
    Sigsoftmax,
    Power { p: u32 },
    Mlp(MonotoneMlp),
    Plif(Plif),
}

/// Gradient of a scalar objective w.r.t. the function's own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamGrad {
    Mlp(MlpGrad),
    Plif(PlifGrad),
}

impl ParamGrad {
    /// Same order as [`MonotoneFn::params`].
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            ParamGrad::Mlp(g) => g.flatten(),
            ParamGrad::Plif(g) => {
                let mut out = g.v_raw.clone();
                out.push(g.b0);
                out
            }
        }
    }
}

/// Running backward buffers for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub enum GradAccum {
    Mlp(MlpGrad),
    Plif(PlifGradAccum),
}

impl GradAccum {
    pub fn merge(&mut self, other: &GradAccum) {
        match (self, other) {
            (GradAccum::Mlp(a), GradAccum::Mlp(b)) => a.merge(b),
            (GradAccum::Plif(a), GradAccum::Plif(b)) => a.merge(b),
            _ => panic!("merging gradient buffers of different function kinds"),
        }
    }
}

#[inline]
fn sigsoftmax(x: f64) -> f64 {
    if x > 30.0 {
        x - (-x).exp()
    } else {
        2.0 * x - softplus(x)
    }
}

impl MonotoneFn {
    pub fn name(&self) -> &'static str {
        match self {
            MonotoneFn::Identity => "identity",
            MonotoneFn::Sigsoftmax => "sigsoftmax",
            MonotoneFn::Power { .. } => "power",
            MonotoneFn::Mlp(_) => "mlp",
            MonotoneFn::Plif(_) => "plif",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, MonotoneFn::Mlp(_) | MonotoneFn::Plif(_))
    }

    fn check_input(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return invalid(format!("{} evaluated at non-finite input {x}", self.name()));
        }
        if let MonotoneFn::Power { p: 0 } = self {
            return invalid("power must be a positive integer");
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.value(x))
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.derivative(x))
    }

    /// Unchecked value for hot loops.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            MonotoneFn::Identity => x,
            MonotoneFn::Sigsoftmax => sigsoftmax(x),
            MonotoneFn::Power { p } => x.powi(*p as i32),
            MonotoneFn::Mlp(m) => m.value(x),
            MonotoneFn::Plif(p) => p.value(x),
        }
    }

    /// Unchecked input derivative. PLIF returns the slope of the segment that
    /// owns `x` under the floor convention.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            MonotoneFn::Identity => 1.0,
            MonotoneFn::Sigsoftmax => 2.0 - sigmoid(x),
            MonotoneFn::Power { p } => *p as f64 * x.powi(*p as i32 - 1),
            MonotoneFn::Mlp(m) => m.deriv(x),
            MonotoneFn::Plif(p) => p.slope_at(x),
        }
    }

    #[inline]
    pub fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        match self {
            MonotoneFn::Mlp(m) => m.value_and_deriv(x),
            _ => (self.value(x), self.derivative(x)),
        }
    }

    pub fn grad_accumulator(&self) -> Result<GradAccum> {
        match self {
            MonotoneFn::Mlp(m) => Ok(GradAccum::Mlp(MlpGrad::zeros(m.hidden()))),
            MonotoneFn::Plif(p) => Ok(GradAccum::Plif(p.grad_accumulator())),
            other => Err(LabError::NoParameters(other.name())),
        }
    }

    /// Add `upstream · ∂f(x)/∂θ` into `acc`.
    #[inline]
    pub fn accumulate(&self, x: f64, upstream: f64, acc: &mut GradAccum) {
        match (self, acc) {
            (MonotoneFn::Mlp(m), GradAccum::Mlp(g)) => m.accumulate(x, upstream, g),
            (MonotoneFn::Plif(p), GradAccum::Plif(g)) => p.accumulate(x, upstream, g),
            _ => {}
        }
    }

    pub fn finalize(&self, acc: &GradAccum) -> Result<ParamGrad> {
        match (self, acc) {
            (MonotoneFn::Mlp(_), GradAccum::Mlp(g)) => Ok(ParamGrad::Mlp(g.clone())),
            (MonotoneFn::Plif(p), GradAccum::Plif(g)) => Ok(ParamGrad::Plif(p.finalize(g))),
            (f, _) if !f.has_params() => Err(LabError::NoParameters(f.name())),
            _ => invalid("gradient buffer does not match the function"),
        }
    }

    /// Single-sample parameter gradient `upstream · ∂f(x)/∂θ`.
    pub fn param_grad(&self, x: f64, upstream: f64) -> Result<ParamGrad> {
        let mut acc = self.grad_accumulator()?;
        self.check_input(x)?;
        self.accumulate(x, upstream, &mut acc);
        self.finalize(&acc)
    }

    /// Flat parameter vector (empty for parameter-free variants).
    pub fn params(&self) -> Vec<f64> {
        match self {
            MonotoneFn::Mlp(m) => m.params(),
            MonotoneFn::Plif(p) => {
                let mut out = p.v_raw().to_vec();
                out.push(p.b0());
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        match self {
            MonotoneFn::Mlp(m) => m.set_params(flat),
            MonotoneFn::Plif(p) => {
                let (b0, v) = flat
                    .split_last()
                    .ok_or_else(|| LabError::DimensionMismatch("empty PLIF parameter vector".into()))?;
                p.set_params(v, *b0)
            }
            _ if flat.is_empty() => Ok(()),
            other => Err(LabError::NoParameters(other.name())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use std::f64::consts::LN_2;

    fn increasing_variants(rng: &mut Rng) -> Vec<MonotoneFn> {
        vec![
            MonotoneFn::Identity,
            MonotoneFn::Sigsoftmax,
            MonotoneFn::Power { p: 3 },
            MonotoneFn::Mlp(
                MonotoneMlp::new(rng.gaussian_vec(5, 1.0), rng.gaussian_vec(5, 1.0), rng.gaussian_vec(5, 1.0), 0.3)
                    .unwrap(),
            ),
            MonotoneFn::Plif(Plif::new(10.0, rng.gaussian_vec(100, 2.0), 0.1).unwrap()),
        ]
    }

    #[test]
    fn fixed_function_examples() {
        assert!((MonotoneFn::Sigsoftmax.eval(0.0).unwrap() + LN_2).abs() < 1e-15);
        assert_eq!(MonotoneFn::Sigsoftmax.deriv(0.0).unwrap(), 1.5);
        assert_eq!(MonotoneFn::Identity.deriv(-7.0).unwrap(), 1.0);
        assert_eq!(MonotoneFn::Power { p: 2 }.eval(-3.0).unwrap(), 9.0);
        assert_eq!(MonotoneFn::Power { p: 3 }.deriv(2.0).unwrap(), 12.0);
        // stable branch agrees with the direct formula near the switch
        let direct = |x: f64| 2.0 * x - (1.0 + x.exp()).ln();
        for &x in &[29.0, 30.5, 31.0, -40.0, -5.0] {
            assert!((MonotoneFn::Sigsoftmax.value(x) - direct(x)).abs() < 1e-12, "x={x}");
        }
        assert!(MonotoneFn::Sigsoftmax.value(1e6).is_finite());
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(MonotoneFn::Identity.eval(f64::NAN).is_err());
        assert!(MonotoneFn::Sigsoftmax.deriv(f64::INFINITY).is_err());
        assert!(MonotoneFn::Power { p: 0 }.eval(1.0).is_err());
    }

    #[test]
    fn parameter_free_variants_have_no_gradient() {
        for f in [MonotoneFn::Identity, MonotoneFn::Sigsoftmax, MonotoneFn::Power { p: 2 }] {
            assert!(matches!(f.param_grad(0.5, 1.0), Err(LabError::NoParameters(_))));
        }
    }

    #[test]
    fn sigsoftmax_derivative_in_one_two() {
        let mut rng = Rng::new(11);
        for _ in 0..1000 {
            let x = rng.uniform_in(-50.0, 50.0);
            let d = MonotoneFn::Sigsoftmax.derivative(x);
            assert!(d > 1.0 - 1e-15 && d < 2.0 + 1e-15);
        }
    }

    #[test]
    fn strictly_increasing_on_random_pairs() {
        let mut rng = Rng::new(2024);
        for f in increasing_variants(&mut rng) {
            for _ in 0..10_000 {
                let a = rng.uniform_in(-15.0, 15.0);
                let b = rng.uniform_in(-15.0, 15.0);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                if hi - lo < 1e-9 {
                    continue;
                }
                assert!(f.value(lo) < f.value(hi), "{} not increasing on ({lo}, {hi})", f.name());
            }
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = Rng::new(77);
        let h = 1e-5;
        for f in increasing_variants(&mut rng) {
            for _ in 0..200 {
                let mut x = rng.uniform_in(-8.0, 8.0);
                if let MonotoneFn::Plif(p) = &f {
                    // keep the stencil inside one segment
                    let i = p.segment(x);
                    x = x.clamp(p.knot(i) + 2.0 * h, p.knot(i + 1) - 2.0 * h);
                }
                let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
                let an = f.derivative(x);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{} at {x}: {fd} vs {an}", f.name());
            }
        }
    }

    #[test]
    fn param_grad_matches_central_differences() {
        let h = 1e-5;
        for draw in 0..100u64 {
            let mut rng = Rng::new(500 + draw);
            let fns = [
                MonotoneFn::Mlp(
                    MonotoneMlp::new(rng.gaussian_vec(3, 1.0), rng.gaussian_vec(3, 1.0), rng.gaussian_vec(3, 1.0), rng.normal())
                        .unwrap(),
                ),
                MonotoneFn::Plif(Plif::new(2.0, rng.gaussian_vec(6, 1.0), rng.normal()).unwrap()),
            ];
            for f in fns {
                let x = rng.uniform_in(-3.0, 3.0);
                let up = rng.normal();
                let g = f.param_grad(x, up).unwrap().flatten();
                let theta = f.params();
                assert_eq!(g.len(), theta.len());
                for j in 0..theta.len() {
                    let mut fp = f.clone();
                    let mut fm = f.clone();
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j] += h;
                    tm[j] -= h;
                    fp.set_params(&tp).unwrap();
                    fm.set_params(&tm).unwrap();
                    let fd = up * (fp.value(x) - fm.value(x)) / (2.0 * h);
                    assert!((fd - g[j]).abs() <= 1e-6 * fd.abs().max(1.0), "{} param {j}: {fd} vs {}", f.name(), g[j]);
                }
            }
        }
    }

    #[test]
    fn serde_tags() {
        let f = MonotoneFn::Power { p: 3 };
        assert_eq!(serde_json::to_string(&f).unwrap(), r#"{"kind":"power","p":3}"#);
        let g: MonotoneFn = serde_json::from_str(r#"{"kind":"plif","T":2.0,"K":2,"v_raw":[0.0,1.0],"b0":0.5}"#).unwrap();
        assert_eq!(g.name(), "plif");
        let back: MonotoneFn = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
