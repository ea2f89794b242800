//! Piecewise Linear Increasing Functions on equally spaced knots.
//!
//! `K` segments split `[-T, T]` at knots `l_i = -T + 2T·i/K`. Segment `i` has
//! slope `s_i = softplus(v_i) > 0`, and continuity fixes every intercept from
//! `b0` and the running sum of slopes:
//!
//! ```text
//! f(x) = s_i (x - l_i) + b0 + s_0 l_0 + (2T/K) Σ_{j<i} s_j,   i = segment(x)
//! ```
//!
//! The per-segment table `(s_i, f(l_i))` is cached, so a forward pass is one
//! index computation and one table lookup regardless of `K`. Inputs outside
//! `[-T, T]` continue the boundary segments linearly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::numkit::{sigmoid, softplus, softplus_inv};

/// Serialized form: `{T, K, v_raw, b0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlifParams {
    #[serde(rename = "T")]
    pub range: f64,
    #[serde(rename = "K")]
    pub knots: usize,
    pub v_raw: Vec<f64>,
    pub b0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlifParams", into = "PlifParams")]
pub struct Plif {
    range: f64,
    v_raw: Vec<f64>,
    b0: f64,
    step: f64,
    inv_step: f64,
    // (s_i, f(l_i)) per segment
    table: Vec<[f64; 2]>,
}

impl TryFrom<PlifParams> for Plif {
    type Error = LabError;

    fn try_from(p: PlifParams) -> Result<Self> {
        if p.v_raw.len() != p.knots {
            return Err(LabError::DimensionMismatch(format!(
                "PLIF with K = {} needs {} slopes, got {}",
                p.knots,
                p.knots,
                p.v_raw.len()
            )));
        }
        Plif::new(p.range, p.v_raw, p.b0)
    }
}

impl From<Plif> for PlifParams {
    fn from(p: Plif) -> Self {
        PlifParams { range: p.range, knots: p.v_raw.len(), v_raw: p.v_raw, b0: p.b0 }
    }
}

impl Plif {
    pub fn new(range: f64, v_raw: Vec<f64>, b0: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return invalid(format!("PLIF half-range must be positive, got {range}"));
        }
        if v_raw.is_empty() {
            return invalid("PLIF needs at least one segment");
        }
        if !b0.is_finite() || v_raw.iter().any(|v| !v.is_finite()) {
            return invalid("PLIF parameters must be finite");
        }
        let k = v_raw.len();
        let step = 2.0 * range / k as f64;
        let mut plif = Plif {
            range,
            v_raw,
            b0,
            step,
            inv_step: k as f64 / (2.0 * range),
            table: vec![[0.0; 2]; k],
        };
        plif.refresh();
        Ok(plif)
    }

    /// The identity map on `[-T, T]` (all slopes 1, zero bias).
    pub fn identity(range: f64, knots: usize) -> Result<Self> {
        Self::new(range, vec![softplus_inv(1.0); knots], 0.0)
    }

    /// Build from effective (positive) slopes.
    pub fn from_slopes(range: f64, slopes: &[f64], b0: f64) -> Result<Self> {
        if let Some(s) = slopes.iter().find(|s| !(**s > 0.0)) {
            return invalid(format!("PLIF slopes must be positive, got {s}"));
        }
        Self::new(range, slopes.iter().map(|&s| softplus_inv(s)).collect(), b0)
    }

    /// Recompute the slope/prefix cache from `v_raw` and `b0`.
    fn refresh(&mut self) {
        let l0 = -self.range;
        let s0 = softplus(self.v_raw[0]);
        let mut base = self.b0 + s0 * l0;
        let mut prefix = 0.0;
        for (slot, &v) in self.table.iter_mut().zip(&self.v_raw) {
            let s = softplus(v);
            *slot = [s, base];
            prefix += s;
            base = self.b0 + s0 * l0 + self.step * prefix;
        }
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn knots(&self) -> usize {
        self.v_raw.len()
    }

    pub fn v_raw(&self) -> &[f64] {
        &self.v_raw
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.table.iter().map(|e| e[0])
    }

    pub fn set_params(&mut self, v_raw: &[f64], b0: f64) -> Result<()> {
        if v_raw.len() != self.v_raw.len() {
            return Err(LabError::DimensionMismatch(format!(
                "expected {} PLIF slopes, got {}",
                self.v_raw.len(),
                v_raw.len()
            )));
        }
        self.v_raw.copy_from_slice(v_raw);
        self.b0 = b0;
        self.refresh();
        Ok(())
    }

    /// Knot `l_i`.
    #[inline]
    pub fn knot(&self, i: usize) -> f64 {
        -self.range + self.step * i as f64
    }

    /// Segment index `floor((x + T)·K/(2T))` clamped to `[0, K-1]`.
    #[inline]
    pub fn segment(&self, x: f64) -> usize {
        let t = (x + self.range) * self.inv_step;
        let last = self.table.len() - 1;
        if t >= last as f64 {
            last
        } else if t > 0.0 {
            t as usize
        } else {
            0
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let [s, base] = self.table[i];
        s * (x - self.knot(i)) + base
    }

    #[inline]
    pub fn slope_at(&self, x: f64) -> f64 {
        self.table[self.segment(x)][0]
    }

    pub fn grad_accumulator(&self) -> PlifGradAccum {
        PlifGradAccum { slots: vec![[0.0; 2]; self.knots()], b0: 0.0 }
    }

    /// O(1) backward for one sample: the local slope slot of the segment and
    /// the prefix slot just before it.
    #[inline]
    pub fn accumulate(&self, x: f64, upstream: f64, acc: &mut PlifGradAccum) {
        let i = self.segment(x);
        acc.slots[i][0] += upstream * (x - self.knot(i));
        if i > 0 {
            acc.slots[i - 1][1] += upstream;
        }
        acc.b0 += upstream;
    }

    /// Turn slot accumulations into gradients w.r.t. `v_raw` and `b0` with a
    /// single reverse suffix sum. O(K).
    pub fn finalize(&self, acc: &PlifGradAccum) -> PlifGrad {
        let k = self.knots();
        let mut v_raw = vec![0.0; k];
        let mut suffix = 0.0;
        for j in (0..k).rev() {
            suffix += acc.slots[j][1];
            let mut ds = acc.slots[j][0] + self.step * suffix;
            if j == 0 {
                // the s_0·l_0 term of every intercept
                ds += self.knot(0) * acc.b0;
            }
            v_raw[j] = ds * sigmoid(self.v_raw[j]);
        }
        PlifGrad { v_raw, b0: acc.b0 }
    }
}

/// Per-sample backward buffers: `[local, prefix]` per segment plus the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PlifGradAccum {
    slots: Vec<[f64; 2]>,
    b0: f64,
}

impl PlifGradAccum {
    pub fn merge(&mut self, other: &PlifGradAccum) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            a[0] += b[0];
            a[1] += b[1];
        }
        self.b0 += other.b0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlifGrad {
    pub v_raw: Vec<f64>,
    pub b0: f64,
}

/// PLIF that linearly interpolates `samples` taken at the `K + 1` knots of
/// `[-T, T]`. The `y` values must be strictly increasing.
pub fn plif_interpolate(samples: &[(f64, f64)], range: f64, knots: usize) -> Result<Plif> {
    if knots == 0 || !(range > 0.0) {
        return invalid("interpolation needs K >= 1 and T > 0");
    }
    if samples.len() != knots + 1 {
        return Err(LabError::DimensionMismatch(format!(
            "need {} knot samples, got {}",
            knots + 1,
            samples.len()
        )));
    }
    let step = 2.0 * range / knots as f64;
    for (i, &(x, _)) in samples.iter().enumerate() {
        let l = -range + step * i as f64;
        if (x - l).abs() > 1e-9 * range.max(1.0) {
            return invalid(format!("sample {i} at x = {x} is not on knot {l}"));
        }
    }
    let mut slopes = Vec::with_capacity(knots);
    for (i, w) in samples.windows(2).enumerate() {
        let dy = w[1].1 - w[0].1;
        if !(dy > 0.0) {
            return invalid(format!("samples must be strictly increasing (knots {i} and {})", i + 1));
        }
        slopes.push(dy / step);
    }
    let b0 = samples[0].1 - slopes[0] * (-range);
    Plif::from_slopes(range, &slopes, b0)
}

/// Sample `h` at the knots and interpolate.
pub fn plif_interpolate_fn(h: impl Fn(f64) -> f64, range: f64, knots: usize) -> Result<Plif> {
    let step = 2.0 * range / knots as f64;
    let samples: Vec<(f64, f64)> = (0..=knots)
        .map(|i| {
            let x = -range + step * i as f64;
            (x, h(x))
        })
        .collect();
    plif_interpolate(&samples, range, knots)
}

/// Largest `|plif(x) − h(x)|` over `points` equally spaced points of `[-T, T]`.
pub fn max_grid_error(plif: &Plif, h: impl Fn(f64) -> f64, points: usize) -> f64 {
    let t = plif.range();
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let x = -t + 2.0 * t * i as f64 / (n - 1) as f64;
            (plif.value(x) - h(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Increasing targets for interpolation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxTarget {
    /// `tanh(x) + 0.1x`.
    TanhPlusLinear,
    Exp,
    /// `x³ + x`.
    CubicPlusLinear,
    Sigsoftmax,
}

impl ApproxTarget {
    pub const NAMES: [&'static str; 4] = ["tanh-plus-linear", "exp", "cubic-plus-linear", "sigsoftmax"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tanh-plus-linear" => Ok(Self::TanhPlusLinear),
            "exp" => Ok(Self::Exp),
            "cubic-plus-linear" => Ok(Self::CubicPlusLinear),
            "sigsoftmax" => Ok(Self::Sigsoftmax),
            _ => invalid(format!("unknown target `{name}`; valid targets: {}", Self::NAMES.join(", "))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TanhPlusLinear => Self::NAMES[0],
            Self::Exp => Self::NAMES[1],
            Self::CubicPlusLinear => Self::NAMES[2],
            Self::Sigsoftmax => Self::NAMES[3],
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::TanhPlusLinear => x.tanh() + 0.1 * x,
            Self::Exp => x.exp(),
            Self::CubicPlusLinear => x * x * x + x,
            Self::Sigsoftmax => crate::monofn::MonotoneFn::Sigsoftmax.value(x),
        }
    }

    /// `max |h′|` on `[-T, T]`.
    pub fn slope_bound(self, range: f64) -> f64 {
        match self {
            Self::TanhPlusLinear => 1.1,
            Self::Exp => range.exp(),
            Self::CubicPlusLinear => 3.0 * range * range + 1.0,
            Self::Sigsoftmax => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlifApproxReport {
    pub target: ApproxTarget,
    pub range: f64,
    pub knots: usize,
    pub grid_points: usize,
    pub slope_bound: f64,
    /// `4 R T / K`.
    pub error_bound: f64,
    pub max_error: f64,
}

/// Interpolates `target` at the knots and measures the error on a grid.
pub fn plif_approx(target: ApproxTarget, range: f64, knots: usize, grid_points: usize) -> Result<PlifApproxReport> {
    if grid_points < 2 {
        return invalid("grid needs at least two points");
    }
    let plif = plif_interpolate_fn(|x| target.eval(x), range, knots)?;
    let slope_bound = target.slope_bound(range);
    Ok(PlifApproxReport {
        target,
        range,
        knots,
        grid_points,
        slope_bound,
        error_bound: 4.0 * slope_bound * range / knots as f64,
        max_error: max_grid_error(&plif, |x| target.eval(x), grid_points),
    })
}
