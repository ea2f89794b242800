//! Probability heads over a vocabulary of `M` words with `d`-dimensional
//! embeddings.
//!
//! * Linear-Softmax: `Q_h = softmax(W h)`.
//! * LMS: `Q_h = softmax(f(W h))` for a pointwise increasing `f`.
//! * MoS: `Q_h = Σ_k π_k softmax(W tanh(U_k h))` with priors `π = softmax(V h)`.
//!
//! Everything is computed in the log domain and probabilities are only
//! materialized at the boundary. Gradients are derived by hand; see
//! [`HeadModel::backward_into`].
//!
//! Stacking the log-probabilities of all contexts gives the matrix
//! `A_Q = f(W Hᵀ) − e_M logZᵀ`. For the linear head it has rank at most
//! `d + 1`, which is the bottleneck the monotone heads are meant to break.
//! Fitting `A_Q` by mean-squared error on log-probabilities puts as much
//! weight on a `10⁻⁹` tail entry as on the mode, which is why training uses
//! cross-entropy instead.

mod grad;
mod loss;

use serde::{Deserialize, Serialize};

pub use grad::{HeadGrad, HeadGradAccum, HeadScratch, MosGrad};
pub use loss::{cross_entropy, kl_divergence, mse_logprob};

use crate::error::{invalid, LabError, Result};
use crate::monofn::MonotoneFn;
use crate::numkit::{dot, lse_unchecked, Matrix, Rng};

/// Parameters of a mixture of `K` softmaxes sharing the word matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosParams {
    /// `K × d`, row `k` is the prior logit direction `v_k`.
    pub prior: Matrix,
    /// `K` square `d × d` projections `U_k`.
    pub proj: Vec<Matrix>,
}

impl MosParams {
    pub fn random(components: usize, dim: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        if components == 0 || dim == 0 {
            return invalid("MoS needs at least one component and a positive dimension");
        }
        let prior = rng.gaussian_matrix(components, dim, scale);
        let proj = (0..components).map(|_| rng.gaussian_matrix(dim, dim, scale)).collect();
        Ok(MosParams { prior, proj })
    }

    pub fn components(&self) -> usize {
        self.proj.len()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let k = self.components();
        if k == 0 {
            return invalid("MoS needs at least one component");
        }
        if self.prior.shape() != (k, dim) {
            return Err(LabError::DimensionMismatch(format!(
                "MoS prior is {:?}, expected ({k}, {dim})",
                self.prior.shape()
            )));
        }
        if let Some(u) = self.proj.iter().find(|u| u.shape() != (dim, dim)) {
            return Err(LabError::DimensionMismatch(format!(
                "MoS projection is {:?}, expected ({dim}, {dim})",
                u.shape()
            )));
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        self.prior.data().len() + self.proj.iter().map(|u| u.data().len()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum HeadKind {
    LinearSoftmax,
    Lms { f: MonotoneFn },
    Mos(MosParams),
}

/// A head together with its word embeddings `W` (`M × d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub kind: HeadKind,
    pub words: Matrix,
}

impl HeadModel {
    pub fn new(kind: HeadKind, words: Matrix) -> Result<Self> {
        if words.rows() == 0 || words.cols() == 0 {
            return invalid("word matrix must be non-empty");
        }
        if let HeadKind::Mos(p) = &kind {
            p.validate(words.cols())?;
        }
        Ok(HeadModel { kind, words })
    }

    pub fn linear(words: Matrix) -> Result<Self> {
        Self::new(HeadKind::LinearSoftmax, words)
    }

    pub fn lms(words: Matrix, f: MonotoneFn) -> Result<Self> {
        Self::new(HeadKind::Lms { f }, words)
    }

    pub fn mos(words: Matrix, params: MosParams) -> Result<Self> {
        Self::new(HeadKind::Mos(params), words)
    }

    pub fn name(&self) -> String {
        match &self.kind {
            HeadKind::LinearSoftmax => "linear".into(),
            HeadKind::Lms { f } => format!("lms-{}", f.name()),
            HeadKind::Mos(p) => format!("mos-{}", p.components()),
        }
    }

    pub fn vocab(&self) -> usize {
        self.words.rows()
    }

    pub fn dim(&self) -> usize {
        self.words.cols()
    }

    /// The monotone function applied to logits, if any.
    fn monotone(&self) -> Option<&MonotoneFn> {
        match &self.kind {
            HeadKind::Lms { f } if !matches!(f, MonotoneFn::Identity) => Some(f),
            _ => None,
        }
    }

    fn check_context(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "context has dimension {}, head expects {}",
                h.len(),
                self.dim()
            )));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return invalid("context vector must be finite");
        }
        Ok(())
    }

    /// `out = W v`.
    fn word_logits(&self, v: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(self.words.rows_iter()) {
            *o = dot(w, v);
        }
    }

    /// Log-probabilities into `scratch.logq`, keeping the intermediates the
    /// backward pass needs.
    pub(crate) fn forward(&self, h: &[f64], s: &mut HeadScratch) {
        match &self.kind {
            HeadKind::LinearSoftmax | HeadKind::Lms { .. } => {
                self.word_logits(h, &mut s.z);
                match self.monotone() {
                    None => s.y.copy_from_slice(&s.z),
                    Some(f) => {
                        for i in 0..s.z.len() {
                            let (v, d) = f.value_and_derivative(s.z[i]);
                            s.y[i] = v;
                            s.fprime[i] = d;
                        }
                    }
                }
                let lse = lse_unchecked(&s.y);
                s.log_z = lse;
                for (l, y) in s.logq.iter_mut().zip(&s.y) {
                    *l = y - lse;
                }
            }
            HeadKind::Mos(p) => {
                let k = p.components();
                for (a, v) in s.prior.iter_mut().zip(p.prior.rows_iter()) {
                    *a = dot(v, h);
                }
                let lse = lse_unchecked(&s.prior);
                s.prior.iter_mut().for_each(|a| *a -= lse);
                for c in 0..k {
                    let comp = &mut s.mos[c];
                    for (g, u) in comp.g.iter_mut().zip(p.proj[c].rows_iter()) {
                        *g = dot(u, h).tanh();
                    }
                    for (o, w) in comp.logq.iter_mut().zip(self.words.rows_iter()) {
                        *o = dot(w, &comp.g);
                    }
                    let lse = lse_unchecked(&comp.logq);
                    comp.logq.iter_mut().for_each(|x| *x -= lse);
                }
                for i in 0..self.vocab() {
                    let mut m = f64::NEG_INFINITY;
                    for c in 0..k {
                        m = m.max(s.prior[c] + s.mos[c].logq[i]);
                    }
                    let sum: f64 = (0..k).map(|c| (s.prior[c] + s.mos[c].logq[i] - m).exp()).sum();
                    s.logq[i] = m + sum.ln();
                }
                s.log_z = 0.0;
            }
        }
    }

    pub fn log_probs(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_context(h)?;
        let mut s = HeadScratch::new(self);
        self.forward(h, &mut s);
        Ok(s.logq)
    }

    pub fn probs(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut q = self.log_probs(h)?;
        q.iter_mut().for_each(|x| *x = x.exp());
        Ok(q)
    }

    /// Mixture priors `π_k(h)`; `[1.0]` for non-mixture heads.
    pub fn mixture_priors(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_context(h)?;
        match &self.kind {
            HeadKind::Mos(_) => {
                let mut s = HeadScratch::new(self);
                self.forward(h, &mut s);
                Ok(s.prior.iter().map(|a| a.exp()).collect())
            }
            _ => Ok(vec![1.0]),
        }
    }

    /// `N × M` table of probabilities, one row per context row of `contexts`.
    pub fn prob_table(&self, contexts: &Matrix) -> Result<Matrix> {
        let (a, _) = self.log_prob_matrix(contexts)?;
        Ok(a.transpose().map(f64::exp))
    }

    /// `M × N` log-probability matrix and the log-partition vector.
    ///
    /// For the linear and LMS heads `A = f(W Hᵀ) − e_M logZᵀ`. A mixture is
    /// already normalized component by component, so its `logZ` is zero.
    pub fn log_prob_matrix(&self, contexts: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        if contexts.cols() != self.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "contexts have dimension {}, head expects {}",
                contexts.cols(),
                self.dim()
            )));
        }
        let (m, n) = (self.vocab(), contexts.rows());
        let mut a = Matrix::zeros(m, n);
        let mut log_z = vec![0.0; n];
        let mut s = HeadScratch::new(self);
        for j in 0..n {
            let h = contexts.row(j);
            self.check_context(h)?;
            self.forward(h, &mut s);
            for i in 0..m {
                a[(i, j)] = s.logq[i];
            }
            log_z[j] = s.log_z;
        }
        Ok((a, log_z))
    }

    /// Single-context gradient of `cross_entropy(p_star, Q_h)` w.r.t. every
    /// parameter group and the context itself.
    pub fn grad_context(&self, h: &[f64], p_star: &[f64]) -> Result<HeadGrad> {
        self.check_context(h)?;
        self.check_target(p_star)?;
        let mut s = HeadScratch::new(self);
        let mut acc = HeadGradAccum::new(self);
        let mut dh = vec![0.0; self.dim()];
        self.backward_into(h, p_star, 1.0, &mut dh, &mut acc, &mut s);
        let mut g = acc.finalize(self)?;
        g.context = dh;
        Ok(g)
    }

    pub(crate) fn check_target(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.vocab() {
            return Err(LabError::DimensionMismatch(format!(
                "target has {} entries, vocabulary is {}",
                p.len(),
                self.vocab()
            )));
        }
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("target probabilities must be finite and non-negative");
        }
        Ok(())
    }

    /// Flat trainable parameters: `W` row-major, then the monotone function's
    /// parameters (LMS) or the MoS prior followed by each `U_k` (MoS).
    pub fn params(&self) -> Vec<f64> {
        let mut out = self.words.data().to_vec();
        match &self.kind {
            HeadKind::LinearSoftmax => {}
            HeadKind::Lms { f } => out.extend(f.params()),
            HeadKind::Mos(p) => {
                out.extend(p.prior.data());
                for u in &p.proj {
                    out.extend(u.data());
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.words.data().len()
            + match &self.kind {
                HeadKind::LinearSoftmax => 0,
                HeadKind::Lms { f } => f.params().len(),
                HeadKind::Mos(p) => p.param_count(),
            }
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(LabError::DimensionMismatch(format!(
                "head has {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let nw = self.words.data().len();
        self.words.data_mut().copy_from_slice(&flat[..nw]);
        let rest = &flat[nw..];
        match &mut self.kind {
            HeadKind::LinearSoftmax => {}
            HeadKind::Lms { f } => f.set_params(rest)?,
            HeadKind::Mos(p) => {
                let np = p.prior.data().len();
                p.prior.data_mut().copy_from_slice(&rest[..np]);
                let mut off = np;
                for u in p.proj.iter_mut() {
                    let n = u.data().len();
                    u.data_mut().copy_from_slice(&rest[off..off + n]);
                    off += n;
                }
            }
        }
        Ok(())
    }
}
