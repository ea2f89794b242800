use serde::{Deserialize, Serialize};

use super::{HeadKind, HeadModel};
use crate::error::Result;
use crate::monofn::{GradAccum, ParamGrad};
use crate::numkit::Matrix;

/// Per-thread buffers reused across contexts.
#[derive(Debug, Clone)]
pub struct HeadScratch {
    pub(crate) z: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) fprime: Vec<f64>,
    pub(crate) logq: Vec<f64>,
    pub(crate) log_z: f64,
    pub(crate) prior: Vec<f64>,
    pub(crate) mos: Vec<MosComponent>,
    dz: Vec<f64>,
    dpre: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct MosComponent {
    pub(crate) g: Vec<f64>,
    pub(crate) logq: Vec<f64>,
}

impl HeadScratch {
    pub fn new(head: &HeadModel) -> Self {
        let (m, d) = (head.vocab(), head.dim());
        let k = match &head.kind {
            HeadKind::Mos(p) => p.components(),
            _ => 0,
        };
        HeadScratch {
            z: vec![0.0; m],
            y: vec![0.0; m],
            fprime: vec![1.0; m],
            logq: vec![0.0; m],
            log_z: 0.0,
            prior: vec![0.0; k],
            mos: (0..k).map(|_| MosComponent { g: vec![0.0; d], logq: vec![0.0; m] }).collect(),
            dz: vec![0.0; m],
            dpre: vec![0.0; d],
        }
    }

    /// Log-probabilities from the last forward pass.
    pub fn log_probs(&self) -> &[f64] {
        &self.logq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosGrad {
    pub prior: Matrix,
    pub proj: Vec<Matrix>,
}

impl MosGrad {
    fn merge(&mut self, other: &MosGrad) {
        add_into(self.prior.data_mut(), other.prior.data());
        for (a, b) in self.proj.iter_mut().zip(&other.proj) {
            add_into(a.data_mut(), b.data());
        }
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Running gradient of a weighted sum of per-context losses.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradAccum {
    pub loss: f64,
    pub words: Matrix,
    pub f: Option<GradAccum>,
    pub mos: Option<MosGrad>,
}

impl HeadGradAccum {
    pub fn new(head: &HeadModel) -> Self {
        let (m, d) = (head.vocab(), head.dim());
        let f = match head.monotone() {
            Some(f) if f.has_params() => f.grad_accumulator().ok(),
            _ => None,
        };
        let mos = match &head.kind {
            HeadKind::Mos(p) => Some(MosGrad {
                prior: Matrix::zeros(p.components(), d),
                proj: vec![Matrix::zeros(d, d); p.components()],
            }),
            _ => None,
        };
        HeadGradAccum { loss: 0.0, words: Matrix::zeros(m, d), f, mos }
    }

    pub fn merge(&mut self, other: &HeadGradAccum) {
        self.loss += other.loss;
        add_into(self.words.data_mut(), other.words.data());
        if let (Some(a), Some(b)) = (&mut self.f, &other.f) {
            a.merge(b);
        }
        if let (Some(a), Some(b)) = (&mut self.mos, &other.mos) {
            a.merge(b);
        }
    }

    pub fn finalize(&self, head: &HeadModel) -> Result<HeadGrad> {
        let f = match (head.monotone(), &self.f) {
            (Some(f), Some(acc)) => Some(f.finalize(acc)?),
            _ => None,
        };
        Ok(HeadGrad {
            loss: self.loss,
            context: Vec::new(),
            words: self.words.clone(),
            f,
            mos: self.mos.clone(),
        })
    }

    /// Gradient in the order of [`HeadModel::params`].
    pub fn flatten_into(&self, head: &HeadModel, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        out.extend(self.words.data());
        if let (Some(f), Some(acc)) = (head.monotone(), &self.f) {
            out.extend(f.finalize(acc)?.flatten());
        }
        if let Some(g) = &self.mos {
            out.extend(g.prior.data());
            for u in &g.proj {
                out.extend(u.data());
            }
        }
        Ok(())
    }
}

/// Gradient record for one or more contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadGrad {
    pub loss: f64,
    /// `∂L/∂h`; filled by single-context calls only.
    pub context: Vec<f64>,
    pub words: Matrix,
    pub f: Option<ParamGrad>,
    pub mos: Option<MosGrad>,
}

impl HeadGrad {
    /// Head-parameter gradient in the order of [`HeadModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.words.data().to_vec();
        if let Some(f) = &self.f {
            out.extend(f.flatten());
        }
        if let Some(g) = &self.mos {
            out.extend(g.prior.data());
            for u in &g.proj {
                out.extend(u.data());
            }
        }
        out
    }
}

impl HeadModel {
    /// Adds `weight · ∂L/∂θ` for `L = −Σ_i p_i log Q_i(h)` into `acc`, writes
    /// `weight · ∂L/∂h` into `dh`, and returns the weighted loss.
    ///
    /// `p` need not be normalized. With `S = Σ p_i`:
    ///
    /// * linear / LMS: `∂L/∂y = S·Q − p`, `∂L/∂z = f′(z) ⊙ ∂L/∂y`,
    ///   `∂L/∂h = Wᵀ ∂L/∂z`, `∂L/∂w_i = (∂L/∂z_i) h`.
    /// * MoS: with responsibilities `r_ik = π_k q_ki / Q_i` and
    ///   `ρ_k = Σ_i p_i r_ik`, the prior logits get `S π_k − ρ_k` and the
    ///   component logits get `ρ_k q_ki − p_i r_ik`; the rest is the chain rule
    ///   through `tanh` and the two linear maps.
    ///
    /// Terms with `p_i = 0` contribute nothing; a zero probability under a
    /// positive target makes the loss `+∞`.
    pub fn backward_into(
        &self,
        h: &[f64],
        p: &[f64],
        weight: f64,
        dh: &mut [f64],
        acc: &mut HeadGradAccum,
        s: &mut HeadScratch,
    ) -> f64 {
        self.forward(h, s);
        let mut loss = 0.0;
        let mut total = 0.0;
        for (&pi, &lq) in p.iter().zip(&s.logq) {
            if pi > 0.0 {
                loss -= pi * lq;
            }
            total += pi;
        }
        let loss = weight * loss;
        acc.loss += loss;
        dh.iter_mut().for_each(|x| *x = 0.0);

        match &self.kind {
            HeadKind::LinearSoftmax | HeadKind::Lms { .. } => {
                let f = self.monotone();
                for i in 0..p.len() {
                    let dy = weight * (total * s.logq[i].exp() - p[i]);
                    if let (Some(f), Some(fa)) = (f, acc.f.as_mut()) {
                        f.accumulate(s.z[i], dy, fa);
                    }
                    s.dz[i] = if f.is_some() { s.fprime[i] * dy } else { dy };
                }
                for i in 0..p.len() {
                    let dz = s.dz[i];
                    if dz == 0.0 {
                        continue;
                    }
                    let w = self.words.row(i);
                    for (o, wk) in dh.iter_mut().zip(w) {
                        *o += dz * wk;
                    }
                    for (o, hk) in acc.words.row_mut(i).iter_mut().zip(h) {
                        *o += dz * hk;
                    }
                }
            }
            HeadKind::Mos(params) => {
                let mg = acc.mos.as_mut().expect("MoS accumulator");
                let k = params.components();
                for c in 0..k {
                    // ρ_c and the component-logit gradient, both scaled by weight
                    let mut rho = 0.0;
                    for i in 0..p.len() {
                        if p[i] > 0.0 {
                            let r = (s.prior[c] + s.mos[c].logq[i] - s.logq[i]).exp();
                            s.dz[i] = p[i] * r;
                            rho += p[i] * r;
                        } else {
                            s.dz[i] = 0.0;
                        }
                    }
                    for i in 0..p.len() {
                        s.dz[i] = weight * (rho * s.mos[c].logq[i].exp() - s.dz[i]);
                    }
                    // prior logits
                    let da = weight * (total * s.prior[c].exp() - rho);
                    for (o, vk) in dh.iter_mut().zip(params.prior.row(c)) {
                        *o += da * vk;
                    }
                    for (o, hk) in mg.prior.row_mut(c).iter_mut().zip(h) {
                        *o += da * hk;
                    }
                    // W and the tanh pre-activation
                    let g = &s.mos[c].g;
                    s.dpre.iter_mut().for_each(|x| *x = 0.0);
                    for i in 0..p.len() {
                        let dz = s.dz[i];
                        let w = self.words.row(i);
                        for (o, wk) in s.dpre.iter_mut().zip(w) {
                            *o += dz * wk;
                        }
                        for (o, gk) in acc.words.row_mut(i).iter_mut().zip(g) {
                            *o += dz * gk;
                        }
                    }
                    for (o, gk) in s.dpre.iter_mut().zip(g) {
                        *o *= 1.0 - gk * gk;
                    }
                    let u = &params.proj[c];
                    let du = &mut mg.proj[c];
                    for r in 0..u.rows() {
                        let dr = s.dpre[r];
                        for (o, hk) in du.row_mut(r).iter_mut().zip(h) {
                            *o += dr * hk;
                        }
                        for (o, uk) in dh.iter_mut().zip(u.row(r)) {
                            *o += dr * uk;
                        }
                    }
                }
            }
        }
        loss
    }
}
