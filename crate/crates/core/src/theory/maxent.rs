//! Minimum cross-entropy of a softmax head with fixed words versus maximum
//! entropy over the moment polytope `{R ∈ Δ : Wᵀ R = Wᵀ P*}`.
//!
//! The dual side minimizes `F(h) = −⟨μ, h⟩ + log Σ_i exp⟨w_i, h⟩` with
//! `μ = Wᵀ P*`, which equals `H(P*, Q_h)`. The primal side never touches
//! softmax logits: it starts from the uniform distribution and cycles
//! Kullback-Leibler projections onto one moment hyperplane at a time.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::numkit::{entropy, lse_unchecked, Matrix, Rng};

pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
const MAX_DUAL_ITERS: usize = 10_000;
const MAX_PRIMAL_SWEEPS: usize = 200_000;
/// `‖h‖` beyond which the dual minimizer is treated as escaping to infinity.
const DIVERGENT_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntInstance {
    pub p_star: Vec<f64>,
    /// `M × d`; `d` may be zero.
    pub words: Matrix,
}

impl MaxEntInstance {
    pub fn new(p_star: Vec<f64>, words: Matrix) -> Result<Self> {
        let inst = MaxEntInstance { p_star, words };
        inst.validate()?;
        Ok(inst)
    }

    /// Random instance: `P*` from a softmax of Gaussian logits, Gaussian `W`.
    pub fn random(vocab: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let logits = rng.gaussian_vec(vocab, 1.0);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        Self::new(p, rng.gaussian_matrix(vocab, dim, 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.p_star.len();
        if m < 2 {
            return invalid("need at least two outcomes");
        }
        if self.words.rows() != m {
            return Err(LabError::DimensionMismatch(format!(
                "W has {} rows, P* has {m} entries",
                self.words.rows()
            )));
        }
        if self.p_star.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("P* entries must be finite and non-negative");
        }
        if (self.p_star.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("P* must sum to 1");
        }
        if !self.words.is_finite() {
            return invalid("W must be finite");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.words.cols()
    }

    /// Moment target `μ = Σ_i P*_i w_i`.
    pub fn moments(&self) -> Vec<f64> {
        let d = self.dim();
        let mut mu = vec![0.0; d];
        for (p, w) in self.p_star.iter().zip(self.words.rows_iter()) {
            for k in 0..d {
                mu[k] += p * w[k];
            }
        }
        mu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub h: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub r: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub sweeps: usize,
}

/// `F(h)` and `∇F(h) = Wᵀ(Q_h − P*)`.
fn dual_objective(inst: &MaxEntInstance, mu: &[f64], h: &[f64], grad: &mut [f64]) -> f64 {
    let d = inst.dim();
    let z: Vec<f64> = inst.words.rows_iter().map(|w| w.iter().zip(h).map(|(a, b)| a * b).sum()).collect();
    let lse = lse_unchecked(&z);
    grad.iter_mut().zip(mu).for_each(|(g, m)| *g = -m);
    for (zi, w) in z.iter().zip(inst.words.rows_iter()) {
        let q = (zi - lse).exp();
        for k in 0..d {
            grad[k] += q * w[k];
        }
    }
    lse - mu.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `H(P*, Q_h)` over `h` by damped Newton descent: the direction
/// is the gradient preconditioned by the (ridged) Hessian, and the step is
/// halved from 1 until the Armijo condition holds. Plain gradient steps
/// stall on instances whose words are nearly affinely dependent.
///
/// Reaching `‖∇F‖ ≤ tol` is not enough when the moment target sits on the
/// boundary of the hull of the words: the gradient then decays while `h`
/// escapes to infinity and some `Q_h(i)` collapse toward zero. After
/// converging, the solver keeps descending to `tol / 100`; if the smallest
/// probability at least halves on the way, the minimum is reported as not
/// attained. At an interior optimum it moves by `O(tol)` only.
pub fn min_cross_entropy(inst: &MaxEntInstance, tol: f64) -> Result<DualSolution> {
    inst.validate()?;
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let mu = inst.moments();
    let first = descend(inst, &mu, vec![0.0; inst.dim()], tol)?;
    let probe = descend(inst, &mu, first.h.clone(), tol * 1e-2)?;
    if min_prob(inst, &probe.h) < 0.5 * min_prob(inst, &first.h) {
        return Err(LabError::InfimumNotAttained { best: probe.value });
    }
    Ok(first)
}

fn min_prob(inst: &MaxEntInstance, h: &[f64]) -> f64 {
    let z: Vec<f64> = inst.words.rows_iter().map(|w| w.iter().zip(h).map(|(a, b)| a * b).sum()).collect();
    let lse = lse_unchecked(&z);
    z.iter().map(|zi| (zi - lse).exp()).fold(f64::INFINITY, f64::min)
}

fn descend(inst: &MaxEntInstance, mu: &[f64], mut h: Vec<f64>, tol: f64) -> Result<DualSolution> {
    let d = inst.dim();
    let mut g = vec![0.0; d];
    let mut f = dual_objective(inst, mu, &h, &mut g);
    let mut trial = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    for it in 0..MAX_DUAL_ITERS {
        let gn = norm(&g);
        if gn <= tol {
            return Ok(DualSolution { h, value: f, grad_norm: gn, iterations: it });
        }
        if norm(&h) > DIVERGENT_NORM {
            return Err(LabError::InfimumNotAttained { best: f });
        }
        let dir = newton_direction(inst, &h, &g);
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        // round-off allowance: near the optimum the true decrease is below
        // the resolution of f
        let slack = 4.0 * f64::EPSILON * f.abs().max(1.0);
        let mut t = 1.0;
        let f_new = loop {
            for k in 0..d {
                trial[k] = h[k] + t * dir[k];
            }
            let fn_ = dual_objective(inst, mu, &trial, &mut g_new);
            if fn_ <= f + 1e-4 * t * slope + slack {
                break fn_;
            }
            t *= 0.5;
            if t < 1e-300 {
                return Err(LabError::InfimumNotAttained { best: f });
            }
        };
        h.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        f = f_new;
    }
    Err(LabError::InfimumNotAttained { best: f })
}

/// `−(∇²F + δI)⁻¹ ∇F` with `∇²F = Cov_{Q_h}(w)`; the ridge keeps the step
/// finite along directions where the minimizer escapes.
fn newton_direction(inst: &MaxEntInstance, h: &[f64], g: &[f64]) -> Vec<f64> {
    let d = inst.dim();
    let z: Vec<f64> = inst.words.rows_iter().map(|w| w.iter().zip(h).map(|(a, b)| a * b).sum()).collect();
    let lse = lse_unchecked(&z);
    let q: Vec<f64> = z.iter().map(|zi| (zi - lse).exp()).collect();
    let mut mean = vec![0.0; d];
    for (qi, w) in q.iter().zip(inst.words.rows_iter()) {
        for k in 0..d {
            mean[k] += qi * w[k];
        }
    }
    let mut hess = Matrix::zeros(d, d);
    for (qi, w) in q.iter().zip(inst.words.rows_iter()) {
        for a in 0..d {
            for b in 0..d {
                hess[(a, b)] += qi * (w[a] - mean[a]) * (w[b] - mean[b]);
            }
        }
    }
    let trace: f64 = (0..d).map(|k| hess[(k, k)]).sum();
    for k in 0..d {
        hess[(k, k)] += 1e-10 * trace + 1e-14;
    }
    let row = Matrix::from_vec(1, d, g.to_vec()).expect("length matches");
    super::right_solve_spd(&row, &hess).into_vec().into_iter().map(|x| -x).collect()
}

/// Largest moment-constraint violation of `r`, including `Σ r = 1`.
pub fn constraint_residual(inst: &MaxEntInstance, r: &[f64]) -> f64 {
    let mu = inst.moments();
    let mut worst = (r.iter().sum::<f64>() - 1.0).abs();
    for k in 0..inst.dim() {
        let got: f64 = r.iter().zip(inst.words.rows_iter()).map(|(ri, w)| ri * w[k]).sum();
        worst = worst.max((got - mu[k]).abs());
    }
    worst
}

/// Maximum-entropy distribution with the moments of `P*`, by cyclic
/// Bregman (KL) projections from the uniform distribution.
///
/// Projecting a distribution `r` onto `{Σ r_i a_i = m}` in KL gives
/// `r_i ∝ r_i exp(λ a_i)` with the scalar `λ` solving the moment equation,
/// found here by safeguarded Newton on a bracket.
pub fn max_entropy_primal(inst: &MaxEntInstance, tol: f64) -> Result<PrimalSolution> {
    inst.validate()?;
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let m = inst.p_star.len();
    let cols = constraint_basis(&inst.words);
    let targets: Vec<f64> = cols.iter().map(|a| a.iter().zip(&inst.p_star).map(|(x, p)| x * p).sum()).collect();
    for (a, t) in cols.iter().zip(&targets) {
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if *t < lo - tol || *t > hi + tol {
            return Err(LabError::Infeasible { residual: (t - t.clamp(lo, hi)).abs() });
        }
    }
    let mut r = vec![1.0 / m as f64; m];
    let mut residual = constraint_residual(inst, &r);
    let mut best = residual;
    let mut stalled = 0usize;
    for sweep in 0..MAX_PRIMAL_SWEEPS {
        if residual <= tol {
            let value = entropy(&r);
            return Ok(PrimalSolution { r, value, residual, sweeps: sweep });
        }
        for (a, t) in cols.iter().zip(&targets) {
            kl_project(&mut r, a, *t);
        }
        residual = constraint_residual(inst, &r);
        if residual < 0.999 * best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 5000 {
                break;
            }
        }
    }
    Err(LabError::Infeasible { residual })
}

/// Orthonormal basis of the centered columns of `w`. On the simplex the
/// constraints `Wᵀ R = Wᵀ P*` and `Bᵀ R = Bᵀ P*` coincide, and near-parallel
/// hyperplanes would make cyclic projections crawl.
fn constraint_basis(w: &Matrix) -> Vec<Vec<f64>> {
    let m = w.rows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..w.cols() {
        let mut v = w.col(k);
        let mean = v.iter().sum::<f64>() / m as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a dependent column adds no constraint
        if n > 1e-10 * scale.max(f64::MIN_POSITIVE) && n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// In-place KL projection of the distribution `r` onto `{Σ r_i a_i = target}`.
fn kl_project(r: &mut [f64], a: &[f64], target: f64) {
    let lo_a = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_a = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi_a - lo_a <= 0.0 {
        return;
    }
    let center = 0.5 * (lo_a + hi_a);
    // mean and variance of a under r tilted by exp(λ (a − center))
    let moments = |lambda: f64| -> (f64, f64) {
        let mut wmax = f64::NEG_INFINITY;
        for (ri, ai) in r.iter().zip(a) {
            if *ri > 0.0 {
                wmax = wmax.max(ri.ln() + lambda * (ai - center));
            }
        }
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (ri, ai) in r.iter().zip(a) {
            if *ri > 0.0 {
                let w = (ri.ln() + lambda * (ai - center) - wmax).exp();
                s0 += w;
                s1 += w * ai;
                s2 += w * ai * ai;
            }
        }
        let mean = s1 / s0;
        (mean, (s2 / s0 - mean * mean).max(0.0))
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while moments(lo).0 > target && lo > -1e12 {
        lo *= 2.0;
    }
    while moments(hi).0 < target && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lambda = 0.0f64.clamp(lo, hi);
    for _ in 0..200 {
        let (mean, var) = moments(lambda);
        let err = mean - target;
        if err.abs() <= 1e-15 * (1.0 + target.abs()) {
            break;
        }
        if err > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let newton = if var > 0.0 { lambda - err / var } else { f64::NAN };
        lambda = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * (1.0 + lambda.abs()) {
            break;
        }
    }
    let mut wmax = f64::NEG_INFINITY;
    for (ri, ai) in r.iter().zip(a) {
        if *ri > 0.0 {
            wmax = wmax.max(ri.ln() + lambda * (ai - center));
        }
    }
    let mut s = 0.0;
    for (ri, ai) in r.iter_mut().zip(a) {
        if *ri > 0.0 {
            *ri = (ri.ln() + lambda * (ai - center) - wmax).exp();
            s += *ri;
        }
    }
    r.iter_mut().for_each(|x| *x /= s);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub min_ce: f64,
    pub max_ent: f64,
    pub gap: f64,
    pub entropy_p_star: f64,
    pub argmin_h: Vec<f64>,
    pub argmax_r: Vec<f64>,
    pub dual_grad_norm: f64,
    pub primal_residual: f64,
}

/// Runs both solvers and reports `|min_h H(P*, Q_h) − max_R H(R)|`.
pub fn duality_gap(inst: &MaxEntInstance, grad_tol: f64, residual_tol: f64) -> Result<DualityReport> {
    let dual = min_cross_entropy(inst, grad_tol)?;
    let primal = max_entropy_primal(inst, residual_tol)?;
    Ok(DualityReport {
        min_ce: dual.value,
        max_ent: primal.value,
        gap: (dual.value - primal.value).abs(),
        entropy_p_star: entropy(&inst.p_star),
        argmin_h: dual.h,
        argmax_r: primal.r,
        dual_grad_norm: dual.grad_norm,
        primal_residual: primal.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_inst(m: usize, d: usize, seed: u64) -> MaxEntInstance {
        MaxEntInstance::random(m, d, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn equal_words_force_uniform() {
        let inst = MaxEntInstance::new(vec![0.7, 0.2, 0.1], Matrix::filled(3, 1, 2.0)).unwrap();
        let s = min_cross_entropy(&inst, 1e-10).unwrap();
        assert!((s.value - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identity_words_recover_entropy() {
        let p = vec![0.5, 0.25, 0.125, 0.125];
        let inst = MaxEntInstance::new(p.clone(), Matrix::identity(4)).unwrap();
        let r = duality_gap(&inst, 1e-10, 1e-10).unwrap();
        let h = entropy(&p);
        assert!((r.min_ce - h).abs() < 1e-8, "{} vs {h}", r.min_ce);
        assert!((r.max_ent - h).abs() < 1e-8);
        for (a, b) in r.argmax_r.iter().zip(&p) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn no_constraints_give_uniform() {
        let inst = MaxEntInstance::new(vec![0.9, 0.05, 0.05], Matrix::zeros(3, 0)).unwrap();
        let r = duality_gap(&inst, 1e-10, 1e-10).unwrap();
        assert!((r.min_ce - 3f64.ln()).abs() < 1e-14);
        assert!((r.max_ent - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn random_instances_close_the_gap() {
        for seed in 0..30 {
            let inst = rand_inst(6, 2, seed);
            let r = duality_gap(&inst, 1e-9, 1e-9).unwrap();
            assert!(r.gap < 1e-6, "seed {seed}: {r:?}");
            assert!(r.min_ce >= r.entropy_p_star - 1e-9);
        }
    }

    #[test]
    fn primal_optimum_is_exponential_family() {
        let inst = rand_inst(6, 2, 4);
        let r = max_entropy_primal(&inst, 1e-10).unwrap();
        // log r_i = λ·w_i + c; recover [λ, c] by least squares
        let mut xtx = [[0.0; 3]; 3];
        let mut xty = [0.0; 3];
        for (ri, w) in r.r.iter().zip(inst.words.rows_iter()) {
            let x = [w[0], w[1], 1.0];
            for a in 0..3 {
                xty[a] += x[a] * ri.ln();
                for b in 0..3 {
                    xtx[a][b] += x[a] * x[b];
                }
            }
        }
        let m = Matrix::from_rows(&xtx.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let coef = solve3(&m, &xty);
        for (ri, w) in r.r.iter().zip(inst.words.rows_iter()) {
            let fit = coef[0] * w[0] + coef[1] * w[1] + coef[2];
            assert!((ri.ln() - fit).abs() < 1e-4);
        }
    }

    fn solve3(m: &Matrix, y: &[f64; 3]) -> [f64; 3] {
        let det = crate::numkit::determinant(m).unwrap();
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mut mk = m.clone();
            for i in 0..3 {
                mk[(i, k)] = y[i];
            }
            out[k] = crate::numkit::determinant(&mk).unwrap() / det;
        }
        out
    }

    #[test]
    fn one_hot_target_has_no_minimizer() {
        let inst = MaxEntInstance::new(vec![1.0, 0.0, 0.0], Matrix::identity(3)).unwrap();
        assert!(matches!(min_cross_entropy(&inst, 1e-8), Err(LabError::InfimumNotAttained { .. })));
    }

    #[test]
    fn weak_duality_on_truncated_runs() {
        let inst = rand_inst(7, 3, 9);
        let dual = min_cross_entropy(&inst, 1e-10).unwrap();
        let loose = max_entropy_primal(&inst, 1e-3).unwrap();
        // a loosely feasible R may overshoot slightly; the exact one cannot
        assert!(loose.value <= dual.value + 1e-3);
        let tight = max_entropy_primal(&inst, 1e-10).unwrap();
        assert!(tight.value <= dual.value + 1e-8);
    }

    #[test]
    fn extra_word_dimensions_never_raise_max_entropy() {
        for seed in 0..20 {
            let mut rng = Rng::new(1000 + seed);
            let full = MaxEntInstance::random(8, 4, &mut rng).unwrap();
            let mut prev = f64::INFINITY;
            for d in 0..=4 {
                let w = Matrix::from_fn(8, d, |i, k| full.words[(i, k)]);
                let inst = MaxEntInstance::new(full.p_star.clone(), w).unwrap();
                let v = max_entropy_primal(&inst, 1e-9).unwrap().value;
                assert!(v <= prev + 1e-5, "seed {seed} d {d}: {v} > {prev}");
                prev = v;
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn gibbs_and_weak_duality(seed in 0u64..10_000, m in 3usize..9, d in 1usize..4) {
            let inst = MaxEntInstance::random(m, d, &mut Rng::new(seed)).unwrap();
            let dual = min_cross_entropy(&inst, 1e-9).unwrap();
            proptest::prop_assert!(dual.value >= entropy(&inst.p_star) - 1e-9);
            let primal = max_entropy_primal(&inst, 1e-9).unwrap();
            proptest::prop_assert!(primal.value <= dual.value + 1e-6);
        }
    }
}
