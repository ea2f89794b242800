use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::table::{distinct_values, TableMode, ValueTableFn};
use crate::error::{invalid, LabError, Result};
use crate::numkit::{determinant, numerical_rank, pivoted_selection, Matrix, Rng};

/// Relative gap below which two entries count as equal.
pub const DISTINCT_REL_TOL: f64 = 1e-9;
/// Relative determinant threshold for accepting a submatrix.
pub const DET_REL_TOL: f64 = 1e-12;
pub const DEFAULT_SURROGATE_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Report {
    pub table: ValueTableFn,
    pub columns: Vec<usize>,
    /// The chosen entries `⟨w_i, h_{j_i}⟩`.
    pub chosen: Vec<f64>,
    /// `f` applied to the `M × M` submatrix on the chosen columns.
    pub image: Matrix,
    pub rank: usize,
}

/// Indicator construction: `f(x) = 1` on the chosen dot products
/// `⟨w_i, h_{j_i}⟩` and `0` on every other entry of `A = W Hᵀ`, which maps
/// the chosen columns to the identity.
pub fn lemma4_construct(w: &Matrix, h: &Matrix, columns: &[usize]) -> Result<Lemma4Report> {
    let a = w.matmul_t(h)?;
    let (m, n) = a.shape();
    if columns.len() != m {
        return invalid(format!("need one column per row of W ({m}), got {}", columns.len()));
    }
    let mut seen = columns.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != m || seen.last().is_some_and(|&j| j >= n) {
        return invalid(format!("columns must be {m} distinct indices below {n}"));
    }
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(LabError::ConstructionInapplicable("all entries of A are zero".into()));
    }
    let tol = DISTINCT_REL_TOL * scale;
    let chosen: Vec<f64> = (0..m).map(|i| a[(i, columns[i])]).collect();
    for i in 0..m {
        for r in 0..m {
            for c in 0..n {
                if (r, c) != (i, columns[i]) && (a[(r, c)] - chosen[i]).abs() <= tol {
                    return Err(LabError::ConstructionInapplicable(format!(
                        "entry ({i}, {}) = {} is not distinct from entry ({r}, {c})",
                        columns[i], chosen[i]
                    )));
                }
            }
        }
    }
    let inputs = distinct_values(a.data(), tol);
    let outputs =
        inputs.iter().map(|&b| if chosen.iter().any(|&x| (x - b).abs() <= tol) { 1.0 } else { 0.0 }).collect();
    let table = ValueTableFn::new(inputs, outputs, TableMode::Lookup { tol })?;
    let all_rows: Vec<usize> = (0..m).collect();
    let image = table.apply(&a.select(&all_rows, columns));
    let rank = numerical_rank(&image, None)?;
    Ok(Lemma4Report { table, columns: columns.to_vec(), chosen, image, rank })
}

/// `K × K` submatrix with the largest `|det|`, by exhaustive search. Only for
/// matrices with both dimensions at most 6.
pub fn exhaustive_submatrix(a: &Matrix, k: usize) -> Result<(Vec<usize>, Vec<usize>, f64)> {
    let (m, n) = a.shape();
    if m > 6 || n > 6 {
        return invalid("exhaustive submatrix search is limited to 6 x 6");
    }
    if k == 0 || k > m.min(n) {
        return invalid(format!("submatrix size {k} out of range"));
    }
    let row_sets = combinations(m, k);
    let col_sets = combinations(n, k);
    let mut best = (Vec::new(), Vec::new(), -1.0);
    for r in &row_sets {
        for c in &col_sets {
            let d = determinant(&a.select(r, c))?.abs();
            if d > best.2 {
                best = (r.clone(), c.clone(), d);
            }
        }
    }
    Ok(best)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub g: ValueTableFn,
    /// Rows and columns of the `K × K` submatrix kept non-singular.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub epsilon: f64,
    pub draws: usize,
    pub det: f64,
    pub rank: usize,
}

fn det_threshold(values: &[f64], k: usize) -> f64 {
    let s = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    DET_REL_TOL * s.powi(k as i32)
}

/// Given `f` with `rank(f(A)) ≥ K`, finds a strictly increasing, continuous
/// piecewise-linear `g` with `rank(g(A)) ≥ K`.
///
/// A non-singular `K × K` submatrix `B` of `f(A)` is located by complete
/// pivoting (exhaustive search as a fallback on small inputs). With
/// `b_1 < … < b_T` the distinct entries of that submatrix of `A` and
/// `ε = ¼ min gap`, values `c_i` are drawn uniformly from `[b_i − ε, b_i + ε]`
/// until `det(c(B))` clears the threshold. The intervals are disjoint, so any
/// draw is increasing. `g` interpolates the anchors `g(b_i) = c_i`,
/// `g(b_i + 2ε) = b_i + 2ε` and is the identity outside
/// `[b_1 − 2ε, b_T + 2ε]`.
pub fn monotone_surrogate(a: &Matrix, f: &ValueTableFn, k: usize, budget: usize, seed: u64) -> Result<SurrogateReport> {
    if !a.is_finite() {
        return invalid("A must be finite");
    }
    if k == 0 {
        return invalid("target rank must be positive");
    }
    let fa = f.apply(a);
    let actual = numerical_rank(&fa, None)?;
    if actual < k {
        return Err(LabError::RankPrecondition { required: k, actual });
    }
    let (mut rows, mut cols) = pivoted_selection(&fa, k)?;
    let sub_f = fa.select(&rows, &cols);
    if determinant(&sub_f)?.abs() <= det_threshold(sub_f.data(), k) && a.rows() <= 6 && a.cols() <= 6 {
        let (r, c, _) = exhaustive_submatrix(&fa, k)?;
        rows = r;
        cols = c;
    }

    let sub = a.select(&rows, &cols);
    let merge_tol = 1e-12 * a.max_abs();
    let b = distinct_values(sub.data(), merge_tol);
    let eps = if b.len() > 1 { 0.25 * b.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min) } else { 1.0 };
    // index of each submatrix entry in b
    let idx: Vec<usize> = sub
        .data()
        .iter()
        .map(|&x| b.partition_point(|&v| v < x - merge_tol).min(b.len() - 1))
        .collect();

    let mut rng = Rng::new(seed);
    let mut best_det = 0.0f64;
    let mut c = vec![0.0; b.len()];
    for draw in 1..=budget {
        for (ci, &bi) in c.iter_mut().zip(&b) {
            *ci = rng.uniform_in(bi - eps, bi + eps);
        }
        let mapped = Matrix::from_vec(k, k, idx.iter().map(|&t| c[t]).collect())?;
        let det = determinant(&mapped)?;
        best_det = best_det.max(det.abs());
        if det.abs() <= det_threshold(mapped.data(), k) {
            continue;
        }
        let g = surrogate_table(&b, &c, eps)?;
        let rank = numerical_rank(&g.apply(a), None)?;
        if rank >= k && g.is_increasing() {
            return Ok(SurrogateReport { g, rows, cols, epsilon: eps, draws: draw, det, rank });
        }
    }
    Err(LabError::SurrogateNotFound { draws: budget, best_det })
}

fn surrogate_table(b: &[f64], c: &[f64], eps: f64) -> Result<ValueTableFn> {
    let mut inputs = Vec::with_capacity(2 * b.len() + 1);
    let mut outputs = Vec::with_capacity(2 * b.len() + 1);
    inputs.push(b[0] - 2.0 * eps);
    outputs.push(b[0] - 2.0 * eps);
    for (&bi, &ci) in b.iter().zip(c) {
        inputs.push(bi);
        outputs.push(ci);
        inputs.push(bi + 2.0 * eps);
        outputs.push(bi + 2.0 * eps);
    }
    ValueTableFn::new(inputs, outputs, TableMode::Interpolate)
}

/// Table for `x ↦ |x| mod 2` over the distinct (integer) entries of `a`.
pub fn parity_table(a: &Matrix) -> Result<ValueTableFn> {
    let inputs = distinct_values(a.data(), 0.5);
    let outputs = inputs.iter().map(|x| (x.round() as i64).rem_euclid(2) as f64).collect();
    ValueTableFn::new(inputs, outputs, TableMode::Lookup { tol: 0.25 })
}

/// One `(A, f, K)` case where a non-monotone `f` lifts the rank of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCase {
    pub a: Matrix,
    pub f: ValueTableFn,
    pub rank_a: usize,
    pub target_rank: usize,
}

/// Deterministic search over small integer factors `W, H` (entries in
/// `[-3, 3]`, inner dimension 2, square sizes 4 and 5) for products whose
/// parity image has strictly larger rank than the product itself.
pub fn parity_cases(count: usize, seed: u64) -> Result<Vec<SurrogateCase>> {
    let mut rng = Rng::new(seed);
    let mut out: Vec<SurrogateCase> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1_000_000 {
            return invalid("no rank-lifting parity cases found");
        }
        let n = 4 + out.len() % 2;
        let mut int_matrix = |r: usize| Matrix::from_fn(r, 2, |_, _| rng.below(7) as f64 - 3.0);
        let w = int_matrix(n);
        let h = int_matrix(n);
        let a = w.matmul_t(&h)?;
        let rank_a = numerical_rank(&a, None)?;
        let f = parity_table(&a)?;
        let target_rank = numerical_rank(&f.apply(&a), None)?;
        if rank_a == 2 && target_rank > rank_a && target_rank >= 3 && !out.iter().any(|c| c.a == a) {
            out.push(SurrogateCase { a, f, rank_a, target_rank });
        }
    }
    Ok(out)
}

/// Outcome of one Gaussian instance in [`lemma4_trials`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Trial {
    pub rows: usize,
    pub cols: usize,
    pub precondition_passed: bool,
    /// Rank of the image on the chosen columns; `None` when the
    /// precondition failed.
    pub rank: Option<usize>,
}

/// Gaussian `W (M×d)`, `H ((M+2)×d)` with `M` cycling through
/// `min_rows..=max_rows`; the construction uses columns `0..M`.
pub fn lemma4_trials(instances: usize, min_rows: usize, max_rows: usize, dim: usize, seed: u64) -> Result<Vec<Lemma4Trial>> {
    if min_rows == 0 || min_rows > max_rows {
        return invalid(format!("need 1 <= min_rows <= max_rows, got {min_rows}..{max_rows}"));
    }
    if dim == 0 {
        return invalid("dim must be positive");
    }
    (0..instances)
        .map(|t| {
            let rows = min_rows + t % (max_rows - min_rows + 1);
            let cols = rows + 2;
            let mut rng = Rng::stream(seed, t as u64);
            let w = rng.gaussian_matrix(rows, dim, 1.0);
            let h = rng.gaussian_matrix(cols, dim, 1.0);
            let columns: Vec<usize> = (0..rows).collect();
            match lemma4_construct(&w, &h, &columns) {
                Ok(r) => Ok(Lemma4Trial { rows, cols, precondition_passed: true, rank: Some(r.rank) }),
                Err(LabError::ConstructionInapplicable(_)) => {
                    Ok(Lemma4Trial { rows, cols, precondition_passed: false, rank: None })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Outcome of one case in [`surrogate_trials`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTrial {
    pub size: usize,
    pub rank_a: usize,
    pub target_rank: usize,
    pub found: bool,
    pub draws: usize,
    /// `rank(g(A))`, zero when not found.
    pub rank: usize,
    pub increasing: bool,
}

/// Runs [`monotone_surrogate`] on `cases` parity cases; case `t` samples
/// with seed stream `(seed, t)`.
pub fn surrogate_trials(cases: usize, seed: u64, budget: usize) -> Result<Vec<SurrogateTrial>> {
    let list = parity_cases(cases, seed)?;
    list.iter()
        .enumerate()
        .map(|(t, c)| {
            let draw_seed = Rng::stream(seed, t as u64).next_u64();
            let size = c.a.rows();
            match monotone_surrogate(&c.a, &c.f, c.target_rank, budget, draw_seed) {
                Ok(r) => Ok(SurrogateTrial {
                    size,
                    rank_a: c.rank_a,
                    target_rank: c.target_rank,
                    found: true,
                    draws: r.draws,
                    rank: r.rank,
                    increasing: r.g.is_increasing(),
                }),
                Err(LabError::SurrogateNotFound { draws, .. }) => Ok(SurrogateTrial {
                    size,
                    rank_a: c.rank_a,
                    target_rank: c.target_rank,
                    found: false,
                    draws,
                    rank: 0,
                    increasing: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
