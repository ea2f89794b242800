use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LabError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged rows");
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Diagonal matrix with the given entries.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LabError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, the shape of a word-by-context logits matrix.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(LabError::DimensionMismatch(format!(
                "cannot form {}x{} times transpose of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j))))
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.rows_iter().map(|r| dot(r, v)).collect())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Submatrix picking the listed rows and columns, in order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub(crate) fn same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Plain comma-separated rows, no header. Values are written with
    /// round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows_iter() {
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{x:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Matrix> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| {
                        LabError::Parse(format!("line {}: {tok:?}: {e}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Matrix::from_rows(&rows)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Inner product over the common prefix, summed in four interleaved lanes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// Word matrix `W` (M×d) and context matrix `H` (N×d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub words: Matrix,
    pub contexts: Matrix,
}

impl EmbeddingSet {
    pub fn new(words: Matrix, contexts: Matrix) -> Result<Self> {
        if words.cols() != contexts.cols() {
            return Err(LabError::DimensionMismatch(format!(
                "word dim {} vs context dim {}",
                words.cols(),
                contexts.cols()
            )));
        }
        if words.rows() == 0 || contexts.rows() == 0 {
            return invalid("embedding sets need at least one word and one context");
        }
        Ok(EmbeddingSet { words, contexts })
    }

    pub fn dim(&self) -> usize {
        self.words.cols()
    }

    /// The M×N logits matrix `W·Hᵀ`.
    pub fn logits(&self) -> Matrix {
        self.words.matmul_t(&self.contexts).expect("dims checked at construction")
    }
}

/// Determinant of a square matrix by partial-pivot LU.
pub fn determinant(a: &Matrix) -> Result<f64> {
    if a.rows() != a.cols() {
        return invalid("determinant of a non-square matrix");
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot == 0.0 {
            return Ok(0.0);
        }
        if p != k {
            for j in 0..n {
                m.data.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        let akk = m[(k, k)];
        det *= akk;
        for i in k + 1..n {
            let factor = m[(i, k)] / akk;
            if factor != 0.0 {
                for j in k + 1..n {
                    let v = m[(k, j)];
                    m[(i, j)] -= factor * v;
                }
            }
        }
    }
    Ok(det)
}

/// Rows and columns of a `k`×`k` well-conditioned submatrix, chosen by
/// Gaussian elimination with complete pivoting. The returned index lists are
/// sorted ascending.
pub fn pivoted_selection(a: &Matrix, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if k > a.rows().min(a.cols()) {
        return invalid(format!("cannot select {k}x{k} from {}x{}", a.rows(), a.cols()));
    }
    let mut m = a.clone();
    let mut row_perm: Vec<usize> = (0..a.rows()).collect();
    let mut col_perm: Vec<usize> = (0..a.cols()).collect();
    let (r, c) = (a.rows(), a.cols());
    for step in 0..k {
        let mut best = (step, step, -1.0);
        for i in step..r {
            for j in step..c {
                let v = m[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        let (pi, pj, _) = best;
        if pi != step {
            for j in 0..c {
                m.data.swap(step * c + j, pi * c + j);
            }
            row_perm.swap(step, pi);
        }
        if pj != step {
            for i in 0..r {
                m.data.swap(i * c + step, i * c + pj);
            }
            col_perm.swap(step, pj);
        }
        let piv = m[(step, step)];
        if piv == 0.0 {
            break;
        }
        for i in step + 1..r {
            let factor = m[(i, step)] / piv;
            if factor != 0.0 {
                for j in step..c {
                    let v = m[(step, j)];
                    m[(i, j)] -= factor * v;
                }
            }
        }
    }
    let mut rows = row_perm[..k].to_vec();
    let mut cols = col_perm[..k].to_vec();
    rows.sort_unstable();
    cols.sort_unstable();
    Ok((rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let m = Matrix::from_rows(&[vec![1.0, -2.5, 1e-300], vec![0.1, 3.0, -0.0]]).unwrap();
        let back = Matrix::from_csv(&m.to_csv()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(matches!(Matrix::from_csv("1,2\n3,x\n"), Err(LabError::Parse(_))));
        assert!(Matrix::from_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn matmul_shapes() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.shape(), (3, 3));
        assert_eq!(ab.row(2), &[5.0, 6.0, 11.0]);
        assert_eq!(a.matmul_t(&a).unwrap()[(0, 1)], 11.0);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn determinant_small_cases() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(determinant(&a).unwrap(), -6.0);
        assert_eq!(determinant(&Matrix::filled(3, 3, 1.0)).unwrap(), 0.0);
        assert!((determinant(&Matrix::diag(&[2.0, 3.0, 4.0])).unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn pivoted_selection_finds_nonsingular_block() {
        // rank 2: third row = first + second
        let a = Matrix::from_rows(&[
            vec![1.0, 0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.0, 3.0],
            vec![1.0, 0.0, 2.0, 3.0],
        ])
        .unwrap();
        let (r, c) = pivoted_selection(&a, 2).unwrap();
        let det = determinant(&a.select(&r, &c)).unwrap();
        assert!(det.abs() > 1.0, "{r:?} {c:?} det={det}");
    }

    #[test]
    fn embedding_set_checks_dims() {
        assert!(EmbeddingSet::new(Matrix::zeros(3, 2), Matrix::zeros(4, 3)).is_err());
        let e = EmbeddingSet::new(Matrix::filled(3, 2, 1.0), Matrix::filled(4, 2, 1.0)).unwrap();
        assert_eq!(e.logits().shape(), (3, 4));
        assert_eq!(e.logits()[(2, 3)], 2.0);
    }
}
