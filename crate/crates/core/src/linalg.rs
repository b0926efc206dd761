//! Dense and compressed-row matrices plus the handful of kernels the solvers
//! need: products, symmetric-part extraction, Cholesky solves and extreme
//! eigenvalue estimates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square or rectangular real matrix, stored dense (row-major) or in CSR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub enum Matrix {
    Dense {
        nrows: usize,
        ncols: usize,
        data: Vec<f64>,
    },
    Csr {
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// Wire form: `{"dense": [[..], ..]}` or `{"csr": {nrows, ncols, indptr, indices, values}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum MatrixRepr {
    Dense(Vec<Vec<f64>>),
    Csr {
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        match repr {
            MatrixRepr::Dense(rows) => Matrix::from_rows(&rows),
            MatrixRepr::Csr {
                nrows,
                ncols,
                indptr,
                indices,
                values,
            } => Matrix::csr(nrows, ncols, indptr, indices, values),
        }
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        match m {
            Matrix::Dense { nrows, ncols, data } => MatrixRepr::Dense(
                (0..nrows)
                    .map(|i| data[i * ncols..(i + 1) * ncols].to_vec())
                    .collect(),
            ),
            Matrix::Csr {
                nrows,
                ncols,
                indptr,
                indices,
                values,
            } => MatrixRepr::Csr {
                nrows,
                ncols,
                indptr,
                indices,
                values,
            },
        }
    }
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Matrix::Csr {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(Error::Invalid("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Invalid(format!(
                    "matrix row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Matrix::Dense { nrows, ncols, data })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                data.push(m[(i, j)]);
            }
        }
        Matrix::Dense { nrows, ncols, data }
    }

    pub fn csr(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(Error::Invalid("csr indptr must have nrows+1 entries starting at 0".into()));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != values.len() {
            return Err(Error::Invalid("csr indices/values length mismatch".into()));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("csr indptr must be non-decreasing".into()));
        }
        if let Some(&c) = indices.iter().find(|&&c| c >= ncols) {
            return Err(Error::Invalid(format!("csr column index {c} out of range")));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Matrix::Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds a CSR matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                indices.push(col);
                values.push(sum);
            }
            indptr.push(indices.len());
        }
        Matrix::Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Matrix::Dense { nrows, .. } | Matrix::Csr { nrows, .. } => *nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Matrix::Dense { ncols, .. } | Matrix::Csr { ncols, .. } => *ncols,
        }
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    /// Calls `f(col, value)` for every stored entry of row `i`.
    #[inline]
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Matrix::Dense { ncols, data, .. } => {
                for (j, &v) in data[i * ncols..(i + 1) * ncols].iter().enumerate() {
                    f(j, v);
                }
            }
            Matrix::Csr {
                indptr,
                indices,
                values,
                ..
            } => {
                for k in indptr[i]..indptr[i + 1] {
                    f(indices[k], values[k]);
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Matrix::Dense { ncols, data, .. } => data[i * ncols + j],
            Matrix::Csr {
                indptr,
                indices,
                values,
                ..
            } => (indptr[i]..indptr[i + 1])
                .find(|&k| indices[k] == j)
                .map_or(0.0, |k| values[k]),
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    /// Row dot product `(A x)_i`.
    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_in_row(i, |j, v| s += v * x[j]);
        s
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols());
        (0..self.nrows()).map(|i| self.row_dot(i, x)).collect()
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols()];
        for (i, &xi) in x.iter().enumerate() {
            self.for_each_in_row(i, |j, v| y[j] += v * xi);
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for i in 0..self.nrows() {
            self.for_each_in_row(i, |j, v| m[(i, j)] += v);
        }
        m
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Vec::new();
        for i in 0..self.nrows() {
            self.for_each_in_row(i, |j, v| t.push((j, i, v)));
        }
        Matrix::from_triplets(self.ncols(), self.nrows(), &t)
    }

    /// `(A + Aᵀ)/2`, kept in CSR.
    pub fn symmetric_part(&self) -> Matrix {
        let mut t = Vec::new();
        for i in 0..self.nrows() {
            self.for_each_in_row(i, |j, v| {
                t.push((i, j, 0.5 * v));
                t.push((j, i, 0.5 * v));
            });
        }
        Matrix::from_triplets(self.nrows(), self.ncols(), &t)
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Matrix, b: f64) -> Matrix {
        let mut t = Vec::new();
        for i in 0..self.nrows() {
            self.for_each_in_row(i, |j, v| t.push((i, j, a * v)));
            other.for_each_in_row(i, |j, v| t.push((i, j, b * v)));
        }
        Matrix::from_triplets(self.nrows(), self.ncols(), &t)
    }

    pub fn scaled(&self, a: f64) -> Matrix {
        let mut m = self.clone();
        match &mut m {
            Matrix::Dense { data, .. } => data.iter_mut().for_each(|v| *v *= a),
            Matrix::Csr { values, .. } => values.iter_mut().for_each(|v| *v *= a),
        }
        m
    }

    /// Max entrywise asymmetry relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut max_abs: f64 = 0.0;
        let mut max_diff: f64 = 0.0;
        for i in 0..self.nrows() {
            self.for_each_in_row(i, |j, v| {
                max_abs = max_abs.max(v.abs());
                if j > i {
                    max_diff = max_diff.max((v - self.get(j, i)).abs());
                } else if j < i && self.get(j, i) == 0.0 {
                    max_diff = max_diff.max(v.abs());
                }
            });
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_diff / max_abs
        }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol
    }

    /// Restriction to the rows and columns listed in `keep` (in that order).
    pub fn submatrix(&self, keep: &[usize]) -> Matrix {
        let mut map = vec![usize::MAX; self.ncols()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            self.for_each_in_row(old_i, |j, v| {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            });
        }
        Matrix::from_triplets(keep.len(), keep.len(), &t)
    }
}

/// Dense Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NonSpd("matrix is not square".into()));
        }
        let chol = Cholesky::new(m.to_dense())
            .ok_or_else(|| Error::NonSpd("Cholesky factorization failed".into()))?;
        Ok(Self { chol })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol
            .solve(&DVector::from_column_slice(b))
            .as_slice()
            .to_vec()
    }

    /// Solves `L y = b` with the lower factor.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let l = self.chol.l_dirty();
        let mut y = b.to_vec();
        let n = y.len();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y` with the lower factor.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let l = self.chol.l_dirty();
        let mut x = y.to_vec();
        let n = x.len();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

const EIG_TOL: f64 = 1e-10;
const EIG_MAX_ITER: usize = 200_000;

fn start_vector(n: usize) -> Vec<f64> {
    // Deterministic and generic enough to avoid orthogonality to any eigenvector
    // of the small structured matrices used here.
    let v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666).fract())
        .collect();
    let nv = norm2(&v);
    v.into_iter().map(|x| x / nv).collect()
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given by
/// `apply`, via power iteration on the Rayleigh quotient.
pub fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut x = start_vector(n);
    let mut lambda = 0.0;
    for _ in 0..EIG_MAX_ITER {
        let y = apply(&x);
        let next = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if (next - lambda).abs() <= EIG_TOL * next.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Smallest eigenvalue of an SPD matrix via inverse iteration on its Cholesky factor.
pub fn smallest_eigenvalue_spd(m: &Matrix) -> Result<f64> {
    let factor = SpdFactor::new(m)?;
    let inv_max = power_iteration(m.nrows(), |x| factor.solve(x));
    if inv_max <= 0.0 {
        return Err(Error::NonSpd("inverse iteration produced a non-positive value".into()));
    }
    Ok(1.0 / inv_max)
}

/// Extreme spectral constants of a square matrix `A`: the smallest eigenvalue of
/// its symmetric part (strong monotonicity) and its largest singular value
/// (Lipschitz constant).
pub fn monotonicity_constants(a: &Matrix) -> Result<(f64, f64)> {
    if !a.is_square() {
        return Err(Error::Invalid("operator matrix must be square".into()));
    }
    let sym = a.symmetric_part();
    let m = smallest_eigenvalue_spd(&sym).map_err(|_| {
        Error::NonSpd("symmetric part is not positive definite (operator not strongly monotone)".into())
    })?;
    let big = if a.is_symmetric(1e-12) {
        power_iteration(a.nrows(), |x| a.mul_vec(x))
    } else {
        power_iteration(a.nrows(), |x| a.tr_mul_vec(&a.mul_vec(x))).sqrt()
    };
    Ok((m, big.max(m)))
}

/// Largest generalized eigenvalue of `B x = λ S x` for symmetric PSD `B` and SPD `S`.
pub fn generalized_max_eigenvalue(b: &Matrix, s: &Matrix) -> Result<f64> {
    let factor = SpdFactor::new(s)?;
    Ok(power_iteration(s.nrows(), |x| {
        let y = factor.solve_upper(x);
        let z = b.mul_vec(&y);
        factor.solve_lower(&z)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    #[test]
    fn triplets_sum_duplicates() {
        let m = Matrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn dense_and_csr_products_agree() {
        let d = Matrix::from_rows(&[vec![2.0, -1.0, 0.0], vec![0.5, 3.0, 1.0], vec![0.0, 1.0, 4.0]])
            .unwrap();
        let c = Matrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, 0.5),
                (1, 1, 3.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 2, 4.0),
            ],
        );
        let x = [1.0, -2.0, 0.5];
        assert_eq!(d.mul_vec(&x), c.mul_vec(&x));
        assert_eq!(d.tr_mul_vec(&x), c.tr_mul_vec(&x));
        assert!(!d.is_symmetric(1e-12));
        assert!(d.symmetric_part().is_symmetric(0.0));
    }

    #[test]
    fn spectral_constants_match_dense_eigensolver() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]])
            .unwrap();
        let (m, big) = monotonicity_constants(&a).unwrap();
        let eig = SymmetricEigen::new(a.to_dense()).eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((m - lo).abs() <= 1e-8 * lo);
        assert!((big - hi).abs() <= 1e-8 * hi);
    }

    #[test]
    fn indefinite_symmetric_part_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(monotonicity_constants(&a), Err(Error::NonSpd(_))));
    }

    #[test]
    fn json_accepts_both_layouts() {
        let d: Matrix = serde_json::from_str(r#"{"dense": [[1.0, 2.0], [3.0, 4.0]]}"#).unwrap();
        assert_eq!(d.get(1, 0), 3.0);
        let c: Matrix = serde_json::from_str(
            r#"{"csr": {"nrows": 2, "ncols": 2, "indptr": [0, 1, 2], "indices": [1, 0], "values": [5.0, 6.0]}}"#,
        )
        .unwrap();
        assert_eq!(c.get(0, 1), 5.0);
        assert!(serde_json::from_str::<Matrix>(r#"{"dense": [[1.0], [2.0, 3.0]]}"#).is_err());
    }

    #[test]
    fn triangular_solves_compose_to_full_solve() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let f = SpdFactor::new(&a).unwrap();
        let b = [1.0, 2.0];
        let x = f.solve_upper(&f.solve_lower(&b));
        let y = f.solve(&b);
        assert!(dist2(&x, &y) < 1e-14);
    }
}
