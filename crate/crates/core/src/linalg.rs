//! Sparse symmetric storage and an envelope (skyline) Cholesky solver.
//!
//! The mass and stiffness matrices share one structural pattern, so the
//! backward Euler operator `M + dt A` is a value-wise combination. The
//! constrained system is factorized once on the free DOFs and reused by every
//! forward and adjoint step.

use crate::{Error, Result};

/// Relative pivot threshold below which a matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-13;
/// Required relative residual of [`linear_solve`].
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Square sparse matrix in compressed row storage with sorted columns. Both
/// triangles are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Pattern coupling every pair of indices that appear together in one group
    /// (one group per element), with zero values.
    pub fn from_groups<'a>(n: usize, groups: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for g in groups {
            for &i in g {
                rows[i].extend_from_slice(g);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, mut r) in rows.into_iter().enumerate() {
            r.push(i);
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from dense rows, keeping the nonzero entries and the
    /// diagonal.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 || i == j {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| r.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`, which must be part of the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `a * self + b * other` for matrices sharing one pattern.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        assert!(self.same_pattern(other), "patterns differ");
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        out
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Envelope Cholesky factor `L L^T` of the principal submatrix on a set of
/// free indices.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    /// Global index of each free unknown.
    free: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        Self::factor_free(matrix, &vec![true; matrix.dim()])
    }

    /// Factorizes the rows and columns with `is_free[i]`.
    pub fn factor_free(matrix: &CsrMatrix, is_free: &[bool]) -> Result<Self> {
        let n_all = matrix.dim();
        let mut local = vec![usize::MAX; n_all];
        let free: Vec<usize> = (0..n_all).filter(|&i| is_free[i]).collect();
        for (k, &i) in free.iter().enumerate() {
            local[i] = k;
        }
        let n = free.len();
        let mut first = vec![0; n];
        for (k, &i) in free.iter().enumerate() {
            first[k] = matrix
                .row(i)
                .filter_map(|(j, _)| (local[j] != usize::MAX).then_some(local[j]))
                .min()
                .unwrap_or(k)
                .min(k);
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for k in 0..n {
            start.push(start[k] + k - first[k] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for (k, &i) in free.iter().enumerate() {
            for (j, v) in matrix.row(i) {
                let l = local[j];
                if l != usize::MAX && l <= k {
                    data[start[k] + l - first[k]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = start[j];
                let mut s = data[row_i + j - fi];
                let li = &data[row_i + k0 - fi..row_i + j - fi];
                let lj = &data[row_j + k0 - fj..row_j + j - fj];
                s -= li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                data[row_i + j - fi] = s / data[row_j + j - fj];
            }
            let diag_pos = row_i + i - fi;
            let original = data[diag_pos];
            let d = original
                - data[row_i..diag_pos].iter().map(|a| a * a).sum::<f64>();
            if d.is_nan() || d <= PIVOT_TOL * original.abs() {
                return Err(Error::SolverFailure {
                    reason: format!("nonpositive pivot {d:.3e} at unknown {}", free[i]),
                    residual: f64::NAN,
                });
            }
            data[diag_pos] = d.sqrt();
        }
        Ok(Self {
            free,
            first,
            start,
            data,
        })
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Stored envelope entries, for diagnostics.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves in place on a vector indexed by free unknowns.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi]
                .iter()
                .zip(&x[fi..i])
                .map(|(a, b)| a * b)
                .sum();
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (xk, l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= l * xi;
            }
        }
    }
}

/// A symmetric system with some unknowns pinned to given values, factorized
/// once on the free unknowns. Pinned columns are moved to the right-hand side,
/// which keeps the reduced operator symmetric.
#[derive(Clone, Debug)]
pub struct ConstrainedSystem {
    matrix: CsrMatrix,
    is_free: Vec<bool>,
    chol: EnvelopeCholesky,
}

impl ConstrainedSystem {
    pub fn new(matrix: CsrMatrix, is_free: Vec<bool>) -> Result<Self> {
        let chol = EnvelopeCholesky::factor_free(&matrix, &is_free)?;
        Ok(Self {
            matrix,
            is_free,
            chol,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_free(&self) -> &[bool] {
        &self.is_free
    }

    /// Solves for the free unknowns with the pinned ones taken from `fixed`
    /// (entries at free positions are ignored). The relative residual on the
    /// free rows is driven below [`RESIDUAL_TOL`] by iterative refinement.
    pub fn solve(&self, rhs: &[f64], fixed: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.dim();
        let mut x: Vec<f64> = (0..n)
            .map(|i| if self.is_free[i] { 0.0 } else { fixed[i] })
            .collect();
        let kx = self.matrix.mul_vec(&x);
        let free = self.chol.free_indices();
        let b: Vec<f64> = free.iter().map(|&i| rhs[i] - kx[i]).collect();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut y = b.clone();
        self.chol.solve_in_place(&mut y);
        for (k, &i) in free.iter().enumerate() {
            x[i] = y[k];
        }
        let mut residual = 0.0;
        for _ in 0..3 {
            let ax = self.matrix.mul_vec(&x);
            let mut r: Vec<f64> = free.iter().map(|&i| rhs[i] - ax[i]).collect();
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            residual = if b_norm > 0.0 { r_norm / b_norm } else { r_norm };
            if residual <= RESIDUAL_TOL {
                return Ok(x);
            }
            self.chol.solve_in_place(&mut r);
            for (k, &i) in free.iter().enumerate() {
                x[i] += r[k];
            }
        }
        Err(Error::SolverFailure {
            reason: "relative residual above tolerance after refinement".into(),
            residual,
        })
    }
}

/// Solves `system x = rhs` for a symmetric positive definite system and checks
/// the relative residual.
pub fn linear_solve(system: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let chol = EnvelopeCholesky::factor(system)?;
    let mut x = rhs.to_vec();
    chol.solve_in_place(&mut x);
    let mut residual = relative_residual(system, &x, rhs);
    if residual > RESIDUAL_TOL {
        // one step of iterative refinement
        let ax = system.mul_vec(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        chol.solve_in_place(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        residual = relative_residual(system, &x, rhs);
    }
    if residual > RESIDUAL_TOL {
        return Err(Error::SolverFailure {
            reason: "relative residual above tolerance".into(),
            residual,
        });
    }
    Ok(x)
}

pub fn relative_residual(system: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = system.mul_vec(x);
    let r = ax.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b == 0.0 {
        r
    } else {
        r / b
    }
}

/// Spectral condition number estimate of the diagonally scaled matrix on the
/// free unknowns, from power iteration on `S` and on `S^{-1}`.
pub fn condition_estimate(matrix: &CsrMatrix, is_free: &[bool], iterations: usize) -> Result<f64> {
    let free: Vec<usize> = (0..matrix.dim()).filter(|&i| is_free[i]).collect();
    let n = free.len();
    let mut local = vec![usize::MAX; matrix.dim()];
    for (k, &i) in free.iter().enumerate() {
        local[i] = k;
    }
    let scale: Vec<f64> = free.iter().map(|&i| 1.0 / matrix.get(i, i).sqrt()).collect();
    let mut dense_rows = vec![Vec::new(); n];
    for (k, &i) in free.iter().enumerate() {
        for (j, v) in matrix.row(i) {
            if local[j] != usize::MAX {
                dense_rows[k].push((local[j], v * scale[k] * scale[local[j]]));
            }
        }
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        dense_rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    };
    let pattern: Vec<Vec<usize>> = dense_rows
        .iter()
        .map(|r| r.iter().map(|&(j, _)| j).collect())
        .collect();
    let mut scaled = CsrMatrix::from_groups(n, pattern.iter().map(Vec::as_slice));
    for (k, r) in dense_rows.iter().enumerate() {
        for &(j, v) in r {
            scaled.add(k, j, v);
        }
    }
    let chol = EnvelopeCholesky::factor(&scaled)?;
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let start: Vec<f64> = (0..n).map(|k| 1.0 + (k % 7) as f64 * 0.1).collect();
    let mut x = start.clone();
    let mut lambda_max = 0.0;
    for _ in 0..iterations {
        let y = apply(&x);
        lambda_max = norm(&y) / norm(&x);
        let ny = norm(&y);
        x = y.iter().map(|v| v / ny).collect();
    }
    let mut x = start;
    let mut inv_max = 0.0;
    for _ in 0..iterations {
        let mut y = x.clone();
        chol.solve_in_place(&mut y);
        inv_max = norm(&y) / norm(&x);
        let ny = norm(&y);
        x = y.iter().map(|v| v / ny).collect();
    }
    Ok(lambda_max * inv_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1
    }

    fn to_csr(a: &DMatrix<f64>) -> CsrMatrix {
        let rows: Vec<Vec<f64>> = (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
            .collect();
        CsrMatrix::from_dense(&rows)
    }

    #[test]
    fn identity_returns_rhs() {
        let rhs = vec![1.5, -2.0, 3.25, 0.0];
        let x = linear_solve(&CsrMatrix::identity(4), &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn random_spd_recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(10, &mut rng);
        let x_known: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = (&a * nalgebra::DVector::from_vec(x_known.clone())).data.as_vec().clone();
        let x = linear_solve(&to_csr(&a), &rhs).unwrap();
        for (u, v) in x.iter().zip(&x_known) {
            assert!((u - v).abs() <= 1e-10);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        // 1D Neumann Laplacian: constants in the kernel
        let n = 6;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            if i == 0 || i == n - 1 { 1.0 } else { 2.0 }
                        } else if usize::abs_diff(i, j) == 1 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let err = linear_solve(&CsrMatrix::from_dense(&rows), &vec![0.0; n]).unwrap_err();
        assert!(matches!(err, Error::SolverFailure { .. }));
    }

    #[test]
    fn factor_on_free_subset_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(12, &mut rng);
        let is_free: Vec<bool> = (0..12).map(|i| i % 3 != 1).collect();
        let chol = EnvelopeCholesky::factor_free(&to_csr(&a), &is_free).unwrap();
        let free = chol.free_indices().to_vec();
        let sub = DMatrix::from_fn(free.len(), free.len(), |i, j| a[(free[i], free[j])]);
        let b: Vec<f64> = (0..free.len()).map(|k| k as f64 - 3.0).collect();
        let oracle = sub.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        let mut x = b;
        chol.solve_in_place(&mut x);
        for (u, v) in x.iter().zip(oracle.iter()) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn pattern_from_groups_and_combination() {
        let groups: [&[usize]; 2] = [&[0, 1, 2], &[2, 3]];
        let mut a = CsrMatrix::from_groups(4, groups);
        assert_eq!(a.nnz(), 9 + 4 - 1);
        a.add(0, 2, 1.0);
        a.add(2, 0, 1.0);
        a.add(3, 3, 2.0);
        let b = a.linear_combination(2.0, &CsrMatrix::from_groups(4, groups), 0.0);
        assert_eq!(b.get(0, 2), 2.0);
        assert_eq!(b.get(0, 3), 0.0);
        assert_eq!(b.symmetry_defect(), 0.0);
        assert_eq!(b.mul_vec(&[0.0, 0.0, 1.0, 1.0]), vec![2.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn condition_of_scaled_identity_is_one() {
        let mut a = CsrMatrix::identity(5);
        a.add(2, 2, 3.0);
        let c = condition_estimate(&a, &[true; 5], 20).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }
}
