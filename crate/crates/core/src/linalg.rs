//! Small dense matrices and block-tridiagonal solves.
//!
//! The scheme produces one block-tridiagonal system per time level, with
//! `n x n` blocks on three diagonals. [`block_thomas_solve`] is the
//! production path; [`dense_solve_oracle`] expands the same system into a
//! full matrix and is kept as an independent reference for tests and the
//! self-test suites.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Relative pivot threshold used by the block factorizations.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular block at row {row}: pivot {pivot:e} below {tol:e} of block norm")]
    SingularBlock { row: usize, pivot: f64, tol: f64 },
    #[error("singular dense matrix (pivot {pivot:e} in column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("inconsistent system dimensions: {0}")]
    Dimension(String),
}

/// Square matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    size: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices. Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for row in rows {
            assert_eq!(row.len(), size, "matrix rows must form a square array");
            data.extend_from_slice(row);
        }
        Self { size, data }
    }

    pub fn from_row_major(size: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), size * size);
        Self { size, data }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.size);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_mat(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.size;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub_assign(&mut self, other: &DenseMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    /// LU factorization with partial pivoting inside the block.
    ///
    /// `row` only tags the error so callers can locate the failing block row.
    pub fn lu(&self, row: usize) -> Result<LuFactors, LinalgError> {
        let n = self.size;
        let scale = self.max_abs();
        let tol = SINGULAR_PIVOT_TOL * scale;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot_abs) =
                (col..n)
                    .map(|r| (r, lu[r * n + col].abs()))
                    .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= tol || scale == 0.0 {
                return Err(LinalgError::SingularBlock {
                    row,
                    pivot: pivot_abs,
                    tol,
                });
            }
            if pivot_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for j in col + 1..n {
                        lu[r * n + j] -= factor * lu[col * n + j];
                    }
                }
            }
        }
        Ok(LuFactors { size: n, lu, perm })
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.size + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.size + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.size).map(|i| self.row(i)).collect();
        f.debug_tuple("DenseMatrix").field(&rows).finish()
    }
}

/// Packed `PA = LU` factors of a [`DenseMatrix`].
#[derive(Debug, Clone)]
pub struct LuFactors {
    size: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.size;
        let permuted: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&permuted);
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * b[j]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * b[j]).sum();
            b[i] = (b[i] - s) / self.lu[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `X = A^{-1} B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.size;
        let mut out = DenseMatrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

/// Linear system with `n x n` blocks on three diagonals.
///
/// Row `r` reads `lower[r-1] x[r-1] + diag[r] x[r] + upper[r] x[r+1] = rhs[r]`,
/// so `lower` and `upper` each hold one block fewer than `diag`.
#[derive(Debug, Clone)]
pub struct BlockTridiagonalSystem {
    pub block_size: usize,
    pub lower: Vec<DenseMatrix>,
    pub diag: Vec<DenseMatrix>,
    pub upper: Vec<DenseMatrix>,
    pub rhs: Vec<Vec<f64>>,
}

impl BlockTridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn check_dimensions(&self) -> Result<(), LinalgError> {
        let m = self.diag.len();
        let n = self.block_size;
        let off = m.saturating_sub(1);
        if self.lower.len() != off || self.upper.len() != off || self.rhs.len() != m {
            return Err(LinalgError::Dimension(format!(
                "{m} diagonal blocks need {off} lower/upper blocks and {m} rhs vectors, got {}/{}/{}",
                self.lower.len(),
                self.upper.len(),
                self.rhs.len()
            )));
        }
        let blocks_ok = self.diag.iter().chain(&self.lower).chain(&self.upper).all(|b| b.size() == n);
        if !blocks_ok || self.rhs.iter().any(|r| r.len() != n) {
            return Err(LinalgError::Dimension(format!("blocks must be {n}x{n}")));
        }
        Ok(())
    }

    /// Computes `M x` for a block vector `x`.
    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.len();
        let n = self.block_size;
        let mut out = vec![vec![0.0; n]; m];
        let mut tmp = vec![0.0; n];
        for r in 0..m {
            self.diag[r].mul_vec_into(&x[r], &mut out[r]);
            if r > 0 {
                self.lower[r - 1].mul_vec_into(&x[r - 1], &mut tmp);
                out[r].iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            }
            if r + 1 < m {
                self.upper[r].mul_vec_into(&x[r + 1], &mut tmp);
                out[r].iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            }
        }
        out
    }

    /// Relative residual `||rhs - M x||_inf / ||rhs||_inf`, or the absolute
    /// residual when the right-hand side vanishes.
    pub fn residual(&self, x: &[Vec<f64>]) -> f64 {
        let mx = self.apply(x);
        let res = max_abs_diff(&self.rhs, &mx);
        let scale = max_abs(&self.rhs);
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }

    /// Expands into a dense `(m n) x (m n)` row-major matrix.
    pub fn to_dense(&self) -> (usize, Vec<f64>) {
        let m = self.len();
        let n = self.block_size;
        let dim = m * n;
        let mut a = vec![0.0; dim * dim];
        let mut put = |br: usize, bc: usize, block: &DenseMatrix| {
            for i in 0..n {
                for j in 0..n {
                    a[(br * n + i) * dim + bc * n + j] = block[(i, j)];
                }
            }
        };
        for r in 0..m {
            put(r, r, &self.diag[r]);
            if r > 0 {
                put(r, r - 1, &self.lower[r - 1]);
            }
            if r + 1 < m {
                put(r, r + 1, &self.upper[r]);
            }
        }
        (dim, a)
    }
}

pub(crate) fn max_abs(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Block Thomas algorithm: forward elimination with per-block LU, then back
/// substitution. No pivoting across block rows.
pub fn block_thomas_solve(sys: &BlockTridiagonalSystem) -> Result<Vec<Vec<f64>>, LinalgError> {
    sys.check_dimensions()?;
    let m = sys.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    // upper_mod[r] = S_r^{-1} U_r,  rhs_mod[r] = S_r^{-1} (d_r - L_{r-1} rhs_mod[r-1])
    let mut upper_mod: Vec<DenseMatrix> = Vec::with_capacity(m.saturating_sub(1));
    let mut rhs_mod: Vec<Vec<f64>> = Vec::with_capacity(m);
    for r in 0..m {
        let mut schur = sys.diag[r].clone();
        let mut d = sys.rhs[r].clone();
        if r > 0 {
            let lower = &sys.lower[r - 1];
            schur.sub_assign(&lower.mul_mat(&upper_mod[r - 1]));
            let correction = lower.mul_vec(&rhs_mod[r - 1]);
            d.iter_mut().zip(&correction).for_each(|(a, c)| *a -= c);
        }
        let lu = schur.lu(r)?;
        lu.solve_in_place(&mut d);
        rhs_mod.push(d);
        if r + 1 < m {
            upper_mod.push(lu.solve_matrix(&sys.upper[r]));
        }
    }
    for r in (0..m - 1).rev() {
        let correction = upper_mod[r].mul_vec(&rhs_mod[r + 1]);
        rhs_mod[r].iter_mut().zip(&correction).for_each(|(a, c)| *a -= c);
    }
    Ok(rhs_mod)
}

/// Reference solve: expands the block system and runs a dense LU with
/// partial pivoting (nalgebra). Independent of the block path.
pub fn dense_solve_oracle(sys: &BlockTridiagonalSystem) -> Result<Vec<Vec<f64>>, LinalgError> {
    sys.check_dimensions()?;
    let m = sys.len();
    let n = sys.block_size;
    if m == 0 {
        return Ok(Vec::new());
    }
    let (dim, a) = sys.to_dense();
    let matrix = DMatrix::from_row_slice(dim, dim, &a);
    let b = DVector::from_iterator(dim, sys.rhs.iter().flatten().copied());
    let lu = matrix.lu();
    let u = lu.u();
    let scale = a.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    for c in 0..dim {
        let p = u[(c, c)].abs();
        if p <= SINGULAR_PIVOT_TOL * scale || scale == 0.0 {
            return Err(LinalgError::SingularMatrix { column: c, pivot: p });
        }
    }
    let x = lu.solve(&b).ok_or(LinalgError::SingularMatrix { column: 0, pivot: 0.0 })?;
    Ok((0..m).map(|r| x.as_slice()[r * n..(r + 1) * n].to_vec()).collect())
}

/// Outcome of an M-matrix structure check on an assembled system.
#[derive(Debug, Clone, Serialize)]
pub struct MMatrixReport {
    pub sign_pattern_ok: bool,
    pub diagonally_dominant: bool,
    pub e_positive: bool,
    /// Minimum entry of `M (1, ..., 1)`.
    pub min_margin: f64,
    /// Scalar row at which the first violation occurred, if any.
    pub first_violation: Option<usize>,
}

impl MMatrixReport {
    pub fn passed(&self) -> bool {
        self.sign_pattern_ok && self.diagonally_dominant && self.e_positive
    }
}

/// Checks nonpositive off-diagonals, strict row dominance and
/// e-positivity (`M e > 0`), scanning the expanded matrix row by row.
pub fn m_matrix_check(sys: &BlockTridiagonalSystem) -> MMatrixReport {
    let m = sys.len();
    let n = sys.block_size;
    let mut report = MMatrixReport {
        sign_pattern_ok: true,
        diagonally_dominant: true,
        e_positive: true,
        min_margin: f64::INFINITY,
        first_violation: None,
    };
    for r in 0..m {
        for i in 0..n {
            let row = r * n + i;
            let diag = sys.diag[r][(i, i)];
            let mut off_abs = 0.0;
            let mut row_sum = diag;
            let mut sign_ok = true;
            let mut visit = |v: f64| {
                if v > 0.0 {
                    sign_ok = false;
                }
                off_abs += v.abs();
                row_sum += v;
            };
            for j in 0..n {
                if j != i {
                    visit(sys.diag[r][(i, j)]);
                }
            }
            if r > 0 {
                sys.lower[r - 1].row(i).iter().for_each(|&v| visit(v));
            }
            if r + 1 < m {
                sys.upper[r].row(i).iter().for_each(|&v| visit(v));
            }
            let dominant = diag > off_abs;
            let positive = row_sum > 0.0;
            report.min_margin = report.min_margin.min(row_sum);
            if !(sign_ok && dominant && positive) && report.first_violation.is_none() {
                report.first_violation = Some(row);
            }
            report.sign_pattern_ok &= sign_ok;
            report.diagonally_dominant &= dominant;
            report.e_positive &= positive;
        }
    }
    if m == 0 {
        report.min_margin = 0.0;
    }
    report
}
