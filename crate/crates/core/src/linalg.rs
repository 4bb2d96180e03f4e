//! Dense and sparse kernels shared by the emulators: CSR matrices, largest
//! singular values by power iteration, and Cholesky solves for the
//! symmetric positive definite ridge systems.

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};

/// Compressed sparse row matrix. Rows are sorted by (row, col) at
/// construction so identical triplet sets always produce identical storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Build from triplets; duplicate positions are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Result<Self> {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        for w in triplets.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::config(format!(
                    "duplicate sparse entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &(i, j, v) in &triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::config(format!("sparse entry ({i}, {j}) out of bounds")));
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Csr {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Rebuild from raw CSR storage (checkpoint reload path).
    pub fn from_raw_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1
            || row_ptr.first() != Some(&0)
            || row_ptr.last() != Some(&values.len())
            || col_idx.len() != values.len()
            || row_ptr.windows(2).any(|w| w[0] > w[1])
            || col_idx.iter().any(|&j| j >= n_cols)
        {
            return Err(Error::Integrity("malformed CSR storage".into()));
        }
        Ok(Csr {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: ArrayView1<T>, mut y: ArrayViewMut1<T>) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        let x = x.as_slice().expect("contiguous input");
        for i in 0..self.n_rows {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: ArrayView1<T>, mut y: ArrayViewMut1<T>) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        y.fill(T::zero());
        for i in 0..self.n_rows {
            let xi = x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
    }

    /// `Y += A X` where `X` and `Y` are row-major with one column per lane.
    /// Used to step many hidden states that share the adjacency matrix.
    pub fn matmul_add(&self, x: ArrayView2<T>, y: &mut Array2<T>) {
        debug_assert_eq!(x.nrows(), self.n_cols);
        debug_assert_eq!(y.nrows(), self.n_rows);
        debug_assert_eq!(x.ncols(), y.ncols());
        let lanes = x.ncols();
        let xs = x.as_slice().expect("contiguous input");
        let ys = y.as_slice_mut().expect("contiguous output");
        for i in 0..self.n_rows {
            let out = &mut ys[i * lanes..(i + 1) * lanes];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                let row = &xs[self.col_idx[k] * lanes..self.col_idx[k] * lanes + lanes];
                for (o, &r) in out.iter_mut().zip(row) {
                    *o += a * r;
                }
            }
        }
    }
}

fn normalize<T: Scalar>(v: &mut Array1<T>) -> T {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn power_iteration<T, F>(n: usize, tol: f64, max_iter: usize, mut gram_apply: F) -> T
where
    T: Scalar,
    F: FnMut(ArrayView1<T>, &mut Array1<T>),
{
    // Deterministic start vector; a fixed stream keeps results reproducible.
    let mut rng = CounterRng::new(0x5157_u64, n as u64);
    let mut v = Array1::from_shape_fn(n, |_| T::cast(rng.uniform_sym()));
    normalize(&mut v);
    let mut w = Array1::zeros(n);
    let mut sigma_prev = T::zero();
    let tol = T::cast(tol);
    for _ in 0..max_iter {
        gram_apply(v.view(), &mut w);
        std::mem::swap(&mut v, &mut w);
        let lambda = normalize(&mut v);
        let sigma = lambda.sqrt();
        if (sigma - sigma_prev).abs() <= tol * sigma.max(T::one()) {
            return sigma;
        }
        sigma_prev = sigma;
    }
    sigma_prev
}

/// Largest singular value of a dense matrix by power iteration on the Gram
/// matrix `A^T A` (iterates in the smaller of the two dimensions).
pub fn sigma_max_dense<T: Scalar>(a: ArrayView2<T>, tol: f64, max_iter: usize) -> T {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return T::zero();
    }
    if n <= m {
        let mut tmp = Array1::zeros(m);
        power_iteration(n, tol, max_iter, |v, out| {
            ndarray::linalg::general_mat_vec_mul(T::one(), &a, &v, T::zero(), &mut tmp);
            ndarray::linalg::general_mat_vec_mul(T::one(), &a.t(), &tmp, T::zero(), out);
        })
    } else {
        let mut tmp = Array1::zeros(n);
        power_iteration(m, tol, max_iter, |v, out| {
            ndarray::linalg::general_mat_vec_mul(T::one(), &a.t(), &v, T::zero(), &mut tmp);
            ndarray::linalg::general_mat_vec_mul(T::one(), &a, &tmp, T::zero(), out);
        })
    }
}

/// Largest singular value of a sparse matrix.
pub fn sigma_max_csr<T: Scalar>(a: &Csr<T>, tol: f64, max_iter: usize) -> T {
    if a.nnz() == 0 {
        return T::zero();
    }
    let mut tmp = Array1::zeros(a.n_rows());
    power_iteration(a.n_cols(), tol, max_iter, |v, out| {
        a.matvec(v, tmp.view_mut());
        a.matvec_t(tmp.view(), out.view_mut());
    })
}

/// In-place lower Cholesky factorization. Reads the lower triangle of `a`
/// and overwrites it with `L` such that `L L^T = A`.
pub fn cholesky_in_place<T: Scalar>(a: &mut Array2<T>) -> Result<()> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let stride = n;
    let data = a.as_slice_mut().expect("contiguous matrix");
    let mut max_diag = T::zero();
    for j in 0..n {
        let d = data[j * stride + j];
        if d > max_diag {
            max_diag = d;
        }
    }
    for j in 0..n {
        let mut d = data[j * stride + j];
        for k in 0..j {
            let l = data[j * stride + k];
            d -= l * l;
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix not positive definite at pivot {j} (value {d:e}, max diagonal {max_diag:e})"
            )));
        }
        let ljj = d.sqrt();
        data[j * stride + j] = ljj;
        for i in (j + 1)..n {
            let mut s = data[i * stride + j];
            for k in 0..j {
                s -= data[i * stride + k] * data[j * stride + k];
            }
            data[i * stride + j] = s / ljj;
        }
    }
    Ok(())
}

/// Solve `A X = B` for SPD `A` given its lower Cholesky factor.
/// `b` holds one right-hand side per column and is overwritten with `X`.
pub fn cholesky_solve_in_place<T: Scalar>(l: &Array2<T>, b: &mut Array2<T>) {
    let n = l.nrows();
    debug_assert_eq!(b.nrows(), n);
    let nrhs = b.ncols();
    let ls = l.as_slice().expect("contiguous factor");
    let bs = b.as_slice_mut().expect("contiguous rhs");
    // forward: L y = b
    for i in 0..n {
        let (done, rest) = bs.split_at_mut(i * nrhs);
        let bi = &mut rest[..nrhs];
        for j in 0..i {
            let lij = ls[i * n + j];
            let bj = &done[j * nrhs..j * nrhs + nrhs];
            for (x, &y) in bi.iter_mut().zip(bj) {
                *x -= lij * y;
            }
        }
        let lii = ls[i * n + i];
        for x in bi.iter_mut() {
            *x /= lii;
        }
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let (_, rest) = bs.split_at_mut(i * nrhs);
        let (bi, below) = rest.split_at_mut(nrhs);
        for j in (i + 1)..n {
            let lji = ls[j * n + i];
            let bj = &below[(j - i - 1) * nrhs..(j - i - 1) * nrhs + nrhs];
            for (x, &y) in bi.iter_mut().zip(bj) {
                *x -= lji * y;
            }
        }
        let lii = ls[i * n + i];
        for x in bi.iter_mut() {
            *x /= lii;
        }
    }
}

/// Solve `A X = B` for symmetric positive definite `A`, consuming `A`.
pub fn solve_spd<T: Scalar>(mut a: Array2<T>, mut b: Array2<T>) -> Result<Array2<T>> {
    cholesky_in_place(&mut a)?;
    cholesky_solve_in_place(&a, &mut b);
    Ok(b)
}
