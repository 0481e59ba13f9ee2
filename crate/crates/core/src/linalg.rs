//! Small dense linear algebra: row-major matrices, power iteration for the
//! largest singular value, and a symmetric eigensolver (Householder
//! tridiagonalization followed by QL with implicit shifts).
//!
//! These back the spectral diagnostics of the singular integral operator.
//! They are deliberately self-contained so that tests can cross-check them
//! against an unrelated library implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Scalar};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn set_column(&mut self, c: usize, column: &[T]) {
        assert_eq!(column.len(), self.rows);
        for (r, &v) in column.iter().enumerate() {
            self.data[r * self.cols + c] = v;
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x.iter()) {
                acc += *a * *b;
            }
            *yr = acc;
        }
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        for v in y.iter_mut() {
            *v = T::zero();
        }
        for (r, &xr) in x.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (c, &a) in row.iter().enumerate() {
                y[c] += a * xr;
            }
        }
    }

    /// `(A + A^T) / 2`; the matrix must be square.
    pub fn symmetrized(&self) -> Result<DenseMatrix<T>> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot symmetrize a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        let half = T::of(0.5);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, (self.get(r, c) + self.get(c, r)) * half);
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.data {
            acc += v * v;
        }
        acc.sqrt()
    }

    /// Largest deviation from symmetry, `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> Result<T> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch("asymmetry needs a square matrix".into()));
        }
        let mut m = T::zero();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                m = m.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        Ok(m)
    }
}

/// Result of the power iteration on `A^T A`.
#[derive(Clone, Debug)]
pub struct PowerIteration<T> {
    /// Estimate of the largest singular value of `A`.
    pub sigma: T,
    /// `|A v_k|` per iterate; nondecreasing up to roundoff, which the
    /// diagnostics use as a sanity invariant.
    pub history: Vec<T>,
}

/// Estimates the largest singular value of `A` by power iteration on
/// `A^T A`, from a seeded random start.
pub fn power_iteration_sigma_max<T: Scalar>(
    a: &DenseMatrix<T>,
    iterations: usize,
    seed: u64,
) -> Result<PowerIteration<T>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Domain("power iteration on an empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<T> = (0..a.cols()).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect();
    normalize(&mut v)?;
    let mut av = vec![T::zero(); a.rows()];
    let mut atav = vec![T::zero(); a.cols()];
    let mut history = Vec::with_capacity(iterations);
    let mut sigma = T::zero();
    for _ in 0..iterations {
        a.matvec(&v, &mut av);
        sigma = norm(&av);
        history.push(sigma);
        a.matvec_t(&av, &mut atav);
        let len = norm(&atav);
        if len < T::min_positive_value() {
            // v is (numerically) in the kernel of A; sigma estimate is 0.
            break;
        }
        for (dst, &src) in v.iter_mut().zip(atav.iter()) {
            *dst = src / len;
        }
    }
    Ok(PowerIteration { sigma, history })
}

fn norm<T: Scalar>(v: &[T]) -> T {
    let mut acc = T::zero();
    for &x in v {
        acc += x * x;
    }
    acc.sqrt()
}

fn normalize<T: Scalar>(v: &mut [T]) -> Result<()> {
    let len = norm(v);
    if len < T::min_positive_value() {
        return Err(Error::Domain("cannot normalize a zero vector".into()));
    }
    for x in v.iter_mut() {
        *x /= len;
    }
    Ok(())
}

/// Solves `A x = b` by LU decomposition with partial pivoting. `A` is
/// consumed as the factorization workspace.
pub fn lu_solve<T: Scalar>(mut a: DenseMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "LU needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side length {} vs matrix size {n}",
            b.len()
        )));
    }
    let mut x = b.to_vec();
    for k in 0..n {
        let mut pivot = k;
        let mut best = a.get(k, k).abs();
        for r in (k + 1)..n {
            let v = a.get(r, k).abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < T::min_positive_value() {
            return Err(Error::Domain(format!(
                "matrix is singular at elimination step {k}"
            )));
        }
        if pivot != k {
            for c in 0..n {
                let tmp = a.get(k, c);
                a.set(k, c, a.get(pivot, c));
                a.set(pivot, c, tmp);
            }
            x.swap(k, pivot);
        }
        let diag = a.get(k, k);
        let xk = x[k];
        for r in (k + 1)..n {
            let factor = a.get(r, k) / diag;
            a.set(r, k, factor);
            for c in (k + 1)..n {
                a.set(r, c, a.get(r, c) - factor * a.get(k, c));
            }
            x[r] -= factor * xk;
        }
    }
    for k in (0..n).rev() {
        for c in (k + 1)..n {
            let xc = x[c];
            x[k] -= a.get(k, c) * xc;
        }
        x[k] /= a.get(k, k);
    }
    Ok(x)
}

/// All eigenvalues of a symmetric matrix, ascending. Fails if the matrix is
/// not square or visibly asymmetric.
pub fn symmetric_eigenvalues<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch("eigenvalues need a square matrix".into()));
    }
    let scale = a.frobenius_norm();
    if a.asymmetry()? > T::of(1e-8) * scale.max(T::one()) {
        return Err(Error::Domain(
            "matrix is not symmetric; symmetrize it first".into(),
        ));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut work: Vec<Vec<T>> = (0..n)
        .map(|r| (0..n).map(|c| a.get(r, c)).collect())
        .collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut work, &mut d, &mut e);
    ql_implicit(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(d)
}

/// Householder reduction of a symmetric matrix to tridiagonal form
/// (eigenvalues only; no eigenvector accumulation). On exit `d` holds the
/// diagonal and `e[1..]` the subdiagonal.
fn tridiagonalize<T: Scalar>(a: &mut [Vec<T>], d: &mut [T], e: &mut [T]) {
    let n = a.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let mut scale = T::zero();
            for k in 0..=l {
                scale += a[i][k].abs();
            }
            if scale == T::zero() {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] /= scale;
                    h += a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i][l] = f - g;
                let mut f_acc = T::zero();
                for j in 0..=l {
                    let mut g_acc = T::zero();
                    for k in 0..=j {
                        g_acc += a[j][k] * a[i][k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += a[k][j] * a[i][k];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * a[i][j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * a[i][k];
                        a[j][k] -= delta;
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    e[0] = T::zero();
    for i in 0..n {
        d[i] = a[i][i];
    }
}

/// QL algorithm with implicit shifts on a tridiagonal matrix.
fn ql_implicit<T: Scalar>(d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find the first negligible subdiagonal element at or after l.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Domain(
                    "QL iteration failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (e[l] + e[l]);
            let mut r = g.hypot(T::one());
            let sign_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + (c + c) * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}
