//! Thin bridge between `ndarray` storage and `faer` kernels.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::matrix_free::LinOp;
use faer::matrix_free::eigen::{partial_self_adjoint_eigen, partial_self_adjoint_eigen_scratch, PartialEigenParams};
use faer::{Col, Mat, MatMut, MatRef, Par, Side};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest acceptable Gram condition number before atoms count as dependent.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

pub(crate) fn to_faer(a: ArrayView2<'_, Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: MatRef<'_, Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &Array2<Complex64>) -> Result<(Vec<f64>, Array2<Complex64>)> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::Dimension(format!("eigen-decomposition of a {n}x{m} matrix")));
    }
    let fa = to_faer(a.view());
    hermitian_eigen_faer(fa.as_ref())
}

pub(crate) fn hermitian_eigen_faer(a: MatRef<'_, Complex64>) -> Result<(Vec<f64>, Array2<Complex64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::domain(format!("eigen-decomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|k| s[k].re).collect();
    order.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
    let values = order.iter().map(|&k| vals[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| u[(i, order[j])]);
    Ok((values, vectors))
}

/// Residual bound `||C v - lambda v|| <= RESIDUAL_TOL * trace(C)` accepted
/// from the iterative eigensolver.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Dimensions at or below this always use the dense eigen-decomposition.
const DENSE_LIMIT: usize = 256;

/// The operator `Y Y^H / L` for a `dim x L` data matrix `Y`, applied without
/// forming the product.
#[derive(Debug)]
pub(crate) struct SampleCovariance<'a> {
    y: MatRef<'a, Complex64>,
}

impl<'a> SampleCovariance<'a> {
    pub(crate) fn new(y: MatRef<'a, Complex64>) -> Self {
        SampleCovariance { y }
    }

    fn scale(&self) -> f64 {
        1.0 / self.y.ncols().max(1) as f64
    }

    pub(crate) fn trace(&self) -> f64 {
        self.y.squared_norm_l2() * self.scale()
    }

    pub(crate) fn dense(&self) -> Mat<Complex64> {
        let mut c = self.y * self.y.adjoint();
        c *= faer::Scale(Complex64::new(self.scale(), 0.0));
        c
    }
}

impl LinOp<Complex64> for SampleCovariance<'_> {
    fn apply_scratch(&self, _rhs_ncols: usize, _par: Par) -> StackReq {
        StackReq::EMPTY
    }

    fn nrows(&self) -> usize {
        self.y.nrows()
    }

    fn ncols(&self) -> usize {
        self.y.nrows()
    }

    fn apply(&self, out: MatMut<'_, Complex64>, rhs: MatRef<'_, Complex64>, _par: Par, _stack: &mut MemStack) {
        let mut out = out;
        let tmp = self.y.adjoint() * rhs;
        out.copy_from(self.y * &tmp);
        out *= faer::Scale(Complex64::new(self.scale(), 0.0));
    }

    fn conj_apply(&self, out: MatMut<'_, Complex64>, rhs: MatRef<'_, Complex64>, _par: Par, _stack: &mut MemStack) {
        let mut out = out;
        let tmp = self.y.transpose() * rhs;
        out.copy_from(self.y.conjugate() * &tmp);
        out *= faer::Scale(Complex64::new(self.scale(), 0.0));
    }
}

/// Orthonormal eigenvectors of the `k` largest eigenvalues of a sample
/// covariance, as columns ordered by ascending eigenvalue.
///
/// Large problems use a restarted Lanczos iteration on the implicit operator
/// and fall back to the dense decomposition when it does not converge to
/// [`RESIDUAL_TOL`].
pub(crate) fn dominant_eigenvectors(c: &SampleCovariance<'_>, k: usize) -> Result<Array2<Complex64>> {
    let n = c.nrows();
    if k >= n {
        return Err(Error::Rank { requested: k, dim: n });
    }
    if n > DENSE_LIMIT.max(4 * k) {
        if let Some(v) = lanczos_dominant(c, k) {
            return Ok(v);
        }
    }
    let (_, vectors) = hermitian_eigen_faer(c.dense().as_ref())?;
    Ok(vectors.slice(ndarray::s![.., n - k..]).to_owned())
}

fn lanczos_dominant(c: &SampleCovariance<'_>, k: usize) -> Option<Array2<Complex64>> {
    let n = c.nrows();
    let trace = c.trace();
    if !(trace > 0.0 && trace.is_finite()) {
        return None;
    }
    let params = PartialEigenParams::default();
    let req = partial_self_adjoint_eigen_scratch::<Complex64>(c, k, Par::Seq, params);
    let mut buf = MemBuffer::new(req);
    let stack = MemStack::new(&mut buf);
    let mut vecs = Mat::<Complex64>::zeros(n, k);
    let mut vals = vec![Complex64::new(0.0, 0.0); k];
    // fixed, generic start vector keeps the result deterministic
    let v0 = Col::<Complex64>::from_fn(n, |i| Complex64::new(1.0, 0.5 * ((i % 7) as f64 - 3.0) / 3.0));
    let info = partial_self_adjoint_eigen(
        vecs.as_mut(),
        &mut vals,
        c,
        v0.as_ref(),
        1e-3 * RESIDUAL_TOL * trace,
        Par::Seq,
        stack,
        params,
    );
    if info.n_converged_eigen < k {
        return None;
    }
    let mut cv = Mat::<Complex64>::zeros(n, k);
    c.apply(cv.as_mut(), vecs.as_ref(), Par::Seq, MemStack::new(&mut MemBuffer::new(StackReq::EMPTY)));
    for (j, lambda) in vals.iter().enumerate() {
        let lambda = lambda.re;
        let res = (0..n)
            .map(|i| (cv[(i, j)] - vecs[(i, j)] * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if !(res <= RESIDUAL_TOL * trace) || lambda < 0.0 {
            return None;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| vals[a].re.total_cmp(&vals[b].re));
    Some(Array2::from_shape_fn((n, k), |(i, j)| vecs[(i, order[j])]))
}

/// Solves `G x = y` for a Hermitian positive definite Gram matrix, rejecting
/// systems whose condition number exceeds [`MAX_GRAM_CONDITION`].
pub(crate) fn solve_gram(gram: &Array2<Complex64>, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let (values, vectors) = hermitian_eigen(gram)?;
    let n = values.len();
    let max = values.last().copied().unwrap_or(0.0);
    let min = values.first().copied().unwrap_or(0.0);
    if !(min > 0.0) || max / min > MAX_GRAM_CONDITION {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularGram { cond });
    }
    // x = V diag(1/lambda) V^H y
    let mut proj = vec![Complex64::new(0.0, 0.0); n];
    for (k, p) in proj.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, y) in rhs.iter().enumerate() {
            acc += vectors[[i, k]].conj() * y;
        }
        *p = acc / values[k];
    }
    Ok((0..n)
        .map(|i| (0..n).map(|k| vectors[[i, k]] * proj[k]).sum())
        .collect())
}
