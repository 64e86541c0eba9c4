//! Small complex-Hermitian helpers shared across modules.

use crate::scalar::{fr, Real, C};
use nalgebra::{DMatrix, DVector};

/// `delta P delta^H` for a row vector stored as its entry vector.
pub(crate) fn quad_form<T: Real>(p: &DMatrix<C<T>>, delta: &DVector<C<T>>) -> T {
    let pd = p * delta.map(|x| x.conj());
    delta.dot(&pd).re
}

/// Largest Hermitian-symmetrization distance `max |M - M^H|`.
pub(crate) fn hermitian_defect<T: Real>(m: &DMatrix<C<T>>) -> T {
    let mut d = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let diff = m[(i, j)] - m[(j, i)].conj();
            d = d.max(diff.norm_sqr().sqrt());
        }
    }
    d
}

/// Eigenvalues of a Hermitian matrix (ascending is not guaranteed).
pub(crate) fn hermitian_eigs<T: Real>(m: &DMatrix<C<T>>) -> (DVector<T>, DMatrix<C<T>>) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

pub(crate) fn min_eig_hermitian<T: Real>(m: &DMatrix<C<T>>) -> T {
    let (vals, _) = hermitian_eigs(m);
    let mut lo = vals[0];
    for i in 1..vals.len() {
        lo = lo.min(vals[i]);
    }
    lo
}

/// `f(M) = V f(Lambda) V^H` for Hermitian `M`, with negative eigenvalues
/// clamped to zero before applying `f`.
pub(crate) fn hermitian_fn<T: Real>(m: &DMatrix<C<T>>, f: impl Fn(T) -> T) -> DMatrix<C<T>> {
    let (vals, vecs) = hermitian_eigs(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let fj = f(vals[j].max(T::zero()));
        for i in 0..n {
            scaled[(i, j)] *= C::new(fj, T::zero());
        }
    }
    let out = &scaled * vecs.adjoint();
    // hermitize away roundoff
    (&out + out.adjoint()) * C::new(fr(0.5), T::zero())
}

/// Hermitian PSD square root with negative eigenvalues clamped to zero.
pub(crate) fn hermitian_sqrt<T: Real>(m: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    hermitian_fn(m, |x| x.sqrt())
}

/// Principal eigenpair (largest eigenvalue and its unit eigenvector) plus
/// the ratio of the second-largest to largest eigenvalue.
pub(crate) fn principal_eigpair<T: Real>(m: &DMatrix<C<T>>) -> (T, DVector<C<T>>, T) {
    let (vals, vecs) = hermitian_eigs(m);
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let top = order[0];
    let lam1 = vals[top];
    let lam2 = if n > 1 { vals[order[1]].max(T::zero()) } else { T::zero() };
    let v = vecs.column(top).clone_owned();
    let ratio = if lam1 > fr(1e-300) { lam2 / lam1 } else { T::one() };
    (lam1, v, ratio)
}

/// Real symmetric embedding of a Hermitian form acting on row vectors:
/// with `r = [Re delta; Im delta]`, the identity
/// `delta P delta^H = r^T [[Re P, Im P], [-Im P, Re P]] r` holds.
pub(crate) fn real_embed_row_form<T: Real>(m: &DMatrix<C<T>>) -> DMatrix<T> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[(i, j)].re;
            out[(i, n + j)] = m[(i, j)].im;
            out[(n + i, j)] = -m[(i, j)].im;
            out[(n + i, n + j)] = m[(i, j)].re;
        }
    }
    out
}

/// Projects a real `2T x 2T` symmetric matrix onto the complex-structured
/// subspace (the inverse of [`real_embed_row_form`] up to symmetrization).
pub(crate) fn complex_project_row_form<T: Real>(m: &DMatrix<T>) -> DMatrix<C<T>> {
    let n = m.nrows() / 2;
    let half = fr::<T>(0.5);
    DMatrix::from_fn(n, n, |i, j| {
        let re = (m[(i, j)] + m[(n + i, n + j)]) * half;
        let im = (m[(i, n + j)] - m[(n + i, j)]) * half;
        C::new(re, im)
    })
}

/// `[Re delta; Im delta]` for a complex row vector stored as entries.
pub(crate) fn embed_row_vec<T: Real>(v: &DVector<C<T>>) -> DVector<T> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`embed_row_vec`].
pub(crate) fn unembed_row_vec<T: Real>(v: &DVector<T>) -> DVector<C<T>> {
    let n = v.len() / 2;
    DVector::from_fn(n, |i, _| C::new(v[i], v[n + i]))
}
