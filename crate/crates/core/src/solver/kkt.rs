//! Reduced KKT system: assembly, regularized dense LDL^T factorization and
//! iterative refinement.
//!
//! Eliminating the cone block from
//! `[[0, A^T, G^T], [A, 0, 0], [G, 0, -W^T W]]` leaves the quasi-definite
//! system `[[G^T (W^T W)^{-1} G, A^T], [A, 0]]`, which is factored with a
//! static regularization `+delta I / -delta I` and corrected by refinement
//! against the unregularized operator.

use super::cones::Scaling;
use crate::scalar::{fr, Real};
use nalgebra::{DMatrix, DVector};

/// Unpivoted dense LDL^T of a symmetric (quasi-definite, regularized)
/// matrix. Only the lower triangle of the input is referenced. `L` is kept
/// transposed (row `i` of `L` contiguous) so the inner factorization loops
/// stream over contiguous memory.
pub struct Ldl<T: Real> {
    lt: DMatrix<T>,
    d: DVector<T>,
}

impl<T: Real> Ldl<T> {
    pub fn factor(m: &DMatrix<T>) -> Option<Self> {
        let n = m.nrows();
        let mut lt = DMatrix::<T>::zeros(n, n);
        let mut dlt = DMatrix::<T>::zeros(n, n);
        let mut d = DVector::zeros(n);
        for j in 0..n {
            let (lj, dj_row) = {
                let lj = lt.column(j).clone_owned();
                let dj = dlt.column(j).clone_owned();
                (lj, dj)
            };
            let mut djj = m[(j, j)];
            for k in 0..j {
                djj -= lj[k] * dj_row[k];
            }
            if djj == T::zero() || !djj.is_finite() {
                return None;
            }
            d[j] = djj;
            for i in (j + 1)..n {
                let mut v = m[(i, j)];
                {
                    let li = lt.column(i);
                    for k in 0..j {
                        v -= li[k] * dj_row[k];
                    }
                }
                let lij = v / djj;
                lt[(j, i)] = lij;
                dlt[(j, i)] = lij * djj;
            }
        }
        Some(Ldl { lt, d })
    }

    pub fn solve_in_place(&self, x: &mut DVector<T>) {
        let n = self.d.len();
        // forward: L y = x (row i of L = column i of lt)
        for i in 0..n {
            let mut v = x[i];
            let li = self.lt.column(i);
            for k in 0..i {
                v -= li[k] * x[k];
            }
            x[i] = v;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        // backward: L^T z = y, pushing each finalized entry down its column
        for i in (0..n).rev() {
            let xi = x[i];
            if xi != T::zero() {
                let li = self.lt.column(i);
                for k in 0..i {
                    x[k] -= li[k] * xi;
                }
            }
        }
    }
}

/// Factored reduced KKT system for one scaling `W`.
pub struct KktSystem<T: Real> {
    n: usize,
    p: usize,
    /// `G^T (W^T W)^{-1} G` without regularization (for refinement).
    nmat: DMatrix<T>,
    ldl: Ldl<T>,
}

impl<T: Real> KktSystem<T> {
    /// Builds and factors the reduced system for the given scaling. `reg` is
    /// the static regularization magnitude, fixed across iterations so the
    /// perturbation does not grow with the scaling.
    pub fn build(
        a_mat: &DMatrix<T>,
        g_t: &DMatrix<T>,
        g_mat: &DMatrix<T>,
        scaling: &Scaling<T>,
        reg: T,
    ) -> Option<KktSystem<T>> {
        let n = g_mat.ncols();
        let p = a_mat.nrows();
        let mut wg = g_mat.clone();
        scaling.apply_wtw_inv_cols(&mut wg);
        let mut nmat = g_t * wg;
        // symmetrize against roundoff
        let nt = nmat.transpose();
        nmat = (&nmat + nt) * fr::<T>(0.5);

        let dim = n + p;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&nmat);
        if p > 0 {
            k.view_mut((n, 0), (p, n)).copy_from(a_mat);
            let at = a_mat.transpose();
            k.view_mut((0, n), (n, p)).copy_from(&at);
        }
        for i in 0..n {
            k[(i, i)] += reg;
        }
        for i in n..dim {
            k[(i, i)] -= reg;
        }
        let ldl = Ldl::factor(&k)?;
        Some(KktSystem { n, p, nmat, ldl })
    }

    /// Solves `[[N, A^T], [A, 0]] (ux, uy) = (bx, by)` with iterative
    /// refinement against the unregularized blocks; corrections that stop
    /// improving the residual are rolled back.
    pub fn solve(
        &self,
        a_mat: &DMatrix<T>,
        a_t: &DMatrix<T>,
        bx: &DVector<T>,
        by: &DVector<T>,
    ) -> (DVector<T>, DVector<T>) {
        let (n, p) = (self.n, self.p);
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(bx);
        if p > 0 {
            rhs.rows_mut(n, p).copy_from(by);
        }
        let mut sol = rhs.clone();
        self.ldl.solve_in_place(&mut sol);
        let residual = |sol: &DVector<T>| -> DVector<T> {
            let ux = sol.rows(0, n).clone_owned();
            let uy = sol.rows(n, p).clone_owned();
            let mut res = rhs.clone();
            let mut top = &self.nmat * &ux;
            if p > 0 {
                top += a_t * &uy;
            }
            res.rows_mut(0, n).copy_from(&(bx - top));
            if p > 0 {
                res.rows_mut(n, p).copy_from(&(by - a_mat * &ux));
            }
            res
        };
        let mut res = residual(&sol);
        let mut res_norm = res.norm();
        let good_enough = fr::<T>(1e-14) * rhs.norm().max(T::one());
        for _ in 0..4 {
            if res_norm <= good_enough {
                break;
            }
            let mut corr = res.clone();
            self.ldl.solve_in_place(&mut corr);
            let cand = &sol + &corr;
            let cand_res = residual(&cand);
            let cand_norm = cand_res.norm();
            if cand_norm >= res_norm {
                break;
            }
            sol = cand;
            res = cand_res;
            res_norm = cand_norm;
        }
        let ux = sol.rows(0, n).clone_owned();
        let uy = sol.rows(n, p).clone_owned();
        (ux, uy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn ldl_solves_quasidefinite_system() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(2..12);
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let spd = &a * a.transpose() + DMatrix::identity(n, n);
            let ldl = Ldl::factor(&spd).unwrap();
            let x_true = DVector::<f64>::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let b = &spd * &x_true;
            let mut x = b;
            ldl.solve_in_place(&mut x);
            assert!((x - x_true).norm() < 1e-9);
        }
    }

    #[test]
    fn ldl_handles_indefinite_blocks() {
        // [[2, 1], [1, -3]] is quasi-definite
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -3.0]);
        let ldl = Ldl::factor(&m).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let mut x = b.clone();
        ldl.solve_in_place(&mut x);
        assert!((&m * &x - &b).norm() < 1e-12);
    }
}
