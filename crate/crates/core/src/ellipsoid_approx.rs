//! Extremal-ellipsoid machinery: containment LMIs, the maximum-volume
//! ellipsoid inscribed in an intersection of ellipsoids, and the
//! Loewner-Fritz-John inflation that turns the inscribed ellipsoid of a
//! symmetric set into an outer cover.
//!
//! The optimization runs over real vector spaces; complex uncertainty sets
//! are handled through the real embedding of dimension `2T` and projected
//! back onto the complex structure, which the (unique) maximal ellipsoid of
//! a phase-invariant set possesses anyway. The volume objective
//! `det(E)^(1/d)` is modeled with the lower-triangular determinant device
//! and a geometric-mean tree, which keeps the problem inside the
//! {SOC, PSD} cone family of the bundled solver.

use crate::conic::{geometric_mean_objective, ConicProgram, LinExpr};
use crate::linalg::{
    complex_project_row_form, embed_row_vec, real_embed_row_form, unembed_row_vec,
};
use crate::scalar::{fr, Real, C};
use crate::solver::{solve, SolveStatus, SolverOptions};
use crate::uncertainty::{Ellipsoid, UncertaintyError, UncertaintySet};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EllipsoidError {
    #[error("solver returned {0:?}")]
    Solver(SolveStatus),
    #[error("the set has empty interior")]
    EmptyInterior,
    #[error("conic construction error: {0}")]
    Conic(#[from] crate::conic::ConicError),
    #[error("ellipsoid error: {0}")]
    Uncertainty(#[from] UncertaintyError),
}

/// Real full-dimensional ellipsoid `{E u + c : ||u|| <= 1}` with symmetric
/// positive definite generator.
#[derive(Clone, Debug)]
pub struct RealEllipsoid<T: Real> {
    pub generator: DMatrix<T>,
    pub center: DVector<T>,
}

impl<T: Real> RealEllipsoid<T> {
    pub fn ball(radius: T, dim: usize) -> Self {
        RealEllipsoid {
            generator: DMatrix::identity(dim, dim) * radius,
            center: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(x - c)^T Q (x - c) <= 1` with `Q = (E^2)^{-1}`.
    pub fn quadratic(&self) -> DMatrix<T> {
        let sq = &self.generator * &self.generator;
        real_matrix_fn(&sq, |x| T::one() / x)
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        let d = x - &self.center;
        let q = self.quadratic();
        (d.transpose() * q * &d)[(0, 0)] <= T::one() + fr(1e-9)
    }

    pub fn scaled(&self, factor: T) -> Self {
        RealEllipsoid { generator: &self.generator * factor, center: self.center.clone() }
    }

    pub fn volume_proxy(&self) -> T {
        self.generator.determinant()
    }
}

/// Symmetric matrix function through the eigendecomposition.
fn real_matrix_fn<T: Real>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..m.ncols() {
        let fj = f(eig.eigenvalues[j]);
        for i in 0..m.nrows() {
            scaled[(i, j)] *= fj;
        }
    }
    &scaled * eig.eigenvectors.transpose()
}

/// One (possibly degenerate) quadratic constraint
/// `(x - c)^T M (x - c) <= 1` with `M` symmetric PSD.
#[derive(Clone, Debug)]
pub struct QuadConstraint<T: Real> {
    pub mat: DMatrix<T>,
    pub center: DVector<T>,
}

impl<T: Real> QuadConstraint<T> {
    /// Rank-revealing factor `F` with `F^T F = M` (rows = rank).
    fn factor(&self) -> DMatrix<T> {
        let eig = self.mat.clone().symmetric_eigen();
        let d = self.mat.nrows();
        let mut lmax = T::zero();
        for i in 0..d {
            lmax = lmax.max(eig.eigenvalues[i]);
        }
        let tol = lmax * fr::<T>(1e-12);
        let kept: Vec<usize> =
            (0..d).filter(|&i| eig.eigenvalues[i] > tol).collect();
        let mut f = DMatrix::zeros(kept.len(), d);
        for (r, &i) in kept.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            for j in 0..d {
                f[(r, j)] = eig.eigenvectors[(j, i)] * s;
            }
        }
        f
    }
}

/// Emits the containment LMI for
/// `{A u + a : ||u|| <= 1}  inside  {x : ||F (x - d)|| <= 1}`:
/// `[[I_r, F(a - d), F A], [., 1 - lambda, 0], [., 0, lambda I]] >= 0`,
/// affine in the inner parameters and exact by the S-lemma. `inner_gen`
/// holds the full `dim x dim` symmetric generator entries (row-major).
pub fn containment_lmi<T: Real>(
    prog: &mut ConicProgram<T>,
    inner_gen: &[Vec<LinExpr<T>>],
    inner_center: &[LinExpr<T>],
    f: &DMatrix<T>,
    outer_center: &DVector<T>,
    lambda: crate::conic::VarId,
) -> Result<(), crate::conic::ConicError> {
    let r = f.nrows();
    let d = f.ncols();
    let side = r + 1 + d;
    let mut lower: Vec<LinExpr<T>> = Vec::with_capacity(side * (side + 1) / 2);
    // block entry accessors in expression space
    let f_center = |i: usize| -> LinExpr<T> {
        // (F (a - d))_i
        let mut e = LinExpr::zero();
        for j in 0..d {
            e = e + inner_center[j].clone().scale(f[(i, j)]);
        }
        e.plus_const(-(f.row(i).transpose().dot(outer_center)))
    };
    let f_gen = |i: usize, j: usize| -> LinExpr<T> {
        // (F A)_{i, j}
        let mut e = LinExpr::zero();
        for k in 0..d {
            e = e + inner_gen[k][j].clone().scale(f[(i, k)]);
        }
        e
    };
    for row in 0..side {
        for col in 0..=row {
            let e = if row < r {
                if col == row {
                    LinExpr::constant(T::one())
                } else {
                    LinExpr::zero()
                }
            } else if row == r {
                if col < r {
                    f_center(col)
                } else {
                    LinExpr::var(lambda).neg().plus_const(T::one())
                }
            } else {
                // row indexes the lambda*I block
                let gi = row - r - 1;
                if col < r {
                    f_gen(col, gi)
                } else if col == r {
                    LinExpr::zero()
                } else if col == row {
                    LinExpr::var(lambda)
                } else {
                    LinExpr::zero()
                }
            };
            lower.push(e);
        }
    }
    prog.add_psd_lower(side, lower)
}

fn const_matrix_exprs<T: Real>(m: &DMatrix<T>) -> Vec<Vec<LinExpr<T>>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| LinExpr::constant(m[(i, j)])).collect())
        .collect()
}

/// Whether a concrete ellipsoid is contained in one quadratic constraint,
/// decided through the containment LMI feasibility problem.
pub fn contained_in_form<T: Real>(
    inner: &RealEllipsoid<T>,
    form: &QuadConstraint<T>,
    opts: &SolverOptions<T>,
) -> Result<bool, EllipsoidError> {
    let mut prog = ConicProgram::new();
    let lambda = prog.add_var("lambda");
    prog.add_nonneg(LinExpr::var(lambda));
    let gen = const_matrix_exprs(&inner.generator);
    let center: Vec<LinExpr<T>> =
        inner.center.iter().map(|&c| LinExpr::constant(c)).collect();
    let f = form.factor();
    containment_lmi(&mut prog, &gen, &center, &f, &form.center, lambda)?;
    prog.set_objective_max(LinExpr::zero());
    let sol = solve(&prog, opts);
    match sol.status {
        SolveStatus::Optimal => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        other => Err(EllipsoidError::Solver(other)),
    }
}

/// Maximum-volume ellipsoid inscribed in an intersection of quadratic
/// constraints (real coordinates).
pub fn max_volume_inscribed_real<T: Real>(
    forms: &[QuadConstraint<T>],
    opts: &SolverOptions<T>,
) -> Result<RealEllipsoid<T>, EllipsoidError> {
    let d = forms.first().ok_or(EllipsoidError::EmptyInterior)?.mat.nrows();
    let mut prog = ConicProgram::new();

    // symmetric generator E (free entries, lower triangle mirrored)
    let mut gen = vec![vec![LinExpr::zero(); d]; d];
    for i in 0..d {
        for j in 0..=i {
            let v = prog.add_var(format!("E[{i}][{j}]"));
            gen[i][j] = LinExpr::var(v);
            gen[j][i] = LinExpr::var(v);
        }
    }
    let center: Vec<LinExpr<T>> =
        prog.add_var_vec("c", d).into_iter().map(LinExpr::var).collect();

    for (idx, form) in forms.iter().enumerate() {
        let lambda = prog.add_var(format!("lambda[{idx}]"));
        prog.add_nonneg(LinExpr::var(lambda));
        let f = form.factor();
        containment_lmi(&mut prog, &gen, &center, &f, &form.center, lambda)?;
    }

    // determinant device: [[E, L], [L^T, diag(L)]] >= 0 with L lower
    // triangular; the geometric mean of diag(L) bounds det(E)^(1/d)
    let mut l_exprs = vec![vec![LinExpr::zero(); d]; d];
    let mut diag_vars = Vec::with_capacity(d);
    for i in 0..d {
        for j in 0..=i {
            let v = prog.add_var(format!("L[{i}][{j}]"));
            if i == j {
                diag_vars.push(v);
            }
            l_exprs[i][j] = LinExpr::var(v);
        }
    }
    let side = 2 * d;
    let mut lower = Vec::with_capacity(side * (side + 1) / 2);
    for i in 0..side {
        for j in 0..=i {
            let e = if i < d {
                gen[i][j].clone()
            } else if j < d {
                // L^T block: entry (i-d, j) of L^T is L[j][i-d]
                let (r, c) = (j, i - d);
                if r >= c {
                    l_exprs[r][c].clone()
                } else {
                    LinExpr::zero()
                }
            } else if i == j {
                LinExpr::var(diag_vars[i - d])
            } else {
                LinExpr::zero()
            };
            lower.push(e);
        }
    }
    prog.add_psd_lower(side, lower)?;
    let g = geometric_mean_objective(&mut prog, &diag_vars)?;
    prog.set_objective_max(LinExpr::var(g));

    let sol = solve(&prog, opts);
    if sol.status != SolveStatus::Optimal {
        return Err(EllipsoidError::Solver(sol.status));
    }
    let mut e_mat = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            e_mat[(i, j)] = sol.value_of(&gen[i][j]);
        }
    }
    let c_vec = DVector::from_iterator(d, center.iter().map(|e| sol.value_of(e)));
    Ok(RealEllipsoid { generator: e_mat, center: c_vec })
}

/// Quadratic constraints of the real embedding of a complex uncertainty
/// set.
pub fn real_forms_of_set<T: Real>(set: &UncertaintySet<T>) -> Vec<QuadConstraint<T>> {
    set.normalized_shapes()
        .iter()
        .map(|z| QuadConstraint {
            mat: real_embed_row_form(z),
            center: DVector::zeros(2 * set.dim()),
        })
        .collect()
}

/// Maximum-volume inscribed ellipsoid of a complex uncertainty set, solved
/// in the real embedding and projected back onto the complex structure
/// (exact for these phase-invariant sets).
pub fn max_volume_inner_ellipsoid<T: Real>(
    set: &UncertaintySet<T>,
    opts: &SolverOptions<T>,
) -> Result<Ellipsoid<T>, EllipsoidError> {
    let forms = real_forms_of_set(set);
    let real = max_volume_inscribed_real(&forms, opts)?;
    let gen_c = complex_project_row_form(&real.generator);
    // symmetrize tiny numerical defects
    let gen_c = (&gen_c + gen_c.adjoint()) * C::new(fr(0.5), T::zero());
    let center_c = unembed_row_vec(&real.center);
    Ok(Ellipsoid::from_generator(gen_c, center_c)?)
}

/// Loewner-Fritz-John inflation: scales the generator by `sqrt(dim)`, which
/// covers a centrally symmetric set once the input is its maximal inscribed
/// ellipsoid.
pub fn lfj_inflate<T: Real>(ell: &Ellipsoid<T>, dim: usize) -> Ellipsoid<T> {
    let factor = fr::<T>(dim as f64).sqrt();
    ell.scaled(factor)
}

/// Real-space LFJ inflation.
pub fn lfj_inflate_real<T: Real>(ell: &RealEllipsoid<T>, dim: usize) -> RealEllipsoid<T> {
    ell.scaled(fr::<T>(dim as f64).sqrt())
}

/// Quadratic description `(E^H E)^{-1}` of a generator-form ellipsoid,
/// together with its center.
pub fn generator_to_quadratic<T: Real>(
    ell: &Ellipsoid<T>,
) -> (DMatrix<C<T>>, DVector<C<T>>) {
    (ell.quadratic().clone(), ell.center().clone())
}

/// Whether the ellipsoid (in complex coordinates) is contained in the
/// uncertainty set, via one containment LMI per constituent.
pub fn contained_in_set<T: Real>(
    ell: &Ellipsoid<T>,
    set: &UncertaintySet<T>,
    opts: &SolverOptions<T>,
) -> Result<bool, EllipsoidError> {
    let real = RealEllipsoid {
        generator: real_embed_row_form(ell.generator()),
        center: embed_row_vec(ell.center()),
    };
    for form in real_forms_of_set(set) {
        if !contained_in_form(&real, &form, opts)? {
            return Ok(false);
        }
    }
    Ok(true)
}
