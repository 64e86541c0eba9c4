//! Cone-program intermediate representation and reformulation transforms.
//!
//! A [`ConicProgram`] holds real scalar variables, a linear objective to
//! maximize and four constraint block kinds: linear equalities, scalar
//! nonnegativity, second-order cones `||args||_2 <= bound` and PSD blocks
//! (affine symmetric-matrix maps required to be positive semidefinite).
//!
//! The transforms implemented here are the ones the beamforming
//! reformulations lean on:
//!
//! - [`hyperbolic_to_soc`]: `z^2 <= x*y` with `x, y >= 0` as a 3-d SOC,
//! - [`geometric_mean_objective`]: a balanced binary tree of hyperbolic
//!   constraints whose root maximizes the product of the leaves,
//! - [`complex_lmi_embed`]: a complex Hermitian LMI as a doubled-size real
//!   symmetric PSD block.

use crate::scalar::{fr, Real, C};
use thiserror::Error;

/// Handle to a scalar decision variable of a [`ConicProgram`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct VarId(pub(crate) u32);

impl VarId {
    #[inline]
    pub(crate) fn index(self) -> usize {
        self.0 as usize
    }
}

/// Real affine expression `constant + sum coeff_i * x_i`.
#[derive(Clone, Debug)]
pub struct LinExpr<T: Real> {
    pub constant: T,
    pub terms: Vec<(VarId, T)>,
}

impl<T: Real> LinExpr<T> {
    pub fn zero() -> Self {
        LinExpr { constant: T::zero(), terms: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        LinExpr { constant: c, terms: Vec::new() }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr { constant: T::zero(), terms: vec![(v, T::one())] }
    }

    pub fn scaled_var(v: VarId, coeff: T) -> Self {
        LinExpr { constant: T::zero(), terms: vec![(v, coeff)] }
    }

    pub fn add_term(&mut self, v: VarId, coeff: T) {
        self.terms.push((v, coeff));
    }

    pub fn scale(mut self, s: T) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }

    /// True when the expression has zero constant and all per-variable
    /// coefficients cancel.
    pub fn is_structurally_zero(&self) -> bool {
        let tiny = fr::<T>(1e-12);
        if self.constant.abs() > tiny {
            return false;
        }
        let mut merged: std::collections::HashMap<VarId, T> = std::collections::HashMap::new();
        for (v, c) in &self.terms {
            *merged.entry(*v).or_insert_with(T::zero) += *c;
        }
        merged.values().all(|c| c.abs() <= tiny)
    }
}

impl<T: Real> From<VarId> for LinExpr<T> {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

impl<T: Real> std::ops::Add for LinExpr<T> {
    type Output = LinExpr<T>;
    fn add(mut self, rhs: LinExpr<T>) -> LinExpr<T> {
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
        self
    }
}

impl<T: Real> std::ops::Sub for LinExpr<T> {
    type Output = LinExpr<T>;
    fn sub(self, rhs: LinExpr<T>) -> LinExpr<T> {
        self + rhs.neg()
    }
}

impl<T: Real> LinExpr<T> {
    pub fn neg(mut self) -> Self {
        self.constant = -self.constant;
        for t in &mut self.terms {
            t.1 = -t.1;
        }
        self
    }

    pub fn plus_const(mut self, c: T) -> Self {
        self.constant += c;
        self
    }
}

/// Complex affine expression as a (re, im) pair of real affine expressions.
#[derive(Clone, Debug)]
pub struct ComplexExpr<T: Real> {
    pub re: LinExpr<T>,
    pub im: LinExpr<T>,
}

impl<T: Real> ComplexExpr<T> {
    pub fn zero() -> Self {
        ComplexExpr { re: LinExpr::zero(), im: LinExpr::zero() }
    }

    pub fn constant(c: C<T>) -> Self {
        ComplexExpr { re: LinExpr::constant(c.re), im: LinExpr::constant(c.im) }
    }

    /// Complex expression from the pair of real variables (re, im).
    pub fn from_vars(re: VarId, im: VarId) -> Self {
        ComplexExpr { re: LinExpr::var(re), im: LinExpr::var(im) }
    }

    pub fn conj(self) -> Self {
        ComplexExpr { re: self.re, im: self.im.neg() }
    }

    pub fn add(self, rhs: ComplexExpr<T>) -> Self {
        ComplexExpr { re: self.re + rhs.re, im: self.im + rhs.im }
    }

    pub fn sub(self, rhs: ComplexExpr<T>) -> Self {
        ComplexExpr { re: self.re - rhs.re, im: self.im - rhs.im }
    }

    pub fn neg(self) -> Self {
        ComplexExpr { re: self.re.neg(), im: self.im.neg() }
    }

    /// Multiplication by a complex constant.
    pub fn scale(self, c: C<T>) -> Self {
        let re = self.re.clone().scale(c.re) - self.im.clone().scale(c.im);
        let im = self.re.scale(c.im) + self.im.scale(c.re);
        ComplexExpr { re, im }
    }
}

/// `sum_i conj(a_i) * e_i` for constant coefficients `a` (a Hermitian inner
/// product of a constant vector with a vector of expressions).
pub fn cdot<T: Real>(a: &[C<T>], e: &[ComplexExpr<T>]) -> ComplexExpr<T> {
    assert_eq!(a.len(), e.len(), "cdot length mismatch");
    let mut acc = ComplexExpr::zero();
    for (ai, ei) in a.iter().zip(e.iter()) {
        acc = acc.add(ei.clone().scale(ai.conj()));
    }
    acc
}

/// One second-order cone block `||args||_2 <= bound`.
#[derive(Clone, Debug)]
pub struct SocBlock<T: Real> {
    pub args: Vec<LinExpr<T>>,
    pub bound: LinExpr<T>,
}

/// One PSD block: a `dim x dim` symmetric affine matrix map, stored as the
/// lower triangle in row-major (i, j) order with `i >= j`.
#[derive(Clone, Debug)]
pub struct PsdBlock<T: Real> {
    pub dim: usize,
    pub lower: Vec<LinExpr<T>>,
}

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("PSD block expects {expected} lower-triangle entries, got {got}")]
    PsdEntryCount { expected: usize, got: usize },
    #[error("complex LMI is not Hermitian: diagonal entry {index} has a nonzero imaginary part")]
    NotHermitian { index: usize },
    #[error("geometric mean objective needs at least one variable")]
    EmptyGeometricMean,
}

/// Cone-constrained optimization problem with a linear objective (maximize).
#[derive(Clone, Debug, Default)]
pub struct ConicProgram<T: Real> {
    names: Vec<String>,
    objective: Option<LinExpr<T>>,
    eqs: Vec<LinExpr<T>>,
    nonnegs: Vec<LinExpr<T>>,
    socs: Vec<SocBlock<T>>,
    psds: Vec<PsdBlock<T>>,
}

impl<T: Real> ConicProgram<T> {
    pub fn new() -> Self {
        ConicProgram {
            names: Vec::new(),
            objective: None,
            eqs: Vec::new(),
            nonnegs: Vec::new(),
            socs: Vec::new(),
            psds: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        let id = VarId(self.names.len() as u32);
        self.names.push(name.into());
        id
    }

    pub fn add_var_vec(&mut self, prefix: &str, n: usize) -> Vec<VarId> {
        (0..n).map(|i| self.add_var(format!("{prefix}[{i}]"))).collect()
    }

    /// Adds a complex scalar variable as a (re, im) pair.
    pub fn add_complex_var(&mut self, name: &str) -> ComplexExpr<T> {
        let re = self.add_var(format!("{name}.re"));
        let im = self.add_var(format!("{name}.im"));
        ComplexExpr::from_vars(re, im)
    }

    /// Adds a complex vector variable of the given length.
    pub fn add_complex_vec(&mut self, prefix: &str, n: usize) -> Vec<ComplexExpr<T>> {
        (0..n).map(|i| self.add_complex_var(&format!("{prefix}[{i}]"))).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v.index()]
    }

    /// Sets the (maximized) linear objective.
    pub fn set_objective_max(&mut self, obj: LinExpr<T>) {
        self.objective = Some(obj);
    }

    pub fn objective(&self) -> LinExpr<T> {
        self.objective.clone().unwrap_or_else(LinExpr::zero)
    }

    /// Constrains `expr == 0`.
    pub fn add_eq(&mut self, expr: LinExpr<T>) {
        self.eqs.push(expr);
    }

    /// Constrains both parts of a complex expression to zero.
    pub fn add_complex_eq(&mut self, expr: ComplexExpr<T>) {
        self.eqs.push(expr.re);
        self.eqs.push(expr.im);
    }

    /// Constrains `expr >= 0`.
    pub fn add_nonneg(&mut self, expr: LinExpr<T>) {
        self.nonnegs.push(expr);
    }

    /// Constrains `||args||_2 <= bound`.
    pub fn add_soc(&mut self, args: Vec<LinExpr<T>>, bound: LinExpr<T>) {
        self.socs.push(SocBlock { args, bound });
    }

    /// Adds a real symmetric PSD block from its lower triangle (row-major,
    /// `i >= j`).
    pub fn add_psd_lower(&mut self, dim: usize, lower: Vec<LinExpr<T>>) -> Result<(), ConicError> {
        let expected = dim * (dim + 1) / 2;
        if lower.len() != expected {
            return Err(ConicError::PsdEntryCount { expected, got: lower.len() });
        }
        self.psds.push(PsdBlock { dim, lower });
        Ok(())
    }

    pub fn num_eqs(&self) -> usize {
        self.eqs.len()
    }
    pub fn num_nonnegs(&self) -> usize {
        self.nonnegs.len()
    }
    pub fn num_socs(&self) -> usize {
        self.socs.len()
    }
    pub fn num_psds(&self) -> usize {
        self.psds.len()
    }

    pub(crate) fn eq_blocks(&self) -> &[LinExpr<T>] {
        &self.eqs
    }
    pub(crate) fn nonneg_blocks(&self) -> &[LinExpr<T>] {
        &self.nonnegs
    }
    pub(crate) fn soc_blocks(&self) -> &[SocBlock<T>] {
        &self.socs
    }
    pub(crate) fn psd_blocks(&self) -> &[PsdBlock<T>] {
        &self.psds
    }

    /// Plain-text dump of the program, for cross-checking against an
    /// external solver.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "vars {}", self.names.len()).unwrap();
        for (i, n) in self.names.iter().enumerate() {
            writeln!(out, "  x{i} {n}").unwrap();
        }
        let fmt_expr = |e: &LinExpr<T>| {
            let mut s = format!("{:?}", e.constant.to_f64().unwrap_or(f64::NAN));
            for (v, c) in &e.terms {
                s.push_str(&format!(" + {:?}*x{}", c.to_f64().unwrap_or(f64::NAN), v.index()));
            }
            s
        };
        writeln!(out, "maximize {}", fmt_expr(&self.objective())).unwrap();
        for e in &self.eqs {
            writeln!(out, "eq 0 = {}", fmt_expr(e)).unwrap();
        }
        for e in &self.nonnegs {
            writeln!(out, "nonneg {}", fmt_expr(e)).unwrap();
        }
        for s in &self.socs {
            writeln!(out, "soc bound {}", fmt_expr(&s.bound)).unwrap();
            for a in &s.args {
                writeln!(out, "  arg {}", fmt_expr(a)).unwrap();
            }
        }
        for p in &self.psds {
            writeln!(out, "psd dim {}", p.dim).unwrap();
            for (idx, e) in p.lower.iter().enumerate() {
                writeln!(out, "  l{idx} {}", fmt_expr(e)).unwrap();
            }
        }
        out
    }
}

/// Emits `||(2z, x - y)||_2 <= x + y`, equivalent to `z^2 <= x*y` together
/// with `x >= 0`, `y >= 0` (both of which the SOC itself implies).
pub fn hyperbolic_to_soc<T: Real>(
    prog: &mut ConicProgram<T>,
    z: LinExpr<T>,
    x: LinExpr<T>,
    y: LinExpr<T>,
) {
    let two = fr::<T>(2.0);
    let args = vec![z.scale(two), x.clone() - y.clone()];
    prog.add_soc(args, x + y);
}

/// Builds a balanced binary tree of hyperbolic constraints over `leaves` and
/// returns the root variable `g`; maximizing `g` maximizes the product of the
/// leaves. Short levels are padded with `g` itself, which preserves the
/// argmax of the product.
pub fn geometric_mean_objective<T: Real>(
    prog: &mut ConicProgram<T>,
    leaves: &[VarId],
) -> Result<VarId, ConicError> {
    if leaves.is_empty() {
        return Err(ConicError::EmptyGeometricMean);
    }
    let g = prog.add_var("geomean");
    if leaves.len() == 1 {
        // g <= t for the single leaf
        prog.add_nonneg(LinExpr::var(leaves[0]) - LinExpr::var(g));
        prog.add_nonneg(LinExpr::var(g));
        return Ok(g);
    }
    let depth = (leaves.len() as f64).log2().ceil() as u32;
    let padded = 1usize << depth;
    let mut level: Vec<LinExpr<T>> = leaves.iter().map(|&v| LinExpr::var(v)).collect();
    level.extend((leaves.len()..padded).map(|_| LinExpr::var(g)));
    let mut lvl_idx = 0usize;
    while level.len() > 2 {
        let mut next = Vec::with_capacity(level.len() / 2);
        for (pair_idx, pair) in level.chunks(2).enumerate() {
            let z = prog.add_var(format!("gm[{lvl_idx}][{pair_idx}]"));
            hyperbolic_to_soc(prog, LinExpr::var(z), pair[0].clone(), pair[1].clone());
            next.push(LinExpr::var(z));
        }
        level = next;
        lvl_idx += 1;
    }
    hyperbolic_to_soc(prog, LinExpr::var(g), level[0].clone(), level[1].clone());
    Ok(g)
}

/// Embeds a complex Hermitian affine LMI `H(x) >= 0` as the real symmetric
/// PSD block `[[Re H, -Im H], [Im H, Re H]] >= 0` of doubled size.
///
/// `lower` holds the lower triangle of `H` in row-major (i, j), `i >= j`
/// order. Diagonal entries must have structurally zero imaginary parts.
pub fn complex_lmi_embed<T: Real>(
    prog: &mut ConicProgram<T>,
    dim: usize,
    lower: &[ComplexExpr<T>],
) -> Result<(), ConicError> {
    let expected = dim * (dim + 1) / 2;
    if lower.len() != expected {
        return Err(ConicError::PsdEntryCount { expected, got: lower.len() });
    }
    let entry = |i: usize, j: usize| -> &ComplexExpr<T> {
        debug_assert!(i >= j);
        &lower[i * (i + 1) / 2 + j]
    };
    for i in 0..dim {
        if !entry(i, i).im.is_structurally_zero() {
            return Err(ConicError::NotHermitian { index: i });
        }
    }
    // Real embedding entry (r, c) for r >= c, blocks indexed by dim.
    let real_dim = 2 * dim;
    let mut out = Vec::with_capacity(real_dim * (real_dim + 1) / 2);
    for r in 0..real_dim {
        for c in 0..=r {
            let expr = if r < dim {
                // top-left: Re H
                entry(r, c).re.clone()
            } else if c < dim {
                // bottom-left: Im H (note Im H[i][j] = -Im H[j][i], diag 0)
                let (i, j) = (r - dim, c);
                if i >= j {
                    entry(i, j).im.clone()
                } else {
                    entry(j, i).im.clone().neg()
                }
            } else {
                // bottom-right: Re H
                entry(r - dim, c - dim).re.clone()
            };
            out.push(expr);
        }
    }
    prog.add_psd_lower(real_dim, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feasible_hyperbolic(z: f64, x: f64, y: f64) -> bool {
        // direct evaluation of the emitted SOC
        let lhs = ((2.0 * z).powi(2) + (x - y).powi(2)).sqrt();
        lhs <= x + y + 1e-12
    }

    #[test]
    fn hyperbolic_soc_matches_z2_le_xy() {
        assert!(feasible_hyperbolic(1.0, 1.0, 1.0)); // boundary
        assert!(!feasible_hyperbolic(2.0, 1.0, 1.0)); // 4 > 1
        assert!(feasible_hyperbolic(1.0, 4.0, 1.0)); // sqrt(13) <= 5
    }

    proptest::proptest! {
        /// SOC-form feasibility coincides with `z^2 <= x*y, x >= 0, y >= 0`
        /// away from the exact boundary.
        #[test]
        fn hyperbolic_soc_equals_product_form(
            z in -3.0f64..3.0,
            x in -1.0f64..4.0,
            y in -1.0f64..4.0,
        ) {
            let direct = z * z <= x * y && x >= 0.0 && y >= 0.0;
            proptest::prop_assume!((z * z - x * y).abs() > 1e-9);
            proptest::prop_assert_eq!(feasible_hyperbolic(z, x, y), direct);
        }
    }

    #[test]
    fn geometric_mean_tree_block_counts() {
        let mut p = ConicProgram::<f64>::new();
        let vars = p.add_var_vec("t", 4);
        let g = geometric_mean_objective(&mut p, &vars).unwrap();
        // K=4: two leaf-level cones plus the root cone
        assert_eq!(p.num_socs(), 3);
        p.set_objective_max(LinExpr::var(g));
    }

    #[test]
    fn geometric_mean_tree_k3_pads_with_root() {
        let mut p = ConicProgram::<f64>::new();
        let vars = p.add_var_vec("t", 3);
        geometric_mean_objective(&mut p, &vars).unwrap();
        assert_eq!(p.num_socs(), 3);
    }

    #[test]
    fn complex_embed_structure() {
        // 1x1 H = 1 -> 2x2 identity
        let mut p = ConicProgram::<f64>::new();
        let h = ComplexExpr::<f64>::constant(C::new(1.0, 0.0));
        complex_lmi_embed(&mut p, 1, &[h]).unwrap();
        assert_eq!(p.num_psds(), 1);
        let blk = &p.psd_blocks()[0];
        assert_eq!(blk.dim, 2);
        let vals: Vec<f64> = blk.lower.iter().map(|e| e.constant).collect();
        // lower triangle of [[1,0],[0,1]]
        assert_eq!(vals, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn complex_embed_rejects_nonhermitian_diag() {
        let mut p = ConicProgram::<f64>::new();
        let h = ComplexExpr::<f64>::constant(C::new(1.0, 0.5));
        assert!(complex_lmi_embed(&mut p, 1, &[h]).is_err());
    }

    #[test]
    fn embedding_doubles_spectrum() {
        // random Hermitian H: eigenvalues of the embedding are those of H,
        // each twice
        use nalgebra::DMatrix;
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 4usize;
        let a = DMatrix::<C<f64>>::from_fn(n, n, |_, _| {
            C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = (&a + a.adjoint()) * C::new(0.5, 0.0);
        let mut emb = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                emb[(i, j)] = h[(i, j)].re;
                emb[(i, n + j)] = -h[(i, j)].im;
                emb[(n + i, j)] = h[(i, j)].im;
                emb[(n + i, n + j)] = h[(i, j)].re;
            }
        }
        let mut ev_h: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().cloned().collect();
        let mut ev_e: Vec<f64> = emb.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev_h.sort_by(f64::total_cmp);
        ev_e.sort_by(f64::total_cmp);
        for (k, &lam) in ev_h.iter().enumerate() {
            assert!((ev_e[2 * k] - lam).abs() < 1e-10);
            assert!((ev_e[2 * k + 1] - lam).abs() < 1e-10);
        }
    }
}
