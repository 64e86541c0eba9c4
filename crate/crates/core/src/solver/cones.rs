//! Cone kernels for the interior-point solver: identity elements,
//! Nesterov-Todd scalings, Jordan-algebra products and boundary step lengths
//! for the nonnegative orthant, second-order cones and dense PSD cones
//! (svec coordinates, off-diagonals scaled by sqrt(2)).

use crate::scalar::{fr, Real};
use nalgebra::{DMatrix, DVector};

/// A single cone factor of the product cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeSpec {
    /// Nonnegative orthant of the given dimension.
    NonNeg(usize),
    /// Second-order cone of the given total dimension (bound + args).
    Soc(usize),
    /// PSD cone of symmetric `d x d` matrices; occupies `d(d+1)/2` svec rows.
    Psd(usize),
}

impl ConeSpec {
    pub fn rows(&self) -> usize {
        match *self {
            ConeSpec::NonNeg(l) => l,
            ConeSpec::Soc(q) => q,
            ConeSpec::Psd(d) => d * (d + 1) / 2,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            ConeSpec::NonNeg(l) => l,
            ConeSpec::Soc(_) => 1,
            ConeSpec::Psd(d) => d,
        }
    }
}

/// svec index of lower-triangle entry (i, j), i >= j.
#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Expands svec coordinates into the symmetric matrix they encode.
pub fn mat_from_svec<T: Real>(v: &[T], d: usize) -> DMatrix<T> {
    let inv_sqrt2 = fr::<T>(1.0 / std::f64::consts::SQRT_2);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let x = v[tri_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                let e = x * inv_sqrt2;
                m[(i, j)] = e;
                m[(j, i)] = e;
            }
        }
    }
    m
}

/// Packs a symmetric matrix into svec coordinates.
pub fn svec_from_mat<T: Real>(m: &DMatrix<T>, out: &mut [T]) {
    let d = m.nrows();
    let sqrt2 = fr::<T>(std::f64::consts::SQRT_2);
    for i in 0..d {
        for j in 0..=i {
            out[tri_index(i, j)] = if i == j { m[(i, i)] } else { m[(i, j)] * sqrt2 };
        }
    }
}

/// Product cone: block specs plus row offsets into the slack vector.
#[derive(Clone, Debug)]
pub struct ConeSet {
    specs: Vec<ConeSpec>,
    offsets: Vec<usize>,
    dim: usize,
    degree: usize,
}

impl ConeSet {
    pub fn new(specs: Vec<ConeSpec>) -> Self {
        let mut offsets = Vec::with_capacity(specs.len());
        let mut dim = 0;
        let mut degree = 0;
        for s in &specs {
            offsets.push(dim);
            dim += s.rows();
            degree += s.degree();
        }
        ConeSet { specs, offsets, dim, degree }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn iter_specs(&self) -> impl Iterator<Item = ConeSpec> + '_ {
        self.specs.iter().cloned()
    }

    fn blocks(&self) -> impl Iterator<Item = (ConeSpec, usize)> + '_ {
        self.specs.iter().cloned().zip(self.offsets.iter().cloned())
    }

    /// Interior identity element (1 for orthant, (1,0,..) for SOC, svec(I)
    /// for PSD).
    pub fn identity<T: Real>(&self) -> DVector<T> {
        let mut e = DVector::zeros(self.dim);
        for (spec, off) in self.blocks() {
            match spec {
                ConeSpec::NonNeg(l) => {
                    for i in 0..l {
                        e[off + i] = T::one();
                    }
                }
                ConeSpec::Soc(_) => e[off] = T::one(),
                ConeSpec::Psd(d) => {
                    for i in 0..d {
                        e[off + tri_index(i, i)] = T::one();
                    }
                }
            }
        }
        e
    }

    /// Largest step `alpha` with `p + alpha*d` still in the cone
    /// (`p` strictly interior). Returns a large sentinel when the ray never
    /// leaves the cone.
    pub fn max_step<T: Real>(&self, p: &DVector<T>, d: &DVector<T>) -> T {
        let inf = fr::<T>(1e30);
        let mut alpha = inf;
        for (spec, off) in self.blocks() {
            let a = match spec {
                ConeSpec::NonNeg(l) => {
                    let mut am = inf;
                    for i in 0..l {
                        if d[off + i] < T::zero() {
                            am = am.min(-p[off + i] / d[off + i]);
                        }
                    }
                    am
                }
                ConeSpec::Soc(q) => soc_max_step(&p.as_slice()[off..off + q], &d.as_slice()[off..off + q], inf),
                ConeSpec::Psd(dm) => {
                    let rows = spec.rows();
                    psd_max_step(&p.as_slice()[off..off + rows], &d.as_slice()[off..off + rows], dm, inf)
                }
            };
            alpha = alpha.min(a);
        }
        alpha
    }

    /// Nesterov-Todd scaling from a strictly interior primal-dual pair.
    /// Returns `None` when a factorization degenerates.
    pub fn nt_scaling<T: Real>(&self, s: &DVector<T>, z: &DVector<T>) -> Option<Scaling<T>> {
        let mut blocks = Vec::with_capacity(self.specs.len());
        let mut lambda = DVector::zeros(self.dim);
        for (spec, off) in self.blocks() {
            match spec {
                ConeSpec::NonNeg(l) => {
                    let mut w = DVector::zeros(l);
                    for i in 0..l {
                        let (si, zi) = (s[off + i], z[off + i]);
                        if si <= T::zero() || zi <= T::zero() {
                            return None;
                        }
                        w[i] = (si / zi).sqrt();
                        lambda[off + i] = (si * zi).sqrt();
                    }
                    blocks.push(BlockScaling::NonNeg { w });
                }
                ConeSpec::Soc(q) => {
                    let sb = DVector::from_column_slice(&s.as_slice()[off..off + q]);
                    let zb = DVector::from_column_slice(&z.as_slice()[off..off + q]);
                    let sjs = jdot(&sb, &sb);
                    let zjz = jdot(&zb, &zb);
                    if sjs <= T::zero() || zjz <= T::zero() {
                        return None;
                    }
                    let sn = &sb / sjs.sqrt();
                    let zn = &zb / zjz.sqrt();
                    let dot = sn.dot(&zn);
                    let gamma = ((T::one() + dot) * fr(0.5)).sqrt();
                    if gamma <= T::zero() {
                        return None;
                    }
                    let mut wbar = sn.clone();
                    wbar[0] += zn[0];
                    for i in 1..q {
                        wbar[i] -= zn[i];
                    }
                    wbar /= gamma * fr(2.0);
                    let eta = (sjs / zjz).sqrt().sqrt();
                    let blk = BlockScaling::Soc { eta, wbar };
                    let lam = blk.apply_w(zb.as_slice());
                    lambda.as_mut_slice()[off..off + q].copy_from_slice(lam.as_slice());
                    blocks.push(blk);
                }
                ConeSpec::Psd(dmat) => {
                    let rows = spec.rows();
                    let sm = mat_from_svec(&s.as_slice()[off..off + rows], dmat);
                    let zm = mat_from_svec(&z.as_slice()[off..off + rows], dmat);
                    let l1 = nalgebra::Cholesky::new(sm)?;
                    let l2 = nalgebra::Cholesky::new(zm)?;
                    let l1 = l1.l();
                    let l2 = l2.l();
                    let prod = l2.transpose() * &l1;
                    let svd = prod.svd(true, true);
                    let u = svd.u.as_ref()?;
                    let vt = svd.v_t.as_ref()?;
                    let mut sig_isqrt = DVector::zeros(dmat);
                    let mut sig = DVector::zeros(dmat);
                    for i in 0..dmat {
                        let sv = svd.singular_values[i];
                        if sv <= T::zero() {
                            return None;
                        }
                        sig[i] = sv;
                        sig_isqrt[i] = T::one() / sv.sqrt();
                    }
                    // R = L1 * V * Sigma^{-1/2}; Rinv = Sigma^{-1/2} U^T L2^T
                    let mut v = vt.transpose();
                    for j in 0..dmat {
                        let sc = sig_isqrt[j];
                        for i in 0..dmat {
                            v[(i, j)] *= sc;
                        }
                    }
                    let r = &l1 * v;
                    let mut ut = u.transpose();
                    for i in 0..dmat {
                        let sc = sig_isqrt[i];
                        for j in 0..dmat {
                            ut[(i, j)] *= sc;
                        }
                    }
                    let rinv = ut * l2.transpose();
                    let winv = rinv.transpose() * &rinv;
                    // scaled point is diagonal: lambda = Sigma
                    for i in 0..dmat {
                        lambda[off + tri_index(i, i)] = sig[i];
                    }
                    blocks.push(BlockScaling::Psd { r, rinv, winv, sig });
                }
            }
        }
        Some(Scaling { blocks, lambda, specs: self.specs.clone(), offsets: self.offsets.clone(), dim: self.dim })
    }
}

/// `u^T J v` with `J = diag(1, -I)`.
fn jdot<T: Real>(u: &DVector<T>, v: &DVector<T>) -> T {
    let mut acc = u[0] * v[0];
    for i in 1..u.len() {
        acc -= u[i] * v[i];
    }
    acc
}

fn soc_max_step<T: Real>(p: &[T], d: &[T], inf: T) -> T {
    // smallest positive root of (p0+a d0)^2 - ||pt+a dt||^2 = 0
    let q = p.len();
    let mut a_q = d[0] * d[0];
    let mut b_q = p[0] * d[0];
    let mut c_q = p[0] * p[0];
    for i in 1..q {
        a_q -= d[i] * d[i];
        b_q -= p[i] * d[i];
        c_q -= p[i] * p[i];
    }
    if c_q <= T::zero() {
        // point numerically on/outside the boundary: no room
        return T::zero();
    }
    let tiny = fr::<T>(1e-28);
    if a_q.abs() <= tiny {
        return if b_q < T::zero() { -c_q / (b_q * fr(2.0)) } else { inf };
    }
    let disc = b_q * b_q - a_q * c_q;
    if disc < T::zero() {
        return inf; // a_q > 0 here, the ray stays inside
    }
    let sq = disc.sqrt();
    let qq = if b_q >= T::zero() { -(b_q + sq) } else { -b_q + sq };
    let mut best = inf;
    if qq.abs() > tiny {
        let r1 = qq / a_q;
        if r1 > T::zero() {
            best = best.min(r1);
        }
        let r2 = c_q / qq;
        if r2 > T::zero() {
            best = best.min(r2);
        }
    } else if a_q < T::zero() {
        let r = (-b_q + sq) / a_q;
        if r > T::zero() {
            best = best.min(r);
        }
    }
    best
}

fn psd_max_step<T: Real>(p: &[T], d: &[T], dm: usize, inf: T) -> T {
    let pm = mat_from_svec(p, dm);
    let dmx = mat_from_svec(d, dm);
    let chol = match nalgebra::Cholesky::new(pm) {
        Some(c) => c,
        None => return T::zero(),
    };
    let l = chol.l();
    // M = L^{-1} D L^{-T}, lambda_min(M) gives the exit time
    let y = l.solve_lower_triangular(&dmx).expect("triangular solve");
    let mt = l.solve_lower_triangular(&y.transpose()).expect("triangular solve");
    let m = (&mt + mt.transpose()) * fr::<T>(0.5);
    let eig = m.symmetric_eigen();
    let mut lmin = eig.eigenvalues[0];
    for i in 1..dm {
        lmin = lmin.min(eig.eigenvalues[i]);
    }
    if lmin < T::zero() {
        -T::one() / lmin
    } else {
        inf
    }
}

/// Per-block NT scaling data.
pub enum BlockScaling<T: Real> {
    NonNeg { w: DVector<T> },
    Soc { eta: T, wbar: DVector<T> },
    Psd { r: DMatrix<T>, rinv: DMatrix<T>, winv: DMatrix<T>, sig: DVector<T> },
}

impl<T: Real> BlockScaling<T> {
    fn apply_w(&self, v: &[T]) -> DVector<T> {
        match self {
            BlockScaling::NonNeg { w } => {
                DVector::from_iterator(v.len(), v.iter().zip(w.iter()).map(|(&x, &wi)| x * wi))
            }
            BlockScaling::Soc { eta, wbar } => {
                let mut out = soc_apply_wbar(wbar, v);
                out *= *eta;
                out
            }
            BlockScaling::Psd { r, .. } => {
                let d = r.nrows();
                let m = mat_from_svec(v, d);
                let res = r.transpose() * m * r;
                let mut out = DVector::zeros(v.len());
                svec_from_mat(&sym(&res), out.as_mut_slice());
                out
            }
        }
    }

    fn apply_wt(&self, v: &[T]) -> DVector<T> {
        match self {
            BlockScaling::Psd { r, .. } => {
                let d = r.nrows();
                let m = mat_from_svec(v, d);
                let res = r * m * r.transpose();
                let mut out = DVector::zeros(v.len());
                svec_from_mat(&sym(&res), out.as_mut_slice());
                out
            }
            _ => self.apply_w(v), // diagonal / SOC scalings are symmetric
        }
    }

    fn apply_winvt(&self, v: &[T]) -> DVector<T> {
        match self {
            BlockScaling::NonNeg { w } => {
                DVector::from_iterator(v.len(), v.iter().zip(w.iter()).map(|(&x, &wi)| x / wi))
            }
            BlockScaling::Soc { eta, wbar } => {
                let mut out = soc_apply_wbar_inv(wbar, v);
                out /= *eta;
                out
            }
            BlockScaling::Psd { rinv, .. } => {
                let d = rinv.nrows();
                let m = mat_from_svec(v, d);
                let res = rinv * m * rinv.transpose();
                let mut out = DVector::zeros(v.len());
                svec_from_mat(&sym(&res), out.as_mut_slice());
                out
            }
        }
    }

    /// `(W^T W)^{-1} v`.
    fn apply_wtw_inv(&self, v: &[T]) -> DVector<T> {
        match self {
            BlockScaling::NonNeg { w } => DVector::from_iterator(
                v.len(),
                v.iter().zip(w.iter()).map(|(&x, &wi)| x / (wi * wi)),
            ),
            BlockScaling::Soc { eta, wbar } => {
                // W^{-2} = eta^{-2} (2 (J wbar)(J wbar)^T - J)
                let q = v.len();
                let mut jw = wbar.clone();
                for i in 1..q {
                    jw[i] = -jw[i];
                }
                let mut dot = jw[0] * v[0];
                for i in 1..q {
                    dot += jw[i] * v[i];
                }
                let two = fr::<T>(2.0);
                let mut out = DVector::zeros(q);
                out[0] = two * jw[0] * dot - v[0];
                for i in 1..q {
                    out[i] = two * jw[i] * dot + v[i];
                }
                out /= *eta * *eta;
                out
            }
            BlockScaling::Psd { winv, .. } => {
                let d = winv.nrows();
                let m = mat_from_svec(v, d);
                let res = winv * m * winv;
                let mut out = DVector::zeros(v.len());
                svec_from_mat(&sym(&res), out.as_mut_slice());
                out
            }
        }
    }
}

fn sym<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * fr::<T>(0.5)
}

/// svec-space matrix of the congruence `M -> A M A` for symmetric `A`
/// (the symmetric Kronecker square of `A`, in our sqrt(2)-scaled svec
/// coordinates).
fn skron_sym<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let d = a.nrows();
    let s = d * (d + 1) / 2;
    let sqrt2 = fr::<T>(std::f64::consts::SQRT_2);
    let mut op = DMatrix::<T>::zeros(s, s);
    let mut row = 0usize;
    for i in 0..d {
        for j in 0..=i {
            let mut col = 0usize;
            for k in 0..d {
                for l in 0..=k {
                    op[(row, col)] = if i == j {
                        if k == l {
                            a[(i, k)] * a[(i, k)]
                        } else {
                            sqrt2 * a[(i, k)] * a[(i, l)]
                        }
                    } else if k == l {
                        sqrt2 * a[(i, k)] * a[(j, k)]
                    } else {
                        a[(i, k)] * a[(j, l)] + a[(i, l)] * a[(j, k)]
                    };
                    col += 1;
                }
            }
            row += 1;
        }
    }
    op
}

/// `Wbar u` via the rank-one structure of the hyperbolic Householder matrix.
fn soc_apply_wbar<T: Real>(wbar: &DVector<T>, u: &[T]) -> DVector<T> {
    let q = u.len();
    let mut tail_dot = T::zero();
    for i in 1..q {
        tail_dot += wbar[i] * u[i];
    }
    let mut out = DVector::zeros(q);
    out[0] = wbar[0] * u[0] + tail_dot;
    let coef = u[0] + tail_dot / (T::one() + wbar[0]);
    for i in 1..q {
        out[i] = u[i] + coef * wbar[i];
    }
    out
}

/// `Wbar^{-1} u = J Wbar J u`.
fn soc_apply_wbar_inv<T: Real>(wbar: &DVector<T>, u: &[T]) -> DVector<T> {
    let q = u.len();
    let mut tail_dot = T::zero();
    for i in 1..q {
        tail_dot += wbar[i] * u[i];
    }
    let mut out = DVector::zeros(q);
    out[0] = wbar[0] * u[0] - tail_dot;
    let coef = -u[0] + tail_dot / (T::one() + wbar[0]);
    for i in 1..q {
        out[i] = u[i] + coef * wbar[i];
    }
    out
}

/// NT scaling of the full product cone.
pub struct Scaling<T: Real> {
    blocks: Vec<BlockScaling<T>>,
    pub lambda: DVector<T>,
    specs: Vec<ConeSpec>,
    offsets: Vec<usize>,
    dim: usize,
}

macro_rules! blockwise {
    ($self:ident, $v:ident, $method:ident) => {{
        let mut out = DVector::zeros($self.dim);
        for (k, blk) in $self.blocks.iter().enumerate() {
            let off = $self.offsets[k];
            let rows = $self.specs[k].rows();
            let res = blk.$method(&$v.as_slice()[off..off + rows]);
            out.as_mut_slice()[off..off + rows].copy_from_slice(res.as_slice());
        }
        out
    }};
}

impl<T: Real> Scaling<T> {
    pub fn apply_w(&self, v: &DVector<T>) -> DVector<T> {
        blockwise!(self, v, apply_w)
    }
    pub fn apply_wt(&self, v: &DVector<T>) -> DVector<T> {
        blockwise!(self, v, apply_wt)
    }
    pub fn apply_winvt(&self, v: &DVector<T>) -> DVector<T> {
        blockwise!(self, v, apply_winvt)
    }
    pub fn apply_wtw_inv(&self, v: &DVector<T>) -> DVector<T> {
        blockwise!(self, v, apply_wtw_inv)
    }

    /// Applies `(W^T W)^{-1}` to every column of a matrix in place,
    /// blockwise with reused buffers (this sits on the solver's critical
    /// path).
    pub fn apply_wtw_inv_cols(&self, g: &mut DMatrix<T>) {
        let n = g.ncols();
        let half_sqrt2 = fr::<T>(1.0 / std::f64::consts::SQRT_2);
        for (k, blk) in self.blocks.iter().enumerate() {
            let off = self.offsets[k];
            match blk {
                BlockScaling::NonNeg { w } => {
                    for (i, wi) in w.iter().enumerate() {
                        let s = T::one() / (*wi * *wi);
                        for j in 0..n {
                            g[(off + i, j)] *= s;
                        }
                    }
                }
                BlockScaling::Soc { eta, wbar } => {
                    // W^{-2} = eta^{-2} (2 (J wbar)(J wbar)^T - J)
                    let q = wbar.len();
                    let inv_eta2 = T::one() / (*eta * *eta);
                    let two = fr::<T>(2.0);
                    for j in 0..n {
                        let mut dot = wbar[0] * g[(off, j)];
                        for i in 1..q {
                            dot -= wbar[i] * g[(off + i, j)];
                        }
                        let head = g[(off, j)];
                        g[(off, j)] = (two * wbar[0] * dot - head) * inv_eta2;
                        for i in 1..q {
                            let jw = -wbar[i];
                            g[(off + i, j)] = (two * jw * dot + g[(off + i, j)]) * inv_eta2;
                        }
                    }
                }
                BlockScaling::Psd { winv, .. } => {
                    // svec-space operator of the congruence (symmetric
                    // Kronecker square), then one gemm over the block rows
                    let rows = self.specs[k].rows();
                    let op = skron_sym(winv);
                    let block = g.rows(off, rows).clone_owned();
                    let res = &op * block;
                    g.rows_mut(off, rows).copy_from(&res);
                    let _ = half_sqrt2;
                }
            }
        }
    }

    /// Solves `lambda o x = d` blockwise.
    pub fn lambda_circ_inv(&self, d: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.dim);
        for (k, spec) in self.specs.iter().enumerate() {
            let off = self.offsets[k];
            match *spec {
                ConeSpec::NonNeg(l) => {
                    for i in 0..l {
                        out[off + i] = d[off + i] / self.lambda[off + i];
                    }
                }
                ConeSpec::Soc(q) => {
                    let lam = &self.lambda.as_slice()[off..off + q];
                    let dv = &d.as_slice()[off..off + q];
                    let mut tail_sq = T::zero();
                    let mut tail_dot = T::zero();
                    for i in 1..q {
                        tail_sq += lam[i] * lam[i];
                        tail_dot += lam[i] * dv[i];
                    }
                    let det = lam[0] * lam[0] - tail_sq;
                    let x0 = (lam[0] * dv[0] - tail_dot) / det;
                    out[off] = x0;
                    for i in 1..q {
                        out[off + i] = (dv[i] - x0 * lam[i]) / lam[0];
                    }
                }
                ConeSpec::Psd(dm) => {
                    let sig = match &self.blocks[k] {
                        BlockScaling::Psd { sig, .. } => sig,
                        _ => unreachable!(),
                    };
                    let half = fr::<T>(0.5);
                    for i in 0..dm {
                        for j in 0..=i {
                            let idx = off + tri_index(i, j);
                            out[idx] = d[idx] / ((sig[i] + sig[j]) * half);
                        }
                    }
                }
            }
        }
        out
    }

    /// Jordan product `u o v` blockwise (used for the Mehrotra corrector in
    /// scaled space).
    pub fn jordan(&self, u: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.dim);
        for (k, spec) in self.specs.iter().enumerate() {
            let off = self.offsets[k];
            match *spec {
                ConeSpec::NonNeg(l) => {
                    for i in 0..l {
                        out[off + i] = u[off + i] * v[off + i];
                    }
                }
                ConeSpec::Soc(q) => {
                    let ub = &u.as_slice()[off..off + q];
                    let vb = &v.as_slice()[off..off + q];
                    let mut dot = T::zero();
                    for i in 0..q {
                        dot += ub[i] * vb[i];
                    }
                    out[off] = dot;
                    for i in 1..q {
                        out[off + i] = ub[0] * vb[i] + vb[0] * ub[i];
                    }
                }
                ConeSpec::Psd(dm) => {
                    let rows = spec.rows();
                    let um = mat_from_svec(&u.as_slice()[off..off + rows], dm);
                    let vm = mat_from_svec(&v.as_slice()[off..off + rows], dm);
                    let prod = (&um * &vm + &vm * &um) * fr::<T>(0.5);
                    let mut tmp = vec![T::zero(); rows];
                    svec_from_mat(&prod, &mut tmp);
                    out.as_mut_slice()[off..off + rows].copy_from_slice(&tmp);
                }
            }
        }
        out
    }

    /// `lambda o lambda` blockwise.
    pub fn lambda_sq(&self) -> DVector<T> {
        self.jordan(&self.lambda.clone(), &self.lambda.clone())
    }
}
