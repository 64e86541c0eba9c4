//! Conic solver: a dense primal-dual interior-point method for problems
//! with linear equalities and nonnegative / second-order / PSD cone
//! constraints.
//!
//! The implementation follows the homogeneous self-dual embedding with
//! Nesterov-Todd scaling and Mehrotra predictor-corrector steps, so primal
//! and dual infeasibility produce certificates rather than divergence. It is
//! written for the dense, desk-scale problems this crate generates (a few
//! hundred variables, a couple of thousand cone rows); any external conic
//! solver supporting the same cone set can be substituted behind
//! [`solve`]'s contract.

mod cones;
mod kkt;

pub use cones::{ConeSet, ConeSpec};

use crate::conic::ConicProgram;
use crate::scalar::{fr, Real};
use cones::Scaling;
use kkt::KktSystem;
use nalgebra::{DMatrix, DVector};

/// Solver stopping parameters.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions<T: Real> {
    /// Relative duality-gap tolerance.
    pub tol_gap: T,
    /// Primal/dual feasibility tolerance.
    pub tol_feas: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions { tol_gap: fr(1e-7), tol_feas: fr(1e-7), max_iterations: 200 }
    }
}

/// Outcome classification of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

/// Primal/dual residuals and relative gap of the reported point.
#[derive(Clone, Copy, Debug)]
pub struct Residuals<T: Real> {
    pub primal: T,
    pub dual: T,
    pub gap: T,
}

/// Result of [`solve`]: status, primal point and certified objective values.
#[derive(Clone, Debug)]
pub struct Solution<T: Real> {
    pub status: SolveStatus,
    /// Values of the program variables (in declaration order).
    pub values: Vec<T>,
    /// Maximized objective value at the reported point.
    pub objective: T,
    /// Dual bound on the objective.
    pub dual_objective: T,
    pub residuals: Residuals<T>,
    pub iterations: usize,
}

impl<T: Real> Solution<T> {
    pub fn value(&self, v: crate::conic::VarId) -> T {
        self.values[v.index()]
    }

    pub fn value_of(&self, e: &crate::conic::LinExpr<T>) -> T {
        let mut acc = e.constant;
        for (v, c) in &e.terms {
            acc += *c * self.values[v.index()];
        }
        acc
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct StandardForm<T: Real> {
    c: DVector<T>,
    a_mat: DMatrix<T>,
    b: DVector<T>,
    g_mat: DMatrix<T>,
    h: DVector<T>,
    cones: ConeSet,
    obj_const: T,
    /// Ruiz column scalings: the reported variable is `d[j] * x_scaled[j]`.
    var_scale: DVector<T>,
    /// Cached transposes (hot paths multiply by them every iteration).
    g_t: DMatrix<T>,
    a_t: DMatrix<T>,
}

impl<T: Real> StandardForm<T> {
    fn extract(&self, x: &DVector<T>, tau: T) -> Vec<T> {
        x.iter().zip(self.var_scale.iter()).map(|(&v, &d)| v * d / tau).collect()
    }

    /// Ruiz equilibration: iteratively scales columns and (blockwise) rows
    /// of the stacked constraint matrix towards unit infinity norms. Rows
    /// belonging to one SOC/PSD block share a scaling so the cone geometry
    /// is preserved.
    fn equilibrate(&mut self) {
        let n = self.c.len();
        let p = self.b.len();
        let clamp = |v: T| v.max(fr(1e-8)).min(fr(1e8));
        // row group index per G row: blocks share one group
        let mut g_group = Vec::with_capacity(self.cones.dim());
        let mut n_groups = 0usize;
        for spec in self.cones.iter_specs() {
            match spec {
                ConeSpec::NonNeg(l) => {
                    for _ in 0..l {
                        g_group.push(n_groups);
                        n_groups += 1;
                    }
                }
                other => {
                    for _ in 0..other.rows() {
                        g_group.push(n_groups);
                    }
                    n_groups += 1;
                }
            }
        }
        for _ in 0..3 {
            // column pass over [A; G]
            for j in 0..n {
                let mut cmax = T::zero();
                for i in 0..p {
                    cmax = cmax.max(self.a_mat[(i, j)].abs());
                }
                for i in 0..self.cones.dim() {
                    cmax = cmax.max(self.g_mat[(i, j)].abs());
                }
                if cmax > T::zero() {
                    let s = T::one() / clamp(cmax.sqrt());
                    self.var_scale[j] *= s;
                    self.c[j] *= s;
                    for i in 0..p {
                        self.a_mat[(i, j)] *= s;
                    }
                    for i in 0..self.cones.dim() {
                        self.g_mat[(i, j)] *= s;
                    }
                }
            }
            // row pass: equalities individually
            for i in 0..p {
                let mut rmax = self.b[i].abs();
                for j in 0..n {
                    rmax = rmax.max(self.a_mat[(i, j)].abs());
                }
                if rmax > T::zero() {
                    let s = T::one() / clamp(rmax.sqrt());
                    self.b[i] *= s;
                    for j in 0..n {
                        self.a_mat[(i, j)] *= s;
                    }
                }
            }
            // row pass: cone rows per block group
            let mut gmax = vec![T::zero(); n_groups];
            for i in 0..self.cones.dim() {
                let mut rmax = self.h[i].abs();
                for j in 0..n {
                    rmax = rmax.max(self.g_mat[(i, j)].abs());
                }
                let grp = g_group[i];
                gmax[grp] = gmax[grp].max(rmax);
            }
            for i in 0..self.cones.dim() {
                let m = gmax[g_group[i]];
                if m > T::zero() {
                    let s = T::one() / clamp(m.sqrt());
                    self.h[i] *= s;
                    for j in 0..n {
                        self.g_mat[(i, j)] *= s;
                    }
                }
            }
        }
    }
}

fn lower<T: Real>(prog: &ConicProgram<T>) -> StandardForm<T> {
    let n = prog.num_vars();
    let obj = prog.objective();
    let mut c = DVector::zeros(n);
    for (v, coef) in &obj.terms {
        c[v.index()] -= *coef; // maximize -> minimize
    }

    let p = prog.num_eqs();
    let mut a_mat = DMatrix::zeros(p, n);
    let mut b = DVector::zeros(p);
    for (r, e) in prog.eq_blocks().iter().enumerate() {
        for (v, coef) in &e.terms {
            a_mat[(r, v.index())] += *coef;
        }
        b[r] = -e.constant;
    }

    let mut specs = Vec::new();
    let mut rows: Vec<(Vec<(usize, T)>, T)> = Vec::new();
    let push_row = |e: &crate::conic::LinExpr<T>, scale: T, rows: &mut Vec<(Vec<(usize, T)>, T)>| {
        let coefs = e.terms.iter().map(|(v, c)| (v.index(), -*c * scale)).collect();
        rows.push((coefs, e.constant * scale));
    };

    let n_nonneg = prog.num_nonnegs();
    if n_nonneg > 0 || (prog.num_socs() == 0 && prog.num_psds() == 0) {
        // a dummy strictly feasible row keeps the cone nonempty when the
        // program has no inequality structure at all
        if n_nonneg == 0 {
            rows.push((Vec::new(), T::one()));
            specs.push(ConeSpec::NonNeg(1));
        } else {
            for e in prog.nonneg_blocks() {
                push_row(e, T::one(), &mut rows);
            }
            specs.push(ConeSpec::NonNeg(n_nonneg));
        }
    }
    for soc in prog.soc_blocks() {
        push_row(&soc.bound, T::one(), &mut rows);
        for a in &soc.args {
            push_row(a, T::one(), &mut rows);
        }
        specs.push(ConeSpec::Soc(1 + soc.args.len()));
    }
    let sqrt2 = fr::<T>(std::f64::consts::SQRT_2);
    for psd in prog.psd_blocks() {
        for i in 0..psd.dim {
            for j in 0..=i {
                let e = &psd.lower[i * (i + 1) / 2 + j];
                let scale = if i == j { T::one() } else { sqrt2 };
                push_row(e, scale, &mut rows);
            }
        }
        specs.push(ConeSpec::Psd(psd.dim));
    }

    let m = rows.len();
    let mut g_mat = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    for (r, (coefs, hc)) in rows.into_iter().enumerate() {
        for (col, v) in coefs {
            g_mat[(r, col)] += v;
        }
        h[r] = hc;
    }

    let n_vars = prog.num_vars();
    let mut sf = StandardForm {
        c,
        a_mat,
        b,
        g_mat,
        h,
        cones: ConeSet::new(specs),
        obj_const: obj.constant,
        var_scale: DVector::from_element(n_vars, T::one()),
        g_t: DMatrix::zeros(0, 0),
        a_t: DMatrix::zeros(0, 0),
    };
    sf.equilibrate();
    sf.g_t = sf.g_mat.transpose();
    sf.a_t = sf.a_mat.transpose();
    sf
}

/// Minimum eigenvalue of a cone element, blockwise (used to shift the
/// initial point into the interior).
fn cone_min_eig<T: Real>(cones: &ConeSet, v: &DVector<T>) -> T {
    let mut me = fr::<T>(1e30);
    let mut off = 0usize;
    for spec in cones.iter_specs() {
        match spec {
            ConeSpec::NonNeg(l) => {
                for i in 0..l {
                    me = me.min(v[off + i]);
                }
            }
            ConeSpec::Soc(q) => {
                let mut tail = T::zero();
                for i in 1..q {
                    tail += v[off + i] * v[off + i];
                }
                me = me.min(v[off] - tail.sqrt());
            }
            ConeSpec::Psd(d) => {
                let m = cones::mat_from_svec(&v.as_slice()[off..off + spec.rows()], d);
                let eig = m.symmetric_eigen();
                for i in 0..d {
                    me = me.min(eig.eigenvalues[i]);
                }
            }
        }
        off += spec.rows();
    }
    me
}

/// Solves a [`ConicProgram`] to the requested tolerances.
pub fn solve<T: Real>(prog: &ConicProgram<T>, opts: &SolverOptions<T>) -> Solution<T> {
    let sf = lower(prog);
    let n = sf.c.len();
    let p = sf.b.len();
    let m = sf.cones.dim();
    let deg = fr::<T>((sf.cones.degree() + 1) as f64);

    let c_norm = sf.c.norm().max(T::one());
    let b_norm = sf.b.norm().max(T::one());
    let h_norm = sf.h.norm().max(T::one());
    let data_norm = c_norm.max(b_norm).max(h_norm);

    let e = sf.cones.identity::<T>();
    // static KKT regularization, fixed across iterations
    let reg = T::default_epsilon().powf(fr(2.0 / 3.0)) * data_norm;

    let fail = |status: SolveStatus, x: &DVector<T>, tau: T, iters: usize, res: Residuals<T>| {
        let xv: Vec<T> = sf.extract(x, tau);
        let obj_expr = prog.objective();
        let mut obj = obj_expr.constant;
        for (v, coef) in &obj_expr.terms {
            obj += *coef * xv[v.index()];
        }
        Solution {
            status,
            values: xv,
            objective: obj,
            dual_objective: obj,
            residuals: res,
            iterations: iters,
        }
    };
    let bad_res = Residuals { primal: fr(1e30), dual: fr(1e30), gap: fr(1e30) };

    // ---- initial point from two least-squares solves with W = I ----
    let ident_scaling = match sf.cones.nt_scaling(&e, &e) {
        Some(s) => s,
        None => return fail(SolveStatus::NumericalFailure, &DVector::zeros(n), T::one(), 0, bad_res),
    };
    let kkt0 = match KktSystem::build(&sf.a_mat, &sf.g_t, &sf.g_mat, &ident_scaling, reg) {
        Some(k) => k,
        None => return fail(SolveStatus::NumericalFailure, &DVector::zeros(n), T::one(), 0, bad_res),
    };
    let base_solve = |kkt: &KktSystem<T>,
                      scaling: &Scaling<T>,
                      bx: &DVector<T>,
                      by: &DVector<T>,
                      bz: &DVector<T>|
     -> (DVector<T>, DVector<T>, DVector<T>) {
        let wtw_bz = scaling.apply_wtw_inv(bz);
        let rx = bx + &sf.g_t * &wtw_bz;
        let (ux, uy) = kkt.solve(&sf.a_mat, &sf.a_t, &rx, by);
        let uz = scaling.apply_wtw_inv(&(&sf.g_mat * &ux - bz));
        (ux, uy, uz)
    };
    // Solves the full 3x3 KKT system with refinement against the original
    // blocks; the reduced view alone can report a small residual while the
    // dual equation is still off.
    let solve_reduced = |kkt: &KktSystem<T>,
                         scaling: &Scaling<T>,
                         bx: &DVector<T>,
                         by: &DVector<T>,
                         bz: &DVector<T>|
     -> (DVector<T>, DVector<T>, DVector<T>) {
        let (mut ux, mut uy, mut uz) = base_solve(kkt, scaling, bx, by, bz);
        let residuals = |ux: &DVector<T>, uy: &DVector<T>, uz: &DVector<T>| {
            let r1 = bx - (&sf.a_t * uy + &sf.g_t * uz);
            let r2 = by - &sf.a_mat * ux;
            let r3 = bz - (&sf.g_mat * ux - scaling.apply_wt(&scaling.apply_w(uz)));
            (r1, r2, r3)
        };
        let rhs_scale = bx.norm().max(by.norm()).max(bz.norm()).max(T::one());
        let (mut r1, mut r2, mut r3) = residuals(&ux, &uy, &uz);
        let mut score = r1.norm().max(r2.norm()).max(r3.norm());
        for _ in 0..3 {
            if score <= fr::<T>(1e-14) * rhs_scale {
                break;
            }
            let (dx, dy, dz) = base_solve(kkt, scaling, &r1, &r2, &r3);
            let cx = &ux + &dx;
            let cy = &uy + &dy;
            let cz = &uz + &dz;
            let (n1, n2, n3) = residuals(&cx, &cy, &cz);
            let cand = n1.norm().max(n2.norm()).max(n3.norm());
            if cand >= score {
                break;
            }
            ux = cx;
            uy = cy;
            uz = cz;
            r1 = n1;
            r2 = n2;
            r3 = n3;
            score = cand;
        }
        (ux, uy, uz)
    };

    let (x0, _y0, z0p) = solve_reduced(&kkt0, &ident_scaling, &DVector::zeros(n), &sf.b, &sf.h);
    let mut s = -z0p;
    let me_s = cone_min_eig(&sf.cones, &s);
    if me_s <= fr(1e-10) {
        s += &e * (T::one() - me_s);
    }
    let (_xd, y0, z0) =
        solve_reduced(&kkt0, &ident_scaling, &(-&sf.c), &DVector::zeros(p), &DVector::zeros(m));
    let mut z = z0;
    let me_z = cone_min_eig(&sf.cones, &z);
    if me_z <= fr(1e-10) {
        z += &e * (T::one() - me_z);
    }
    let mut x = x0;
    let mut y = y0;
    let mut tau = T::one();
    let mut kappa = T::one();

    let mut best: Option<(T, DVector<T>, T, Residuals<T>, T, T)> = None;
    let step_limit = fr::<T>(0.99);
    let mut hit_limit = true;

    for iter in 0..opts.max_iterations {
        // ---- residuals of the homogeneous model ----
        let rx = &sf.a_t * &y + &sf.g_t * &z + &sf.c * tau;
        let ry = &sf.a_mat * &x - &sf.b * tau;
        let rz = &sf.g_mat * &x + &s - &sf.h * tau;
        let rtau = sf.c.dot(&x) + sf.b.dot(&y) + sf.h.dot(&z) + kappa;
        let gap = s.dot(&z);
        let mu = (gap + tau * kappa) / deg;

        let pcost = sf.c.dot(&x) / tau;
        let dcost = -(sf.b.dot(&y) + sf.h.dot(&z)) / tau;
        let pres = (ry.norm() / b_norm).max(rz.norm() / h_norm) / tau;
        let dres = rx.norm() / c_norm / tau;
        let relgap = (gap / (tau * tau)) / T::one().max(pcost.abs()).max(dcost.abs());
        if std::env::var_os("WSRM_SOLVER_TRACE").is_some() {
            eprintln!(
                "it {iter:3} pcost {:+.6e} dcost {:+.6e} pres {:.2e} dres {:.2e} gap {:.2e} tau {:.2e} kappa {:.2e} mu {:.2e}",
                pcost.to_f64().unwrap_or(f64::NAN),
                dcost.to_f64().unwrap_or(f64::NAN),
                pres.to_f64().unwrap_or(f64::NAN),
                dres.to_f64().unwrap_or(f64::NAN),
                relgap.to_f64().unwrap_or(f64::NAN),
                tau.to_f64().unwrap_or(f64::NAN),
                kappa.to_f64().unwrap_or(f64::NAN),
                mu.to_f64().unwrap_or(f64::NAN)
            );
        }
        let res_now = Residuals { primal: pres, dual: dres, gap: relgap };
        let score = pres.max(dres).max(relgap);
        if best.as_ref().map_or(true, |(bs, ..)| score < *bs) {
            best = Some((score, x.clone(), tau, res_now, pcost, dcost));
        }
        if pres <= opts.tol_feas && dres <= opts.tol_feas && relgap <= opts.tol_gap {
            let xv: Vec<T> = sf.extract(&x, tau);
            return Solution {
                status: SolveStatus::Optimal,
                values: xv,
                objective: -pcost + sf.obj_const,
                dual_objective: -dcost + sf.obj_const,
                residuals: res_now,
                iterations: iter,
            };
        }

        let best_score = best.as_ref().map(|(bs, ..)| *bs).unwrap_or(score);
        let stalled = mu <= T::default_epsilon() * fr(10.0)
            || (score > best_score * fr(1e4) && best_score < fr(1e-4));
        if stalled {
            hit_limit = false;
            break;
        }

        // ---- infeasibility certificates ----
        let hz_by = sf.h.dot(&z) + sf.b.dot(&y);
        if hz_by < -fr::<T>(1e-12) {
            let scale = -T::one() / hz_by;
            let cert = (&sf.a_t * &y + &sf.g_t * &z) * scale;
            if cert.norm() / data_norm <= opts.tol_feas {
                return fail(SolveStatus::Infeasible, &x, tau, iter, res_now);
            }
        }
        let cx = sf.c.dot(&x);
        if cx < -fr::<T>(1e-12) {
            let scale = -T::one() / cx;
            let r1 = (&sf.a_mat * &x) * scale;
            let r2 = (&sf.g_mat * &x + &s) * scale;
            if r1.norm().max(r2.norm()) / data_norm <= opts.tol_feas {
                return fail(SolveStatus::Unbounded, &x, tau, iter, res_now);
            }
        }

        // ---- Nesterov-Todd scaling and KKT factorization ----
        let scaling = match sf.cones.nt_scaling(&s, &z) {
            Some(w) => w,
            None => return fail(SolveStatus::NumericalFailure, &x, tau, iter, res_now),
        };
        let kkt = match KktSystem::build(&sf.a_mat, &sf.g_t, &sf.g_mat, &scaling, reg) {
            Some(k) => k,
            None => return fail(SolveStatus::NumericalFailure, &x, tau, iter, res_now),
        };
        // direction attached to the (c, b, h) right-hand side
        let (x2, y2, z2) = solve_reduced(&kkt, &scaling, &(-&sf.c), &sf.b, &sf.h);
        let denom = sf.c.dot(&x2) + sf.b.dot(&y2) + sf.h.dot(&z2) - kappa / tau;
        if denom.abs() <= fr(1e-28) {
            return fail(SolveStatus::NumericalFailure, &x, tau, iter, res_now);
        }

        let lambda_sq = scaling.lambda_sq();
        let newton = |rx_t: &DVector<T>,
                      ry_t: &DVector<T>,
                      rz_t: &DVector<T>,
                      rtau_t: T,
                      ds_rhs: &DVector<T>,
                      dkt_rhs: T|
         -> (DVector<T>, DVector<T>, DVector<T>, DVector<T>, T, T) {
            let ds_tilde = scaling.lambda_circ_inv(ds_rhs);
            let bz1 = rz_t - scaling.apply_wt(&ds_tilde);
            let (x1, y1, z1) = solve_reduced(&kkt, &scaling, rx_t, ry_t, &bz1);
            let dtau = (rtau_t - dkt_rhs / tau - (sf.c.dot(&x1) + sf.b.dot(&y1) + sf.h.dot(&z1)))
                / denom;
            let dx = &x1 + &x2 * dtau;
            let dy = &y1 + &y2 * dtau;
            let dz = &z1 + &z2 * dtau;
            let ds = rz_t + &sf.h * dtau - &sf.g_mat * &dx;
            let dkappa = (dkt_rhs - kappa * dtau) / tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };

        // ---- affine (predictor) direction ----
        let (dx_a, _dy_a, dz_a, ds_a, dtau_a, dkappa_a) =
            newton(&(-&rx), &(-&ry), &(-&rz), -rtau, &(-&lambda_sq), -tau * kappa);

        let mut alpha_aff = sf.cones.max_step(&s, &ds_a).min(sf.cones.max_step(&z, &dz_a));
        if dtau_a < T::zero() {
            alpha_aff = alpha_aff.min(-tau / dtau_a);
        }
        if dkappa_a < T::zero() {
            alpha_aff = alpha_aff.min(-kappa / dkappa_a);
        }
        let alpha_aff = alpha_aff.min(T::one());
        let one_m = T::one() - alpha_aff;
        let sigma = (one_m * one_m * one_m).clamp(T::zero(), T::one());

        // ---- combined (corrector) direction ----
        let corr = scaling.jordan(&scaling.apply_winvt(&ds_a), &scaling.apply_w(&dz_a));
        let mut ds_rhs = -&lambda_sq - corr;
        ds_rhs += &e * (sigma * mu);
        let dkt_rhs = -tau * kappa + sigma * mu - dtau_a * dkappa_a;
        let rscale = -(T::one() - sigma);
        let (dx, dy, dz, ds, dtau, dkappa) = newton(
            &(&rx * rscale),
            &(&ry * rscale),
            &(&rz * rscale),
            rtau * rscale,
            &ds_rhs,
            dkt_rhs,
        );
        let _ = dx_a;

        let mut alpha = sf.cones.max_step(&s, &ds).min(sf.cones.max_step(&z, &dz));
        if dtau < T::zero() {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < T::zero() {
            alpha = alpha.min(-kappa / dkappa);
        }
        let alpha = (alpha * step_limit).min(T::one());
        if alpha <= fr(1e-10) {
            return fail(SolveStatus::NumericalFailure, &x, tau, iter, res_now);
        }

        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &ds * alpha;
        tau += dtau * alpha;
        kappa += dkappa * alpha;
        if tau <= T::zero() || kappa < T::zero() || !tau.is_finite() {
            return fail(SolveStatus::NumericalFailure, &x.clone(), tau.max(fr(1e-30)), iter, res_now);
        }
    }

    let (_, bx, btau, bres, bp, bd) = best.expect("at least one iterate");
    let status = if hit_limit { SolveStatus::IterationLimit } else { SolveStatus::NumericalFailure };
    let mut sol = fail(status, &bx, btau, opts.max_iterations, bres);
    sol.objective = -bp + sf.obj_const;
    sol.dual_objective = -bd + sf.obj_const;
    sol
}
