//! Second worst-case robust approximation.
//!
//! Every uncertainty set is replaced by its maximum-volume inscribed
//! ellipsoid (optionally inflated to the covering LFJ ellipsoid), after
//! which the S-lemma turns each uncertain interference bound into a single
//! LMI in a rank-relaxed precoder matrix `W >= w w^H`. Signal constraints
//! reuse the conic-dual machinery over the single approximating ellipsoid,
//! where that duality is exact. The relaxation drops the rank-one
//! constraint; every solution reports the second-to-first eigenvalue ratio
//! of each precoder matrix so near-one-rank solutions can be certified.

use crate::conic::{cdot, ComplexExpr, ConicProgram, LinExpr, VarId};
use crate::ellipsoid_approx::{lfj_inflate, max_volume_inner_ellipsoid, EllipsoidError};
use crate::linalg::{principal_eigpair, quad_form};
use crate::model::{ChannelSet, NetworkConfig};
use crate::sca::{
    add_common_structure, normalized_weights, row_dot, run_sca_loop, taylor_upper_bound,
    IterationVars, ScaError, ScaOptions, ScaRun, ScaState,
};
use crate::scalar::{fr, Real, C};
use crate::solver::SolverOptions;
use crate::uncertainty::{Ellipsoid, UncertaintyMap, UncertaintySet};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RobustSecondError {
    #[error("inscribed-ellipsoid computation failed: {0}")]
    Ellipsoid(#[from] EllipsoidError),
    #[error("iteration failed: {0}")]
    Sca(#[from] ScaError),
}

/// Hermitian matrix variable as expressions: lower triangle (row-major)
/// with real diagonal.
fn add_hermitian_var<T: Real>(
    prog: &mut ConicProgram<T>,
    name: &str,
    dim: usize,
) -> Vec<ComplexExpr<T>> {
    let mut lower = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in 0..=i {
            if i == j {
                let v = prog.add_var(format!("{name}[{i}][{i}]"));
                lower.push(ComplexExpr { re: LinExpr::var(v), im: LinExpr::zero() });
            } else {
                lower.push(prog.add_complex_var(&format!("{name}[{i}][{j}]")));
            }
        }
    }
    lower
}

fn full_from_lower<T: Real>(lower: &[ComplexExpr<T>], dim: usize) -> Vec<Vec<ComplexExpr<T>>> {
    let entry = |i: usize, j: usize| -> ComplexExpr<T> {
        if i >= j {
            lower[i * (i + 1) / 2 + j].clone()
        } else {
            lower[j * (j + 1) / 2 + i].clone().conj()
        }
    };
    (0..dim).map(|i| (0..dim).map(|j| entry(i, j)).collect()).collect()
}

/// S-lemma LMI bounding `(hbar + delta) W (hbar + delta)^H <= beta` for all
/// `delta` in the ellipsoid `(delta - c) Ea (delta - c)^H <= 1`:
///
/// `[[lambda Ea - W, -W hbar^H - lambda Ea c^H],
///   [., beta - hbar W hbar^H - lambda (1 - c Ea c^H)]] >= 0`, `lambda >= 0`.
///
/// With `W = w w^H` this is exactly `|(hbar + delta) w|^2 <= beta` on the
/// ellipsoid.
pub fn s_lemma_lmi<T: Real>(
    prog: &mut ConicProgram<T>,
    hbar: &DVector<C<T>>,
    w_lower: &[ComplexExpr<T>],
    ell: &Ellipsoid<T>,
    lambda: VarId,
    beta: VarId,
) -> Result<(), ScaError> {
    let dim = hbar.len();
    let ea = ell.quadratic();
    let center = ell.center();
    let w_full = full_from_lower(w_lower, dim);

    // (hbar W)_j = sum_i hbar_i W[i][j]
    let h_w: Vec<ComplexExpr<T>> = (0..dim)
        .map(|j| {
            let mut acc = ComplexExpr::zero();
            for i in 0..dim {
                acc = acc.add(w_full[i][j].clone().scale(hbar[i]));
            }
            acc
        })
        .collect();
    // hbar W hbar^H = sum_j (hbar W)_j conj(hbar_j)
    let h_w_h = cdot(&hbar.iter().cloned().collect::<Vec<_>>(), &h_w);
    // c Ea (row vector), c Ea c^H (real scalar)
    let c_ea: Vec<C<T>> = (0..dim)
        .map(|j| {
            let mut acc = C::new(T::zero(), T::zero());
            for i in 0..dim {
                acc += center[i] * ea[(i, j)];
            }
            acc
        })
        .collect();
    let c_ea_ch = quad_form(&ea, center);

    let side = dim + 1;
    let mut lower = Vec::with_capacity(side * (side + 1) / 2);
    for i in 0..side {
        for j in 0..=i {
            let e = if i < dim {
                // lambda Ea - W
                let eac = ea[(i, j)];
                let lam_term = ComplexExpr {
                    re: LinExpr::scaled_var(lambda, eac.re),
                    im: LinExpr::scaled_var(lambda, eac.im),
                };
                lam_term.sub(w_full[i][j].clone())
            } else if j < dim {
                // bottom row: -(hbar W)_j - lambda (c Ea)_j
                let lam_term = ComplexExpr {
                    re: LinExpr::scaled_var(lambda, c_ea[j].re),
                    im: LinExpr::scaled_var(lambda, c_ea[j].im),
                };
                h_w[j].clone().neg().sub(lam_term)
            } else {
                // corner: beta - hbar W hbar^H - lambda (1 - c Ea c^H)
                let mut re = LinExpr::var(beta) - h_w_h.re.clone();
                re.add_term(lambda, -(T::one() - c_ea_ch));
                ComplexExpr { re, im: h_w_h.im.clone().neg() }
            };
            lower.push(e);
        }
    }
    crate::conic::complex_lmi_embed(prog, side, &lower)?;
    Ok(())
}

/// Per-link approximating ellipsoids, computed once per run and shared
/// across iterations. `None` marks exactly known links.
pub struct LinkEllipsoids<T: Real> {
    ells: Vec<Vec<Option<Ellipsoid<T>>>>,
}

impl<T: Real> LinkEllipsoids<T> {
    /// Inscribed maximum-volume ellipsoid per uncertain link; with
    /// `use_lfj` the result is inflated by `sqrt(T)` into the covering
    /// ellipsoid of these centrally symmetric sets.
    pub fn compute(
        sets: &UncertaintyMap<T>,
        use_lfj: bool,
        solver: &SolverOptions<T>,
    ) -> Result<Self, EllipsoidError> {
        // identical sets share one SDP solve
        let mut cache: Vec<(UncertaintySet<T>, Ellipsoid<T>)> = Vec::new();
        let mut ells = Vec::with_capacity(sets.num_bs());
        for n in 0..sets.num_bs() {
            let mut row = Vec::with_capacity(sets.num_users());
            for u in 0..sets.num_users() {
                let e = match sets.get(n, u) {
                    None => None,
                    Some(set) => {
                        let hit = cache.iter().find(|(s, _)| sets_equal(s, set));
                        let ell = match hit {
                            Some((_, e)) => e.clone(),
                            None => {
                                let e = max_volume_inner_ellipsoid(set, solver)?;
                                cache.push((set.clone(), e.clone()));
                                e
                            }
                        };
                        Some(if use_lfj { lfj_inflate(&ell, set.dim()) } else { ell })
                    }
                };
                row.push(e);
            }
            ells.push(row);
        }
        Ok(LinkEllipsoids { ells })
    }

    pub fn get(&self, source_bs: usize, user_flat: usize) -> Option<&Ellipsoid<T>> {
        self.ells[source_bs][user_flat].as_ref()
    }
}

fn sets_equal<T: Real>(a: &UncertaintySet<T>, b: &UncertaintySet<T>) -> bool {
    if a.rho() != b.rho() || a.num_ellipsoids() != b.num_ellipsoids() || a.dim() != b.dim() {
        return false;
    }
    (0..a.num_ellipsoids()).all(|q| a.shape(q) == b.shape(q))
}

/// Single-ellipsoid uncertainty set `{delta : delta Ea delta^H <= 1}`
/// shifted to the ellipsoid's center; used to route signal constraints
/// through the conic-dual machinery, which is exact for one ellipsoid.
fn signal_set_for<T: Real>(ell: &Ellipsoid<T>) -> UncertaintySet<T> {
    UncertaintySet::new(vec![ell.quadratic().clone()], T::one())
        .expect("approximating ellipsoid is positive definite")
}

/// Assembles the per-iteration problem of the second robust approximation.
pub fn build_iteration_problem_second<T: Real>(
    channels_nominal: &ChannelSet<T>,
    ells: &LinkEllipsoids<T>,
    cfg: &NetworkConfig<T>,
    state: &ScaState<T>,
) -> Result<(ConicProgram<T>, IterationVars<T>), ScaError> {
    let alphas = normalized_weights(cfg);
    let mut prog = ConicProgram::new();
    let mut vars = add_common_structure(&mut prog, cfg, state.eps_t)?;
    let users = cfg.users();
    let t_dim = cfg.num_antennas();
    let sigma2 = cfg.sigma2();

    // Hermitian precoder matrices with the Schur coupling [[W, w],[w^H, 1]]
    let mut w_mats = Vec::with_capacity(users.len());
    for flat in 0..users.len() {
        let lower = add_hermitian_var(&mut prog, &format!("W[{flat}]"), t_dim);
        let side = t_dim + 1;
        let mut coupling = Vec::with_capacity(side * (side + 1) / 2);
        for i in 0..side {
            for j in 0..=i {
                let e = if i < t_dim {
                    lower[i * (i + 1) / 2 + j].clone()
                } else if j < t_dim {
                    vars.w[flat][j].clone().conj()
                } else {
                    ComplexExpr::constant(C::new(T::one(), T::zero()))
                };
                coupling.push(e);
            }
        }
        crate::conic::complex_lmi_embed(&mut prog, side, &coupling)?;
        w_mats.push(lower);
    }

    for (flat, &user) in users.iter().enumerate() {
        let own = channels_nominal.h(user.b, cfg, user);
        let f_n = taylor_upper_bound(
            state.t[flat],
            state.mu[flat],
            alphas[flat],
            vars.t[flat],
            vars.mu[flat],
        )?;
        match ells.get(user.b, flat) {
            Some(ell) => {
                // shift the nominal channel by the ellipsoid center and run
                // the exact single-ellipsoid dual
                let shifted = own + ell.center();
                let set = signal_set_for(ell);
                crate::robust_first::dual_signal_constraints(
                    &mut prog,
                    &vars.w[flat],
                    Some(&set),
                    &shifted,
                    f_n,
                );
            }
            None => {
                crate::robust_first::dual_signal_constraints(
                    &mut prog,
                    &vars.w[flat],
                    None,
                    own,
                    f_n,
                );
            }
        }

        let mut aggregate = LinExpr::scaled_var(vars.mu[flat], T::one()).plus_const(-sigma2);
        for (oflat, &other) in users.iter().enumerate() {
            if other == user {
                continue;
            }
            let beta = prog.add_var(format!("beta[{flat}][{oflat}]"));
            prog.add_nonneg(LinExpr::var(beta));
            aggregate.add_term(beta, -T::one());
            let hbar = channels_nominal.h(other.b, cfg, user);
            match ells.get(other.b, flat) {
                Some(ell) => {
                    let lambda = prog.add_var(format!("slem[{flat}][{oflat}]"));
                    prog.add_nonneg(LinExpr::var(lambda));
                    s_lemma_lmi(&mut prog, hbar, &w_mats[oflat], ell, lambda, beta)?;
                }
                None => {
                    // exactly known link: |hbar w|^2 <= beta on the vector
                    let hw = row_dot(hbar, &vars.w[oflat]);
                    let two = fr::<T>(2.0);
                    prog.add_soc(
                        vec![
                            hw.re.clone().scale(two),
                            hw.im.clone().scale(two),
                            LinExpr::var(beta).plus_const(-T::one()),
                        ],
                        LinExpr::var(beta).plus_const(T::one()),
                    );
                }
            }
        }
        prog.add_nonneg(aggregate);
    }

    // per-BS power on the matrix traces: sum_k tr(W_{b,k}) <= P_b
    for b in 0..cfg.num_bs() {
        let mut e = LinExpr::constant(cfg.power(b));
        for k in 0..cfg.users_per_bs()[b] {
            let flat = cfg.flat_index(crate::model::UserId { b, k });
            for i in 0..t_dim {
                e = e - w_mats[flat][i * (i + 1) / 2 + i].re.clone();
            }
        }
        prog.add_nonneg(e);
    }

    vars.w_mats = Some(w_mats);
    Ok((prog, vars))
}

/// Principal-eigenpair beamformer extraction `sqrt(lambda_1) v_1` with the
/// second-to-first eigenvalue ratio.
pub fn extract_beamformer<T: Real>(w_mat: &DMatrix<C<T>>) -> (DVector<C<T>>, T) {
    let (lam1, v, ratio) = principal_eigpair(w_mat);
    let scale = C::new(lam1.max(T::zero()).sqrt(), T::zero());
    (v * scale, ratio)
}

/// Runs the second robust approximation; `use_lfj` switches the
/// approximating ellipsoids to their LFJ covers.
pub fn run_second<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    use_lfj: bool,
) -> Result<ScaRun<T>, RobustSecondError> {
    let ells = LinkEllipsoids::compute(sets, use_lfj, &opts.solver)?;
    let mu_cap = crate::robust_first::robust_mu_cap(channels_nominal, cfg, sets);
    let run = run_sca_loop(cfg, opts, mu_cap, |state| {
        build_iteration_problem_second(channels_nominal, &ells, cfg, state)
    })?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_channels;
    use crate::solver::{solve, SolveStatus};
    use crate::uncertainty::{make_box, sample, SampleMode};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cc(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn const_hermitian(m: &DMatrix<C<f64>>) -> Vec<ComplexExpr<f64>> {
        let d = m.nrows();
        let mut lower = Vec::new();
        for i in 0..d {
            for j in 0..=i {
                lower.push(ComplexExpr::constant(m[(i, j)]));
            }
        }
        lower
    }

    fn min_beta_for(
        hbar: &DVector<C<f64>>,
        w_mat: &DMatrix<C<f64>>,
        ell: &Ellipsoid<f64>,
    ) -> f64 {
        let mut prog = ConicProgram::<f64>::new();
        let beta = prog.add_var("beta");
        let lambda = prog.add_var("lambda");
        prog.add_nonneg(LinExpr::var(lambda));
        s_lemma_lmi(&mut prog, hbar, &const_hermitian(w_mat), ell, lambda, beta).unwrap();
        prog.set_objective_max(LinExpr::var(beta).neg());
        let sol = solve(&prog, &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        sol.value(beta)
    }

    #[test]
    fn s_lemma_zero_matrix_gives_zero_beta() {
        let ell = Ellipsoid::<f64>::unit_ball(2);
        let hbar = DVector::from_vec(vec![cc(1.0, 0.0), cc(0.0, 1.0)]);
        let w = DMatrix::<C<f64>>::zeros(2, 2);
        let b = min_beta_for(&hbar, &w, &ell);
        assert!(b.abs() < 1e-6, "beta {b}");
    }

    #[test]
    fn s_lemma_unit_ball_rank_one_equals_four() {
        let ell = Ellipsoid::<f64>::unit_ball(2);
        let hbar = DVector::from_vec(vec![cc(1.0, 0.0), cc(0.0, 0.0)]);
        let wv = DVector::from_vec(vec![cc(1.0, 0.0), cc(0.0, 0.0)]);
        let w = &wv * wv.adjoint();
        let b = min_beta_for(&hbar, &w, &ell);
        assert!((b - 4.0).abs() < 1e-4, "beta {b}");

        // sampled maximization oracle approaches the same value
        let set = UncertaintySet::new(vec![DMatrix::<C<f64>>::identity(2, 2)], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut max_seen: f64 = 0.0;
        for d in sample(&set, 100_000, &mut rng, SampleMode::BoundaryBiased) {
            max_seen = max_seen.max((&hbar + &d).dot(&wv).norm_sqr());
        }
        assert!(max_seen <= b * (1.0 + 1e-6) && max_seen >= b * 0.99, "sampled {max_seen}");
    }

    /// On random small instances the minimal beta agrees with the sampled
    /// maximum of |(hbar + delta) w|^2 over the ellipsoid.
    #[test]
    fn s_lemma_exactness_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let t = 2usize;
            let a = DMatrix::<C<f64>>::from_fn(t, t, |_, _| {
                cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let q = &a * a.adjoint() + DMatrix::identity(t, t) * cc(0.5, 0.0);
            let center = DVector::from_fn(t, |_, _| {
                cc(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
            });
            let ell = Ellipsoid::from_quadratic(q.clone(), center.clone()).unwrap();
            let hbar = DVector::from_fn(t, |_, _| {
                cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let wv = DVector::from_fn(t, |_, _| {
                cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let w = &wv * wv.adjoint();
            let beta = min_beta_for(&hbar, &w, &ell);

            let mut max_seen: f64 = 0.0;
            for _ in 0..20_000 {
                let mut u = DVector::<C<f64>>::from_fn(t, |_, _| {
                    let re: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    let im: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    cc(re, im)
                });
                u /= cc(u.norm(), 0.0);
                let d = ell.point(&u);
                max_seen = max_seen.max((&hbar + &d).dot(&wv).norm_sqr());
            }
            assert!(max_seen <= beta * (1.0 + 1e-6), "trial {trial}: unsafe");
            assert!(max_seen >= beta * 0.99, "trial {trial}: loose ({max_seen} vs {beta})");
        }
    }

    #[test]
    fn extraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // exact rank one: recovered up to a global phase
        let wv = DVector::from_fn(3, |_, _| {
            cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let w = &wv * wv.adjoint();
        let (got, ratio) = extract_beamformer(&w);
        assert!(ratio < 1e-12);
        let overlap = got.dotc(&wv).norm_sqr().sqrt() / (got.norm() * wv.norm());
        assert!((overlap - 1.0).abs() < 1e-9, "overlap {overlap}");

        // identity: ratio one, unit norm output
        let (v, r) = extract_beamformer(&DMatrix::<C<f64>>::identity(2, 2));
        assert!((r - 1.0).abs() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-9);

        // tiny perturbation of rank one: small direction error
        let mut pert = w.clone();
        for i in 0..3 {
            for j in 0..3 {
                pert[(i, j)] += cc(rng.random_range(-1e-6..1e-6), rng.random_range(-1e-6..1e-6));
            }
        }
        let pert = (&pert + pert.adjoint()) * cc(0.5, 0.0);
        let (got2, _) = extract_beamformer(&pert);
        let overlap2 = got2.dotc(&wv).norm_sqr().sqrt() / (got2.norm() * wv.norm());
        assert!(overlap2 > 1.0 - 1e-2, "overlap {overlap2}");
    }

    #[test]
    fn variable_count_matches_construction() {
        let cfg = NetworkConfig::uniform(2, 2, 3, 1.0, 10.0).unwrap();
        let ch = generate_channels(&cfg, 1);
        let set = make_box::<f64>(3, 0.05, None).unwrap();
        let sets = UncertaintyMap::uniform(2, 4, set);
        let ells = LinkEllipsoids::compute(&sets, false, &SolverOptions::default()).unwrap();
        let state = ScaState {
            t: vec![1.5; 4],
            mu: vec![2.0; 4],
            iteration: 0,
            history: vec![],
            converged: false,
            eps_t: 1e-3,
        };
        let (prog, vars) = build_iteration_problem_second(&ch, &ells, &cfg, &state).unwrap();
        let k = 4usize;
        let t = 3usize;
        // common: w (2T per user) + t + mu + tree (g + 2 internal)
        let common = k * (2 * t + 2) + 3;
        // W matrices: T real diagonals + T(T-1) off-diagonal reals per user
        let w_mat = k * t * t;
        // signal duals: 1 lambda + 2T per user (Q=1 over the ellipsoid)
        let signal = k * (1 + 2 * t);
        // interference: per user K-1 betas + K-1 s-lemma multipliers
        let interf = k * (k - 1) * 2;
        assert_eq!(prog.num_vars(), common + w_mat + signal + interf);
        assert!(vars.w_mats.is_some());
        // K coupling LMIs + K(K-1) s-lemma LMIs
        assert_eq!(prog.num_psds(), k + k * (k - 1));
    }

    #[test]
    fn tiny_rho_matches_nonrobust_iteration_objective() {
        let cfg = NetworkConfig::uniform(2, 2, 3, 1.0, 10.0).unwrap();
        let ch = generate_channels(&cfg, 2);
        let state = ScaState {
            t: vec![1.4; 4],
            mu: vec![3.0; 4],
            iteration: 0,
            history: vec![],
            converged: false,
            eps_t: 1e-3,
        };
        let (p0, _) = crate::sca::build_iteration_problem(&ch, &cfg, &state).unwrap();
        let s0 = solve(&p0, &SolverOptions::default());
        assert_eq!(s0.status, SolveStatus::Optimal);

        let set = make_box::<f64>(3, 1e-8, None).unwrap();
        let sets = UncertaintyMap::uniform(2, 4, set);
        let ells = LinkEllipsoids::compute(&sets, false, &SolverOptions::default()).unwrap();
        let (p1, _) = build_iteration_problem_second(&ch, &ells, &cfg, &state).unwrap();
        let s1 = solve(&p1, &SolverOptions::default());
        assert_eq!(s1.status, SolveStatus::Optimal);
        let rel = (s0.objective - s1.objective).abs() / s0.objective.abs();
        assert!(rel < 1e-3, "objectives {} vs {} (rel {rel})", s0.objective, s1.objective);
    }

    #[test]
    fn inner_ellipsoid_within_set_within_lfj_cover() {
        let set = make_box::<f64>(3, 0.09, None).unwrap();
        let sets = UncertaintyMap::uniform(1, 1, set.clone());
        let inner = LinkEllipsoids::compute(&sets, false, &SolverOptions::default()).unwrap();
        let cover = LinkEllipsoids::compute(&sets, true, &SolverOptions::default()).unwrap();
        let inner = inner.get(0, 0).unwrap();
        let cover = cover.get(0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // boundary points of the inner ellipsoid are inside the set; set
        // samples are inside the cover
        for _ in 0..4000 {
            let mut u = DVector::<C<f64>>::from_fn(3, |_, _| {
                let re: f64 = rand_distr::StandardNormal.sample(&mut rng);
                let im: f64 = rand_distr::StandardNormal.sample(&mut rng);
                cc(re, im)
            });
            u /= cc(u.norm(), 0.0);
            let x = inner.point(&u);
            assert!(crate::uncertainty::membership(&set, &x).unwrap().inside);
        }
        for d in sample(&set, 4000, &mut rng, SampleMode::BoundaryBiased) {
            assert!(cover.contains(&d));
        }
    }

    #[test]
    fn run_second_monotone_with_near_rank_one_precoders() {
        let cfg = NetworkConfig::uniform(2, 2, 4, 1.0, 10.0).unwrap();
        let ch = generate_channels(&cfg, 3);
        let set = make_box::<f64>(4, 0.05, None).unwrap();
        let sets = UncertaintyMap::uniform(2, 4, set);
        let opts = ScaOptions { seed: 3, ..Default::default() };
        let run_out = run_second(&ch, &sets, &cfg, &opts, false).unwrap();
        for w in run_out.state.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "history decreased");
        }
        let ranks = run_out.rank_report.as_ref().unwrap();
        for (i, r) in ranks.iter().enumerate() {
            assert!(*r < 1e-2, "user {i} rank ratio {r}");
        }
        // extracted beams agree with the vector variables when rank is one
        let pre = run_out.precoders.as_ref().unwrap();
        for (flat, u) in cfg.users().iter().enumerate() {
            let (ext, _) = extract_beamformer(&pre[flat]);
            let wv = run_out.beams.w(&cfg, *u);
            let overlap = ext.dotc(wv).norm_sqr().sqrt() / (ext.norm() * wv.norm()).max(1e-12);
            assert!(overlap > 1.0 - 1e-2, "user {flat} overlap {overlap}");
        }
    }
}
