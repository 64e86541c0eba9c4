//! Weighted-sum-rate maximization with perfect channel knowledge via
//! sequential convex approximation.
//!
//! Each iteration solves a convex cone program in which the nonconvex
//! signal constraint is replaced by a first-order Taylor upper bound of
//! `sqrt((t^(1/alpha) - 1) mu)` around the previous iterate; value and
//! gradient match there, which makes the objective sequence monotone.

use crate::conic::{
    geometric_mean_objective, ComplexExpr, ConicProgram, LinExpr, VarId,
};
use crate::model::{BeamformerSet, ChannelSet, NetworkConfig, UserId};
use crate::scalar::{fr, Real, C};
use crate::solver::{solve, SolveStatus, SolverOptions};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScaError {
    #[error("expansion point t = {t} is singular (must exceed 1)")]
    SingularExpansion { t: f64 },
    #[error("no converging sequence found after {attempts} restarts (last status {last:?})")]
    RestartsExhausted { attempts: usize, last: SolveStatus },
    #[error("model error: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("conic construction error: {0}")]
    Conic(#[from] crate::conic::ConicError),
}

/// Options shared by the nonrobust and robust SCA drivers.
#[derive(Clone, Copy, Debug)]
pub struct ScaOptions<T: Real> {
    pub max_iters: usize,
    /// Relative objective-stall threshold declaring convergence.
    pub tol_obj: T,
    /// Singularity guard: iterates keep `t >= 1 + eps_t`.
    pub eps_t: T,
    pub seed: u64,
    /// Random restarts before giving up when subproblems fail.
    pub restarts: usize,
    pub solver: SolverOptions<T>,
}

impl<T: Real> Default for ScaOptions<T> {
    fn default() -> Self {
        ScaOptions {
            max_iters: 50,
            tol_obj: fr(1e-4),
            eps_t: fr(1e-3),
            seed: 0,
            restarts: 10,
            solver: SolverOptions::default(),
        }
    }
}

/// Per-iteration expansion point and bookkeeping.
#[derive(Clone, Debug)]
pub struct ScaState<T: Real> {
    /// `t` expansion values per user (flat order), all `>= 1 + eps_t`.
    pub t: Vec<T>,
    /// `mu` expansion values per user (flat order), all positive.
    pub mu: Vec<T>,
    pub iteration: usize,
    /// Certified weighted-rate objective after each solved iteration.
    pub history: Vec<T>,
    pub converged: bool,
    pub eps_t: T,
}

/// Outcome of one SCA run.
#[derive(Clone, Debug)]
pub struct ScaRun<T: Real> {
    pub beams: BeamformerSet<T>,
    pub state: ScaState<T>,
    pub restarts_used: usize,
    /// Per-user second-to-first eigenvalue ratios of the precoder matrices
    /// (only set by the rank-relaxed robust variant).
    pub rank_report: Option<Vec<T>>,
    /// Final precoder matrices of the rank-relaxed variant.
    pub precoders: Option<Vec<nalgebra::DMatrix<C<T>>>>,
}

impl<T: Real> ScaRun<T> {
    /// Certified objective mapped to bits/s/Hz at the final iterate.
    pub fn objective_rate(&self) -> T {
        *self.state.history.last().expect("at least one iteration")
    }
}

/// Rate weights rescaled so every entry exceeds one (which makes
/// `t^(1/alpha)` concave); scaling the weights by a common factor leaves
/// the argmax unchanged.
pub fn normalized_weights<T: Real>(cfg: &NetworkConfig<T>) -> Vec<T> {
    let mut min = cfg.weights()[0];
    for &a in cfg.weights() {
        min = min.min(a);
    }
    let c = (T::one() + fr::<T>(1e-3)) / min;
    cfg.weights().iter().map(|&a| a * c).collect()
}

/// First-order Taylor upper bound of `sqrt((t^(1/alpha) - 1) mu)` around
/// `(t_n, mu_n)`, affine in the variables `t` and `mu`.
pub fn taylor_upper_bound<T: Real>(
    t_n: T,
    mu_n: T,
    alpha: T,
    t_var: VarId,
    mu_var: VarId,
) -> Result<LinExpr<T>, ScaError> {
    if !(t_n > T::one()) || !(mu_n > T::zero()) {
        return Err(ScaError::SingularExpansion { t: t_n.to_f64().unwrap_or(f64::NAN) });
    }
    let inv_a = T::one() / alpha;
    let t_pow = t_n.powf(inv_a);
    let base = t_pow - T::one();
    let half = fr::<T>(0.5);
    let c0 = (base * mu_n).sqrt();
    let c_mu = half * (base / mu_n).sqrt();
    let c_t = inv_a * half * t_n.powf(inv_a - T::one()) * (mu_n / base).sqrt();
    let mut e = LinExpr::constant(c0 - c_mu * mu_n - c_t * t_n);
    e.add_term(mu_var, c_mu);
    e.add_term(t_var, c_t);
    Ok(e)
}

/// Variables of one SCA iteration problem.
pub struct IterationVars<T: Real> {
    /// Beamformer entries per user (flat order) and antenna.
    pub w: Vec<Vec<ComplexExpr<T>>>,
    pub t: Vec<VarId>,
    pub mu: Vec<VarId>,
    /// Lower triangles of the Hermitian precoder matrices, when present.
    pub w_mats: Option<Vec<Vec<ComplexExpr<T>>>>,
}

/// Adds the variables and structure every variant shares: beamformer
/// vectors, `t` (with the `1 + eps_t` guard), `mu`, the geometric-mean
/// objective tree.
pub(crate) fn add_common_structure<T: Real>(
    prog: &mut ConicProgram<T>,
    cfg: &NetworkConfig<T>,
    eps_t: T,
) -> Result<IterationVars<T>, ScaError> {
    let users = cfg.users();
    let t_dim = cfg.num_antennas();
    let mut w = Vec::with_capacity(users.len());
    let mut t = Vec::with_capacity(users.len());
    let mut mu = Vec::with_capacity(users.len());
    for (flat, _u) in users.iter().enumerate() {
        w.push(prog.add_complex_vec(&format!("w[{flat}]"), t_dim));
        t.push(prog.add_var(format!("t[{flat}]")));
        mu.push(prog.add_var(format!("mu[{flat}]")));
    }
    for &tv in &t {
        prog.add_nonneg(LinExpr::var(tv).plus_const(-(T::one() + eps_t)));
    }
    let g = geometric_mean_objective(prog, &t)?;
    prog.set_objective_max(LinExpr::var(g));
    Ok(IterationVars { w, t, mu, w_mats: None })
}

/// Unconjugated product `h . w` of a constant row vector with a vector of
/// complex expressions.
pub(crate) fn row_dot<T: Real>(h: &DVector<C<T>>, w: &[ComplexExpr<T>]) -> ComplexExpr<T> {
    let mut acc = ComplexExpr::zero();
    for (i, wi) in w.iter().enumerate() {
        acc = acc.add(wi.clone().scale(h[i]));
    }
    acc
}

/// Per-BS power constraints `sum_k ||w_{b,k}||^2 <= P_b` as SOCs.
pub(crate) fn add_power_socs<T: Real>(
    prog: &mut ConicProgram<T>,
    cfg: &NetworkConfig<T>,
    vars: &IterationVars<T>,
) {
    for b in 0..cfg.num_bs() {
        let mut args = Vec::new();
        for k in 0..cfg.users_per_bs()[b] {
            let flat = cfg.flat_index(UserId { b, k });
            for e in &vars.w[flat] {
                args.push(e.re.clone());
                args.push(e.im.clone());
            }
        }
        prog.add_soc(args, LinExpr::constant(cfg.power(b).sqrt()));
    }
}

/// Certified weighted rate implied by the solved `t` values.
pub(crate) fn rate_from_t<T: Real>(cfg: &NetworkConfig<T>, alphas: &[T], t: &[T]) -> T {
    let mut acc = T::zero();
    for (flat, _u) in cfg.users().iter().enumerate() {
        let gamma = t[flat].powf(T::one() / alphas[flat]) - T::one();
        acc += cfg.weights()[flat] * (T::one() + gamma).log2();
    }
    acc
}

/// Builds the perfect-CSI iteration problem: signal lower bounds through
/// the Taylor expansion, zero imaginary part of the own-channel product,
/// the interference second-order cone and per-BS power cones.
pub fn build_iteration_problem<T: Real>(
    channels: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
    state: &ScaState<T>,
) -> Result<(ConicProgram<T>, IterationVars<T>), ScaError> {
    let alphas = normalized_weights(cfg);
    let mut prog = ConicProgram::new();
    let vars = add_common_structure(&mut prog, cfg, state.eps_t)?;
    let users = cfg.users();
    let sigma = cfg.sigma2().sqrt();
    let half = fr::<T>(0.5);

    for (flat, &user) in users.iter().enumerate() {
        let own = channels.h(user.b, cfg, user);
        let signal = row_dot(own, &vars.w[flat]);
        let f_n =
            taylor_upper_bound(state.t[flat], state.mu[flat], alphas[flat], vars.t[flat], vars.mu[flat])?;
        prog.add_nonneg(signal.re.clone() - f_n);
        prog.add_eq(signal.im);

        // interference cone: sigma^2 + sum |h w|^2 + (mu-1)^2/4 <= (mu+1)^2/4
        let mut args = vec![LinExpr::constant(sigma)];
        for (oflat, &other) in users.iter().enumerate() {
            if other == user {
                continue;
            }
            let hv = channels.h(other.b, cfg, user);
            let c = row_dot(hv, &vars.w[oflat]);
            args.push(c.re);
            args.push(c.im);
        }
        args.push(LinExpr::scaled_var(vars.mu[flat], half).plus_const(-half));
        let bound = LinExpr::scaled_var(vars.mu[flat], half).plus_const(half);
        prog.add_soc(args, bound);
    }
    add_power_socs(&mut prog, cfg, &vars);
    Ok((prog, vars))
}

/// Shared SCA driver: random initialization with restarts, a deterministic
/// fallback start, monotone objective tracking and convergence on objective
/// stall.
pub(crate) fn run_sca_loop<T: Real>(
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    mu_cap: T,
    build: impl Fn(&ScaState<T>) -> Result<(ConicProgram<T>, IterationVars<T>), ScaError>,
) -> Result<ScaRun<T>, ScaError> {
    run_sca_loop_from(cfg, opts, mu_cap, None, build)
}

/// [`run_sca_loop`] with an optional warm-start expansion point used for
/// the first attempt.
pub(crate) fn run_sca_loop_from<T: Real>(
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    mu_cap: T,
    warm_start: Option<(Vec<T>, Vec<T>)>,
    build: impl Fn(&ScaState<T>) -> Result<(ConicProgram<T>, IterationVars<T>), ScaError>,
) -> Result<ScaRun<T>, ScaError> {
    let alphas = normalized_weights(cfg);
    let n_users = cfg.num_users();
    let total_power: T = cfg.powers().iter().fold(T::zero(), |a, &p| a + p);
    let mut last_status = SolveStatus::NumericalFailure;
    // non-converged attempts are kept as a fallback; a sequence that fails
    // to stabilize within the iteration budget is regenerated like a
    // singular one
    let mut fallback: Option<ScaRun<T>> = None;

    for attempt in 0..=opts.restarts {
        let mut state = if let (0, Some((t0, mu0))) = (attempt, warm_start.as_ref()) {
            ScaState {
                t: t0.clone(),
                mu: mu0.clone(),
                iteration: 0,
                history: Vec::new(),
                converged: false,
                eps_t: opts.eps_t,
            }
        } else if attempt == opts.restarts {
            // deterministic fallback: smallest admissible t, generous mu
            ScaState {
                t: vec![T::one() + opts.eps_t.max(fr(1e-3)); n_users],
                mu: vec![mu_cap; n_users],
                iteration: 0,
                history: Vec::new(),
                converged: false,
                eps_t: opts.eps_t,
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(attempt as u64);
            let t0: Vec<T> = (0..n_users).map(|_| fr(rng.random_range(1.1..2.0))).collect();
            let mu0: Vec<T> = (0..n_users)
                .map(|_| cfg.sigma2() + fr::<T>(rng.random_range(0.0..1.0)) * total_power)
                .collect();
            ScaState {
                t: t0,
                mu: mu0,
                iteration: 0,
                history: Vec::new(),
                converged: false,
                eps_t: opts.eps_t,
            }
        };

        let mut failed = false;
        let mut beams: Option<BeamformerSet<T>> = None;
        let mut rank_report = None;
        let mut precoders = None;
        while state.iteration < opts.max_iters {
            let (prog, vars) = build(&state)?;
            let sol = solve(&prog, &opts.solver);
            if !sol.is_optimal() {
                last_status = sol.status;
                failed = true;
                break;
            }
            let t_star: Vec<T> =
                vars.t.iter().map(|&v| sol.value(v).max(T::one() + opts.eps_t)).collect();
            let mu_star: Vec<T> =
                vars.mu.iter().map(|&v| sol.value(v).max(cfg.sigma2())).collect();
            let w_star: Vec<DVector<C<T>>> = vars
                .w
                .iter()
                .map(|we| {
                    DVector::from_iterator(
                        we.len(),
                        we.iter().map(|e| C::new(sol.value_of(&e.re), sol.value_of(&e.im))),
                    )
                })
                .collect();
            if let Some(mats) = &vars.w_mats {
                let (ws, ratios) = extract_precoders(&sol, mats);
                rank_report = Some(ratios);
                precoders = Some(ws);
            }
            beams = Some(enforce_power_budget(BeamformerSet::new(w_star), cfg));

            let rate = rate_from_t(cfg, &alphas, &t_star);
            let stalled = state
                .history
                .last()
                .map(|&prev| (rate - prev).abs() / prev.abs().max(T::one()) < opts.tol_obj)
                .unwrap_or(false);
            state.history.push(rate);
            state.t = t_star;
            state.mu = mu_star;
            state.iteration += 1;
            if stalled {
                state.converged = true;
                break;
            }
        }
        if !failed {
            if let Some(beams) = beams {
                let run =
                    ScaRun { beams, state, restarts_used: attempt, rank_report, precoders };
                // converged runs win; among equals the better objective
                let better = fallback.as_ref().map_or(true, |f| {
                    (run.state.converged, run.objective_rate())
                        > (f.state.converged, f.objective_rate())
                });
                if better {
                    fallback = Some(run);
                }
                if fallback.as_ref().is_some_and(|f| f.state.converged) || attempt >= 2 {
                    // converged, or enough independent sequences tried
                    break;
                }
            }
        }
    }
    if let Some(run) = fallback {
        return Ok(run);
    }
    Err(ScaError::RestartsExhausted { attempts: opts.restarts + 1, last: last_status })
}

fn extract_precoders<T: Real>(
    sol: &crate::solver::Solution<T>,
    mats: &[Vec<ComplexExpr<T>>],
) -> (Vec<nalgebra::DMatrix<C<T>>>, Vec<T>) {
    let mut ws = Vec::with_capacity(mats.len());
    let mut ratios = Vec::with_capacity(mats.len());
    for lower in mats {
        let dim = ((((8 * lower.len() + 1) as f64).sqrt() as usize) - 1) / 2;
        let mut m = nalgebra::DMatrix::<C<T>>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let e = &lower[i * (i + 1) / 2 + j];
                let v = C::new(sol.value_of(&e.re), sol.value_of(&e.im));
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        let (_, _, ratio) = crate::linalg::principal_eigpair(&m);
        ws.push(m);
        ratios.push(ratio);
    }
    (ws, ratios)
}

/// Rescales per-BS groups so the power budgets hold exactly despite solver
/// tolerance slack.
fn enforce_power_budget<T: Real>(beams: BeamformerSet<T>, cfg: &NetworkConfig<T>) -> BeamformerSet<T> {
    let mut w: Vec<DVector<C<T>>> = beams.iter().cloned().collect();
    for b in 0..cfg.num_bs() {
        let mut p = T::zero();
        for k in 0..cfg.users_per_bs()[b] {
            p += w[cfg.flat_index(UserId { b, k })].norm_squared();
        }
        if p > cfg.power(b) {
            let s = C::new((cfg.power(b) / p).sqrt(), T::zero());
            for k in 0..cfg.users_per_bs()[b] {
                let idx = cfg.flat_index(UserId { b, k });
                w[idx] *= s;
            }
        }
    }
    BeamformerSet::new(w)
}

/// Runs the perfect-CSI sequential convex approximation.
pub fn run<T: Real>(
    channels: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
) -> Result<ScaRun<T>, ScaError> {
    let max_h = channels.max_norm();
    let total_power: T = cfg.powers().iter().fold(T::zero(), |a, &p| a + p);
    let mu_cap = cfg.sigma2() + total_power * max_h * max_h;
    run_sca_loop(cfg, opts, mu_cap, |state| build_iteration_problem(channels, cfg, state))
}
