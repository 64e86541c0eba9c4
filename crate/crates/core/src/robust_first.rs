//! First worst-case robust approximation.
//!
//! The desired-signal constraint is made robust exactly through conic
//! duality over the intersection of ellipsoids (a sum of norm-bounded dual
//! vectors), and each interference power term is bounded by a Lagrangian
//! relaxation that turns the uncertain quadratic constraint into a linear
//! matrix inequality with one nonnegative multiplier per ellipsoid. The
//! relaxation is safe: any feasible point also satisfies the original
//! worst-case constraints, and it is tight for a single ellipsoid.

use crate::conic::{ComplexExpr, ConicProgram, LinExpr, VarId};
use crate::linalg::{hermitian_defect, hermitian_sqrt};
use crate::model::{ChannelSet, NetworkConfig};
use crate::sca::{
    add_common_structure, add_power_socs, row_dot, run_sca_loop, taylor_upper_bound,
    normalized_weights, IterationVars, ScaError, ScaOptions, ScaRun, ScaState,
};
use crate::scalar::{fr, Real, C};
use crate::uncertainty::{UncertaintyMap, UncertaintySet};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("matrix is not Hermitian (defect {defect})")]
    NotHermitian { defect: f64 },
    #[error("uncertainty map shape does not match the network config")]
    MapShape,
}

/// Hermitian PSD square root: `S >= 0` with `S^2 = M`, negative eigenvalues
/// clamped to zero.
pub fn psd_sqrt<T: Real>(m: &DMatrix<C<T>>) -> Result<DMatrix<C<T>>, RobustError> {
    let defect = hermitian_defect(m);
    if defect > fr::<T>(1e-9) * m.norm().max(T::one()) {
        return Err(RobustError::NotHermitian { defect: defect.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(hermitian_sqrt(m))
}

/// `|z|^2 <= x * y` for a complex expression `z` (with `x, y >= 0` implied
/// by the cone).
fn complex_sq_le<T: Real>(
    prog: &mut ConicProgram<T>,
    z: &ComplexExpr<T>,
    x: LinExpr<T>,
    y: LinExpr<T>,
) {
    let two = fr::<T>(2.0);
    let args =
        vec![z.re.clone().scale(two), z.im.clone().scale(two), x.clone() - y.clone()];
    prog.add_soc(args, x + y);
}

/// Robust desired-signal constraint over an intersection of ellipsoids via
/// the conic dual: emits
/// `Re(hbar . w) - sum_q lambda_q >= f`,
/// `w^H = -sum_q u_q Zhat_q` and `||u_q|| <= lambda_q`.
///
/// A `None` set (exactly known link) degenerates to the nominal constraint.
pub fn dual_signal_constraints<T: Real>(
    prog: &mut ConicProgram<T>,
    w: &[ComplexExpr<T>],
    set: Option<&UncertaintySet<T>>,
    hbar: &DVector<C<T>>,
    f_expr: LinExpr<T>,
) {
    let signal = row_dot(hbar, w);
    let set = match set {
        Some(s) => s,
        None => {
            prog.add_nonneg(signal.re - f_expr);
            return;
        }
    };
    let dim = set.dim();
    let q_count = set.num_ellipsoids();
    let z_hats: Vec<DMatrix<C<T>>> =
        set.normalized_shapes().iter().map(hermitian_sqrt).collect();

    let lambdas = prog.add_var_vec("sig_lambda", q_count);
    let us: Vec<Vec<ComplexExpr<T>>> =
        (0..q_count).map(|q| prog.add_complex_vec(&format!("sig_u[{q}]"), dim)).collect();

    // Re(hbar w) - sum lambda_q >= f
    let mut lhs = signal.re - f_expr;
    for &l in &lambdas {
        lhs.add_term(l, -T::one());
    }
    prog.add_nonneg(lhs);

    // w^H = -sum_q u_q Zhat_q, componentwise over antennas
    for r in 0..dim {
        let mut acc = w[r].clone().conj();
        for (q, u) in us.iter().enumerate() {
            for i in 0..dim {
                acc = acc.add(u[i].clone().scale(z_hats[q][(i, r)]));
            }
        }
        prog.add_complex_eq(acc);
    }

    // ||u_q|| <= lambda_q
    for (q, u) in us.iter().enumerate() {
        let mut args = Vec::with_capacity(2 * dim);
        for e in u {
            args.push(e.re.clone());
            args.push(e.im.clone());
        }
        prog.add_soc(args, LinExpr::var(lambdas[q]));
    }
}

/// Lagrangian-relaxation LMI bounding `|(hbar + delta) w|^2 <= beta` over
/// the set: the `(T+2) x (T+2)` complex block
/// `[[beta - sum lambda_q, 0, -hbar.w], [0, sum lambda_q Z_q, w],
///   [(-hbar.w)^H, w^H, 1]] >= 0` with `lambda_q >= 0`, embedded as a real
/// PSD block. Returns the multiplier ids.
///
/// A `None` set degenerates to `|hbar.w|^2 <= beta`.
pub fn interference_lmi<T: Real>(
    prog: &mut ConicProgram<T>,
    hbar: &DVector<C<T>>,
    w: &[ComplexExpr<T>],
    set: Option<&UncertaintySet<T>>,
    beta: VarId,
) -> Result<Vec<VarId>, ScaError> {
    let hw = row_dot(hbar, w);
    let set = match set {
        Some(s) => s,
        None => {
            complex_sq_le(prog, &hw, LinExpr::var(beta), LinExpr::constant(T::one()));
            return Ok(Vec::new());
        }
    };
    let dim = set.dim();
    let z_mats = set.normalized_shapes();
    let q_count = z_mats.len();
    let lambdas = prog.add_var_vec("int_lambda", q_count);
    for &l in &lambdas {
        prog.add_nonneg(LinExpr::var(l));
    }

    let side = dim + 2;
    let mut lower: Vec<ComplexExpr<T>> = Vec::with_capacity(side * (side + 1) / 2);
    for i in 0..side {
        for j in 0..=i {
            let entry = if i == 0 {
                // beta - sum lambda_q
                let mut e = LinExpr::var(beta);
                for &l in &lambdas {
                    e.add_term(l, -T::one());
                }
                ComplexExpr { re: e, im: LinExpr::zero() }
            } else if i <= dim {
                if j == 0 {
                    ComplexExpr::zero()
                } else {
                    // middle block: sum_q lambda_q * Z_q[i-1, j-1]
                    let mut acc = ComplexExpr::zero();
                    for (q, &l) in lambdas.iter().enumerate() {
                        let zc = z_mats[q][(i - 1, j - 1)];
                        acc = acc.add(ComplexExpr {
                            re: LinExpr::scaled_var(l, zc.re),
                            im: LinExpr::scaled_var(l, zc.im),
                        });
                    }
                    acc
                }
            } else if j == 0 {
                // -(hbar w)^H
                hw.clone().conj().neg()
            } else if j <= dim {
                // w^H entries
                w[j - 1].clone().conj()
            } else {
                // bottom-right corner
                ComplexExpr::constant(C::new(T::one(), T::zero()))
            };
            lower.push(entry);
        }
    }
    crate::conic::complex_lmi_embed(prog, side, &lower)?;
    Ok(lambdas)
}

/// Assembles the per-iteration problem of the first robust approximation:
/// objective tree, dual signal constraints, slack aggregation, one
/// interference LMI per interfering pair and per-BS power cones.
pub fn build_iteration_problem_first<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    state: &ScaState<T>,
) -> Result<(ConicProgram<T>, IterationVars<T>), ScaError> {
    let alphas = normalized_weights(cfg);
    let mut prog = ConicProgram::new();
    let vars = add_common_structure(&mut prog, cfg, state.eps_t)?;
    let users = cfg.users();
    let sigma2 = cfg.sigma2();

    for (flat, &user) in users.iter().enumerate() {
        let own_set = sets.get(user.b, flat);
        let own = channels_nominal.h(user.b, cfg, user);
        let f_n = taylor_upper_bound(
            state.t[flat],
            state.mu[flat],
            alphas[flat],
            vars.t[flat],
            vars.mu[flat],
        )?;
        dual_signal_constraints(&mut prog, &vars.w[flat], own_set, own, f_n);

        // one slack per interfering beam; aggregation into mu
        let mut aggregate = LinExpr::scaled_var(vars.mu[flat], T::one()).plus_const(-sigma2);
        for (oflat, &other) in users.iter().enumerate() {
            if other == user {
                continue;
            }
            let beta = prog.add_var(format!("beta[{flat}][{oflat}]"));
            prog.add_nonneg(LinExpr::var(beta));
            aggregate.add_term(beta, -T::one());
            let hbar = channels_nominal.h(other.b, cfg, user);
            let link_set = sets.get(other.b, flat);
            interference_lmi(&mut prog, hbar, &vars.w[oflat], link_set, beta)?;
        }
        prog.add_nonneg(aggregate);
    }
    add_power_socs(&mut prog, cfg, &vars);
    Ok((prog, vars))
}

/// Inflated fallback interference cap: noise plus total power times the
/// worst perturbed channel gain.
pub(crate) fn robust_mu_cap<T: Real>(
    channels: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
    sets: &UncertaintyMap<T>,
) -> T {
    let reach = channels.max_norm() + sets.max_bounding_radius();
    let total_power: T = cfg.powers().iter().fold(T::zero(), |a, &p| a + p);
    cfg.sigma2() + total_power * reach * reach
}

/// Runs the first robust approximation to convergence.
pub fn run_first<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
) -> Result<ScaRun<T>, ScaError> {
    let mu_cap = robust_mu_cap(channels_nominal, cfg, sets);
    run_sca_loop(cfg, opts, mu_cap, |state| {
        build_iteration_problem_first(channels_nominal, sets, cfg, state)
    })
}
