//! Monte-Carlo evaluation harness: sampled worst-case rates, the sampled
//! exact robust counterpart, exceedance probabilities (PE), rate CDFs,
//! parameter sweeps and the radius search for a target PE.
//!
//! Every operation derives its randomness from explicit seeds or
//! caller-owned generators; sweep cells run in parallel with one stream per
//! cell, so results are independent of scheduling order.

use crate::model::{
    generate_channels, weighted_sum_rate, zero_forcing_beamformers, BeamformerSet, ChannelSet,
    NetworkConfig,
};
use crate::robust_first::run_first;
use crate::robust_second::{run_second, RobustSecondError};
use crate::sca::{
    self, add_common_structure, add_power_socs, normalized_weights, row_dot,
    taylor_upper_bound, IterationVars, ScaError, ScaOptions, ScaRun, ScaState,
};
use crate::scalar::{fr, Real, C};

use crate::uncertainty::{sample, SampleMode, UncertaintyMap};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("model error: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("design failed: {0}")]
    Sca(#[from] ScaError),
    #[error("design failed: {0}")]
    RobustSecond(#[from] RobustSecondError),
    #[error("bracket [{lo}, {hi}] does not contain a radius reaching PE {target}")]
    BracketExhausted { lo: f64, hi: f64, target: f64 },
}

/// One joint error draw: a perturbation per (source BS, user) link.
pub type JointDraw<T> = Vec<Vec<DVector<C<T>>>>;

/// Draws one perturbation per uncertain link (zero on exactly known links).
pub fn draw_joint_errors<T: Real>(
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    rng: &mut impl Rng,
    mode: SampleMode,
) -> JointDraw<T> {
    let mut out = Vec::with_capacity(cfg.num_bs());
    for n in 0..cfg.num_bs() {
        let mut row = Vec::with_capacity(cfg.num_users());
        for u in 0..cfg.num_users() {
            let d = match sets.get(n, u) {
                Some(set) => sample(set, 1, rng, mode).pop().unwrap(),
                None => DVector::zeros(cfg.num_antennas()),
            };
            row.push(d);
        }
        out.push(row);
    }
    out
}

/// Minimum weighted sum rate over boundary-biased sampled joint error
/// draws. Deterministic given the generator state and `n_samples`.
///
/// Each user's SINR depends only on the error links into that user, so the
/// joint minimum decomposes per user; and the sets are phase-invariant, so
/// each sampled direction is sharpened by the worst in-set phase rotation
/// per link (interference phases align in closed form, the serving-link
/// phase by a fine grid). The reported value equals the weighted sum rate
/// at the joint draw combining the per-user minimizers.
pub fn worst_case_rate<T: Real>(
    beams: &BeamformerSet<T>,
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<T, EvalError> {
    let users = cfg.users();
    let t_dim = cfg.num_antennas();

    // deterministic adversarial candidates per (link, user): the direction
    // opposing the desired beam and the top eigenvector of the link's
    // interference Gram matrix, each rescaled onto the set boundary
    let mut candidates: Vec<Vec<Vec<DVector<C<T>>>>> =
        vec![vec![Vec::new(); users.len()]; cfg.num_bs()];
    for (flat, &user) in users.iter().enumerate() {
        for n in 0..cfg.num_bs() {
            let Some(set) = sets.get(n, flat) else { continue };
            let mut cands: Vec<DVector<C<T>>> = Vec::new();
            if n == user.b {
                cands.push(beams.w(cfg, user).map(|x| x.conj()).scale(-T::one()));
            }
            let mut gram = nalgebra::DMatrix::<C<T>>::zeros(t_dim, t_dim);
            for l in 0..cfg.users_per_bs()[n] {
                let other = crate::model::UserId { b: n, k: l };
                if other == user {
                    continue;
                }
                let w = beams.w(cfg, other).map(|x| x.conj());
                gram += &w * w.adjoint();
            }
            if gram.norm() > T::zero() {
                let (_, v, _) = crate::linalg::principal_eigpair(&gram);
                cands.push(v);
            }
            for c in cands {
                if let Some(b) = rescale_to_boundary(set, &c) {
                    candidates[n][flat].push(b);
                }
            }
        }
    }

    // per-link inter-cell interference maxima across draws and candidates
    let draws: Vec<JointDraw<T>> = (0..n_samples)
        .map(|_| draw_joint_errors(sets, cfg, rng, SampleMode::BoundaryBiased))
        .collect();
    let mut rate = T::zero();
    for (flat, &user) in users.iter().enumerate() {
        // inter links: any per-link choice combines into a valid joint
        // error, so each link takes its own maximum
        let mut inter_power = T::zero();
        for n in 0..cfg.num_bs() {
            if n == user.b {
                continue;
            }
            let hv = channels_nominal.h(n, cfg, user);
            let ws: Vec<&DVector<C<T>>> = (0..cfg.users_per_bs()[n])
                .map(|l| beams.w(cfg, crate::model::UserId { b: n, k: l }))
                .collect();
            let mut best = link_power(hv, &DVector::zeros(t_dim), &ws);
            for draw in &draws {
                best = best.max(link_power(hv, &draw[n][flat], &ws));
            }
            for cand in &candidates[n][flat] {
                best = best.max(link_power(hv, cand, &ws));
            }
            inter_power += best;
        }
        // serving link: couples the numerator and the intra-cell terms
        let own = channels_nominal.h(user.b, cfg, user);
        let mut worst = serving_sinr(own, &DVector::zeros(t_dim), beams, cfg, user, inter_power);
        for draw in &draws {
            let g = serving_sinr(own, &draw[user.b][flat], beams, cfg, user, inter_power);
            worst = worst.min(g);
        }
        for cand in &candidates[user.b][flat] {
            let g = serving_sinr(own, cand, beams, cfg, user, inter_power);
            worst = worst.min(g);
        }
        rate += cfg.weights()[flat] * (T::one() + worst).log2();
    }
    Ok(rate)
}

fn rescale_to_boundary<T: Real>(
    set: &crate::uncertainty::UncertaintySet<T>,
    dir: &DVector<C<T>>,
) -> Option<DVector<C<T>>> {
    let mut worstq = T::zero();
    for q in 0..set.num_ellipsoids() {
        let v = crate::linalg::quad_form(set.shape(q), dir);
        worstq = worstq.max(v);
    }
    if worstq <= T::zero() {
        return None;
    }
    Some(dir * C::new((set.rho() / worstq).sqrt(), T::zero()))
}

/// `max over phi of sum_l |h w_l + e^{i phi} d w_l|^2`: the cross term
/// aligns in closed form.
fn link_power<T: Real>(h: &DVector<C<T>>, d: &DVector<C<T>>, ws: &[&DVector<C<T>>]) -> T {
    let mut base = T::zero();
    let mut cross = C::new(T::zero(), T::zero());
    for w in ws {
        let a = h.dot(*w);
        let b = d.dot(*w);
        base += a.norm_sqr() + b.norm_sqr();
        cross += a.conj() * b;
    }
    base + fr::<T>(2.0) * cross.norm_sqr().sqrt()
}

/// Worst SINR of one user over the in-set phase rotation of a serving-link
/// error direction (fine grid; the rotation couples the desired-signal and
/// intra-cell terms).
fn serving_sinr<T: Real>(
    own: &DVector<C<T>>,
    d_own: &DVector<C<T>>,
    beams: &BeamformerSet<T>,
    cfg: &NetworkConfig<T>,
    user: crate::model::UserId,
    inter_power: T,
) -> T {
    let sig_nom = own.dot(beams.w(cfg, user));
    let sig_err = d_own.dot(beams.w(cfg, user));
    let mut intra: Vec<(C<T>, C<T>)> = Vec::new();
    for k in 0..cfg.users_per_bs()[user.b] {
        let other = crate::model::UserId { b: user.b, k };
        if other == user {
            continue;
        }
        intra.push((own.dot(beams.w(cfg, other)), d_own.dot(beams.w(cfg, other))));
    }
    let grid = 64usize;
    let mut worst = fr::<T>(f64::INFINITY);
    for gidx in 0..grid {
        let phi = fr::<T>(gidx as f64 / grid as f64 * std::f64::consts::TAU);
        let rot = C::new(phi.cos(), phi.sin());
        let num = (sig_nom + rot * sig_err).norm_sqr();
        let mut den = cfg.sigma2() + inter_power;
        for (a, b) in &intra {
            den += (*a + rot * *b).norm_sqr();
        }
        worst = worst.min(num / den);
    }
    worst
}

/// Random error model for robustness evaluation (errors need not lie in
/// the design set).
#[derive(Clone, Copy, Debug)]
pub enum ErrorSpec<T: Real> {
    /// Per-coordinate disc of radius `sqrt(rho)` (uniform).
    UniformBox { rho: T },
    /// Circularly symmetric Gaussian with per-entry variance `sigma`.
    Gaussian { sigma: T },
}

impl<T: Real> ErrorSpec<T> {
    fn draw(&self, dim: usize, rng: &mut impl Rng) -> DVector<C<T>> {
        match *self {
            ErrorSpec::UniformBox { rho } => {
                let r_max = rho.sqrt();
                DVector::from_fn(dim, |_, _| {
                    let u: f64 = rng.random();
                    let r = r_max * fr::<T>(u.sqrt());
                    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    C::new(r * fr(th.cos()), r * fr(th.sin()))
                })
            }
            ErrorSpec::Gaussian { sigma } => {
                let s = (sigma * fr(0.5)).sqrt();
                DVector::from_fn(dim, |_, _| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    C::new(s * fr(re), s * fr(im))
                })
            }
        }
    }

    fn draw_joint(&self, cfg: &NetworkConfig<T>, rng: &mut impl Rng) -> JointDraw<T> {
        (0..cfg.num_bs())
            .map(|_| {
                (0..cfg.num_users()).map(|_| self.draw(cfg.num_antennas(), rng)).collect()
            })
            .collect()
    }
}

/// Probability that the realized weighted sum rate under random errors
/// meets or exceeds `threshold`.
pub fn pe<T: Real>(
    beams: &BeamformerSet<T>,
    channels_nominal: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
    error_spec: ErrorSpec<T>,
    threshold: T,
    n_trials: usize,
    rng: &mut impl Rng,
) -> Result<T, EvalError> {
    let mut hits = 0usize;
    for _ in 0..n_trials {
        let draw = error_spec.draw_joint(cfg, rng);
        let perturbed = channels_nominal.perturbed(&draw);
        if weighted_sum_rate(&perturbed, beams, cfg)? >= threshold {
            hits += 1;
        }
    }
    Ok(fr::<T>(hits as f64 / n_trials as f64))
}

/// Per-iteration convex program of the sampled (discrete) robust
/// counterpart: signal and interference constraints are enforced at every
/// sampled error draw instead of over the continuous set.
pub fn build_sampled_rc_problem<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sampled_deltas: &[JointDraw<T>],
    cfg: &NetworkConfig<T>,
    state: &ScaState<T>,
) -> Result<(crate::conic::ConicProgram<T>, IterationVars<T>), ScaError> {
    let alphas = normalized_weights(cfg);
    let mut prog = crate::conic::ConicProgram::new();
    let vars = add_common_structure(&mut prog, cfg, state.eps_t)?;
    let users = cfg.users();
    let sigma = cfg.sigma2().sqrt();
    let half = fr::<T>(0.5);

    for (flat, &user) in users.iter().enumerate() {
        let own = channels_nominal.h(user.b, cfg, user);
        let f_n = taylor_upper_bound(
            state.t[flat],
            state.mu[flat],
            alphas[flat],
            vars.t[flat],
            vars.mu[flat],
        )?;
        for draw in sampled_deltas {
            let h_pert = own + &draw[user.b][flat];
            let signal = row_dot(&h_pert, &vars.w[flat]);
            prog.add_nonneg(signal.re - f_n.clone());

            let mut args = vec![crate::conic::LinExpr::constant(sigma)];
            for (oflat, &other) in users.iter().enumerate() {
                if other == user {
                    continue;
                }
                let hv = channels_nominal.h(other.b, cfg, user) + &draw[other.b][flat];
                let cexpr = row_dot(&hv, &vars.w[oflat]);
                args.push(cexpr.re);
                args.push(cexpr.im);
            }
            args.push(
                crate::conic::LinExpr::scaled_var(vars.mu[flat], half).plus_const(-half),
            );
            let bound = crate::conic::LinExpr::scaled_var(vars.mu[flat], half).plus_const(half);
            prog.add_soc(args, bound);
        }
    }
    add_power_socs(&mut prog, cfg, &vars);
    Ok((prog, vars))
}

/// Solves the sampled robust counterpart once, with `n_samples` joint
/// boundary-biased draws fixed across the SCA iterations.
pub fn run_sampled_rc<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<ScaRun<T>, ScaError> {
    run_sampled_rc_from(channels_nominal, sets, cfg, opts, n_samples, rng, None)
}

/// [`run_sampled_rc`] with an optional warm-start expansion point (for
/// example the converged state of a safe robust design, which is feasible
/// for every sampled constraint subset).
pub fn run_sampled_rc_from<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    n_samples: usize,
    rng: &mut impl Rng,
    warm_start: Option<(Vec<T>, Vec<T>)>,
) -> Result<ScaRun<T>, ScaError> {
    let draws: Vec<JointDraw<T>> = (0..n_samples)
        .map(|_| draw_joint_errors(sets, cfg, rng, SampleMode::BoundaryBiased))
        .collect();
    let mu_cap = crate::robust_first::robust_mu_cap(channels_nominal, cfg, sets);
    crate::sca::run_sca_loop_from(cfg, opts, mu_cap, warm_start, |state| {
        build_sampled_rc_problem(channels_nominal, &draws, cfg, state)
    })
}

/// Repeats the sampled robust counterpart over independent sample sets and
/// keeps the smallest certified objective, which upper-bounds the exact
/// robust optimum from above the tightest.
pub fn sampled_rc_min_over_repeats<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    n_samples: usize,
    n_repeats: usize,
    seed: u64,
) -> Result<(T, ScaRun<T>), ScaError> {
    sampled_rc_min_over_repeats_from(channels_nominal, sets, cfg, opts, n_samples, n_repeats, seed, None)
}

/// [`sampled_rc_min_over_repeats`] with an optional warm-start expansion
/// point shared by every repetition.
#[allow(clippy::too_many_arguments)]
pub fn sampled_rc_min_over_repeats_from<T: Real>(
    channels_nominal: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    n_samples: usize,
    n_repeats: usize,
    seed: u64,
    warm_start: Option<(Vec<T>, Vec<T>)>,
) -> Result<(T, ScaRun<T>), ScaError> {
    let mut best: Option<(T, ScaRun<T>)> = None;
    for rep in 0..n_repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x5_0000_0000 + rep as u64);
        let run = run_sampled_rc_from(
            channels_nominal,
            sets,
            cfg,
            opts,
            n_samples,
            &mut rng,
            warm_start.clone(),
        )?;
        let obj = run.objective_rate();
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, run));
        }
    }
    Ok(best.expect("at least one repeat"))
}

/// Beamforming scheme identifiers used by sweeps and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Nonrobust,
    Robust1,
    Robust2,
    Robust2Lfj,
    Zf,
    SampledRc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Nonrobust => "nonrobust",
            Method::Robust1 => "robust1",
            Method::Robust2 => "robust2",
            Method::Robust2Lfj => "robust2-lfj",
            Method::Zf => "zf",
            Method::SampledRc => "sampled-rc",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Some(match s {
            "nonrobust" => Method::Nonrobust,
            "robust1" => Method::Robust1,
            "robust2" => Method::Robust2,
            "robust2-lfj" => Method::Robust2Lfj,
            "zf" => Method::Zf,
            "sampled-rc" => Method::SampledRc,
            _ => return None,
        })
    }
}

/// Monte-Carlo budgets for the evaluation harness.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Joint draws per worst-case rate estimate.
    pub n_samples: usize,
    /// Trials per PE estimate.
    pub n_trials: usize,
    /// Sample-set repetitions of the sampled robust counterpart.
    pub n_repeats: usize,
    /// Samples per repetition of the sampled robust counterpart.
    pub rc_samples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { n_samples: 1000, n_trials: 10_000, n_repeats: 50, rc_samples: 200 }
    }
}

/// Outcome of one designed-and-evaluated scheme.
#[derive(Clone, Debug)]
pub struct MethodResult<T: Real> {
    pub beams: BeamformerSet<T>,
    /// Certified objective mapped to rate (the design's own bound).
    pub objective_rate: T,
    pub nominal_rate: T,
    pub iterations: usize,
    /// Per-user second-to-first eigenvalue ratios (rank-relaxed designs).
    pub rank_report: Option<Vec<T>>,
    pub rank_ratio_max: T,
    /// Set when the largest rank ratio exceeds 1e-2: reported rates must
    /// come from the extracted beamformer, re-verified by sampling.
    pub rank_flagged: bool,
    pub history: Vec<T>,
    /// Final precoder matrices of the rank-relaxed variant.
    pub precoders: Option<Vec<nalgebra::DMatrix<C<T>>>>,
}

/// Designs beamformers with the given method on one channel instance.
pub fn design<T: Real>(
    method: Method,
    channels: &ChannelSet<T>,
    sets: &UncertaintyMap<T>,
    cfg: &NetworkConfig<T>,
    opts: &ScaOptions<T>,
    eval: &EvalOptions,
) -> Result<MethodResult<T>, EvalError> {
    let (beams, objective_rate, iterations, ranks, history, precoders): (
        BeamformerSet<T>,
        T,
        usize,
        Option<Vec<T>>,
        Vec<T>,
        Option<Vec<nalgebra::DMatrix<C<T>>>>,
    ) = match method {
        Method::Nonrobust => {
            let r = sca::run(channels, cfg, opts)?;
            let obj = r.objective_rate();
            (r.beams, obj, r.state.iteration, None, r.state.history, None)
        }
        Method::Robust1 => {
            let r = run_first(channels, sets, cfg, opts)?;
            let obj = r.objective_rate();
            (r.beams, obj, r.state.iteration, None, r.state.history, None)
        }
        Method::Robust2 | Method::Robust2Lfj => {
            let lfj = method == Method::Robust2Lfj;
            let r = run_second(channels, sets, cfg, opts, lfj)?;
            let obj = r.objective_rate();
            (r.beams, obj, r.state.iteration, r.rank_report, r.state.history, r.precoders)
        }
        Method::Zf => {
            let beams = zero_forcing_beamformers(channels, cfg)?;
            let rate = weighted_sum_rate(channels, &beams, cfg)?;
            (beams, rate, 0, None, vec![rate], None)
        }
        Method::SampledRc => {
            let (obj, r) = sampled_rc_min_over_repeats(
                channels,
                sets,
                cfg,
                opts,
                eval.rc_samples,
                eval.n_repeats,
                opts.seed,
            )?;
            let iters = r.state.iteration;
            (r.beams, obj, iters, None, r.state.history, None)
        }
    };
    let nominal_rate = weighted_sum_rate(channels, &beams, cfg)?;
    let rank_ratio_max = ranks
        .as_ref()
        .map(|v| v.iter().fold(T::zero(), |a, &b| a.max(b)))
        .unwrap_or(T::zero());

    Ok(MethodResult {
        beams,
        objective_rate,
        nominal_rate,
        iterations,
        rank_report: ranks,
        rank_ratio_max,
        rank_flagged: rank_ratio_max > fr(1e-2),
        history,
        precoders,
    })
}

/// Swept parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Rho,
    SnrDb,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Rho => "rho",
            SweepParam::SnrDb => "snr_db",
        }
    }
}

/// One sweep cell result (a row of the output table).
#[derive(Clone, Debug)]
pub struct SweepRow<T: Real> {
    pub seed: u64,
    pub method: Method,
    pub param: SweepParam,
    pub value: T,
    pub nominal_rate: T,
    pub worst_case_rate: T,
    pub pe: T,
    pub rank_ratio_max: T,
    pub iterations: usize,
    pub wall_ms: u64,
    pub ok: bool,
}

/// Builds the config and uncertainty map for one sweep cell.
pub type CellSetup<T> = dyn Fn(SweepParam, T) -> (NetworkConfig<T>, UncertaintyMap<T>) + Sync;

/// Runs a full sweep over `values` x `seeds` x `methods`; cells evaluate
/// in parallel with per-cell deterministic random streams. Failures are
/// recorded as rows with `ok = false` and NaN metrics.
pub fn sweep<T: Real + Send + Sync>(
    param: SweepParam,
    values: &[T],
    methods: &[Method],
    setup: &CellSetup<T>,
    seeds: &[u64],
    opts: &ScaOptions<T>,
    eval: &EvalOptions,
) -> Vec<SweepRow<T>> {
    let mut cells = Vec::new();
    for &v in values {
        for &seed in seeds {
            for &m in methods {
                cells.push((v, seed, m));
            }
        }
    }
    cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(value, seed, method))| {
            let started = std::time::Instant::now();
            let (cfg, sets) = setup(param, value);
            let channels = generate_channels(&cfg, seed);
            let mut cell_opts = *opts;
            cell_opts.seed = seed;
            let nan = fr::<T>(f64::NAN);
            let row = (|| -> Result<SweepRow<T>, EvalError> {
                let res = design(method, &channels, &sets, &cfg, &cell_opts, eval)?;
                // re-verify flagged rank-relaxed runs through extraction
                let beams = if res.rank_flagged {
                    verified_beams(&res, &channels, &cfg)
                } else {
                    res.beams.clone()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(0x6_0000_0000 + idx as u64);
                let wc = match method {
                    // the baseline ignores uncertainty and returns its
                    // design rate; sampled-RC certifies its min objective
                    Method::Zf => res.nominal_rate,
                    Method::SampledRc => res.objective_rate,
                    _ => worst_case_rate(&beams, &channels, &sets, &cfg, eval.n_samples, &mut rng)?,
                };
                let rho_eval = sets.max_bounding_radius();
                let spec = ErrorSpec::UniformBox {
                    rho: largest_box_rho(&sets).unwrap_or(rho_eval * rho_eval),
                };
                let pe_v = pe(
                    &beams,
                    &channels,
                    &cfg,
                    spec,
                    res.objective_rate,
                    eval.n_trials,
                    &mut rng,
                )?;
                Ok(SweepRow {
                    seed,
                    method,
                    param,
                    value,
                    nominal_rate: res.nominal_rate,
                    worst_case_rate: wc,
                    pe: pe_v,
                    rank_ratio_max: res.rank_ratio_max,
                    iterations: res.iterations,
                    wall_ms: started.elapsed().as_millis() as u64,
                    ok: true,
                })
            })();
            row.unwrap_or(SweepRow {
                seed,
                method,
                param,
                value,
                nominal_rate: nan,
                worst_case_rate: nan,
                pe: nan,
                rank_ratio_max: nan,
                iterations: 0,
                wall_ms: started.elapsed().as_millis() as u64,
                ok: false,
            })
        })
        .collect()
}

/// For a rank-flagged rank-relaxed solution, rebuild the beams through
/// spectral extraction (phase-aligned to the nominal channel) so every
/// rate reported afterwards describes the implementable beamformer; the
/// sampled worst-case and PE evaluations that follow are the re-check.
fn verified_beams<T: Real>(
    res: &MethodResult<T>,
    channels: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
) -> BeamformerSet<T> {
    let pre = match &res.precoders {
        Some(p) => p,
        None => return res.beams.clone(),
    };
    let mut out = res.beams.clone();
    for (flat, u) in cfg.users().iter().enumerate() {
        let (mut w, _ratio) = crate::robust_second::extract_beamformer(&pre[flat]);
        // rotate so the nominal desired-signal product is real positive
        let own = channels.h(u.b, cfg, *u);
        let prod = own.dot(&w);
        let mag = prod.norm_sqr().sqrt();
        if mag > T::zero() {
            w *= prod.conj() / C::new(mag, T::zero());
        }
        out.set(cfg, *u, w);
    }
    out
}

/// Radius of the box error model matching the sets when they are boxes
/// (used by sweep PE evaluation): `rho` such that `|delta_i| <= sqrt(rho)`.
fn largest_box_rho<T: Real>(sets: &UncertaintyMap<T>) -> Option<T> {
    for n in 0..sets.num_bs() {
        for u in 0..sets.num_users() {
            if let Some(s) = sets.get(n, u) {
                return Some(s.rho());
            }
        }
    }
    None
}

/// Empirical CDF data of realized sum rates under a common error stream.
#[derive(Clone, Debug)]
pub struct CdfTable<T: Real> {
    pub methods: Vec<Method>,
    /// Sorted realized rates per method, one column per method.
    pub rates: Vec<Vec<T>>,
}

/// Realized-rate CDF per method, with the same error draws applied to every
/// method (paired comparison).
pub fn cdf_sum_rate<T: Real>(
    beams_per_method: &[(Method, BeamformerSet<T>)],
    channels_nominal: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
    error_spec: ErrorSpec<T>,
    n_trials: usize,
    rng: &mut impl Rng,
) -> Result<CdfTable<T>, EvalError> {
    let mut rates = vec![Vec::with_capacity(n_trials); beams_per_method.len()];
    for _ in 0..n_trials {
        let draw = error_spec.draw_joint(cfg, rng);
        let perturbed = channels_nominal.perturbed(&draw);
        for (col, (_m, beams)) in beams_per_method.iter().enumerate() {
            rates[col].push(weighted_sum_rate(&perturbed, beams, cfg)?);
        }
    }
    for col in &mut rates {
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(CdfTable { methods: beams_per_method.iter().map(|(m, _)| *m).collect(), rates })
}

/// Result of the radius search.
#[derive(Clone, Debug)]
pub struct RhoSearch<T: Real> {
    pub rho: T,
    /// Evaluated (rho, PE) pairs along the bisection.
    pub trace: Vec<(T, T)>,
    /// Whether PE behaved monotonically along the trace.
    pub monotone: bool,
}

/// Smallest design radius whose robust design reaches the target PE under
/// Gaussian errors, by bisection over `[1e-4, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn find_rho_for_pe<T: Real>(
    sigma: T,
    target_pe: T,
    channels: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
    method: Method,
    make_sets: &dyn Fn(T) -> UncertaintyMap<T>,
    opts: &ScaOptions<T>,
    n_trials: usize,
) -> Result<RhoSearch<T>, EvalError> {
    let eval = EvalOptions { n_trials, ..Default::default() };
    let mut trace: Vec<(T, T)> = Vec::new();
    let eval_pe = |rho: T, trace: &mut Vec<(T, T)>| -> Result<T, EvalError> {
        let sets = make_sets(rho);
        let res = design(method, channels, &sets, cfg, opts, &eval)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(0x7_0000_0000 + trace.len() as u64);
        let p = pe(
            &res.beams,
            channels,
            cfg,
            ErrorSpec::Gaussian { sigma },
            res.objective_rate,
            n_trials,
            &mut rng,
        )?;
        trace.push((rho, p));
        Ok(p)
    };

    let (mut lo, mut hi) = (fr::<T>(1e-4), T::one());
    let pe_lo = eval_pe(lo, &mut trace)?;
    if pe_lo >= target_pe {
        let monotone = trace_is_monotone(&trace);
        return Ok(RhoSearch { rho: lo, trace, monotone });
    }
    let pe_hi = eval_pe(hi, &mut trace)?;
    if pe_hi < target_pe {
        return Err(EvalError::BracketExhausted {
            lo: lo.to_f64().unwrap_or(f64::NAN),
            hi: hi.to_f64().unwrap_or(f64::NAN),
            target: target_pe.to_f64().unwrap_or(f64::NAN),
        });
    }
    while hi - lo > fr(1e-3) {
        let mid = (lo + hi) * fr(0.5);
        let p = eval_pe(mid, &mut trace)?;
        if p >= target_pe {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let monotone = trace_is_monotone(&trace);
    Ok(RhoSearch { rho: hi, trace, monotone })
}

fn trace_is_monotone<T: Real>(trace: &[(T, T)]) -> bool {
    let mut pairs: Vec<(T, T)> = trace.to_vec();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // allow Monte-Carlo noise of a couple standard errors
    let slack = fr::<T>(0.05);
    pairs.windows(2).all(|w| w[1].1 >= w[0].1 - slack)
}
