//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `--nocapture` to see them all). Desk scale throughout:
//! B = 2 cells, 2 users each, T = 4 antennas, sigma2 = 1, SNR = 10 dB,
//! channel seeds 1..=10.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use wsrm_core::evaluation::{
    cdf_sum_rate, design, pe, sampled_rc_min_over_repeats_from, worst_case_rate, ErrorSpec,
    EvalOptions, Method, MethodResult,
};
use wsrm_core::model::{generate_channels, NetworkConfig, UserId};
use wsrm_core::rand::prelude::*;
use wsrm_core::rand_chacha::ChaCha8Rng;
use wsrm_core::sca::{normalized_weights, ScaOptions};
use wsrm_core::solver::{solve, SolveStatus, SolverOptions};
use wsrm_core::uncertainty::{
    make_box, sample, SampleMode, UncertaintyMap, UncertaintySet,
};
use wsrm_core::{C64, ConicProgram64};

const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

fn desk_cfg() -> NetworkConfig<f64> {
    NetworkConfig::uniform(2, 2, 4, 1.0, 10.0).unwrap()
}

fn box_sets(rho: f64) -> UncertaintyMap<f64> {
    UncertaintyMap::uniform(2, 4, make_box::<f64>(4, rho, None).unwrap())
}

fn sca_opts(seed: u64) -> ScaOptions<f64> {
    ScaOptions { max_iters: 30, seed, ..Default::default() }
}

fn eval_opts() -> EvalOptions {
    EvalOptions { n_samples: 400, n_trials: 10_000, n_repeats: 3, rc_samples: 150 }
}

#[derive(Clone)]
struct Cached {
    result: Result<Arc<MethodResult<f64>>, String>,
    wall_secs: f64,
}

type CacheKey = (u8, u64, u64); // method tag, seed, rho in micro-units

fn method_tag(m: Method) -> u8 {
    match m {
        Method::Nonrobust => 0,
        Method::Robust1 => 1,
        Method::Robust2 => 2,
        Method::Robust2Lfj => 3,
        Method::Zf => 4,
        Method::SampledRc => 5,
    }
}

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<OnceLock<Cached>>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<OnceLock<Cached>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Designs (or retrieves) one method on the desk instance for (seed, rho).
/// The sampled robust counterpart warm-starts from the first robust
/// approximation's converged expansion point, which is feasible for every
/// sampled constraint subset.
fn get_design(method: Method, seed: u64, rho: f64) -> Cached {
    let key = (method_tag(method), seed, (rho * 1e6).round() as u64);
    let slot = {
        let mut map = cache().lock().unwrap();
        map.entry(key).or_insert_with(|| Arc::new(OnceLock::new())).clone()
    };
    slot.get_or_init(|| {
        let cfg = desk_cfg();
        let channels = generate_channels(&cfg, seed);
        let sets = box_sets(rho);
        let opts = sca_opts(seed);
        let started = std::time::Instant::now();
        let result = if method == Method::SampledRc {
            // warm start from robust1's converged state
            let warm = robust1_state(seed, rho);
            sampled_rc_min_over_repeats_from(
                &channels,
                &sets,
                &cfg,
                &opts,
                eval_opts().rc_samples,
                eval_opts().n_repeats,
                seed,
                warm,
            )
            .map(|(obj, run)| {
                let nominal =
                    wsrm_core::model::weighted_sum_rate(&channels, &run.beams, &cfg).unwrap();
                Arc::new(MethodResult {
                    beams: run.beams,
                    objective_rate: obj,
                    nominal_rate: nominal,
                    iterations: run.state.iteration,
                    rank_report: None,
                    rank_ratio_max: 0.0,
                    rank_flagged: false,
                    history: run.state.history,
                    precoders: None,
                })
            })
            .map_err(|e| e.to_string())
        } else {
            design(method, &channels, &sets, &cfg, &opts, &eval_opts())
                .map(Arc::new)
                .map_err(|e| e.to_string())
        };
        Cached { result, wall_secs: started.elapsed().as_secs_f64() }
    })
    .clone()
}

/// Converged (t, mu) state of the robust1 design, recomputed structurally
/// from its certified history via a fresh run (states are cached inside
/// MethodResult history only as rates, so rerun the design run here).
fn robust1_state(seed: u64, rho: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    static STATES: OnceLock<Mutex<HashMap<(u64, u64), Option<(Vec<f64>, Vec<f64>)>>>> =
        OnceLock::new();
    let map = STATES.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (seed, (rho * 1e6).round() as u64);
    if let Some(v) = map.lock().unwrap().get(&key) {
        return v.clone();
    }
    let cfg = desk_cfg();
    let channels = generate_channels(&cfg, seed);
    let sets = box_sets(rho);
    let out = wsrm_core::robust_first::run_first(&channels, &sets, &cfg, &sca_opts(seed))
        .ok()
        .map(|r| (r.state.t.clone(), r.state.mu.clone()));
    map.lock().unwrap().insert(key, out.clone());
    out
}

fn wc_of(beams: &wsrm_core::model::BeamformerSet<f64>, seed: u64, rho: f64) -> f64 {
    let cfg = desk_cfg();
    let channels = generate_channels(&cfg, seed);
    let sets = box_sets(rho);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xACC_0000 + (rho * 1e6) as u64);
    worst_case_rate(beams, &channels, &sets, &cfg, eval_opts().n_samples, &mut rng).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1: monotone SCA, convergence within 30 iterations, < 60 s/run
// ---------------------------------------------------------------------------
#[test]
fn acceptance_1_monotone_sca_convergence() {
    let rho = 0.1;
    let mut worst_iters = 0usize;
    let mut worst_wall = 0.0f64;
    for &seed in &SEEDS {
        for method in [Method::Nonrobust, Method::Robust1, Method::Robust2] {
            let cached = get_design(method, seed, rho);
            let res = cached
                .result
                .as_ref()
                .unwrap_or_else(|e| panic!("ACCEPTANCE 1: FAIL {method:?} seed {seed}: {e}"));
            let h = &res.history;
            for w in h.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-6,
                    "ACCEPTANCE 1: FAIL {method:?} seed {seed}: objective decreased {} -> {}",
                    w[0],
                    w[1]
                );
            }
            // convergence within 30 iterations: relative stall < 1e-4
            let n = h.len();
            assert!(
                n >= 2 && n <= 30,
                "ACCEPTANCE 1: FAIL {method:?} seed {seed}: {n} iterations"
            );
            let rel = (h[n - 1] - h[n - 2]).abs() / h[n - 2].abs().max(1.0);
            assert!(
                rel < 1e-4,
                "ACCEPTANCE 1: FAIL {method:?} seed {seed}: no stall ({rel:.2e})"
            );
            assert!(
                cached.wall_secs < 60.0,
                "ACCEPTANCE 1: FAIL {method:?} seed {seed}: {:.1}s > 60s",
                cached.wall_secs
            );
            worst_iters = worst_iters.max(n);
            worst_wall = worst_wall.max(cached.wall_secs);
        }
    }
    println!(
        "ACCEPTANCE 1 monotone SCA: PASS (max iterations {worst_iters}, max wall {worst_wall:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: single-user runs reach the matched-filter closed form
// ---------------------------------------------------------------------------
#[test]
fn acceptance_2_single_user_mrt_oracle() {
    let cfg = NetworkConfig::<f64>::uniform(1, 1, 4, 1.0, 10.0).unwrap();
    let mut worst = 0.0f64;
    for seed in 100..120u64 {
        let ch = generate_channels(&cfg, seed);
        let run = wsrm_core::sca::run(&ch, &cfg, &sca_opts(seed)).unwrap();
        let h = ch.h(0, &cfg, UserId { b: 0, k: 0 });
        let expect = (1.0 + cfg.power(0) * h.norm_squared() / cfg.sigma2()).log2();
        let err = (run.objective_rate() - expect).abs();
        assert!(
            err < 1e-3,
            "ACCEPTANCE 2: FAIL seed {seed}: rate {} vs closed form {expect}",
            run.objective_rate()
        );
        worst = worst.max(err);
    }
    println!("ACCEPTANCE 2 single-user oracle: PASS (max |error| {worst:.2e} bits/s/Hz)");
}

// ---------------------------------------------------------------------------
// Criterion 3: robust safety under boundary-biased sampling
// ---------------------------------------------------------------------------
#[test]
fn acceptance_3_robust_safety() {
    let rho = 0.1;
    let cfg = desk_cfg();
    let set = make_box::<f64>(4, rho, None).unwrap();
    let alphas = normalized_weights(&cfg);
    let n_draws = 1000;
    for &seed in &SEEDS {
        let channels = generate_channels(&cfg, seed);
        for method in [Method::Robust1, Method::Robust2Lfj] {
            let cached = get_design(method, seed, rho);
            let res = match cached.result.as_ref() {
                Ok(r) => r.clone(),
                Err(e) => panic!("ACCEPTANCE 3: FAIL {method:?} seed {seed}: {e}"),
            };
            // recover the converged expansion point from a fresh run
            let sets = box_sets(rho);
            let (t_star, mu_star) = match method {
                Method::Robust1 => {
                    let r = wsrm_core::robust_first::run_first(
                        &channels,
                        &sets,
                        &cfg,
                        &sca_opts(seed),
                    )
                    .unwrap();
                    (r.state.t, r.state.mu)
                }
                _ => {
                    let r = wsrm_core::robust_second::run_second(
                        &channels,
                        &sets,
                        &cfg,
                        &sca_opts(seed),
                        true,
                    )
                    .unwrap();
                    (r.state.t, r.state.mu)
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33);
            for (flat, &user) in cfg.users().iter().enumerate() {
                let f_star =
                    ((t_star[flat].powf(1.0 / alphas[flat]) - 1.0) * mu_star[flat]).sqrt();
                let own = channels.h(user.b, &cfg, user);
                for _ in 0..n_draws {
                    let d_own = sample(&set, 1, &mut rng, SampleMode::BoundaryBiased)
                        .pop()
                        .unwrap();
                    let sig = (own + &d_own).dot(res.beams.w(&cfg, user)).re;
                    assert!(
                        sig >= f_star * (1.0 - 1e-6) - 1e-9,
                        "ACCEPTANCE 3: FAIL {method:?} seed {seed} user {flat}: signal {sig} < {f_star}"
                    );
                    let mut total = cfg.sigma2();
                    for (oflat, &other) in cfg.users().iter().enumerate() {
                        if other == user {
                            continue;
                        }
                        let hv = channels.h(other.b, &cfg, user);
                        let d = sample(&set, 1, &mut rng, SampleMode::BoundaryBiased)
                            .pop()
                            .unwrap();
                        total += (hv + &d).dot(res.beams.w_flat(oflat)).norm_sqr();
                    }
                    assert!(
                        total <= mu_star[flat] * (1.0 + 1e-6),
                        "ACCEPTANCE 3: FAIL {method:?} seed {seed} user {flat}: interference {total} > {}",
                        mu_star[flat]
                    );
                }
            }
        }
    }
    println!(
        "ACCEPTANCE 3 robust safety: PASS ({} draws/link, robust1 and robust2-lfj, 10 seeds)",
        n_draws
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: S-lemma tightness and SOCP duality oracles
// ---------------------------------------------------------------------------
#[test]
fn acceptance_4_duality_oracles() {
    use wsrm_core::conic::{ComplexExpr, LinExpr};
    // (a) Q = 1 interference LMI beta vs sampled maximum
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_gap = 0.0f64;
    for trial in 0..20 {
        let t = 2usize;
        let a = wsrm_core::nalgebra::DMatrix::<C64>::from_fn(t, t, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let shape = &a * a.adjoint()
            + wsrm_core::nalgebra::DMatrix::<C64>::identity(t, t) * C64::new(0.4, 0.0);
        let rho = rng.random_range(0.2..1.5);
        let set = UncertaintySet::new(vec![shape], rho).unwrap();
        let hbar = wsrm_core::nalgebra::DVector::<C64>::from_fn(t, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let wv = wsrm_core::nalgebra::DVector::<C64>::from_fn(t, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let mut prog = ConicProgram64::new();
        let beta = prog.add_var("beta");
        prog.add_nonneg(LinExpr::var(beta));
        let w_exprs: Vec<ComplexExpr<f64>> =
            wv.iter().map(|&c| ComplexExpr::constant(c)).collect();
        wsrm_core::robust_first::interference_lmi(&mut prog, &hbar, &w_exprs, Some(&set), beta)
            .unwrap();
        prog.set_objective_max(LinExpr::var(beta).neg());
        let sol = solve(&prog, &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        let beta_star = sol.value(beta);

        // sampled maximization with exact in-set phase alignment per draw
        let base = hbar.dot(&wv).norm_sqr().sqrt();
        let mut best = 0.0f64;
        for d in sample(&set, 100_000, &mut rng, SampleMode::BoundaryBiased) {
            let m = d.dot(&wv).norm_sqr().sqrt();
            best = best.max((base + m) * (base + m));
        }
        let gap = (beta_star - best).abs() / beta_star.max(1e-9);
        assert!(
            best <= beta_star * (1.0 + 1e-6) && gap <= 0.01,
            "ACCEPTANCE 4a: FAIL trial {trial}: beta {beta_star} vs sampled {best}"
        );
        worst_gap = worst_gap.max(gap);
    }

    // (b) SOCP primal/dual pair optimal values agree
    let mut worst_pd = 0.0f64;
    for trial in 0..20 {
        let n = rng.random_range(2..4);
        let k = rng.random_range(1..4);
        let f: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mats: Vec<wsrm_core::nalgebra::DMatrix<C64>> = (0..k)
            .map(|_| {
                wsrm_core::nalgebra::DMatrix::from_fn(n, n, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                }) + wsrm_core::nalgebra::DMatrix::identity(n, n) * C64::new(2.0, 0.0)
            })
            .collect();
        let d: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..3.0)).collect();

        let mut p = ConicProgram64::new();
        let x = p.add_complex_vec("x", n);
        for i in 0..k {
            let mut args = Vec::new();
            for r in 0..n {
                let mut acc = ComplexExpr::zero();
                for cidx in 0..n {
                    acc = acc.add(x[cidx].clone().scale(mats[i][(r, cidx)]));
                }
                args.push(acc.re);
                args.push(acc.im);
            }
            p.add_soc(args, LinExpr::constant(d[i]));
        }
        let mut obj = LinExpr::zero();
        for j in 0..n {
            obj = obj + x[j].re.clone().scale(f[j].re) + x[j].im.clone().scale(f[j].im);
        }
        p.set_objective_max(obj.neg());
        let psol = solve(&p, &SolverOptions::default());
        assert_eq!(psol.status, SolveStatus::Optimal);

        let mut q = ConicProgram64::new();
        let lambdas = q.add_var_vec("lambda", k);
        let us: Vec<Vec<ComplexExpr<f64>>> =
            (0..k).map(|i| q.add_complex_vec(&format!("u{i}"), n)).collect();
        for r in 0..n {
            let mut acc = ComplexExpr::constant(f[r]);
            for i in 0..k {
                for cidx in 0..n {
                    acc = acc.add(us[i][cidx].clone().scale(mats[i][(cidx, r)].conj()));
                }
            }
            q.add_complex_eq(acc);
        }
        let mut dobj = LinExpr::zero();
        for i in 0..k {
            let mut args = Vec::new();
            for cidx in 0..n {
                args.push(us[i][cidx].re.clone());
                args.push(us[i][cidx].im.clone());
            }
            q.add_soc(args, LinExpr::var(lambdas[i]));
            dobj = dobj + LinExpr::scaled_var(lambdas[i], -d[i]);
        }
        q.set_objective_max(dobj);
        let dsol = solve(&q, &SolverOptions::default());
        assert_eq!(dsol.status, SolveStatus::Optimal);
        let gap = ((-psol.objective) - dsol.objective).abs();
        assert!(
            gap <= 1e-6 * psol.objective.abs().max(1.0),
            "ACCEPTANCE 4b: FAIL trial {trial}: primal {} dual {}",
            -psol.objective,
            dsol.objective
        );
        worst_pd = worst_pd.max(gap);
    }
    println!(
        "ACCEPTANCE 4 duality oracles: PASS (max S-lemma gap {:.2}%, max SOCP pair gap {:.1e})",
        worst_gap * 100.0,
        worst_pd
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: ellipsoid suite
// ---------------------------------------------------------------------------
#[test]
fn acceptance_5_ellipsoid_suite() {
    use wsrm_core::ellipsoid_approx::*;
    let solver_opts = SolverOptions::default();

    // inscribed ellipsoid of a single ball is the ball
    let ball_form = QuadConstraint {
        mat: wsrm_core::nalgebra::DMatrix::<f64>::identity(4, 4) / (0.7 * 0.7),
        center: wsrm_core::nalgebra::DVector::zeros(4),
    };
    let e = max_volume_inscribed_real(&[ball_form], &solver_opts).unwrap();
    let dev = (&e.generator - wsrm_core::nalgebra::DMatrix::<f64>::identity(4, 4) * 0.7).norm();
    assert!(dev < 1e-5, "ACCEPTANCE 5: FAIL ball recovery ({dev:.2e})");

    // inscribed ellipsoid of the box: boundary samples stay in the set
    let set = make_box::<f64>(4, 0.1, None).unwrap();
    let inner = max_volume_inner_ellipsoid(&set, &solver_opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..10_000 {
        let mut u = wsrm_core::nalgebra::DVector::<C64>::from_fn(4, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        u /= C64::new(u.norm(), 0.0);
        let x = inner.point(&u);
        let rep = wsrm_core::uncertainty::membership(&set, &x).unwrap();
        for s in rep.slacks {
            assert!(s >= -1e-6 * set.rho(), "ACCEPTANCE 5: FAIL inclusion (slack {s:.2e})");
        }
    }

    // LFJ cover on the (centrally symmetric) box
    let cover = lfj_inflate(&inner, 4);
    for d in sample(&set, 10_000, &mut rng, SampleMode::BoundaryBiased) {
        assert!(cover.contains(&d), "ACCEPTANCE 5: FAIL LFJ cover");
    }

    // 2-D two-ball intersection vs grid search (volume within 1%)
    let f1 = QuadConstraint {
        mat: wsrm_core::nalgebra::DMatrix::identity(2, 2),
        center: wsrm_core::nalgebra::DVector::zeros(2),
    };
    let f2 = QuadConstraint {
        mat: wsrm_core::nalgebra::DMatrix::identity(2, 2),
        center: wsrm_core::nalgebra::DVector::from_vec(vec![1.0, 0.0]),
    };
    let lens = max_volume_inscribed_real(&[f1, f2], &solver_opts).unwrap();
    let vol = lens.volume_proxy();
    let mut best = 0.0f64;
    let steps = 80;
    for ia in 1..=steps {
        let a = 0.01 + 0.72 * ia as f64 / steps as f64;
        for ib in 1..=steps {
            let b = 0.01 + 0.99 * ib as f64 / steps as f64;
            let mut ok = true;
            for k in 0..600 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 600.0;
                let x = 0.5 + a * th.cos();
                let y = b * th.sin();
                if x * x + y * y > 1.0 || (x - 1.0) * (x - 1.0) + y * y > 1.0 {
                    ok = false;
                    break;
                }
            }
            if ok {
                best = best.max(a * b);
            }
        }
    }
    assert!(
        vol >= best * 0.99,
        "ACCEPTANCE 5: FAIL two-ball volume {vol} vs grid {best}"
    );
    println!("ACCEPTANCE 5 ellipsoid suite: PASS (ball, inclusion, LFJ cover, 2-ball grid)");
}

// ---------------------------------------------------------------------------
// Criterion 6: worst-case rate ordering across the rho grid
// ---------------------------------------------------------------------------
#[test]
fn acceptance_6_worst_case_ordering() {
    let rhos = [0.05, 0.1, 0.15, 0.2, 0.25];
    let mut all_ok = true;
    let mut report = String::new();
    for &rho in &rhos {
        let mut good = 0usize;
        for &seed in &SEEDS {
            let wc = |m: Method| -> Option<f64> {
                let cached = get_design(m, seed, rho);
                match cached.result {
                    Ok(res) => Some(if m == Method::SampledRc {
                        res.objective_rate
                    } else {
                        wc_of(&res.beams, seed, rho)
                    }),
                    Err(_) => None,
                }
            };
            let src = wc(Method::SampledRc);
            let r2 = wc(Method::Robust2);
            let r1 = wc(Method::Robust1);
            let lfj = wc(Method::Robust2Lfj);
            let nr = wc(Method::Nonrobust);
            let tol = 1e-9;
            let mut ok = true;
            match (src, r2, r1) {
                (Some(s), Some(b), Some(a)) => {
                    if !(s >= b - tol && b >= a - tol) {
                        ok = false;
                    }
                }
                _ => ok = false,
            }
            // LFJ may be infeasible at large rho (expected); when present it
            // closes the chain
            if let (Some(a), Some(l)) = (r1, lfj) {
                if !(a >= l - tol) {
                    ok = false;
                }
            }
            if let (Some(a), Some(b), Some(n)) = (r1, r2, nr) {
                if !(a >= n - tol && b >= n - tol) {
                    ok = false;
                }
            }
            if ok {
                good += 1;
            }
        }
        report.push_str(&format!("rho {rho}: {good}/10  "));
        if good < 7 {
            all_ok = false;
        }
    }
    assert!(all_ok, "ACCEPTANCE 6: FAIL ordering counts: {report}");
    println!("ACCEPTANCE 6 worst-case ordering: PASS ({report})");
}

// ---------------------------------------------------------------------------
// Criterion 7: PE contrast at rho = 0.02
// ---------------------------------------------------------------------------
#[test]
fn acceptance_7_pe_contrast() {
    let rho = 0.02;
    let seed = 1u64;
    let cfg = desk_cfg();
    let channels = generate_channels(&cfg, seed);
    let n_trials = 10_000;
    let pe_of = |m: Method, ratio: f64| -> f64 {
        let res = get_design(m, seed, rho).result.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
        rng.set_stream((ratio * 100.0) as u64 + method_tag(m) as u64);
        pe(
            &res.beams,
            &channels,
            &cfg,
            ErrorSpec::UniformBox { rho: ratio * rho },
            res.objective_rate,
            n_trials,
            &mut rng,
        )
        .unwrap()
    };
    let r1_1 = pe_of(Method::Robust1, 1.0);
    let r2_1 = pe_of(Method::Robust2, 1.0);
    let lfj_1 = pe_of(Method::Robust2Lfj, 1.0);
    let nr_1 = pe_of(Method::Nonrobust, 1.0);
    assert!(
        r1_1 >= 0.9995 && r2_1 >= 0.9995 && lfj_1 >= 0.9995,
        "ACCEPTANCE 7: FAIL robust PE at ratio 1: {r1_1} {r2_1} {lfj_1}"
    );
    assert!(nr_1 <= 1e-2, "ACCEPTANCE 7: FAIL nonrobust PE {nr_1} > 1e-2");

    let r1_6 = pe_of(Method::Robust1, 6.25);
    let r2_6 = pe_of(Method::Robust2, 6.25);
    let lfj_6 = pe_of(Method::Robust2Lfj, 6.25);
    assert!(
        r2_6 < r1_6,
        "ACCEPTANCE 7: FAIL at ratio 6.25 inner PE {r2_6} not below first approach {r1_6}"
    );
    assert!(lfj_6 >= 0.9995, "ACCEPTANCE 7: FAIL LFJ PE {lfj_6} at ratio 6.25");
    println!(
        "ACCEPTANCE 7 PE contrast: PASS (ratio 1: {r1_1}/{r2_1}/{lfj_1}/nonrobust {nr_1}; ratio 6.25: first {r1_6}, inner {r2_6}, LFJ {lfj_6})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: zero-forcing baseline behavior
// ---------------------------------------------------------------------------
#[test]
fn acceptance_8_zero_forcing_baseline() {
    let cfg = desk_cfg();
    // the ZF design ignores the radius entirely, so its returned rate is
    // constant in rho by construction
    for &seed in &SEEDS[..3] {
        let a = get_design(Method::Zf, seed, 0.05).result.unwrap();
        let b = get_design(Method::Zf, seed, 0.25).result.unwrap();
        assert!(
            (a.objective_rate - b.objective_rate).abs() < 1e-12,
            "ACCEPTANCE 8: FAIL ZF rate varies with rho"
        );
    }
    // CDF at rho = 0.2: ZF median below the nonrobust median
    let seed = 1u64;
    let channels = generate_channels(&cfg, seed);
    let zf = get_design(Method::Zf, seed, 0.2).result.unwrap();
    let nr = get_design(Method::Nonrobust, seed, 0.2).result.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x88);
    let table = cdf_sum_rate(
        &[(Method::Zf, zf.beams.clone()), (Method::Nonrobust, nr.beams.clone())],
        &channels,
        &cfg,
        ErrorSpec::UniformBox { rho: 0.2 },
        4000,
        &mut rng,
    )
    .unwrap();
    let median = |col: &Vec<f64>| col[col.len() / 2];
    let zf_med = median(&table.rates[0]);
    let nr_med = median(&table.rates[1]);
    assert!(
        zf_med < nr_med,
        "ACCEPTANCE 8: FAIL ZF median {zf_med} not below nonrobust {nr_med}"
    );
    println!(
        "ACCEPTANCE 8 ZF baseline: PASS (rate constant in rho; medians ZF {zf_med:.3} < nonrobust {nr_med:.3})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: rank reporting of the rank-relaxed design
// ---------------------------------------------------------------------------
#[test]
fn acceptance_9_rank_reporting() {
    let cfg = desk_cfg();
    for &rho in &[0.05, 0.1] {
        let mut good = 0usize;
        let mut flagged = 0usize;
        for &seed in &SEEDS {
            let res = match get_design(Method::Robust2, seed, rho).result {
                Ok(r) => r,
                Err(e) => panic!("ACCEPTANCE 9: FAIL robust2 seed {seed}: {e}"),
            };
            if res.rank_ratio_max <= 1e-4 {
                good += 1;
            }
            if res.rank_flagged {
                flagged += 1;
                // re-verify by sampling with the extracted beamformers
                // before any rate would be reported
                let pre = res.precoders.as_ref().expect("flagged run keeps precoders");
                let channels = generate_channels(&cfg, seed);
                let mut beams = res.beams.clone();
                for (flat, u) in cfg.users().iter().enumerate() {
                    let (w, _) = wsrm_core::robust_second::extract_beamformer(&pre[flat]);
                    beams.set(&cfg, *u, w);
                }
                let wc = wc_of(&beams, seed, rho);
                assert!(
                    wc.is_finite() && wc >= 0.0,
                    "ACCEPTANCE 9: FAIL flagged re-verification"
                );
                let _ = channels;
            }
        }
        assert!(
            good >= 7,
            "ACCEPTANCE 9: FAIL at rho {rho}: only {good}/10 seeds numerically rank one"
        );
        println!(
            "ACCEPTANCE 9 rank reporting at rho {rho}: PASS ({good}/10 rank-one, {flagged} flagged re-verified)"
        );
    }
}
