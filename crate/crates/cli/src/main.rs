//! Command-line front end for the multicell robust beamforming
//! experiments: design solves, parameter sweeps, PE tables, rate CDFs and
//! the radius-for-PE search. Outputs are plot-ready CSV (or JSON for
//! single solves) and fully determined by the config file and seed.

mod config;

use clap::{Args, Parser, Subcommand};
use config::Config;
use wsrm_core::rand::SeedableRng;
use std::path::PathBuf;
use std::process::ExitCode;
use wsrm_core::evaluation::{
    self, cdf_sum_rate, design, find_rho_for_pe, pe, sweep, ErrorSpec, EvalOptions, Method,
    SweepParam,
};
use wsrm_core::model::generate_channels;
use wsrm_core::sca::ScaError;
use wsrm_core::solver::SolveStatus;
use wsrm_core::uncertainty::UncertaintyMap;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "wsrm", about = "Robust weighted-sum-rate beamforming designs and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file path.
    #[arg(long, default_value = "out.csv")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock times in the output (off by default so reruns are
    /// byte-identical).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Design beamformers with one method and write the solution as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        /// nonrobust | robust1 | robust2 | robust2-lfj | zf | sampled-rc
        #[arg(long)]
        method: String,
    },
    /// Sweep rho or SNR over a grid of values, seeds and methods.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rho | snr
        #[arg(long)]
        param: String,
        /// Grid as start:stop:step or a comma-separated list.
        #[arg(long)]
        values: String,
        /// Comma-separated methods (default: all but sampled-rc).
        #[arg(long, default_value = "nonrobust,robust1,robust2,robust2-lfj,zf")]
        methods: String,
        /// Number of channel seeds (seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        num_seeds: u64,
    },
    /// Exceedance probabilities for error boxes inflated by the given
    /// ratios over the design radius.
    PeTable {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rho'/rho ratios.
        #[arg(long, default_value = "1,2.25,4,6.25")]
        ratios: String,
    },
    /// Empirical CDF of the realized sum rate per method.
    Cdf {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "nonrobust,robust1,robust2,robust2-lfj,zf")]
        methods: String,
    },
    /// Smallest design radius reaching a target PE under Gaussian errors.
    RhoForPe {
        #[command(flatten)]
        common: Common,
        /// Per-entry error variance of the Gaussian error model.
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.8)]
        target: f64,
        #[arg(long, default_value = "robust1")]
        method: String,
    },
}

enum CliError {
    Config(String),
    Solver(String),
    Infeasible(String),
}

impl CliError {
    fn exit(self) -> ExitCode {
        match self {
            CliError::Config(m) => {
                eprintln!("config error: {m}");
                ExitCode::from(EXIT_CONFIG)
            }
            CliError::Solver(m) => {
                eprintln!("solver failure: {m}");
                ExitCode::from(EXIT_SOLVER)
            }
            CliError::Infeasible(m) => {
                eprintln!("infeasible: {m}");
                ExitCode::from(EXIT_INFEASIBLE)
            }
        }
    }
}

fn classify_eval(e: evaluation::EvalError) -> CliError {
    let infeasible = matches!(
        &e,
        evaluation::EvalError::Sca(ScaError::RestartsExhausted {
            last: SolveStatus::Infeasible,
            ..
        })
    );
    if infeasible {
        CliError::Infeasible(e.to_string())
    } else {
        CliError::Solver(e.to_string())
    }
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    Method::parse(s).ok_or_else(|| CliError::Config(format!("unknown method {s:?}")))
}

fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    s.split(',').map(|m| parse_method(m.trim())).collect()
}

fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!("bad grid {s:?}, want start:stop:step")));
        }
        let parse = |x: &str| {
            x.parse::<f64>().map_err(|_| CliError::Config(format!("bad number {x:?}")))
        };
        let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 {
            return Err(CliError::Config("grid step must be positive".into()));
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= stop + 1e-12 {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        s.split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad number {x:?}")))
            })
            .collect()
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn write_out(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Solver(format!("cannot write {}: {e}", path.display())))
}

fn load(common: &Common) -> Result<(Config, config::Experiment), CliError> {
    let mut cfg = Config::load(&common.config).map_err(CliError::Config)?;
    if let Some(seed) = common.seed {
        cfg.algorithm.seed = seed;
    }
    let exp = cfg.experiment().map_err(CliError::Config)?;
    Ok((cfg, exp))
}

fn cmd_solve(common: &Common, method: &str) -> Result<(), CliError> {
    let (_cfg, exp) = load(common)?;
    let method = parse_method(method)?;
    let channels = generate_channels(&exp.cfg, exp.sca.seed);
    let res = design(method, &channels, &exp.sets, &exp.cfg, &exp.sca, &exp.eval)
        .map_err(classify_eval)?;

    let beams_json: Vec<serde_json::Value> = exp
        .cfg
        .users()
        .iter()
        .map(|&u| {
            let w = res.beams.w(&exp.cfg, u);
            serde_json::json!({
                "b": u.b,
                "k": u.k,
                "re": w.iter().map(|c| c.re).collect::<Vec<f64>>(),
                "im": w.iter().map(|c| c.im).collect::<Vec<f64>>(),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "method": method.as_str(),
        "objective_rate": res.objective_rate,
        "nominal_rate": res.nominal_rate,
        "iterations": res.iterations,
        "history": res.history,
        "rank_report": res.rank_report,
        "rank_ratio_max": res.rank_ratio_max,
        "rank_flagged": res.rank_flagged,
        "beamformers": beams_json,
    });
    write_out(&common.out, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))?;
    println!(
        "method={} objective_rate={} nominal_rate={} iterations={} rank_ratio_max={}",
        method.as_str(),
        fmt(res.objective_rate),
        fmt(res.nominal_rate),
        res.iterations,
        fmt(res.rank_ratio_max)
    );
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    param: &str,
    values: &str,
    methods: &str,
    num_seeds: u64,
) -> Result<(), CliError> {
    let (cfg_file, exp) = load(common)?;
    let param = match param {
        "rho" => SweepParam::Rho,
        "snr" | "snr_db" => SweepParam::SnrDb,
        other => return Err(CliError::Config(format!("unknown sweep parameter {other:?}"))),
    };
    let values = parse_values(values)?;
    let methods = parse_methods(methods)?;
    let seeds: Vec<u64> = (0..num_seeds).map(|i| exp.sca.seed + i).collect();
    let base_rho = exp.rho;

    let setup = move |p: SweepParam, v: f64| match p {
        SweepParam::Rho => {
            let cfg = cfg_file.network_config(cfg_file.network.snr_db).expect("validated");
            let sets = cfg_file.uncertainty_map(&cfg, v).expect("validated");
            (cfg, sets)
        }
        SweepParam::SnrDb => {
            let cfg = cfg_file.network_config(v).expect("validated");
            let sets = cfg_file.uncertainty_map(&cfg, base_rho).expect("validated");
            (cfg, sets)
        }
    };
    let rows = sweep(param, &values, &methods, &setup, &seeds, &exp.sca, &exp.eval);

    let mut out = String::from(
        "seed,method,param,value,nominal_rate,worst_case_rate,pe,rank_ratio_max,iterations,wall_ms\n",
    );
    for r in &rows {
        let wall = if common.timing { r.wall_ms } else { 0 };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.method.as_str(),
            r.param.as_str(),
            fmt(r.value),
            fmt(r.nominal_rate),
            fmt(r.worst_case_rate),
            fmt(r.pe),
            fmt(r.rank_ratio_max),
            r.iterations,
            wall
        ));
    }
    write_out(&common.out, &out)?;
    let failures = rows.iter().filter(|r| !r.ok).count();
    println!("sweep: {} rows written to {} ({failures} failed cells)", rows.len(), common.out.display());
    Ok(())
}

fn cmd_pe_table(common: &Common, ratios: &str) -> Result<(), CliError> {
    let (_cfg, exp) = load(common)?;
    let ratios = parse_values(ratios)?;
    let channels = generate_channels(&exp.cfg, exp.sca.seed);
    let methods =
        [Method::Robust1, Method::Robust2, Method::Robust2Lfj, Method::Nonrobust];
    let mut designs = Vec::new();
    for m in methods {
        designs.push((
            m,
            design(m, &channels, &exp.sets, &exp.cfg, &exp.sca, &exp.eval)
                .map_err(classify_eval)?,
        ));
    }
    let mut out = String::from("ratio,robust1,robust2,robust2_lfj,nonrobust\n");
    for (ri, &ratio) in ratios.iter().enumerate() {
        let mut cells = Vec::new();
        for (mi, (_m, res)) in designs.iter().enumerate() {
            let mut rng = wsrm_core::rand_chacha::ChaCha8Rng::seed_from_u64(exp.sca.seed);
            rng.set_stream(0x9_0000_0000 + (ri * designs.len() + mi) as u64);
            let p = pe(
                &res.beams,
                &channels,
                &exp.cfg,
                ErrorSpec::UniformBox { rho: ratio * exp.rho },
                res.objective_rate,
                exp.eval.n_trials,
                &mut rng,
            )
            .map_err(classify_eval)?;
            cells.push(fmt(p));
        }
        out.push_str(&format!("{},{}\n", fmt(ratio), cells.join(",")));
    }
    write_out(&common.out, &out)?;
    println!("pe-table: {} ratios written to {}", ratios.len(), common.out.display());
    Ok(())
}

fn cmd_cdf(common: &Common, methods: &str) -> Result<(), CliError> {
    let (_cfg, exp) = load(common)?;
    let methods = parse_methods(methods)?;
    let channels = generate_channels(&exp.cfg, exp.sca.seed);
    let mut sets_of_beams = Vec::new();
    for &m in &methods {
        let res = design(m, &channels, &exp.sets, &exp.cfg, &exp.sca, &exp.eval)
            .map_err(classify_eval)?;
        sets_of_beams.push((m, res.beams));
    }
    let mut rng = wsrm_core::rand_chacha::ChaCha8Rng::seed_from_u64(exp.sca.seed);
    rng.set_stream(0xA_0000_0000);
    let table = cdf_sum_rate(
        &sets_of_beams,
        &channels,
        &exp.cfg,
        ErrorSpec::UniformBox { rho: exp.rho },
        exp.eval.n_trials,
        &mut rng,
    )
    .map_err(classify_eval)?;
    let mut out = String::from("p");
    for m in &table.methods {
        out.push(',');
        out.push_str(m.as_str());
    }
    out.push('\n');
    let n = exp.eval.n_trials;
    for i in 0..n {
        out.push_str(&fmt((i + 1) as f64 / n as f64));
        for col in &table.rates {
            out.push(',');
            out.push_str(&fmt(col[i]));
        }
        out.push('\n');
    }
    write_out(&common.out, &out)?;
    println!("cdf: {} trials x {} methods written to {}", n, table.methods.len(), common.out.display());
    Ok(())
}

fn cmd_rho_for_pe(
    common: &Common,
    sigma: f64,
    target: f64,
    method: &str,
) -> Result<(), CliError> {
    let (cfg_file, exp) = load(common)?;
    let method = parse_method(method)?;
    let channels = generate_channels(&exp.cfg, exp.sca.seed);
    let cfg = exp.cfg.clone();
    let make_sets = move |rho: f64| -> UncertaintyMap<f64> {
        cfg_file.uncertainty_map(&cfg, rho).expect("validated")
    };
    let found = find_rho_for_pe(
        sigma,
        target,
        &channels,
        &exp.cfg,
        method,
        &make_sets,
        &exp.sca,
        2000,
    )
    .map_err(classify_eval)?;
    let mut out = String::from("rho,pe\n");
    for (r, p) in &found.trace {
        out.push_str(&format!("{},{}\n", fmt(*r), fmt(*p)));
    }
    write_out(&common.out, &out)?;
    println!(
        "rho-for-pe: rho={} (monotone trace: {}) written to {}",
        fmt(found.rho),
        found.monotone,
        common.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let _ = EvalOptions::default();
    let result = match &cli.command {
        Command::Solve { common, method } => cmd_solve(common, method),
        Command::Sweep { common, param, values, methods, num_seeds } => {
            cmd_sweep(common, param, values, methods, *num_seeds)
        }
        Command::PeTable { common, ratios } => cmd_pe_table(common, ratios),
        Command::Cdf { common, methods } => cmd_cdf(common, methods),
        Command::RhoForPe { common, sigma, target, method } => {
            cmd_rho_for_pe(common, *sigma, *target, method)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.exit(),
    }
}
