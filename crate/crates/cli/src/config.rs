//! JSON experiment configuration: network topology, uncertainty model,
//! algorithm knobs and Monte-Carlo budgets.

use serde::Deserialize;
use wsrm_core::evaluation::EvalOptions;
use wsrm_core::model::NetworkConfig;
use wsrm_core::sca::ScaOptions;
use wsrm_core::uncertainty::{
    make_box, make_polyhedral, UncertaintyMap, UncertaintySet,
};
use wsrm_core::C64;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub network: NetworkSection,
    pub uncertainty: UncertaintySection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub sampling: SamplingSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub b: usize,
    pub users_per_bs: Vec<usize>,
    pub t: usize,
    pub sigma2: f64,
    pub snr_db: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    #[serde(rename = "type")]
    pub kind: String,
    pub rho: f64,
    #[serde(default)]
    pub q: Option<usize>,
    /// Explicit shape matrices (type = "ellipsoids"), row-major
    /// `[re, im]` entry pairs, one `T*T`-long list per ellipsoid.
    #[serde(default)]
    pub matrices: Option<Vec<Vec<[f64; 2]>>>,
    /// Box per-coordinate weights (type = "box").
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    /// Polyhedral directions (type = "polyhedral") as `[re, im]` pairs.
    #[serde(default)]
    pub xi: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub max_iters: usize,
    pub tol_obj: f64,
    pub eps_t: f64,
    pub seed: u64,
    pub restarts: usize,
    pub solver_tol: f64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            max_iters: 50,
            tol_obj: 1e-4,
            eps_t: 1e-3,
            seed: 0,
            restarts: 10,
            solver_tol: 1e-7,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub n_samples: usize,
    pub n_trials: usize,
    pub n_repeats: usize,
    pub rc_samples: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection { n_samples: 1000, n_trials: 10_000, n_repeats: 50, rc_samples: 200 }
    }
}

pub struct Experiment {
    pub cfg: NetworkConfig<f64>,
    pub sets: UncertaintyMap<f64>,
    pub sca: ScaOptions<f64>,
    pub eval: EvalOptions,
    pub rho: f64,
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn experiment(&self) -> Result<Experiment, String> {
        let cfg = self.network_config(self.network.snr_db)?;
        let sets = self.uncertainty_map(&cfg, self.uncertainty.rho)?;
        Ok(Experiment {
            cfg,
            sets,
            sca: self.sca_options(),
            eval: self.eval_options(),
            rho: self.uncertainty.rho,
        })
    }

    pub fn network_config(&self, snr_db: f64) -> Result<NetworkConfig<f64>, String> {
        let n = &self.network;
        if n.users_per_bs.len() != n.b {
            return Err(format!(
                "network.users_per_bs has {} entries for b = {}",
                n.users_per_bs.len(),
                n.b
            ));
        }
        let total: usize = n.users_per_bs.iter().sum();
        let weights = n.weights.clone().unwrap_or_else(|| vec![1.0; total]);
        let snr = 10f64.powf(snr_db / 10.0);
        NetworkConfig::new(
            n.users_per_bs.clone(),
            n.t,
            n.sigma2,
            vec![snr * n.sigma2; n.b],
            weights,
        )
        .map_err(|e| format!("network: {e}"))
    }

    pub fn uncertainty_set(&self, rho: f64) -> Result<Option<UncertaintySet<f64>>, String> {
        if rho <= 0.0 {
            return Ok(None);
        }
        let t = self.network.t;
        let u = &self.uncertainty;
        let set = match u.kind.as_str() {
            "box" => make_box(t, rho, u.theta.clone()).map_err(|e| format!("uncertainty: {e}"))?,
            "polyhedral" => {
                let xi = u
                    .xi
                    .as_ref()
                    .ok_or("uncertainty: missing field `xi` for type \"polyhedral\"")?;
                let dirs = xi
                    .iter()
                    .map(|v| parse_cvec(v, t))
                    .collect::<Result<Vec<_>, _>>()?;
                make_polyhedral(dirs, rho).map_err(|e| format!("uncertainty: {e}"))?
            }
            "ellipsoids" => {
                let mats = u
                    .matrices
                    .as_ref()
                    .ok_or("uncertainty: missing field `matrices` for type \"ellipsoids\"")?;
                let shapes = mats
                    .iter()
                    .map(|m| parse_cmat(m, t))
                    .collect::<Result<Vec<_>, _>>()?;
                UncertaintySet::new(shapes, rho).map_err(|e| format!("uncertainty: {e}"))?
            }
            other => return Err(format!("uncertainty: unknown type {other:?}")),
        };
        if let Some(q) = u.q {
            if q != set.num_ellipsoids() {
                return Err(format!(
                    "uncertainty: q = {q} but the set has {} ellipsoids",
                    set.num_ellipsoids()
                ));
            }
        }
        Ok(Some(set))
    }

    pub fn uncertainty_map(
        &self,
        cfg: &NetworkConfig<f64>,
        rho: f64,
    ) -> Result<UncertaintyMap<f64>, String> {
        Ok(match self.uncertainty_set(rho)? {
            Some(set) => UncertaintyMap::uniform(cfg.num_bs(), cfg.num_users(), set),
            None => UncertaintyMap::certain(cfg.num_bs(), cfg.num_users()),
        })
    }

    pub fn sca_options(&self) -> ScaOptions<f64> {
        let a = &self.algorithm;
        ScaOptions {
            max_iters: a.max_iters,
            tol_obj: a.tol_obj,
            eps_t: a.eps_t,
            seed: a.seed,
            restarts: a.restarts,
            solver: wsrm_core::solver::SolverOptions {
                tol_gap: a.solver_tol,
                tol_feas: a.solver_tol,
                max_iterations: 200,
            },
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        let s = &self.sampling;
        EvalOptions {
            n_samples: s.n_samples,
            n_trials: s.n_trials,
            n_repeats: s.n_repeats,
            rc_samples: s.rc_samples,
        }
    }
}

fn parse_cvec(entries: &[[f64; 2]], t: usize) -> Result<wsrm_core::nalgebra::DVector<C64>, String> {
    if entries.len() != t {
        return Err(format!("expected {t} complex entries, got {}", entries.len()));
    }
    Ok(wsrm_core::nalgebra::DVector::from_iterator(
        t,
        entries.iter().map(|p| C64::new(p[0], p[1])),
    ))
}

fn parse_cmat(entries: &[[f64; 2]], t: usize) -> Result<wsrm_core::nalgebra::DMatrix<C64>, String> {
    if entries.len() != t * t {
        return Err(format!("expected {} complex entries, got {}", t * t, entries.len()));
    }
    Ok(wsrm_core::nalgebra::DMatrix::from_fn(t, t, |i, j| {
        let p = entries[i * t + j];
        C64::new(p[0], p[1])
    }))
}
