//! Multicell MISO system model: topology, channels, beamformers, SINR,
//! weighted sum rate, power accounting, channel generation and the
//! zero-forcing baseline.
//!
//! Conventions: a channel is a complex row vector stored as its entry
//! vector, a beamformer is a complex column vector, and the received signal
//! amplitude is the unconjugated product `h . w`. Users carry `(b, k)`
//! indices (serving base station, user within its cell); channel keys pair
//! a source base station with a user.

use crate::scalar::{fr, Real, C};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("zero-forcing infeasible at base station {bs}: {reason}")]
    ZfInfeasible { bs: usize, reason: String },
}

/// User identifier: serving base station `b` and in-cell index `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UserId {
    pub b: usize,
    pub k: usize,
}

/// Cell/user topology, antenna count, noise power, per-BS power budgets and
/// rate weights.
#[derive(Clone, Debug)]
pub struct NetworkConfig<T: Real> {
    num_bs: usize,
    users_per_bs: Vec<usize>,
    num_antennas: usize,
    sigma2: T,
    power: Vec<T>,
    /// Rate weights, flat in user order (bs-major).
    weights: Vec<T>,
}

impl<T: Real> NetworkConfig<T> {
    pub fn new(
        users_per_bs: Vec<usize>,
        num_antennas: usize,
        sigma2: T,
        power: Vec<T>,
        weights: Vec<T>,
    ) -> Result<Self, ModelError> {
        let num_bs = users_per_bs.len();
        if num_bs == 0 {
            return Err(ModelError::InvalidConfig("need at least one base station".into()));
        }
        if users_per_bs.iter().any(|&k| k == 0) {
            return Err(ModelError::InvalidConfig("every cell needs at least one user".into()));
        }
        if num_antennas == 0 {
            return Err(ModelError::InvalidConfig("need at least one antenna".into()));
        }
        if !(sigma2 > T::zero()) {
            return Err(ModelError::InvalidConfig("noise variance must be positive".into()));
        }
        if power.len() != num_bs || power.iter().any(|p| !(*p > T::zero())) {
            return Err(ModelError::InvalidConfig(
                "one positive power budget per base station required".into(),
            ));
        }
        let total: usize = users_per_bs.iter().sum();
        if weights.len() != total || weights.iter().any(|a| !(*a > T::zero())) {
            return Err(ModelError::InvalidConfig(
                "one positive rate weight per user required".into(),
            ));
        }
        Ok(NetworkConfig { num_bs, users_per_bs, num_antennas, sigma2, power, weights })
    }

    /// Uniform-weight config with transmit power normalized by the noise
    /// variance: `P_b = snr * sigma2` with `snr = 10^(snr_db/10)`.
    pub fn uniform(
        num_bs: usize,
        users_each: usize,
        num_antennas: usize,
        sigma2: T,
        snr_db: T,
    ) -> Result<Self, ModelError> {
        let snr = fr::<T>(10.0).powf(snr_db / fr(10.0));
        let total = num_bs * users_each;
        NetworkConfig::new(
            vec![users_each; num_bs],
            num_antennas,
            sigma2,
            vec![snr * sigma2; num_bs],
            vec![T::one(); total],
        )
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }
    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }
    pub fn num_users(&self) -> usize {
        self.users_per_bs.iter().sum()
    }
    pub fn users_per_bs(&self) -> &[usize] {
        &self.users_per_bs
    }
    pub fn sigma2(&self) -> T {
        self.sigma2
    }
    pub fn power(&self, b: usize) -> T {
        self.power[b]
    }
    pub fn powers(&self) -> &[T] {
        &self.power
    }

    pub fn weight(&self, user: UserId) -> T {
        self.weights[self.flat_index(user)]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Returns a copy with all weights multiplied by `c`.
    pub fn scale_weights(&self, c: T) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            *w *= c;
        }
        out
    }

    pub fn flat_index(&self, user: UserId) -> usize {
        let base: usize = self.users_per_bs[..user.b].iter().sum();
        base + user.k
    }

    /// All users in `(b, k)` order.
    pub fn users(&self) -> Vec<UserId> {
        let mut out = Vec::with_capacity(self.num_users());
        for (b, &kb) in self.users_per_bs.iter().enumerate() {
            for k in 0..kb {
                out.push(UserId { b, k });
            }
        }
        out
    }
}

/// Nominal complex channel row vectors indexed by (source BS, user).
#[derive(Clone, Debug)]
pub struct ChannelSet<T: Real> {
    /// `h[n][flat_user]`: channel from BS `n` to that user.
    h: Vec<Vec<DVector<C<T>>>>,
}

impl<T: Real> ChannelSet<T> {
    pub fn new(h: Vec<Vec<DVector<C<T>>>>) -> Self {
        ChannelSet { h }
    }

    /// Channel from BS `n` to `user`.
    pub fn h(&self, n: usize, cfg: &NetworkConfig<T>, user: UserId) -> &DVector<C<T>> {
        &self.h[n][cfg.flat_index(user)]
    }

    pub fn num_bs(&self) -> usize {
        self.h.len()
    }

    /// Applies an additive perturbation `delta[n][flat]` to every link.
    pub fn perturbed(&self, delta: &[Vec<DVector<C<T>>>]) -> Self {
        let h = self
            .h
            .iter()
            .zip(delta.iter())
            .map(|(row, drow)| row.iter().zip(drow.iter()).map(|(hv, dv)| hv + dv).collect())
            .collect();
        ChannelSet { h }
    }

    pub fn max_norm(&self) -> T {
        let mut m = T::zero();
        for row in &self.h {
            for v in row {
                m = m.max(v.norm());
            }
        }
        m
    }

    fn check_dims(&self, cfg: &NetworkConfig<T>) -> Result<(), ModelError> {
        if self.h.len() != cfg.num_bs() {
            return Err(ModelError::DimensionMismatch(format!(
                "channel set covers {} base stations, config has {}",
                self.h.len(),
                cfg.num_bs()
            )));
        }
        for row in &self.h {
            if row.len() != cfg.num_users() {
                return Err(ModelError::DimensionMismatch(
                    "channel set user count differs from config".into(),
                ));
            }
            for v in row {
                if v.len() != cfg.num_antennas() {
                    return Err(ModelError::DimensionMismatch(
                        "channel vector length differs from antenna count".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Complex beamforming column vectors indexed by user.
#[derive(Clone, Debug)]
pub struct BeamformerSet<T: Real> {
    w: Vec<DVector<C<T>>>,
}

impl<T: Real> BeamformerSet<T> {
    pub fn new(w: Vec<DVector<C<T>>>) -> Self {
        BeamformerSet { w }
    }

    pub fn zeros(cfg: &NetworkConfig<T>) -> Self {
        BeamformerSet { w: vec![DVector::zeros(cfg.num_antennas()); cfg.num_users()] }
    }

    pub fn w(&self, cfg: &NetworkConfig<T>, user: UserId) -> &DVector<C<T>> {
        &self.w[cfg.flat_index(user)]
    }

    pub fn w_flat(&self, flat: usize) -> &DVector<C<T>> {
        &self.w[flat]
    }

    pub fn set(&mut self, cfg: &NetworkConfig<T>, user: UserId, w: DVector<C<T>>) {
        let idx = cfg.flat_index(user);
        self.w[idx] = w;
    }

    pub fn scaled(&self, s: T) -> Self {
        let c = C::new(s, T::zero());
        BeamformerSet { w: self.w.iter().map(|v| v * c).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<C<T>>> {
        self.w.iter()
    }
}

/// `sum_{k in U_b} ||w_{b,k}||_2^2`.
pub fn per_bs_power<T: Real>(
    beams: &BeamformerSet<T>,
    cfg: &NetworkConfig<T>,
    b: usize,
) -> Result<T, ModelError> {
    if b >= cfg.num_bs() {
        return Err(ModelError::InvalidIndex(format!("base station {b}")));
    }
    let mut acc = T::zero();
    for k in 0..cfg.users_per_bs()[b] {
        acc += beams.w(cfg, UserId { b, k }).norm_squared();
    }
    Ok(acc)
}

/// SINR of one user: desired-signal power over noise plus intra-cell plus
/// inter-cell interference power.
pub fn sinr<T: Real>(
    channels: &ChannelSet<T>,
    beams: &BeamformerSet<T>,
    cfg: &NetworkConfig<T>,
    user: UserId,
) -> Result<T, ModelError> {
    channels.check_dims(cfg)?;
    if user.b >= cfg.num_bs() || user.k >= cfg.users_per_bs()[user.b] {
        return Err(ModelError::InvalidIndex(format!("user ({}, {})", user.b, user.k)));
    }
    let own = channels.h(user.b, cfg, user);
    let sig = own.dot(beams.w(cfg, user)).norm_sqr();
    let mut denom = cfg.sigma2();
    // intra-cell term: same serving BS, other users of that cell
    for j in 0..cfg.users_per_bs()[user.b] {
        if j == user.k {
            continue;
        }
        denom += own.dot(beams.w(cfg, UserId { b: user.b, k: j })).norm_sqr();
    }
    // inter-cell term: every other BS towards this user
    for n in 0..cfg.num_bs() {
        if n == user.b {
            continue;
        }
        let hn = channels.h(n, cfg, user);
        for l in 0..cfg.users_per_bs()[n] {
            denom += hn.dot(beams.w(cfg, UserId { b: n, k: l })).norm_sqr();
        }
    }
    Ok(sig / denom)
}

/// `sum alpha_{b,k} log2(1 + sinr_{b,k})` in bits/s/Hz.
pub fn weighted_sum_rate<T: Real>(
    channels: &ChannelSet<T>,
    beams: &BeamformerSet<T>,
    cfg: &NetworkConfig<T>,
) -> Result<T, ModelError> {
    let mut acc = T::zero();
    for user in cfg.users() {
        let g = sinr(channels, beams, cfg, user)?;
        acc += cfg.weight(user) * (T::one() + g).log2();
    }
    Ok(acc)
}

/// i.i.d. circularly symmetric complex Gaussian channels, unit variance per
/// complex entry, reproducible for a fixed seed.
pub fn generate_channels<T: Real>(cfg: &NetworkConfig<T>, seed: u64) -> ChannelSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = fr::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let mut h = Vec::with_capacity(cfg.num_bs());
    for _n in 0..cfg.num_bs() {
        let mut row = Vec::with_capacity(cfg.num_users());
        for _u in 0..cfg.num_users() {
            let v = DVector::from_fn(cfg.num_antennas(), |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C::new(fr::<T>(re) * scale, fr::<T>(im) * scale)
            });
            row.push(v);
        }
        h.push(row);
    }
    ChannelSet::new(h)
}

/// Zero-forcing baseline: each beamformer lies in the null space of every
/// other user's nominal channel from the serving BS (both cells' users),
/// scaled to an equal per-user split of the BS power budget.
pub fn zero_forcing_beamformers<T: Real>(
    channels: &ChannelSet<T>,
    cfg: &NetworkConfig<T>,
) -> Result<BeamformerSet<T>, ModelError> {
    channels.check_dims(cfg)?;
    let t = cfg.num_antennas();
    let total = cfg.num_users();
    if total - 1 >= t {
        return Err(ModelError::ZfInfeasible {
            bs: 0,
            reason: format!("{} nulling constraints with {t} antennas", total - 1),
        });
    }
    let users = cfg.users();
    let mut out = BeamformerSet::zeros(cfg);
    for &user in &users {
        // channels from the serving BS to every *other* user
        let rows: Vec<&DVector<C<T>>> = users
            .iter()
            .filter(|&&u| u != user)
            .map(|&u| channels.h(user.b, cfg, u))
            .collect();
        let own = channels.h(user.b, cfg, user);
        let mf = own.map(|x| x.conj());
        let dir = if rows.is_empty() {
            mf.clone()
        } else {
            let c = DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]);
            let pinv = c
                .clone()
                .svd(true, true)
                .pseudo_inverse(fr::<T>(1e-12))
                .map_err(|e| ModelError::ZfInfeasible { bs: user.b, reason: e.to_string() })?;
            &mf - pinv * (c * &mf)
        };
        let norm = dir.norm();
        if norm <= fr::<T>(1e-9) * own.norm().max(T::one()) {
            return Err(ModelError::ZfInfeasible {
                bs: user.b,
                reason: "projected direction vanished".into(),
            });
        }
        let kb = fr::<T>(cfg.users_per_bs()[user.b] as f64);
        let scale = (cfg.power(user.b) / kb).sqrt() / norm;
        out.set(cfg, user, dir * C::new(scale, T::zero()));
    }
    Ok(out)
}
