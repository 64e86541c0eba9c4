//! Weighted sum rate maximization for the multicell MISO downlink, with and
//! without ellipsoidal channel uncertainty.
//!
//! The crate provides:
//!
//! - a system model (channels, beamformers, SINR, rates, zero-forcing
//!   baseline) in [`model`],
//! - uncertainty sets formed by intersections of ellipsoids in
//!   [`uncertainty`],
//! - a cone-program IR and the reformulation transforms in [`conic`],
//! - a dense interior-point solver for {equality, nonneg, SOC, PSD} cones in
//!   [`solver`],
//! - the sequential convex approximation for perfect channel knowledge in
//!   [`sca`], and its two worst-case robust counterparts in [`robust_first`]
//!   and [`robust_second`],
//! - extremal-ellipsoid machinery (inscribed max-volume ellipsoids, LFJ
//!   inflation) in [`ellipsoid_approx`],
//! - the Monte-Carlo worst-case evaluation harness in [`evaluation`].
//!
//! All numerical code is generic over the working precision through
//! [`scalar::Real`]; the aliases below fix `f64`, which is what the CLI and
//! the test-suite use.

pub use nalgebra;
pub use rand;
pub use rand_chacha;

pub mod conic;
pub mod evaluation;
pub mod ellipsoid_approx;
pub(crate) mod linalg;
pub mod model;
pub mod robust_first;
pub mod robust_second;
pub mod sca;
pub mod scalar;
pub mod solver;
pub mod uncertainty;

/// Complex number at the default precision.
pub type C64 = scalar::C<f64>;
pub type NetworkConfig64 = model::NetworkConfig<f64>;
pub type ChannelSet64 = model::ChannelSet<f64>;
pub type BeamformerSet64 = model::BeamformerSet<f64>;
pub type UncertaintySet64 = uncertainty::UncertaintySet<f64>;
pub type UncertaintyMap64 = uncertainty::UncertaintyMap<f64>;
pub type Ellipsoid64 = uncertainty::Ellipsoid<f64>;
pub type ConicProgram64 = conic::ConicProgram<f64>;
pub type Solution64 = solver::Solution<f64>;
pub type SolverOptions64 = solver::SolverOptions<f64>;
pub type ScaOptions64 = sca::ScaOptions<f64>;
