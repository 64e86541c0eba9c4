//! Channel-error uncertainty sets: intersections of ellipsoids
//! `{delta : delta P^q delta^H <= rho, q = 1..Q}` with box, polyhedral and
//! single-ellipsoid specializations, membership testing and sampling.

use crate::linalg::{hermitian_defect, hermitian_fn, hermitian_sqrt, min_eig_hermitian, quad_form};
use crate::scalar::{fr, Real, C};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape matrix {index} is not Hermitian PSD (defect {defect})")]
    NotPsd { index: usize, defect: f64 },
    #[error("unbounded set: the shape matrices do not sum to a positive definite matrix")]
    Unbounded,
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate (flat) ellipsoid")]
    Flat,
}

const PSD_TOL: f64 = 1e-9;
const MEMBERSHIP_TOL: f64 = 1e-9;

/// Intersection of `Q` ellipsoids sharing one radius `rho`.
#[derive(Clone, Debug)]
pub struct UncertaintySet<T: Real> {
    p_mats: Vec<DMatrix<C<T>>>,
    rho: T,
}

impl<T: Real> UncertaintySet<T> {
    pub fn new(p_mats: Vec<DMatrix<C<T>>>, rho: T) -> Result<Self, UncertaintyError> {
        if !(rho > T::zero()) {
            return Err(UncertaintyError::InvalidParameter("rho must be positive".into()));
        }
        if p_mats.is_empty() {
            return Err(UncertaintyError::InvalidParameter("need at least one ellipsoid".into()));
        }
        let dim = p_mats[0].nrows();
        let mut sum = DMatrix::<C<T>>::zeros(dim, dim);
        for (q, p) in p_mats.iter().enumerate() {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(UncertaintyError::DimensionMismatch {
                    expected: dim,
                    got: p.nrows(),
                });
            }
            let scale = p.norm().max(T::one());
            let defect = hermitian_defect(p);
            if defect > fr::<T>(PSD_TOL) * scale || min_eig_hermitian(p) < fr::<T>(-PSD_TOL) * scale {
                return Err(UncertaintyError::NotPsd {
                    index: q,
                    defect: defect.to_f64().unwrap_or(f64::NAN),
                });
            }
            sum += p;
        }
        if min_eig_hermitian(&sum) <= fr::<T>(PSD_TOL) * sum.norm().max(T::one()) * fr(1e-3) {
            return Err(UncertaintyError::Unbounded);
        }
        Ok(UncertaintySet { p_mats, rho })
    }

    pub fn dim(&self) -> usize {
        self.p_mats[0].nrows()
    }

    pub fn num_ellipsoids(&self) -> usize {
        self.p_mats.len()
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn shape(&self, q: usize) -> &DMatrix<C<T>> {
        &self.p_mats[q]
    }

    /// Returns a copy with the radius replaced.
    pub fn with_rho(&self, rho: T) -> Result<Self, UncertaintyError> {
        UncertaintySet::new(self.p_mats.clone(), rho)
    }

    /// Normalized shape matrices `Z^q = P^q / rho`, so the set becomes
    /// `{delta : delta Z^q delta^H <= 1}`.
    pub fn normalized_shapes(&self) -> Vec<DMatrix<C<T>>> {
        let inv = C::new(T::one() / self.rho, T::zero());
        self.p_mats.iter().map(|p| p * inv).collect()
    }

    /// Radius of a ball guaranteed to contain the set:
    /// `sum_q delta P^q delta^H <= Q rho` bounds `||delta||`.
    pub fn bounding_radius(&self) -> T {
        let dim = self.dim();
        let mut sum = DMatrix::<C<T>>::zeros(dim, dim);
        for p in &self.p_mats {
            sum += p;
        }
        let lmin = min_eig_hermitian(&sum).max(fr(1e-300));
        (fr::<T>(self.p_mats.len() as f64) * self.rho / lmin).sqrt()
    }
}

/// Membership outcome with per-ellipsoid slack `rho - delta P^q delta^H`.
#[derive(Clone, Debug)]
pub struct MembershipReport<T: Real> {
    pub inside: bool,
    pub slacks: Vec<T>,
}

/// Tests `delta P^q delta^H <= rho (1 + tol)` for every `q` and reports the
/// slacks.
pub fn membership<T: Real>(
    set: &UncertaintySet<T>,
    delta: &DVector<C<T>>,
) -> Result<MembershipReport<T>, UncertaintyError> {
    if delta.len() != set.dim() {
        return Err(UncertaintyError::DimensionMismatch { expected: set.dim(), got: delta.len() });
    }
    let tol = set.rho * fr(MEMBERSHIP_TOL);
    let mut inside = true;
    let mut slacks = Vec::with_capacity(set.num_ellipsoids());
    for p in &set.p_mats {
        let v = quad_form(p, delta);
        slacks.push(set.rho - v);
        if v > set.rho + tol {
            inside = false;
        }
    }
    Ok(MembershipReport { inside, slacks })
}

/// Box set `|[delta]_q| <= sqrt(rho / theta_q)`: one rank-one ellipsoid per
/// coordinate.
pub fn make_box<T: Real>(
    dim: usize,
    rho: T,
    theta: Option<Vec<T>>,
) -> Result<UncertaintySet<T>, UncertaintyError> {
    if dim == 0 {
        return Err(UncertaintyError::InvalidParameter("dimension must be positive".into()));
    }
    let theta = theta.unwrap_or_else(|| vec![T::one(); dim]);
    if theta.len() != dim {
        return Err(UncertaintyError::DimensionMismatch { expected: dim, got: theta.len() });
    }
    if theta.iter().any(|t| !(*t > T::zero())) {
        return Err(UncertaintyError::InvalidParameter("theta must be positive".into()));
    }
    let mats = (0..dim)
        .map(|q| {
            let mut p = DMatrix::<C<T>>::zeros(dim, dim);
            p[(q, q)] = C::new(theta[q], T::zero());
            p
        })
        .collect();
    UncertaintySet::new(mats, rho)
}

/// Polyhedral set `|<delta, xi^q>| <= sqrt(rho)` from rank-one outer
/// products; the collection must span the space or the set is unbounded.
pub fn make_polyhedral<T: Real>(
    xi: Vec<DVector<C<T>>>,
    rho: T,
) -> Result<UncertaintySet<T>, UncertaintyError> {
    if xi.is_empty() {
        return Err(UncertaintyError::InvalidParameter("need at least one direction".into()));
    }
    if xi.iter().any(|v| v.norm() == T::zero()) {
        return Err(UncertaintyError::InvalidParameter("directions must be nonzero".into()));
    }
    let mats: Vec<DMatrix<C<T>>> = xi
        .iter()
        .map(|v| {
            let col = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
            &col * col.adjoint()
        })
        .collect();
    UncertaintySet::new(mats, rho)
}

/// Sampling mode for [`sample`]: uniform over the set, or rescaled onto the
/// boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Interior,
    BoundaryBiased,
}

const MAX_PROPOSALS: usize = 1_000_000;

/// Draws `n` error vectors from the set by rejection sampling inside the
/// bounding ball; in boundary-biased mode each accepted draw is rescaled to
/// the largest feasible multiple.
pub fn sample<T: Real>(
    set: &UncertaintySet<T>,
    n: usize,
    rng: &mut impl Rng,
    mode: SampleMode,
) -> Vec<DVector<C<T>>> {
    let dim = set.dim();
    let r_ball = set.bounding_radius();
    let real_dim = 2 * dim;
    let mut out = Vec::with_capacity(n);
    let mut proposals = 0usize;
    while out.len() < n {
        // uniform direction on the complex sphere, radius ~ U^{1/(2T)}
        let mut g = DVector::<C<T>>::from_fn(dim, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C::new(fr::<T>(re), fr::<T>(im))
        });
        let norm = g.norm();
        if norm == T::zero() {
            continue;
        }
        let u: f64 = rng.random();
        let radius = r_ball * fr::<T>(u.powf(1.0 / real_dim as f64));
        g *= C::new(radius / norm, T::zero());

        proposals += 1;
        let accepted = membership(set, &g).map(|r| r.inside).unwrap_or(false);
        if accepted || proposals > MAX_PROPOSALS {
            let delta = if accepted {
                g
            } else {
                // fallback construction: scale the direction onto the set
                let mut worst = T::zero();
                for p in &set.p_mats {
                    worst = worst.max(quad_form(p, &g));
                }
                g * C::new((set.rho / worst.max(fr(1e-300))).sqrt(), T::zero())
            };
            let delta = match mode {
                SampleMode::Interior => delta,
                SampleMode::BoundaryBiased => {
                    let mut worst = T::zero();
                    for p in &set.p_mats {
                        worst = worst.max(quad_form(p, &delta));
                    }
                    if worst > T::zero() {
                        delta * C::new((set.rho / worst).sqrt(), T::zero())
                    } else {
                        delta
                    }
                }
            };
            out.push(delta);
        }
    }
    out
}

/// Full-dimensional ellipsoid `{u E + c : ||u|| <= 1}` over complex row
/// vectors, with the quadratic description
/// `{x : (x - c) Ea (x - c)^H <= 1}`, `Ea = (E^H E)^{-1}`, materialized at
/// construction.
#[derive(Clone, Debug)]
pub struct Ellipsoid<T: Real> {
    generator: DMatrix<C<T>>,
    quadratic: DMatrix<C<T>>,
    center: DVector<C<T>>,
}

impl<T: Real> Ellipsoid<T> {
    /// Builds from the generator form; errors on singular (flat) generators.
    pub fn from_generator(
        generator: DMatrix<C<T>>,
        center: DVector<C<T>>,
    ) -> Result<Self, UncertaintyError> {
        let gram = generator.adjoint() * &generator;
        let lmin = min_eig_hermitian(&gram);
        if lmin <= fr::<T>(1e-14) * gram.norm().max(T::one()) {
            return Err(UncertaintyError::Flat);
        }
        let quadratic = hermitian_fn(&gram, |x| T::one() / x);
        Ok(Ellipsoid { generator, quadratic, center })
    }

    /// Builds from the quadratic form (Hermitian positive definite).
    pub fn from_quadratic(
        quadratic: DMatrix<C<T>>,
        center: DVector<C<T>>,
    ) -> Result<Self, UncertaintyError> {
        if hermitian_defect(&quadratic) > fr::<T>(PSD_TOL) * quadratic.norm().max(T::one()) {
            return Err(UncertaintyError::NotPsd { index: 0, defect: f64::NAN });
        }
        if min_eig_hermitian(&quadratic) <= T::zero() {
            return Err(UncertaintyError::Flat);
        }
        let generator = hermitian_fn(&quadratic, |x| T::one() / x.sqrt());
        Ok(Ellipsoid { generator, quadratic, center })
    }

    /// Unit ball of the given dimension.
    pub fn unit_ball(dim: usize) -> Self {
        Ellipsoid {
            generator: DMatrix::identity(dim, dim),
            quadratic: DMatrix::identity(dim, dim),
            center: DVector::zeros(dim),
        }
    }

    /// Centered ball of the given radius.
    pub fn ball(radius: T, dim: usize) -> Self {
        let g = DMatrix::identity(dim, dim) * C::new(radius, T::zero());
        let q = DMatrix::identity(dim, dim) * C::new(T::one() / (radius * radius), T::zero());
        Ellipsoid { generator: g, quadratic: q, center: DVector::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn generator(&self) -> &DMatrix<C<T>> {
        &self.generator
    }

    /// Quadratic-form matrix `Ea = (E^H E)^{-1}`.
    pub fn quadratic(&self) -> &DMatrix<C<T>> {
        &self.quadratic
    }

    pub fn center(&self) -> &DVector<C<T>> {
        &self.center
    }

    pub fn contains(&self, x: &DVector<C<T>>) -> bool {
        let d = x - &self.center;
        quad_form(&self.quadratic, &d) <= T::one() + fr(1e-9)
    }

    /// Scales the generator about the center (used for LFJ inflation).
    pub fn scaled(&self, factor: T) -> Self {
        let c = C::new(factor, T::zero());
        let inv = C::new(T::one() / (factor * factor), T::zero());
        Ellipsoid {
            generator: &self.generator * c,
            quadratic: &self.quadratic * inv,
            center: self.center.clone(),
        }
    }

    /// A point `u E + c` of the ellipsoid for a row vector `u`.
    pub fn point(&self, u: &DVector<C<T>>) -> DVector<C<T>> {
        (self.generator.transpose() * u) + &self.center
    }

    /// Hermitian square root of the quadratic form (the `Z-hat` factor used
    /// by robust signal constraints over a single ellipsoid).
    pub fn quadratic_sqrt(&self) -> DMatrix<C<T>> {
        hermitian_sqrt(&self.quadratic)
    }
}

/// A single-ellipsoid uncertainty set as an [`Ellipsoid`] (valid when
/// `Q = 1`).
pub fn single_ellipsoid<T: Real>(set: &UncertaintySet<T>) -> Result<Ellipsoid<T>, UncertaintyError> {
    if set.num_ellipsoids() != 1 {
        return Err(UncertaintyError::InvalidParameter(format!(
            "set has {} ellipsoids",
            set.num_ellipsoids()
        )));
    }
    let q = &set.normalized_shapes()[0];
    Ellipsoid::from_quadratic(q.clone(), DVector::zeros(set.dim()))
}

/// Uncertainty sets per channel link, indexed by (source BS, flat user
/// index). `None` marks a link whose channel is known exactly.
#[derive(Clone, Debug)]
pub struct UncertaintyMap<T: Real> {
    sets: Vec<Vec<Option<UncertaintySet<T>>>>,
}

impl<T: Real> UncertaintyMap<T> {
    /// The same set on every link.
    pub fn uniform(num_bs: usize, num_users: usize, set: UncertaintySet<T>) -> Self {
        UncertaintyMap { sets: vec![vec![Some(set); num_users]; num_bs] }
    }

    /// Every link known exactly (no uncertainty anywhere).
    pub fn certain(num_bs: usize, num_users: usize) -> Self {
        UncertaintyMap { sets: vec![vec![None; num_users]; num_bs] }
    }

    pub fn get(&self, source_bs: usize, user_flat: usize) -> Option<&UncertaintySet<T>> {
        self.sets[source_bs][user_flat].as_ref()
    }

    pub fn set_link(&mut self, source_bs: usize, user_flat: usize, set: Option<UncertaintySet<T>>) {
        self.sets[source_bs][user_flat] = set;
    }

    pub fn num_bs(&self) -> usize {
        self.sets.len()
    }

    pub fn num_users(&self) -> usize {
        self.sets.first().map_or(0, |row| row.len())
    }

    /// Largest bounding-ball radius over all uncertain links.
    pub fn max_bounding_radius(&self) -> T {
        let mut r = T::zero();
        for row in &self.sets {
            for s in row.iter().flatten() {
                r = r.max(s.bounding_radius());
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cc(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn box_membership_boundary() {
        let set = make_box::<f64>(2, 1.0, None).unwrap();
        let on = DVector::from_vec(vec![cc(1.0, 0.0), cc(0.0, 0.0)]);
        assert!(membership(&set, &on).unwrap().inside);
        let out = DVector::from_vec(vec![cc(1.01, 0.0), cc(0.0, 0.0)]);
        assert!(!membership(&set, &out).unwrap().inside);
    }

    #[test]
    fn box_half_widths() {
        // rho = 0.04 -> half-width 0.2; theta = 4, rho = 1 -> half-width 0.5
        let set = make_box::<f64>(4, 0.04, None).unwrap();
        let inside = DVector::from_vec(vec![cc(0.2, 0.0), cc(0.0, 0.0), cc(0.0, 0.0), cc(0.0, 0.0)]);
        assert!(membership(&set, &inside).unwrap().inside);
        let outside =
            DVector::from_vec(vec![cc(0.201, 0.0), cc(0.0, 0.0), cc(0.0, 0.0), cc(0.0, 0.0)]);
        assert!(!membership(&set, &outside).unwrap().inside);

        let set2 = make_box::<f64>(1, 1.0, Some(vec![4.0])).unwrap();
        assert!(membership(&set2, &DVector::from_vec(vec![cc(0.5, 0.0)])).unwrap().inside);
        assert!(!membership(&set2, &DVector::from_vec(vec![cc(0.51, 0.0)])).unwrap().inside);
    }

    #[test]
    fn polyhedral_unit_directions_equal_box() {
        let xi = vec![
            DVector::from_vec(vec![cc(1.0, 0.0), cc(0.0, 0.0)]),
            DVector::from_vec(vec![cc(0.0, 0.0), cc(1.0, 0.0)]),
        ];
        let poly = make_polyhedral(xi, 1.0).unwrap();
        let boxs = make_box::<f64>(2, 1.0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let d = DVector::from_fn(2, |_, _| {
                cc(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))
            });
            assert_eq!(
                membership(&poly, &d).unwrap().inside,
                membership(&boxs, &d).unwrap().inside
            );
        }
    }

    #[test]
    fn polyhedral_rank_deficient_is_rejected() {
        let xi = vec![DVector::from_vec(vec![cc(1.0, 0.0), cc(0.0, 0.0)])];
        assert!(matches!(make_polyhedral(xi, 1.0), Err(UncertaintyError::Unbounded)));
    }

    #[test]
    fn polyhedral_membership_matches_per_direction_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = 3;
        let xi: Vec<DVector<C<f64>>> = (0..4)
            .map(|_| {
                DVector::from_fn(dim, |_, _| {
                    cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        let rho = 0.5;
        let set = make_polyhedral(xi.clone(), rho).unwrap();
        for _ in 0..2000 {
            let d = DVector::from_fn(dim, |_, _| {
                cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let direct = xi.iter().all(|x| d.dot(x).norm_sqr() <= rho * (1.0 + 1e-9));
            assert_eq!(membership(&set, &d).unwrap().inside, direct);
        }
    }

    #[test]
    fn zero_vector_is_always_inside() {
        let set = make_box::<f64>(3, 0.3, None).unwrap();
        assert!(membership(&set, &DVector::zeros(3)).unwrap().inside);
    }

    proptest::proptest! {
        /// Scaling relation: membership in the set with radius 4 rho at
        /// 2 delta matches membership at (rho, delta).
        #[test]
        fn membership_scaling_relation(
            re in proptest::collection::vec(-0.8f64..0.8, 3),
            im in proptest::collection::vec(-0.8f64..0.8, 3),
        ) {
            let set = make_box::<f64>(3, 0.2, None).unwrap();
            let set4 = set.with_rho(0.8).unwrap();
            let d = DVector::from_fn(3, |i, _| cc(re[i], im[i]));
            let two = &d * cc(2.0, 0.0);
            proptest::prop_assert_eq!(
                membership(&set, &d).unwrap().inside,
                membership(&set4, &two).unwrap().inside
            );
        }
    }

    #[test]
    fn q1_set_equals_ellipsoid_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 3;
        let a = DMatrix::<C<f64>>::from_fn(dim, dim, |_, _| {
            cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let p = &a * a.adjoint() + DMatrix::identity(dim, dim) * cc(0.4, 0.0);
        let rho = 0.7;
        let set = UncertaintySet::new(vec![p], rho).unwrap();
        let ell = single_ellipsoid(&set).unwrap();
        for _ in 0..2000 {
            let d = DVector::from_fn(dim, |_, _| {
                cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let m1 = membership(&set, &d).unwrap().inside;
            // ellipsoid membership with an exact-boundary check at 1e-12
            let q = quad_form(ell.quadratic(), &d);
            let m2 = q <= 1.0 + 1e-9;
            if (q - 1.0).abs() > 1e-12 {
                assert_eq!(m1, m2);
            }
        }
    }

    #[test]
    fn samples_all_pass_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = make_box::<f64>(4, 0.1, None).unwrap();
        for mode in [SampleMode::Interior, SampleMode::BoundaryBiased] {
            let draws = sample(&set, 500, &mut rng, mode);
            for d in &draws {
                assert!(membership(&set, d).unwrap().inside);
            }
        }
    }

    #[test]
    fn boundary_biased_on_unit_ball_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let set =
            UncertaintySet::new(vec![DMatrix::<C<f64>>::identity(3, 3)], 1.0).unwrap();
        let draws = sample(&set, 500, &mut rng, SampleMode::BoundaryBiased);
        for d in &draws {
            let norm = d.norm();
            assert!((0.999..=1.0 + 1e-12).contains(&norm), "norm {norm}");
        }
    }

    #[test]
    fn interior_sampling_covers_the_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = make_box::<f64>(2, 1.0, None).unwrap();
        let draws = sample(&set, 10_000, &mut rng, SampleMode::Interior);
        for coord in 0..2 {
            let max_abs = draws.iter().map(|d| d[coord].norm_sqr().sqrt()).fold(0.0, f64::max);
            assert!(max_abs >= 0.99, "coordinate {coord} max {max_abs}");
        }
    }

    #[test]
    fn ellipsoid_form_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 3;
        let a = DMatrix::<C<f64>>::from_fn(dim, dim, |_, _| {
            cc(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let q = &a * a.adjoint() + DMatrix::identity(dim, dim) * cc(0.5, 0.0);
        let c0 = DVector::from_fn(dim, |_, _| cc(rng.random_range(-0.5..0.5), 0.0));
        let e = Ellipsoid::from_quadratic(q.clone(), c0.clone()).unwrap();
        let back = Ellipsoid::from_generator(e.generator().clone(), c0).unwrap();
        assert!((back.quadratic() - &q).norm() < 1e-10 * q.norm());
        // membership agreement between the two descriptions
        for _ in 0..2000 {
            let d = DVector::from_fn(dim, |_, _| {
                cc(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
            });
            assert_eq!(e.contains(&d), back.contains(&d));
        }
    }

    #[test]
    fn generator_e_2i_gives_quarter_quadratic() {
        let g = DMatrix::<C<f64>>::identity(2, 2) * cc(2.0, 0.0);
        let e = Ellipsoid::from_generator(g, DVector::zeros(2)).unwrap();
        assert!((e.quadratic() - DMatrix::identity(2, 2) * cc(0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn flat_generator_is_rejected() {
        let mut g = DMatrix::<C<f64>>::identity(2, 2);
        g[(1, 1)] = cc(0.0, 0.0);
        assert!(matches!(
            Ellipsoid::from_generator(g, DVector::zeros(2)),
            Err(UncertaintyError::Flat)
        ));
    }
}
