//! Realizability of moment vectors: explicit characterizations for the
//! second-order differentiable mixed basis, first-order mixed and full
//! bases, the half-moment helper conditions, a constructive two-Dirac
//! representing measure, isotropic regularization, and sampling of interior
//! moment vectors.
//!
//! All margins are computed on normalized moments `phi = u / u0`, so a
//! verdict does not change when the vector is scaled by a positive constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{AngularBasis, BasisKind, Quadrature, Support};
use crate::closure::{EntropyClosure, Multipliers};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub basis: AngularBasis,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: AngularBasis, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::Domain(format!(
                "{basis} expects {} moments, got {}",
                basis.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite moment {v}")));
        }
        Ok(Self { basis, values })
    }

    /// Moments of the isotropic distribution with density `rho`.
    pub fn isotropic(basis: AngularBasis, rho: f64) -> Self {
        let values = basis.isotropic_moments().into_iter().map(|b| 0.5 * rho * b).collect();
        Self { basis, values }
    }

    pub fn density(&self) -> f64 {
        self.values[0]
    }

    pub fn normalized(&self) -> NormalizedMoments {
        let rho = self.density();
        NormalizedMoments {
            basis: self.basis,
            values: self.values[1..].iter().map(|v| v / rho).collect(),
        }
    }

    pub fn from_normalized(rho: f64, phi: &NormalizedMoments) -> Self {
        let mut values = Vec::with_capacity(phi.values.len() + 1);
        values.push(rho);
        values.extend(phi.values.iter().map(|p| rho * p));
        Self { basis: phi.basis, values }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { basis: self.basis, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn mirrored(&self) -> Self {
        Self { basis: self.basis, values: self.basis.mirror(&self.values) }
    }
}

/// `u_k / u_0` for `k = 1..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedMoments {
    pub basis: AngularBasis,
    pub values: Vec<f64>,
}

impl NormalizedMoments {
    pub fn isotropic(basis: AngularBasis) -> Self {
        let iso = basis.isotropic_moments();
        Self { basis, values: iso[1..].iter().map(|b| b / iso[0]).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealizabilityVerdict {
    pub realizable: bool,
    /// Smallest signed slack over all defining inequalities, on normalized
    /// moments; negative means violated.
    pub margin: f64,
}

impl RealizabilityVerdict {
    fn from_margin(margin: f64, tol: f64) -> Self {
        Self { realizable: margin >= -tol, margin }
    }
}

/// Two weighted Diracs, one per half-interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiracPair {
    /// `(mu_plus, mu_minus)` with `mu_plus` in `[0, 1]`, `mu_minus` in `[-1, 0]`.
    pub positions: (f64, f64),
    pub weights: (f64, f64),
}

impl DiracPair {
    /// `(u0, u1, u2+, u2-)` of the measure.
    pub fn dmm2_moments(&self) -> [f64; 4] {
        let (xp, xm) = self.positions;
        let (wp, wm) = self.weights;
        [wp + wm, wp * xp + wm * xm, wp * xp * xp, wm * xm * xm]
    }
}

/// Checks realizability of `u`. Supported: differentiable mixed of order 2,
/// mixed of order 1 and full monomial of order 1. Anything else is an
/// [`Error::Unsupported`].
pub fn check(u: &MomentVector, tol: f64) -> Result<RealizabilityVerdict> {
    let basis = u.basis;
    let margin = match (basis.kind(), basis.order()) {
        (BasisKind::DiffMixed, 2) => density_guard(&u.values).unwrap_or_else(|| {
            let phi = u.normalized().values;
            dmm2_margin(phi[0], phi[1], phi[2])
        }),
        (BasisKind::Mixed, 1) => density_guard(&u.values).unwrap_or_else(|| {
            let phi = u.normalized().values;
            let (p, m) = (phi[0], phi[1]);
            p.min(-m).min(1.0 - p + m)
        }),
        (BasisKind::FullMonomial, 1) => density_guard(&u.values).unwrap_or_else(|| {
            let phi = u.normalized().values;
            1.0 - phi[0].abs()
        }),
        _ => {
            return Err(Error::Unsupported(format!(
                "no explicit realizability characterization for {basis}"
            )))
        }
    };
    Ok(RealizabilityVerdict::from_margin(margin, tol))
}

/// Whether the basis has an explicit characterization in [`check`].
pub fn has_explicit_check(basis: AngularBasis) -> bool {
    matches!(
        (basis.kind(), basis.order()),
        (BasisKind::DiffMixed, 2) | (BasisKind::Mixed, 1) | (BasisKind::FullMonomial, 1)
    )
}

fn density_guard(values: &[f64]) -> Option<f64> {
    if values.iter().any(|v| !v.is_finite()) || values[0] <= 0.0 {
        Some(f64::NEG_INFINITY)
    } else {
        None
    }
}

fn dmm2_margin(phi1: f64, phi2p: f64, phi2m: f64) -> f64 {
    let mut margin = phi2p.min(phi2m);
    if phi2p > 1.0 || phi2m > 1.0 {
        return margin.min(1.0 - phi2p).min(1.0 - phi2m);
    }
    let lower = phi2p - (phi2m.max(0.0) * (1.0 - phi2p)).sqrt();
    let upper = (phi2p.max(0.0) * (1.0 - phi2m)).sqrt() - phi2m;
    margin = margin.min(phi1 - lower).min(upper - phi1);
    margin
}

/// Second-order half-moment conditions on one half-interval:
/// `u0 >= s u1 >= u2 >= 0` and `u0 u2 >= u1^2`, with `s = +1` on the
/// positive half and `s = -1` on the negative one. `u2` is the raw `mu^2`
/// moment over the half.
pub fn check_half_moments(
    u0: f64,
    u1: f64,
    u2: f64,
    side: Support,
    tol: f64,
) -> Result<RealizabilityVerdict> {
    let s = match side {
        Support::Plus => 1.0,
        Support::Minus => -1.0,
        Support::Full => {
            return Err(Error::Unsupported("half-moment check needs a half-interval".into()))
        }
    };
    if ![u0, u1, u2].iter().all(|v| v.is_finite()) || u0 < 0.0 {
        return Ok(RealizabilityVerdict::from_margin(f64::NEG_INFINITY, tol));
    }
    if u0 == 0.0 {
        // only the zero measure lives here
        let margin = if u1 == 0.0 && u2 == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        return Ok(RealizabilityVerdict::from_margin(margin, tol));
    }
    let (p1, p2) = (u1 / u0, u2 / u0);
    let margin = (1.0 - s * p1).min(s * p1 - p2).min(p2).min(p2 - p1 * p1);
    Ok(RealizabilityVerdict::from_margin(margin, tol))
}

/// Admissible interval for `phi1` given the normalized second half moments.
pub fn phi1_bounds(phi2p: f64, phi2m: f64) -> Result<(f64, f64)> {
    const SLACK: f64 = 1e-12;
    let in_unit = |x: f64| (-SLACK..=1.0 + SLACK).contains(&x);
    if !in_unit(phi2p) || !in_unit(phi2m) || phi2p + phi2m > 1.0 + SLACK {
        return Err(Error::Domain(format!(
            "empty phi1 interval for (phi2+, phi2-) = ({phi2p}, {phi2m})"
        )));
    }
    let (p, m) = (phi2p.clamp(0.0, 1.0), phi2m.clamp(0.0, 1.0));
    let lower = p - (m * (1.0 - p)).max(0.0).sqrt();
    let upper = (p * (1.0 - m)).max(0.0).sqrt() - m;
    Ok((lower, upper.max(lower)))
}

/// Non-negative two-Dirac measure reproducing `(u0, u1, u2+, u2-)`.
pub fn representing_measure_dmm2(u: &MomentVector) -> Result<DiracPair> {
    if u.basis != AngularBasis::dmm2() {
        return Err(Error::Unsupported(format!("two-Dirac construction needs DMM2, got {}", u.basis)));
    }
    let verdict = check(u, DEFAULT_TOLERANCE)?;
    if !verdict.realizable {
        return Err(Error::Precondition(format!(
            "moment vector {:?} is not realizable (margin {:e})",
            u.values, verdict.margin
        )));
    }
    let rho = u.density();
    let phi = u.normalized().values;
    let (phi1, phi2p, phi2m) = (phi[0], phi[1].max(0.0), phi[2].max(0.0));

    let (phi1p, phi1m) = match (phi2p > 0.0, phi2m > 0.0) {
        (false, false) => (0.0, 0.0),
        // one half carries no second moment: that side collapses onto mu = 0
        (true, false) => (phi1, 0.0),
        (false, true) => (0.0, phi1),
        (true, true) => {
            let radicand = ((phi2m + phi2p - phi1 * phi1) / (phi2m * phi2p)).max(0.0);
            let root = radicand.sqrt();
            let sum = phi2m + phi2p;
            (phi2p * (phi1 + phi2m * root) / sum, phi2m * (phi1 - phi2p * root) / sum)
        }
    };

    let side = |phi1h: f64, phi2h: f64, lo: f64, hi: f64| -> (f64, f64) {
        if phi2h > 0.0 && phi1h != 0.0 {
            ((phi2h / phi1h).clamp(lo, hi), rho * phi1h * phi1h / phi2h)
        } else {
            (0.0, 0.0)
        }
    };
    let (xp, wp) = side(phi1p, phi2p, 0.0, 1.0);
    let (xm, mut wm) = side(phi1m, phi2m, -1.0, 0.0);
    if phi2m == 0.0 {
        // remaining density sits at the junction
        wm = (rho - wp).max(0.0);
    }
    let mut wp = wp;
    if phi2p == 0.0 {
        wp = (rho - wm).max(0.0);
    }
    Ok(DiracPair { positions: (xp, xm), weights: (wp, wm) })
}

/// Affine blend `(1 - r) phi + r phi_iso` towards the isotropic point.
pub fn regularize(phi: &NormalizedMoments, r: f64) -> Result<NormalizedMoments> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("regularization parameter {r} outside [0, 1]")));
    }
    if r == 0.0 {
        return Ok(phi.clone());
    }
    let iso = NormalizedMoments::isotropic(phi.basis);
    let values = phi.values.iter().zip(&iso.values).map(|(p, i)| (1.0 - r) * p + r * i).collect();
    Ok(NormalizedMoments { basis: phi.basis, values })
}

/// Regularizes a full moment vector at fixed density.
pub fn regularize_moments(u: &MomentVector, r: f64) -> Result<MomentVector> {
    if r == 0.0 {
        return Ok(u.clone());
    }
    let phi = regularize(&u.normalized(), r)?;
    Ok(MomentVector::from_normalized(u.density(), &phi))
}

/// `count` interior moment vectors, each the quadrature moments of
/// `exp(b^T alpha)` with every multiplier uniform in `[-4, 4]`.
pub fn sample_realizable(seed: u64, count: usize, basis: AngularBasis) -> Vec<MomentVector> {
    let closure = EntropyClosure::new(basis, Quadrature::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let alpha = Multipliers((0..basis.len()).map(|_| rng.random_range(-4.0..=4.0)).collect());
            closure.moments(&alpha).expect("bounded multipliers cannot overflow")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dmm2(values: [f64; 4]) -> MomentVector {
        MomentVector::new(AngularBasis::dmm2(), values.to_vec()).unwrap()
    }

    #[test]
    fn check_examples() {
        let iso = check(&dmm2([1.0, 0.0, 1.0 / 6.0, 1.0 / 6.0]), DEFAULT_TOLERANCE).unwrap();
        assert!(iso.realizable && iso.margin > 0.0);

        let bad = check(&dmm2([1.0, 0.9, 0.2, 0.2]), DEFAULT_TOLERANCE).unwrap();
        assert!(!bad.realizable);
        assert!((bad.margin - (0.2 - 0.9)).abs() < 1e-15);

        let corner = check(&dmm2([1.0, 1.0, 1.0, 0.0]), DEFAULT_TOLERANCE).unwrap();
        assert!(corner.realizable);
        assert_eq!(corner.margin, 0.0);
    }

    #[test]
    fn check_rejects_nonpositive_density() {
        let v = check(&dmm2([0.0, 0.0, 0.0, 0.0]), DEFAULT_TOLERANCE).unwrap();
        assert!(!v.realizable);
        let v = check(&dmm2([-1.0, 0.0, 0.1, 0.1]), DEFAULT_TOLERANCE).unwrap();
        assert!(!v.realizable);
    }

    #[test]
    fn check_unsupported_is_an_error() {
        for (kind, order) in [(BasisKind::Mixed, 2), (BasisKind::FullMonomial, 2), (BasisKind::DiffMixed, 3)] {
            let b = AngularBasis::new(kind, order).unwrap();
            let u = MomentVector::isotropic(b, 1.0);
            assert!(matches!(check(&u, DEFAULT_TOLERANCE), Err(Error::Unsupported(_))));
        }
    }

    #[test]
    fn first_order_conditions() {
        let mm1 = AngularBasis::new(BasisKind::Mixed, 1).unwrap();
        let ok = MomentVector::new(mm1, vec![1.0, 0.25, -0.25]).unwrap();
        assert!(check(&ok, DEFAULT_TOLERANCE).unwrap().realizable);
        let too_much_flux = MomentVector::new(mm1, vec![1.0, 0.8, 0.3]).unwrap();
        assert!(!check(&too_much_flux, DEFAULT_TOLERANCE).unwrap().realizable);
        let wide = MomentVector::new(mm1, vec![1.0, 0.7, -0.4]).unwrap();
        assert!(!check(&wide, DEFAULT_TOLERANCE).unwrap().realizable);

        let m1 = AngularBasis::new(BasisKind::FullMonomial, 1).unwrap();
        assert!(check(&MomentVector::new(m1, vec![2.0, -2.0]).unwrap(), DEFAULT_TOLERANCE).unwrap().realizable);
        assert!(!check(&MomentVector::new(m1, vec![2.0, 2.1]).unwrap(), DEFAULT_TOLERANCE).unwrap().realizable);
    }

    #[test]
    fn half_moment_helper() {
        // uniform on [0, 1]: (1, 1/2, 1/3)
        let v = check_half_moments(1.0, 0.5, 1.0 / 3.0, Support::Plus, DEFAULT_TOLERANCE).unwrap();
        assert!(v.realizable && v.margin > 0.0);
        let v = check_half_moments(1.0, -0.5, 1.0 / 3.0, Support::Minus, DEFAULT_TOLERANCE).unwrap();
        assert!(v.realizable);
        // wrong sign of the first moment
        assert!(!check_half_moments(1.0, -0.5, 1.0 / 3.0, Support::Plus, DEFAULT_TOLERANCE).unwrap().realizable);
        // Cauchy-Schwarz violated
        assert!(!check_half_moments(1.0, 0.5, 0.2, Support::Plus, DEFAULT_TOLERANCE).unwrap().realizable);
        assert!(check_half_moments(0.0, 0.0, 0.0, Support::Plus, DEFAULT_TOLERANCE).unwrap().realizable);
        assert!(check_half_moments(1.0, 0.0, 0.0, Support::Full, DEFAULT_TOLERANCE).is_err());
    }

    #[test]
    fn bounds_examples() {
        let (lo, hi) = phi1_bounds(1.0 / 6.0, 1.0 / 6.0).unwrap();
        let r5 = 5f64.sqrt();
        assert!((lo - (1.0 - r5) / 6.0).abs() < 1e-15);
        assert!((hi - (r5 - 1.0) / 6.0).abs() < 1e-15);
        assert_eq!(phi1_bounds(1.0, 0.0).unwrap(), (1.0, 1.0));
        assert_eq!(phi1_bounds(0.0, 0.0).unwrap(), (0.0, 0.0));
        assert!(phi1_bounds(0.7, 0.4).is_err());
        assert!(phi1_bounds(-0.1, 0.4).is_err());
        assert!(phi1_bounds(0.3, 1.2).is_err());
    }

    #[test]
    fn bounds_collapse_only_on_cap_or_origin() {
        for i in 0..=50 {
            for j in 0..=(50 - i) {
                let (p, m) = (i as f64 / 50.0, j as f64 / 50.0);
                let (lo, hi) = phi1_bounds(p, m).unwrap();
                assert!(lo <= hi);
                let on_cap = i + j == 50;
                let origin = i == 0 && j == 0;
                if on_cap || origin {
                    assert!((hi - lo).abs() < 1e-12, "({p}, {m})");
                } else {
                    assert!(hi - lo > 1e-6, "({p}, {m}) width {}", hi - lo);
                }
            }
        }
    }

    #[test]
    fn measure_examples() {
        let iso = representing_measure_dmm2(&dmm2([1.0, 0.0, 1.0 / 6.0, 1.0 / 6.0])).unwrap();
        let s3 = 1.0 / 3f64.sqrt();
        assert!((iso.weights.0 - 0.5).abs() < 1e-15 && (iso.weights.1 - 0.5).abs() < 1e-15);
        assert!((iso.positions.0 - s3).abs() < 1e-15 && (iso.positions.1 + s3).abs() < 1e-15);

        let corner = representing_measure_dmm2(&dmm2([1.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(corner.weights, (1.0, 0.0));
        assert_eq!(corner.positions.0, 1.0);

        let scaled = representing_measure_dmm2(&dmm2([2.0, 0.0, 1.0 / 3.0, 1.0 / 3.0])).unwrap();
        assert!((scaled.weights.0 - 1.0).abs() < 1e-15 && (scaled.weights.1 - 1.0).abs() < 1e-15);
        assert!((scaled.positions.0 - s3).abs() < 1e-15);

        let origin = representing_measure_dmm2(&dmm2([3.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(origin.dmm2_moments(), [3.0, 0.0, 0.0, 0.0]);

        assert!(matches!(
            representing_measure_dmm2(&dmm2([1.0, 0.9, 0.2, 0.2])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn measure_one_sided_degeneracy() {
        // phi2- = 0 with phi1 strictly inside [phi2+, sqrt(phi2+)]
        let u = dmm2([1.0, 0.5, 0.3, 0.0]);
        let m = representing_measure_dmm2(&u).unwrap();
        let rep = m.dmm2_moments();
        for k in 0..4 {
            assert!((rep[k] - u.values[k]).abs() < 1e-14, "{rep:?}");
        }
        assert_eq!(m.positions.1, 0.0);
        let mirrored = representing_measure_dmm2(&u.mirrored()).unwrap().dmm2_moments();
        assert!((mirrored[1] + 0.5).abs() < 1e-14 && (mirrored[3] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn regularize_examples() {
        let b = AngularBasis::dmm2();
        let phi = NormalizedMoments { basis: b, values: vec![1.0, 0.0, 0.0] };
        let r1 = regularize(&phi, 1.0).unwrap();
        assert_eq!(r1.values, vec![0.0, 1.0 / 6.0, 1.0 / 6.0]);

        let phi = NormalizedMoments { basis: b, values: vec![0.5, 0.3, 0.1] };
        let r = regularize(&phi, 0.05).unwrap();
        let expected = [0.475, 0.3 * 0.95 + 0.05 / 6.0, 0.1 * 0.95 + 0.05 / 6.0];
        for (a, e) in r.values.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((r.values[1] - 0.2933333333333333).abs() < 1e-15);
        assert_eq!(regularize(&phi, 0.0).unwrap(), phi);
        assert!(regularize(&phi, 1.5).is_err());
        assert!(regularize(&phi, -0.1).is_err());
    }

    #[test]
    fn samples_are_realizable_and_form_a_cone() {
        let samples = sample_realizable(1, 100, AngularBasis::dmm2());
        assert_eq!(samples.len(), 100);
        for u in &samples {
            let v = check(u, DEFAULT_TOLERANCE).unwrap();
            assert!(v.realizable && v.margin > 0.0, "{u:?}");
            assert!(check(&u.scaled(7.5), DEFAULT_TOLERANCE).unwrap().margin > 0.0);
        }
        for pair in samples.windows(2) {
            let sum: Vec<f64> = pair[0].values.iter().zip(&pair[1].values).map(|(a, b)| a + b).collect();
            let v = check(&MomentVector::new(AngularBasis::dmm2(), sum).unwrap(), DEFAULT_TOLERANCE).unwrap();
            assert!(v.realizable);
        }
        assert_eq!(samples, sample_realizable(1, 100, AngularBasis::dmm2()));
        assert_ne!(samples, sample_realizable(2, 100, AngularBasis::dmm2()));
    }
}
