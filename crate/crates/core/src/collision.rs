//! Moment-space collision operators.
//!
//! The Fokker-Planck collision is half the Laplace-Beltrami operator,
//! `C(psi) = 1/2 d/dmu((1 - mu^2) dpsi/dmu)`. Tested against a monomial of
//! degree `l` on a full or half interval it gives, after integrating by
//! parts,
//!
//! ```text
//! <mu^l C psi>    = (l(l-1) u_{l-2}    - l(l+1) u_l)    / 2
//! <mu^l C psi>_±  = (l(l-1) u_{(l-2)±} - l(l+1) u_{l±}) / 2      (l >= 2)
//! <mu C psi>_±    = ±psi(0)/2 - u_{1±}
//! ```
//!
//! so half-moment bases pull in the half densities `u_{0±}`, the half first
//! moments `u_{1±}` and, for the classical mixed basis, the junction value
//! `psi(0)`. Those come from the closure; everything else is linear in `u`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{AngularBasis, BasisKind, Support};
use crate::closure::ClosureSolution;
use crate::error::{Error, Result};

/// Closure-dependent quantities entering the collision moments.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CollisionAux {
    pub half_density: Option<(f64, f64)>,
    pub half_first: Option<(f64, f64)>,
    pub junction: Option<f64>,
}

impl CollisionAux {
    pub fn from_closure(sol: &ClosureSolution) -> Self {
        Self {
            half_density: Some(sol.half_densities),
            half_first: Some(sol.half_first),
            junction: Some(sol.junction),
        }
    }

    fn get(&self, term: AuxTerm) -> Result<f64> {
        let missing = |what: &str| Error::Contract(format!("collision needs {what}"));
        match term {
            AuxTerm::HalfDensity(side) => self
                .half_density
                .map(|(p, m)| pick(side, p, m))
                .ok_or_else(|| missing("half densities")),
            AuxTerm::HalfFirst(side) => self
                .half_first
                .map(|(p, m)| pick(side, p, m))
                .ok_or_else(|| missing("half first moments")),
            AuxTerm::Junction => self.junction.ok_or_else(|| missing("the junction value psi(0)")),
        }
    }
}

fn pick(side: Support, plus: f64, minus: f64) -> f64 {
    if side == Support::Minus {
        minus
    } else {
        plus
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxTerm {
    HalfDensity(Support),
    HalfFirst(Support),
    Junction,
}

/// Sparse description of the additive vector `g(aux)`: each entry adds
/// `coefficient * aux[term]` to row `row`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxMap {
    pub entries: Vec<(usize, AuxTerm, f64)>,
}

impl AuxMap {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn eval(&self, n: usize, aux: &CollisionAux) -> Result<Vec<f64>> {
        let mut g = vec![0.0; n];
        for &(row, term, coefficient) in &self.entries {
            g[row] += coefficient * aux.get(term)?;
        }
        Ok(g)
    }
}

/// `collision(u, aux) = linear * u + aux_map.eval(aux)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCollision {
    pub linear: DMatrix<f64>,
    pub aux_map: AuxMap,
}

impl AffineCollision {
    pub fn apply(&self, u: &[f64], aux: &CollisionAux) -> Result<Vec<f64>> {
        let mut out = self.aux_map.eval(u.len(), aux)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o += (0..u.len()).map(|j| self.linear[(i, j)] * u[j]).sum::<f64>();
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionOperator {
    /// Half the Laplace-Beltrami operator (Fokker-Planck scattering).
    #[default]
    LaplaceBeltrami,
    /// Relaxation to isotropy, `C(psi) = 1/2 <psi> - psi`.
    Isotropic,
}

impl CollisionOperator {
    pub fn affine(self, basis: AngularBasis) -> Result<AffineCollision> {
        match self {
            CollisionOperator::LaplaceBeltrami => affine_decomposition(basis),
            CollisionOperator::Isotropic => Ok(iso_scatter_affine(basis)),
        }
    }
}

/// `<b C(psi)>` evaluated directly from the moment formulas.
pub fn collision_moments(basis: AngularBasis, u: &[f64], aux: &CollisionAux) -> Result<Vec<f64>> {
    if u.len() != basis.len() {
        return Err(Error::Domain(format!("{basis} expects {} moments", basis.len())));
    }
    let mut out = vec![0.0; u.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let (l, support) = basis.component(i);
        let lf = l as f64;
        *o = match (basis.kind(), support) {
            (BasisKind::Legendre, _) => -0.5 * lf * (lf + 1.0) * u[i],
            (BasisKind::FullMonomial, _) => {
                let lower = if l >= 2 { lf * (lf - 1.0) * u[i - 2] } else { 0.0 };
                0.5 * (lower - lf * (lf + 1.0) * u[i])
            }
            (_, Support::Full) => {
                // DiffMixed components 0 and 1 are full moments
                if l == 0 {
                    0.0
                } else {
                    -u[i]
                }
            }
            (kind, side) => {
                let sign = if side == Support::Plus { 1.0 } else { -1.0 };
                if l == 1 {
                    // only the classical mixed basis has half first moments
                    sign * 0.5 * aux.get(AuxTerm::Junction)? - u[i]
                } else {
                    let lower = match l - 2 {
                        0 => aux.get(AuxTerm::HalfDensity(side))?,
                        1 if kind == BasisKind::DiffMixed => aux.get(AuxTerm::HalfFirst(side))?,
                        d => u[basis.index_of(d, side).expect("lower half moment present")],
                    };
                    0.5 * (lf * (lf - 1.0) * lower - lf * (lf + 1.0) * u[i])
                }
            }
        };
    }
    Ok(out)
}

/// Splits the Laplace-Beltrami moments into a part linear in `u` and the
/// closure-dependent remainder.
pub fn affine_decomposition(basis: AngularBasis) -> Result<AffineCollision> {
    let n = basis.len();
    let mut linear = DMatrix::<f64>::zeros(n, n);
    let mut aux_map = AuxMap::default();
    for i in 0..n {
        let (l, support) = basis.component(i);
        let lf = l as f64;
        let diag = -0.5 * lf * (lf + 1.0);
        let lower = 0.5 * lf * (lf - 1.0);
        match (basis.kind(), support) {
            (BasisKind::Legendre, _) => linear[(i, i)] = diag,
            (BasisKind::FullMonomial, _) => {
                linear[(i, i)] = diag;
                if l >= 2 {
                    linear[(i, i - 2)] = lower;
                }
            }
            (_, Support::Full) => linear[(i, i)] = if l == 0 { 0.0 } else { -1.0 },
            (kind, side) => {
                linear[(i, i)] = diag;
                if l == 1 {
                    let sign = if side == Support::Plus { 0.5 } else { -0.5 };
                    aux_map.entries.push((i, AuxTerm::Junction, sign));
                } else if l == 2 {
                    aux_map.entries.push((i, AuxTerm::HalfDensity(side), lower));
                } else if l == 3 && kind == BasisKind::DiffMixed {
                    aux_map.entries.push((i, AuxTerm::HalfFirst(side), lower));
                } else {
                    let j = basis.index_of(l - 2, side).ok_or_else(|| {
                        Error::Unsupported(format!("{basis} lacks the degree-{} half moment", l - 2))
                    })?;
                    linear[(i, j)] = lower;
                }
            }
        }
    }
    Ok(AffineCollision { linear, aux_map })
}

/// Moments of the isotropic scattering operator `C(psi) = 1/2 <psi> - psi`.
pub fn iso_scatter_moments(basis: AngularBasis, u: &[f64]) -> Vec<f64> {
    basis.isotropic_moments().iter().zip(u).map(|(b, ui)| 0.5 * u[0] * b - ui).collect()
}

fn iso_scatter_affine(basis: AngularBasis) -> AffineCollision {
    let n = basis.len();
    let iso = basis.isotropic_moments();
    let mut linear = -DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        linear[(i, 0)] += 0.5 * iso[i];
    }
    AffineCollision { linear, aux_map: AuxMap::default() }
}
