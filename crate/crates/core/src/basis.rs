//! Angular bases on the slab direction cosine `mu` in [-1, 1] and the
//! half-interval Gauss-Legendre rules used to integrate against them.
//!
//! Component ordering per kind:
//!
//! | kind           | components                                              | count  |
//! |----------------|---------------------------------------------------------|--------|
//! | `FullMonomial` | `1, mu, ..., mu^N`                                      | N + 1  |
//! | `Mixed`        | `1, mu 1+, ..., mu^N 1+, mu 1-, ..., mu^N 1-`           | 2N + 1 |
//! | `DiffMixed`    | `1, mu, mu^2 1+, ..., mu^N 1+, mu^2 1-, ..., mu^N 1-`   | 2N     |
//! | `Legendre`     | `P_0, ..., P_N`                                         | N + 1  |
//!
//! Here `1+` is the indicator of `[0, 1]` and `1-` that of `[-1, 0]`. Every
//! half component carries at least one factor of `mu`, so all of them vanish
//! at `mu = 0` and the junction is unambiguous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    FullMonomial,
    Mixed,
    DiffMixed,
    Legendre,
}

/// Which part of `[-1, 1]` a basis component lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Full,
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AngularBasis {
    kind: BasisKind,
    order: usize,
}

impl AngularBasis {
    pub fn new(kind: BasisKind, order: usize) -> Result<Self> {
        let min_order = match kind {
            BasisKind::DiffMixed => 2,
            _ => 1,
        };
        if order < min_order {
            return Err(Error::Domain(format!(
                "{kind:?} basis needs order >= {min_order}, got {order}"
            )));
        }
        Ok(Self { kind, order })
    }

    /// The second-order differentiable mixed basis `(1, mu, mu^2 1+, mu^2 1-)`.
    pub fn dmm2() -> Self {
        Self { kind: BasisKind::DiffMixed, order: 2 }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of components `n`.
    pub fn len(&self) -> usize {
        let n = self.order;
        match self.kind {
            BasisKind::FullMonomial | BasisKind::Legendre => n + 1,
            BasisKind::Mixed => 2 * n + 1,
            BasisKind::DiffMixed => 2 * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Monomial degree and support of component `i`. For Legendre the degree
    /// is the polynomial degree.
    pub fn component(&self, i: usize) -> (usize, Support) {
        let n = self.order;
        match self.kind {
            BasisKind::FullMonomial | BasisKind::Legendre => (i, Support::Full),
            BasisKind::Mixed => match i {
                0 => (0, Support::Full),
                i if i <= n => (i, Support::Plus),
                i => (i - n, Support::Minus),
            },
            BasisKind::DiffMixed => match i {
                0 | 1 => (i, Support::Full),
                i if i <= n => (i, Support::Plus),
                i => (i - n + 1, Support::Minus),
            },
        }
    }

    /// Index of the component with the given degree and support, if present.
    pub fn index_of(&self, degree: usize, support: Support) -> Option<usize> {
        (0..self.len()).find(|&i| self.component(i) == (degree, support))
    }

    /// Short column names used in CSV headers (`u0, u1, u2p, u2m, ...`).
    pub fn component_names(&self) -> Vec<String> {
        (0..self.len())
            .map(|i| match (self.kind, self.component(i)) {
                (BasisKind::Legendre, (l, _)) => format!("m{l}"),
                (_, (l, Support::Full)) => format!("u{l}"),
                (_, (l, Support::Plus)) => format!("u{l}p"),
                (_, (l, Support::Minus)) => format!("u{l}m"),
            })
            .collect()
    }

    /// Evaluates every component at `mu`.
    pub fn eval(&self, mu: f64) -> Result<Vec<f64>> {
        if !(-1.0..=1.0).contains(&mu) {
            return Err(Error::Domain(format!("mu = {mu} outside [-1, 1]")));
        }
        let mut out = vec![0.0; self.len()];
        self.eval_into(mu, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a caller-provided buffer of length `len()`.
    pub fn eval_into(&self, mu: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        if self.kind == BasisKind::Legendre {
            legendre_into(mu, out);
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            let (degree, support) = self.component(i);
            let active = match support {
                Support::Full => true,
                Support::Plus => mu > 0.0,
                Support::Minus => mu < 0.0,
            };
            *slot = if active { mu.powi(degree as i32) } else { 0.0 };
        }
    }

    /// Exact `<b>`, the moments of the isotropic distribution `psi = 1`.
    pub fn isotropic_moments(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (l, support) = self.component(i);
                let half = 1.0 / (l as f64 + 1.0);
                match (self.kind, support) {
                    (BasisKind::Legendre, _) => {
                        if l == 0 {
                            2.0
                        } else {
                            0.0
                        }
                    }
                    (_, Support::Full) => {
                        if l % 2 == 0 {
                            2.0 * half
                        } else {
                            0.0
                        }
                    }
                    (_, Support::Plus) => half,
                    (_, Support::Minus) => {
                        if l % 2 == 0 {
                            half
                        } else {
                            -half
                        }
                    }
                }
            })
            .collect()
    }

    /// Index permutation and signs realising the mirror `mu -> -mu` on moment
    /// vectors: `mirrored[i] = sign[i] * u[perm[i]]`.
    pub fn mirror_map(&self) -> (Vec<usize>, Vec<f64>) {
        let mut perm = Vec::with_capacity(self.len());
        let mut sign = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (l, support) = self.component(i);
            let parity = if l % 2 == 0 { 1.0 } else { -1.0 };
            let partner = match support {
                Support::Full => i,
                Support::Plus => self.index_of(l, Support::Minus).unwrap_or(i),
                Support::Minus => self.index_of(l, Support::Plus).unwrap_or(i),
            };
            perm.push(partner);
            sign.push(parity);
        }
        (perm, sign)
    }

    pub fn mirror(&self, u: &[f64]) -> Vec<f64> {
        let (perm, sign) = self.mirror_map();
        perm.iter().zip(&sign).map(|(&j, s)| s * u[j]).collect()
    }
}

impl std::fmt::Display for AngularBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.kind {
            BasisKind::FullMonomial => "M",
            BasisKind::Mixed => "MM",
            BasisKind::DiffMixed => "DMM",
            BasisKind::Legendre => "P",
        };
        write!(f, "{tag}{}", self.order)
    }
}

/// Writes `P_0(x), ..., P_{len-1}(x)` via the three-term recurrence.
pub fn legendre_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for l in 2..out.len() {
        let lf = l as f64;
        out[l] = ((2.0 * lf - 1.0) * x * out[l - 1] - (lf - 1.0) * out[l - 2]) / lf;
    }
}

/// Gauss-Legendre rule with `p` points on each half-interval.
///
/// `nodes_minus[k] == -nodes_plus[k]` bit for bit and the weights coincide,
/// which makes mirrored integrands integrate to mirrored values exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    pub nodes_plus: Vec<f64>,
    pub weights_plus: Vec<f64>,
    pub nodes_minus: Vec<f64>,
    pub weights_minus: Vec<f64>,
    pub points_per_half: usize,
}

pub const DEFAULT_POINTS_PER_HALF: usize = 50;

impl Default for Quadrature {
    fn default() -> Self {
        Self::gauss_legendre_halves(DEFAULT_POINTS_PER_HALF)
            .expect("default quadrature order is valid")
    }
}

impl Quadrature {
    pub fn gauss_legendre_halves(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Domain("quadrature needs at least one point".into()));
        }
        let (x, w) = gauss_legendre(p);
        // [-1, 1] -> [0, 1], ascending
        let nodes_plus: Vec<f64> = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
        let weights_plus: Vec<f64> = w.iter().map(|&v| 0.5 * v).collect();
        let nodes_minus = nodes_plus.iter().map(|&t| -t).collect();
        let weights_minus = weights_plus.clone();
        Ok(Self { nodes_plus, weights_plus, nodes_minus, weights_minus, points_per_half: p })
    }

    /// Integrates `f` over the requested part of `[-1, 1]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, support: Support) -> Result<f64> {
        let half = |nodes: &[f64], weights: &[f64]| -> Result<f64> {
            let mut acc = 0.0;
            for (&mu, &w) in nodes.iter().zip(weights) {
                let value = f(mu);
                if !value.is_finite() {
                    return Err(Error::Evaluation { node: mu, value });
                }
                acc += w * value;
            }
            Ok(acc)
        };
        match support {
            Support::Plus => half(&self.nodes_plus, &self.weights_plus),
            Support::Minus => half(&self.nodes_minus, &self.weights_minus),
            Support::Full => Ok(half(&self.nodes_plus, &self.weights_plus)?
                + half(&self.nodes_minus, &self.weights_minus)?),
        }
    }
}

/// Nodes (ascending) and weights of the `p`-point Gauss-Legendre rule on
/// `[-1, 1]`, by Newton iteration on `P_p`.
fn gauss_legendre(p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    let pf = p as f64;
    for i in 0..p.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (pf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (pn, dpn) = legendre_with_derivative(p, x);
            dp = dpn;
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dpn) = legendre_with_derivative(p, x);
        if dpn.is_finite() {
            dp = dpn;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[p - 1 - i] = x;
        weights[p - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if p % 2 == 1 {
        nodes[p / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(p: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if p == 0 {
        return (1.0, 0.0);
    }
    for l in 2..=p {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * x * p1 - (lf - 1.0) * p0) / lf;
        p0 = p1;
        p1 = p2;
    }
    let pf = p as f64;
    let dp = pf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn component_counts() {
        let cases = [
            (BasisKind::FullMonomial, 3, 4),
            (BasisKind::Legendre, 99, 100),
            (BasisKind::Mixed, 1, 3),
            (BasisKind::Mixed, 2, 5),
            (BasisKind::DiffMixed, 2, 4),
            (BasisKind::DiffMixed, 4, 8),
        ];
        for (kind, order, n) in cases {
            let b = AngularBasis::new(kind, order).unwrap();
            assert_eq!(b.len(), n, "{kind:?} {order}");
            for mu in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                assert_eq!(b.eval(mu).unwrap()[0], 1.0);
            }
        }
        assert!(AngularBasis::new(BasisKind::DiffMixed, 1).is_err());
    }

    #[test]
    fn dmm2_evaluation() {
        let b = AngularBasis::dmm2();
        assert_eq!(b.eval(0.5).unwrap(), vec![1.0, 0.5, 0.25, 0.0]);
        assert_eq!(b.eval(-0.5).unwrap(), vec![1.0, -0.5, 0.0, 0.25]);
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.component_names(), ["u0", "u1", "u2p", "u2m"]);
    }

    #[test]
    fn legendre_at_one() {
        let b = AngularBasis::new(BasisKind::Legendre, 2).unwrap();
        assert_eq!(b.eval(1.0).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn mixed_ordering_and_junction() {
        let b = AngularBasis::new(BasisKind::Mixed, 2).unwrap();
        assert_eq!(b.eval(0.5).unwrap(), vec![1.0, 0.5, 0.25, 0.0, 0.0]);
        assert_eq!(b.eval(-0.5).unwrap(), vec![1.0, 0.0, 0.0, -0.5, 0.25]);
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_mu() {
        assert!(matches!(AngularBasis::dmm2().eval(1.0 + 1e-12), Err(Error::Domain(_))));
        assert!(AngularBasis::dmm2().eval(f64::NAN).is_err());
    }

    #[test]
    fn isotropic_moments_match_quadrature() {
        let q = Quadrature::gauss_legendre_halves(10).unwrap();
        for (kind, order) in [
            (BasisKind::FullMonomial, 3),
            (BasisKind::Mixed, 2),
            (BasisKind::DiffMixed, 3),
            (BasisKind::Legendre, 5),
        ] {
            let b = AngularBasis::new(kind, order).unwrap();
            let exact = b.isotropic_moments();
            for (i, e) in exact.iter().enumerate() {
                let num = q.integrate(|mu| b.eval(mu).unwrap()[i], Support::Full).unwrap();
                assert!((num - e).abs() < 1e-14, "{kind:?} {i}: {num} vs {e}");
            }
        }
        assert_eq!(AngularBasis::dmm2().isotropic_moments(), vec![2.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn mirror_swaps_halves() {
        let b = AngularBasis::dmm2();
        assert_eq!(b.mirror(&[1.0, 0.3, 0.2, 0.1]), vec![1.0, -0.3, 0.1, 0.2]);
        let mm = AngularBasis::new(BasisKind::Mixed, 1).unwrap();
        assert_eq!(mm.mirror(&[1.0, 0.3, -0.1]), vec![1.0, 0.1, -0.3]);
        let m3 = AngularBasis::new(BasisKind::FullMonomial, 3).unwrap();
        assert_eq!(m3.mirror(&[1.0, 0.3, 0.2, 0.1]), vec![1.0, -0.3, 0.2, -0.1]);
    }

    #[test]
    fn quadrature_examples() {
        let q = Quadrature::gauss_legendre_halves(5).unwrap();
        let v = q.integrate(|mu| mu * mu, Support::Full).unwrap();
        assert!((v - 2.0 / 3.0).abs() <= 1e-15);
        let v = q.integrate(|mu| mu.powi(3), Support::Plus).unwrap();
        assert!((v - 0.25).abs() <= 1e-15);
        // e - 1/e, reference from a 50-digit evaluation
        let q30 = Quadrature::gauss_legendre_halves(30).unwrap();
        let v = q30.integrate(f64::exp, Support::Full).unwrap();
        assert!((v - 2.350402387287603).abs() <= 1e-13);
    }

    #[test]
    fn quadrature_structure() {
        for p in [1, 2, 7, 50, 200] {
            let q = Quadrature::gauss_legendre_halves(p).unwrap();
            assert_eq!(q.nodes_plus.len(), p);
            for k in 0..p {
                assert!(q.nodes_plus[k] > 0.0 && q.nodes_plus[k] < 1.0);
                assert!(q.weights_plus[k] > 0.0);
                assert_eq!(q.nodes_minus[k], -q.nodes_plus[k]);
                assert_eq!(q.weights_minus[k], q.weights_plus[k]);
            }
            let total: f64 = q.weights_plus.iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "p = {p}");
        }
    }

    #[test]
    fn nonfinite_integrand_names_node() {
        let q = Quadrature::gauss_legendre_halves(4).unwrap();
        let err = q.integrate(|mu| if mu < 0.0 { f64::INFINITY } else { 1.0 }, Support::Full);
        match err {
            Err(Error::Evaluation { node, .. }) => assert!(node < 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diffmixed_ansatz_is_c1_at_junction() {
        let b = AngularBasis::dmm2();
        let alpha = [0.3, -1.7, 2.5, -4.0];
        let psi = |mu: f64| {
            let v = b.eval(mu).unwrap();
            v.iter().zip(&alpha).map(|(x, a)| x * a).sum::<f64>().exp()
        };
        let expected = alpha[1] * alpha[0].exp();
        let right = |h: f64| (psi(h) - psi(0.0)) / h;
        let left = |h: f64| (psi(0.0) - psi(-h)) / h;
        for h in [1e-4, 1e-5] {
            // first-order one-sided quotients, Richardson extrapolated
            let r = 2.0 * right(h / 2.0) - right(h);
            let l = 2.0 * left(h / 2.0) - left(h);
            assert!((r - expected).abs() < 1e-6, "h={h} right {r}");
            assert!((l - expected).abs() < 1e-6, "h={h} left {l}");
        }
    }

    proptest! {
        #[test]
        fn additivity(c in prop::collection::vec(-3.0f64..3.0, 6), p in 1usize..40) {
            let q = Quadrature::gauss_legendre_halves(p).unwrap();
            let f = |mu: f64| (c[0] * mu).sin() + c[1] * (c[2] * mu).exp() + c[3] * mu.powi(5) + c[4] * mu.abs().sqrt() + c[5];
            let full = q.integrate(f, Support::Full).unwrap();
            let parts = q.integrate(f, Support::Plus).unwrap() + q.integrate(f, Support::Minus).unwrap();
            prop_assert!((full - parts).abs() <= 1e-15 * full.abs().max(1.0));
        }

        #[test]
        fn polynomial_exactness(coeffs in prop::collection::vec(-1.0f64..1.0, 1..20), p in 1usize..12) {
            let q = Quadrature::gauss_legendre_halves(p).unwrap();
            let degree = (2 * p - 1).min(coeffs.len() - 1);
            let c = &coeffs[..=degree];
            let poly = |mu: f64| c.iter().rev().fold(0.0, |acc, &a| acc * mu + a);
            let plus_exact: f64 = c.iter().enumerate().map(|(k, a)| a / (k as f64 + 1.0)).sum();
            let minus_exact: f64 = c.iter().enumerate()
                .map(|(k, a)| if k % 2 == 0 { a / (k as f64 + 1.0) } else { -a / (k as f64 + 1.0) })
                .sum();
            let scale: f64 = c.iter().map(|a| a.abs()).sum::<f64>().max(1e-300);
            prop_assert!((q.integrate(poly, Support::Plus).unwrap() - plus_exact).abs() <= 1e-14 * scale);
            prop_assert!((q.integrate(poly, Support::Minus).unwrap() - minus_exact).abs() <= 1e-14 * scale);
        }
    }
}
