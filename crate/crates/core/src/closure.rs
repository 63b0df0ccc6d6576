//! Maxwell-Boltzmann minimum-entropy closure.
//!
//! The ansatz is `psi(mu) = exp(b(mu)^T alpha)`. The multipliers minimize the
//! strictly convex dual `<exp(b^T alpha)> - u^T alpha` and are found by a
//! damped Newton method; all angular integrals use the half-interval
//! Gauss-Legendre rule, so every derived quantity (fluxes, half-range
//! moments) is consistent with the moments the solver matches.

use nalgebra::{DMatrix, DVector};

use crate::basis::{AngularBasis, Quadrature, Support};
use crate::error::{Error, Result};
use crate::realizability::{regularize_moments, MomentVector};

/// Exponents above this are factored out before integrating.
const EXPONENT_GUARD: f64 = 700.0;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers(pub Vec<f64>);

impl Multipliers {
    /// `(ln(u0 / 2), 0, ..., 0)`, exact for isotropic data.
    pub fn isotropic(basis: AngularBasis, u0: f64) -> Self {
        let mut alpha = vec![0.0; basis.len()];
        alpha[0] = (0.5 * u0).ln();
        Self(alpha)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub regularization_ladder: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-9,
            max_iterations: 200,
            regularization_ladder: vec![0.0, 1e-8, 1e-6, 1e-4, 1e-2],
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { gradient_tol: tol, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureSolution {
    pub alpha: Multipliers,
    /// `<b psi>`.
    pub u_reproduced: MomentVector,
    /// `<mu b psi>`.
    pub flux_moments: Vec<f64>,
    /// `<mu b psi>` over `[0, 1]` and `[-1, 0]` separately.
    pub flux_plus: Vec<f64>,
    pub flux_minus: Vec<f64>,
    /// `(<psi>+, <psi>-)`.
    pub half_densities: (f64, f64),
    /// `(<mu psi>+, <mu psi>-)`.
    pub half_first: (f64, f64),
    /// `psi(0)`.
    pub junction: f64,
    /// Moment vector actually matched (after any regularization).
    pub target: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub regularization_used: f64,
}

struct HalfTable {
    mu: Vec<f64>,
    w: Vec<f64>,
    /// Row-major `p x n` basis values at the nodes.
    b: Vec<f64>,
}

impl HalfTable {
    fn new(basis: &AngularBasis, nodes: &[f64], weights: &[f64]) -> Self {
        let n = basis.len();
        let mut b = vec![0.0; nodes.len() * n];
        for (k, &mu) in nodes.iter().enumerate() {
            basis.eval_into(mu, &mut b[k * n..(k + 1) * n]);
        }
        Self { mu: nodes.to_vec(), w: weights.to_vec(), b }
    }

    fn row(&self, k: usize, n: usize) -> &[f64] {
        &self.b[k * n..(k + 1) * n]
    }
}

/// Quadrature-discretized entropy closure for one basis.
pub struct EntropyClosure {
    basis: AngularBasis,
    quad: Quadrature,
    plus: HalfTable,
    minus: HalfTable,
    at_zero: Vec<f64>,
}

/// Outcome of a single Newton run against a fixed target.
#[derive(Debug)]
struct NewtonRun {
    alpha: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

struct DualState {
    objective: f64,
    objective_scale: f64,
    gradient: Vec<f64>,
    hessian: DMatrix<f64>,
}

impl EntropyClosure {
    pub fn new(basis: AngularBasis, quad: Quadrature) -> Self {
        let plus = HalfTable::new(&basis, &quad.nodes_plus, &quad.weights_plus);
        let minus = HalfTable::new(&basis, &quad.nodes_minus, &quad.weights_minus);
        let mut at_zero = vec![0.0; basis.len()];
        basis.eval_into(0.0, &mut at_zero);
        Self { basis, quad, plus, minus, at_zero }
    }

    pub fn basis(&self) -> AngularBasis {
        self.basis
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    fn halves(&self) -> [(Support, &HalfTable); 2] {
        [(Support::Plus, &self.plus), (Support::Minus, &self.minus)]
    }

    /// Quadrature weights times `exp(b^T alpha)` at every node, with the
    /// common factor `exp(shift)` returned separately.
    fn weighted_exponentials(&self, alpha: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let n = self.basis.len();
        if alpha.len() != n || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain(format!("invalid multipliers {alpha:?}")));
        }
        let exponents = |t: &HalfTable| -> Vec<f64> {
            (0..t.mu.len())
                .map(|k| t.row(k, n).iter().zip(alpha).map(|(b, a)| b * a).sum())
                .collect()
        };
        let mut xp = exponents(&self.plus);
        let mut xm = exponents(&self.minus);
        let max = xp.iter().chain(&xm).copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if max > EXPONENT_GUARD { max } else { 0.0 };
        for (x, w) in xp.iter_mut().zip(&self.plus.w) {
            *x = w * (*x - shift).exp();
        }
        for (x, w) in xm.iter_mut().zip(&self.minus.w) {
            *x = w * (*x - shift).exp();
        }
        Ok((xp, xm, shift))
    }

    fn rescale(shift: f64, max_exponent: f64) -> Result<f64> {
        let scale = shift.exp();
        if scale.is_finite() {
            Ok(scale)
        } else {
            Err(Error::Overflow { max_exponent })
        }
    }

    /// `<b exp(b^T alpha)>`.
    pub fn moments(&self, alpha: &Multipliers) -> Result<MomentVector> {
        let n = self.basis.len();
        let (ep, em, shift) = self.weighted_exponentials(&alpha.0)?;
        let mut u = vec![0.0; n];
        for ((_, t), e) in self.halves().iter().zip([&ep, &em]) {
            for (k, &ek) in e.iter().enumerate() {
                for (ui, bi) in u.iter_mut().zip(t.row(k, n)) {
                    *ui += ek * bi;
                }
            }
        }
        let scale = Self::rescale(shift, shift)?;
        u.iter_mut().for_each(|v| *v *= scale);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { max_exponent: shift });
        }
        MomentVector::new(self.basis, u)
    }

    fn dual_state(&self, alpha: &[f64], target: &[f64]) -> Result<DualState> {
        let n = self.basis.len();
        let (ep, em, shift) = self.weighted_exponentials(alpha)?;
        let mut mass = 0.0;
        let mut gradient = vec![0.0; n];
        let mut hessian = DMatrix::<f64>::zeros(n, n);
        for ((_, t), e) in self.halves().iter().zip([&ep, &em]) {
            for (k, &ek) in e.iter().enumerate() {
                let b = t.row(k, n);
                mass += ek * b[0];
                for i in 0..n {
                    let ebi = ek * b[i];
                    gradient[i] += ebi;
                    for j in 0..=i {
                        hessian[(i, j)] += ebi * b[j];
                    }
                }
            }
        }
        let scale = Self::rescale(shift, shift)?;
        for i in 0..n {
            for j in 0..i {
                hessian[(j, i)] = hessian[(i, j)];
            }
        }
        hessian *= scale;
        let linear: f64 = target.iter().zip(alpha).map(|(u, a)| u * a).sum();
        // b_0 = 1 for every basis, so the zeroth gradient entry is <psi>
        let integral = mass * scale;
        for (g, u) in gradient.iter_mut().zip(target) {
            *g = *g * scale - u;
        }
        let objective = integral - linear;
        if !objective.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Overflow { max_exponent: shift });
        }
        Ok(DualState { objective, objective_scale: integral.abs() + linear.abs(), gradient, hessian })
    }

    /// Dual objective `<exp(b^T alpha)> - u^T alpha`.
    pub fn dual_objective(&self, alpha: &Multipliers, u: &MomentVector) -> Result<f64> {
        Ok(self.dual_state(&alpha.0, &u.values)?.objective)
    }

    /// Gradient `<b exp(b^T alpha)> - u` and Hessian `<b b^T exp(b^T alpha)>`.
    pub fn dual_derivatives(
        &self,
        alpha: &Multipliers,
        u: &MomentVector,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let state = self.dual_state(&alpha.0, &u.values)?;
        Ok((DVector::from_vec(state.gradient), state.hessian))
    }

    /// `H = <b b^T psi>` and `J = <mu b b^T psi>` at `alpha`.
    pub fn hessian_pair(&self, alpha: &Multipliers) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.basis.len();
        let (ep, em, shift) = self.weighted_exponentials(&alpha.0)?;
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut j = DMatrix::<f64>::zeros(n, n);
        for ((_, t), e) in self.halves().iter().zip([&ep, &em]) {
            for (k, &ek) in e.iter().enumerate() {
                let b = t.row(k, n);
                let mu = t.mu[k];
                for r in 0..n {
                    for c in 0..n {
                        let v = ek * b[r] * b[c];
                        h[(r, c)] += v;
                        j[(r, c)] += mu * v;
                    }
                }
            }
        }
        let scale = Self::rescale(shift, shift)?;
        Ok((h * scale, j * scale))
    }

    /// `exp(b(mu)^T alpha)`.
    pub fn ansatz_eval(&self, alpha: &Multipliers, mu: f64) -> Result<f64> {
        let b = self.basis.eval(mu)?;
        Ok(b.iter().zip(&alpha.0).map(|(b, a)| b * a).sum::<f64>().exp())
    }

    /// Ansatz values at the plus and minus quadrature nodes (same ordering as
    /// the quadrature).
    pub fn node_values(&self, alpha: &Multipliers) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.basis.len();
        let eval = |t: &HalfTable| -> Vec<f64> {
            (0..t.mu.len())
                .map(|k| t.row(k, n).iter().zip(&alpha.0).map(|(b, a)| b * a).sum::<f64>().exp())
                .collect()
        };
        Ok((eval(&self.plus), eval(&self.minus)))
    }

    /// Half-range flux moments `<mu b psi>` over one half of a distribution
    /// given by its values at that half's quadrature nodes.
    pub fn half_flux_of_nodes(&self, support: Support, values: &[f64]) -> Vec<f64> {
        let n = self.basis.len();
        let t = match support {
            Support::Plus => &self.plus,
            Support::Minus => &self.minus,
            Support::Full => panic!("half_flux_of_nodes needs a half-interval"),
        };
        let mut out = vec![0.0; n];
        for (k, &v) in values.iter().enumerate() {
            let f = t.w[k] * t.mu[k] * v;
            for (o, b) in out.iter_mut().zip(t.row(k, n)) {
                *o += f * b;
            }
        }
        out
    }

    /// Moments `<b psi>` of a distribution given by values at all nodes.
    pub fn moments_of_nodes(&self, plus: &[f64], minus: &[f64]) -> Vec<f64> {
        let n = self.basis.len();
        let mut out = vec![0.0; n];
        for (t, values) in [(&self.plus, plus), (&self.minus, minus)] {
            for (k, &v) in values.iter().enumerate() {
                let f = t.w[k] * v;
                for (o, b) in out.iter_mut().zip(t.row(k, n)) {
                    *o += f * b;
                }
            }
        }
        out
    }

    /// Every closure quantity derived from `alpha`. Solver bookkeeping fields
    /// (`residual_norm`, `iterations`, `regularization_used`) are zero.
    pub fn closure_moments(&self, alpha: &Multipliers) -> Result<ClosureSolution> {
        let n = self.basis.len();
        let (ep, em, shift) = self.weighted_exponentials(&alpha.0)?;
        let mut u = vec![0.0; n];
        let mut flux = [vec![0.0; n], vec![0.0; n]];
        let mut dens = [0.0; 2];
        let mut first = [0.0; 2];
        for (side, ((_, t), e)) in self.halves().iter().zip([&ep, &em]).enumerate() {
            for (k, &ek) in e.iter().enumerate() {
                let mu = t.mu[k];
                let b = t.row(k, n);
                dens[side] += ek;
                first[side] += ek * mu;
                for i in 0..n {
                    u[i] += ek * b[i];
                    flux[side][i] += ek * mu * b[i];
                }
            }
        }
        let scale = Self::rescale(shift, shift)?;
        let [mut flux_plus, mut flux_minus] = flux;
        for v in u.iter_mut().chain(flux_plus.iter_mut()).chain(flux_minus.iter_mut()) {
            *v *= scale;
        }
        let flux_moments = flux_plus.iter().zip(&flux_minus).map(|(p, m)| p + m).collect();
        let junction = self.at_zero.iter().zip(&alpha.0).map(|(b, a)| b * a).sum::<f64>().exp();
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { max_exponent: shift });
        }
        Ok(ClosureSolution {
            alpha: alpha.clone(),
            target: u.clone(),
            u_reproduced: MomentVector { basis: self.basis, values: u },
            flux_moments,
            flux_plus,
            flux_minus,
            half_densities: (dens[0] * scale, dens[1] * scale),
            half_first: (first[0] * scale, first[1] * scale),
            junction,
            residual_norm: 0.0,
            iterations: 0,
            regularization_used: 0.0,
        })
    }

    /// Solves the dual problem for `u`, walking up the regularization ladder
    /// until Newton converges to `gradient_tol * u0` in the max norm.
    pub fn solve_dual(
        &self,
        u: &MomentVector,
        opts: &SolverOptions,
        warm_start: Option<&Multipliers>,
    ) -> Result<ClosureSolution> {
        if u.basis != self.basis {
            return Err(Error::Precondition(format!("moments in {} given to {} closure", u.basis, self.basis)));
        }
        let rho = u.density();
        if !(rho > 0.0) || u.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("density must be positive, got {rho}")));
        }
        if !(opts.gradient_tol > 0.0) {
            return Err(Error::Domain("gradient_tol must be positive".into()));
        }
        let cold = Multipliers::isotropic(self.basis, rho).0;
        // a warm start is first rescaled to the target density; if it still
        // fails, the isotropic start gets its own attempt
        let warm = warm_start
            .filter(|a| a.0.len() == self.basis.len() && a.0.iter().all(|v| v.is_finite()))
            .and_then(|a| self.match_density(&a.0, rho));
        let tol = opts.gradient_tol * rho;
        let mut last_residual = f64::INFINITY;
        let mut last_r = 0.0;
        let mut total_iterations = 0;
        for &r in &opts.regularization_ladder {
            let target = regularize_moments(u, r)?;
            for start in warm.iter().chain([&cold]) {
                let run = self.newton(&target.values, start.clone(), tol, opts.max_iterations, None);
                total_iterations += run.iterations;
                last_residual = run.residual;
                last_r = r;
                if run.converged {
                    let mut sol = self.closure_moments(&Multipliers(run.alpha))?;
                    sol.target = target.values;
                    sol.residual_norm = run.residual;
                    sol.iterations = total_iterations;
                    sol.regularization_used = r;
                    return Ok(sol);
                }
            }
        }
        Err(Error::ClosureFailure { residual: last_residual, regularization: last_r })
    }

    /// Shifts `alpha_0` so that `<exp(b^T alpha)> = rho`.
    fn match_density(&self, alpha: &[f64], rho: f64) -> Option<Vec<f64>> {
        let (ep, em, shift) = self.weighted_exponentials(alpha).ok()?;
        let mass: f64 = ep.iter().chain(&em).sum();
        let correction = (rho / mass).ln() - shift;
        let mut alpha = alpha.to_vec();
        alpha[0] += correction;
        alpha[0].is_finite().then_some(alpha)
    }

    /// Newton iterates' dual objective values for a solve without
    /// regularization, for checking monotone descent.
    pub fn objective_trace(&self, u: &MomentVector, opts: &SolverOptions) -> Vec<f64> {
        let mut trace = Vec::new();
        let start = Multipliers::isotropic(self.basis, u.density()).0;
        self.newton(&u.values, start, opts.gradient_tol * u.density(), opts.max_iterations, Some(&mut trace));
        trace
    }

    fn newton(
        &self,
        target: &[f64],
        mut alpha: Vec<f64>,
        tol: f64,
        max_iterations: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> NewtonRun {
        let fail = |alpha: Vec<f64>, residual, iterations| NewtonRun { alpha, residual, iterations, converged: false };
        let mut state = match self.dual_state(&alpha, target) {
            Ok(s) => s,
            Err(_) => return fail(alpha, f64::INFINITY, 0),
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(state.objective);
        }
        let n = alpha.len();
        for iteration in 0..=max_iterations {
            let residual = max_abs(&state.gradient);
            if residual <= tol {
                return NewtonRun { alpha, residual, iterations: iteration, converged: true };
            }
            if iteration == max_iterations {
                return fail(alpha, residual, iteration);
            }
            let Some(direction) = newton_direction(&state.hessian, &state.gradient) else {
                return fail(alpha, residual, iteration);
            };
            let slope: f64 = state.gradient.iter().zip(&direction).map(|(g, d)| g * d).sum();
            if !(slope < 0.0) {
                return fail(alpha, residual, iteration);
            }
            let mut step = 1.0;
            let accepted = loop {
                if step < MIN_STEP {
                    break None;
                }
                let trial: Vec<f64> = (0..n).map(|i| alpha[i] + step * direction[i]).collect();
                if let Ok(next) = self.dual_state(&trial, target) {
                    let armijo = next.objective <= state.objective + ARMIJO * step * slope;
                    // near the optimum the decrease drops below the objective's
                    // rounding level; fall back to gradient reduction there
                    let roundoff = next.objective - state.objective <= 1e-13 * state.objective_scale
                        && max_abs(&next.gradient) < residual;
                    if armijo || roundoff {
                        break Some((trial, next));
                    }
                }
                step *= 0.5;
            };
            match accepted {
                Some((trial, next)) => {
                    alpha = trial;
                    state = next;
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(state.objective);
                    }
                }
                None => return fail(alpha, residual, iteration),
            }
        }
        unreachable!("loop returns at max_iterations")
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `H d = -g` by Cholesky, retrying once with a diagonal jitter of
/// `1e-14 * trace(H)`.
fn newton_direction(hessian: &DMatrix<f64>, gradient: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_iterator(gradient.len(), gradient.iter().map(|g| -g));
    let chol = hessian.clone().cholesky().or_else(|| {
        let jitter = 1e-14 * hessian.trace();
        let mut shifted = hessian.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        shifted.cholesky()
    })?;
    let d = chol.solve(&rhs);
    d.iter().all(|v| v.is_finite()).then(|| d.iter().copied().collect())
}
