//! Linear spherical-harmonics (P_N) reference solver in slab geometry.
//!
//! Unknowns are Legendre moments `m_l = <P_l psi>`. Transport uses a global
//! Lax-Friedrichs flux with numerical speed 1; collision and absorption are
//! diagonal and treated implicitly.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{legendre_into, Quadrature};
use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::fvsolver::{BoundaryCondition, MassLedger, ProblemConfig, StepDiagnostics};

pub const MAX_ORDER: usize = 199;

#[derive(Clone, Debug, PartialEq)]
pub struct PnOperators {
    /// Sub-diagonal `l / (2l + 1)` at row `l` (entry 0 unused).
    pub sub: Vec<f64>,
    /// Super-diagonal `(l + 1) / (2l + 1)` at row `l` (entry `N` unused).
    pub sup: Vec<f64>,
    /// Collision eigenvalues `-l(l+1)/2`.
    pub c_diag: Vec<f64>,
}

impl PnOperators {
    pub fn order(&self) -> usize {
        self.c_diag.len() - 1
    }

    /// Dense advection matrix, row `l` giving the flux `<mu P_l psi>`.
    pub fn advection_matrix(&self) -> DMatrix<f64> {
        let n = self.c_diag.len();
        let mut a = DMatrix::zeros(n, n);
        for l in 0..n {
            if l > 0 {
                a[(l, l - 1)] = self.sub[l];
            }
            if l + 1 < n {
                a[(l, l + 1)] = self.sup[l];
            }
        }
        a
    }

    /// `A m` without forming `A`.
    pub fn apply(&self, m: &[f64], out: &mut [f64]) {
        let n = m.len();
        for l in 0..n {
            let lower = if l > 0 { self.sub[l] * m[l - 1] } else { 0.0 };
            let upper = if l + 1 < n { self.sup[l] * m[l + 1] } else { 0.0 };
            out[l] = lower + upper;
        }
    }
}

pub fn pn_operators(order: usize) -> Result<PnOperators> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Domain(format!("P_N order must lie in 1..={MAX_ORDER}, got {order}")));
    }
    let n = order + 1;
    let mut sub = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut c_diag = vec![0.0; n];
    for l in 0..n {
        let lf = l as f64;
        sub[l] = lf / (2.0 * lf + 1.0);
        sup[l] = (lf + 1.0) / (2.0 * lf + 1.0);
        c_diag[l] = -0.5 * lf * (lf + 1.0);
    }
    sup[order] = 0.0;
    Ok(PnOperators { sub, sup, c_diag })
}

/// Legendre moments `<P_l psi_b>` of a boundary distribution, or `None` for
/// a reflective wall.
pub fn boundary_moments(bc: &BoundaryCondition, order: usize, quad: &Quadrature) -> Option<Vec<f64>> {
    use crate::basis::Support;
    let plus = bc.node_values(quad, Support::Plus)?;
    let minus = bc.node_values(quad, Support::Minus)?;
    let mut m = vec![0.0; order + 1];
    let mut p = vec![0.0; order + 1];
    let nodes = quad.nodes_plus.iter().zip(&quad.weights_plus).zip(&plus);
    let nodes = nodes.chain(quad.nodes_minus.iter().zip(&quad.weights_minus).zip(&minus));
    for ((&mu, &w), &psi) in nodes {
        legendre_into(mu, &mut p);
        for (ml, pl) in m.iter_mut().zip(&p) {
            *ml += w * psi * pl;
        }
    }
    Some(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PnRun {
    pub order: usize,
    pub dx: f64,
    /// Cell moments `m_0..m_N`.
    pub cells: Vec<Vec<f64>>,
    pub time: f64,
    pub ledger: MassLedger,
    pub diagnostics: Vec<StepDiagnostics>,
    pub max_ledger_defect: f64,
}

impl PnRun {
    pub fn densities(&self) -> Vec<f64> {
        self.cells.iter().map(|m| m[0]).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.dx * self.cells.iter().map(|m| m[0]).sum::<f64>()
    }
}

enum Ghost {
    Fixed(Vec<f64>),
    Reflective,
}

impl Ghost {
    fn state(&self, neighbour: &[f64]) -> Vec<f64> {
        match self {
            Ghost::Fixed(m) => m.clone(),
            Ghost::Reflective => {
                neighbour.iter().enumerate().map(|(l, v)| if l % 2 == 0 { *v } else { -v }).collect()
            }
        }
    }
}

/// Runs the P_N model of the given order on `cfg` with the same time-step
/// policy as the kinetic solver.
pub fn pn_run(cfg: &ProblemConfig, order: usize, quad: &Quadrature) -> Result<PnRun> {
    pn_run_from(cfg, order, quad, None)
}

/// As [`pn_run`], optionally replacing the configured initial condition by
/// explicit cell moments.
pub fn pn_run_from(
    cfg: &ProblemConfig,
    order: usize,
    quad: &Quadrature,
    initial: Option<Vec<Vec<f64>>>,
) -> Result<PnRun> {
    cfg.validate()?;
    let ops = pn_operators(order)?;
    let n = order + 1;
    let dx = cfg.dx();
    let centers = cfg.cell_centers();
    let sigma_a: Vec<f64> = centers.iter().map(|&z| cfg.sigma_a.eval(z)).collect();
    let sigma_s: Vec<f64> = centers.iter().map(|&z| cfg.sigma_s.eval(z)).collect();
    let q: Vec<f64> = centers.iter().map(|&z| cfg.q.eval(z)).collect();
    let collision: Vec<f64> = match cfg.collision {
        CollisionOperator::LaplaceBeltrami => ops.c_diag.clone(),
        CollisionOperator::Isotropic => (0..n).map(|l| if l == 0 { 0.0 } else { -1.0 }).collect(),
    };
    let ghost = |bc: &BoundaryCondition| match boundary_moments(bc, order, quad) {
        Some(m) => Ghost::Fixed(m),
        None => Ghost::Reflective,
    };
    let (left, right) = (ghost(&cfg.bc_left), ghost(&cfg.bc_right));

    let mut cells: Vec<Vec<f64>> = match initial {
        Some(cells) => {
            if cells.len() != cfg.n_cells || cells.iter().any(|m| m.len() != n) {
                return Err(Error::Precondition(format!("initial state must be {} cells of {n} moments", cfg.n_cells)));
            }
            cells
        }
        None => cfg
            .initial_densities()
            .into_iter()
            .map(|rho| {
                let mut m = vec![0.0; n];
                m[0] = rho;
                m
            })
            .collect(),
    };
    let mass = |cells: &[Vec<f64>]| dx * cells.iter().map(|m| m[0]).sum::<f64>();
    let mut ledger = MassLedger::new(mass(&cells));
    let mut diagnostics = Vec::new();
    let mut max_ledger_defect: f64 = 0.0;
    let mut time = 0.0;
    let n_cells = cells.len();
    let steps = cfg.time_steps();
    for (k, &dt) in steps.iter().enumerate() {
        let ghost_l = left.state(&cells[0]);
        let ghost_r = right.state(&cells[n_cells - 1]);
        let faces: Vec<Vec<f64>> = (0..=n_cells)
            .into_par_iter()
            .map(|f| {
                let a = if f == 0 { &ghost_l } else { &cells[f - 1] };
                let b = if f == n_cells { &ghost_r } else { &cells[f] };
                let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let mut flux = vec![0.0; n];
                ops.apply(&sum, &mut flux);
                flux.iter().enumerate().map(|(l, v)| 0.5 * v - 0.5 * (b[l] - a[l])).collect()
            })
            .collect();
        let (f_left, f_right) = (faces[0][0], faces[n_cells][0]);
        ledger.boundary_inflow += dt * (f_left.max(0.0) + (-f_right).max(0.0));
        ledger.boundary_outflow += dt * ((-f_left).max(0.0) + f_right.max(0.0));
        ledger.source_input += dt * dx * q.iter().map(|v| 2.0 * v).sum::<f64>();
        let ratio = dt / dx;
        let absorbed: Vec<f64> = cells
            .par_iter_mut()
            .enumerate()
            .map(|(i, m)| {
                let mut star0 = 0.0;
                for l in 0..n {
                    let source = if l == 0 { 2.0 * q[i] } else { 0.0 };
                    let star = m[l] - ratio * (faces[i + 1][l] - faces[i][l]) + dt * source;
                    if l == 0 {
                        star0 = star;
                    }
                    m[l] = star / (1.0 + dt * sigma_a[i] - dt * sigma_s[i] * collision[l]);
                }
                dx * (star0 - m[0])
            })
            .collect();
        ledger.absorbed += absorbed.iter().sum::<f64>();
        time = if k + 1 == steps.len() { cfg.t_final } else { time + dt };
        let total = mass(&cells);
        max_ledger_defect = max_ledger_defect.max(ledger.relative_defect(total));
        diagnostics.push(StepDiagnostics {
            t: time,
            mass: total,
            outflow: ledger.boundary_outflow,
            safeguard_count: 0,
            newton_iter_mean: 0.0,
        });
    }
    Ok(PnRun { order, dx, cells, time, ledger, diagnostics, max_ledger_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::eigenvalues_sorted;
    use crate::fvsolver::{InitialCondition, Piecewise, PSI_VAC};

    #[test]
    fn p1_operators() {
        let ops = pn_operators(1).unwrap();
        let a = ops.advection_matrix();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0 / 3.0, 0.0]));
        let e = eigenvalues_sorted(&a).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((e.eigenvalues[0] + s).abs() < 1e-14 && (e.eigenvalues[1] - s).abs() < 1e-14);
        assert!(pn_operators(0).is_err() && pn_operators(200).is_err());
    }

    #[test]
    fn collision_diagonal_and_row_sums() {
        let ops = pn_operators(3).unwrap();
        assert_eq!(ops.c_diag, vec![0.0, -1.0, -3.0, -6.0]);
        let ops = pn_operators(9).unwrap();
        let mut out = vec![0.0; 10];
        ops.apply(&[1.0; 10], &mut out);
        for v in &out[1..9] {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let dense = ops.advection_matrix() * nalgebra::DVector::from_element(10, 1.0);
        assert_eq!(out.as_slice(), dense.as_slice());
    }

    #[test]
    fn spectrum_inside_unit_interval() {
        for order in [1, 3, 7, 99] {
            let e = eigenvalues_sorted(&pn_operators(order).unwrap().advection_matrix()).unwrap();
            assert!(e.eigenvalues[0] > -1.0 && *e.eigenvalues.last().unwrap() < 1.0, "N = {order}");
            assert!(e.min_adjacent_gap > 0.0);
        }
    }

    #[test]
    fn beam_ghost_has_unit_density() {
        let m = boundary_moments(&BoundaryCondition::beam(), 5, &Quadrature::default()).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!(m[1..].iter().all(|&v| v > 0.9 && v <= 1.0), "{m:?}");
        let vac = boundary_moments(&BoundaryCondition::VacuumIso { psi_vac: 0.25 }, 3, &Quadrature::default()).unwrap();
        assert!((vac[0] - 0.5).abs() < 1e-15 && vac[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn closed_box_relaxes_to_isotropy() {
        let cfg = ProblemConfig {
            domain: [0.0, 1.0],
            n_cells: 100,
            t_final: 10.0,
            cfl: 0.9,
            sigma_a: Piecewise::default(),
            sigma_s: Piecewise::constant(0.0, 1.0, 5.0),
            q: Piecewise::default(),
            ic: InitialCondition::Vacuum { psi_vac: PSI_VAC },
            bc_left: BoundaryCondition::Reflective,
            bc_right: BoundaryCondition::Reflective,
            collision: CollisionOperator::LaplaceBeltrami,
        };
        let initial: Vec<Vec<f64>> = (0..100).map(|_| (0..8).map(|l| 1.0 / (l as f64 + 1.0)).collect()).collect();
        let run = pn_run_from(&cfg, 7, &Quadrature::default(), Some(initial)).unwrap();
        assert!(run.max_ledger_defect < 1e-12);
        assert!((run.total_mass() - 1.0).abs() < 1e-12);
        for m in &run.cells {
            for l in 1..8 {
                // initial ratio is 1 / (l + 1)
                assert!((m[l] / m[0]).abs() < 1e-4, "{m:?}");
            }
        }
    }
}
