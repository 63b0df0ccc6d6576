//! First-order kinetic finite-volume scheme for the entropy-closed moment
//! models in slab geometry.
//!
//! One step from `t_n` to `t_n + dt`:
//!
//! 1. explicit transport with the kinetic flux
//!    `F(i+1/2) = <mu b psi_i>_+ + <mu b psi_{i+1}>_-` plus the isotropic source;
//! 2. implicit collision and absorption,
//!    `((1 + dt sa) I - dt ss M) u = u* + dt ss g(aux*)`, where `aux*` (half
//!    densities, half first moments, `psi(0)`) comes from the closure of `u*`;
//! 3. a realizability safeguard that blends offending cells towards isotropy
//!    at fixed density.
//!
//! Boundary fluxes are half-range moments of the boundary distribution taken
//! at the closure's own quadrature nodes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{AngularBasis, Quadrature, Support};
use crate::closure::{ClosureSolution, EntropyClosure, Multipliers, SolverOptions};
use crate::collision::{AffineCollision, CollisionAux, CollisionOperator};
use crate::error::{Error, Result};
use crate::realizability::{check, has_explicit_check, regularize_moments, MomentVector, DEFAULT_TOLERANCE};

/// Vacuum approximation used by both benchmarks.
pub const PSI_VAC: f64 = 0.5e-8;
pub const DEFAULT_CFL: f64 = 0.9;
/// Margin the safeguard pulls offending cells to.
pub const SAFEGUARD_MARGIN: f64 = 1e-12;
const SAFEGUARD_BISECTIONS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub value: f64,
}

/// Piecewise-constant coefficient. A point takes the value of the first
/// segment containing it (endpoints included) and 0 outside all segments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Piecewise(pub Vec<Segment>);

impl Piecewise {
    pub fn constant(from: f64, to: f64, value: f64) -> Self {
        Self(vec![Segment { from, to, value }])
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.0.iter().find(|s| s.from <= z && z <= s.to).map_or(0.0, |s| s.value)
    }

    fn validate(&self, name: &str) -> Result<()> {
        for s in &self.0 {
            if !(s.from.is_finite() && s.to.is_finite() && s.from <= s.to) {
                return Err(Error::Config(format!("{name}: bad segment [{}, {}]", s.from, s.to)));
            }
            if !(s.value.is_finite() && s.value >= 0.0) {
                return Err(Error::Config(format!("{name}: value {} must be finite and non-negative", s.value)));
            }
        }
        let mut sorted = self.0.clone();
        sorted.sort_by(|a, b| a.from.total_cmp(&b.from));
        for w in sorted.windows(2) {
            if w[1].from < w[0].to {
                return Err(Error::Config(format!(
                    "{name}: segments [{}, {}] and [{}, {}] overlap",
                    w[0].from, w[0].to, w[1].from, w[1].to
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Vacuum { psi_vac: f64 },
    /// `psi_vac + delta(z)`, split over the two cells next to `z = 0`.
    PlaneSourceDelta { psi_vac: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryCondition {
    VacuumIso { psi_vac: f64 },
    /// `exp(-width (mu - center)^2)` normalized to unit density.
    Beam {
        #[serde(default = "beam_center")]
        center: f64,
        #[serde(default = "beam_width")]
        width: f64,
    },
    /// Specular reflection, `psi(mu) = psi(-mu)` at the wall.
    Reflective,
}

fn beam_center() -> f64 {
    1.0
}

fn beam_width() -> f64 {
    1e5
}

impl BoundaryCondition {
    pub fn beam() -> Self {
        BoundaryCondition::Beam { center: beam_center(), width: beam_width() }
    }

    /// Boundary distribution at the nodes of one half of `quad`, or `None`
    /// for a reflective wall.
    pub fn node_values(&self, quad: &Quadrature, side: Support) -> Option<Vec<f64>> {
        let nodes = match side {
            Support::Minus => &quad.nodes_minus,
            _ => &quad.nodes_plus,
        };
        match *self {
            BoundaryCondition::VacuumIso { psi_vac } => Some(vec![psi_vac; nodes.len()]),
            BoundaryCondition::Beam { center, width } => {
                let f = |mu: f64| (-width * (mu - center).powi(2)).exp();
                let norm: f64 = quad
                    .nodes_plus
                    .iter()
                    .zip(&quad.weights_plus)
                    .chain(quad.nodes_minus.iter().zip(&quad.weights_minus))
                    .map(|(&mu, &w)| w * f(mu))
                    .sum();
                Some(nodes.iter().map(|&mu| f(mu) / norm).collect())
            }
            BoundaryCondition::Reflective => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: [f64; 2],
    pub n_cells: usize,
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub sigma_a: Piecewise,
    #[serde(default)]
    pub sigma_s: Piecewise,
    #[serde(default)]
    pub q: Piecewise,
    pub ic: InitialCondition,
    pub bc_left: BoundaryCondition,
    pub bc_right: BoundaryCondition,
    #[serde(default)]
    pub collision: CollisionOperator,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        let [zl, zr] = self.domain;
        if !(zl.is_finite() && zr.is_finite() && zl < zr) {
            return Err(Error::Config(format!("domain [{zl}, {zr}] is empty")));
        }
        if self.n_cells == 0 {
            return Err(Error::Config("n_cells must be positive".into()));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final = {} must be positive", self.t_final)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 1]", self.cfl)));
        }
        self.sigma_a.validate("sigma_a")?;
        self.sigma_s.validate("sigma_s")?;
        self.q.validate("q")?;
        let psi_ok = |p: f64| p.is_finite() && p > 0.0;
        let (InitialCondition::Vacuum { psi_vac } | InitialCondition::PlaneSourceDelta { psi_vac }) = self.ic;
        if !psi_ok(psi_vac) {
            return Err(Error::Config(format!("initial psi_vac = {psi_vac} must be positive")));
        }
        if matches!(self.ic, InitialCondition::PlaneSourceDelta { .. }) && self.n_cells % 2 == 1 {
            return Err(Error::Config(format!("plane-source delta needs an even cell count, got {}", self.n_cells)));
        }
        for bc in [self.bc_left, self.bc_right] {
            match bc {
                BoundaryCondition::VacuumIso { psi_vac } if !psi_ok(psi_vac) => {
                    return Err(Error::Config(format!("boundary psi_vac = {psi_vac} must be positive")));
                }
                BoundaryCondition::Beam { center, width } if !(center.abs() <= 1.0 && width > 0.0) => {
                    return Err(Error::Config(format!("beam center {center} / width {width} invalid")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.domain[1] - self.domain[0]) / self.n_cells as f64
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells).map(|i| self.domain[0] + (i as f64 + 0.5) * dx).collect()
    }

    /// Cell densities of the initial condition.
    pub fn initial_densities(&self) -> Vec<f64> {
        let (psi_vac, delta) = match self.ic {
            InitialCondition::Vacuum { psi_vac } => (psi_vac, false),
            InitialCondition::PlaneSourceDelta { psi_vac } => (psi_vac, true),
        };
        let mut rho = vec![2.0 * psi_vac; self.n_cells];
        if delta {
            let mid = self.n_cells / 2;
            rho[mid - 1] += 1.0 / self.dx();
            rho[mid] += 1.0 / self.dx();
        }
        rho
    }

    /// Time step sizes: `cfl * dx` repeated, with a shorter last step landing
    /// on `t_final`.
    pub fn time_steps(&self) -> Vec<f64> {
        let dt = self.cfl * self.dx();
        let full = ((self.t_final / dt) * (1.0 + 1e-12)).floor() as usize;
        let mut steps = vec![dt; full];
        let rest = self.t_final - full as f64 * dt;
        if rest > 1e-12 * self.t_final {
            steps.push(rest);
        }
        steps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshState {
    pub dx: f64,
    pub cells: Vec<MomentVector>,
    /// Multipliers matching `cells`, reused as warm starts.
    pub multipliers: Vec<Multipliers>,
    pub time: f64,
}

impl MeshState {
    pub fn total_mass(&self) -> f64 {
        self.dx * self.cells.iter().map(|u| u.density()).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MassLedger {
    pub initial_mass: f64,
    pub boundary_outflow: f64,
    pub boundary_inflow: f64,
    pub source_input: f64,
    pub absorbed: f64,
}

impl MassLedger {
    pub fn new(initial_mass: f64) -> Self {
        Self { initial_mass, ..Self::default() }
    }

    pub fn expected_mass(&self) -> f64 {
        self.initial_mass + self.boundary_inflow + self.source_input - self.boundary_outflow - self.absorbed
    }

    /// `|mass - expected| / max(initial, inflow + source)`.
    pub fn relative_defect(&self, mass: f64) -> f64 {
        let scale = self.initial_mass.max(self.boundary_inflow + self.source_input);
        (mass - self.expected_mass()).abs() / scale
    }

    fn add(&mut self, other: &MassLedger) {
        self.boundary_outflow += other.boundary_outflow;
        self.boundary_inflow += other.boundary_inflow;
        self.source_input += other.source_input;
        self.absorbed += other.absorbed;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub ledger: MassLedger,
    /// Cells pulled back by the realizability safeguard.
    pub safeguard_events: usize,
    /// Cells whose closure needed the regularization ladder.
    pub ladder_events: usize,
    pub newton_iterations: usize,
    pub closure_solves: usize,
}

/// `<mu b psi_L>_+ + <mu b psi_R>_-`.
pub fn numerical_flux(sol_l: &ClosureSolution, sol_r: &ClosureSolution) -> Vec<f64> {
    sol_l.flux_plus.iter().zip(&sol_r.flux_minus).map(|(p, m)| p + m).collect()
}

enum Wall {
    /// Half flux moments the boundary distribution sends into the domain.
    Inflow(Vec<f64>),
    Reflective,
}

pub struct KineticSolver {
    cfg: ProblemConfig,
    closure: EntropyClosure,
    opts: SolverOptions,
    collision: AffineCollision,
    iso: Vec<f64>,
    sigma_a: Vec<f64>,
    sigma_s: Vec<f64>,
    q: Vec<f64>,
    left: Wall,
    right: Wall,
}

struct CellUpdate {
    u: Vec<f64>,
    alpha: Multipliers,
    safeguard: bool,
    ladder: bool,
    iterations: usize,
    solves: usize,
}

impl KineticSolver {
    pub fn new(cfg: ProblemConfig, basis: AngularBasis, quad: Quadrature, opts: SolverOptions) -> Result<Self> {
        cfg.validate()?;
        let closure = EntropyClosure::new(basis, quad);
        let collision = cfg.collision.affine(basis)?;
        let centers = cfg.cell_centers();
        let sample = |p: &Piecewise| centers.iter().map(|&z| p.eval(z)).collect::<Vec<_>>();
        let wall = |bc: BoundaryCondition, side: Support| match bc.node_values(closure.quadrature(), side) {
            Some(values) => Wall::Inflow(closure.half_flux_of_nodes(side, &values)),
            None => Wall::Reflective,
        };
        Ok(Self {
            left: wall(cfg.bc_left, Support::Plus),
            right: wall(cfg.bc_right, Support::Minus),
            sigma_a: sample(&cfg.sigma_a),
            sigma_s: sample(&cfg.sigma_s),
            q: sample(&cfg.q),
            iso: basis.isotropic_moments(),
            cfg,
            closure,
            opts,
            collision,
        })
    }

    pub fn closure(&self) -> &EntropyClosure {
        &self.closure
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    /// Isotropic cell states of the configured initial condition, with
    /// matching multipliers.
    pub fn initial_state(&self) -> Result<MeshState> {
        let basis = self.closure.basis();
        let cells: Vec<MomentVector> =
            self.cfg.initial_densities().into_iter().map(|rho| MomentVector::isotropic(basis, rho)).collect();
        let multipliers = cells
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let warm = Multipliers::isotropic(basis, u.density());
                self.closure
                    .solve_dual(u, &self.opts, Some(&warm))
                    .map(|s| s.alpha)
                    .map_err(|e| step_failure(i, 0.0, &u.values, e))
            })
            .collect::<Result<_>>()?;
        Ok(MeshState { dx: self.cfg.dx(), cells, multipliers, time: 0.0 })
    }

    /// Advances `state` by `dt`.
    pub fn step(&self, state: &mut MeshState, dt: f64) -> Result<StepReport> {
        let n_cells = state.cells.len();
        if !(dt > 0.0 && dt <= self.cfg.cfl * state.dx * (1.0 + 1e-12)) {
            return Err(Error::Precondition(format!("dt = {dt} violates the CFL bound")));
        }
        let time = state.time;
        let sols: Vec<ClosureSolution> = state
            .multipliers
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                self.closure.closure_moments(a).map_err(|e| step_failure(i, time, &state.cells[i].values, e))
            })
            .collect::<Result<_>>()?;

        let mut report = StepReport::default();
        let left = self.wall_flux(&self.left, &state.multipliers[0], Support::Plus)?;
        let right = self.wall_flux(&self.right, &state.multipliers[n_cells - 1], Support::Minus)?;
        let mut faces = Vec::with_capacity(n_cells + 1);
        faces.push(add(&left, &sols[0].flux_minus));
        faces.extend(sols.windows(2).map(|w| numerical_flux(&w[0], &w[1])));
        faces.push(add(&sols[n_cells - 1].flux_plus, &right));
        // left inflow is positive, right inflow negative
        report.ledger.boundary_inflow = dt * (left[0] - right[0]);
        report.ledger.boundary_outflow = dt * (sols[n_cells - 1].flux_plus[0] - sols[0].flux_minus[0]);

        let ratio = dt / state.dx;
        let star: Vec<Vec<f64>> = (0..n_cells)
            .map(|i| {
                let u = &state.cells[i].values;
                (0..u.len())
                    .map(|k| u[k] - ratio * (faces[i + 1][k] - faces[i][k]) + dt * self.q[i] * self.iso[k])
                    .collect()
            })
            .collect();
        report.ledger.source_input = dt * state.dx * self.q.iter().map(|q| q * self.iso[0]).sum::<f64>();

        let updates: Vec<CellUpdate> = (0..n_cells)
            .into_par_iter()
            .map(|i| {
                self.update_cell(i, &star[i], &state.multipliers[i], dt)
                    .map_err(|e| step_failure(i, time, &star[i], e))
            })
            .collect::<Result<_>>()?;

        let basis = self.closure.basis();
        for (i, up) in updates.into_iter().enumerate() {
            report.ledger.absorbed += state.dx * (star[i][0] - up.u[0]);
            report.safeguard_events += up.safeguard as usize;
            report.ladder_events += up.ladder as usize;
            report.newton_iterations += up.iterations;
            report.closure_solves += up.solves;
            state.cells[i] = MomentVector { basis, values: up.u };
            state.multipliers[i] = up.alpha;
        }
        state.time += dt;
        Ok(report)
    }

    fn wall_flux(&self, wall: &Wall, alpha: &Multipliers, side: Support) -> Result<Vec<f64>> {
        Ok(match wall {
            Wall::Inflow(flux) => flux.clone(),
            Wall::Reflective => {
                // mirrored nodes: the incoming value at mu is the cell's value at -mu
                let (plus, minus) = self.closure.node_values(alpha)?;
                let mirrored = if side == Support::Plus { minus } else { plus };
                self.closure.half_flux_of_nodes(side, &mirrored)
            }
        })
    }

    fn update_cell(&self, i: usize, star: &[f64], warm: &Multipliers, dt: f64) -> Result<CellUpdate> {
        let basis = self.closure.basis();
        let n = star.len();
        let (sa, ss) = (self.sigma_a[i], self.sigma_s[i]);
        let mut iterations = 0;
        let mut solves = 0;
        let mut warm = warm.clone();

        let mut rhs = DVector::from_column_slice(star);
        if ss > 0.0 && !self.collision.aux_map.is_zero() {
            let sol = self.closure.solve_dual(&MomentVector { basis, values: star.to_vec() }, &self.opts, Some(&warm))?;
            iterations += sol.iterations;
            solves += 1;
            let g = self.collision.aux_map.eval(n, &CollisionAux::from_closure(&sol))?;
            for (r, gk) in rhs.iter_mut().zip(g) {
                *r += dt * ss * gk;
            }
            warm = sol.alpha;
        }
        let u = if ss > 0.0 {
            let system = DMatrix::identity(n, n) * (1.0 + dt * sa) - &self.collision.linear * (dt * ss);
            system
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Conditioning("implicit collision system is singular".into()))?
                .as_slice()
                .to_vec()
        } else {
            rhs.iter().map(|r| r / (1.0 + dt * sa)).collect()
        };

        let mut u = MomentVector { basis, values: u };
        let mut safeguard = false;
        if has_explicit_check(basis) && !check(&u, DEFAULT_TOLERANCE)?.realizable {
            u = pull_back(&u)?;
            safeguard = true;
        }
        let sol = self.closure.solve_dual(&u, &self.opts, Some(&warm))?;
        iterations += sol.iterations;
        solves += 1;
        let ladder = sol.regularization_used > 0.0;
        let values = if ladder { sol.target } else { u.values };
        Ok(CellUpdate { u: values, alpha: sol.alpha, safeguard, ladder, iterations, solves })
    }
}

/// Smallest isotropic blend (by bisection) that brings `u` to the safeguard
/// margin.
fn pull_back(u: &MomentVector) -> Result<MomentVector> {
    if !(u.density() > 0.0) {
        return Err(Error::Numeric(format!("non-positive density {} cannot be regularized", u.density())));
    }
    let ok = |r: f64| -> Result<bool> { Ok(check(&regularize_moments(u, r)?, 0.0)?.margin >= SAFEGUARD_MARGIN) };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..SAFEGUARD_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    regularize_moments(u, hi)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn step_failure(cell: usize, time: f64, moments: &[f64], source: Error) -> Error {
    Error::StepFailure { cell, time, moments: moments.to_vec(), source: Box::new(source) }
}

/// One diagnostics row per completed step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub outflow: f64,
    pub safeguard_count: usize,
    pub newton_iter_mean: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "t,mass,outflow,safeguard_count,newton_iter_mean";

impl StepDiagnostics {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.12e},{:.12e},{:.12e},{},{:.6}",
            self.t, self.mass, self.outflow, self.safeguard_count, self.newton_iter_mean
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KineticRun {
    pub state: MeshState,
    pub ledger: MassLedger,
    pub diagnostics: Vec<StepDiagnostics>,
    pub safeguard_events: usize,
    pub ladder_events: usize,
    /// Largest relative ledger defect seen after any step.
    pub max_ledger_defect: f64,
}

/// Runs the configured problem to `t_final`.
pub fn run_kinetic(
    cfg: &ProblemConfig,
    basis: AngularBasis,
    quad: Quadrature,
    opts: SolverOptions,
) -> Result<KineticRun> {
    let solver = KineticSolver::new(cfg.clone(), basis, quad, opts)?;
    let mut state = solver.initial_state()?;
    let mut ledger = MassLedger::new(state.total_mass());
    let mut diagnostics = Vec::new();
    let (mut safeguard_events, mut ladder_events) = (0, 0);
    let mut max_ledger_defect: f64 = 0.0;
    let steps = cfg.time_steps();
    let last = steps.len() - 1;
    for (k, &dt) in steps.iter().enumerate() {
        let report = solver.step(&mut state, dt)?;
        if k == last {
            state.time = cfg.t_final;
        }
        ledger.add(&report.ledger);
        safeguard_events += report.safeguard_events;
        ladder_events += report.ladder_events;
        let mass = state.total_mass();
        max_ledger_defect = max_ledger_defect.max(ledger.relative_defect(mass));
        diagnostics.push(StepDiagnostics {
            t: state.time,
            mass,
            outflow: ledger.boundary_outflow,
            safeguard_count: safeguard_events,
            newton_iter_mean: report.newton_iterations as f64 / report.closure_solves.max(1) as f64,
        });
    }
    Ok(KineticRun { state, ledger, diagnostics, safeguard_events, ladder_events, max_ledger_defect })
}
