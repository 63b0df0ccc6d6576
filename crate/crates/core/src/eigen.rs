//! Flux Jacobian spectra and the parameter scans over the DMM2 realizable set.

use std::io::Write;

use nalgebra::linalg::{balancing, Schur};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{AngularBasis, Quadrature};
use crate::closure::{ClosureSolution, EntropyClosure, SolverOptions};
use crate::error::{Error, Result};
use crate::realizability::{phi1_bounds, regularize, MomentVector, NormalizedMoments};

/// Solver tolerance used for scan rows (relative to `u0`).
pub const SCAN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    pub max_imag_residual: f64,
    pub min_adjacent_gap: f64,
    pub max_adjacent_gap: f64,
}

/// `dF/du = J H^{-1}` with `H = <b b^T psi>` and `J = <mu b b^T psi>`.
pub fn flux_jacobian(closure: &EntropyClosure, sol: &ClosureSolution) -> Result<DMatrix<f64>> {
    let (h, j) = closure.hessian_pair(&sol.alpha)?;
    // H is symmetric, so A^T = H^{-1} J^T
    let at = match h.clone().cholesky() {
        Some(chol) => chol.solve(&j.transpose()),
        None => h
            .lu()
            .solve(&j.transpose())
            .ok_or_else(|| Error::Conditioning("moment Hessian H is singular".into()))?,
    };
    if at.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("flux Jacobian has non-finite entries".into()));
    }
    Ok(at.transpose())
}

/// General real eigensolve (balancing, Hessenberg reduction, shifted QR).
pub fn eigenvalues_sorted(a: &DMatrix<f64>) -> Result<EigenResult> {
    if !a.is_square() {
        return Err(Error::Domain(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let mut m = a.clone();
    balancing::balance_parlett_reinsch(&mut m);
    let schur = Schur::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("eigenvalue iteration did not converge".into()))?;
    let complex = schur.complex_eigenvalues();
    let mut eigenvalues: Vec<f64> = complex.iter().map(|z| z.re).collect();
    eigenvalues.sort_by(f64::total_cmp);
    let max_imag_residual = complex.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(EigenResult {
        eigenvalues,
        max_imag_residual,
        min_adjacent_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().copied().fold(f64::INFINITY, f64::min) },
        max_adjacent_gap: gaps.iter().copied().fold(0.0, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScanMode {
    /// `phi1` at the midpoint of its bounds.
    MeanCut,
    /// Both `phi1` bound surfaces, pulled inward by `regularize(., r)`.
    Boundary(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub phi2p: f64,
    pub phi2m: f64,
    pub phi1: f64,
    /// `NaN` when the closure failed.
    pub lambdas: [f64; 4],
    pub min_gap: f64,
    pub max_gap: f64,
    pub max_imag: f64,
    /// Regularization applied before the solve (scan and ladder combined);
    /// `NaN` when the closure failed.
    pub reg: f64,
}

impl ScanRow {
    pub fn converged(&self) -> bool {
        self.lambdas.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
}

pub const SCAN_HEADER: &str = "phi2p,phi2m,phi1,lam1,lam2,lam3,lam4,min_gap,max_gap,reg";

impl ScanTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SCAN_HEADER}")?;
        for r in &self.rows {
            let fields = [r.phi2p, r.phi2m, r.phi1]
                .into_iter()
                .chain(r.lambdas)
                .chain([r.min_gap, r.max_gap, r.reg])
                .map(|v| format!("{v:.10e}"))
                .collect::<Vec<_>>();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged()).count()
    }
}

/// Scans the DMM2 realizable set on a `resolution x resolution` grid in
/// `(phi2p, phi2m)` restricted to `phi2p + phi2m <= 1`.
pub fn scan(mode: ScanMode, resolution: usize) -> Result<ScanTable> {
    scan_with(mode, resolution, &SolverOptions::with_tol(SCAN_TOLERANCE))
}

pub fn scan_with(mode: ScanMode, resolution: usize, opts: &SolverOptions) -> Result<ScanTable> {
    if resolution < 2 {
        return Err(Error::Domain(format!("scan resolution must be at least 2, got {resolution}")));
    }
    if let ScanMode::Boundary(r) = mode {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Domain(format!("boundary regularization must lie in (0, 1), got {r}")));
        }
    }
    let basis = AngularBasis::dmm2();
    let closure = EntropyClosure::new(basis, Quadrature::default());
    let last = (resolution - 1) as f64;
    let mut points = Vec::new();
    for i in 0..resolution {
        for j in 0..resolution - i {
            let (p, m) = (i as f64 / last, j as f64 / last);
            let (lo, hi) = phi1_bounds(p, m)?;
            match mode {
                ScanMode::MeanCut => points.push(([0.5 * (lo + hi), p, m], 0.0)),
                ScanMode::Boundary(r) => {
                    for phi1 in [lo, hi] {
                        let phi = NormalizedMoments { basis, values: vec![phi1, p, m] };
                        let v = regularize(&phi, r)?.values;
                        points.push(([v[0], v[1], v[2]], r));
                    }
                }
            }
        }
    }
    let rows = points
        .par_iter()
        .map(|&([phi1, p, m], r)| scan_row(&closure, opts, phi1, p, m, r))
        .collect();
    Ok(ScanTable { rows })
}

fn scan_row(closure: &EntropyClosure, opts: &SolverOptions, phi1: f64, p: f64, m: f64, r: f64) -> ScanRow {
    let u = MomentVector { basis: closure.basis(), values: vec![1.0, phi1, p, m] };
    let spectrum = closure
        .solve_dual(&u, opts, None)
        .and_then(|sol| Ok((sol.regularization_used, eigenvalues_sorted(&flux_jacobian(closure, &sol)?)?)));
    match spectrum {
        Ok((ladder, e)) => ScanRow {
            phi2p: p,
            phi2m: m,
            phi1,
            lambdas: [e.eigenvalues[0], e.eigenvalues[1], e.eigenvalues[2], e.eigenvalues[3]],
            min_gap: e.min_adjacent_gap,
            max_gap: e.max_adjacent_gap,
            max_imag: e.max_imag_residual,
            reg: 1.0 - (1.0 - r) * (1.0 - ladder),
        },
        Err(_) => ScanRow {
            phi2p: p,
            phi2m: m,
            phi1,
            lambdas: [f64::NAN; 4],
            min_gap: f64::NAN,
            max_gap: f64::NAN,
            max_imag: f64::NAN,
            reg: f64::NAN,
        },
    }
}
