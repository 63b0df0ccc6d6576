//! Benchmark definitions, configuration files, model selection, profile
//! output and comparison.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{AngularBasis, BasisKind, Quadrature};
use crate::closure::SolverOptions;
use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::fvsolver::{
    run_kinetic, BoundaryCondition, InitialCondition, MassLedger, Piecewise, ProblemConfig, Segment,
    StepDiagnostics, DEFAULT_CFL, DIAGNOSTICS_HEADER, PSI_VAC,
};
use crate::pn::{pn_run, MAX_ORDER};

pub const BUILTINS: [&str; 2] = ["plane_source", "source_beam"];
pub const DEFAULT_CELLS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelId {
    DMM2,
    MM1,
    MM2,
    M1,
    M2,
    M3,
    PN(usize),
}

impl ModelId {
    /// The six entropy-closed models of the benchmark roster.
    pub const KINETIC: [ModelId; 6] = [ModelId::DMM2, ModelId::MM1, ModelId::MM2, ModelId::M1, ModelId::M2, ModelId::M3];

    pub fn basis(self) -> AngularBasis {
        let (kind, order) = match self {
            ModelId::DMM2 => (BasisKind::DiffMixed, 2),
            ModelId::MM1 => (BasisKind::Mixed, 1),
            ModelId::MM2 => (BasisKind::Mixed, 2),
            ModelId::M1 => (BasisKind::FullMonomial, 1),
            ModelId::M2 => (BasisKind::FullMonomial, 2),
            ModelId::M3 => (BasisKind::FullMonomial, 3),
            ModelId::PN(n) => (BasisKind::Legendre, n),
        };
        AngularBasis::new(kind, order).expect("model orders are valid")
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::PN(n) => write!(f, "P{n}"),
            other => write!(f, "{other:?}"),
        }
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let model = match upper.as_str() {
            "DMM2" => ModelId::DMM2,
            "MM1" => ModelId::MM1,
            "MM2" => ModelId::MM2,
            "M1" => ModelId::M1,
            "M2" => ModelId::M2,
            "M3" => ModelId::M3,
            _ => {
                let digits = upper.strip_prefix("PN").or_else(|| upper.strip_prefix('P'));
                let order = digits
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown model '{s}'")))?;
                if !(1..=MAX_ORDER).contains(&order) {
                    return Err(Error::Parse(format!("P_N order {order} outside 1..={MAX_ORDER}")));
                }
                ModelId::PN(order)
            }
        };
        Ok(model)
    }
}

/// Comma-separated model list.
pub fn parse_models(s: &str) -> Result<Vec<ModelId>> {
    let models = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>>>()?;
    if models.is_empty() {
        return Err(Error::Parse("empty model list".into()));
    }
    Ok(models)
}

/// Basis names as accepted on the command line (`dmm2`, `mm1`, `m3`, ...).
pub fn parse_basis(s: &str) -> Result<AngularBasis> {
    match s.parse::<ModelId>()? {
        ModelId::PN(_) => Err(Error::Parse(format!("'{s}' is not an entropy-closed basis"))),
        model => Ok(model.basis()),
    }
}

/// Comma-separated list of finite reals.
pub fn parse_moments(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("'{p}' is not a finite number")))
        })
        .collect()
}

pub fn builtin(name: &str) -> Option<ProblemConfig> {
    let seg = |from, to, value| Segment { from, to, value };
    match name {
        "plane_source" => Some(ProblemConfig {
            domain: [-1.2, 1.2],
            n_cells: DEFAULT_CELLS,
            t_final: 1.0,
            cfl: DEFAULT_CFL,
            sigma_a: Piecewise(vec![seg(-1.2, 1.2, 0.0)]),
            sigma_s: Piecewise(vec![seg(-1.2, 1.2, 1.0)]),
            q: Piecewise(vec![seg(-1.2, 1.2, 0.0)]),
            ic: InitialCondition::PlaneSourceDelta { psi_vac: PSI_VAC },
            bc_left: BoundaryCondition::VacuumIso { psi_vac: PSI_VAC },
            bc_right: BoundaryCondition::VacuumIso { psi_vac: PSI_VAC },
            collision: CollisionOperator::LaplaceBeltrami,
        }),
        "source_beam" => Some(ProblemConfig {
            domain: [0.0, 3.0],
            n_cells: DEFAULT_CELLS,
            t_final: 2.5,
            cfl: DEFAULT_CFL,
            sigma_a: Piecewise(vec![seg(0.0, 2.0, 1.0), seg(2.0, 3.0, 0.0)]),
            sigma_s: Piecewise(vec![seg(0.0, 1.0, 0.0), seg(1.0, 2.0, 2.0), seg(2.0, 3.0, 10.0)]),
            q: Piecewise(vec![seg(1.0, 1.5, 0.5)]),
            ic: InitialCondition::Vacuum { psi_vac: PSI_VAC },
            bc_left: BoundaryCondition::beam(),
            bc_right: BoundaryCondition::VacuumIso { psi_vac: PSI_VAC },
            collision: CollisionOperator::LaplaceBeltrami,
        }),
        _ => None,
    }
}

/// Parses and validates a JSON configuration document.
pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let cfg: ProblemConfig = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A builtin name or the path of a JSON configuration file.
pub fn load_config(source: &str) -> Result<ProblemConfig> {
    if let Some(cfg) = builtin(source) {
        return Ok(cfg);
    }
    let text = fs::read_to_string(source)
        .map_err(|e| Error::Config(format!("'{source}' is neither a builtin ({}) nor readable: {e}", BUILTINS.join(", "))))?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{source}: {msg}")),
        other => other,
    })
}

pub fn save_config(cfg: &ProblemConfig, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Cell-centred profile with named columns (`x` excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub model: Option<String>,
    pub manifest: Option<String>,
    pub columns: Vec<String>,
    pub x: Vec<f64>,
    /// One row per cell, `columns.len()` values each.
    pub rows: Vec<Vec<f64>>,
}

impl Profile {
    pub fn density(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.model {
            out += &format!("# model={m}\n");
        }
        if let Some(h) = &self.manifest {
            out += &format!("# manifest={h}\n");
        }
        out += &format!("x,{}\n", self.columns.join(","));
        for (x, row) in self.x.iter().zip(&self.rows) {
            let values: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            out += &format!("{x:.12e},{}\n", values.join(","));
        }
        out
    }
}

pub fn parse_profile(text: &str) -> Result<Profile> {
    let mut model = None;
    let mut manifest = None;
    let mut header: Option<Vec<String>> = None;
    let mut x = Vec::new();
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(m) = comment.strip_prefix("model=") {
                model = Some(m.to_string());
            } else if let Some(h) = comment.strip_prefix("manifest=") {
                manifest = Some(h.to_string());
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => {
                if fields.len() < 2 || fields[0] != "x" || fields.iter().any(|f| f.is_empty()) {
                    return Err(Error::Parse(format!("line {}: expected header 'x,<columns>'", no + 1)));
                }
                header = Some(fields[1..].iter().map(|s| s.to_string()).collect());
            }
            Some(h) => {
                if fields.len() != h.len() + 1 {
                    return Err(Error::Parse(format!(
                        "line {}: {} fields, header has {}",
                        no + 1,
                        fields.len(),
                        h.len() + 1
                    )));
                }
                let values = fields
                    .iter()
                    .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| Error::Parse(format!("line {}: non-numeric field", no + 1)))?;
                x.push(values[0]);
                rows.push(values[1..].to_vec());
            }
        }
    }
    let columns = header.ok_or_else(|| Error::Parse("missing header".into()))?;
    if x.is_empty() {
        return Err(Error::Parse("profile has no rows".into()));
    }
    Ok(Profile { model, manifest, columns, x, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    /// L1 distance divided by the L1 norm of the second profile.
    RelL1,
    Linf,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "rel-l1" | "rel_l1" | "rell1" => Ok(Norm::RelL1),
            "linf" => Ok(Norm::Linf),
            _ => Err(Error::Parse(format!("unknown norm '{s}' (l1, rel-l1, linf)"))),
        }
    }
}

/// Distance between the densities of two profiles on the same mesh.
pub fn compare_profiles(a: &Profile, b: &Profile, norm: Norm) -> Result<f64> {
    compare_densities(&a.x, &a.density(), &b.x, &b.density(), norm)
}

pub fn compare_densities(xa: &[f64], a: &[f64], xb: &[f64], b: &[f64], norm: Norm) -> Result<f64> {
    if xa.len() != xb.len() || a.len() != xa.len() || b.len() != xb.len() {
        return Err(Error::MeshMismatch(format!("{} cells vs {} cells", xa.len(), xb.len())));
    }
    let span = xa.iter().chain(xb).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if let Some(i) = (0..xa.len()).find(|&i| (xa[i] - xb[i]).abs() > 1e-9 * span) {
        return Err(Error::MeshMismatch(format!("cell {i}: x = {} vs {}", xa[i], xb[i])));
    }
    let dx = if xa.len() > 1 { (xa[xa.len() - 1] - xa[0]) / (xa.len() - 1) as f64 } else { 1.0 };
    let diff = a.iter().zip(b).map(|(p, q)| (p - q).abs());
    Ok(match norm {
        Norm::L1 => dx * diff.sum::<f64>(),
        Norm::RelL1 => {
            let base = dx * b.iter().map(|v| v.abs()).sum::<f64>();
            if base == 0.0 {
                return Err(Error::Numeric("relative distance to a zero profile".into()));
            }
            dx * diff.sum::<f64>() / base
        }
        Norm::Linf => diff.fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: String,
    pub models: Vec<String>,
    pub out_dir: PathBuf,
    pub n_cells: usize,
    pub cfl: f64,
    pub quadrature_points: usize,
    pub gradient_tol: f64,
    pub seed: u64,
}

impl RunManifest {
    /// SHA-256 of the manifest's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_ids(&self) -> Result<Vec<ModelId>> {
        self.models.iter().map(|m| m.parse()).collect()
    }

    /// The manifest's problem: the named config with cell count and CFL
    /// overridden.
    pub fn problem(&self) -> Result<ProblemConfig> {
        let mut cfg = load_config(&self.config)?;
        cfg.n_cells = self.n_cells;
        cfg.cfl = self.cfl;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRun {
    pub model: ModelId,
    pub profile: Profile,
    pub ledger: MassLedger,
    pub final_mass: f64,
    pub max_ledger_defect: f64,
    pub diagnostics: Vec<StepDiagnostics>,
    pub safeguard_events: usize,
    pub ladder_events: usize,
}

/// Runs one model on `cfg`.
pub fn run_model(cfg: &ProblemConfig, model: ModelId, quad: &Quadrature, opts: &SolverOptions) -> Result<ModelRun> {
    let x = cfg.cell_centers();
    match model {
        ModelId::PN(order) => {
            let run = pn_run(cfg, order, quad)?;
            let final_mass = run.total_mass();
            Ok(ModelRun {
                model,
                profile: Profile {
                    model: Some(model.to_string()),
                    manifest: None,
                    columns: vec!["u0".into()],
                    x,
                    rows: run.densities().into_iter().map(|v| vec![v]).collect(),
                },
                ledger: run.ledger,
                final_mass,
                max_ledger_defect: run.max_ledger_defect,
                diagnostics: run.diagnostics,
                safeguard_events: 0,
                ladder_events: 0,
            })
        }
        _ => {
            let basis = model.basis();
            let run = run_kinetic(cfg, basis, quad.clone(), opts.clone())?;
            Ok(ModelRun {
                model,
                profile: Profile {
                    model: Some(model.to_string()),
                    manifest: None,
                    columns: basis.component_names(),
                    x,
                    rows: run.state.cells.iter().map(|u| u.values.clone()).collect(),
                },
                ledger: run.ledger,
                final_mass: run.state.total_mass(),
                max_ledger_defect: run.max_ledger_defect,
                diagnostics: run.diagnostics,
                safeguard_events: run.safeguard_events,
                ladder_events: run.ladder_events,
            })
        }
    }
}

/// Runs every model of the manifest and writes `<model>.csv`,
/// `<model>_diagnostics.csv` and `manifest.json` into the output directory.
pub fn solve(manifest: &RunManifest) -> Result<Vec<ModelRun>> {
    let cfg = manifest.problem()?;
    let models = manifest.model_ids()?;
    if models.is_empty() {
        return Err(Error::Config("no models requested".into()));
    }
    let quad = Quadrature::gauss_legendre_halves(manifest.quadrature_points)
        .map_err(|e| Error::Config(e.to_string()))?;
    if !(manifest.gradient_tol > 0.0) {
        return Err(Error::Config(format!("tolerance {} must be positive", manifest.gradient_tol)));
    }
    let opts = SolverOptions::with_tol(manifest.gradient_tol);
    fs::create_dir_all(&manifest.out_dir)?;
    let hash = manifest.hash();
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(manifest.out_dir.join("manifest.json"), json + "\n")?;
    let mut runs = Vec::new();
    for model in models {
        let mut run = run_model(&cfg, model, &quad, &opts)?;
        run.profile.manifest = Some(hash.clone());
        fs::write(manifest.out_dir.join(format!("{model}.csv")), run.profile.to_csv())?;
        let mut diag = format!("{DIAGNOSTICS_HEADER}\n");
        for d in &run.diagnostics {
            diag += &d.csv_row();
            diag.push('\n');
        }
        fs::write(manifest.out_dir.join(format!("{model}_diagnostics.csv")), diag)?;
        runs.push(run);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_ids_round_trip() {
        for m in ModelId::KINETIC.into_iter().chain([ModelId::PN(99), ModelId::PN(1)]) {
            assert_eq!(m.to_string().parse::<ModelId>().unwrap(), m);
        }
        assert_eq!("pn7".parse::<ModelId>().unwrap(), ModelId::PN(7));
        assert_eq!(" dmm2 ".parse::<ModelId>().unwrap(), ModelId::DMM2);
        for bad in ["", "P0", "P200", "M4", "DMM3", "P-1", "P+3", "Px"] {
            assert!(bad.parse::<ModelId>().is_err(), "{bad}");
        }
        assert_eq!(parse_models("DMM2,MM1").unwrap(), vec![ModelId::DMM2, ModelId::MM1]);
        assert!(parse_models(",").is_err());
        assert!(parse_basis("p3").is_err());
        assert_eq!(parse_basis("dmm2").unwrap(), AngularBasis::dmm2());
    }

    #[test]
    fn moment_lists() {
        assert_eq!(parse_moments("1, 0.5,2e-1").unwrap(), vec![1.0, 0.5, 0.2]);
        assert!(parse_moments("1,,2").is_err());
        assert!(parse_moments("1,nan").is_err());
        assert!(parse_moments("1,inf").is_err());
    }

    #[test]
    fn builtin_parameters() {
        let ps = load_config("plane_source").unwrap();
        assert_eq!((ps.domain, ps.t_final), ([-1.2, 1.2], 1.0));
        assert_eq!(ps.ic, InitialCondition::PlaneSourceDelta { psi_vac: 0.5e-8 });
        let sb = load_config("source_beam").unwrap();
        assert_eq!((sb.domain, sb.t_final), ([0.0, 3.0], 2.5));
        for (z, s) in [(0.5, 0.0), (1.0, 0.0), (1.5, 2.0), (2.0, 2.0), (2.5, 10.0)] {
            assert_eq!(sb.sigma_s.eval(z), s, "sigma_s({z})");
        }
        for (z, a) in [(0.5, 1.0), (2.0, 1.0), (2.5, 0.0)] {
            assert_eq!(sb.sigma_a.eval(z), a, "sigma_a({z})");
        }
        for (z, q) in [(0.9, 0.0), (1.0, 0.5), (1.5, 0.5), (1.6, 0.0)] {
            assert_eq!(sb.q.eval(z), q, "q({z})");
        }
    }

    #[test]
    fn config_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        for name in BUILTINS {
            let cfg = builtin(name).unwrap();
            let path = dir.path().join(format!("{name}.json"));
            save_config(&cfg, &path).unwrap();
            assert_eq!(load_config(path.to_str().unwrap()).unwrap(), cfg);
        }
        let err = parse_config("{\n  \"domain\": [0, 1],\n  \"n_cells\": \"many\"\n}").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut cfg = builtin("source_beam").unwrap();
        cfg.sigma_s.0.push(Segment { from: 0.5, to: 0.7, value: 1.0 });
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
        assert!(matches!(load_config("/nonexistent/config.json"), Err(Error::Config(_))));
    }

    fn profile(values: &[f64], dx: f64) -> Profile {
        Profile {
            model: None,
            manifest: None,
            columns: vec!["u0".into()],
            x: (0..values.len()).map(|i| (i as f64 + 0.5) * dx).collect(),
            rows: values.iter().map(|v| vec![*v]).collect(),
        }
    }

    #[test]
    fn profile_distances() {
        let b = profile(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 0.1);
        assert_eq!(compare_profiles(&b, &b, Norm::L1).unwrap(), 0.0);
        let a = profile(&b.density().iter().map(|v| v + 0.1).collect::<Vec<_>>(), 0.1);
        assert!((compare_profiles(&a, &b, Norm::L1).unwrap() - 0.1).abs() < 1e-12);
        assert!((compare_profiles(&a, &b, Norm::Linf).unwrap() - 0.1).abs() < 1e-12);
        assert!((compare_profiles(&a, &b, Norm::RelL1).unwrap() - 0.1 / 5.5).abs() < 1e-12);
        let c = profile(&[1.0; 9], 0.1);
        assert!(matches!(compare_profiles(&a, &c, Norm::L1), Err(Error::MeshMismatch(_))));
        let shifted = profile(&[1.0; 10], 0.2);
        assert!(matches!(compare_profiles(&b, &shifted, Norm::L1), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn profile_csv_round_trip() {
        let mut p = profile(&[1.0, 2.5e-9, 3.25], 0.5);
        p.columns = vec!["u0".into(), "u1".into()];
        p.rows = vec![vec![1.0, 0.1], vec![2.5e-9, -0.2], vec![3.25, 1.0 / 3.0]];
        p.model = Some("DMM2".into());
        p.manifest = Some("abc".into());
        let text = p.to_csv();
        assert!(text.contains("# model=DMM2\n# manifest=abc\nx,u0,u1\n"));
        let q = parse_profile(&text).unwrap();
        assert_eq!(q.model, p.model);
        assert_eq!(q.columns, p.columns);
        for (r, s) in p.rows.iter().zip(&q.rows) {
            for (a, b) in r.iter().zip(s) {
                assert!((a - b).abs() <= 1e-12 * a.abs());
            }
        }
        for bad in ["", "x\n", "y,u0\n1,2\n", "x,u0\n1\n", "x,u0\n1,abc\n", "x,u0\n"] {
            assert!(parse_profile(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn solve_writes_deterministic_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = |out: PathBuf| RunManifest {
            config: "plane_source".into(),
            models: vec!["DMM2".into(), "P3".into()],
            out_dir: out,
            n_cells: 20,
            cfl: DEFAULT_CFL,
            quadrature_points: 20,
            gradient_tol: 1e-9,
            seed: 0,
        };
        let m1 = manifest(dir.path().join("a"));
        let m2 = manifest(dir.path().join("b"));
        let runs = solve(&m1).unwrap();
        solve(&m2).unwrap();
        assert_eq!(runs.len(), 2);
        let read = |m: &RunManifest, f: &str| fs::read_to_string(m.out_dir.join(f)).unwrap();
        let a = read(&m1, "DMM2.csv");
        let b = read(&m2, "DMM2.csv");
        // the manifests differ only in out_dir, which changes the hash line
        let body = |s: &str| s.lines().filter(|l| !l.starts_with("# manifest")).collect::<Vec<_>>().join("\n");
        assert_eq!(body(&a), body(&b));
        assert!(a.starts_with("# model=DMM2\n# manifest="));
        assert!(a.contains("x,u0,u1,u2p,u2m\n"));
        assert!(read(&m1, "P3.csv").contains("x,u0\n"));
        assert!(read(&m1, "DMM2_diagnostics.csv").starts_with(DIAGNOSTICS_HEADER));
        assert_eq!(parse_profile(&a).unwrap().manifest, Some(m1.hash()));
    }
}
