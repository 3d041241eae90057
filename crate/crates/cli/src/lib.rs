//! Batch driver: configuration, the grid → diagram → operator → eigensolver
//! pipeline, and one function per subcommand. Every command writes its
//! files into an output directory and returns a JSON summary.

pub mod config;
pub mod cusp;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};
use vorotc::eigensolve::{davidson, dense_eig, initial_guess};
use vorotc::error::Error as CoreError;
use vorotc::fvops::SelfInteraction;
use vorotc::hamiltonian::{ManyBodyOperator, OperatorKind};
use vorotc::lcu::{self, LcuDecomposition};
use vorotc::molgrid::{assemble_grid, Atom, Grid, LengthUnit, Molecule};
use vorotc::qcpe::{self, QcpeConfig};
use vorotc::transcorrelated::JastrowParams;
use vorotc::vec3;
use vorotc::voronoi::{build_diagram, BoundingBox, VoronoiDiagram};
use vorotc::ANGSTROM_TO_BOHR;

pub use config::RunConfig;
use config::{GridConfig, QcpeSource, SolverConfig};

/// Exit code for invalid input.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failure.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A command finished but a computation inside it failed; the partial
    /// report has already been written.
    #[error("numerical failure: {message}")]
    Partial { message: String, report: Value },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Partial { .. } => EXIT_NUMERICAL,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parameter(_) | CoreError::Unsupported(_) | CoreError::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// A grid with its Voronoi diagram.
pub struct System {
    pub molecule: Molecule,
    pub grid: Grid,
    pub diagram: VoronoiDiagram,
}

pub fn build_system(molecule: &Molecule, grid: &GridConfig) -> Result<System, CliError> {
    let specs = vec![grid.atom_spec(); molecule.len()];
    let g = assemble_grid(molecule, &specs, grid.merge_eps)?;
    let bbox = BoundingBox::around_molecule(molecule, g.max_radius())?;
    let diagram = build_diagram(g.points(), bbox)?;
    Ok(System { molecule: molecule.clone(), grid: g, diagram })
}

/// Hermitian operator, or the transcorrelated one when a Jastrow factor
/// is active.
pub fn build_operator(sys: &System, eta: usize, jastrow: Option<&JastrowParams>, si: SelfInteraction) -> Result<ManyBodyOperator, CliError> {
    Ok(match jastrow.filter(|j| !j.is_off()) {
        Some(j) => ManyBodyOperator::transcorrelated(&sys.diagram, &sys.molecule, eta, j, si)?,
        None => ManyBodyOperator::hermitian(&sys.diagram, &sys.molecule, eta, si)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(rename = "E_electronic")]
    pub e_electronic: f64,
    #[serde(rename = "E_total")]
    pub e_total: f64,
    pub residual: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub dim: usize,
    pub electrons: usize,
    pub operator: &'static str,
    pub iterations: usize,
    pub converged: bool,
}

pub struct Solution {
    pub report: SolveReport,
    /// Right eigenvector (absent when the solver did not converge).
    pub vector: Option<Vec<f64>>,
    pub system: System,
    pub kind: OperatorKind,
}

/// Lowest eigenpair of the many-body operator on the molecule's grid.
/// Non-convergence is not an error here: the report says so.
pub fn solve(
    molecule: &Molecule,
    grid: &GridConfig,
    eta: usize,
    jastrow: Option<&JastrowParams>,
    si: SelfInteraction,
    solver: &SolverConfig,
) -> Result<Solution, CliError> {
    if !(1..=2).contains(&eta) {
        return Err(CliError::Config(format!("solve supports 1 or 2 electrons, got {eta}")));
    }
    let system = build_system(molecule, grid)?;
    let op = build_operator(&system, eta, jastrow, si)?;
    let kind = op.kind();
    let volumes = (kind == OperatorKind::Hermitian).then(|| system.diagram.volumes());
    let guess = initial_guess(system.diagram.points(), volumes, molecule, eta)?;
    let n = system.diagram.len();
    let dim = n.pow(eta as u32);
    let e_nuc = molecule.nuclear_repulsion();
    let operator = match kind {
        OperatorKind::Hermitian => "hermitian",
        OperatorKind::Transcorrelated => "transcorrelated",
    };
    let base = |e: f64, residual: f64, iterations: usize, converged: bool| SolveReport {
        e_electronic: e,
        e_total: e + e_nuc,
        residual,
        n,
        dim,
        electrons: eta,
        operator,
        iterations,
        converged,
    };
    match davidson(&op, &guess, &solver.options_for(dim)) {
        Ok(r) => Ok(Solution { report: base(r.eigenvalue, r.residual, r.iterations, true), vector: Some(r.vector), system, kind }),
        Err(CoreError::NotConverged { eigenvalue, residual, iterations }) => {
            Ok(Solution { report: base(eigenvalue, residual, iterations, false), vector: None, system, kind })
        }
        Err(e) => Err(e.into()),
    }
}

fn create(out: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let path = out.join(name);
    let f = File::create(&path).map_err(|e| io_err(&path, e))?;
    Ok((BufWriter::new(f), path))
}

fn write_json(out: &Path, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    let (mut w, path) = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let (mut w, path) = create(out, name)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub out: PathBuf,
    pub seed: u64,
}

impl CommonArgs {
    pub fn resolve(cfg: &RunConfig, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        Self {
            out: out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            seed: seed.unwrap_or(cfg.seed),
        }
    }
}

pub fn cmd_solve(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let mol = cfg.molecule()?;
    let eta = cfg.electrons(&mol)?;
    let jastrow = cfg.active_jastrow();
    let sol = solve(&mol, &cfg.grid, eta, jastrow.as_ref(), cfg.self_interaction, &cfg.solver)?;
    let report = serde_json::to_value(&sol.report).expect("report serialises");
    write_json(&args.out, "solve.json", &report)?;
    if !sol.report.converged {
        return Err(CliError::Partial { message: "eigensolver did not converge".into(), report });
    }
    Ok(report)
}

/// Places the two atoms of `mol` at distance `r` (bohr) about their midpoint,
/// along their current axis.
pub fn stretch_diatomic(mol: &Molecule, r: f64) -> Result<Molecule, CliError> {
    let a = mol.atoms();
    if a.len() != 2 {
        return Err(CliError::Config("dissociation scan needs a diatomic molecule".into()));
    }
    let mid = vec3::midpoint(a[0].position, a[1].position);
    let axis = vec3::unit(vec3::sub(a[1].position, a[0].position));
    let place = |s: f64| vec3::add(mid, vec3::scale(axis, s * r / 2.0));
    Ok(Molecule::new(vec![
        Atom { charge: a[0].charge, position: place(-1.0) },
        Atom { charge: a[1].charge, position: place(1.0) },
    ])?)
}

pub fn cmd_scan_dissociation(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let mol = cfg.molecule()?;
    let scan = cfg.scan.as_ref().ok_or_else(|| CliError::Config("config has no scan section".into()))?;
    let eta = cfg.electrons(&mol)?;
    let jastrow = cfg.active_jastrow();
    let factor = match scan.unit {
        LengthUnit::Bohr => 1.0,
        LengthUnit::Angstrom => ANGSTROM_TO_BOHR,
    };
    stretch_diatomic(&mol, 1.0)?;

    // separated-atom reference on the same per-atom grid
    let mut e_atoms = 0.0;
    let mut atoms_ok = true;
    for atom in mol.atoms() {
        let single = Molecule::new(vec![*atom])?;
        let ne = config::neutral_electrons(&single)?;
        let s = solve(&single, &cfg.grid, ne, jastrow.as_ref(), cfg.self_interaction, &cfg.solver)?;
        atoms_ok &= s.report.converged;
        e_atoms += s.report.e_total;
    }

    let mut csv = String::from("R,E_total,E_binding,status\n");
    let mut rows = Vec::new();
    let mut failures = 0;
    for &r in &scan.distances {
        let r_bohr = r * factor;
        let m = stretch_diatomic(&mol, r_bohr)?;
        let (e, status) = match solve(&m, &cfg.grid, eta, jastrow.as_ref(), cfg.self_interaction, &cfg.solver) {
            Ok(s) if s.report.converged => (s.report.e_total, "ok".to_string()),
            Ok(s) => (s.report.e_total, "not_converged".to_string()),
            Err(e) => (f64::NAN, format!("failed: {e}").replace(',', ";")),
        };
        if status != "ok" {
            failures += 1;
        }
        csv.push_str(&format!("{r_bohr:.10},{e:.10},{:.10},{status}\n", e - e_atoms));
        rows.push(json!({"R": r_bohr, "E_total": e, "E_binding": e - e_atoms, "status": status}));
    }
    let path = write_text(&args.out, "dissociation.csv", &csv)?;
    let report = json!({"E_atoms": e_atoms, "atoms_converged": atoms_ok, "points": rows, "csv": path});
    write_json(&args.out, "dissociation.json", &report)?;
    if failures > 0 || !atoms_ok {
        return Err(CliError::Partial { message: format!("{failures} scan point(s) failed"), report });
    }
    Ok(report)
}

/// One point of a grid-convergence scan.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergencePoint {
    pub n_radial: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub error: f64,
    pub converged: bool,
}

/// Total energies over a list of radial shell counts.
pub fn convergence_scan(cfg: &RunConfig, n_radial: &[usize], reference: f64) -> Result<Vec<ConvergencePoint>, CliError> {
    let mol = cfg.molecule()?;
    let eta = cfg.electrons(&mol)?;
    let jastrow = cfg.active_jastrow();
    n_radial
        .iter()
        .map(|&nr| {
            let s = solve(&mol, &cfg.grid.with_n_radial(nr), eta, jastrow.as_ref(), cfg.self_interaction, &cfg.solver)?;
            Ok(ConvergencePoint {
                n_radial: nr,
                n: s.report.n,
                e: s.report.e_total,
                error: s.report.e_total - reference,
                converged: s.report.converged,
            })
        })
        .collect()
}

pub fn cmd_scan_convergence(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let conv = cfg.convergence.as_ref().ok_or_else(|| CliError::Config("config has no convergence section".into()))?;
    let mol = cfg.molecule()?;
    let eta = cfg.electrons(&mol)?;
    let reference = match conv.reference {
        Some(e) => e,
        None if mol.len() == 1 && eta == 1 => -0.5 * mol.atoms()[0].charge.powi(2),
        None => return Err(CliError::Config("convergence.reference is required unless the system is a one-electron atom".into())),
    };
    let points = convergence_scan(cfg, &conv.n_radial, reference)?;
    let mut csv = String::from("N,E,error\n");
    for p in &points {
        csv.push_str(&format!("{},{:.10},{:.10}\n", p.n, p.e, p.error));
    }
    write_text(&args.out, "convergence.csv", &csv)?;
    let first = points.iter().find(|p| p.error.abs() <= conv.threshold).map(|p| p.n);
    let report = json!({"reference": reference, "threshold": conv.threshold, "first_N_within_threshold": first, "points": points});
    write_json(&args.out, "convergence.json", &report)?;
    if points.iter().any(|p| !p.converged) {
        return Err(CliError::Partial { message: "some grid sizes did not converge".into(), report });
    }
    Ok(report)
}

/// Maps a physical basis index into the ghost-padded register index.
pub fn padded_index(idx: usize, n: usize, np: usize, eta: usize) -> usize {
    let mut rest = idx;
    let mut out = 0;
    let mut scale = 1;
    for _ in 0..eta {
        out += (rest % n) * scale;
        rest /= n;
        scale *= np;
    }
    out
}

pub fn cmd_lcu(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let mol = cfg.molecule()?;
    let eta = cfg.electrons(&mol)?;
    let opts = cfg.lcu.clone().unwrap_or(config::LcuConfig { validate: false, prune: true });
    let sys = build_system(&mol, &cfg.grid)?;
    let n = sys.diagram.len();
    let np = n.next_power_of_two();
    if opts.validate && np.checked_pow(eta as u32).is_none_or(|d| d > lcu::RECONSTRUCT_LIMIT) {
        return Err(CliError::Config(format!(
            "validation needs N^eta <= {} (padded N = {np}, eta = {eta})",
            lcu::RECONSTRUCT_LIMIT
        )));
    }
    let op = build_operator(&sys, eta, cfg.active_jastrow().as_ref(), cfg.self_interaction)?;
    let raw = LcuDecomposition::from_operator(&op)?;
    let dec = if opts.prune { raw.prune_merge() } else { raw };
    let (w, _) = create(&args.out, "lcu_coefficients.csv")?;
    dec.write_csv(w)?;
    let norm = dec.one_norm();
    let mut report = json!({
        "lambda": norm.total,
        "n_strings": dec.n_strings(),
        "shift": dec.shift,
        "one_norm": norm,
        "N": n,
        "N_padded": np,
        "eta": eta,
    });
    if opts.validate {
        let h = op.dense_matrix()?;
        let r = lcu::reconstruct(&dec)?;
        let dim = h.nrows();
        let mut residual = 0.0f64;
        for j in 0..dim {
            let pj = padded_index(j, n, np, eta);
            for i in 0..dim {
                residual = residual.max((r[(padded_index(i, n, np, eta), pj)] - h[(i, j)]).abs());
            }
        }
        report["reconstruction_residual"] = json!(residual);
    }
    write_json(&args.out, "lcu_summary.json", &report)?;
    Ok(report)
}

/// Lowest-real-part eigenpair of a dense matrix with (numerically) real
/// spectrum; the eigenvector is returned as its real part.
pub fn ground_state_dense(h: &DMatrix<f64>) -> Result<(f64, DVector<f64>, f64), CliError> {
    let spec = dense_eig(h)?;
    let v = spec.vectors.as_ref().ok_or_else(|| CliError::Numerical("eigenvectors unavailable".into()))?;
    let mut psi = v.column(0).map(|z| z.re);
    if psi.norm() < 1e-8 {
        psi = v.column(0).map(|z| z.im);
    }
    let nrm = psi.norm();
    psi /= nrm;
    Ok((spec.values[0].re, psi, spec.max_imag()))
}

pub fn cmd_qcpe(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let q = cfg.qcpe.as_ref().ok_or_else(|| CliError::Config("config has no qcpe section".into()))?;
    let h = match q.source {
        QcpeSource::Random { n } => qcpe::random_real_spectrum(n, args.seed),
        QcpeSource::Hamiltonian => {
            let mol = cfg.molecule()?;
            let eta = cfg.electrons(&mol)?;
            let sys = build_system(&mol, &cfg.grid)?;
            let op = build_operator(&sys, eta, cfg.active_jastrow().as_ref(), cfg.self_interaction)?;
            let dim = sys.diagram.len().pow(eta as u32);
            if dim > 512 {
                return Err(CliError::Config(format!("qcpe on a Hamiltonian needs dimension <= 512, got {dim}")));
            }
            op.dense_matrix()?
        }
    };
    let (e_dense, psi, max_imag) = ground_state_dense(&h)?;
    let norm = qcpe::spectral_norm(&h);
    let qc = QcpeConfig {
        upsilon: q.upsilon,
        upsilon_prime: q.upsilon_prime,
        alpha: q.alpha_factor * norm,
        repeats: q.repeats,
        measurement: Default::default(),
    };
    let r = qcpe::qcpe_estimate(&h, &psi, &qc, args.seed, Some(e_dense))?;
    let mut report = serde_json::to_value(&r).expect("report serialises");
    report["E_dense"] = json!(e_dense);
    report["abs_error"] = json!((r.e_estimate - e_dense).abs());
    report["bound"] = json!(qcpe::accuracy_bound(&qc));
    report["alpha"] = json!(qc.alpha);
    report["spectral_norm"] = json!(norm);
    report["dense_max_imag"] = json!(max_imag);
    write_json(&args.out, "qcpe.json", &report)?;
    Ok(report)
}

pub fn cmd_cusp_cut(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let cc = cfg.cusp.as_ref().ok_or_else(|| CliError::Config("config has no cusp section".into()))?;
    let mol = cfg.molecule()?;
    let mu_ne = cfg.jastrow.map(|j| j.mu_ne).unwrap_or(f64::INFINITY);
    let cuts = cusp::cusp_cuts(&mol, &cfg.grid, mu_ne, &cc.mu_ee, cc.radius, cfg.self_interaction, &cfg.solver)?;
    let mut csv = String::from("mu_ee,phi,psi\n");
    for c in &cuts {
        let label = c.mu_ee.map_or("inf".to_string(), |m| m.to_string());
        for (phi, v) in c.phi.iter().zip(&c.psi) {
            csv.push_str(&format!("{label},{phi:.10},{v:.10}\n"));
        }
    }
    write_text(&args.out, "cusp_cut.csv", &csv)?;
    let report = json!({"cuts": cuts});
    write_json(&args.out, "cusp_cut.json", &report)?;
    if cuts.iter().any(|c| !c.converged) {
        return Err(CliError::Partial { message: "some cusp solves did not converge".into(), report });
    }
    Ok(report)
}

pub fn cmd_grid(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let mol = cfg.molecule()?;
    let specs = vec![cfg.grid.atom_spec(); mol.len()];
    let g = assemble_grid(&mol, &specs, cfg.grid.merge_eps)?;
    let (mut w, path) = create(&args.out, "grid.txt")?;
    g.write_text(&mut w)?;
    w.flush().map_err(|e| io_err(&path, e))?;
    let report = json!({
        "points": g.len(),
        "max_radius": g.max_radius(),
        "dropped_duplicates": g.dropped_duplicates(),
        "dropped_near_nucleus": g.dropped_near_nucleus(),
        "file": path,
    });
    write_json(&args.out, "grid.json", &report)?;
    Ok(report)
}

pub fn cmd_voronoi_stats(cfg: &RunConfig, args: &CommonArgs) -> Result<Value, CliError> {
    let mol = cfg.molecule()?;
    let sys = build_system(&mol, &cfg.grid)?;
    let report = serde_json::to_value(sys.diagram.stats()).expect("stats serialise");
    write_json(&args.out, "voronoi_stats.json", &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hydrogen() -> Molecule {
        Molecule::from_charges(&[(1.0, [0.0; 3])]).unwrap()
    }

    #[test]
    fn padded_index_layout() {
        assert_eq!(padded_index(3, 5, 8, 1), 3);
        // (i1, i2) = (1, 2): 1·5 + 2 on the physical grid, 1·8 + 2 padded
        assert_eq!(padded_index(1 * 5 + 2, 5, 8, 2), 1 * 8 + 2);
        assert_eq!(padded_index(24, 5, 8, 2), 4 + 8 * 4);
    }

    #[test]
    fn stretch_keeps_axis_and_midpoint() {
        let m = Molecule::from_charges(&[(1.0, [0.0, 0.0, -1.0]), (1.0, [0.0, 0.0, 1.0])]).unwrap();
        let s = stretch_diatomic(&m, 6.0).unwrap();
        assert_eq!(s.atoms()[0].position, [0.0, 0.0, -3.0]);
        assert_eq!(s.atoms()[1].position, [0.0, 0.0, 3.0]);
        assert!(matches!(stretch_diatomic(&hydrogen(), 1.0), Err(CliError::Config(_))));
    }

    #[test]
    fn small_hydrogen_solve() {
        let grid = GridConfig { n_radial: 6, ..Default::default() };
        let s = solve(&hydrogen(), &grid, 1, None, SelfInteraction::default(), &SolverConfig::default()).unwrap();
        assert!(s.report.converged);
        assert_eq!(s.report.n, 300);
        assert!((s.report.e_total + 0.5).abs() < 0.03, "{}", s.report.e_total);
        assert_eq!(s.report.e_total, s.report.e_electronic);
        assert!(solve(&hydrogen(), &grid, 3, None, SelfInteraction::default(), &SolverConfig::default()).is_err());
    }

    #[test]
    fn error_mapping() {
        assert_eq!(CliError::from(CoreError::Parameter("x".into())).exit_code(), EXIT_CONFIG);
        assert_eq!(
            CliError::from(CoreError::NotConverged { eigenvalue: 0.0, residual: 1.0, iterations: 3 }).exit_code(),
            EXIT_NUMERICAL
        );
    }
}
