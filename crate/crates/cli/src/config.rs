//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vorotc::eigensolve::DavidsonOptions;
use vorotc::fvops::SelfInteraction;
use vorotc::molgrid::{AngularKind, AtomGridSpec, LengthUnit, Molecule};
use vorotc::transcorrelated::JastrowParams;

use crate::CliError;

/// Molecule given inline (same schema as a molecule file) or as a path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MoleculeSource {
    Path(PathBuf),
    Inline(serde_json::Value),
}

/// Per-atom grid recipe, applied identically to every atom.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n_radial")]
    pub n_radial: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_angular")]
    pub angular: AngularKind,
    #[serde(default = "default_merge_eps")]
    pub merge_eps: f64,
}

fn default_n_radial() -> usize {
    20
}
fn default_alpha() -> f64 {
    1.5
}
fn default_nu() -> f64 {
    1.0
}
fn default_angular() -> AngularKind {
    AngularKind::Lebedev { order: 50 }
}
fn default_merge_eps() -> f64 {
    1e-9
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_radial: default_n_radial(),
            alpha: default_alpha(),
            nu: default_nu(),
            angular: default_angular(),
            merge_eps: default_merge_eps(),
        }
    }
}

impl GridConfig {
    pub fn atom_spec(&self) -> AtomGridSpec {
        AtomGridSpec { n_radial: self.n_radial, alpha: self.alpha, nu: self.nu, angular: self.angular }
    }

    pub fn with_n_radial(&self, n_radial: usize) -> Self {
        Self { n_radial, ..*self }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_subspace")]
    pub max_subspace: usize,
    #[serde(default = "default_restart")]
    pub restart_size: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-6
}
fn default_subspace() -> usize {
    16
}
fn default_restart() -> usize {
    4
}
fn default_max_iter() -> usize {
    3000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_subspace: default_subspace(),
            restart_size: default_restart(),
            max_iter: default_max_iter(),
        }
    }
}

impl SolverConfig {
    /// Large two-electron problems keep a smaller basis to bound memory.
    pub fn options_for(&self, dim: usize) -> DavidsonOptions {
        let (max_subspace, restart_size) = if dim > 2_000_000 {
            (self.max_subspace.min(12), self.restart_size.min(3))
        } else {
            (self.max_subspace, self.restart_size)
        };
        DavidsonOptions { tol: self.tol, max_subspace, restart_size, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub distances: Vec<f64>,
    #[serde(default = "default_scan_unit")]
    pub unit: LengthUnit,
}

fn default_scan_unit() -> LengthUnit {
    LengthUnit::Angstrom
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Radial shell counts; each defines one grid of the scan.
    pub n_radial: Vec<usize>,
    /// Reference energy (hartree); defaults to `−Z²/2` for a one-electron atom.
    #[serde(default)]
    pub reference: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    1.6e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcuConfig {
    #[serde(default)]
    pub validate: bool,
    #[serde(default = "default_true")]
    pub prune: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QcpeSource {
    /// Random `D S D⁻¹` matrix of the given size.
    Random { n: usize },
    /// Dense operator built from the molecule and grid of the run.
    Hamiltonian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcpeRunConfig {
    pub source: QcpeSource,
    #[serde(default = "default_upsilon")]
    pub upsilon: usize,
    #[serde(default = "default_upsilon_prime")]
    pub upsilon_prime: usize,
    /// `α_H` as a multiple of `‖H‖₂`.
    #[serde(default = "default_alpha_factor")]
    pub alpha_factor: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_upsilon() -> usize {
    256
}
fn default_upsilon_prime() -> usize {
    5
}
fn default_alpha_factor() -> f64 {
    2.5
}
fn default_repeats() -> usize {
    15
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspConfig {
    /// `μ_ee` values; `null` runs the Hermitian operator.
    pub mu_ee: Vec<Option<f64>>,
    /// Target shell radius of the ring (bohr).
    #[serde(default = "default_ring_radius")]
    pub radius: f64,
}

fn default_ring_radius() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub molecule: Option<MoleculeSource>,
    #[serde(default)]
    pub grid: GridConfig,
    /// Electron count; defaults to the total nuclear charge.
    #[serde(default)]
    pub electrons: Option<usize>,
    #[serde(default)]
    pub jastrow: Option<JastrowParams>,
    #[serde(default)]
    pub self_interaction: SelfInteraction,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub lcu: Option<LcuConfig>,
    #[serde(default)]
    pub qcpe: Option<QcpeRunConfig>,
    #[serde(default)]
    pub cusp: Option<CuspConfig>,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Reads and validates a configuration file. Relative molecule paths
    /// resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(MoleculeSource::Path(p)), Some(dir)) = (&cfg.molecule, path.parent()) {
            if p.is_relative() {
                cfg.molecule = Some(MoleculeSource::Path(dir.join(p)));
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema-level checks that do not need the molecule.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid.atom_spec().validate()?;
        if !(self.grid.merge_eps >= 0.0 && self.grid.merge_eps.is_finite()) {
            return Err(cfg_err("grid.merge_eps must be finite and non-negative"));
        }
        if let Some(j) = &self.jastrow {
            j.validate()?;
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 || s.restart_size == 0 || s.max_subspace <= s.restart_size {
            return Err(cfg_err("solver: need tol > 0, max_iter > 0 and max_subspace > restart_size > 0"));
        }
        if let Some(scan) = &self.scan {
            if scan.distances.is_empty() || scan.distances.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(cfg_err("scan.distances must be a non-empty list of positive lengths"));
            }
        }
        if let Some(c) = &self.convergence {
            if c.n_radial.is_empty() || c.n_radial.contains(&0) {
                return Err(cfg_err("convergence.n_radial must be a non-empty list of positive integers"));
            }
            if !(c.threshold > 0.0) {
                return Err(cfg_err("convergence.threshold must be positive"));
            }
        }
        if let Some(q) = &self.qcpe {
            if !(q.alpha_factor >= 2.0) {
                return Err(cfg_err("qcpe.alpha_factor must be at least 2"));
            }
            if let QcpeSource::Random { n } = q.source {
                if n == 0 || n > 512 {
                    return Err(cfg_err("qcpe.source.n must be in 1..=512"));
                }
            }
        }
        if let Some(c) = &self.cusp {
            if c.mu_ee.is_empty() || c.mu_ee.iter().flatten().any(|m| !(*m > 0.0)) {
                return Err(cfg_err("cusp.mu_ee must be a non-empty list of positive values or null"));
            }
            if !(c.radius > 0.0) {
                return Err(cfg_err("cusp.radius must be positive"));
            }
        }
        Ok(())
    }

    pub fn molecule(&self) -> Result<Molecule, CliError> {
        let text = match self.molecule.as_ref().ok_or_else(|| cfg_err("config has no molecule"))? {
            MoleculeSource::Path(p) => std::fs::read_to_string(p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?,
            MoleculeSource::Inline(v) => v.to_string(),
        };
        Ok(Molecule::from_json(&text)?)
    }

    /// Electron count: explicit, else the total nuclear charge.
    pub fn electrons(&self, molecule: &Molecule) -> Result<usize, CliError> {
        match self.electrons {
            Some(0) => Err(cfg_err("electrons must be positive")),
            Some(e) => Ok(e),
            None => neutral_electrons(molecule),
        }
    }

    /// The Jastrow factor if it is switched on.
    pub fn active_jastrow(&self) -> Option<JastrowParams> {
        self.jastrow.filter(|j| !j.is_off())
    }
}

pub fn neutral_electrons(molecule: &Molecule) -> Result<usize, CliError> {
    let z = molecule.total_charge();
    if (z - z.round()).abs() > 1e-12 {
        return Err(cfg_err("non-integer total charge; set \"electrons\" explicitly"));
    }
    Ok(z.round() as usize)
}
