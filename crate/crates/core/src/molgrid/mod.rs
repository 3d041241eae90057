//! Molecule-adaptive multicenter grids.
//!
//! Every nucleus carries a spherical grid: Becke logarithmic radii times an
//! angular rule (Gauss-Legendre product, uniform product or Lebedev). The
//! molecular grid is the union of the atomic grids with near-duplicate
//! points removed first-come-first-served.

mod angular;
mod lebedev;
mod radial;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use angular::{
    direction, gauss_legendre_sphere, gauss_legendre_thetas, legendre_roots, uniform_phis,
    uniform_sphere,
};
pub use lebedev::{exact_degree as lebedev_exact_degree, lebedev_rule, lebedev_sphere, SUPPORTED_ORDERS};
pub use radial::{becke_radial, becke_radius};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};
use crate::ANGSTROM_TO_BOHR;

/// Minimum allowed distance between a grid point and a nucleus (bohr).
pub const NUCLEUS_EXCLUSION: f64 = 1e-8;
/// Minimum allowed distance between two nuclei (bohr).
pub const NUCLEUS_SEPARATION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Nuclear charge.
    #[serde(rename = "Z")]
    pub charge: f64,
    /// Position in bohr.
    #[serde(rename = "xyz")]
    pub position: Vec3,
}

/// Clamped nuclei, positions in bohr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Molecule {
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    Bohr,
    Angstrom,
}

#[derive(Deserialize)]
struct MoleculeDoc {
    atoms: Vec<Atom>,
    #[serde(default)]
    unit: LengthUnit,
}

impl Molecule {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::param("molecule has no atoms"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.charge > 0.0 && a.charge.is_finite()) {
                return Err(Error::param(format!("atom {i}: charge must be positive")));
            }
            if a.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::param(format!("atom {i}: non-finite position")));
            }
            for (j, b) in atoms[..i].iter().enumerate() {
                if vec3::dist(a.position, b.position) <= NUCLEUS_SEPARATION {
                    return Err(Error::param(format!("atoms {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { atoms })
    }

    /// Convenience constructor from `(Z, position in bohr)` pairs.
    pub fn from_charges(atoms: &[(f64, Vec3)]) -> Result<Self> {
        Self::new(
            atoms
                .iter()
                .map(|&(charge, position)| Atom { charge, position })
                .collect(),
        )
    }

    /// Parses `{"atoms":[{"Z":..,"xyz":[..]}], "unit":"bohr"|"angstrom"}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MoleculeDoc = serde_json::from_str(text)?;
        let factor = match doc.unit {
            LengthUnit::Bohr => 1.0,
            LengthUnit::Angstrom => ANGSTROM_TO_BOHR,
        };
        Self::new(
            doc.atoms
                .into_iter()
                .map(|a| Atom {
                    charge: a.charge,
                    position: vec3::scale(a.position, factor),
                })
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_charge(&self) -> f64 {
        self.atoms.iter().map(|a| a.charge).sum()
    }

    /// Classical nucleus-nucleus repulsion `sum_{a<b} Z_a Z_b / R_ab`.
    pub fn nuclear_repulsion(&self) -> f64 {
        let mut e = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[..i] {
                e += a.charge * b.charge / vec3::dist(a.position, b.position);
            }
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngularKind {
    GaussLegendre { n_theta: usize, n_phi: usize },
    Lebedev { order: usize },
    Uniform { n_theta: usize, n_phi: usize },
}

impl AngularKind {
    pub fn directions(&self) -> Result<Vec<Vec3>> {
        match *self {
            AngularKind::GaussLegendre { n_theta, n_phi } => gauss_legendre_sphere(n_theta, n_phi),
            AngularKind::Lebedev { order } => lebedev_sphere(order),
            AngularKind::Uniform { n_theta, n_phi } => uniform_sphere(n_theta, n_phi),
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            AngularKind::GaussLegendre { n_theta, n_phi } | AngularKind::Uniform { n_theta, n_phi } => {
                n_theta * n_phi
            }
            AngularKind::Lebedev { order } => order,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-atom grid recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomGridSpec {
    pub n_radial: usize,
    /// Radial scale (bohr).
    pub alpha: f64,
    /// Radial concentration exponent.
    pub nu: f64,
    pub angular: AngularKind,
}

impl AtomGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_radial == 0 {
            return Err(Error::param("n_radial must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::param("alpha and nu must be positive and finite"));
        }
        if let AngularKind::Lebedev { order } = self.angular {
            if !SUPPORTED_ORDERS.contains(&order) {
                return Err(Error::param(format!(
                    "unsupported Lebedev order {order}; supported orders are {SUPPORTED_ORDERS:?}"
                )));
            }
        }
        if self.angular.is_empty() {
            return Err(Error::param("angular rule has no points"));
        }
        Ok(())
    }

    pub fn radii(&self) -> Result<Vec<f64>> {
        becke_radial(self.n_radial, self.alpha, self.nu)
    }

    pub fn point_count(&self) -> usize {
        self.n_radial * self.angular.len()
    }
}

/// Where a grid point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub atom: usize,
    pub shell: usize,
    /// Index into the atom's angular rule.
    pub angular: usize,
}

#[derive(Debug, Clone)]
pub struct Grid {
    points: Vec<Vec3>,
    provenance: Vec<Provenance>,
    merge_eps: f64,
    max_radius: f64,
    dropped_duplicates: usize,
    dropped_near_nucleus: usize,
}

impl Grid {
    /// A grid from explicit points (provenance atom 0, shell = index).
    ///
    /// Rejects near-duplicate points and points sitting on a nucleus.
    pub fn from_points(points: Vec<Vec3>, molecule: Option<&Molecule>, merge_eps: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("grid has no points"));
        }
        if let Some(mol) = molecule {
            for (i, p) in points.iter().enumerate() {
                for a in mol.atoms() {
                    if vec3::dist(*p, a.position) <= NUCLEUS_EXCLUSION {
                        return Err(Error::param(format!("grid point {i} coincides with a nucleus")));
                    }
                }
            }
        }
        let mut index = SpatialHash::new(merge_eps.max(1e-12));
        for (i, p) in points.iter().enumerate() {
            if index.has_within(*p, merge_eps, &points) {
                return Err(Error::param(format!("grid point {i} duplicates an earlier point")));
            }
            index.insert(*p, i);
        }
        let provenance = (0..points.len())
            .map(|i| Provenance { atom: 0, shell: i, angular: 0 })
            .collect();
        let max_radius = molecule
            .map(|mol| {
                points
                    .iter()
                    .map(|p| {
                        mol.atoms()
                            .iter()
                            .map(|a| vec3::dist(*p, a.position))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max)
            })
            .unwrap_or(0.0);
        Ok(Self {
            points,
            provenance,
            merge_eps,
            max_radius,
            dropped_duplicates: 0,
            dropped_near_nucleus: 0,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn merge_eps(&self) -> f64 {
        self.merge_eps
    }

    /// Largest Becke radius used by any atomic grid (bohr).
    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    pub fn dropped_duplicates(&self) -> usize {
        self.dropped_duplicates
    }

    pub fn dropped_near_nucleus(&self) -> usize {
        self.dropped_near_nucleus
    }

    /// One line per point: `x y z atom_index shell_index`, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (p, prov) in self.points.iter().zip(&self.provenance) {
            writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {} {}",
                p[0], p[1], p[2], prov.atom, prov.shell
            )?;
        }
        Ok(())
    }
}

/// Union of atomic grids; points within `merge_eps` of an earlier point are
/// dropped, as are points within [`NUCLEUS_EXCLUSION`] of any nucleus.
pub fn assemble_grid(molecule: &Molecule, specs: &[AtomGridSpec], merge_eps: f64) -> Result<Grid> {
    if specs.len() != molecule.len() {
        return Err(Error::param(format!(
            "assemble_grid: {} specs for {} atoms",
            specs.len(),
            molecule.len()
        )));
    }
    if !(merge_eps >= 0.0 && merge_eps.is_finite()) {
        return Err(Error::param("merge_eps must be finite and non-negative"));
    }
    let mut points: Vec<Vec3> = Vec::new();
    let mut provenance = Vec::new();
    let mut index = SpatialHash::new(merge_eps.max(1e-12));
    let mut dropped_duplicates = 0;
    let mut dropped_near_nucleus = 0;
    let mut max_radius: f64 = 0.0;
    for (atom_index, (atom, spec)) in molecule.atoms().iter().zip(specs).enumerate() {
        spec.validate()?;
        let radii = spec.radii()?;
        let dirs = spec.angular.directions()?;
        max_radius = max_radius.max(*radii.last().unwrap());
        for (shell, &r) in radii.iter().enumerate() {
            for (ang, d) in dirs.iter().enumerate() {
                let p = vec3::add(atom.position, vec3::scale(*d, r));
                if molecule
                    .atoms()
                    .iter()
                    .any(|a| vec3::dist(p, a.position) <= NUCLEUS_EXCLUSION)
                {
                    dropped_near_nucleus += 1;
                    continue;
                }
                if index.has_within(p, merge_eps, &points) {
                    dropped_duplicates += 1;
                    continue;
                }
                index.insert(p, points.len());
                points.push(p);
                provenance.push(Provenance { atom: atom_index, shell, angular: ang });
            }
        }
    }
    if points.is_empty() {
        return Err(Error::param("assemble_grid produced no points"));
    }
    Ok(Grid {
        points,
        provenance,
        merge_eps,
        max_radius,
        dropped_duplicates,
        dropped_near_nucleus,
    })
}

/// Bucket hash for near-duplicate detection.
struct SpatialHash {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        Self { cell, buckets: HashMap::new() }
    }

    fn key(&self, p: Vec3) -> [i64; 3] {
        [
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
            (p[2] / self.cell).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Vec3, index: usize) {
        let k = self.key(p);
        self.buckets.entry(k).or_default().push(index);
    }

    fn has_within(&self, p: Vec3, eps: f64, points: &[Vec3]) -> bool {
        let k = self.key(p);
        let eps2 = eps * eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if list.iter().any(|&i| vec3::dist2(points[i], p) <= eps2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}
