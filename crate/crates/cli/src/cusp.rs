//! Electron-electron cusp cuts for two-electron atoms.
//!
//! Electron 2 sits on the cell at azimuth 0 of a ring (fixed shell, polar
//! angle nearest the equator); electron 1 moves around the same ring. The
//! ring only exists on a separable Gauss-Legendre angular grid.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;
use vorotc::fvops::SelfInteraction;
use vorotc::hamiltonian::OperatorKind;
use vorotc::molgrid::{gauss_legendre_thetas, AngularKind, Molecule};
use vorotc::transcorrelated::JastrowParams;

use crate::config::{GridConfig, SolverConfig};
use crate::{solve, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct CuspCut {
    /// `None` for the Hermitian operator.
    pub mu_ee: Option<f64>,
    /// Azimuth relative to the fixed electron, ascending in `(−π, π]`.
    pub phi: Vec<f64>,
    /// Point values of the eigenvector along the ring, scaled to max |ψ| = 1.
    pub psi: Vec<f64>,
    /// `ψ(+Δφ) + ψ(−Δφ) − 2ψ(0)` at coalescence (scaled).
    pub kink: f64,
    pub energy: f64,
    pub converged: bool,
    pub shell_radius: f64,
    pub theta: f64,
}

/// Ring cell indices ordered by azimuth index, plus the shell radius and
/// polar angle used.
pub fn ring_cells(grid: &vorotc::molgrid::Grid, cfg: &GridConfig, radius: f64) -> Result<(Vec<usize>, f64, f64), CliError> {
    let AngularKind::GaussLegendre { n_theta, n_phi } = cfg.angular else {
        return Err(CliError::Config("cusp cut needs a Gauss-Legendre angular grid".into()));
    };
    let radii = cfg.atom_spec().radii()?;
    let shell = (0..radii.len())
        .min_by(|&a, &b| (radii[a] - radius).abs().total_cmp(&(radii[b] - radius).abs()))
        .ok_or_else(|| CliError::Config("grid has no shells".into()))?;
    let thetas = gauss_legendre_thetas(n_theta)?;
    let it = (0..n_theta)
        .min_by(|&a, &b| (thetas[a] - PI / 2.0).abs().total_cmp(&(thetas[b] - PI / 2.0).abs()))
        .expect("n_theta >= 1");
    let lookup: HashMap<(usize, usize), usize> = grid
        .provenance()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.atom == 0)
        .map(|(i, p)| ((p.shell, p.angular), i))
        .collect();
    let cells = (0..n_phi)
        .map(|ip| {
            lookup
                .get(&(shell, it * n_phi + ip))
                .copied()
                .ok_or_else(|| CliError::Numerical("ring point was dropped from the grid".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cells, radii[shell], thetas[it]))
}

/// Values of a two-electron state along the ring with electron 2 at the
/// first ring cell, as point samples.
pub fn ring_values(state: &[f64], n: usize, cells: &[usize], volumes: Option<&[f64]>) -> Vec<f64> {
    let r = cells[0];
    cells
        .iter()
        .map(|&c| {
            let v = state[c * n + r];
            match volumes {
                Some(vol) => v / (vol[c] * vol[r]).sqrt(),
                None => v,
            }
        })
        .collect()
}

/// Rotates ring values so that the fixed electron sits in the middle,
/// rescales to max |ψ| = 1 (positive), and measures the coalescence kink.
pub fn centre_and_measure(values: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n_phi = values.len();
    let dphi = 2.0 * PI / n_phi as f64;
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let phi = if k > n_phi / 2 { (k as f64 - n_phi as f64) * dphi } else { k as f64 * dphi };
            (phi, v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let peak = values.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let scale = if peak != 0.0 { 1.0 / peak } else { 1.0 };
    let phi: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let psi: Vec<f64> = pairs.iter().map(|p| p.1 * scale).collect();
    let kink = if n_phi >= 3 { (values[1] + values[n_phi - 1] - 2.0 * values[0]) * scale } else { 0.0 };
    (phi, psi, kink)
}

/// Solves the two-electron atom once per `μ_ee` and cuts each ground state
/// along the ring.
pub fn cusp_cuts(
    molecule: &Molecule,
    grid: &GridConfig,
    mu_ne: f64,
    mu_ee: &[Option<f64>],
    radius: f64,
    si: SelfInteraction,
    solver: &SolverConfig,
) -> Result<Vec<CuspCut>, CliError> {
    if molecule.len() != 1 {
        return Err(CliError::Config("cusp cut needs a single atom".into()));
    }
    if !matches!(grid.angular, AngularKind::GaussLegendre { .. }) {
        return Err(CliError::Config("cusp cut needs a Gauss-Legendre angular grid".into()));
    }
    let mut cuts = Vec::new();
    for &mu in mu_ee {
        let params = JastrowParams::new(mu_ne, mu.unwrap_or(f64::INFINITY))?;
        let sol = solve(molecule, grid, 2, Some(&params), si, solver)?;
        let (cells, shell_radius, theta) = ring_cells(&sol.system.grid, grid, radius)?;
        let n = sol.system.diagram.len();
        let (phi, psi, kink) = match &sol.vector {
            Some(v) => {
                let volumes = (sol.kind == OperatorKind::Hermitian).then(|| sol.system.diagram.volumes());
                centre_and_measure(&ring_values(v, n, &cells, volumes))
            }
            None => (Vec::new(), Vec::new(), f64::NAN),
        };
        cuts.push(CuspCut {
            mu_ee: mu,
            phi,
            psi,
            kink,
            energy: sol.report.e_total,
            converged: sol.report.converged,
            shell_radius,
            theta,
        });
    }
    Ok(cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vorotc::molgrid::assemble_grid;

    #[test]
    fn centring_and_kink() {
        // |sin(φ/2)| has a kink at 0 on an 8-point ring
        let vals: Vec<f64> = (0..8).map(|k| 1.0 + (PI * k as f64 / 8.0).sin()).collect();
        let (phi, psi, kink) = centre_and_measure(&vals);
        assert_eq!(phi.len(), 8);
        assert!(phi.windows(2).all(|w| w[0] < w[1]));
        let zero = phi.iter().position(|p| p.abs() < 1e-15).unwrap();
        assert!((psi[zero] - 1.0 / 2.0).abs() < 1e-15);
        let want = 2.0 * (PI / 8.0).sin() / 2.0;
        assert!((kink - want).abs() < 1e-14);
        // symmetric smooth values: second difference of cos
        let vals: Vec<f64> = (0..16).map(|k| (2.0 * PI * k as f64 / 16.0).cos()).collect();
        let (_, _, kink) = centre_and_measure(&vals);
        assert!((kink - 2.0 * ((2.0 * PI / 16.0).cos() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn ring_lookup() {
        let mol = Molecule::from_charges(&[(2.0, [0.0; 3])]).unwrap();
        let cfg = GridConfig { n_radial: 6, alpha: 1.0, angular: AngularKind::GaussLegendre { n_theta: 4, n_phi: 8 }, ..Default::default() };
        let g = assemble_grid(&mol, &[cfg.atom_spec()], cfg.merge_eps).unwrap();
        let (cells, r, theta) = ring_cells(&g, &cfg, 0.5).unwrap();
        assert_eq!(cells.len(), 8);
        let radii = cfg.atom_spec().radii().unwrap();
        assert!(radii.iter().all(|x| (x - 0.5).abs() >= (r - 0.5).abs()));
        for &c in &cells {
            let p = g.points()[c];
            assert!((vorotc::vec3::norm(p) - r).abs() < 1e-12);
            assert!((p[2] / r - theta.cos()).abs() < 1e-12);
        }
        let p0 = g.points()[cells[0]];
        assert!(p0[1].abs() < 1e-12 && p0[0] > 0.0);
        let lebedev = GridConfig { angular: AngularKind::Lebedev { order: 50 }, ..cfg };
        assert!(matches!(ring_cells(&g, &lebedev, 0.5), Err(CliError::Config(_))));
    }

    #[test]
    fn ring_values_reweight() {
        let state = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(ring_values(&state, 2, &[0, 1], None), vec![1.0, 3.0]);
        let v = ring_values(&state, 2, &[0, 1], Some(&[4.0, 1.0]));
        assert_eq!(v, vec![0.25, 1.5]);
    }
}
