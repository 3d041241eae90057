use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Roots of the Legendre polynomial `P_n` in ascending order.
///
/// Only the non-negative half is computed by Newton iteration; the negative
/// half is mirrored so that the set is exactly symmetric.
pub fn legendre_roots(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("legendre_roots: degree must be >= 1"));
    }
    let half = n / 2;
    let mut positive = Vec::with_capacity(half);
    for i in 0..half {
        // Tricomi initial guess, descending from the largest root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numerical(format!(
                "legendre_roots: Newton iteration did not converge for degree {n}"
            )));
        }
        positive.push(x);
    }
    let mut roots: Vec<f64> = positive.iter().map(|x| -x).collect();
    if n % 2 == 1 {
        roots.push(0.0);
    }
    roots.extend(positive.iter().rev());
    Ok(roots)
}

/// `(P_n(x), P_n'(x))` via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Polar angles `theta_j = (pi/2)(x_j + 1)` from the ascending Legendre roots.
pub fn gauss_legendre_thetas(n_theta: usize) -> Result<Vec<f64>> {
    Ok(legendre_roots(n_theta)?
        .into_iter()
        .map(|x| 0.5 * PI * (x + 1.0))
        .collect())
}

/// Azimuths `phi_k = k * 2 pi / n_phi`.
pub fn uniform_phis(n_phi: usize) -> Vec<f64> {
    let delta = 2.0 * PI / n_phi as f64;
    (0..n_phi).map(|k| delta * k as f64).collect()
}

pub fn direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

fn product_sphere(thetas: &[f64], n_phi: usize) -> Vec<Vec3> {
    let phis = uniform_phis(n_phi);
    thetas
        .iter()
        .flat_map(|&t| phis.iter().map(move |&p| direction(t, p)))
        .collect()
}

/// Gauss-Legendre polar nodes times uniform azimuths, theta-major order.
pub fn gauss_legendre_sphere(n_theta: usize, n_phi: usize) -> Result<Vec<Vec3>> {
    if n_theta == 0 || n_phi == 0 {
        return Err(Error::param("gauss_legendre_sphere: n_theta and n_phi must be >= 1"));
    }
    Ok(product_sphere(&gauss_legendre_thetas(n_theta)?, n_phi))
}

/// Cell-centred uniform polar angles `theta_j = pi (j + 1/2) / n_theta` with
/// uniform azimuths.
pub fn uniform_sphere(n_theta: usize, n_phi: usize) -> Result<Vec<Vec3>> {
    if n_theta == 0 || n_phi == 0 {
        return Err(Error::param("uniform_sphere: n_theta and n_phi must be >= 1"));
    }
    let thetas: Vec<f64> = (0..n_theta)
        .map(|j| PI * (j as f64 + 0.5) / n_theta as f64)
        .collect();
    Ok(product_sphere(&thetas, n_phi))
}
