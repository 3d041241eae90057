use crate::error::{Error, Result};

/// Becke-type logarithmic radii `r_i = -alpha ln(1 - u_i^nu)` on the uniform
/// partition `u_i = i / (n_r + 1)`, `i = 1..=n_r`.
///
/// `u = 1` is excluded since it maps to an infinite radius.
pub fn becke_radial(n_r: usize, alpha: f64, nu: f64) -> Result<Vec<f64>> {
    if n_r == 0 {
        return Err(Error::param("becke_radial: n_r must be >= 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) || !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::param(format!(
            "becke_radial: alpha and nu must be positive and finite (alpha={alpha}, nu={nu})"
        )));
    }
    let denom = (n_r + 1) as f64;
    Ok((1..=n_r)
        .map(|i| becke_radius(i as f64 / denom, alpha, nu))
        .collect())
}

/// The Becke map for a single partition value `u` in `]0, 1[`.
#[inline]
pub fn becke_radius(u: f64, alpha: f64, nu: f64) -> f64 {
    -alpha * (-u.powf(nu)).ln_1p()
}
