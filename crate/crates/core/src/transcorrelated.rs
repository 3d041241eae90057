//! Jastrow factors and the discretised transcorrelated operator blocks.
//!
//! The correlation factor is `τ = Σ_i Σ_α g(x_iα) + κ Σ_{i<j} h(x_ij)` with
//!
//! ```text
//! g(x) = x (erf(μ x) − Z) + exp(−μ²x²)/(μ√π)      g'(x) = erf(μ x) − Z
//! h(x) = x (1 − erf(μ x)) − exp(−μ²x²)/(μ√π)      h'(x) = 1 − erf(μ x)
//! ```
//!
//! and `κ = ½` by default, which reproduces the electron-electron cusp
//! `ψ ≈ 1 + r/2`. The similarity transform `e^{−τ} H e^{τ}` equals
//! `H − ∇τ·∇ − ½∇²τ − ½|∇τ|²` exactly, and the blocks built here are the
//! finite-volume images of those terms:
//!
//! * one-body: `−½L − D̃ne − Ũ`, where `D̃ne` discretises `Σ_α g'_α x̂_α·∇`
//!   and `Ũ = Σ_α [erf(μr_α)/r_α + (μ/√π) e^{−μ²r_α²}] + ½|Σ_α g'_α x̂_α|²`
//!   already contains the nuclear attraction;
//! * pair diagonal: `(1 − 2κ h')/r + κ(2μ/√π) e^{−μ²r²} − κ² h'²` plus
//!   the mixed `g`–`h` gradient products;
//! * pair gradient channel: `−κ h' x̂_12·(∇_1 − ∇_2)`;
//! * three-body diagonal: `−κ² Σ_centres B̃`.
//!
//! Variants of these blocks taken literally from the discrete equations (with the
//! `r_m − r_n` facet orientation) are available separately for comparison,
//! see [`validate_tc_signs`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eigensolve::{davidson, dense_eigenvalues, initial_guess, DavidsonOptions};
use crate::error::{Error, Result};
use crate::fvops::{laplacian, nuclear_attraction, onebody, SelfInteraction};
use crate::molgrid::Molecule;
use crate::sparse::SparseMatrix;
use crate::vec3::{self, Vec3};
use crate::voronoi::VoronoiDiagram;

/// Default electron-electron Jastrow scale `κ`.
pub const DEFAULT_EE_SCALE: f64 = 0.5;

/// Jastrow parameters; an infinite `μ` switches the corresponding factor off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JastrowParams {
    #[serde(default = "infinite", with = "inf_as_null")]
    pub mu_ne: f64,
    #[serde(default = "infinite", with = "inf_as_null")]
    pub mu_ee: f64,
    #[serde(default = "default_scale")]
    pub ee_scale: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn default_scale() -> f64 {
    DEFAULT_EE_SCALE
}

/// JSON has no infinity: `null` (or a missing field) means "off".
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for JastrowParams {
    fn default() -> Self {
        Self::off()
    }
}

impl JastrowParams {
    pub fn new(mu_ne: f64, mu_ee: f64) -> Result<Self> {
        let p = Self { mu_ne, mu_ee, ee_scale: DEFAULT_EE_SCALE };
        p.validate()?;
        Ok(p)
    }

    /// No correlation factor: the transform is the identity.
    pub fn off() -> Self {
        Self { mu_ne: f64::INFINITY, mu_ee: f64::INFINITY, ee_scale: DEFAULT_EE_SCALE }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_ne > 0.0) || !(self.mu_ee > 0.0) {
            return Err(Error::param("Jastrow parameters must be positive (infinity disables)"));
        }
        if !self.ee_scale.is_finite() {
            return Err(Error::param("Jastrow ee_scale must be finite"));
        }
        Ok(())
    }

    pub fn ne_active(&self) -> bool {
        self.mu_ne.is_finite()
    }

    pub fn ee_active(&self) -> bool {
        self.mu_ee.is_finite() && self.ee_scale != 0.0
    }

    pub fn is_off(&self) -> bool {
        !self.ne_active() && !self.ee_active()
    }
}

/// `erf(μx)` with `μ = ∞` read as the step `x > 0`.
pub fn erf_mu(mu: f64, x: f64) -> f64 {
    if mu.is_infinite() {
        if x > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        libm::erf(mu * x)
    }
}

/// `1 − erf(μx)` without cancellation.
pub fn erfc_mu(mu: f64, x: f64) -> f64 {
    if mu.is_infinite() {
        if x > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        libm::erfc(mu * x)
    }
}

fn gaussian(mu: f64, x: f64) -> f64 {
    if mu.is_infinite() {
        0.0
    } else {
        (-(mu * x) * (mu * x)).exp()
    }
}

pub fn g_val(x: f64, z: f64, mu: f64) -> f64 {
    let tail = if mu.is_infinite() { 0.0 } else { gaussian(mu, x) / (mu * PI.sqrt()) };
    x * (erf_mu(mu, x) - z) + tail
}

pub fn g_prime(x: f64, z: f64, mu: f64) -> f64 {
    erf_mu(mu, x) - z
}

pub fn g_second(x: f64, mu: f64) -> f64 {
    if mu.is_infinite() {
        if x > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        2.0 * mu / PI.sqrt() * gaussian(mu, x)
    }
}

pub fn h_val(x: f64, mu: f64) -> f64 {
    let tail = if mu.is_infinite() { 0.0 } else { gaussian(mu, x) / (mu * PI.sqrt()) };
    x * erfc_mu(mu, x) - tail
}

pub fn h_prime(x: f64, mu: f64) -> f64 {
    erfc_mu(mu, x)
}

pub fn h_second(x: f64, mu: f64) -> f64 {
    -g_second(x, mu)
}

/// Scalar part of the continuum one-centre operator,
/// `K̃[g](x) = g'/x + ½ g'' + ½ g'²`.
pub fn k_scalar(x: f64, z: f64, mu: f64) -> f64 {
    let gp = g_prime(x, z, mu);
    gp / x + 0.5 * g_second(x, mu) + 0.5 * gp * gp
}

/// `erf(μr)/r` with its `r → 0` limit `2μ/√π`.
fn erf_over_r(mu: f64, r: f64) -> f64 {
    if r > 0.0 {
        erf_mu(mu, r) / r
    } else {
        2.0 * mu / PI.sqrt()
    }
}

/// Literal two-body potential
/// `W̃ = (1 − erf(μr))/r + (μ/√π)e^{−μ²r²} + (1 − erf(μr))²/2`.
///
/// The first term diverges at `r = 0`; there it is replaced by
/// `self_value` (the finite-volume self-cell average), or 0 when `None`.
pub fn tc_w(r: f64, mu: f64, self_value: Option<f64>) -> f64 {
    let c = erfc_mu(mu, r);
    let first = if r > 0.0 { c / r } else { self_value.unwrap_or(0.0) };
    let g = if mu.is_infinite() { 0.0 } else { mu / PI.sqrt() * gaussian(mu, r) };
    first + g + 0.5 * c * c
}

/// `B̃ = (1 − erf(μ|a|))(1 − erf(μ|b|)) â·b̂`; zero-length vectors give 0.
pub fn tc_b(a: Vec3, b: Vec3, mu: f64) -> f64 {
    let (na, nb) = (vec3::norm(a), vec3::norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    erfc_mu(mu, na) * erfc_mu(mu, nb) * vec3::dot(a, b) / (na * nb)
}

/// Unit vector from nucleus `α` to `p` and the distance.
fn from_nucleus(p: Vec3, centre: Vec3) -> (Vec3, f64) {
    let d = vec3::sub(p, centre);
    (vec3::unit(d), vec3::norm(d))
}

/// `Σ_α g'_α(p) x̂_α(p)`: gradient of the one-body Jastrow at `p`.
pub fn ne_gradient(p: Vec3, molecule: &Molecule, mu: f64) -> Vec3 {
    molecule.atoms().iter().fold([0.0; 3], |s, a| {
        let (u, r) = from_nucleus(p, a.position);
        vec3::add(s, vec3::scale(u, g_prime(r, a.charge, mu)))
    })
}

/// Literal one-body potential `Ũ_m` (single sum plus the α,β double sum).
/// With `include_same_centre = false` the double sum skips `α = β`.
pub fn tc_u_literal(p: Vec3, molecule: &Molecule, mu: f64, include_same_centre: bool) -> f64 {
    let atoms = molecule.atoms();
    let mut u = 0.0;
    let mut dirs = Vec::with_capacity(atoms.len());
    for a in atoms {
        let (dir, r) = from_nucleus(p, a.position);
        let c = a.charge - erf_mu(mu, r);
        let g = if mu.is_infinite() { 0.0 } else { mu / PI.sqrt() * gaussian(mu, r) };
        u += -c / r - g + 0.5 * c * c;
        dirs.push((dir, c));
    }
    for (i, (da, ca)) in dirs.iter().enumerate() {
        for (j, (db, cb)) in dirs.iter().enumerate() {
            if i != j || include_same_centre {
                u += ca * cb * vec3::dot(*da, *db);
            }
        }
    }
    u
}

/// Continuum-consistent one-body potential (attraction included):
/// `Σ_α [erf(μr_α)/r_α + (μ/√π)e^{−μ²r_α²}] + ½|Σ_α g'_α x̂_α|²`.
pub fn tc_u(p: Vec3, molecule: &Molecule, mu: f64) -> f64 {
    let mut u = 0.0;
    for a in molecule.atoms() {
        let r = vec3::dist(p, a.position);
        let g = if mu.is_infinite() { 0.0 } else { mu / PI.sqrt() * gaussian(mu, r) };
        u += erf_over_r(mu, r) + g;
    }
    let grad = ne_gradient(p, molecule, mu);
    u + 0.5 * vec3::dot(grad, grad)
}

/// `D̃ne_mn = Σ_α g'_α(r_m) σ_mn/(2v_m) r̂_mn·r̂_mα`, with `r̂_mn` the
/// outward facet normal and `r̂_mα` pointing from nucleus `α` to `r_m`.
pub fn tc_dne(diagram: &VoronoiDiagram, molecule: &Molecule, mu: f64) -> Result<SparseMatrix> {
    let n = diagram.len();
    let rows = (0..n)
        .map(|m| {
            let grad = ne_gradient(diagram.points()[m], molecule, mu);
            let v = diagram.volume(m);
            diagram
                .neighbors(m)
                .iter()
                .zip(diagram.facet_areas(m))
                .map(|(&k, &sigma)| (k, sigma / (2.0 * v) * vec3::dot(diagram.normal(m, k), grad)))
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(vec![0.0; n], rows)
}

/// TC one-body matrix `−½L − D̃ne − Ũ`.
///
/// With the electron-nucleus factor off this is the bare `−½L − U`.
pub fn tc_onebody(diagram: &VoronoiDiagram, molecule: &Molecule, params: &JastrowParams, l: &SparseMatrix) -> Result<SparseMatrix> {
    if !params.ne_active() {
        let u = nuclear_attraction(diagram.points(), molecule)?;
        return onebody(l, &u);
    }
    let mu = params.mu_ne;
    let dne = tc_dne(diagram, molecule, mu)?;
    let u: Vec<f64> = diagram.points().iter().map(|p| -tc_u(*p, molecule, mu)).collect();
    l.linear_combination(-0.5, &dne, -1.0)?.add_diagonal(&u)
}

/// Literal one-body matrix `−½L − D̃ne(literal) − Ũ(literal)`, where the
/// literal facet orientation `r_m − r_n` flips the sign of `D̃ne`.
pub fn tc_onebody_literal(
    diagram: &VoronoiDiagram,
    molecule: &Molecule,
    mu: f64,
    include_same_centre: bool,
    l: &SparseMatrix,
) -> Result<SparseMatrix> {
    let dne_literal = tc_dne(diagram, molecule, mu)?.scaled(-1.0);
    let u: Vec<f64> = diagram
        .points()
        .iter()
        .map(|p| -tc_u_literal(*p, molecule, mu, include_same_centre))
        .collect();
    l.linear_combination(-0.5, &dne_literal, -1.0)?.add_diagonal(&u)
}

/// Radial part of the pair potential,
/// `(1 − 2κ h')/r + κ(2μ/√π) e^{−μ²r²} − κ² h'²`, for `r > 0`.
fn pair_radial(r: f64, mu: f64, k: f64) -> f64 {
    let hp = h_prime(r, mu);
    (1.0 - 2.0 * k * hp) / r + k * 2.0 * mu / PI.sqrt() * gaussian(mu, r) - k * k * hp * hp
}

/// Pair potential between electrons at `r_m` and `r_p`, diagonal in the
/// grid basis, including the mixed `g`–`h` gradient products.
///
/// `self_value` is the bare-Coulomb average `⟨1/r⟩` for two electrons in
/// the same cell. For coincident cells the radial formula is evaluated at
/// the matching separation `1/⟨1/r⟩`, so the value tends to the bare one as
/// `μ_ee → ∞`. Without a self value (coincident configurations excluded)
/// the analytic `r → 0` limit is returned, which requires `κ = ½`.
pub fn tc_pair_diag(r_m: Vec3, r_p: Vec3, molecule: &Molecule, params: &JastrowParams, self_value: Option<f64>) -> f64 {
    let r = vec3::dist(r_m, r_p);
    if !params.ee_active() {
        return if r > 0.0 { 1.0 / r } else { self_value.unwrap_or(0.0) };
    }
    let (mu, k) = (params.mu_ee, params.ee_scale);
    if r == 0.0 {
        return match self_value {
            Some(s) if s > 0.0 => pair_radial(1.0 / s, mu, k),
            _ => 2.0 * k * erf_over_r(mu, 0.0) + k * 2.0 * mu / PI.sqrt() - k * k,
        };
    }
    let mut w = pair_radial(r, mu, k);
    if params.ne_active() {
        let u = vec3::scale(vec3::sub(r_m, r_p), 1.0 / r);
        let gm = ne_gradient(r_m, molecule, params.mu_ne);
        let gp = ne_gradient(r_p, molecule, params.mu_ne);
        w -= k * h_prime(r, mu) * (vec3::dot(gm, u) - vec3::dot(gp, u));
    }
    w
}

/// Symmetric three-body diagonal `−κ² [B̃(m;p,t) + B̃(p;m,t) + B̃(t;m,p)]`.
pub fn tc_three_body(r_m: Vec3, r_p: Vec3, r_t: Vec3, params: &JastrowParams) -> f64 {
    if !params.ee_active() {
        return 0.0;
    }
    let mu = params.mu_ee;
    let b = |c: Vec3, x: Vec3, y: Vec3| tc_b(vec3::sub(c, x), vec3::sub(c, y), mu);
    -params.ee_scale * params.ee_scale * (b(r_m, r_p, r_t) + b(r_p, r_m, r_t) + b(r_t, r_m, r_p))
}

/// Per-cell gradient stencil: neighbours with coefficients
/// `σ_mn/(2v_m) r̂_mn`, so that `∇ψ(m) ≈ Σ_n c_mn ψ_n`.
#[derive(Debug, Clone)]
pub struct GradientStencil {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    coefs: Vec<Vec3>,
}

impl GradientStencil {
    pub fn new(diagram: &VoronoiDiagram) -> Self {
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut coefs = Vec::new();
        for m in 0..diagram.len() {
            let v = diagram.volume(m);
            for (&k, &sigma) in diagram.neighbors(m).iter().zip(diagram.facet_areas(m)) {
                cols.push(k);
                coefs.push(vec3::scale(diagram.normal(m, k), sigma / (2.0 * v)));
            }
            offsets.push(cols.len());
        }
        Self { offsets, cols, coefs }
    }

    pub fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(neighbours, coefficient vectors)` of cell `m`.
    pub fn row(&self, m: usize) -> (&[usize], &[Vec3]) {
        let r = self.offsets[m]..self.offsets[m + 1];
        (&self.cols[r.clone()], &self.coefs[r])
    }

    /// Gradient at `m` of a register read from `x` at `offset + n*stride`.
    #[inline]
    pub fn gradient_strided(&self, m: usize, x: &[f64], offset: usize, stride: usize) -> Vec3 {
        let mut g = [0.0; 3];
        for k in self.offsets[m]..self.offsets[m + 1] {
            let c = self.coefs[k];
            let v = x[offset + self.cols[k] * stride];
            g[0] += c[0] * v;
            g[1] += c[1] * v;
            g[2] += c[2] * v;
        }
        g
    }
}

/// Electron-electron gradient channel `−κ h'(r_mp) r̂_mp·(∇_1 − ∇_2)` on a
/// two-electron state of length `N²` (electron 1 is the major index).
pub fn tc_dee_apply(diagram: &VoronoiDiagram, params: &JastrowParams, state: &[f64]) -> Result<Vec<f64>> {
    let n = diagram.len();
    if state.len() != n * n {
        return Err(Error::param(format!("tc_dee_apply: state length {} for N = {n}", state.len())));
    }
    let mut out = vec![0.0; n * n];
    if !params.ee_active() {
        return Ok(out);
    }
    let stencil = GradientStencil::new(diagram);
    let pts = diagram.points();
    for m in 0..n {
        for p in 0..n {
            let r = vec3::dist(pts[m], pts[p]);
            if r == 0.0 {
                continue;
            }
            let u = vec3::scale(vec3::sub(pts[m], pts[p]), 1.0 / r);
            let g1 = stencil.gradient_strided(m, state, p, n);
            let g2 = stencil.gradient_strided(p, state, m * n, 1);
            out[m * n + p] = -params.ee_scale * h_prime(r, params.mu_ee) * vec3::dot(vec3::sub(g1, g2), u);
        }
    }
    Ok(out)
}

/// Comparison of the literal and continuum-consistent TC one-body matrices
/// for a one-electron system.
#[derive(Debug, Clone, Serialize)]
pub struct TcSignReport {
    /// `max |T_literal − T_canonical|` over all entries.
    pub max_discrepancy: f64,
    /// Same, with the literal α,β double sum restricted to `α ≠ β`.
    pub max_discrepancy_excluding_same_centre: f64,
    pub energy_literal: Option<f64>,
    pub energy_literal_excluding_same_centre: Option<f64>,
    pub energy_canonical: Option<f64>,
    pub energy_bare: Option<f64>,
}

fn lowest_eigenvalue(t: &SparseMatrix, guess: &[f64]) -> Option<f64> {
    if t.dim() <= 1500 {
        return dense_eigenvalues(&t.to_dense()).ok().map(|v| v[0].re);
    }
    let opts = DavidsonOptions { tol: 1e-7, max_iter: 3000, ..Default::default() };
    davidson(t, guess, &opts).ok().map(|r| r.eigenvalue)
}

/// Builds the one-body TC matrix from the literal discrete equations and
/// from the continuum transform, and reports entrywise differences and the
/// lowest eigenvalue of each (plus the bare Hamiltonian).
pub fn validate_tc_signs(diagram: &VoronoiDiagram, molecule: &Molecule, params: &JastrowParams) -> Result<TcSignReport> {
    if !params.ne_active() {
        return Err(Error::param("validate_tc_signs: mu_ne must be finite"));
    }
    let l = laplacian(diagram)?;
    let canonical = tc_onebody(diagram, molecule, params, &l)?;
    let literal = tc_onebody_literal(diagram, molecule, params.mu_ne, true, &l)?;
    let literal_excl = tc_onebody_literal(diagram, molecule, params.mu_ne, false, &l)?;
    let bare = onebody(&l, &nuclear_attraction(diagram.points(), molecule)?)?;
    let diff = |a: &SparseMatrix, b: &SparseMatrix| -> Result<f64> {
        Ok(a.linear_combination(1.0, b, -1.0)?
            .triplets()
            .iter()
            .fold(0.0, |m, &(_, _, v)| m.max(v.abs())))
    };
    let guess = initial_guess(diagram.points(), None, molecule, 1)?;
    Ok(TcSignReport {
        max_discrepancy: diff(&literal, &canonical)?,
        max_discrepancy_excluding_same_centre: diff(&literal_excl, &canonical)?,
        energy_literal: lowest_eigenvalue(&literal, &guess),
        energy_literal_excluding_same_centre: lowest_eigenvalue(&literal_excl, &guess),
        energy_canonical: lowest_eigenvalue(&canonical, &guess),
        energy_bare: lowest_eigenvalue(&bare, &guess),
    })
}

/// Self-cell value for the bare Coulomb kernel of cell volume `v`.
pub fn self_value(self_interaction: SelfInteraction, v: f64) -> Option<f64> {
    self_interaction.value(v)
}
