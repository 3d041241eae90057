//! Classical simulation of Chebyshev phase estimation for matrices with a
//! real spectrum.
//!
//! A history state `Σ_ℓ |ℓ⟩ ⊗ T_ℓ(H/α)ψ` is built either by the
//! three-term recurrence or by forward substitution on the padded
//! unit-lower-triangular system
//!
//! ```text
//! Pad(H/α) = I ⊗ I + L² ⊗ I − 2 L ⊗ H/α,   Pad |Φ⟩ = ((|0⟩ − |2⟩)/2) ⊗ ψ,
//! ```
//!
//! whose solution holds the rescaled polynomials `T̃₀ = ½`, `T̃_ℓ = T_ℓ`.
//! The counter register is Fourier transformed and sampled; an index `ℓ`
//! converts to the estimate `α cos(2πℓ/υ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eigensolve::dense_eig;
use crate::error::{Error, Result};

/// How the counter-register distribution is obtained from the history
/// blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// Marginal over the system register, `p(j) ∝ ‖Σ_ℓ e^{−2πijℓ/υ} Φ_ℓ‖²`.
    #[default]
    Marginal,
    /// Amplitudes `⟨ψ|Φ_ℓ⟩` only.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcpeConfig {
    pub upsilon: usize,
    pub upsilon_prime: usize,
    pub alpha: f64,
    pub repeats: usize,
    #[serde(default)]
    pub measurement: Measurement,
}

impl QcpeConfig {
    /// Checks the structural constraints and `α ≥ 2‖H‖₂`.
    pub fn validate(&self, norm: f64) -> Result<()> {
        if self.upsilon < 4 || !self.upsilon.is_power_of_two() {
            return Err(Error::param(format!("upsilon = {} must be a power of two >= 4", self.upsilon)));
        }
        if self.upsilon_prime < 5 {
            return Err(Error::param("upsilon_prime must be at least 5"));
        }
        if self.repeats == 0 {
            return Err(Error::param("repeats must be at least 1"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 2.0 * norm) {
            return Err(Error::param(format!("alpha = {} is below 2‖H‖₂ = {}", self.alpha, 2.0 * norm)));
        }
        Ok(())
    }
}

fn check_unit(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::param(format!("Chebyshev argument {x} outside [-1, 1]")));
    }
    Ok(())
}

/// `T_ℓ(x) = cos(ℓ arccos x)`.
pub fn cheb_t(l: usize, x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok((l as f64 * x.acos()).cos())
}

/// `U_ℓ(x) = sin((ℓ+1)θ)/sin θ` with `x = cos θ`; the endpoints use the
/// limits `(±1)^ℓ (ℓ+1)`.
pub fn cheb_u(l: usize, x: f64) -> Result<f64> {
    check_unit(x)?;
    let th = x.acos();
    let s = th.sin();
    if s.abs() < 1e-12 {
        let sign = if x > 0.0 || l % 2 == 0 { 1.0 } else { -1.0 };
        return Ok(sign * (l + 1) as f64);
    }
    Ok(((l + 1) as f64 * th).sin() / s)
}

pub fn cheb_t_rescaled(l: usize, x: f64) -> Result<f64> {
    let t = cheb_t(l, x)?;
    Ok(if l == 0 { 0.5 * t } else { t })
}

/// `cmod_q(x) = x − q⌊(x + q/2)/q⌋ ∈ [−q/2, q/2)`.
pub fn cmod(q: f64, x: f64) -> f64 {
    x - q * ((x + q / 2.0) / q).floor()
}

/// History blocks `Φ_ℓ`, `ℓ = 0..υ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    pub blocks: Vec<DVector<f64>>,
    /// Whether block 0 carries the factor ½.
    pub rescaled: bool,
}

impl HistoryState {
    pub fn upsilon(&self) -> usize {
        self.blocks.len()
    }

    /// `‖Σ_ℓ Φ_ℓ‖`-style normalisation constant `√(Σ_ℓ ‖Φ_ℓ‖²)`.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    /// Largest `‖Φ_ℓ − 2(H/α)Φ_{ℓ−1} + Φ_{ℓ−2}‖` over the blocks without a
    /// source term (`ℓ ≥ 2`, or `ℓ ≥ 3` for the rescaled convention).
    pub fn recurrence_residual(&self, h: &DMatrix<f64>, alpha: f64) -> f64 {
        let b = &self.blocks;
        let start = if self.rescaled { 3 } else { 2 };
        (start..b.len()).fold(0.0, |m, l| {
            let r = &b[l] - (h * &b[l - 1]) * (2.0 / alpha) + &b[l - 2];
            m.max(r.norm())
        })
    }

    /// The other convention (block 0 doubled or halved).
    pub fn to_rescaled(&self, rescaled: bool) -> Self {
        let mut out = self.clone();
        if rescaled != self.rescaled && !out.blocks.is_empty() {
            out.blocks[0] *= if rescaled { 0.5 } else { 2.0 };
            out.rescaled = rescaled;
        }
        out
    }
}

fn check_square(h: &DMatrix<f64>, psi: &DVector<f64>) -> Result<()> {
    if h.nrows() != h.ncols() || h.nrows() != psi.len() || psi.is_empty() {
        return Err(Error::param("matrix must be square and match the state length"));
    }
    if !(psi.iter().all(|x| x.is_finite()) && h.iter().all(|x| x.is_finite())) {
        return Err(Error::param("non-finite input"));
    }
    Ok(())
}

/// `T₀ψ = ψ`, `T₁ψ = (H/α)ψ`, `T_{ℓ+1}ψ = 2(H/α)T_ℓψ − T_{ℓ−1}ψ`.
pub fn history_by_recurrence(h: &DMatrix<f64>, alpha: f64, psi: &DVector<f64>, upsilon: usize) -> Result<HistoryState> {
    check_square(h, psi)?;
    if !(alpha > 0.0) {
        return Err(Error::param("alpha must be positive"));
    }
    let a = h / alpha;
    let mut blocks: Vec<DVector<f64>> = Vec::with_capacity(upsilon);
    for l in 0..upsilon {
        let next = match l {
            0 => psi.clone(),
            1 => &a * psi,
            _ => (&a * &blocks[l - 1]) * 2.0 - &blocks[l - 2],
        };
        blocks.push(next);
    }
    Ok(HistoryState { blocks, rescaled: false })
}

/// Explicit `Pad(H/α)` of size `υn × υn`.
pub fn pad_matrix(h: &DMatrix<f64>, alpha: f64, upsilon: usize) -> DMatrix<f64> {
    let n = h.nrows();
    let mut p = DMatrix::identity(upsilon * n, upsilon * n);
    let a = h * (-2.0 / alpha);
    for l in 1..upsilon {
        p.view_mut((l * n, (l - 1) * n), (n, n)).copy_from(&a);
        if l >= 2 {
            p.view_mut((l * n, (l - 2) * n), (n, n)).fill_with_identity();
        }
    }
    p
}

/// Block forward substitution of `Pad(H/α)Φ = ((|0⟩ − |2⟩)/2) ⊗ ψ`.
pub fn solve_padded(h: &DMatrix<f64>, alpha: f64, psi: &DVector<f64>, upsilon: usize) -> Result<HistoryState> {
    check_square(h, psi)?;
    if upsilon < 3 {
        return Err(Error::param("upsilon must be at least 3 for the padded system"));
    }
    if !(alpha > 0.0) {
        return Err(Error::param("alpha must be positive"));
    }
    let a2 = h * (2.0 / alpha);
    let mut blocks: Vec<DVector<f64>> = Vec::with_capacity(upsilon);
    for l in 0..upsilon {
        let mut phi = match l {
            0 => psi * 0.5,
            2 => psi * -0.5,
            _ => DVector::zeros(psi.len()),
        };
        if l >= 1 {
            phi += &a2 * &blocks[l - 1];
        }
        if l >= 2 {
            phi -= &blocks[l - 2];
        }
        blocks.push(phi);
    }
    Ok(HistoryState { blocks, rescaled: true })
}

/// Counter-register distribution after the unitary DFT.
pub fn register_distribution(history: &HistoryState, psi: &DVector<f64>, measurement: Measurement) -> Result<Vec<f64>> {
    let ups = history.upsilon();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(ups);
    let mut prob = vec![0.0; ups];
    match measurement {
        Measurement::Projected => {
            let nrm = psi.norm_squared();
            let mut buf: Vec<Complex64> = history.blocks.iter().map(|b| Complex64::new(psi.dot(b) / nrm, 0.0)).collect();
            fft.process(&mut buf);
            for (p, z) in prob.iter_mut().zip(&buf) {
                *p = z.norm_sqr();
            }
        }
        Measurement::Marginal => {
            let mut buf = vec![Complex64::new(0.0, 0.0); ups];
            for c in 0..psi.len() {
                for (z, b) in buf.iter_mut().zip(&history.blocks) {
                    *z = Complex64::new(b[c], 0.0);
                }
                fft.process(&mut buf);
                for (p, z) in prob.iter_mut().zip(&buf) {
                    *p += z.norm_sqr();
                }
            }
        }
    }
    let total: f64 = prob.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::param("degenerate input: history state has zero weight"));
    }
    prob.iter_mut().for_each(|p| *p /= total);
    Ok(prob)
}

/// Whether index `l` lies within `υ′/υ` of `±φ` (cyclically).
pub fn is_success(l: usize, phi: f64, upsilon: usize, upsilon_prime: usize) -> bool {
    let x = l as f64 / upsilon as f64;
    let tol = upsilon_prime as f64 / upsilon as f64;
    cmod(1.0, x - phi).abs() < tol || cmod(1.0, x + phi).abs() < tol
}

#[derive(Debug, Clone, Serialize)]
pub struct QcpeReport {
    /// `arccos(E_ref/α)/2π` for the reference eigenvalue.
    pub phi: f64,
    /// The two most probable register indices.
    pub peaks: Vec<usize>,
    /// Fraction of sampled indices within `υ′/υ` of `±φ`.
    pub success_rate: f64,
    /// Exact probability of that event under the simulated distribution.
    pub success_probability: f64,
    /// Median of the per-sample estimates `α cos(2πℓ/υ)`.
    #[serde(rename = "E_estimate")]
    pub e_estimate: f64,
    #[serde(rename = "E_reference")]
    pub e_reference: f64,
    pub seed: u64,
    pub samples: Vec<usize>,
    /// `max_ℓ ‖U_ℓ(H/α)ψ‖ / ‖ψ‖` along the run.
    pub max_u_growth: f64,
    /// Largest recurrence residual of the padded solution.
    pub recurrence_residual: f64,
}

/// `‖H‖₂` from the singular values.
pub fn spectral_norm(h: &DMatrix<f64>) -> f64 {
    h.clone().singular_values().max()
}

/// The real eigenvalue whose eigenvector carries the largest weight in
/// the expansion of `psi`.
pub fn dominant_eigenvalue(h: &DMatrix<f64>, psi: &DVector<f64>) -> Result<f64> {
    let spec = dense_eig(h)?;
    let v = spec.vectors.ok_or_else(|| Error::numerical("eigenvectors unavailable"))?;
    let psi_c = psi.map(|x| Complex64::new(x, 0.0));
    let coeffs = v
        .clone()
        .lu()
        .solve(&psi_c)
        .ok_or_else(|| Error::numerical("eigenvector matrix is singular"))?;
    let (k, c) = coeffs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .ok_or_else(|| Error::param("empty matrix"))?;
    if c.norm() <= 1e-14 * psi.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::param("degenerate input: no overlap with any eigenvector"));
    }
    Ok(spec.values[k].re)
}

fn max_u_growth(h: &DMatrix<f64>, alpha: f64, psi: &DVector<f64>, upsilon: usize) -> f64 {
    let a = h / alpha;
    let n0 = psi.norm();
    let mut prev = psi.clone();
    let mut cur = (&a * psi) * 2.0;
    let mut m = 1.0f64.max(cur.norm() / n0);
    for _ in 2..upsilon {
        let next = (&a * &cur) * 2.0 - &prev;
        m = m.max(next.norm() / n0);
        prev = cur;
        cur = next;
    }
    m
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Runs the estimation pipeline. `reference` is the eigenvalue the
/// success statistics are measured against; when absent it is the
/// eigenvalue dominating `psi`.
pub fn qcpe_estimate(h: &DMatrix<f64>, psi: &DVector<f64>, config: &QcpeConfig, seed: u64, reference: Option<f64>) -> Result<QcpeReport> {
    check_square(h, psi)?;
    if psi.norm() == 0.0 {
        return Err(Error::param("degenerate input: zero initial state"));
    }
    config.validate(spectral_norm(h))?;
    let e_reference = match reference {
        Some(e) => e,
        None => dominant_eigenvalue(h, psi)?,
    };
    let phi = (e_reference / config.alpha).clamp(-1.0, 1.0).acos() / (2.0 * std::f64::consts::PI);
    let history = solve_padded(h, config.alpha, psi, config.upsilon)?;
    let prob = register_distribution(&history, psi, config.measurement)?;

    let mut order: Vec<usize> = (0..prob.len()).collect();
    order.sort_by(|&a, &b| prob[b].total_cmp(&prob[a]));
    let peaks = order[..2].to_vec();

    let success_probability = prob
        .iter()
        .enumerate()
        .filter(|(l, _)| is_success(*l, phi, config.upsilon, config.upsilon_prime))
        .map(|(_, p)| p)
        .sum();

    let dist = WeightedIndex::new(&prob).map_err(|e| Error::numerical(format!("sampling: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<usize> = (0..config.repeats).map(|_| dist.sample(&mut rng)).collect();
    let hits = samples.iter().filter(|&&l| is_success(l, phi, config.upsilon, config.upsilon_prime)).count();
    let mut estimates: Vec<f64> = samples
        .iter()
        .map(|&l| config.alpha * (2.0 * std::f64::consts::PI * l as f64 / config.upsilon as f64).cos())
        .collect();

    Ok(QcpeReport {
        phi,
        peaks,
        success_rate: hits as f64 / samples.len() as f64,
        success_probability,
        e_estimate: median(&mut estimates),
        e_reference,
        seed,
        samples,
        max_u_growth: max_u_growth(h, config.alpha, psi, config.upsilon),
        recurrence_residual: history.recurrence_residual(h, config.alpha),
    })
}

/// Error bound `2π α υ′/υ` on a successful estimate.
pub fn accuracy_bound(config: &QcpeConfig) -> f64 {
    2.0 * std::f64::consts::PI * config.alpha * config.upsilon_prime as f64 / config.upsilon as f64
}

/// `D S D⁻¹` with `S` a random symmetric matrix (entries in `[−1, 1]`) and
/// `D` a random positive diagonal in `[0.5, 2]`: non-normal with a real
/// spectrum.
pub fn random_real_spectrum(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let s = (&s + s.transpose()) * 0.5;
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    DMatrix::from_fn(n, n, |i, j| d[i] * s[(i, j)] / d[j])
}
