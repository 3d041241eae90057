//! Dense reference eigensolver and a matrix-free Davidson method.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::molgrid::Molecule;
use crate::sparse::SparseMatrix;
use crate::vec3::{self, Vec3};

/// Largest dimension accepted by the dense solver.
pub const DENSE_LIMIT: usize = 4096;

/// A square real operator applied matrix-free.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    fn is_symmetric(&self) -> bool;
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        SparseMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        SparseMatrix::diagonal(self).to_vec()
    }

    fn is_symmetric(&self) -> bool {
        self.asymmetry() == 0.0
    }
}

/// Dense matrix wrapper for [`LinearOperator`].
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    symmetric: bool,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let symmetric = matrix == matrix.transpose();
        Self { matrix, symmetric }
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let r = &self.matrix * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
    }

    fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Full spectrum, sorted by real part then by `|Im|`.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub values: Vec<Complex64>,
    /// Right eigenvectors as columns (unit 2-norm), when requested.
    pub vectors: Option<DMatrix<Complex64>>,
}

impl DenseSpectrum {
    /// Largest `|Im λ|`.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }
}

fn check_dense(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::param("dense eigensolver: matrix must be square"));
    }
    if m.nrows() == 0 || m.nrows() > DENSE_LIMIT {
        return Err(Error::param(format!(
            "dense eigensolver: dimension {} outside 1..={DENSE_LIMIT}",
            m.nrows()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("dense eigensolver: non-finite entries"));
    }
    Ok(())
}

fn sort_spectrum(values: &mut [(Complex64, usize)]) {
    values.sort_by(|a, b| {
        a.0.re
            .total_cmp(&b.0.re)
            .then(a.0.im.abs().total_cmp(&b.0.im.abs()))
            .then(a.0.im.total_cmp(&b.0.im))
    });
}

/// Eigenvalues only.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    check_dense(m)?;
    if *m == m.transpose() {
        let e = m
            .clone()
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;
        let mut v: Vec<f64> = e.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        return Ok(v.into_iter().map(|x| Complex64::new(x, 0.0)).collect());
    }
    let schur = real_schur(m)?;
    let mut v: Vec<(Complex64, usize)> = schur
        .complex_eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, z)| (Complex64::new(z.re, z.im), i))
        .collect();
    sort_spectrum(&mut v);
    Ok(v.into_iter().map(|(z, _)| z).collect())
}

/// Real Schur form, relaxing the deflation threshold when the QR sweep
/// stalls at machine precision.
fn real_schur(m: &DMatrix<f64>) -> Result<nalgebra::Schur<f64, nalgebra::Dyn>> {
    [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12]
        .iter()
        .find_map(|&eps| m.clone().try_schur(eps, 100_000))
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))
}

/// Eigenvalues and right eigenvectors.
///
/// Symmetric input goes through the symmetric solver. Otherwise the
/// eigenvalues come from a real Schur decomposition and each eigenvector
/// from complex inverse iteration at a slightly perturbed shift.
pub fn dense_eig(m: &DMatrix<f64>) -> Result<DenseSpectrum> {
    check_dense(m)?;
    let n = m.nrows();
    if *m == m.transpose() {
        let e: SymmetricEigen<f64, nalgebra::Dyn> = m
            .clone()
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;
        let mut order: Vec<(Complex64, usize)> = e
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &x)| (Complex64::new(x, 0.0), i))
            .collect();
        sort_spectrum(&mut order);
        let mut vecs = DMatrix::<Complex64>::zeros(n, n);
        for (c, &(_, i)) in order.iter().enumerate() {
            for r in 0..n {
                vecs[(r, c)] = Complex64::new(e.eigenvectors[(r, i)], 0.0);
            }
        }
        return Ok(DenseSpectrum { values: order.into_iter().map(|(z, _)| z).collect(), vectors: Some(vecs) });
    }
    let values = dense_eigenvalues(m)?;
    let norm = m.iter().fold(0.0f64, |s, x| s.max(x.abs())) * n as f64;
    let mc: DMatrix<Complex64> = m.map(|x| Complex64::new(x, 0.0));
    let mut vecs = DMatrix::<Complex64>::zeros(n, n);
    for (c, &lambda) in values.iter().enumerate() {
        let shift = lambda + Complex64::new(1e-10 * norm.max(1.0), 0.0);
        let mut a = mc.clone();
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut x = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * (i % 7) as f64, 0.01 * (i % 3) as f64));
        for _ in 0..3 {
            x = lu
                .solve(&x)
                .ok_or_else(|| Error::numerical("inverse iteration: singular shifted matrix"))?;
            let nrm = x.norm();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(Error::numerical("inverse iteration: eigenvector vanished"));
            }
            x /= Complex64::new(nrm, 0.0);
        }
        // fix the phase so that the largest component is real and positive
        let (imax, _) = x.iter().enumerate().fold((0, 0.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) });
        let phase = x[imax] / Complex64::new(x[imax].norm(), 0.0);
        x /= phase;
        vecs.set_column(c, &x);
    }
    Ok(DenseSpectrum { values, vectors: Some(vecs) })
}

#[derive(Debug, Clone)]
pub struct DavidsonOptions {
    pub tol: f64,
    pub max_subspace: usize,
    /// Ritz vectors kept on restart.
    pub restart_size: usize,
    pub max_iter: usize,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_subspace: 20, restart_size: 1, max_iter: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub eigenvalue: f64,
    /// Imaginary part of the selected Ritz value (zero for symmetric input).
    pub eigenvalue_imag: f64,
    /// Right eigenvector, unit 2-norm.
    pub vector: Vec<f64>,
    /// `‖A v − λ v‖`, recomputed after convergence.
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub eigenvalue: f64,
    pub residual: f64,
}

/// Writes `iter,eigenvalue,residual` rows.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "iter,eigenvalue,residual")?;
    for t in trace {
        writeln!(out, "{},{:.16e},{:.6e}", t.iter, t.eigenvalue, t.residual)?;
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalises `t` against `basis` (two passes) and normalises it.
/// Returns `false` when nothing independent remains.
fn orthonormalize(t: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let before = norm(t);
    if !(before > 0.0) || !before.is_finite() {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, t);
            axpy(-c, b, t);
        }
    }
    let after = norm(t);
    if after <= 1e-10 * before {
        return false;
    }
    t.iter_mut().for_each(|x| *x /= after);
    true
}

/// Ritz pairs of the projected matrix, ordered by real part then `|Im|`.
/// Each pair is `(value, imag, coefficient vector)`; complex pairs use the
/// real part of the coefficient vector.
fn ritz(h: &DMatrix<f64>, symmetric: bool) -> Result<Vec<(f64, f64, Vec<f64>)>> {
    if symmetric {
        let hs = (h + h.transpose()) * 0.5;
        let e = hs
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numerical("Davidson: projected eigenproblem failed"))?;
        let mut out: Vec<(f64, f64, Vec<f64>)> = (0..e.eigenvalues.len())
            .map(|i| (e.eigenvalues[i], 0.0, e.eigenvectors.column(i).iter().copied().collect()))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        return Ok(out);
    }
    let spec = dense_eig(h)?;
    let vecs = spec.vectors.expect("vectors requested");
    Ok(spec
        .values
        .iter()
        .enumerate()
        .map(|(c, z)| {
            let mut y: Vec<f64> = vecs.column(c).iter().map(|w| w.re).collect();
            if norm(&y) < 1e-8 {
                y = vecs.column(c).iter().map(|w| w.im).collect();
            }
            let n = norm(&y);
            y.iter_mut().for_each(|x| *x /= n);
            (z.re, z.im, y)
        })
        .collect())
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (b, &c) in basis.iter().zip(coeffs) {
        axpy(c, b, &mut out);
    }
    out
}

/// Lowest-real-part eigenpair by generalised Davidson with a diagonal
/// preconditioner.
pub fn davidson(op: &dyn LinearOperator, guess: &[f64], opts: &DavidsonOptions) -> Result<EigResult> {
    let n = op.dim();
    if guess.len() != n {
        return Err(Error::param(format!("davidson: guess length {} for dimension {n}", guess.len())));
    }
    if opts.max_subspace < 2 || opts.restart_size == 0 || opts.restart_size >= opts.max_subspace {
        return Err(Error::param("davidson: need 1 <= restart_size < max_subspace, max_subspace >= 2"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("davidson: tolerance must be positive"));
    }
    let symmetric = op.is_symmetric();
    let diag = op.diagonal();
    let mut t = guess.to_vec();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    if !orthonormalize(&mut t, &basis) {
        return Err(Error::param("davidson: zero initial guess"));
    }
    let mut h = DMatrix::<f64>::zeros(0, 0);
    let mut trace = Vec::new();
    let mut best = (f64::NAN, f64::INFINITY);

    for iter in 1..=opts.max_iter {
        let mut at = vec![0.0; n];
        op.apply(&t, &mut at);
        basis.push(t);
        images.push(at);
        let k = basis.len();
        let mut hn = DMatrix::<f64>::zeros(k, k);
        hn.view_mut((0, 0), (k - 1, k - 1)).copy_from(&h);
        for i in 0..k {
            hn[(i, k - 1)] = dot(&basis[i], &images[k - 1]);
            hn[(k - 1, i)] = dot(&basis[k - 1], &images[i]);
        }
        h = hn;

        let pairs = ritz(&h, symmetric)?;
        let (theta, theta_im, y) = pairs[0].clone();
        let x = combine(&basis, &y);
        let ax = combine(&images, &y);
        let mut r = ax.clone();
        axpy(-theta, &x, &mut r);
        let rnorm = norm(&r);
        trace.push(TraceRow { iter, eigenvalue: theta, residual: rnorm });
        if rnorm < best.1 {
            best = (theta, rnorm);
        }
        if rnorm <= opts.tol {
            let mut x = x;
            let xn = norm(&x);
            x.iter_mut().for_each(|v| *v /= xn);
            let mut check = vec![0.0; n];
            op.apply(&x, &mut check);
            axpy(-theta, &x, &mut check);
            return Ok(EigResult {
                eigenvalue: theta,
                eigenvalue_imag: theta_im,
                vector: x,
                residual: norm(&check),
                iterations: iter,
                trace,
            });
        }

        // diagonal preconditioner
        let mut t_new: Vec<f64> = r
            .iter()
            .zip(&diag)
            .map(|(ri, di)| {
                let mut d = theta - di;
                if d.abs() < 1e-8 {
                    d = if d < 0.0 { -1e-8 } else { 1e-8 };
                }
                ri / d
            })
            .collect();

        if k >= opts.max_subspace {
            let keep = opts.restart_size.min(pairs.len());
            let mut nb: Vec<Vec<f64>> = Vec::with_capacity(keep);
            let mut ni: Vec<Vec<f64>> = Vec::with_capacity(keep);
            for (_, _, yc) in pairs.iter().take(keep) {
                let mut v = combine(&basis, yc);
                let mut av = combine(&images, yc);
                // orthonormalise the kept vectors, carrying images along
                for (b, ab) in nb.iter().zip(&ni) {
                    let c = dot(b, &v);
                    axpy(-c, b, &mut v);
                    axpy(-c, ab, &mut av);
                }
                let vn = norm(&v);
                if vn > 1e-10 {
                    v.iter_mut().for_each(|z| *z /= vn);
                    av.iter_mut().for_each(|z| *z /= vn);
                    nb.push(v);
                    ni.push(av);
                }
            }
            basis = nb;
            images = ni;
            let m = basis.len();
            h = DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &images[j]));
        }

        if !orthonormalize(&mut t_new, &basis) {
            t_new = r;
            if !orthonormalize(&mut t_new, &basis) {
                return Err(Error::NotConverged { eigenvalue: best.0, residual: best.1, iterations: iter });
            }
        }
        t = t_new;
    }
    Err(Error::NotConverged { eigenvalue: best.0, residual: best.1, iterations: opts.max_iter })
}

/// Slater-1s LCAO guess `Σ_α exp(−Z_α |r_m − R_α|)`.
///
/// With `volumes` given every entry is multiplied by `√v_m`, converting
/// point samples to the representation of the symmetrised Laplacian. For
/// `eta = 2` the normalised tensor square is returned.
pub fn initial_guess(points: &[Vec3], volumes: Option<&[f64]>, molecule: &Molecule, eta: usize) -> Result<Vec<f64>> {
    if !(1..=2).contains(&eta) {
        return Err(Error::param("initial_guess: eta must be 1 or 2"));
    }
    if let Some(v) = volumes {
        if v.len() != points.len() {
            return Err(Error::param("initial_guess: volume count mismatch"));
        }
    }
    let mut phi: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let s: f64 = molecule
                .atoms()
                .iter()
                .map(|a| (-a.charge * vec3::dist(*p, a.position)).exp())
                .sum();
            s * volumes.map_or(1.0, |v| v[m].sqrt())
        })
        .collect();
    let nrm = norm(&phi);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::internal("initial_guess: zero-norm guess"));
    }
    phi.iter_mut().for_each(|x| *x /= nrm);
    if eta == 1 {
        return Ok(phi);
    }
    let n = phi.len();
    let mut out = vec![0.0; n * n];
    for (i, a) in phi.iter().enumerate() {
        for (j, b) in phi.iter().enumerate() {
            out[i * n + j] = a * b;
        }
    }
    Ok(out)
}
