//! Pauli linear-combination-of-unitaries decompositions in first
//! quantisation.
//!
//! Each electron register holds `log₂ N` qubits. A one-register Pauli
//! string is `X^m Z^n` (bitwise powers) with matrix elements
//! `(X^m Z^n)_{y⊕m, y} = (−1)^{popcount(n & y)}`. A decomposition describes
//!
//! ```text
//! H = Σ_{mn} ω_mn Σ_i (X^m Z^n)_i
//!   + c₂ Σ γ Σ_{i≠j} (…)_i (…)_j
//!   + c₃ Σ_{mpt} ζ_mpt Σ_{i≠j≠k} (Z^m)_i (Z^p)_j (Z^t)_k
//!   + shift · I
//! ```
//!
//! where the two-body table is either diagonal (`Z^m ⊗ Z^p`, Hermitian
//! case) or general (`X^m Z^n ⊗ X^p Z^q`, transcorrelated case). The
//! register sums run over ordered tuples of distinct electrons.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{ManyBodyOperator, OperatorKind};

/// Largest `N^η` accepted by [`reconstruct`].
pub const RECONSTRUCT_LIMIT: usize = 4096;
/// Largest padded grid size for a general (four-index) two-body table.
pub const GENERAL_TWO_BODY_LIMIT: usize = 64;

/// In-place unnormalised fast Walsh–Hadamard transform.
pub fn fwht(a: &mut [f64]) {
    let n = a.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in a.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::param(format!("grid size {n} is not a power of two (pad with ghost points)")));
    }
    Ok(())
}

/// `(−1)^{popcount(a & b)}`.
#[inline]
fn parity_sign(a: usize, b: usize) -> f64 {
    if (a & b).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `ω_mn = (1/N) Σ_x (−1)^{x·n} T_{m⊕x, x}`, one Walsh transform per
/// XOR offset `m`.
pub fn walsh_onebody(t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    if t.ncols() != n {
        return Err(Error::param("walsh_onebody: matrix must be square"));
    }
    check_pow2(n)?;
    let mut out = DMatrix::zeros(n, n);
    let mut row = vec![0.0; n];
    for m in 0..n {
        for (x, r) in row.iter_mut().enumerate() {
            *r = t[(m ^ x, x)];
        }
        fwht(&mut row);
        for (k, r) in row.iter().enumerate() {
            out[(m, k)] = r / n as f64;
        }
    }
    Ok(out)
}

/// Two-dimensional Walsh transform `γ_mp = (1/N²) Σ_{xy} (−1)^{m·x + p·y} W_xy`.
pub fn walsh_twobody_diag(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::param("walsh_twobody_diag: matrix must be square"));
    }
    check_pow2(n)?;
    let mut a: Vec<f64> = (0..n * n).map(|i| w[(i / n, i % n)]).collect();
    walsh_nd(&mut a, n, 2);
    Ok(DMatrix::from_fn(n, n, |m, p| a[m * n + p] / (n * n) as f64))
}

/// Unnormalised Walsh transform along every axis of a row-major
/// `n^dims` array.
fn walsh_nd(a: &mut [f64], n: usize, dims: usize) {
    let total = a.len();
    let mut buf = vec![0.0; n];
    for axis in 0..dims {
        let stride = n.pow((dims - 1 - axis) as u32);
        for start in 0..total {
            // visit each line once: its first element has digit 0 on `axis`
            if (start / stride) % n != 0 {
                continue;
            }
            for (k, b) in buf.iter_mut().enumerate() {
                *b = a[start + k * stride];
            }
            fwht(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                a[start + k * stride] = *b;
            }
        }
    }
}

/// `γ̃_mnpq = (1/N²) Σ_{xy} (−1)^{x·n + y·q} W_{m⊕x, x, p⊕y, y}` for a
/// row-major four-index tensor `W[m,n,p,q]`.
pub fn walsh_twobody_general(w4: &[f64], n: usize) -> Result<Vec<f64>> {
    check_pow2(n)?;
    if w4.len() != n.pow(4) {
        return Err(Error::param("walsh_twobody_general: tensor must have N⁴ entries"));
    }
    let idx = |m: usize, k: usize, p: usize, q: usize| ((m * n + k) * n + p) * n + q;
    let mut out = vec![0.0; n.pow(4)];
    let mut a = vec![0.0; n * n];
    let norm = (n * n) as f64;
    for m in 0..n {
        for p in 0..n {
            for x in 0..n {
                for y in 0..n {
                    a[x * n + y] = w4[idx(m ^ x, x, p ^ y, y)];
                }
            }
            walsh_nd(&mut a, n, 2);
            for k in 0..n {
                for q in 0..n {
                    out[idx(m, k, p, q)] = a[k * n + q] / norm;
                }
            }
        }
    }
    Ok(out)
}

/// Three-dimensional Walsh transform of a diagonal three-index tensor,
/// `ζ_mpt = (1/N³) Σ_{xyz} (−1)^{x·m + y·p + z·t} B_xyz`.
pub fn walsh_threebody(b: &[f64], n: usize) -> Result<Vec<f64>> {
    check_pow2(n)?;
    if b.len() != n.pow(3) {
        return Err(Error::param("walsh_threebody: tensor must have N³ entries"));
    }
    let mut a = b.to_vec();
    walsh_nd(&mut a, n, 3);
    let norm = n.pow(3) as f64;
    a.iter_mut().for_each(|v| *v /= norm);
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TwoBody {
    /// `γ_mp` for `Z^m ⊗ Z^p`, `N²` entries row-major.
    Diagonal(Vec<f64>),
    /// `γ_mnpq` for `X^m Z^n ⊗ X^p Z^q`, `N⁴` entries row-major.
    General(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcuDecomposition {
    pub n: usize,
    pub eta: usize,
    /// `ω_mn`, `N²` entries row-major.
    pub omega: Vec<f64>,
    pub two_body: Option<TwoBody>,
    pub c2: f64,
    /// `ζ_mpt`, `N³` entries row-major.
    pub three_body: Option<Vec<f64>>,
    pub c3: f64,
    pub shift: f64,
}

/// Multiplicity-weighted one-norm, split by term order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneNorm {
    pub onebody: f64,
    pub twobody: f64,
    pub threebody: f64,
    pub total: f64,
    /// `Σ |coefficient|` over stored table entries, ignoring multiplicities.
    pub per_string: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LcuSummary {
    pub lambda: f64,
    pub n_strings: usize,
    pub shift: f64,
}

fn falling(eta: usize, k: usize) -> f64 {
    (0..k).map(|j| eta.saturating_sub(j) as f64).product()
}

impl LcuDecomposition {
    /// Hermitian decomposition of `Σ_i T_i + Σ_{i<j} W(m_i, m_j)`.
    pub fn hermitian(t: &DMatrix<f64>, w: Option<&DMatrix<f64>>, eta: usize) -> Result<Self> {
        let n = t.nrows();
        let omega = walsh_onebody(t)?;
        let two_body = match w {
            Some(w) if eta >= 2 => {
                if w.nrows() != n {
                    return Err(Error::param("pair kernel size does not match one-body matrix"));
                }
                let g = walsh_twobody_diag(w)?;
                Some(TwoBody::Diagonal(g.transpose().as_slice().to_vec()))
            }
            _ => None,
        };
        Ok(Self {
            n,
            eta,
            omega: omega.transpose().as_slice().to_vec(),
            two_body,
            c2: 0.5,
            three_body: None,
            c3: 0.0,
            shift: 0.0,
        })
    }

    /// Transcorrelated decomposition from a one-body matrix, a four-index
    /// pair tensor (summed over `i < j`) and an optional three-body tensor
    /// with its ordered-triple coefficient.
    pub fn transcorrelated(t: &DMatrix<f64>, w4: Option<&[f64]>, three: Option<(&[f64], f64)>, eta: usize) -> Result<Self> {
        let n = t.nrows();
        if w4.is_some() && n > GENERAL_TWO_BODY_LIMIT {
            return Err(Error::param(format!("general two-body table limited to N <= {GENERAL_TWO_BODY_LIMIT}")));
        }
        let omega = walsh_onebody(t)?;
        let two_body = match w4 {
            Some(w) if eta >= 2 => Some(TwoBody::General(walsh_twobody_general(w, n)?)),
            _ => None,
        };
        let (three_body, c3) = match three {
            Some((b, c)) if eta >= 3 => (Some(walsh_threebody(b, n)?), c),
            _ => (None, 0.0),
        };
        Ok(Self {
            n,
            eta,
            omega: omega.transpose().as_slice().to_vec(),
            two_body,
            c2: 0.5,
            three_body,
            c3,
            shift: 0.0,
        })
    }

    /// Decomposition of a many-body operator, padding the grid with
    /// zero-coupled ghost points up to the next power of two.
    pub fn from_operator(op: &ManyBodyOperator) -> Result<Self> {
        if op.excludes_coincident() {
            return Err(Error::Unsupported("LCU of an operator with excluded configurations".into()));
        }
        let n = op.grid_size();
        let np = n.next_power_of_two();
        let eta = op.eta();
        let t = pad_matrix(&op.onebody().to_dense(), np);
        match op.kind() {
            OperatorKind::Hermitian => {
                let w = (eta >= 2).then(|| DMatrix::from_fn(np, np, |m, p| if m < n && p < n { op.pair_value(m, p) } else { 0.0 }));
                Self::hermitian(&t, w.as_ref(), eta)
            }
            OperatorKind::Transcorrelated => {
                let w4 = if eta >= 2 { Some(pad_tensor(&op.pair_tensor()?, n, np, 4)) } else { None };
                let three = op.triple_tensor().map(|(f, c)| (pad_tensor(&f, n, np, 3), c));
                Self::transcorrelated(&t, w4.as_deref(), three.as_ref().map(|(f, c)| (f.as_slice(), *c)), eta)
            }
        }
    }

    fn idx2(&self, m: usize, k: usize) -> usize {
        m * self.n + k
    }

    fn idx4(&self, m: usize, k: usize, p: usize, q: usize) -> usize {
        ((m * self.n + k) * self.n + p) * self.n + q
    }

    /// Folds identity strings into `shift` and lower-order repeats into
    /// lower-order tables, using the exact register multiplicities
    /// `Σ_{i≠j} A_i = (η−1) Σ_i A_i` and
    /// `Σ_{i≠j≠k} A_i B_j = (η−2) Σ_{i≠j} A_i B_j`.
    pub fn prune_merge(&self) -> Self {
        let mut d = self.clone();
        let n = d.n;
        let eta = d.eta;
        if let Some(zeta) = d.three_body.as_mut() {
            let mut fold_two: Vec<(usize, usize, f64)> = Vec::new();
            for m in 0..n {
                for p in 0..n {
                    for t in 0..n {
                        let i = (m * n + p) * n + t;
                        let z = zeta[i];
                        if z == 0.0 {
                            continue;
                        }
                        let nz: Vec<usize> = [m, p, t].into_iter().filter(|&a| a != 0).collect();
                        match nz.len() {
                            0 => d.shift += d.c3 * falling(eta, 3) * z,
                            1 => d.omega[nz[0]] += d.c3 * (eta as f64 - 1.0) * (eta as f64 - 2.0) * z,
                            2 => fold_two.push((nz[0], nz[1], d.c3 * (eta as f64 - 2.0) * z)),
                            _ => continue,
                        }
                        zeta[i] = 0.0;
                    }
                }
            }
            if !fold_two.is_empty() {
                let c2 = d.c2;
                let tb = d.two_body.get_or_insert_with(|| TwoBody::General(vec![0.0; n.pow(4)]));
                for (a, b, v) in fold_two {
                    match tb {
                        TwoBody::Diagonal(g) => g[a * n + b] += v / c2,
                        TwoBody::General(g) => g[((0 * n + a) * n + 0) * n + b] += v / c2,
                    }
                }
            }
        }
        let mut two = d.two_body.take();
        if let Some(tb) = two.as_mut() {
            let c = d.c2 * (eta as f64 - 1.0);
            match tb {
                TwoBody::Diagonal(g) => {
                    for m in 0..n {
                        for p in 0..n {
                            let v = g[m * n + p];
                            if (m != 0 && p != 0) || v == 0.0 {
                                continue;
                            }
                            if m == 0 && p == 0 {
                                d.shift += d.c2 * falling(eta, 2) * v;
                            } else {
                                d.omega[m.max(p)] += c * v;
                            }
                            g[m * n + p] = 0.0;
                        }
                    }
                }
                TwoBody::General(g) => {
                    for m in 0..n {
                        for k in 0..n {
                            for p in 0..n {
                                for q in 0..n {
                                    let i = d.idx4(m, k, p, q);
                                    let v = g[i];
                                    let first_id = m == 0 && k == 0;
                                    let second_id = p == 0 && q == 0;
                                    if !(first_id || second_id) || v == 0.0 {
                                        continue;
                                    }
                                    if first_id && second_id {
                                        d.shift += d.c2 * falling(eta, 2) * v;
                                    } else if second_id {
                                        let j = d.idx2(m, k);
                                        d.omega[j] += c * v;
                                    } else {
                                        let j = d.idx2(p, q);
                                        d.omega[j] += c * v;
                                    }
                                    g[i] = 0.0;
                                }
                            }
                        }
                    }
                }
            }
        }
        d.two_body = two;
        d.shift += eta as f64 * d.omega[0];
        d.omega[0] = 0.0;
        d
    }

    /// The piecewise pruning rules with multiplicity factors taken from the
    /// grid size: `(N−1)` for the Hermitian fold and `½(N−1)`, `⅓(N−1)`,
    /// `⅓(N−1)²` for the transcorrelated folds. These reproduce the
    /// operator only when the literal factors coincide with the register
    /// multiplicities; see [`Self::prune_merge`] for the exact version.
    pub fn prune_merge_literal(&self) -> Self {
        let mut d = self.clone();
        let n = d.n;
        let nm1 = n as f64 - 1.0;
        // identity strings carry no literal factor; they go to the shift
        // with their register multiplicities
        match &d.two_body {
            Some(TwoBody::Diagonal(g)) | Some(TwoBody::General(g)) => d.shift += d.c2 * falling(d.eta, 2) * g[0],
            None => {}
        }
        if let Some(z) = &d.three_body {
            d.shift += d.c3 * falling(d.eta, 3) * z[0];
        }
        d.shift += d.eta as f64 * d.omega[0];
        d.omega[0] = 0.0;
        match d.two_body.as_mut() {
            Some(TwoBody::Diagonal(g)) => {
                for k in 1..n {
                    d.omega[k] += nm1 * g[k];
                }
                for m in 0..n {
                    for p in 0..n {
                        if m == 0 || p == 0 {
                            g[m * n + p] = 0.0;
                        }
                    }
                }
            }
            Some(TwoBody::General(g)) => {
                let idx = |m: usize, k: usize, p: usize, q: usize| ((m * n + k) * n + p) * n + q;
                let zeta = d.three_body.clone().unwrap_or_else(|| vec![0.0; n.pow(3)]);
                let z = |m: usize, p: usize, t: usize| zeta[(m * n + p) * n + t];
                let old = g.clone();
                for m in 0..n {
                    for k in 0..n {
                        if m == 0 && k == 0 {
                            continue;
                        }
                        d.omega[m * n + k] += 0.5 * nm1 * (old[idx(m, k, 0, 0)] + old[idx(0, 0, m, k)]);
                        if m == 0 {
                            d.omega[k] -= nm1 * nm1 / 3.0 * (z(k, 0, 0) + 2.0 * z(0, 0, k));
                        }
                    }
                }
                for m in 0..n {
                    for k in 0..n {
                        for p in 0..n {
                            for q in 0..n {
                                let i = idx(m, k, p, q);
                                if (m == 0 && k == 0) || (p == 0 && q == 0) {
                                    g[i] = 0.0;
                                } else if m == 0 && p == 0 {
                                    g[i] = old[i] - nm1 / 3.0 * (z(0, k, q) + 2.0 * z(k, q, 0));
                                }
                            }
                        }
                    }
                }
            }
            None => {}
        }
        if let Some(zeta) = d.three_body.as_mut() {
            for m in 0..n {
                for p in 0..n {
                    for t in 0..n {
                        if m == 0 || p == 0 || t == 0 {
                            zeta[(m * n + p) * n + t] = 0.0;
                        }
                    }
                }
            }
        }
        d
    }

    /// `λ = η Σ|ω| + |c₂| η(η−1) Σ|γ| + |c₃| η(η−1)(η−2) Σ|ζ|`; the
    /// identity coefficient is included only if it has not been pruned.
    pub fn one_norm(&self) -> OneNorm {
        let sum = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        let s1 = sum(&self.omega);
        let s2 = match &self.two_body {
            Some(TwoBody::Diagonal(g)) | Some(TwoBody::General(g)) => sum(g),
            None => 0.0,
        };
        let s3 = self.three_body.as_deref().map(sum).unwrap_or(0.0);
        let onebody = self.eta as f64 * s1;
        let twobody = self.c2.abs() * falling(self.eta, 2) * s2;
        let threebody = self.c3.abs() * falling(self.eta, 3) * s3;
        OneNorm { onebody, twobody, threebody, total: onebody + twobody + threebody, per_string: s1 + s2 + s3 }
    }

    pub fn n_strings(&self) -> usize {
        let nz = |v: &[f64]| v.iter().filter(|x| **x != 0.0).count();
        nz(&self.omega)
            + match &self.two_body {
                Some(TwoBody::Diagonal(g)) | Some(TwoBody::General(g)) => nz(g),
                None => 0,
            }
            + self.three_body.as_deref().map(nz).unwrap_or(0)
    }

    pub fn summary(&self) -> LcuSummary {
        LcuSummary { lambda: self.one_norm().total, n_strings: self.n_strings(), shift: self.shift }
    }

    /// Coefficient table as CSV lines `kind(indices),value` for every
    /// non-zero entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.n;
        writeln!(out, "term,value")?;
        for m in 0..n {
            for k in 0..n {
                let v = self.omega[m * n + k];
                if v != 0.0 {
                    writeln!(out, "omega({m};{k}),{v:.17e}")?;
                }
            }
        }
        match &self.two_body {
            Some(TwoBody::Diagonal(g)) => {
                for m in 0..n {
                    for p in 0..n {
                        let v = g[m * n + p];
                        if v != 0.0 {
                            writeln!(out, "gamma({m};{p}),{v:.17e}")?;
                        }
                    }
                }
            }
            Some(TwoBody::General(g)) => {
                for (i, v) in g.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                    let (m, k, p, q) = (i / (n * n * n), (i / (n * n)) % n, (i / n) % n, i % n);
                    writeln!(out, "gamma({m};{k};{p};{q}),{v:.17e}")?;
                }
            }
            None => {}
        }
        if let Some(z) = &self.three_body {
            for (i, v) in z.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                let (m, p, t) = (i / (n * n), (i / n) % n, i % n);
                writeln!(out, "zeta({m};{p};{t}),{v:.17e}")?;
            }
        }
        Ok(())
    }
}

/// Zero-pads a square matrix to `np × np` (ghost points decouple).
pub fn pad_matrix(a: &DMatrix<f64>, np: usize) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(np, np, |i, j| if i < n && j < n { a[(i, j)] } else { 0.0 })
}

/// Zero-pads a row-major `n^dims` tensor to `np^dims`.
pub fn pad_tensor(a: &[f64], n: usize, np: usize, dims: usize) -> Vec<f64> {
    let mut out = vec![0.0; np.pow(dims as u32)];
    for (i, v) in a.iter().enumerate() {
        let mut rest = i;
        let mut j = 0;
        let mut scale = 1;
        for _ in 0..dims {
            j += (rest % n) * scale;
            rest /= n;
            scale *= np;
        }
        out[j] = *v;
    }
    out
}

/// Applies the one-register string `X^m Z^n` to column digit `y`:
/// returns the row digit and the sign.
#[inline]
fn pauli_action(m: usize, k: usize, y: usize) -> (usize, f64) {
    (y ^ m, parity_sign(k, y))
}

/// Dense `N^η × N^η` matrix of the decomposition.
pub fn reconstruct(d: &LcuDecomposition) -> Result<DMatrix<f64>> {
    let n = d.n;
    let eta = d.eta;
    let dim = (0..eta).try_fold(1usize, |a, _| a.checked_mul(n)).unwrap_or(usize::MAX);
    if dim > RECONSTRUCT_LIMIT {
        return Err(Error::param(format!("reconstruct: dimension {dim} exceeds {RECONSTRUCT_LIMIT}")));
    }
    let strides: Vec<usize> = (0..eta).map(|i| n.pow((eta - 1 - i) as u32)).collect();
    let digit = |idx: usize, i: usize| (idx / strides[i]) % n;
    let mut h = DMatrix::<f64>::identity(dim, dim) * d.shift;
    for col in 0..dim {
        for m in 0..n {
            for k in 0..n {
                let w = d.omega[m * n + k];
                if w == 0.0 {
                    continue;
                }
                for i in 0..eta {
                    let y = digit(col, i);
                    let (r, s) = pauli_action(m, k, y);
                    h[(col + (r * strides[i]) - y * strides[i], col)] += w * s;
                }
            }
        }
        if let Some(tb) = &d.two_body {
            for i in 0..eta {
                for j in 0..eta {
                    if i == j {
                        continue;
                    }
                    let (yi, yj) = (digit(col, i), digit(col, j));
                    match tb {
                        TwoBody::Diagonal(g) => {
                            for m in 0..n {
                                for p in 0..n {
                                    let w = g[m * n + p];
                                    if w != 0.0 {
                                        h[(col, col)] += d.c2 * w * parity_sign(m, yi) * parity_sign(p, yj);
                                    }
                                }
                            }
                        }
                        TwoBody::General(g) => {
                            for (idx, &w) in g.iter().enumerate() {
                                if w == 0.0 {
                                    continue;
                                }
                                let (m, k, p, q) = (idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n);
                                let (ri, si) = pauli_action(m, k, yi);
                                let (rj, sj) = pauli_action(p, q, yj);
                                let row = col - yi * strides[i] - yj * strides[j] + ri * strides[i] + rj * strides[j];
                                h[(row, col)] += d.c2 * w * si * sj;
                            }
                        }
                    }
                }
            }
        }
        if let Some(z) = &d.three_body {
            let mut diag = 0.0;
            for i in 0..eta {
                for j in 0..eta {
                    for k in 0..eta {
                        if i == j || j == k || i == k {
                            continue;
                        }
                        let (yi, yj, yk) = (digit(col, i), digit(col, j), digit(col, k));
                        for (idx, &w) in z.iter().enumerate() {
                            if w != 0.0 {
                                let (m, p, t) = (idx / (n * n), (idx / n) % n, idx % n);
                                diag += w * parity_sign(m, yi) * parity_sign(p, yj) * parity_sign(t, yk);
                            }
                        }
                    }
                }
            }
            h[(col, col)] += d.c3 * diag;
        }
    }
    Ok(h)
}

/// Eigenphases of the qubitised walk operator versus `±arccos(E_k/λ)`.
#[derive(Debug, Clone, Serialize)]
pub struct WalkReport {
    pub dim: usize,
    pub lambda: f64,
    pub max_phase_error: f64,
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
}

/// Builds the dilation `U = [[A, S], [S, −A]]` with `A = H/λ` and
/// `S = √(I − A²)`, forms `Q = U · diag(I, −I) = [[A, −S], [S, A]]` and
/// compares its eigenphases with `±arccos(E_k/λ)`.
pub fn walk_spectrum_check(h: &DMatrix<f64>, lambda: f64) -> Result<WalkReport> {
    let n = h.nrows();
    if h.ncols() != n || n == 0 {
        return Err(Error::param("walk_spectrum_check: matrix must be square and non-empty"));
    }
    if n > 512 {
        return Err(Error::param("walk_spectrum_check: dimension limited to 512"));
    }
    if (h - h.transpose()).amax() > 1e-12 * h.amax().max(1.0) {
        return Err(Error::param("walk_spectrum_check: matrix must be symmetric"));
    }
    let sym = SymmetricEigen::new(h.clone());
    let norm = sym.eigenvalues.amax();
    if !(lambda > 0.0) || norm > lambda * (1.0 + 1e-12) {
        return Err(Error::param(format!("walk_spectrum_check: ‖H‖ = {norm} exceeds lambda = {lambda}")));
    }
    let a = h / lambda;
    let s_diag = sym.eigenvalues.map(|e| (1.0 - (e / lambda).powi(2)).max(0.0).sqrt());
    let s = &sym.eigenvectors * DMatrix::from_diagonal(&s_diag) * sym.eigenvectors.transpose();
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    q.view_mut((0, 0), (n, n)).copy_from(&a);
    q.view_mut((n, n), (n, n)).copy_from(&a);
    q.view_mut((0, n), (n, n)).copy_from(&(-&s));
    q.view_mut((n, 0), (n, n)).copy_from(&s);
    let eig = crate::eigensolve::dense_eigenvalues(&q)?;
    let mut observed: Vec<f64> = eig.iter().map(|z| z.im.atan2(z.re)).collect();
    let mut expected: Vec<f64> = sym
        .eigenvalues
        .iter()
        .flat_map(|e| {
            let t = (e / lambda).clamp(-1.0, 1.0).acos();
            [t, -t]
        })
        .collect();
    observed.sort_by(f64::total_cmp);
    expected.sort_by(f64::total_cmp);
    let max_phase_error = observed.iter().zip(&expected).fold(0.0f64, |m, (o, e)| m.max((o - e).abs()));
    Ok(WalkReport { dim: n, lambda, max_phase_error, expected, observed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvops::{SelfInteraction, DEFAULT_SELF_C0};
    use crate::molgrid::Molecule;
    use crate::transcorrelated::JastrowParams;
    use crate::vec3::Vec3;
    use crate::voronoi::{build_diagram, BoundingBox};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let a = random_matrix(n, seed);
        (&a + a.transpose()) * 0.5
    }

    /// Dense `X^m Z^n` for one register of size `n`.
    fn pauli(m: usize, k: usize, n: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(n, n);
        for y in 0..n {
            p[(y ^ m, y)] = parity_sign(k, y);
        }
        p
    }

    #[test]
    fn walsh_onebody_examples() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let w = walsh_onebody(&t).unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let (a, b, c, dd) = (0.3, -1.2, 2.5, 0.7);
        let w = walsh_onebody(&DMatrix::from_row_slice(2, 2, &[a, b, c, dd])).unwrap();
        assert!((w[(0, 0)] - (a + dd) / 2.0).abs() < 1e-15);
        assert!((w[(0, 1)] - (a - dd) / 2.0).abs() < 1e-15);
        assert!((w[(1, 0)] - (b + c) / 2.0).abs() < 1e-15);
        assert!((w[(1, 1)] - (c - b) / 2.0).abs() < 1e-15);
        let w = walsh_onebody(&DMatrix::identity(8, 8)).unwrap();
        assert!((w[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((w.sum() - 1.0).abs() < 1e-15);
        assert!(walsh_onebody(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn walsh_tables_equal_trace_coefficients() {
        for &n in &[2usize, 4, 8] {
            let t = random_matrix(n, n as u64);
            let w = walsh_onebody(&t).unwrap();
            for m in 0..n {
                for k in 0..n {
                    let a = (pauli(m, k, n).transpose() * &t).trace() / n as f64;
                    assert!((a - w[(m, k)]).abs() < 1e-12);
                }
            }
            let wk = random_symmetric(n, 50 + n as u64);
            let g = walsh_twobody_diag(&wk).unwrap();
            let wdiag = DMatrix::from_fn(n * n, n * n, |i, j| if i == j { wk[(i / n, i % n)] } else { 0.0 });
            for m in 0..n {
                for p in 0..n {
                    let pp = pauli(0, m, n).kronecker(&pauli(0, p, n));
                    let a = (pp * &wdiag).trace() / (n * n) as f64;
                    assert!((a - g[(m, p)]).abs() < 1e-12);
                }
            }
            assert!((&g - g.transpose()).amax() < 1e-14);
        }
    }

    #[test]
    fn walsh_twobody_examples() {
        let g = walsh_twobody_diag(&DMatrix::from_element(4, 4, 1.0)).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15 && (g.abs().sum() - 1.0).abs() < 1e-15);
        let g = walsh_twobody_diag(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5]));
        let z = walsh_threebody(&[2.5; 64], 4).unwrap();
        assert!((z[0] - 2.5).abs() < 1e-15 && z[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn general_two_body_single_entry_brute_force() {
        let n = 2;
        let mut w4 = vec![0.0; 16];
        // ⟨1 0|W|0 1⟩ = 1.5
        w4[((1 * n + 0) * n + 0) * n + 1] = 1.5;
        let g = walsh_twobody_general(&w4, n).unwrap();
        let dense = {
            let mut d = DMatrix::zeros(4, 4);
            d[(1 * 2 + 0, 0 * 2 + 1)] = 1.5;
            d
        };
        for m in 0..2 {
            for k in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        let pp = pauli(m, k, 2).kronecker(&pauli(p, q, 2));
                        let a = (pp.transpose() * &dense).trace() / 4.0;
                        assert!((a - g[((m * 2 + k) * 2 + p) * 2 + q]).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn zeta_symmetry() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = vec![0.0; 64];
        for x in 0..n {
            for y in 0..n {
                for z in y..n {
                    let v = rng.random_range(-1.0..1.0);
                    b[(x * n + y) * n + z] = v;
                    b[(x * n + z) * n + y] = v;
                }
            }
        }
        let zt = walsh_threebody(&b, n).unwrap();
        for m in 0..n {
            for p in 0..n {
                for t in 0..n {
                    assert!((zt[(m * n + p) * n + t] - zt[(m * n + t) * n + p]).abs() < 1e-15);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn reconstruct_inverts_walsh(logn in 0u32..7, seed in 0u64..1000) {
            let n = 1usize << logn;
            let t = random_matrix(n, seed);
            let d = LcuDecomposition::hermitian(&t, None, 1).unwrap();
            let r = reconstruct(&d).unwrap();
            prop_assert!((r - t).amax() < 1e-12);
        }
    }

    fn random_diagram(n: usize, seed: u64) -> crate::voronoi::VoronoiDiagram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        build_diagram(&pts, BoundingBox::new([-1.5; 3], [1.5; 3]).unwrap()).unwrap()
    }

    fn reg() -> SelfInteraction {
        SelfInteraction::Regularized { c0: DEFAULT_SELF_C0 }
    }

    fn mol() -> Molecule {
        Molecule::from_charges(&[(1.0, [0.1, 0.0, -0.05])]).unwrap()
    }

    #[test]
    fn hermitian_reconstruction_and_pruning() {
        for &(n, eta) in &[(4usize, 2usize), (8, 2), (4, 3), (8, 3)] {
            let d = random_diagram(n, 10 + n as u64);
            let op = ManyBodyOperator::hermitian(&d, &mol(), eta, reg()).unwrap();
            let h = op.dense_matrix().unwrap();
            let lcu = LcuDecomposition::from_operator(&op).unwrap();
            assert!((reconstruct(&lcu).unwrap() - &h).amax() < 1e-10);
            let pruned = lcu.prune_merge();
            assert_eq!(pruned.omega[0], 0.0);
            let r = reconstruct(&pruned).unwrap();
            assert!((r - &h).amax() < 1e-10, "N={n} eta={eta}");
            // identity-free tables plus shift
            let mut no_shift = pruned.clone();
            no_shift.shift = 0.0;
            let r0 = reconstruct(&no_shift).unwrap();
            assert!((r0 + DMatrix::identity(h.nrows(), h.nrows()) * pruned.shift - &h).amax() < 1e-10);
        }
    }

    #[test]
    fn tc_reconstruction_and_pruning() {
        let params = JastrowParams::new(1.0, 1.3).unwrap();
        for &(n, eta) in &[(4usize, 2usize), (8, 2), (4, 3), (8, 3)] {
            let d = random_diagram(n, 20 + n as u64);
            let op = ManyBodyOperator::transcorrelated(&d, &mol(), eta, &params, reg()).unwrap();
            let h = op.dense_matrix().unwrap();
            let lcu = LcuDecomposition::from_operator(&op).unwrap();
            assert!((reconstruct(&lcu).unwrap() - &h).amax() < 1e-10, "N={n} eta={eta}");
            let r = reconstruct(&lcu.prune_merge()).unwrap();
            assert!((r - &h).amax() < 1e-10, "pruned N={n} eta={eta}");
        }
    }

    #[test]
    fn ghost_padding_preserves_the_physical_block() {
        let d = random_diagram(5, 31);
        let op = ManyBodyOperator::hermitian(&d, &mol(), 2, reg()).unwrap();
        let h = op.dense_matrix().unwrap();
        let r = reconstruct(&LcuDecomposition::from_operator(&op).unwrap().prune_merge()).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                let (ri, rj) = ((i / 5) * 8 + i % 5, (j / 5) * 8 + j % 5);
                assert!((r[(ri, rj)] - h[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn literal_hermitian_rule_matches_only_when_n_equals_eta() {
        // N = η = 2: (N−1) = (η−1)
        let t = random_symmetric(2, 1);
        let w = random_symmetric(2, 2);
        let d = LcuDecomposition::hermitian(&t, Some(&w), 2).unwrap();
        assert!((reconstruct(&d.prune_merge_literal()).unwrap() - reconstruct(&d).unwrap()).amax() < 1e-12);
        let exact = d.prune_merge();
        let literal = d.prune_merge_literal();
        for (a, b) in exact.omega.iter().zip(&literal.omega) {
            assert!((a - b).abs() < 1e-14);
        }
        // N = 4, η = 2: the literal multiplicity over-counts
        let t = random_symmetric(4, 3);
        let w = random_symmetric(4, 4);
        let d = LcuDecomposition::hermitian(&t, Some(&w), 2).unwrap();
        let gap = (reconstruct(&d.prune_merge_literal()).unwrap() - reconstruct(&d).unwrap()).amax();
        assert!(gap > 1e-3);
        // ω′₀ₙ = ω₀ₙ + (N−1)γ₀ₙ literally
        let p = d.prune_merge_literal();
        let g = walsh_twobody_diag(&w).unwrap();
        let o = walsh_onebody(&t).unwrap();
        for k in 1..4 {
            assert!((p.omega[k] - (o[(0, k)] + 3.0 * g[(0, k)])).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_two_body_prunes_only_the_identity() {
        let t = random_matrix(4, 5);
        let d = LcuDecomposition::hermitian(&t, Some(&DMatrix::zeros(4, 4)), 2).unwrap();
        let p = d.prune_merge();
        assert_eq!(p.omega[0], 0.0);
        assert_eq!(&p.omega[1..], &d.omega[1..]);
        assert!((p.shift - 2.0 * d.omega[0]).abs() < 1e-15);
    }

    #[test]
    fn one_norm_examples_and_bound() {
        let mut omega = vec![0.0; 4];
        omega[1] = 0.5;
        let d = LcuDecomposition { n: 2, eta: 2, omega, two_body: None, c2: 0.5, three_body: None, c3: 0.0, shift: 0.0 };
        assert_eq!(d.one_norm().total, 1.0);
        let id = LcuDecomposition::hermitian(&(DMatrix::identity(4, 4) * 3.0), Some(&DMatrix::from_element(4, 4, 2.0)), 2).unwrap();
        assert_eq!(id.prune_merge().one_norm().total, 0.0);
        let params = JastrowParams::new(1.0, 1.0).unwrap();
        for seed in 0..4 {
            for &(n, eta) in &[(4usize, 2usize), (8, 2), (4, 3)] {
                let dg = random_diagram(n, 40 + seed);
                for op in [
                    ManyBodyOperator::hermitian(&dg, &mol(), eta, reg()).unwrap(),
                    ManyBodyOperator::transcorrelated(&dg, &mol(), eta, &params, reg()).unwrap(),
                ] {
                    let lcu = LcuDecomposition::from_operator(&op).unwrap().prune_merge();
                    let mut tables = lcu.clone();
                    tables.shift = 0.0;
                    let r = reconstruct(&tables).unwrap();
                    let rho = crate::eigensolve::dense_eigenvalues(&r).unwrap().iter().fold(0.0f64, |m, z| m.max(z.norm()));
                    assert!(lcu.one_norm().total >= rho * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn spectrum_shift_is_constant() {
        let d = random_diagram(4, 60);
        let op = ManyBodyOperator::hermitian(&d, &mol(), 2, reg()).unwrap();
        let h = op.dense_matrix().unwrap();
        let mut lcu = LcuDecomposition::from_operator(&op).unwrap().prune_merge();
        let shift = lcu.shift;
        lcu.shift = 0.0;
        let a = SymmetricEigen::new(h).eigenvalues;
        let b = SymmetricEigen::new(reconstruct(&lcu).unwrap()).eigenvalues;
        let mut a: Vec<f64> = a.iter().copied().collect();
        let mut b: Vec<f64> = b.iter().copied().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y - shift).abs() < 1e-10);
        }
    }

    #[test]
    fn walk_phase_examples() {
        let r = walk_spectrum_check(&DMatrix::from_element(1, 1, 0.3), 1.0).unwrap();
        assert!((r.observed[1] - 0.3f64.acos()).abs() < 1e-12 && (r.observed[0] + 0.3f64.acos()).abs() < 1e-12);
        let r = walk_spectrum_check(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0])), 2.0).unwrap();
        let third = std::f64::consts::PI / 3.0;
        let want = [-2.0 * third, -third, third, 2.0 * third];
        for (o, w) in r.observed.iter().zip(want) {
            assert!((o - w).abs() < 1e-12);
        }
        for seed in 0..3 {
            let h = random_symmetric(16, 70 + seed);
            let lam = SymmetricEigen::new(h.clone()).eigenvalues.amax() * 1.3;
            assert!(walk_spectrum_check(&h, lam).unwrap().max_phase_error < 1e-8);
        }
        assert!(walk_spectrum_check(&DMatrix::from_element(1, 1, 2.0), 1.0).is_err());
    }

    #[test]
    fn csv_and_summary_export() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let d = LcuDecomposition::hermitian(&t, None, 1).unwrap().prune_merge();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert!(s.contains("omega(0;1),1.0"));
        let j = serde_json::to_value(d.summary()).unwrap();
        assert_eq!(j["n_strings"], 1);
        assert_eq!(j["lambda"], 1.0);
    }
}
