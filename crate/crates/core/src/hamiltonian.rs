//! Matrix-free η-electron Hamiltonians on a Voronoi grid.
//!
//! Basis states are configurations `(m_0, …, m_{η−1})` of cell indices,
//! flattened with electron 0 as the most significant digit:
//! `I = Σ_i m_i N^{η−1−i}`.
//!
//! The Hermitian operator acts on `√v`-weighted amplitudes and uses the
//! symmetrised Laplacian. The transcorrelated operator acts on point
//! samples and uses the plain finite-volume Laplacian; see
//! [`crate::transcorrelated`] for its blocks.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::eigensolve::LinearOperator;
use crate::error::{Error, Result};
use crate::fvops::{coulomb_kernel, laplacian, nuclear_attraction, onebody, symmetrize_laplacian, SelfInteraction};
use crate::molgrid::Molecule;
use crate::sparse::SparseMatrix;
use crate::transcorrelated::{h_prime, tc_onebody, tc_pair_diag, tc_three_body, GradientStencil, JastrowParams};
use crate::vec3::{self, Vec3};
use crate::voronoi::VoronoiDiagram;

/// Largest `N^η` accepted by [`ManyBodyOperator::dense_matrix`].
pub const DENSE_MATRIX_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Transcorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Symmetric,
    Antisymmetric,
}

/// Pair gradient channel of the transcorrelated operator.
#[derive(Debug, Clone)]
struct PairGradient {
    stencil: GradientStencil,
    mu: f64,
    scale: f64,
}

/// η-electron operator assembled from one-body, pair and triple blocks.
#[derive(Debug, Clone)]
pub struct ManyBodyOperator {
    kind: OperatorKind,
    eta: usize,
    n: usize,
    dim: usize,
    points: Vec<Vec3>,
    onebody: SparseMatrix,
    /// Row-major `N × N` pair diagonal (empty for η = 1).
    pair: Vec<f64>,
    gradient: Option<PairGradient>,
    three_body: Option<JastrowParams>,
    /// Configurations with two electrons in one cell are removed.
    exclude_coincident: bool,
}

fn checked_pow(n: usize, eta: usize) -> Result<usize> {
    (0..eta)
        .try_fold(1usize, |acc, _| acc.checked_mul(n))
        .ok_or_else(|| Error::param(format!("N^eta overflows for N = {n}, eta = {eta}")))
}

impl ManyBodyOperator {
    /// `Σ_i T̄_i + Σ_{i<j} W(r_{m_i}, r_{m_j})` with `T̄ = −½L̄ − U`.
    pub fn hermitian(diagram: &VoronoiDiagram, molecule: &Molecule, eta: usize, self_interaction: SelfInteraction) -> Result<Self> {
        let l = laplacian(diagram)?;
        let lbar = symmetrize_laplacian(&l, diagram.volumes())?;
        let t = onebody(&lbar, &nuclear_attraction(diagram.points(), molecule)?)?;
        let pts = diagram.points();
        let pair = Self::pair_table(eta, diagram.len(), |m, p| {
            Ok(coulomb_kernel(pts[m], pts[p], diagram.volume(m), self_interaction))
        })?;
        Self::assemble(OperatorKind::Hermitian, eta, diagram, t, pair, None, None, self_interaction.excludes())
    }

    /// Transcorrelated operator for the given Jastrow parameters.
    pub fn transcorrelated(
        diagram: &VoronoiDiagram,
        molecule: &Molecule,
        eta: usize,
        params: &JastrowParams,
        self_interaction: SelfInteraction,
    ) -> Result<Self> {
        params.validate()?;
        let l = laplacian(diagram)?;
        let t = tc_onebody(diagram, molecule, params, &l)?;
        let pts = diagram.points();
        let pair = Self::pair_table(eta, diagram.len(), |m, p| {
            Ok(tc_pair_diag(pts[m], pts[p], molecule, params, self_interaction.value(diagram.volume(m))))
        })?;
        let gradient = (eta >= 2 && params.ee_active()).then(|| PairGradient {
            stencil: GradientStencil::new(diagram),
            mu: params.mu_ee,
            scale: params.ee_scale,
        });
        let three = (eta >= 3 && params.ee_active()).then_some(*params);
        Self::assemble(OperatorKind::Transcorrelated, eta, diagram, t, pair, gradient, three, self_interaction.excludes())
    }

    fn pair_table(eta: usize, n: usize, f: impl Fn(usize, usize) -> Result<f64> + Sync) -> Result<Vec<f64>> {
        if eta < 2 {
            return Ok(Vec::new());
        }
        let size = n.checked_mul(n).ok_or_else(|| Error::param("pair table too large"))?;
        let mut out = vec![0.0; size];
        out.par_chunks_mut(n).enumerate().try_for_each(|(m, row)| {
            for (p, w) in row.iter_mut().enumerate() {
                *w = f(m, p)?;
            }
            Ok::<(), Error>(())
        })?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: OperatorKind,
        eta: usize,
        diagram: &VoronoiDiagram,
        onebody: SparseMatrix,
        pair: Vec<f64>,
        gradient: Option<PairGradient>,
        three_body: Option<JastrowParams>,
        exclude_coincident: bool,
    ) -> Result<Self> {
        if eta == 0 {
            return Err(Error::param("eta must be at least 1"));
        }
        let n = diagram.len();
        Ok(Self {
            kind,
            eta,
            n,
            dim: checked_pow(n, eta)?,
            points: diagram.points().to_vec(),
            onebody,
            pair,
            gradient,
            three_body,
            exclude_coincident: exclude_coincident && eta >= 2,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    /// One-body matrix shared by all registers.
    pub fn onebody(&self) -> &SparseMatrix {
        &self.onebody
    }

    /// Pair diagonal between cells `m` and `p` (0 for η = 1).
    pub fn pair_value(&self, m: usize, p: usize) -> f64 {
        if self.pair.is_empty() {
            0.0
        } else {
            self.pair[m * self.n + p]
        }
    }

    /// Three-body diagonal for cells `(m, p, t)`.
    pub fn triple_value(&self, m: usize, p: usize, t: usize) -> f64 {
        match &self.three_body {
            Some(params) => tc_three_body(self.points[m], self.points[p], self.points[t], params),
            None => 0.0,
        }
    }

    pub fn excludes_coincident(&self) -> bool {
        self.exclude_coincident
    }

    fn strides(&self) -> Vec<usize> {
        (0..self.eta).map(|i| self.n.pow((self.eta - 1 - i) as u32)).collect()
    }

    fn decode(&self, mut idx: usize, cells: &mut [usize]) {
        for c in cells.iter_mut().rev() {
            *c = idx % self.n;
            idx /= self.n;
        }
    }

    fn coincident(cells: &[usize]) -> bool {
        (0..cells.len()).any(|i| (i + 1..cells.len()).any(|j| cells[i] == cells[j]))
    }

    /// Whether configuration `idx` is part of the active space.
    pub fn is_active(&self, idx: usize) -> bool {
        if !self.exclude_coincident {
            return true;
        }
        let mut cells = vec![0; self.eta];
        self.decode(idx, &mut cells);
        !Self::coincident(&cells)
    }

    fn diagonal_of(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&m| self.onebody.diagonal()[m]).sum::<f64>() + self.interaction_diagonal(cells)
    }

    /// Pair and triple terms of the configuration diagonal.
    fn interaction_diagonal(&self, cells: &[usize]) -> f64 {
        let mut d = 0.0;
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                d += self.pair_value(cells[i], cells[j]);
                for k in j + 1..cells.len() {
                    d += self.triple_value(cells[i], cells[j], cells[k]);
                }
            }
        }
        d
    }

    /// `−κ h'(r) r̂` for the ordered pair `(m, p)`; zero when coincident.
    #[inline]
    fn pair_gradient_weight(&self, g: &PairGradient, m: usize, p: usize) -> Vec3 {
        let d = vec3::sub(self.points[m], self.points[p]);
        let r = vec3::norm(d);
        if r == 0.0 {
            return [0.0; 3];
        }
        vec3::scale(d, -g.scale * h_prime(r, g.mu) / r)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::param(format!("state length {len} does not match N^eta = {}", self.dim)));
        }
        Ok(())
    }

    fn masked<'a>(&self, x: &'a [f64]) -> std::borrow::Cow<'a, [f64]> {
        if !self.exclude_coincident {
            return std::borrow::Cow::Borrowed(x);
        }
        let mut y = x.to_vec();
        self.zero_inactive(&mut y);
        std::borrow::Cow::Owned(y)
    }

    fn zero_inactive(&self, y: &mut [f64]) {
        if !self.exclude_coincident {
            return;
        }
        if self.eta == 2 {
            for m in 0..self.n {
                y[m * self.n + m] = 0.0;
            }
        } else {
            y.par_iter_mut().enumerate().for_each(|(i, v)| {
                if !self.is_active(i) {
                    *v = 0.0;
                }
            });
        }
    }

    /// Applies the operator, checking the state length.
    pub fn apply_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let x = self.masked(x);
        let x = &x[..];
        match self.eta {
            1 => y.par_iter_mut().enumerate().for_each(|(m, v)| *v = self.onebody.row_dot(m, x)),
            2 => self.apply_two(x, y),
            _ => self.apply_general(x, y),
        }
        self.zero_inactive(y);
    }

    fn apply_two(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        y.par_chunks_mut(n).enumerate().for_each(|(m, row)| {
            let base = m * n;
            for (p, out) in row.iter_mut().enumerate() {
                let mut v = self.onebody.row_dot_strided(m, x, p, n) + self.onebody.row_dot_strided(p, x, base, 1);
                v += self.pair[base + p] * x[base + p];
                if let Some(g) = &self.gradient {
                    let w = self.pair_gradient_weight(g, m, p);
                    if w != [0.0; 3] {
                        let g1 = g.stencil.gradient_strided(m, x, p, n);
                        let g2 = g.stencil.gradient_strided(p, x, base, 1);
                        v += vec3::dot(w, vec3::sub(g1, g2));
                    }
                }
                *out = v;
            }
        });
    }

    fn apply_general(&self, x: &[f64], y: &mut [f64]) {
        let strides = self.strides();
        y.par_iter_mut().enumerate().for_each_init(
            || vec![0usize; self.eta],
            |cells, (idx, out)| {
                self.decode(idx, cells);
                let mut v = self.interaction_diagonal(cells) * x[idx];
                for (i, &m) in cells.iter().enumerate() {
                    let offset = idx - m * strides[i];
                    v += self.onebody.row_dot_strided(m, x, offset, strides[i]);
                }
                if let Some(g) = &self.gradient {
                    for i in 0..self.eta {
                        for j in i + 1..self.eta {
                            let (mi, mj) = (cells[i], cells[j]);
                            let w = self.pair_gradient_weight(g, mi, mj);
                            if w == [0.0; 3] {
                                continue;
                            }
                            let gi = g.stencil.gradient_strided(mi, x, idx - mi * strides[i], strides[i]);
                            let gj = g.stencil.gradient_strided(mj, x, idx - mj * strides[j], strides[j]);
                            v += vec3::dot(w, vec3::sub(gi, gj));
                        }
                    }
                }
                *out = v;
            },
        );
    }

    /// Four-index pair tensor `W[m,n,p,q] = ⟨m p|W|n q⟩` (row-major, `N⁴`
    /// entries) such that the pair part equals `Σ_{i<j} W` on registers
    /// `i, j`. Limited to `N ≤ 64`.
    pub fn pair_tensor(&self) -> Result<Vec<f64>> {
        let n = self.n;
        if n > 64 {
            return Err(Error::param(format!("pair_tensor: N = {n} exceeds 64")));
        }
        let idx = |m: usize, k: usize, p: usize, q: usize| ((m * n + k) * n + p) * n + q;
        let mut w = vec![0.0; n.pow(4)];
        if self.eta < 2 {
            return Ok(w);
        }
        for m in 0..n {
            for p in 0..n {
                w[idx(m, m, p, p)] += self.pair_value(m, p);
                if let Some(g) = &self.gradient {
                    let wt = self.pair_gradient_weight(g, m, p);
                    let (cols, coefs) = g.stencil.row(m);
                    for (&k, c) in cols.iter().zip(coefs) {
                        w[idx(m, k, p, p)] += vec3::dot(wt, *c);
                    }
                    let (cols, coefs) = g.stencil.row(p);
                    for (&q, c) in cols.iter().zip(coefs) {
                        w[idx(m, m, p, q)] -= vec3::dot(wt, *c);
                    }
                }
            }
        }
        Ok(w)
    }

    /// Three-body tensor `F[m,p,t]` and coefficient `c` such that the
    /// triple part equals `c Σ_{i≠j≠k} F(m_i, m_j, m_k)` over ordered
    /// triples. `None` when there is no three-body term.
    pub fn triple_tensor(&self) -> Option<(Vec<f64>, f64)> {
        let params = self.three_body.as_ref()?;
        let n = self.n;
        let pts = &self.points;
        let mut f = vec![0.0; n * n * n];
        for m in 0..n {
            for p in 0..n {
                for t in 0..n {
                    f[(m * n + p) * n + t] =
                        crate::transcorrelated::tc_b(vec3::sub(pts[m], pts[p]), vec3::sub(pts[m], pts[t]), params.mu_ee);
                }
            }
        }
        Some((f, -0.5 * params.ee_scale * params.ee_scale))
    }

    /// Explicit matrix (validation only), `N^η ≤ 4096`.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        if self.dim > DENSE_MATRIX_LIMIT {
            return Err(Error::param(format!("dense_matrix: dimension {} exceeds {DENSE_MATRIX_LIMIT}", self.dim)));
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut e = vec![0.0; self.dim];
        let mut col = vec![0.0; self.dim];
        for j in 0..self.dim {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(m)
    }

    /// Converts a state between the `√v`-weighted and point-sample
    /// representations (`to_points = true` divides by `Π_i √v_{m_i}`).
    pub fn reweight(state: &mut [f64], volumes: &[f64], eta: usize, to_points: bool) -> Result<()> {
        let n = volumes.len();
        if state.len() != checked_pow(n, eta)? {
            return Err(Error::param("reweight: state length does not match N^eta"));
        }
        let roots: Vec<f64> = volumes
            .iter()
            .map(|v| if to_points { 1.0 / v.sqrt() } else { v.sqrt() })
            .collect();
        state.par_iter_mut().enumerate().for_each(|(mut idx, s)| {
            for _ in 0..eta {
                *s *= roots[idx % n];
                idx /= n;
            }
        });
        Ok(())
    }
}

impl LinearOperator for ManyBodyOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        out.par_iter_mut().enumerate().for_each_init(
            || vec![0usize; self.eta],
            |cells, (idx, d)| {
                self.decode(idx, cells);
                *d = if self.exclude_coincident && Self::coincident(cells) { 0.0 } else { self.diagonal_of(cells) };
            },
        );
        out
    }

    fn is_symmetric(&self) -> bool {
        self.kind == OperatorKind::Hermitian
    }
}

/// `(x ± P x)/2` with `P` the swap of the two electron registers.
pub fn exchange_project(state: &[f64], n: usize, eta: usize, parity: Parity) -> Result<Vec<f64>> {
    if eta != 2 {
        return Err(Error::Unsupported("exchange projection is implemented for two electrons only".into()));
    }
    if state.len() != n * n {
        return Err(Error::param(format!("exchange_project: length {} for N = {n}", state.len())));
    }
    let sign = match parity {
        Parity::Symmetric => 1.0,
        Parity::Antisymmetric => -1.0,
    };
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(m, row)| {
        for (p, v) in row.iter_mut().enumerate() {
            *v = 0.5 * (state[m * n + p] + sign * state[p * n + m]);
        }
    });
    Ok(out)
}
