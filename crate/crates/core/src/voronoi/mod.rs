//! Bounded 3-d Voronoi diagrams by per-cell half-space clipping.
//!
//! Each cell starts as the bounding box and is clipped by the bisector
//! planes of its nearest candidates, taken in increasing distance from a
//! k-d tree. Clipping stops once the next candidate is farther than twice
//! the distance from the generator to the farthest cell vertex, since no
//! bisector beyond that radius can touch the cell.

mod kdtree;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use kdtree::KdTree;

use crate::error::{Error, Result};
use crate::molgrid::Molecule;
use crate::vec3::{self, Vec3};

/// Facets at or below this area (bohr²) are not treated as neighbours.
pub const MIN_FACET_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoundingBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|a| !(max[a] > min[a]) || !min[a].is_finite() || !max[a].is_finite()) {
            return Err(Error::param("bounding box: max must exceed min componentwise"));
        }
        Ok(Self { min, max })
    }

    /// Bounding box of the nuclei padded by `max(1.25 * max_radius, 10)`.
    pub fn around_molecule(molecule: &Molecule, max_radius: f64) -> Result<Self> {
        let pad = (1.25 * max_radius).max(10.0);
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for atom in molecule.atoms() {
            for a in 0..3 {
                lo[a] = lo[a].min(atom.position[a]);
                hi[a] = hi[a].max(atom.position[a]);
            }
        }
        Self::new(
            [lo[0] - pad, lo[1] - pad, lo[2] - pad],
            [hi[0] + pad, hi[1] + pad, hi[2] + pad],
        )
    }

    /// Bounding box of `points` padded by `pad` on every side.
    pub fn around_points(points: &[Vec3], pad: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("bounding box of an empty point set"));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Self::new(
            [lo[0] - pad, lo[1] - pad, lo[2] - pad],
            [hi[0] + pad, hi[1] + pad, hi[2] + pad],
        )
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }

    pub fn contains_strictly(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    fn diagonal(&self) -> f64 {
        vec3::dist(self.min, self.max)
    }

    /// Faces as polygons ordered counter-clockwise seen from outside.
    /// Face `2a` is the `min` side of axis `a`, face `2a+1` the `max` side.
    fn faces(&self) -> Vec<Face> {
        let (l, h) = (self.min, self.max);
        let c = |x: usize, y: usize, z: usize| -> Vec3 {
            [[l[0], h[0]][x], [l[1], h[1]][y], [l[2], h[2]][z]]
        };
        let quads: [[Vec3; 4]; 6] = [
            [c(0, 0, 0), c(0, 0, 1), c(0, 1, 1), c(0, 1, 0)],
            [c(1, 0, 0), c(1, 1, 0), c(1, 1, 1), c(1, 0, 1)],
            [c(0, 0, 0), c(1, 0, 0), c(1, 0, 1), c(0, 0, 1)],
            [c(0, 1, 0), c(0, 1, 1), c(1, 1, 1), c(1, 1, 0)],
            [c(0, 0, 0), c(0, 1, 0), c(1, 1, 0), c(1, 0, 0)],
            [c(0, 0, 1), c(1, 0, 1), c(1, 1, 1), c(0, 1, 1)],
        ];
        quads
            .iter()
            .enumerate()
            .map(|(i, q)| Face { label: Label::Box(i as u8), verts: q.to_vec() })
            .collect()
    }

    /// Distance from `p` to box face `face` (see [`faces`](Self::faces)).
    fn face_distance(&self, p: Vec3, face: usize) -> f64 {
        let a = face / 2;
        if face % 2 == 0 {
            p[a] - self.min[a]
        } else {
            self.max[a] - p[a]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Neighbor(usize),
    Box(u8),
}

#[derive(Debug, Clone)]
struct Face {
    label: Label,
    verts: Vec<Vec3>,
}

/// Area of a planar polygon, `½ ‖Σ (ξ_k − ρ) × (ξ_{k+1} − ρ)‖`.
///
/// The vector sum is independent of `ρ` for a closed planar polygon, so any
/// reference point in (or out of) the plane gives the same area. Fewer than
/// three vertices give 0.
pub fn facet_area(verts: &[Vec3], reference: Vec3) -> f64 {
    if verts.len() < 3 {
        return 0.0;
    }
    let mut s = [0.0; 3];
    for k in 0..verts.len() {
        let a = vec3::sub(verts[k], reference);
        let b = vec3::sub(verts[(k + 1) % verts.len()], reference);
        s = vec3::add(s, vec3::cross(a, b));
    }
    0.5 * vec3::norm(s)
}

/// Pyramid-sum cell volume `(1/6) Σ_n d_mn σ_mn` for facets given as
/// `(distance between generators, area)` pairs. Box pseudo-facets enter with
/// twice the generator-to-face distance.
pub fn cell_volume(facets: &[(f64, f64)]) -> f64 {
    facets.iter().map(|(d, a)| d * a).sum::<f64>() / 6.0
}

/// Per-cell geometry before symmetrisation.
struct RawCell {
    /// `(neighbour, own facet area)` sorted by neighbour.
    facets: Vec<(usize, f64)>,
    box_areas: [f64; 6],
    volume: f64,
}

#[derive(Debug, Clone)]
pub struct VoronoiDiagram {
    points: Vec<Vec3>,
    bbox: BoundingBox,
    volumes: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    areas: Vec<Vec<f64>>,
    box_areas: Vec<[f64; 6]>,
    dropped_facets: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramStats {
    pub cells: usize,
    pub boundary_cells: usize,
    pub facets: usize,
    pub mean_neighbors: f64,
    pub min_volume: f64,
    pub max_volume: f64,
    pub total_volume: f64,
    pub box_volume: f64,
    pub dropped_facets: usize,
}

#[derive(Serialize)]
struct DiagramExport<'a> {
    volumes: &'a [f64],
    neighbors: &'a [Vec<usize>],
    facet_areas: &'a [Vec<f64>],
}

/// Builds the Voronoi diagram of `points` clipped to `bbox`.
pub fn build_diagram(points: &[Vec3], bbox: BoundingBox) -> Result<VoronoiDiagram> {
    if points.is_empty() {
        return Err(Error::param("voronoi: no points"));
    }
    for (i, p) in points.iter().enumerate() {
        if !bbox.contains_strictly(*p) {
            return Err(Error::param(format!("voronoi: point {i} lies outside the bounding box")));
        }
    }
    let tree = KdTree::new(points);
    if points.len() > 1 {
        for (i, p) in points.iter().enumerate() {
            let nn = tree.nearest(*p, 2);
            let other = if nn[0].1 == i { nn[1] } else { nn[0] };
            if other.0 == 0.0 {
                return Err(Error::param(format!(
                    "voronoi: points {} and {} coincide",
                    i.min(other.1),
                    i.max(other.1)
                )));
            }
        }
    }
    let eps = 1e-12 * (1.0 + bbox.diagonal());
    let raw: Vec<RawCell> = (0..points.len())
        .into_par_iter()
        .map(|m| build_cell(m, points, &tree, &bbox, eps))
        .collect::<Result<_>>()?;

    let mut neighbors = Vec::with_capacity(points.len());
    let mut areas = Vec::with_capacity(points.len());
    let mut dropped = 0;
    for (m, cell) in raw.iter().enumerate() {
        let mut nb = Vec::with_capacity(cell.facets.len());
        let mut ar = Vec::with_capacity(cell.facets.len());
        for &(n, a_mn) in &cell.facets {
            let other = &raw[n].facets;
            let a_nm = other
                .binary_search_by_key(&m, |&(k, _)| k)
                .map(|k| other[k].1)
                .unwrap_or(0.0);
            if a_mn > MIN_FACET_AREA && a_nm > MIN_FACET_AREA {
                nb.push(n);
                ar.push(0.5 * (a_mn + a_nm));
            } else {
                dropped += 1;
            }
        }
        neighbors.push(nb);
        areas.push(ar);
    }
    Ok(VoronoiDiagram {
        points: points.to_vec(),
        bbox,
        volumes: raw.iter().map(|c| c.volume).collect(),
        neighbors,
        areas,
        box_areas: raw.iter().map(|c| c.box_areas).collect(),
        dropped_facets: dropped,
    })
}

fn build_cell(m: usize, points: &[Vec3], tree: &KdTree, bbox: &BoundingBox, eps: f64) -> Result<RawCell> {
    let p = points[m];
    let mut faces = bbox.faces();
    let mut radius = max_vertex_distance(&faces, p);
    let mut k = 32usize.min(points.len());
    let mut done = 0;
    'outer: loop {
        let cand = tree.nearest(p, k);
        for &(d2, n) in &cand[done..] {
            if n == m {
                continue;
            }
            if d2.sqrt() > 2.0 * radius + eps {
                break 'outer;
            }
            let normal = vec3::sub(points[n], p);
            let mid = vec3::midpoint(p, points[n]);
            if clip(&mut faces, normal, vec3::dot(normal, mid), Label::Neighbor(n), eps) {
                radius = max_vertex_distance(&faces, p);
            }
        }
        done = cand.len();
        if k >= points.len() {
            break;
        }
        k = (2 * k).min(points.len());
    }

    let mut facets = Vec::new();
    let mut box_areas = [0.0; 6];
    let mut pyramids = Vec::with_capacity(faces.len());
    for face in &faces {
        match face.label {
            Label::Neighbor(n) => {
                let rho = vec3::midpoint(p, points[n]);
                let a = facet_area(&face.verts, rho);
                pyramids.push((vec3::dist(p, points[n]), a));
                facets.push((n, a));
            }
            Label::Box(b) => {
                let a = facet_area(&face.verts, face.verts[0]);
                box_areas[b as usize] += a;
                pyramids.push((2.0 * bbox.face_distance(p, b as usize), a));
            }
        }
    }
    facets.sort_by_key(|&(n, _)| n);
    let volume = cell_volume(&pyramids);
    if !(volume > 0.0) {
        return Err(Error::internal(format!("voronoi: cell {m} has non-positive volume")));
    }
    Ok(RawCell { facets, box_areas, volume })
}

fn max_vertex_distance(faces: &[Face], p: Vec3) -> f64 {
    faces
        .iter()
        .flat_map(|f| f.verts.iter())
        .map(|v| vec3::dist(*v, p))
        .fold(0.0, f64::max)
}

/// Clips the convex polyhedron `faces` to `normal·x <= offset`, adding the
/// cut polygon as a new face. Returns whether anything was removed.
fn clip(faces: &mut Vec<Face>, normal: Vec3, offset: f64, label: Label, eps: f64) -> bool {
    let inv = 1.0 / vec3::norm(normal);
    let side = |x: Vec3| (vec3::dot(normal, x) - offset) * inv;
    if faces.iter().flat_map(|f| f.verts.iter()).all(|v| side(*v) <= eps) {
        return false;
    }
    let mut cut: Vec<Vec3> = Vec::new();
    let mut kept = Vec::with_capacity(faces.len() + 1);
    for face in faces.drain(..) {
        let s: Vec<f64> = face.verts.iter().map(|v| side(*v)).collect();
        if s.iter().all(|&x| x <= eps) {
            for (v, &x) in face.verts.iter().zip(&s) {
                if x.abs() <= eps {
                    cut.push(*v);
                }
            }
            kept.push(face);
            continue;
        }
        if s.iter().all(|&x| x >= -eps) {
            continue;
        }
        let nv = face.verts.len();
        let mut out = Vec::with_capacity(nv + 1);
        for i in 0..nv {
            let (a, b) = (face.verts[i], face.verts[(i + 1) % nv]);
            let (sa, sb) = (s[i], s[(i + 1) % nv]);
            if sa <= eps {
                out.push(a);
                if sa.abs() <= eps {
                    cut.push(a);
                }
            }
            if (sa < -eps && sb > eps) || (sa > eps && sb < -eps) {
                let t = sa / (sa - sb);
                let x = vec3::add(a, vec3::scale(vec3::sub(b, a), t));
                out.push(x);
                cut.push(x);
            }
        }
        dedup_cyclic(&mut out, eps);
        if out.len() >= 3 {
            kept.push(Face { label: face.label, verts: out });
        }
    }
    *faces = kept;
    let poly = order_polygon(cut, normal, eps);
    if poly.len() >= 3 {
        faces.push(Face { label, verts: poly });
    }
    true
}

fn dedup_cyclic(v: &mut Vec<Vec3>, eps: f64) {
    v.dedup_by(|a, b| vec3::dist(*a, *b) <= 4.0 * eps);
    while v.len() > 1 && vec3::dist(v[0], *v.last().unwrap()) <= 4.0 * eps {
        v.pop();
    }
}

/// Removes near-duplicates and sorts coplanar points counter-clockwise
/// around `normal`.
fn order_polygon(points: Vec<Vec3>, normal: Vec3, eps: f64) -> Vec<Vec3> {
    let mut uniq: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !uniq.iter().any(|q| vec3::dist(*q, p) <= 4.0 * eps) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return uniq;
    }
    let n = vec3::unit(normal);
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = vec3::unit(vec3::cross(n, helper));
    let w = vec3::cross(n, u);
    let inv = 1.0 / uniq.len() as f64;
    let centre = uniq.iter().fold([0.0; 3], |s, p| vec3::add(s, vec3::scale(*p, inv)));
    let mut keyed: Vec<(f64, Vec3)> = uniq
        .into_iter()
        .map(|p| {
            let d = vec3::sub(p, centre);
            (vec3::dot(d, w).atan2(vec3::dot(d, u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, p)| p).collect()
}

impl VoronoiDiagram {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn bounding_box(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn volume(&self, m: usize) -> f64 {
        self.volumes[m]
    }

    /// Natural neighbours `Λ(m)`, ascending.
    pub fn neighbors(&self, m: usize) -> &[usize] {
        &self.neighbors[m]
    }

    /// Facet areas `σ_mn`, parallel to [`neighbors`](Self::neighbors).
    pub fn facet_areas(&self, m: usize) -> &[f64] {
        &self.areas[m]
    }

    pub fn facet_area_between(&self, m: usize, n: usize) -> Option<f64> {
        self.neighbors[m].binary_search(&n).ok().map(|k| self.areas[m][k])
    }

    /// `|r_m − r_n|`.
    pub fn distance(&self, m: usize, n: usize) -> f64 {
        vec3::dist(self.points[m], self.points[n])
    }

    /// Outward facet normal of cell `m` towards `n`, `(r_n − r_m)/|r_n − r_m|`.
    pub fn normal(&self, m: usize, n: usize) -> Vec3 {
        vec3::unit(vec3::sub(self.points[n], self.points[m]))
    }

    /// Areas of the cell's intersections with the six box faces.
    pub fn box_facet_areas(&self, m: usize) -> [f64; 6] {
        self.box_areas[m]
    }

    pub fn is_boundary(&self, m: usize) -> bool {
        self.box_areas[m].iter().any(|&a| a > MIN_FACET_AREA)
    }

    /// Facets discarded as too small or seen from one side only.
    pub fn dropped_facets(&self) -> usize {
        self.dropped_facets
    }

    /// Whether `x` lies in cell `m`, judged from its neighbour bisectors and
    /// the box.
    pub fn cell_contains(&self, m: usize, x: Vec3, tol: f64) -> bool {
        if !self.bbox.contains(x) {
            return false;
        }
        let p = self.points[m];
        self.neighbors[m].iter().all(|&n| {
            let q = self.points[n];
            let normal = vec3::unit(vec3::sub(q, p));
            vec3::dot(vec3::sub(x, vec3::midpoint(p, q)), normal) <= tol
        })
    }

    /// `Σ_n σ_mn r̂_mn`; vanishes for closed interior cells.
    pub fn closure_defect(&self, m: usize) -> Vec3 {
        self.neighbors[m]
            .iter()
            .zip(&self.areas[m])
            .fold([0.0; 3], |s, (&n, &a)| vec3::add(s, vec3::scale(self.normal(m, n), a)))
    }

    pub fn stats(&self) -> DiagramStats {
        let facets: usize = self.neighbors.iter().map(Vec::len).sum();
        DiagramStats {
            cells: self.len(),
            boundary_cells: (0..self.len()).filter(|&m| self.is_boundary(m)).count(),
            facets: facets / 2,
            mean_neighbors: facets as f64 / self.len() as f64,
            min_volume: self.volumes.iter().copied().fold(f64::INFINITY, f64::min),
            max_volume: self.volumes.iter().copied().fold(0.0, f64::max),
            total_volume: self.volumes.iter().sum(),
            box_volume: self.bbox.volume(),
            dropped_facets: self.dropped_facets,
        }
    }

    /// JSON with `volumes`, `neighbors` and `facet_areas`.
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(
            out,
            &DiagramExport {
                volumes: &self.volumes,
                neighbors: &self.neighbors,
                facet_areas: &self.areas,
            },
        )?;
        Ok(())
    }
}
