//! Static 3-d tree for k-nearest-neighbour queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::vec3::{self, Vec3};

/// Balanced tree stored implicitly: the node of a subrange `[lo, hi)` of
/// `perm` sits at its midpoint and splits on `axis[mid]`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    perm: Vec<usize>,
    axis: Vec<u8>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut perm: Vec<usize> = (0..points.len()).collect();
        let mut axis = vec![0u8; points.len()];
        build(points, &mut perm, &mut axis);
        Self { points: points.to_vec(), perm, axis }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `q` as `(squared distance, index)`,
    /// ascending by distance then index.
    pub fn nearest(&self, q: Vec3, k: usize) -> Vec<(f64, usize)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(q, k, 0, self.perm.len(), &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.0, c.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn search(&self, q: Vec3, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.perm[mid];
        let p = self.points[idx];
        let d2 = vec3::dist2(p, q);
        if heap.len() < k {
            heap.push(Candidate(d2, idx));
        } else if let Some(top) = heap.peek() {
            if Candidate(d2, idx) < *top {
                heap.pop();
                heap.push(Candidate(d2, idx));
            }
        }
        let ax = self.axis[mid] as usize;
        let delta = q[ax] - p[ax];
        let (near, far) = if delta < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, k, near.0, near.1, heap);
        let worst = heap.peek().map_or(f64::INFINITY, |c| c.0);
        if heap.len() < k || delta * delta <= worst {
            self.search(q, k, far.0, far.1, heap);
        }
    }
}

fn build(points: &[Vec3], perm: &mut [usize], axis: &mut [u8]) {
    if perm.len() <= 1 {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in perm.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let ax = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = perm.len() / 2;
    perm.select_nth_unstable_by(mid, |&a, &b| points[a][ax].total_cmp(&points[b][ax]).then(a.cmp(&b)));
    axis[mid] = ax as u8;
    let (left, right) = perm.split_at_mut(mid);
    let (laxis, raxis) = axis.split_at_mut(mid);
    build(points, left, laxis);
    build(points, &mut right[1..], &mut raxis[1..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>() * 3.0])
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let k = rng.random_range(1..40);
            let got = tree.nearest(q, k);
            let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (vec3::dist2(*p, q), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(got, all[..k].to_vec());
        }
    }

    #[test]
    fn small_and_empty() {
        assert!(KdTree::new(&[]).nearest([0.0; 3], 3).is_empty());
        let t = KdTree::new(&[[1.0, 0.0, 0.0]]);
        assert_eq!(t.nearest([0.0; 3], 5), vec![(1.0, 0)]);
    }
}
