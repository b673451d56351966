//! Spatial search and subsampling over point sets.
//!
//! All distance math runs in f64, even though clouds store f32, so that every
//! caller (losses, metrics, dataset construction) sees identical numbers for
//! identical point pairs. The k-d tree is held to brute-force semantics
//! exactly: neighbors ordered by distance, ties broken toward the lower
//! index, bit-for-bit equal to a linear scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{dist2, PointCloud};
use crate::{Error, Result};

/// One k-NN result: reference-set index and Euclidean distance in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Outcome of furthest-point sampling: the selected indices (unique, in
/// selection order, `min(count, n)` of them) plus the requested count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FpsResult {
    pub indices: Vec<usize>,
    pub count: usize,
}

#[derive(Debug)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static k-d tree over a fixed point set.
#[derive(Debug)]
pub struct KdIndex {
    pts: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

/// Max-heap entry ordered by (squared distance, index); the heap top is the
/// current worst candidate.
#[derive(PartialEq)]
struct HeapEntry {
    d2: f64,
    idx: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdIndex {
    /// Builds the index over f64 points (coordinates must be finite; clouds
    /// and configs enforce that upstream).
    pub fn from_points(points: &[[f64; 3]]) -> Self {
        let pts = points.to_vec();
        let mut idxs: Vec<usize> = (0..pts.len()).collect();
        let mut nodes = Vec::with_capacity(pts.len());
        let root = build(&pts, &mut idxs, &mut nodes);
        KdIndex { pts, nodes, root }
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::from_points(&cloud.to_f64_points())
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.pts
    }

    /// The `min(k, len)` nearest points to `query`, ascending by
    /// (distance, index). Exactly what a sorted linear scan returns.
    /// `k = 0` yields an empty result; an empty index is an error.
    pub fn knn(&self, query: [f64; 3], k: usize) -> Result<Vec<Neighbor>> {
        if self.pts.is_empty() {
            return Err(Error::Empty("spatial index"));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut best = BestSet { k, heap: BinaryHeap::with_capacity(k + 1) };
        self.search(self.root, query, &mut best);
        Ok(best
            .heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Neighbor { index: e.idx, distance: e.d2.sqrt() })
            .collect())
    }

    /// Closest point to `query`; errors on an empty index.
    pub fn nearest(&self, query: [f64; 3]) -> Result<Neighbor> {
        Ok(self.knn(query, 1)?[0])
    }

    /// Euclidean distance from `query` to its closest stored point.
    pub fn nearest_distance(&self, query: [f64; 3]) -> Result<f64> {
        Ok(self.nearest(query)?.distance)
    }

    fn search(&self, node: Option<usize>, query: [f64; 3], best: &mut BestSet) {
        let Some(id) = node else { return };
        let n = &self.nodes[id];
        best.offer(dist2(self.pts[n.point], query), n.point);
        let delta = query[n.axis] - self.pts[n.point][n.axis];
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, query, best);
        // Visit the far side on exact equality too: a point at precisely the
        // current worst distance can still win its tie on a lower index.
        if !best.full() || delta * delta <= best.worst_d2() {
            self.search(far, query, best);
        }
    }
}

struct BestSet {
    k: usize,
    heap: BinaryHeap<HeapEntry>,
}

impl BestSet {
    fn full(&self) -> bool {
        self.heap.len() == self.k
    }

    fn worst_d2(&self) -> f64 {
        self.heap.peek().map_or(f64::INFINITY, |e| e.d2)
    }

    fn offer(&mut self, d2: f64, idx: usize) {
        if self.heap.len() < self.k {
            self.heap.push(HeapEntry { d2, idx });
        } else if let Some(top) = self.heap.peek() {
            if d2.total_cmp(&top.d2).then(idx.cmp(&top.idx)) == Ordering::Less {
                self.heap.pop();
                self.heap.push(HeapEntry { d2, idx });
            }
        }
    }
}

/// Median split on the longest-extent axis; ties in coordinates resolved by
/// index so the tree shape is deterministic.
fn build(pts: &[[f64; 3]], idxs: &mut [usize], nodes: &mut Vec<Node>) -> Option<usize> {
    if idxs.is_empty() {
        return None;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in idxs.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(pts[i][a]);
            hi[a] = hi[a].max(pts[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = idxs.len() / 2;
    idxs.select_nth_unstable_by(mid, |&a, &b| {
        pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
    });
    let point = idxs[mid];
    let id = nodes.len();
    nodes.push(Node { point, axis, left: None, right: None });
    let (l, rest) = idxs.split_at_mut(mid);
    let left = build(pts, l, nodes);
    let right = build(pts, &mut rest[1..], nodes);
    nodes[id].left = left;
    nodes[id].right = right;
    Some(id)
}

/// Greedy furthest-point subsampling.
///
/// The first index is drawn uniformly from a ChaCha8 stream seeded with
/// `seed`; each following pick maximizes the distance to everything selected
/// so far, ties toward the lower index. Selected indices are excluded from
/// later picks, so the result always holds `min(count, n)` distinct indices
/// even when the input contains duplicate points. An empty input is an
/// error; `count = 0` yields an empty selection.
pub fn furthest_point_sample(points: &[[f64; 3]], count: usize, seed: u64) -> Result<FpsResult> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("furthest-point sampling input"));
    }
    if count == 0 {
        return Ok(FpsResult { indices: Vec::new(), count });
    }
    let take = count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (rng.next_u64() % n as u64) as usize;

    let mut selected = Vec::with_capacity(take);
    let mut taken = vec![false; n];
    let mut min_d2: Vec<f64> = points.iter().map(|&p| dist2(p, points[start])).collect();
    selected.push(start);
    taken[start] = true;

    while selected.len() < take {
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d2) in min_d2.iter().enumerate() {
            if !taken[i] && d2 > best_d2 {
                best = i;
                best_d2 = d2;
            }
        }
        selected.push(best);
        taken[best] = true;
        for (i, d2) in min_d2.iter_mut().enumerate() {
            let d = dist2(points[i], points[best]);
            if d < *d2 {
                *d2 = d;
            }
        }
    }
    Ok(FpsResult { indices: selected, count })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_empty_index_is_error() {
        let kd = KdIndex::from_points(&[]);
        assert!(matches!(kd.knn([0.0, 0.0, 0.0], 3), Err(Error::Empty(_))));
        assert!(matches!(kd.nearest([0.0, 0.0, 0.0]), Err(Error::Empty(_))));
        assert!(matches!(kd.nearest_distance([0.0, 0.0, 0.0]), Err(Error::Empty(_))));
    }

    #[test]
    fn knn_k_zero() {
        let kd = KdIndex::from_points(&[[1.0, 0.0, 0.0]]);
        assert!(kd.knn([0.0, 0.0, 0.0], 0).unwrap().is_empty());
    }

    #[test]
    fn knn_k_exceeds_len_returns_all_sorted() {
        let kd = KdIndex::from_points(&[[2.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let got = kd.knn([0.0, 0.0, 0.0], 10).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], Neighbor { index: 1, distance: 1.0 });
        assert_eq!(got[1], Neighbor { index: 0, distance: 2.0 });
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // Four points all at distance 1 from the origin.
        let pts = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
        ];
        let kd = KdIndex::from_points(&pts);
        let got = kd.knn([0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(got[0], Neighbor { index: 0, distance: 1.0 });
        assert_eq!(got[1], Neighbor { index: 1, distance: 1.0 });
    }

    #[test]
    fn knn_duplicate_points() {
        let pts = [[0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [3.0, 0.0, 0.0]];
        let kd = KdIndex::from_points(&pts);
        let got = kd.knn([0.5, 0.5, 0.5], 3).unwrap();
        assert_eq!(got[0], Neighbor { index: 0, distance: 0.0 });
        assert_eq!(got[1], Neighbor { index: 1, distance: 0.0 });
        assert_eq!(got[2].index, 2);
    }

    #[test]
    fn nearest_distance_pythagorean() {
        let kd = KdIndex::from_points(&[[0.0, 0.0, 0.0]]);
        assert_eq!(kd.nearest_distance([3.0, 4.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn fps_zero_count() {
        let got = furthest_point_sample(&[[0.0; 3]], 0, 7).unwrap();
        assert!(got.indices.is_empty());
        assert_eq!(got.count, 0);
    }

    #[test]
    fn fps_empty_input_is_error() {
        assert!(matches!(furthest_point_sample(&[], 2, 7), Err(Error::Empty(_))));
    }

    #[test]
    fn fps_count_exceeds_input_clamps() {
        let got = furthest_point_sample(&[[0.0; 3]], 5, 7).unwrap();
        assert_eq!(got.indices, vec![0]);
        assert_eq!(got.count, 5);
    }

    #[test]
    fn fps_full_count_is_permutation() {
        let pts: Vec<[f64; 3]> = (0..9).map(|i| [i as f64, 0.0, 0.0]).collect();
        let mut got = furthest_point_sample(&pts, 9, 42).unwrap().indices;
        got.sort_unstable();
        assert_eq!(got, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn fps_deterministic_per_seed() {
        let pts: Vec<[f64; 3]> = (0..40)
            .map(|i| [(i % 7) as f64, (i % 5) as f64 * 0.3, (i % 3) as f64 * 1.7])
            .collect();
        let a = furthest_point_sample(&pts, 12, 1).unwrap();
        let b = furthest_point_sample(&pts, 12, 1).unwrap();
        assert_eq!(a, b);
        let c = furthest_point_sample(&pts, 12, 2).unwrap();
        // Different seed moves the start point; the greedy tail usually
        // differs too, but only the first index is guaranteed random.
        assert_eq!(c.indices.len(), 12);
    }

    #[test]
    fn fps_duplicates_yield_distinct_indices() {
        let pts = vec![[1.0, 2.0, 3.0]; 5];
        let got = furthest_point_sample(&pts, 5, 0).unwrap().indices;
        let mut sorted = got.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
    }

    #[test]
    fn fps_line_picks_extremes_first() {
        // On a line 0..=10 the second pick must be whichever endpoint is
        // furthest from the random start.
        let pts: Vec<[f64; 3]> = (0..=10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let got = furthest_point_sample(&pts, 2, 123).unwrap().indices;
        let start = got[0] as f64;
        let second = got[1] as f64;
        let expected = if (10.0 - start) > start { 10.0 } else { 0.0 };
        assert_eq!(second, expected, "start {start}");
    }
}
