//! Motion and context terms: constant-velocity prediction, neighbourhood
//! motion from coherently moving neighbours, spatial-proximity similarity
//! and the spanning-tree group formation model.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{Point, Vec2};
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("motion covariance is not positive definite")]
    SingularCovariance,
    #[error("group model refreshed at frame {refreshed_at} is stale at frame {frame} (period {period})")]
    StaleGroups { refreshed_at: usize, frame: usize, period: usize },
    #[error("candidate lists cover {got} targets, group model expects {expected}")]
    TargetCountMismatch { expected: usize, got: usize },
}

/// Maximum number of coherent neighbours per target.
pub const MAX_NEIGHBORS: usize = 5;
/// Similarities are truncated beyond this many standard deviations.
pub const GAUSSIAN_CUTOFF_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Past positions, oldest first; the last entry is `position`.
    pub history: Vec<Vec2>,
    pub group: usize,
}

impl TargetState {
    pub fn new(id: usize, position: Vec2) -> Self {
        Self { id, position, velocity: Vec2::ZERO, history: vec![position], group: id }
    }

    /// Appends a position and refits the velocity over the last `window` positions.
    pub fn advance(&mut self, position: Vec2, window: usize) {
        self.position = position;
        self.history.push(position);
        self.velocity = estimate_velocity(&self.history, window);
    }
}

/// Least-squares slope of the last `window` positions against time.
pub fn estimate_velocity(history: &[Vec2], window: usize) -> Vec2 {
    let m = history.len().min(window.max(2));
    if m < 2 {
        return Vec2::ZERO;
    }
    let pts = &history[history.len() - m..];
    let tm = (m as f64 - 1.0) / 2.0;
    let mean = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / m as f64);
    let mut num = Vec2::ZERO;
    let mut den = 0.0;
    for (t, &p) in pts.iter().enumerate() {
        let dt = t as f64 - tm;
        num = num + (p - mean) * dt;
        den += dt * dt;
    }
    num * (1.0 / den)
}

/// Constant-velocity model `p' = p + v` with Gaussian uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub covariance: [[f64; 2]; 2],
}

impl MotionModel {
    /// `diag((target_size / 2)^2)`
    pub fn for_target_size(target_size: f64) -> Self {
        let v = (target_size / 2.0) * (target_size / 2.0);
        Self { covariance: [[v, 0.0], [0.0, v]] }
    }

    pub fn predict(&self, position: Vec2, velocity: Vec2) -> Vec2 {
        position + velocity
    }

    fn precision(&self) -> Result<[[f64; 2]; 2], MotionError> {
        let [[a, b], [c, d]] = self.covariance;
        let det = a * d - b * c;
        if !(a > 0.0 && det > 0.0) || libm::fabs(b - c) > 1e-12 || !det.is_finite() {
            return Err(MotionError::SingularCovariance);
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }

    /// `exp(-1/2 (q - mean)^T Sigma^-1 (q - mean))` per candidate.
    pub fn density(&self, mean: Vec2, candidates: &[Point]) -> Result<Vec<f64>, MotionError> {
        let p = self.precision()?;
        Ok(candidates
            .iter()
            .map(|c| {
                let d = c.to_vec2() - mean;
                let m2 = d.x * (p[0][0] * d.x + p[0][1] * d.y) + d.y * (p[1][0] * d.x + p[1][1] * d.y);
                libm::exp(-0.5 * m2)
            })
            .collect())
    }
}

/// Motion score of each candidate for a target predicted at `p + v`.
pub fn motion_cost(state: &TargetState, mm: &MotionModel, candidates: &[Point]) -> Result<Vec<f64>, MotionError> {
    mm.density(mm.predict(state.position, state.velocity), candidates)
}

/// Clusters targets whose recent motion is coherent.
///
/// Two targets are linked when the cosine similarity of their stacked
/// velocity series over the last `window` frames is at least
/// `min_cosine` and their mean distance over those frames is at most
/// `max_distance`. Connected components of the link graph are the groups
/// (single linkage). Labels are numbered by first member in input order.
/// Histories must end at the same frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams {
    pub window: usize,
    pub min_cosine: f64,
    pub max_distance: f64,
}

impl CoherenceParams {
    pub fn for_target_size(target_size: f64) -> Self {
        Self { window: 10, min_cosine: 0.9, max_distance: 4.0 * target_size }
    }
}

pub fn coherent_groups(histories: &[Vec<Vec2>], params: &CoherenceParams) -> Vec<usize> {
    let n = histories.len();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if coherent(&histories[a], &histories[b], params) {
                uf.union(a, b);
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut root_label = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        let r = uf.find(i);
        if root_label[r] == usize::MAX {
            root_label[r] = next;
            next += 1;
        }
        labels[i] = root_label[r];
    }
    labels
}

fn coherent(a: &[Vec2], b: &[Vec2], params: &CoherenceParams) -> bool {
    let steps = params.window.min(a.len().saturating_sub(1)).min(b.len().saturating_sub(1));
    if steps == 0 {
        return false;
    }
    let (pa, pb) = (&a[a.len() - steps - 1..], &b[b.len() - steps - 1..]);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for t in 1..=steps {
        let va = pa[t] - pa[t - 1];
        let vb = pb[t] - pb[t - 1];
        ab += va.dot(vb);
        aa += va.dot(va);
        bb += vb.dot(vb);
    }
    if aa < 1e-12 || bb < 1e-12 {
        return false;
    }
    let cosine = ab / libm::sqrt(aa * bb);
    let mean_dist = (0..=steps).map(|t| pa[t].dist(pb[t])).sum::<f64>() / (steps + 1) as f64;
    cosine >= params.min_cosine && mean_dist <= params.max_distance
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Returns `false` if already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub velocity: Vec2,
    pub distance: f64,
    pub weight: f64,
}

/// Up to [`MAX_NEIGHBORS`] coherent neighbours of one target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub neighbors: Vec<Neighbor>,
}

/// `w_j = exp(-d_j / u) / sum_k exp(-d_k / u)`
pub fn neighbor_weights(distances: &[f64], unit: f64) -> Vec<f64> {
    if distances.is_empty() {
        return Vec::new();
    }
    let dmin = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = distances.iter().map(|d| libm::exp(-(d - dmin) / unit)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / s).collect()
}

/// For each target, its nearest same-label neighbours (ties by id).
pub fn neighbor_sets(states: &[TargetState], labels: &[usize], unit: f64) -> Vec<NeighborSet> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut cands: Vec<(f64, usize)> = (0..states.len())
                .filter(|&j| j != i && labels[j] == labels[i])
                .map(|j| (s.position.dist(states[j].position), j))
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cands.truncate(MAX_NEIGHBORS);
            let d: Vec<f64> = cands.iter().map(|c| c.0).collect();
            let w = neighbor_weights(&d, unit);
            NeighborSet {
                neighbors: cands
                    .iter()
                    .zip(w)
                    .map(|(&(distance, j), weight)| Neighbor { id: states[j].id, velocity: states[j].velocity, distance, weight })
                    .collect(),
            }
        })
        .collect()
}

/// `sum_j w_j N(p_i + v_j, Sigma)` at each candidate; zero without neighbours.
pub fn neighborhood_motion_cost(
    target: &TargetState,
    neighbors: &NeighborSet,
    mm: &MotionModel,
    candidates: &[Point],
) -> Result<Vec<f64>, MotionError> {
    let mut out = vec![0.0; candidates.len()];
    for nb in &neighbors.neighbors {
        let d = mm.density(mm.predict(target.position, nb.velocity), candidates)?;
        for (o, v) in out.iter_mut().zip(d) {
            *o += nb.weight * v;
        }
    }
    Ok(out)
}

/// Buckets points on a square grid for radius queries.
struct SpatialGrid {
    origin: (i64, i64),
    cell: f64,
    cols: usize,
    rows: usize,
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl SpatialGrid {
    fn new(points: &[Point], cell: f64) -> Self {
        let cell = cell.max(1.0);
        let minx = points.iter().map(|p| p.x as i64).min().unwrap_or(0);
        let miny = points.iter().map(|p| p.y as i64).min().unwrap_or(0);
        let maxx = points.iter().map(|p| p.x as i64).max().unwrap_or(0);
        let maxy = points.iter().map(|p| p.y as i64).max().unwrap_or(0);
        let cols = ((maxx - minx) as f64 / cell) as usize + 1;
        let rows = ((maxy - miny) as f64 / cell) as usize + 1;
        let mut grid = Self { origin: (minx, miny), cell, cols, rows, starts: vec![0; cols * rows + 1], items: vec![0; points.len()] };
        let cells: Vec<usize> = points.iter().map(|&p| grid.cell_of(p)).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for i in 0..cols * rows {
            grid.starts[i + 1] += grid.starts[i];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c]] = i;
            fill[c] += 1;
        }
        grid
    }

    fn coords(&self, p: Point) -> (usize, usize) {
        let cx = ((p.x as i64 - self.origin.0) as f64 / self.cell) as usize;
        let cy = ((p.y as i64 - self.origin.1) as f64 / self.cell) as usize;
        (cx.min(self.cols - 1), cy.min(self.rows - 1))
    }

    fn cell_of(&self, p: Point) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.cols + cx
    }

    /// Indices in the 3x3 block of cells around `p` (a superset of the
    /// points within one cell width).
    fn near(&self, p: Point, mut f: impl FnMut(usize)) {
        let (cx, cy) = self.coords(p);
        for y in cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1) {
                let c = y * self.cols + x;
                for &i in &self.items[self.starts[c]..self.starts[c + 1]] {
                    f(i);
                }
            }
        }
    }
}

/// `S_ij = exp(-|p_i - p_j|^2 / (2 sigma^2))` between candidates of
/// different blocks within `3 sigma`; zero elsewhere.
pub fn proximity_similarity(candidates: &[Point], blocks: &[usize], sigma: f64) -> SparseSymMatrix {
    assert_eq!(candidates.len(), blocks.len());
    let cutoff = GAUSSIAN_CUTOFF_SIGMAS * sigma;
    let cutoff2 = cutoff * cutoff;
    let grid = SpatialGrid::new(candidates, cutoff);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let rows = (0..candidates.len()).map(|i| {
        let mut row = Vec::new();
        grid.near(candidates[i], |j| {
            if blocks[j] != blocks[i] {
                let d2 = candidates[i].dist2(candidates[j]);
                if d2 <= cutoff2 {
                    row.push((j as u32, libm::exp(-d2 * inv)));
                }
            }
        });
        row
    });
    SparseSymMatrix::from_rows(candidates.len(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
}

/// Minimum spanning tree of the complete Euclidean graph on the members.
/// Equal-length edges are taken in `(min id, max id)` order.
pub fn build_group_mst(ids: &[usize], positions: &[Vec2]) -> Vec<TreeEdge> {
    assert_eq!(ids.len(), positions.len());
    let m = ids.len();
    let mut edges = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let (lo, hi) = if ids[i] < ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
            edges.push((positions[i].dist(positions[j]), lo, hi, i, j));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut uf = UnionFind::new(m);
    let mut tree = Vec::with_capacity(m.saturating_sub(1));
    for (d, lo, hi, i, j) in edges {
        if uf.union(i, j) {
            tree.push(TreeEdge { a: lo, b: hi, rest_length: d.max(1e-6) });
            if tree.len() + 1 == m {
                break;
            }
        }
    }
    tree
}

/// Groups with their spanning trees; target ids are block indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    pub groups: Vec<Vec<usize>>,
    pub trees: Vec<Vec<TreeEdge>>,
    pub refreshed_at: usize,
    pub refresh_period: usize,
    pub n_targets: usize,
}

impl GroupModel {
    /// No groups yet: every target on its own.
    pub fn singletons(n_targets: usize, frame: usize, refresh_period: usize) -> Self {
        Self {
            groups: (0..n_targets).map(|i| vec![i]).collect(),
            trees: vec![Vec::new(); n_targets],
            refreshed_at: frame,
            refresh_period,
            n_targets,
        }
    }

    /// Builds groups from labels and fits one spanning tree per group at the
    /// given positions.
    pub fn from_labels(labels: &[usize], positions: &[Vec2], frame: usize, refresh_period: usize) -> Self {
        let n_groups = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); n_groups];
        for (i, &g) in labels.iter().enumerate() {
            groups[g].push(i);
        }
        let trees = groups
            .iter()
            .map(|members| {
                let pos: Vec<Vec2> = members.iter().map(|&i| positions[i]).collect();
                build_group_mst(members, &pos)
            })
            .collect();
        Self { groups, trees, refreshed_at: frame, refresh_period, n_targets: labels.len() }
    }

    pub fn is_stale(&self, frame: usize) -> bool {
        frame.saturating_sub(self.refreshed_at) > self.refresh_period
    }

    pub fn edges(&self) -> impl Iterator<Item = &TreeEdge> {
        self.trees.iter().flatten()
    }
}

/// Formation similarity: for each tree edge `(a, b)` with rest length `e`
/// and candidates `i` of `a`, `j` of `b`,
/// `Gamma_ij = exp(-(|p_i - p_j| - e)^2 / (2 sigma^2))`, truncated beyond
/// `3 sigma` of deviation.
pub fn group_similarity(
    candidates: &[Vec<Point>],
    g: &GroupModel,
    sigma: f64,
    frame: usize,
) -> Result<SparseSymMatrix, MotionError> {
    if g.is_stale(frame) {
        return Err(MotionError::StaleGroups { refreshed_at: g.refreshed_at, frame, period: g.refresh_period });
    }
    if candidates.len() != g.n_targets {
        return Err(MotionError::TargetCountMismatch { expected: g.n_targets, got: candidates.len() });
    }
    let mut offsets = Vec::with_capacity(candidates.len() + 1);
    offsets.push(0usize);
    for c in candidates {
        offsets.push(offsets.last().unwrap() + c.len());
    }
    let l = *offsets.last().unwrap();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); l];
    let cutoff = GAUSSIAN_CUTOFF_SIGMAS * sigma;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for e in g.edges() {
        for (i, pi) in candidates[e.a].iter().enumerate() {
            for (j, pj) in candidates[e.b].iter().enumerate() {
                let dev = pi.dist(*pj) - e.rest_length;
                if libm::fabs(dev) <= cutoff {
                    let v = libm::exp(-dev * dev * inv);
                    let (gi, gj) = (offsets[e.a] + i, offsets[e.b] + j);
                    rows[gi].push((gj as u32, v));
                    rows[gj].push((gi as u32, v));
                }
            }
        }
    }
    Ok(SparseSymMatrix::from_rows(l, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(p: (f64, f64), v: (f64, f64)) -> TargetState {
        let mut s = TargetState::new(0, Vec2::new(p.0, p.1));
        s.velocity = Vec2::new(v.0, v.1);
        s
    }

    #[test]
    fn motion_peaks_at_prediction() {
        let mm = MotionModel::for_target_size(4.0);
        let s = state((10.0, 10.0), (2.0, -1.0));
        let c = [Point::new(10, 10), Point::new(12, 9), Point::new(14, 9)];
        let v = motion_cost(&s, &mm, &c).unwrap();
        assert_eq!(v[1], 1.0);
        // sigma = 2 px, candidate 2 px away on one axis: Mahalanobis distance 1
        assert!((v[2] - libm::exp(-0.5)).abs() < 1e-15);
        let still = state((10.0, 10.0), (0.0, 0.0));
        assert_eq!(motion_cost(&still, &mm, &c).unwrap()[0], 1.0);
        let bad = MotionModel { covariance: [[1.0, 1.0], [1.0, 1.0]] };
        assert_eq!(motion_cost(&s, &bad, &c), Err(MotionError::SingularCovariance));
    }

    #[test]
    fn velocity_fit_recovers_constant_velocity() {
        let h: Vec<Vec2> = (0..8).map(|t| Vec2::new(1.0 + 1.5 * t as f64, 4.0 - 0.5 * t as f64)).collect();
        let v = estimate_velocity(&h, 5);
        assert!((v.x - 1.5).abs() < 1e-12 && (v.y + 0.5).abs() < 1e-12);
        assert_eq!(estimate_velocity(&h[..1], 5), Vec2::ZERO);
    }

    #[test]
    fn coherent_pairs() {
        let params = CoherenceParams::for_target_size(5.0);
        let walk = |x0: f64, vx: f64| -> Vec<Vec2> { (0..11).map(|t| Vec2::new(x0 + vx * t as f64, 0.0)).collect() };
        assert_eq!(coherent_groups(&[walk(0.0, 1.0), walk(6.0, 1.0)], &params), vec![0, 0]);
        assert_eq!(coherent_groups(&[walk(0.0, 1.0), walk(6.0, -1.0)], &params), vec![0, 1]);
        // far apart but parallel: separate
        assert_eq!(coherent_groups(&[walk(0.0, 1.0), walk(100.0, 1.0)], &params), vec![0, 1]);
        // too short to judge
        assert_eq!(coherent_groups(&[vec![Vec2::ZERO], walk(1.0, 1.0)], &params), vec![0, 1]);
    }

    #[test]
    fn neighbour_weights() {
        let w = neighbor_weights(&[3.0, 3.0], 5.0);
        assert_eq!(w, vec![0.5, 0.5]);
        let w = neighbor_weights(&[2.0, 4.0], 5.0);
        assert!((w[0] / w[1] - libm::exp(2.0 / 5.0)).abs() < 1e-12);
        assert!(neighbor_weights(&[], 1.0).is_empty());
    }

    #[test]
    fn single_same_velocity_neighbour_matches_motion() {
        let mm = MotionModel::for_target_size(6.0);
        let s = state((5.0, 5.0), (1.0, 1.0));
        let nb = NeighborSet { neighbors: vec![Neighbor { id: 1, velocity: Vec2::new(1.0, 1.0), distance: 4.0, weight: 1.0 }] };
        let c = [Point::new(5, 5), Point::new(6, 6), Point::new(8, 4)];
        assert_eq!(neighborhood_motion_cost(&s, &nb, &mm, &c).unwrap(), motion_cost(&s, &mm, &c).unwrap());
        assert_eq!(neighborhood_motion_cost(&s, &NeighborSet::default(), &mm, &c).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn proximity_entries() {
        let pts = [Point::new(0, 0), Point::new(0, 0), Point::new(4, 0), Point::new(30, 0)];
        let blocks = [0, 1, 1, 0];
        let s = proximity_similarity(&pts, &blocks, 2.0);
        assert_eq!(s.get(0, 1), 1.0);
        assert!((s.get(0, 2) - libm::exp(-2.0)).abs() < 1e-15);
        assert_eq!(s.get(1, 2), 0.0);
        assert_eq!(s.get(0, 3), 0.0);
        assert_eq!(s.get(0, 0), 0.0);
        assert!(s.is_symmetric(0.0));
    }

    #[test]
    fn mst_small_cases() {
        let t = build_group_mst(&[3, 7], &[Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0)]);
        assert_eq!(t, vec![TreeEdge { a: 3, b: 7, rest_length: 5.0 }]);
        let t = build_group_mst(&[0, 1, 2], &[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)]);
        assert_eq!(t.len(), 2);
        assert_eq!(t.iter().map(|e| e.rest_length).sum::<f64>(), 3.0);
        assert!(t.iter().all(|e| e.b == 1 || e.a == 1));
        assert!(build_group_mst(&[4], &[Vec2::ZERO]).is_empty());
    }

    #[test]
    fn group_similarity_kernel() {
        let g = GroupModel {
            groups: vec![vec![0, 1], vec![2]],
            trees: vec![vec![TreeEdge { a: 0, b: 1, rest_length: 10.0 }], vec![]],
            refreshed_at: 0,
            refresh_period: 10,
            n_targets: 3,
        };
        let cands = vec![vec![Point::new(0, 0)], vec![Point::new(10, 0), Point::new(14, 0)], vec![Point::new(10, 0)]];
        let s = group_similarity(&cands, &g, 2.0, 5).unwrap();
        assert_eq!(s.get(0, 1), 1.0);
        assert!((s.get(0, 2) - libm::exp(-2.0)).abs() < 1e-15);
        assert_eq!(s.get(0, 3), 0.0);
        assert!(s.is_symmetric(0.0));
        assert!(matches!(group_similarity(&cands, &g, 2.0, 11), Err(MotionError::StaleGroups { .. })));
    }
}
