//! Block-simplex binary quadratic programs.
//!
//! The variable vector stacks one block per target; block `j` holds one
//! indicator per candidate location. Feasible fractional points put a
//! probability distribution on every block, binary ones pick exactly one
//! candidate per block. The objective is
//!
//! ```text
//! f(x) = (c_a + zeta c_m + eta c_nm)^T x + x^T (sum of quadratic terms) x
//! ```

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Point;
use crate::sparse::SparseSymMatrix;

/// Entries of the assembled quadratic matrix smaller than this are dropped.
pub const QUAD_DROP_TOLERANCE: f64 = 1e-6;
/// Tolerance used for per-block simplex sums.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("{name} has length {got}, expected {expected}")]
    DimensionMismatch { name: &'static str, expected: usize, got: usize },
    #[error("block {block} is empty")]
    EmptyBlock { block: usize },
    #[error("weight {name} = {value} must be finite and non-negative")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("similarity matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("similarity entry ({row}, {col}) = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("similarity entry ({row}, {col}) lies on the diagonal or inside one block")]
    WithinBlockEntry { row: usize, col: usize },
    #[error("quadratic term has non-finite entries")]
    NonFinite,
    #[error("{0}")]
    Other(String),
}

/// Partition of the `l` variables into per-target blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(block_sizes: Vec<usize>) -> Result<Self, QpError> {
        if let Some(block) = block_sizes.iter().position(|&k| k == 0) {
            return Err(QpError::EmptyBlock { block });
        }
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &k in &block_sizes {
            acc += k;
            offsets.push(acc);
        }
        Ok(Self { sizes: block_sizes, offsets })
    }

    /// `n` blocks of `k` candidates each.
    pub fn uniform(n: usize, k: usize) -> Result<Self, QpError> {
        Self::new(vec![k; n])
    }

    /// Number of targets.
    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of variables.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn block_size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    pub fn range(&self, j: usize) -> core::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn global(&self, block: usize, local: usize) -> usize {
        debug_assert!(local < self.sizes[block]);
        self.offsets[block] + local
    }

    /// `(block, local)` for a global index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        assert!(global < self.len(), "index {global} outside layout of {}", self.len());
        let block = self.offsets.partition_point(|&o| o <= global) - 1;
        (block, global - self.offsets[block])
    }

    pub fn block_of(&self, global: usize) -> usize {
        self.locate(global).0
    }

    /// Product of block sizes, saturating.
    pub fn vertex_count(&self) -> u128 {
        self.sizes.iter().fold(1u128, |acc, &k| acc.saturating_mul(k as u128))
    }

    /// The simplex-centre point, `1 / k_j` on every block.
    pub fn uniform_point(&self) -> FractionalSolution {
        let mut x = vec![0.0; self.len()];
        for j in 0..self.n_blocks() {
            let w = 1.0 / self.sizes[j] as f64;
            x[self.range(j)].iter_mut().for_each(|v| *v = w);
        }
        FractionalSolution { x }
    }
}

/// The three linear cost vectors and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCosts {
    pub appearance: Vec<f64>,
    pub motion: Vec<f64>,
    pub neighborhood: Vec<f64>,
    pub zeta: f64,
    pub eta: f64,
}

impl LinearCosts {
    /// Appearance-only costs with zero motion vectors.
    pub fn appearance_only(appearance: Vec<f64>) -> Self {
        let l = appearance.len();
        Self { appearance, motion: vec![0.0; l], neighborhood: vec![0.0; l], zeta: 0.0, eta: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    Proximity,
    Grouping,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTerm {
    pub matrix: SparseSymMatrix,
    pub kind: QuadKind,
}

/// How a similarity matrix becomes a quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianMode {
    /// `I - D^-1/2 S D^-1/2`: co-selecting similar pairs lowers the cost.
    Attract,
    /// `I + D^-1/2 S D^-1/2`: co-selecting similar pairs raises the cost.
    Repel,
    /// Symmetric part of `I - D^-1/2 S D^1/2`, kept for comparison runs.
    /// Not guaranteed to be positive semi-definite.
    Printed,
}

/// Turns a cross-block similarity matrix into a quadratic term.
///
/// Zero-degree rows stay zero in the normalised matrix, so their diagonal
/// entry is exactly 1.
pub fn laplacianize(
    s: &SparseSymMatrix,
    mode: LaplacianMode,
    layout: &BlockLayout,
) -> Result<QuadraticTerm, QpError> {
    if s.dim() != layout.len() {
        return Err(QpError::DimensionMismatch { name: "similarity", expected: layout.len(), got: s.dim() });
    }
    for (i, j, v) in s.iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(QpError::EntryOutOfRange { row: i, col: j, value: v });
        }
        if v != 0.0 && (i == j || layout.block_of(i) == layout.block_of(j)) {
            return Err(QpError::WithinBlockEntry { row: i, col: j });
        }
        if libm::fabs(s.get(j, i) - v) > 1e-12 {
            return Err(QpError::Asymmetric { row: i, col: j });
        }
    }
    let degree = s.row_sums();
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| if d > 0.0 { 1.0 / libm::sqrt(d) } else { 0.0 }).collect();
    let rows = (0..s.dim()).map(|i| {
        let (cols, vals) = s.row(i);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(cols.len() + 1);
        row.push((i as u32, 1.0));
        for (&c, &v) in cols.iter().zip(vals) {
            let j = c as usize;
            let entry = match mode {
                LaplacianMode::Attract => -v * inv_sqrt[i] * inv_sqrt[j],
                LaplacianMode::Repel => v * inv_sqrt[i] * inv_sqrt[j],
                LaplacianMode::Printed => {
                    let (di, dj) = (degree[i], degree[j]);
                    -0.5 * v * (libm::sqrt(dj / di) + libm::sqrt(di / dj))
                }
            };
            row.push((c, entry));
        }
        row
    });
    let matrix = SparseSymMatrix::from_rows(s.dim(), rows);
    let kind = match mode {
        LaplacianMode::Repel => QuadKind::Proximity,
        _ => QuadKind::Grouping,
    };
    Ok(QuadraticTerm { matrix, kind })
}

/// Min-max normalises each block of raw scores to `[0, 1]` and negates, so
/// the best-scoring candidate of every block costs `-1`. Constant blocks
/// map to zero.
pub fn scores_to_costs(layout: &BlockLayout, scores: &[f64]) -> Vec<f64> {
    let mut out = normalize_scores(layout, scores);
    out.iter_mut().for_each(|v| *v = -*v);
    out
}

/// Per-block min-max normalisation to `[0, 1]`.
pub fn normalize_scores(layout: &BlockLayout, scores: &[f64]) -> Vec<f64> {
    assert_eq!(scores.len(), layout.len());
    let mut out = vec![0.0; scores.len()];
    for j in 0..layout.n_blocks() {
        let r = layout.range(j);
        let block = &scores[r.clone()];
        let lo = block.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span > 1e-12 {
            for (o, &s) in out[r].iter_mut().zip(block) {
                *o = (s - lo) / span;
            }
        }
    }
    out
}

/// A fully assembled per-frame problem.
#[derive(Debug, Clone)]
pub struct BqpProblem {
    layout: BlockLayout,
    lin: LinearCosts,
    quads: Vec<QuadraticTerm>,
    cost: Vec<f64>,
    q: SparseSymMatrix,
    pixels: Option<Vec<Point>>,
}

pub fn build_problem(layout: BlockLayout, lin: LinearCosts, quads: Vec<QuadraticTerm>) -> Result<BqpProblem, QpError> {
    let l = layout.len();
    for (name, v) in [("c_a", &lin.appearance), ("c_m", &lin.motion), ("c_nm", &lin.neighborhood)] {
        if v.len() != l {
            return Err(QpError::DimensionMismatch { name, expected: l, got: v.len() });
        }
    }
    for (name, w) in [("zeta", lin.zeta), ("eta", lin.eta)] {
        if !(w.is_finite() && w >= 0.0) {
            return Err(QpError::InvalidWeight { name, value: w });
        }
    }
    let mut q = SparseSymMatrix::zeros(l);
    for term in &quads {
        if term.matrix.dim() != l {
            return Err(QpError::DimensionMismatch { name: "quadratic term", expected: l, got: term.matrix.dim() });
        }
        if !term.matrix.is_finite() {
            return Err(QpError::NonFinite);
        }
        q = q.add(&term.matrix);
    }
    let q = q.prune(QUAD_DROP_TOLERANCE);
    let cost = (0..l)
        .map(|i| lin.appearance[i] + lin.zeta * lin.motion[i] + lin.eta * lin.neighborhood[i])
        .collect();
    Ok(BqpProblem { layout, lin, quads, cost, q, pixels: None })
}

impl BqpProblem {
    /// Attaches the pixel of every candidate, used by the exhaustive solver
    /// to forbid two targets on one pixel.
    pub fn with_pixels(mut self, pixels: Vec<Point>) -> Result<Self, QpError> {
        if pixels.len() != self.layout.len() {
            return Err(QpError::DimensionMismatch { name: "pixels", expected: self.layout.len(), got: pixels.len() });
        }
        self.pixels = Some(pixels);
        Ok(self)
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn linear_costs(&self) -> &LinearCosts {
        &self.lin
    }

    pub fn quadratic_terms(&self) -> &[QuadraticTerm] {
        &self.quads
    }

    /// Combined linear cost `c_a + zeta c_m + eta c_nm`.
    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Sum of all quadratic terms (small entries dropped).
    pub fn quad(&self) -> &SparseSymMatrix {
        &self.q
    }

    pub fn pixels(&self) -> Option<&[Point]> {
        self.pixels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    fn check_len(&self, x: &[f64]) -> Result<(), QpError> {
        if x.len() != self.len() {
            return Err(QpError::DimensionMismatch { name: "x", expected: self.len(), got: x.len() });
        }
        Ok(())
    }

    /// `c^T x + x^T Q x`
    pub fn objective(&self, x: &[f64]) -> Result<f64, QpError> {
        self.check_len(x)?;
        Ok(crate::linalg::dot(&self.cost, x) + self.q.quad_form(x))
    }

    /// `c + 2 Q x`
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, QpError> {
        self.check_len(x)?;
        let mut g = self.q.mul_vec(x);
        for (gi, ci) in g.iter_mut().zip(&self.cost) {
            *gi = ci + 2.0 * *gi;
        }
        Ok(g)
    }

    /// Objective of a binary point.
    pub fn assignment_objective(&self, a: &Assignment) -> f64 {
        let idx = a.global_indices(&self.layout);
        let mut f: f64 = idx.iter().map(|&i| self.cost[i]).sum();
        for &i in &idx {
            let (cols, vals) = self.q.row(i);
            for &j in &idx {
                if let Ok(k) = cols.binary_search(&(j as u32)) {
                    f += vals[k];
                }
            }
        }
        f
    }
}

/// `true` iff `x >= 0`, each block sums to one, and (when `binary`) every
/// entry is 0 or 1.
pub fn is_feasible(layout: &BlockLayout, x: &[f64], binary: bool) -> bool {
    if x.len() != layout.len() {
        return false;
    }
    if x.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return false;
    }
    if binary && x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return false;
    }
    (0..layout.n_blocks()).all(|j| {
        let s: f64 = x[layout.range(j)].iter().sum();
        libm::fabs(s - 1.0) <= FEASIBILITY_TOLERANCE
    })
}

/// A point of the relaxed feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
}

impl FractionalSolution {
    pub fn new(layout: &BlockLayout, x: Vec<f64>) -> Result<Self, QpError> {
        if !is_feasible(layout, &x, false) {
            return Err(QpError::Other(String::from("point is not in the product of simplices")));
        }
        Ok(Self { x })
    }
}

/// One chosen candidate per block (local indices).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment {
    pub chosen: Vec<u32>,
}

impl Assignment {
    pub fn new(chosen: Vec<u32>) -> Self {
        Self { chosen }
    }

    pub fn is_valid(&self, layout: &BlockLayout) -> bool {
        self.chosen.len() == layout.n_blocks()
            && self.chosen.iter().enumerate().all(|(j, &c)| (c as usize) < layout.block_size(j))
    }

    pub fn global_indices(&self, layout: &BlockLayout) -> Vec<usize> {
        self.chosen.iter().enumerate().map(|(j, &c)| layout.global(j, c as usize)).collect()
    }

    /// Dense 0/1 vector.
    pub fn to_dense(&self, layout: &BlockLayout) -> Vec<f64> {
        let mut x = vec![0.0; layout.len()];
        for i in self.global_indices(layout) {
            x[i] = 1.0;
        }
        x
    }

    /// `<self, v>` for a vertex, i.e. sum of the selected entries.
    pub fn dot(&self, layout: &BlockLayout, v: &[f64]) -> f64 {
        self.chosen.iter().enumerate().map(|(j, &c)| v[layout.global(j, c as usize)]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    extern crate std;

    fn lin(ca: Vec<f64>, cm: Vec<f64>, cnm: Vec<f64>, zeta: f64, eta: f64) -> LinearCosts {
        LinearCosts { appearance: ca, motion: cm, neighborhood: cnm, zeta, eta }
    }

    #[test]
    fn layout_maps_indices_both_ways() {
        let layout = BlockLayout::new(vec![2, 3, 1]).unwrap();
        assert_eq!(layout.len(), 6);
        assert_eq!(layout.locate(0), (0, 0));
        assert_eq!(layout.locate(2), (1, 0));
        assert_eq!(layout.locate(4), (1, 2));
        assert_eq!(layout.locate(5), (2, 0));
        assert_eq!(layout.global(1, 2), 4);
        assert_eq!(BlockLayout::new(vec![2, 0]), Err(QpError::EmptyBlock { block: 1 }));
    }

    #[test]
    fn single_term_passes_through() {
        let layout = BlockLayout::uniform(1, 2).unwrap();
        let p = build_problem(layout, LinearCosts::appearance_only(vec![0.0, 1.0]), vec![]).unwrap();
        assert_eq!(p.cost(), &[0.0, 1.0]);
    }

    #[test]
    fn weights_combine_linear_terms() {
        let layout = BlockLayout::uniform(2, 2).unwrap();
        let ones = vec![1.0; 4];
        let p = build_problem(layout, lin(ones.clone(), ones.clone(), ones, 0.3, 0.2), vec![]).unwrap();
        for &c in p.cost() {
            assert!((c - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_motion_vector_is_named() {
        let layout = BlockLayout::uniform(1, 2).unwrap();
        let err = build_problem(layout, lin(vec![0.0; 2], vec![0.0; 3], vec![0.0; 2], 0.3, 0.2), vec![]).unwrap_err();
        assert_eq!(err, QpError::DimensionMismatch { name: "c_m", expected: 2, got: 3 });
        assert!(std::format!("{err}").contains("c_m"));
    }

    #[test]
    fn objective_and_gradient_small_cases() {
        let layout = BlockLayout::uniform(1, 2).unwrap();
        let p = build_problem(layout.clone(), LinearCosts::appearance_only(vec![1.0, 2.0]), vec![]).unwrap();
        assert_eq!(p.objective(&[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(p.gradient(&[0.3, 0.7]).unwrap(), vec![1.0, 2.0]);

        let eye = QuadraticTerm { matrix: SparseSymMatrix::identity(2), kind: QuadKind::Other };
        let p = build_problem(layout, LinearCosts::appearance_only(vec![0.0, 0.0]), vec![eye]).unwrap();
        assert_eq!(p.objective(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(p.gradient(&[0.5, 0.5]).unwrap(), vec![1.0, 1.0]);
        assert!(p.objective(&[1.0]).is_err());
    }

    #[test]
    fn laplacian_two_by_two() {
        let layout = BlockLayout::uniform(2, 1).unwrap();
        let s = SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        let a = laplacianize(&s, LaplacianMode::Attract, &layout).unwrap();
        assert_eq!(a.matrix.to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let r = laplacianize(&s, LaplacianMode::Repel, &layout).unwrap();
        assert_eq!(r.matrix.to_dense(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(r.kind, QuadKind::Proximity);
    }

    #[test]
    fn laplacian_of_zero_is_identity() {
        let layout = BlockLayout::uniform(3, 1).unwrap();
        let s = SparseSymMatrix::zeros(3);
        for mode in [LaplacianMode::Attract, LaplacianMode::Repel] {
            let t = laplacianize(&s, mode, &layout).unwrap();
            assert_eq!(t.matrix, SparseSymMatrix::identity(3));
        }
    }

    #[test]
    fn laplacian_rejects_bad_similarities() {
        let layout = BlockLayout::uniform(2, 1).unwrap();
        let asym = SparseSymMatrix::from_triplets(2, &[(0, 1, 0.5), (1, 0, 0.4)]);
        assert!(matches!(laplacianize(&asym, LaplacianMode::Repel, &layout), Err(QpError::Asymmetric { .. })));
        let neg = SparseSymMatrix::from_triplets(2, &[(0, 1, -0.5), (1, 0, -0.5)]);
        assert!(matches!(laplacianize(&neg, LaplacianMode::Repel, &layout), Err(QpError::EntryOutOfRange { .. })));
        let one_block = BlockLayout::uniform(1, 2).unwrap();
        let within = SparseSymMatrix::from_triplets(2, &[(0, 1, 0.5), (1, 0, 0.5)]);
        assert!(matches!(
            laplacianize(&within, LaplacianMode::Repel, &one_block),
            Err(QpError::WithinBlockEntry { .. })
        ));
    }

    #[test]
    fn feasibility_checks() {
        let layout = BlockLayout::new(vec![2, 3]).unwrap();
        assert!(is_feasible(&layout, &[0.0, 1.0, 0.0, 0.0, 1.0], true));
        let u = layout.uniform_point();
        assert!(is_feasible(&layout, &u.x, false));
        assert!(!is_feasible(&layout, &u.x, true));
        assert!(!is_feasible(&layout, &[0.9, 0.0, 0.0, 0.0, 1.0], false));
        assert!(!is_feasible(&layout, &[1.5, -0.5, 0.0, 0.0, 1.0], false));
    }

    #[test]
    fn normalisation_negates_and_handles_constant_blocks() {
        let layout = BlockLayout::new(vec![3, 2]).unwrap();
        let c = scores_to_costs(&layout, &[1.0, 3.0, 2.0, 5.0, 5.0]);
        assert_eq!(c, vec![-0.0, -1.0, -0.5, 0.0, 0.0]);
    }
}
