//! Candidate locations: dense sampling around a target and extrema-based
//! pruning.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("half extent must be at least 1, got {0}")]
    InvalidExtent(i32),
    #[error("search region around ({x}, {y}) lies outside the frame")]
    EmptyRegion { x: i32, y: i32 },
    #[error("prune config needs at least one extremum")]
    InvalidExtremaCount,
    #[error("{points} candidates but {scores} scores")]
    ScoreMismatch { points: usize, scores: usize },
}

/// Square window `center +- half_extent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchRegion {
    pub center: Point,
    pub half_extent: i32,
}

impl SearchRegion {
    /// Twice the target size on each side: `half_extent = target_size`.
    pub fn for_target(center: Point, target_size: i32) -> Self {
        Self { center, half_extent: target_size.max(1) }
    }
}

/// Grid points of the region inside a `width x height` frame, row-major.
pub fn dense_candidates(region: &SearchRegion, stride: i32, width: usize, height: usize) -> Result<Vec<Point>, SamplerError> {
    if stride < 1 {
        return Err(SamplerError::InvalidStride);
    }
    if region.half_extent < 1 {
        return Err(SamplerError::InvalidExtent(region.half_extent));
    }
    let h = region.half_extent;
    let c = region.center;
    let mut out = Vec::with_capacity(((2 * h / stride + 1) * (2 * h / stride + 1)) as usize);
    let mut dy = -h;
    while dy <= h {
        let y = c.y + dy;
        let mut dx = -h;
        while dx <= h {
            let x = c.x + dx;
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                out.push(Point::new(x, y));
            }
            dx += stride;
        }
        dy += stride;
    }
    if out.is_empty() {
        return Err(SamplerError::EmptyRegion { x: c.x, y: c.y });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneConfig {
    /// Number of local maxima kept.
    pub m: usize,
    /// Extra samples around each kept maximum (at most [`NEIGHBORHOOD_PATTERN`]'s length).
    pub extra_per_extremum: usize,
    /// Side of the square neighbourhood the extra samples come from.
    pub neighborhood: i32,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { m: 3, extra_per_extremum: 10, neighborhood: 6 }
    }
}

/// Fixed sampling pattern inside the 6x6 neighbourhood of an extremum:
/// the stride-2 ring plus the two horizontal neighbours.
pub const NEIGHBORHOOD_PATTERN: [(i32, i32); 10] =
    [(-2, -2), (0, -2), (2, -2), (-2, 0), (2, 0), (-2, 2), (0, 2), (2, 2), (-1, 0), (1, 0)];

/// Keeps the top-`m` local maxima of `scores` over the dense grid plus a
/// fixed pattern of samples around each. Extrema come first in the output,
/// ordered by score (ties by row-major position), then the extra samples;
/// duplicates and out-of-frame points are dropped.
pub fn prune_candidates(
    dense: &[Point],
    scores: &[f64],
    cfg: &PruneConfig,
    width: usize,
    height: usize,
) -> Result<Vec<Point>, SamplerError> {
    if cfg.m == 0 {
        return Err(SamplerError::InvalidExtremaCount);
    }
    if dense.len() != scores.len() {
        return Err(SamplerError::ScoreMismatch { points: dense.len(), scores: scores.len() });
    }
    if dense.is_empty() {
        return Ok(Vec::new());
    }
    let grid = Grid::new(dense);
    let mut maxima: Vec<usize> = (0..dense.len())
        .filter(|&i| {
            let (gx, gy) = grid.cell(dense[i]);
            let mut ok = true;
            for oy in -1..=1i64 {
                for ox in -1..=1i64 {
                    if (ox, oy) != (0, 0) {
                        if let Some(j) = grid.at(gx + ox, gy + oy) {
                            ok &= scores[i] >= scores[j];
                        }
                    }
                }
            }
            ok
        })
        .collect();
    maxima.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(grid.rank(dense[a]).cmp(&grid.rank(dense[b]))));
    maxima.truncate(cfg.m);

    let mut out: Vec<Point> = maxima.iter().map(|&i| dense[i]).collect();
    let half = cfg.neighborhood / 2;
    let pattern = NEIGHBORHOOD_PATTERN.iter().filter(|(dx, dy)| dx.abs() <= half && dy.abs() <= half).take(cfg.extra_per_extremum);
    let pattern: Vec<(i32, i32)> = pattern.copied().collect();
    for &i in &maxima {
        for &(dx, dy) in &pattern {
            let p = Point::new(dense[i].x + dx, dense[i].y + dy);
            if p.x >= 0 && p.y >= 0 && (p.x as usize) < width && (p.y as usize) < height && !out.contains(&p) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Index of dense grid points by grid cell.
struct Grid {
    min: (i64, i64),
    stride: i64,
    cols: i64,
    rows: i64,
    cells: Vec<Option<usize>>,
}

impl Grid {
    fn new(points: &[Point]) -> Self {
        let minx = points.iter().map(|p| p.x as i64).min().unwrap();
        let miny = points.iter().map(|p| p.y as i64).min().unwrap();
        let maxx = points.iter().map(|p| p.x as i64).max().unwrap();
        let maxy = points.iter().map(|p| p.y as i64).max().unwrap();
        let stride = points
            .iter()
            .flat_map(|p| [p.x as i64 - minx, p.y as i64 - miny])
            .filter(|&d| d > 0)
            .fold(0, gcd)
            .max(1);
        let cols = (maxx - minx) / stride + 1;
        let rows = (maxy - miny) / stride + 1;
        let mut g = Self { min: (minx, miny), stride, cols, rows, cells: vec![None; (cols * rows) as usize] };
        for (i, &p) in points.iter().enumerate() {
            let (cx, cy) = g.cell(p);
            g.cells[(cy * cols + cx) as usize] = Some(i);
        }
        g
    }

    fn cell(&self, p: Point) -> (i64, i64) {
        ((p.x as i64 - self.min.0) / self.stride, (p.y as i64 - self.min.1) / self.stride)
    }

    fn rank(&self, p: Point) -> i64 {
        let (cx, cy) = self.cell(p);
        cy * self.cols + cx
    }

    fn at(&self, cx: i64, cy: i64) -> Option<usize> {
        if cx < 0 || cy < 0 || cx >= self.cols || cy >= self.rows {
            return None;
        }
        self.cells[(cy * self.cols + cx) as usize]
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
