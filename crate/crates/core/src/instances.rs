//! Seeded problem generators shaped like the tracker's per-frame problems.
//! Used by tests and the solver benchmark.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Point, Vec2};
use crate::motion::{group_similarity, proximity_similarity, GroupModel};
use crate::qp::{build_problem, laplacianize, scores_to_costs, BlockLayout, BqpProblem, LaplacianMode, LinearCosts};
use crate::sparse::SparseSymMatrix;

/// Small random problem: per-block costs in `[-1, 0]` (best candidate at
/// `-1`), one repelling and one attracting Laplacian built from random
/// cross-block similarities. Both quadratic terms are positive semi-definite.
pub fn random_instance(seed: u64, n_blocks: usize, k: usize, density: f64) -> BqpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..n_blocks).map(|_| rng.random_range(1..=k.max(1))).collect();
    random_instance_with_layout(&mut rng, BlockLayout::new(sizes).unwrap(), density)
}

/// Same as [`random_instance`] with every block of size `k`.
pub fn random_uniform_instance(seed: u64, n_blocks: usize, k: usize, density: f64) -> BqpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance_with_layout(&mut rng, BlockLayout::uniform(n_blocks, k).unwrap(), density)
}

fn random_instance_with_layout(rng: &mut ChaCha8Rng, layout: BlockLayout, density: f64) -> BqpProblem {
    let l = layout.len();
    let scores: Vec<f64> = (0..l).map(|_| rng.random::<f64>()).collect();
    let c = scores_to_costs(&layout, &scores);
    let repel = laplacianize(&random_similarity(rng, &layout, density), LaplacianMode::Repel, &layout).unwrap();
    let attract = laplacianize(&random_similarity(rng, &layout, density), LaplacianMode::Attract, &layout).unwrap();
    build_problem(layout, LinearCosts::appearance_only(c), vec![repel, attract]).unwrap()
}

fn random_similarity(rng: &mut ChaCha8Rng, layout: &BlockLayout, density: f64) -> SparseSymMatrix {
    let l = layout.len();
    let mut triplets = Vec::new();
    for i in 0..l {
        for j in i + 1..l {
            if layout.block_of(i) != layout.block_of(j) && rng.random::<f64>() < density {
                let v = 1.0 - rng.random::<f64>();
                triplets.push((i, j, v));
                triplets.push((j, i, v));
            }
        }
    }
    SparseSymMatrix::from_triplets(l, &triplets)
}

/// Parameters of [`frame_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInstanceConfig {
    pub n_targets: usize,
    pub candidates_per_target: usize,
    pub target_size: f64,
    pub group_size: usize,
    /// Uniform noise added to the peaked appearance scores.
    pub appearance_noise: f64,
    pub zeta: f64,
}

impl FrameInstanceConfig {
    pub fn new(n_targets: usize, candidates_per_target: usize) -> Self {
        Self { n_targets, candidates_per_target, target_size: 7.0, group_size: 5, appearance_noise: 0.4, zeta: 0.3 }
    }
}

/// Offsets ordered by distance from the origin, ties row-major.
fn spiral(k: usize) -> Vec<(i32, i32)> {
    let r = (libm::ceil(libm::sqrt(k as f64)) as i32) + 1;
    let mut offs: Vec<(i32, i32)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    offs.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    offs.truncate(k);
    offs
}

/// A synthetic tracker frame: targets on a jittered grid two target sizes
/// apart, `k` candidates around each predicted location, noisy peaked
/// appearance costs, motion costs, proximity repulsion and group formation
/// attraction over consecutive runs of `group_size` targets.
pub fn frame_instance(seed: u64, cfg: &FrameInstanceConfig) -> BqpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_targets;
    let k = cfg.candidates_per_target;
    let spacing = 2.0 * cfg.target_size;
    let cols = libm::ceil(libm::sqrt(n as f64)) as usize;
    let truth: Vec<Vec2> = (0..n)
        .map(|i| {
            let jx = rng.random_range(-0.25..0.25) * spacing;
            let jy = rng.random_range(-0.25..0.25) * spacing;
            Vec2::new(spacing * (1 + i % cols) as f64 + jx, spacing * (1 + i / cols) as f64 + jy)
        })
        .collect();
    let offs = spiral(k);
    let mut cands: Vec<Vec<Point>> = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for p in &truth {
        let pred = Vec2::new(p.x + rng.random_range(-1.5..1.5), p.y + rng.random_range(-1.5..1.5));
        let c = pred.round();
        predicted.push(pred);
        cands.push(offs.iter().map(|&(dx, dy)| Point::new(c.x + dx, c.y + dy)).collect());
    }
    let layout = BlockLayout::uniform(n, k).unwrap();
    let sigma = cfg.target_size / 2.0;
    let mut app = Vec::with_capacity(n * k);
    let mut mot = Vec::with_capacity(n * k);
    for (i, cs) in cands.iter().enumerate() {
        for q in cs {
            let d2 = q.to_vec2().dist(truth[i]);
            app.push(libm::exp(-d2 * d2 / (2.0 * sigma * sigma)) + cfg.appearance_noise * rng.random::<f64>());
            let m2 = q.to_vec2().dist(predicted[i]);
            mot.push(libm::exp(-m2 * m2 / (2.0 * sigma * sigma)));
        }
    }
    let lin = LinearCosts {
        appearance: scores_to_costs(&layout, &app),
        motion: scores_to_costs(&layout, &mot),
        neighborhood: vec![0.0; n * k],
        zeta: cfg.zeta,
        eta: 0.0,
    };
    let flat: Vec<Point> = cands.iter().flatten().copied().collect();
    let blocks: Vec<usize> = (0..n).flat_map(|i| core::iter::repeat_n(i, k)).collect();
    let prox = laplacianize(&proximity_similarity(&flat, &blocks, sigma), LaplacianMode::Repel, &layout).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.group_size.max(1)).collect();
    let groups = GroupModel::from_labels(&labels, &truth, 0, 10);
    debug_assert!(groups.trees.iter().zip(&groups.groups).all(|(t, g)| t.len() + 1 == g.len()));
    let gsim = group_similarity(&cands, &groups, sigma, 0).unwrap();
    let group = laplacianize(&gsim, LaplacianMode::Attract, &layout).unwrap();
    build_problem(layout, lin, vec![prox, group]).unwrap().with_pixels(flat).unwrap()
}
