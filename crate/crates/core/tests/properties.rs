use crowdtrack_core::appearance::{train_dual, train_primal, TrainingSet};
use crowdtrack_core::instances::{frame_instance, random_instance, FrameInstanceConfig};
use crowdtrack_core::linalg::DenseMatrix;
use crowdtrack_core::qp::{laplacianize, LaplacianMode};
use crowdtrack_core::solver::{exact_step, fw_solve, line_search_exact, lmo, SolverConfig, Variant};
use crowdtrack_core::{BlockLayout, SparseSymMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sym_triplets(dim: usize, raw: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for &(i, j, v) in raw {
        let (i, j) = (i % dim, j % dim);
        t.push((i, j, v));
        if i != j {
            t.push((j, i, v));
        }
    }
    t
}

fn dense_of(m: &SparseSymMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.dim(), m.dim(), |i, j| d[i][j])
}

fn min_eigenvalue(m: &SparseSymMatrix) -> f64 {
    dense_of(m).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #[test]
    fn sparse_products_match_dense(
        dim in 1usize..12,
        raw in prop::collection::vec((0usize..12, 0usize..12, -2.0f64..2.0), 0..30),
        x in prop::collection::vec(-3.0f64..3.0, 12),
    ) {
        let m = SparseSymMatrix::from_triplets(dim, &sym_triplets(dim, &raw));
        let x = &x[..dim];
        let dense = dense_of(&m);
        let y = m.mul_vec(x);
        let yd = &dense * nalgebra::DVector::from_column_slice(x);
        for i in 0..dim {
            prop_assert!((y[i] - yd[i]).abs() <= 1e-9);
        }
        let q = m.quad_form(x);
        let qd: f64 = (0..dim).map(|i| x[i] * yd[i]).sum();
        prop_assert!((q - qd).abs() <= 1e-9 * (1.0 + qd.abs()));
        prop_assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn lmo_is_blockwise_argmin(sizes in prop::collection::vec(1usize..6, 1..6), seed in any::<u64>()) {
        let layout = BlockLayout::new(sizes).unwrap();
        let g: Vec<f64> = (0..layout.len()).map(|i| ((seed.wrapping_mul(31).wrapping_add(i as u64 * 7919)) % 97) as f64 / 7.0).collect();
        let s = lmo(&layout, &g);
        prop_assert!(s.is_valid(&layout));
        for j in 0..layout.n_blocks() {
            let block = &g[layout.range(j)];
            let pick = s.chosen[j] as usize;
            prop_assert!(block.iter().all(|&v| v >= block[pick]));
            prop_assert!(block[..pick].iter().all(|&v| v > block[pick]));
        }
    }

    #[test]
    fn exact_step_minimises_the_parabola(gd in -5.0f64..5.0, curv in 0.0f64..5.0, lmax in 0.01f64..2.0) {
        let lam = exact_step(gd, curv, lmax);
        prop_assert!((0.0..=lmax).contains(&lam));
        let phi = |t: f64| t * gd + t * t * curv;
        for i in 0..=200 {
            let t = lmax * i as f64 / 200.0;
            prop_assert!(phi(lam) <= phi(t) + 1e-12);
        }
    }

    #[test]
    fn line_search_matches_objective_along_direction(seed in 0u64..500, lmax in 0.05f64..1.0) {
        let p = random_instance(seed, 3, 4, 0.5);
        let layout = p.layout().clone();
        let x = layout.uniform_point().x;
        let s = lmo(&layout, &p.gradient(&x).unwrap()).to_dense(&layout);
        let d: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a - b).collect();
        let lam = line_search_exact(&p, &x, &d, lmax).unwrap();
        let f = |t: f64| {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            p.objective(&y).unwrap()
        };
        for i in 0..=100 {
            let t = lmax * i as f64 / 100.0;
            prop_assert!(f(lam) <= f(t) + 1e-10);
        }
    }

    #[test]
    fn primal_and_dual_ridge_agree(
        rows in 2usize..9,
        cols in 2usize..9,
        data in prop::collection::vec(-1.0f64..1.0, 81),
        labels in prop::collection::vec(0.0f64..1.0, 9),
        ridge in 1e-3f64..1.0,
    ) {
        let m: Vec<Vec<f64>> = (0..rows).map(|r| data[r * 9..r * 9 + cols].to_vec()).collect();
        let t = TrainingSet::new(DenseMatrix::from_rows(&m), labels[..rows].to_vec()).unwrap();
        let wp = train_primal(&t, ridge).unwrap();
        let wd = train_dual(&t, ridge).unwrap();
        let norm = wp.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let diff = wp.iter().zip(&wd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff / norm <= 1e-8, "relative difference {}", diff / norm);
    }
}

fn random_similarity(layout: &BlockLayout, seed: u64) -> SparseSymMatrix {
    let mut state = seed.wrapping_add(1);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut t = Vec::new();
    for i in 0..layout.len() {
        for j in i + 1..layout.len() {
            if layout.block_of(i) != layout.block_of(j) && next() < 0.4 {
                let v = next();
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
    }
    SparseSymMatrix::from_triplets(layout.len(), &t)
}

#[test]
fn attract_and_repel_laplacians_are_psd() {
    for seed in 0..40 {
        let layout = BlockLayout::new(vec![1 + seed as usize % 4, 3, 2, 4]).unwrap();
        let s = random_similarity(&layout, seed);
        for mode in [LaplacianMode::Attract, LaplacianMode::Repel] {
            let q = laplacianize(&s, mode, &layout).unwrap().matrix;
            assert!(min_eigenvalue(&q) >= -1e-10, "seed {seed} {mode:?}");
        }
    }
}

#[test]
fn printed_laplacian_can_be_indefinite() {
    let indefinite = (0..40).any(|seed| {
        let layout = BlockLayout::uniform(4, 3).unwrap();
        let s = random_similarity(&layout, seed);
        min_eigenvalue(&laplacianize(&s, LaplacianMode::Printed, &layout).unwrap().matrix) < -1e-9
    });
    assert!(indefinite);
}

#[test]
fn tracker_shaped_problems_are_psd() {
    for seed in 0..10 {
        let p = frame_instance(seed, &FrameInstanceConfig::new(6, 5));
        assert!(min_eigenvalue(p.quad()) >= -1e-10);
    }
}

#[test]
fn active_set_reconstructs_the_iterate() {
    for seed in 0..20 {
        let p = frame_instance(seed, &FrameInstanceConfig::new(8, 6));
        for v in [Variant::FwAway, Variant::FwSwap] {
            let r = fw_solve(&p, &SolverConfig::new(v, 1e-6), None).unwrap();
            let a = r.active_set.unwrap();
            assert!(a.alphas().iter().all(|&w| w >= 0.0));
            assert!((a.alphas().iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            let x = a.reconstruct(p.layout());
            let err = x.iter().zip(&r.fractional.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-8, "seed {seed} {}: {err}", v.name());
        }
    }
}

#[test]
fn gap_bounds_suboptimality_against_a_tight_solve() {
    for seed in 0..10 {
        let p = frame_instance(seed, &FrameInstanceConfig::new(5, 6));
        let tight = fw_solve(&p, &SolverConfig::new(Variant::FwSwap, 1e-10).with_max_iterations(200_000), None).unwrap();
        let loose = fw_solve(&p, &SolverConfig::new(Variant::Fw, 1e-2), None).unwrap();
        assert!(loose.converged);
        assert!(loose.trace.final_objective - tight.trace.final_objective <= loose.trace.final_gap + 1e-9);
    }
}
