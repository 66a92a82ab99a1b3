//! Online multi-target tracking in dense crowds as a binary quadratic program.
//!
//! Every frame, each target receives a block of candidate locations. Linear
//! appearance and motion costs plus quadratic proximity and group terms form
//! a convex objective over a product of simplices, which is minimised with
//! Frank-Wolfe variants (vanilla, away-step, SWAP-step) and rounded back to
//! one location per target.
//!
//! The crate is `no_std` and only needs `alloc`. Wall-clock timing is
//! injected through [`clock::Clock`].
#![no_std]

extern crate alloc;

pub mod appearance;
pub mod candidates;
pub mod clock;
pub mod geometry;
pub mod instances;
pub mod linalg;
pub mod metrics;
pub mod motion;
pub mod qp;
pub mod raster;
pub mod scene;
pub mod solver;
pub mod sparse;
pub mod tracker;

pub use geometry::{Point, Vec2};
pub use qp::{Assignment, BlockLayout, BqpProblem, FractionalSolution, LinearCosts, QuadKind, QuadraticTerm};
pub use solver::{SolverConfig, SolverResult, SolverTrace, Variant};
pub use sparse::SparseSymMatrix;
