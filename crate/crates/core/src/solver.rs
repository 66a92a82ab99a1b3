//! Frank-Wolfe solvers over a product of simplices.
//!
//! Three first-order variants share one loop:
//!
//! * [`Variant::Fw`]: classic conditional gradient with exact line search.
//! * [`Variant::FwAway`]: additionally considers moving away from the worst
//!   active vertex.
//! * [`Variant::FwSwap`]: considers the SWAP direction `s - y`, which moves
//!   mass straight from the worst active vertex `y` onto the LMO vertex `s`.
//!
//! The away/SWAP variants keep the iterate as an explicit convex combination
//! of vertices ([`ActiveSet`]). [`Variant::Exact`] enumerates every binary
//! point and is only usable on small instances.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::clock::{Clock, NullClock};
use crate::linalg::dot;
use crate::qp::{is_feasible, Assignment, BlockLayout, BqpProblem, FractionalSolution, QpError};

/// Largest vertex count the exhaustive solver accepts.
pub const MAX_ENUMERATION: u128 = 1_000_000;
/// `d^T Q d` below this is treated as a linear direction.
pub const CURVATURE_FLOOR: f64 = 1e-14;
/// The maintained `Q x` is recomputed from scratch this often.
const REFRESH_PERIOD: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("starting point is not feasible")]
    InfeasibleStart,
    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("instance has {count} binary points, more than the exhaustive limit of {MAX_ENUMERATION}")]
    TooLarge { count: u128 },
    #[error("active set is empty")]
    EmptyActiveSet,
    #[error("every binary point places two targets on one pixel")]
    NoFeasibleAssignment,
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Fw,
    FwAway,
    FwSwap,
    Exact,
}

impl Variant {
    pub const ITERATIVE: [Variant; 3] = [Variant::Fw, Variant::FwAway, Variant::FwSwap];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fw => "fw",
            Variant::FwAway => "fw_away",
            Variant::FwSwap => "fw_swap",
            Variant::Exact => "exact",
        }
    }
}

/// Step-size rule for the plain FW direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Closed-form minimiser along the segment.
    LineSearch,
    /// `2 / (k + 2)`; only affects [`Variant::Fw`]. Descent is not guaranteed.
    Classic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Stop once the duality gap is at most this.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Active-set weights at or below this drop their vertex.
    pub drop_tolerance: f64,
    pub step_rule: StepRule,
    /// Exhaustive solver only: reject binary points with two targets on one pixel.
    pub forbid_shared_pixels: bool,
    /// Keep every iteration record (otherwise only the final one).
    pub record_iterations: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FwSwap,
            epsilon: 0.01,
            max_iterations: 5000,
            drop_tolerance: 1e-12,
            step_rule: StepRule::LineSearch,
            forbid_shared_pixels: true,
            record_iterations: true,
        }
    }
}

impl SolverConfig {
    pub fn new(variant: Variant, epsilon: f64) -> Self {
        Self { variant, epsilon, ..Self::default() }
    }

    pub fn with_max_iterations(mut self, k: usize) -> Self {
        self.max_iterations = k;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0) {
            return Err(SolverError::InvalidConfig("epsilon must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(SolverError::InvalidConfig("max_iterations must be at least 1"));
        }
        if !(self.drop_tolerance >= 0.0) {
            return Err(SolverError::InvalidConfig("drop_tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// The iterate as a convex combination of binary vertices, oldest first.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    vertices: Vec<Assignment>,
    alphas: Vec<f64>,
    /// Chosen indices of every vertex, back to back.
    flat: Vec<u32>,
    keys: Vec<u64>,
    /// Gradient the cached scores were taken against.
    ref_grad: Vec<f64>,
    /// `<v, ref_grad>` for the first `scored` vertices.
    ref_scores: Vec<f64>,
    scored: usize,
    /// Index of the largest cached score, if known.
    lead: Option<usize>,
}

impl PartialEq for ActiveSet {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.alphas == other.alphas
    }
}

fn vertex_key(v: &Assignment) -> u64 {
    // FNV-1a
    v.chosen.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &c| {
        c.to_le_bytes().iter().fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    })
}

impl ActiveSet {
    pub fn single(v: Assignment) -> Self {
        let mut a = Self::default();
        a.push(v, 1.0);
        a
    }

    fn push(&mut self, v: Assignment, w: f64) {
        self.flat.extend_from_slice(&v.chosen);
        self.keys.push(vertex_key(&v));
        self.ref_scores.push(0.0);
        self.vertices.push(v);
        self.alphas.push(w);
    }

    /// Writes a feasible point as a convex combination of at most
    /// `l - n + 1` vertices by sweeping the per-block cumulative sums.
    pub fn decompose(layout: &BlockLayout, x: &[f64]) -> Self {
        let n = layout.n_blocks();
        let mut ptr: Vec<usize> = vec![0; n];
        let mut rem: Vec<f64> = vec![0.0; n];
        for j in 0..n {
            let r = layout.range(j);
            let first = x[r.clone()].iter().position(|&v| v > 0.0).unwrap_or(0);
            ptr[j] = first;
            rem[j] = x[r.start + first];
        }
        let mut vertices = Vec::new();
        let mut alphas = Vec::new();
        let mut total = 0.0;
        while total < 1.0 - 1e-12 {
            let w = rem.iter().copied().fold(f64::INFINITY, f64::min).min(1.0 - total);
            if w > 1e-15 {
                vertices.push(Assignment::new(ptr.iter().map(|&p| p as u32).collect()));
                alphas.push(w);
                total += w;
            }
            let mut advanced = false;
            for j in 0..n {
                rem[j] -= w;
                if rem[j] <= 1e-15 {
                    let r = layout.range(j);
                    let next = (ptr[j] + 1..r.len()).find(|&i| x[r.start + i] > 0.0);
                    if let Some(i) = next {
                        ptr[j] = i;
                        rem[j] += x[r.start + i];
                        advanced = true;
                    } else {
                        rem[j] = f64::INFINITY;
                    }
                }
            }
            if !advanced && rem.iter().all(|r| r.is_infinite()) {
                break;
            }
        }
        if vertices.is_empty() {
            vertices.push(Assignment::new(ptr.iter().map(|&p| p as u32).collect()));
            alphas.push(1.0);
        }
        let s: f64 = alphas.iter().sum();
        let mut out = Self::default();
        for (v, a) in vertices.into_iter().zip(alphas) {
            out.push(v, a / s);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Assignment] {
        &self.vertices
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn position(&self, v: &Assignment) -> Option<usize> {
        let key = vertex_key(v);
        (0..self.keys.len()).find(|&i| self.keys[i] == key && self.vertices[i] == *v)
    }

    pub fn weight(&self, v: &Assignment) -> f64 {
        self.position(v).map_or(0.0, |i| self.alphas[i])
    }

    /// `sum alpha_v v`
    pub fn reconstruct(&self, layout: &BlockLayout) -> Vec<f64> {
        let mut x = vec![0.0; layout.len()];
        for (v, &a) in self.vertices.iter().zip(&self.alphas) {
            for i in v.global_indices(layout) {
                x[i] += a;
            }
        }
        x
    }

    fn scale(&mut self, s: f64) {
        self.alphas.iter_mut().for_each(|a| *a *= s);
    }

    /// Returns the vertex's index.
    fn add_weight(&mut self, v: &Assignment, w: f64) -> usize {
        match self.position(v) {
            Some(i) => {
                self.alphas[i] += w;
                i
            }
            None => {
                self.push(v.clone(), w);
                self.len() - 1
            }
        }
    }

    fn remove(&mut self, i: usize) {
        let n = self.vertices[i].chosen.len();
        self.flat.drain(i * n..(i + 1) * n);
        self.keys.remove(i);
        self.ref_scores.remove(i);
        self.vertices.remove(i);
        self.alphas.remove(i);
        if i < self.scored {
            self.scored -= 1;
        }
        self.lead = match self.lead {
            Some(l) if l == i => None,
            Some(l) if l > i => Some(l - 1),
            other => other,
        };
    }

    /// Same result as [`away_vertex`]. Scores cached against an earlier
    /// gradient bound the current ones: a vertex picks one entry per block,
    /// so its score grows by at most the sum over blocks of the largest
    /// gradient increase. Only vertices whose bound reaches the best exact
    /// score so far are evaluated.
    fn away_vertex_cached(&mut self, layout: &BlockLayout, grad: &[f64]) -> Result<usize, SolverError> {
        if self.is_empty() {
            return Err(SolverError::EmptyActiveSet);
        }
        let n = layout.n_blocks();
        if n == 0 {
            return Ok(0);
        }
        let offsets: Vec<usize> = (0..n).map(|j| layout.offset(j)).collect();
        let score = |v: &[u32], g: &[f64]| -> f64 { v.iter().zip(&offsets).map(|(&c, &o)| g[o + c as usize]).sum() };
        if self.ref_grad.len() != grad.len() {
            self.ref_grad = grad.to_vec();
            self.scored = 0;
            self.lead = None;
        }
        if self.lead.is_none() {
            self.lead = (0..self.scored).reduce(|b, i| if self.ref_scores[i] > self.ref_scores[b] { i } else { b });
        }
        for i in self.scored..self.len() {
            let v = score(&self.flat[i * n..(i + 1) * n], &self.ref_grad);
            self.ref_scores[i] = v;
            if self.lead.is_none_or(|l| v > self.ref_scores[l]) {
                self.lead = Some(i);
            }
        }
        self.scored = self.len();
        let drift: f64 = (0..n)
            .map(|j| {
                let r = layout.range(j);
                grad[r.clone()].iter().zip(&self.ref_grad[r]).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        let lead = self.lead.unwrap_or(0);
        let mut best = lead;
        let mut best_val = score(&self.flat[lead * n..(lead + 1) * n], grad);
        let slack = 1e-9 * (1.0 + libm::fabs(best_val) + libm::fabs(drift));
        let mut evaluated = 1;
        for (i, v) in self.flat.chunks_exact(n).enumerate() {
            if i == lead || self.ref_scores[i] + drift + slack < best_val {
                continue;
            }
            evaluated += 1;
            let val = score(v, grad);
            if val > best_val || (val == best_val && i < best) {
                best = i;
                best_val = val;
            }
        }
        if 16 * evaluated > self.len() {
            self.ref_grad.copy_from_slice(grad);
            self.scored = 0;
            self.lead = None;
        }
        Ok(best)
    }

    /// [`Self::purge`] restricted to the given indices; enough when no
    /// other weight decreased.
    fn purge_at(&mut self, tol: f64, idx: &mut [usize]) {
        idx.sort_unstable_by(|a, b| b.cmp(a));
        let mut last = usize::MAX;
        for &i in idx.iter() {
            if i != last && i < self.len() && self.alphas[i] <= tol && self.len() > 1 {
                self.remove(i);
            }
            last = i;
        }
    }

    fn purge(&mut self, tol: f64) {
        if self.alphas.iter().all(|&a| a > tol) {
            return;
        }
        let mut i = 0;
        while i < self.alphas.len() {
            if self.alphas[i] <= tol && self.alphas.len() > 1 {
                self.remove(i);
            } else {
                i += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Fw,
    Away,
    AwayDrop,
    SwapAdd,
    SwapDrop,
    /// Terminal record: no step was taken.
    Stop,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Fw => "fw",
            StepKind::Away => "away",
            StepKind::AwayDrop => "away_drop",
            StepKind::SwapAdd => "swap_add",
            StepKind::SwapDrop => "swap_drop",
            StepKind::Stop => "stop",
        }
    }
}

/// State at the start of an iteration and the step taken from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
    pub step: StepKind,
    /// Step length actually applied.
    pub lambda: f64,
    pub lambda_fw: f64,
    /// Away or SWAP step length candidate (NaN when not evaluated).
    pub lambda_swap: f64,
    pub delta_fw: f64,
    pub delta_swap: f64,
    pub active_set_size: usize,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    /// Number of steps taken.
    pub iterations: usize,
    pub wall_time_us: u64,
    pub final_objective: f64,
    pub final_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub fractional: FractionalSolution,
    pub rounded: Assignment,
    pub trace: SolverTrace,
    pub converged: bool,
    pub active_set: Option<ActiveSet>,
}

/// Linear minimisation oracle: per block, the lowest-index minimum entry.
pub fn lmo(layout: &BlockLayout, grad: &[f64]) -> Assignment {
    assert_eq!(grad.len(), layout.len());
    let chosen = (0..layout.n_blocks())
        .map(|j| {
            let block = &grad[layout.range(j)];
            let mut best = 0;
            for (i, &g) in block.iter().enumerate().skip(1) {
                if g < block[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect();
    Assignment::new(chosen)
}

/// Active vertex with the largest `<y, grad>`; the oldest wins ties.
pub fn away_vertex(layout: &BlockLayout, active: &ActiveSet, grad: &[f64]) -> Result<usize, SolverError> {
    if active.is_empty() {
        return Err(SolverError::EmptyActiveSet);
    }
    let n = layout.n_blocks();
    if n == 0 {
        return Ok(0);
    }
    let offsets: Vec<usize> = (0..n).map(|j| layout.offset(j)).collect();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in active.flat.chunks_exact(n).enumerate() {
        let val: f64 = v.iter().zip(&offsets).map(|(&c, &o)| grad[o + c as usize]).sum();
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    Ok(best)
}

/// Minimiser of `lambda grad_d + lambda^2 curvature` on `[0, lambda_max]`,
/// where `grad_d = grad f(x)^T d` and `curvature = d^T Q d`.
pub fn exact_step(grad_d: f64, curvature: f64, lambda_max: f64) -> f64 {
    if curvature <= CURVATURE_FLOOR {
        return if grad_d < 0.0 { lambda_max } else { 0.0 };
    }
    (-grad_d / (2.0 * curvature)).clamp(0.0, lambda_max)
}

/// Exact line search along `d` from `x`, clipped to `[0, lambda_max]`.
pub fn line_search_exact(p: &BqpProblem, x: &[f64], d: &[f64], lambda_max: f64) -> Result<f64, SolverError> {
    let g = p.gradient(x)?;
    if d.len() != x.len() {
        return Err(QpError::DimensionMismatch { name: "d", expected: x.len(), got: d.len() }.into());
    }
    let qd = p.quad().mul_vec(d);
    Ok(exact_step(dot(&g, d), dot(d, &qd), lambda_max))
}

/// `grad f(x)^T (x - s)`; an upper bound on `f(x) - f*` when `s` is the LMO vertex.
pub fn duality_gap(p: &BqpProblem, x: &[f64], s: &Assignment) -> Result<f64, SolverError> {
    let g = p.gradient(x)?;
    Ok(dot(&g, x) - s.dot(p.layout(), &g))
}

/// Nearest binary feasible point: per block, the lowest-index maximum.
pub fn round_solution(layout: &BlockLayout, x: &[f64]) -> Assignment {
    assert_eq!(x.len(), layout.len());
    let chosen = (0..layout.n_blocks())
        .map(|j| {
            let block = &x[layout.range(j)];
            let mut best = 0;
            for (i, &v) in block.iter().enumerate().skip(1) {
                if v > block[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect();
    Assignment::new(chosen)
}

/// Exhaustive minimum over all binary feasible points.
///
/// With `forbid_shared_pixels` and pixels attached to the problem, points
/// that put two targets on the same pixel are skipped. Ties keep the
/// lexicographically first assignment.
pub fn brute_force_solve(p: &BqpProblem, forbid_shared_pixels: bool) -> Result<(Assignment, f64), SolverError> {
    let layout = p.layout();
    let count = layout.vertex_count();
    if count > MAX_ENUMERATION {
        return Err(SolverError::TooLarge { count });
    }
    let pixels = if forbid_shared_pixels { p.pixels() } else { None };
    let n = layout.n_blocks();
    let mut search = Enumeration {
        p,
        layout,
        pixels,
        chosen: vec![0; n],
        globals: vec![0; n],
        best: None,
    };
    search.descend(0, 0.0);
    match search.best {
        Some((a, f)) => Ok((a, f)),
        None => Err(SolverError::NoFeasibleAssignment),
    }
}

struct Enumeration<'a> {
    p: &'a BqpProblem,
    layout: &'a BlockLayout,
    pixels: Option<&'a [crate::geometry::Point]>,
    chosen: Vec<u32>,
    globals: Vec<usize>,
    best: Option<(Assignment, f64)>,
}

impl Enumeration<'_> {
    fn descend(&mut self, block: usize, partial: f64) {
        if block == self.layout.n_blocks() {
            if self.best.as_ref().is_none_or(|b| partial < b.1) {
                self.best = Some((Assignment::new(self.chosen.clone()), partial));
            }
            return;
        }
        let q = self.p.quad();
        for local in 0..self.layout.block_size(block) {
            let gi = self.layout.global(block, local);
            if let Some(px) = self.pixels {
                if self.globals[..block].iter().any(|&g| px[g] == px[gi]) {
                    continue;
                }
            }
            let (cols, vals) = q.row(gi);
            let lookup = |j: usize| cols.binary_search(&(j as u32)).map_or(0.0, |k| vals[k]);
            let mut add = self.p.cost()[gi] + lookup(gi);
            for &g in &self.globals[..block] {
                add += 2.0 * lookup(g);
            }
            self.chosen[block] = local as u32;
            self.globals[block] = gi;
            self.descend(block + 1, partial + add);
        }
    }
}

/// [`fw_solve_with_clock`] without timing.
pub fn fw_solve(p: &BqpProblem, cfg: &SolverConfig, x0: Option<&FractionalSolution>) -> Result<SolverResult, SolverError> {
    fw_solve_with_clock(p, cfg, x0, &NullClock)
}

/// Solves the relaxed problem from `x0` (default: the simplex centre) and
/// rounds the result.
pub fn fw_solve_with_clock(
    p: &BqpProblem,
    cfg: &SolverConfig,
    x0: Option<&FractionalSolution>,
    clock: &dyn Clock,
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    let layout = p.layout();
    let start = clock.now_us();
    if cfg.variant == Variant::Exact {
        let (a, f) = brute_force_solve(p, cfg.forbid_shared_pixels)?;
        let wall = clock.now_us().saturating_sub(start);
        let rec = IterationRecord {
            iteration: 0,
            objective: f,
            gap: 0.0,
            step: StepKind::Stop,
            lambda: 0.0,
            lambda_fw: f64::NAN,
            lambda_swap: f64::NAN,
            delta_fw: f64::NAN,
            delta_swap: f64::NAN,
            active_set_size: 1,
            elapsed_us: wall,
        };
        return Ok(SolverResult {
            fractional: FractionalSolution { x: a.to_dense(layout) },
            trace: SolverTrace { records: vec![rec], iterations: 0, wall_time_us: wall, final_objective: f, final_gap: 0.0 },
            active_set: Some(ActiveSet::single(a.clone())),
            rounded: a,
            converged: true,
        });
    }

    let x_start = match x0 {
        Some(x0) => {
            if !is_feasible(layout, &x0.x, false) {
                return Err(SolverError::InfeasibleStart);
            }
            x0.x.clone()
        }
        None => layout.uniform_point().x,
    };
    let mut state = FwState::new(p, cfg, x_start);
    let mut records = Vec::new();
    let converged;
    let mut k = 0;
    loop {
        let s = lmo(layout, &state.grad);
        let gap = dot(&state.grad, &state.x) - s.dot(layout, &state.grad);
        if !state.f.is_finite() || !gap.is_finite() {
            return Err(SolverError::NonFinite { iteration: k });
        }
        if gap <= cfg.epsilon || k == cfg.max_iterations {
            converged = gap <= cfg.epsilon;
            records.push(IterationRecord {
                iteration: k,
                objective: state.f,
                gap,
                step: StepKind::Stop,
                lambda: 0.0,
                lambda_fw: f64::NAN,
                lambda_swap: f64::NAN,
                delta_fw: f64::NAN,
                delta_swap: f64::NAN,
                active_set_size: state.active.as_ref().map_or(0, ActiveSet::len),
                elapsed_us: clock.now_us().saturating_sub(start),
            });
            break;
        }
        let mut rec = state.step(&s, gap, k)?;
        rec.elapsed_us = clock.now_us().saturating_sub(start);
        if cfg.record_iterations {
            records.push(rec);
        }
        k += 1;
        if k % REFRESH_PERIOD == 0 {
            state.refresh();
        }
    }
    let last = *records.last().unwrap();
    let trace = SolverTrace {
        records,
        iterations: k,
        wall_time_us: clock.now_us().saturating_sub(start),
        final_objective: last.objective,
        final_gap: last.gap,
    };
    let rounded = round_solution(layout, &state.x);
    Ok(SolverResult { fractional: FractionalSolution { x: state.x }, rounded, trace, converged, active_set: state.active })
}

struct FwState<'a> {
    p: &'a BqpProblem,
    cfg: &'a SolverConfig,
    x: Vec<f64>,
    /// `Q x`
    qx: Vec<f64>,
    grad: Vec<f64>,
    f: f64,
    active: Option<ActiveSet>,
    qs: Vec<f64>,
    qy: Vec<f64>,
}

enum Move {
    Fw,
    Away { idx: usize, drop: bool },
    Swap { idx: usize, drop: bool },
}

impl<'a> FwState<'a> {
    fn new(p: &'a BqpProblem, cfg: &'a SolverConfig, x: Vec<f64>) -> Self {
        let l = x.len();
        let (x, active) = if cfg.variant == Variant::Fw {
            (x, None)
        } else {
            let active = ActiveSet::decompose(p.layout(), &x);
            (active.reconstruct(p.layout()), Some(active))
        };
        let mut st = Self { p, cfg, x, qx: vec![0.0; l], grad: vec![0.0; l], f: 0.0, active, qs: vec![0.0; l], qy: vec![0.0; l] };
        st.refresh();
        st
    }

    fn refresh(&mut self) {
        self.p.quad().mul_vec_into(&self.x, &mut self.qx);
        self.update_objective();
    }

    fn update_objective(&mut self) {
        let c = self.p.cost();
        let mut f = 0.0;
        for i in 0..self.x.len() {
            self.grad[i] = c[i] + 2.0 * self.qx[i];
            f += (c[i] + self.qx[i]) * self.x[i];
        }
        self.f = f;
    }

    /// `out = Q v` for a vertex `v`.
    fn vertex_product(p: &BqpProblem, v: &Assignment, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let layout = p.layout();
        for (j, &c) in v.chosen.iter().enumerate() {
            p.quad().axpy_column(layout.global(j, c as usize), 1.0, out);
        }
    }

    fn step(&mut self, s: &Assignment, gap: f64, k: usize) -> Result<IterationRecord, SolverError> {
        let layout = self.p.layout();
        Self::vertex_product(self.p, s, &mut self.qs);
        let xqx = dot(&self.x, &self.qx);
        let sqs = s.dot(layout, &self.qs);
        let sqx = s.dot(layout, &self.qx);

        // Toward the LMO vertex.
        let fw_gd = -gap;
        let fw_curv = (sqs - 2.0 * sqx + xqx).max(0.0);
        let lambda_fw = match (self.cfg.variant, self.cfg.step_rule) {
            (Variant::Fw, StepRule::Classic) => 2.0 / (k as f64 + 2.0),
            _ => exact_step(fw_gd, fw_curv, 1.0),
        };
        let delta_fw = -(lambda_fw * fw_gd + lambda_fw * lambda_fw * fw_curv);

        let mut best = (Move::Fw, lambda_fw, delta_fw);
        let mut lambda_alt = f64::NAN;
        let mut delta_alt = f64::NAN;
        if let Some(active) = &mut self.active {
            let yi = active.away_vertex_cached(layout, &self.grad)?;
            let y = &active.vertices[yi];
            let alpha = active.alphas[yi];
            let gy = y.dot(layout, &self.grad);
            let gs = s.dot(layout, &self.grad);
            match self.cfg.variant {
                Variant::FwAway if alpha < 1.0 => {
                    Self::vertex_product(self.p, y, &mut self.qy);
                    let yqy = y.dot(layout, &self.qy);
                    let yqx = y.dot(layout, &self.qx);
                    let lambda_max = alpha / (1.0 - alpha);
                    let gd = dot(&self.grad, &self.x) - gy;
                    let curv = (xqx - 2.0 * yqx + yqy).max(0.0);
                    let lam = exact_step(gd, curv, lambda_max);
                    lambda_alt = lam;
                    delta_alt = -(lam * gd + lam * lam * curv);
                    if delta_alt > best.2 {
                        best = (Move::Away { idx: yi, drop: lam >= lambda_max }, lam, delta_alt);
                    }
                }
                Variant::FwSwap if y != s => {
                    Self::vertex_product(self.p, y, &mut self.qy);
                    let yqy = y.dot(layout, &self.qy);
                    let sqy = s.dot(layout, &self.qy);
                    let gd = gs - gy;
                    let curv = (sqs - 2.0 * sqy + yqy).max(0.0);
                    let lam = exact_step(gd, curv, alpha);
                    lambda_alt = lam;
                    delta_alt = -(lam * gd + lam * lam * curv);
                    if delta_alt > best.2 {
                        best = (Move::Swap { idx: yi, drop: lam >= alpha }, lam, delta_alt);
                    }
                }
                _ => {}
            }
        }

        let (mv, lambda, _) = best;
        let tol = self.cfg.drop_tolerance;
        let kind = match mv {
            Move::Fw => {
                let lam = lambda;
                for i in 0..self.x.len() {
                    self.x[i] *= 1.0 - lam;
                    self.qx[i] = (1.0 - lam) * self.qx[i] + lam * self.qs[i];
                }
                for i in s.global_indices(layout) {
                    self.x[i] += lam;
                }
                if let Some(active) = &mut self.active {
                    if lam >= 1.0 {
                        *active = ActiveSet::single(s.clone());
                    } else {
                        active.scale(1.0 - lam);
                        active.add_weight(s, lam);
                        active.purge(tol);
                    }
                }
                StepKind::Fw
            }
            Move::Away { idx, drop } => {
                let lam = lambda;
                let active = self.active.as_mut().unwrap();
                let y = active.vertices[idx].clone();
                for i in 0..self.x.len() {
                    self.x[i] *= 1.0 + lam;
                    self.qx[i] = (1.0 + lam) * self.qx[i] - lam * self.qy[i];
                }
                for i in y.global_indices(layout) {
                    self.x[i] -= lam;
                }
                active.scale(1.0 + lam);
                active.alphas[idx] -= lam;
                if drop {
                    active.remove(idx);
                } else {
                    active.purge_at(tol, &mut [idx]);
                }
                if drop {
                    StepKind::AwayDrop
                } else {
                    StepKind::Away
                }
            }
            Move::Swap { idx, drop } => {
                let lam = lambda;
                let active = self.active.as_mut().unwrap();
                let y = active.vertices[idx].clone();
                for (ig, jg) in s.global_indices(layout).into_iter().zip(y.global_indices(layout)) {
                    self.x[ig] += lam;
                    self.x[jg] -= lam;
                }
                for i in 0..self.qx.len() {
                    self.qx[i] += lam * (self.qs[i] - self.qy[i]);
                }
                active.alphas[idx] -= lam;
                let mut watch = [usize::MAX, usize::MAX];
                if drop {
                    active.remove(idx);
                } else {
                    watch[0] = idx;
                }
                watch[1] = active.add_weight(s, lam);
                active.purge_at(tol, &mut watch);
                if drop {
                    StepKind::SwapDrop
                } else {
                    StepKind::SwapAdd
                }
            }
        };
        for v in self.x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let f_before = self.f;
        self.update_objective();
        if !self.f.is_finite() {
            return Err(SolverError::NonFinite { iteration: k });
        }
        Ok(IterationRecord {
            iteration: k,
            objective: f_before,
            gap,
            step: kind,
            lambda,
            lambda_fw,
            lambda_swap: lambda_alt,
            delta_fw,
            delta_swap: delta_alt,
            active_set_size: self.active.as_ref().map_or(0, ActiveSet::len),
            elapsed_us: 0,
        })
    }
}
