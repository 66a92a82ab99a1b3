//! The online tracking loop: one BQP per frame over all targets.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::appearance::{AppearanceBackend, AppearanceError, AppearanceModel, PatchSize};
use crate::candidates::{dense_candidates, prune_candidates, PruneConfig, SamplerError, SearchRegion};
use crate::clock::{Clock, NullClock};
use crate::geometry::{Point, Vec2};
use crate::motion::{
    coherent_groups, group_similarity, motion_cost, neighbor_sets, neighborhood_motion_cost, proximity_similarity,
    CoherenceParams, GroupModel, MotionError, MotionModel, NeighborSet, TargetState,
};
use crate::qp::{build_problem, laplacianize, normalize_scores, scores_to_costs, BlockLayout, BqpProblem, LaplacianMode, LinearCosts, QpError};
use crate::raster::Frame;
use crate::solver::{fw_solve_with_clock, SolverConfig, SolverError, SolverTrace, Variant};

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("initialisation has {got} targets, expected {expected}")]
    MissingInit { expected: usize, got: usize },
    #[error("no frames to track")]
    EmptySequence,
    #[error("frame {frame} is {got_w}x{got_h}, expected {w}x{h}")]
    FrameSize { frame: usize, w: usize, h: usize, got_w: usize, got_h: usize },
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Appearance(#[from] AppearanceError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub zeta: f64,
    pub eta: f64,
    pub use_motion: bool,
    pub use_neighborhood: bool,
    pub use_proximity: bool,
    pub use_group: bool,
    pub appearance: AppearanceBackend,
    pub solver: SolverConfig,
    /// `None` scores every pixel of the search region.
    pub prune: Option<PruneConfig>,
    /// Groups are re-estimated every this many frames.
    pub group_refresh: usize,
    /// Target diameter in pixels; sets patch size, search region and sigmas.
    pub target_size: usize,
    /// Similarity bandwidth; `None` means half the target size.
    pub sigma: Option<f64>,
    pub proximity_mode: LaplacianMode,
    pub ridge: f64,
    pub learning_rate: f64,
    /// Appearance updates are skipped when the chosen candidate's
    /// normalised appearance score falls below this.
    pub update_threshold: f64,
    pub velocity_window: usize,
    pub stride: i32,
    /// Keep the full per-iteration solver trace of every frame.
    pub keep_traces: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            zeta: 0.3,
            eta: 0.2,
            use_motion: true,
            use_neighborhood: true,
            use_proximity: true,
            use_group: true,
            appearance: AppearanceBackend::Ridge,
            solver: SolverConfig { record_iterations: false, ..SolverConfig::default() },
            prune: Some(PruneConfig::default()),
            group_refresh: 10,
            target_size: 7,
            sigma: None,
            proximity_mode: LaplacianMode::Repel,
            ridge: 1e-2,
            learning_rate: 0.05,
            update_threshold: 0.4,
            velocity_window: 5,
            stride: 1,
            keep_traces: false,
        }
    }
}

impl TrackerConfig {
    /// Every term enabled.
    pub fn full(target_size: usize) -> Self {
        Self { target_size, ..Self::default() }
    }

    /// Appearance only (ablation "B").
    pub fn appearance_only(target_size: usize) -> Self {
        Self { use_motion: false, use_neighborhood: false, use_proximity: false, use_group: false, ..Self::full(target_size) }
    }

    /// Appearance plus individual motion (ablation "B+Mo").
    pub fn with_motion(target_size: usize) -> Self {
        Self { use_motion: true, ..Self::appearance_only(target_size) }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.target_size as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.target_size == 0 {
            return Err(TrackerError::InvalidConfig("target size must be positive"));
        }
        if !(self.zeta >= 0.0 && self.eta >= 0.0) {
            return Err(TrackerError::InvalidConfig("weights must be non-negative"));
        }
        if !(self.sigma() > 0.0) {
            return Err(TrackerError::InvalidConfig("sigma must be positive"));
        }
        if self.group_refresh == 0 {
            return Err(TrackerError::InvalidConfig("group refresh period must be positive"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(TrackerError::InvalidConfig("learning rate must lie in [0, 1]"));
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Estimated position per frame and target; `coasted[f]` marks frames whose
/// solve did not converge and whose positions come from motion prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub positions: Vec<Vec<Vec2>>,
    pub coasted: Vec<bool>,
}

impl TrackSet {
    pub fn new(positions: Vec<Vec<Vec2>>) -> Self {
        let coasted = vec![false; positions.len()];
        Self { positions, coasted }
    }

    pub fn n_frames(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSummary {
    pub frame: usize,
    pub n_variables: usize,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_gap: f64,
    pub converged: bool,
    pub solve_time_us: u64,
    pub frame_time_us: u64,
    pub trace: Option<SolverTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub tracks: TrackSet,
    pub summaries: Vec<FrameSummary>,
}

/// One frame's problem and the candidates behind its variables.
#[derive(Debug, Clone)]
pub struct FrameProblem {
    pub problem: BqpProblem,
    pub candidates: Vec<Vec<Point>>,
    /// Normalised appearance score of every variable.
    pub appearance: Vec<f64>,
}

/// Online tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    states: Vec<TargetState>,
    models: Vec<AppearanceModel>,
    groups: GroupModel,
    labels: Vec<usize>,
    frame_index: usize,
    width: usize,
    height: usize,
}

impl Tracker {
    /// Starts tracking at frame 0 from known positions.
    pub fn new(first: &Frame, init: &[Vec2], cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let patch = PatchSize::square(cfg.target_size);
        let states: Vec<TargetState> = init.iter().enumerate().map(|(i, &p)| TargetState::new(i, p)).collect();
        let models = init
            .iter()
            .map(|p| AppearanceModel::train(cfg.appearance, first, p.round(), patch, cfg.ridge))
            .collect::<Result<Vec<_>, _>>()?;
        let n = init.len();
        Ok(Self {
            groups: GroupModel::singletons(n, 0, cfg.group_refresh),
            labels: (0..n).collect(),
            states,
            models,
            frame_index: 0,
            width: first.width(),
            height: first.height(),
            cfg,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Swaps the configuration mid-sequence. The appearance backend and
    /// target size are tied to the trained models and cannot change.
    pub fn set_config(&mut self, cfg: TrackerConfig) -> Result<(), TrackerError> {
        cfg.validate()?;
        if cfg.appearance != self.cfg.appearance || cfg.target_size != self.cfg.target_size {
            return Err(TrackerError::InvalidConfig("appearance backend and target size are fixed after start"));
        }
        self.cfg = cfg;
        Ok(())
    }

    pub fn states(&self) -> &[TargetState] {
        &self.states
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.states.iter().map(|s| s.position).collect()
    }

    /// Index of the last processed frame.
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    fn refresh_groups(&mut self, t: usize) {
        if t % self.cfg.group_refresh == 0 || self.groups.is_stale(t) {
            let histories: Vec<Vec<Vec2>> = self.states.iter().map(|s| s.history.clone()).collect();
            let params = CoherenceParams::for_target_size(self.cfg.target_size as f64);
            self.labels = coherent_groups(&histories, &params);
            self.groups = GroupModel::from_labels(&self.labels, &self.positions(), t, self.cfg.group_refresh);
        }
    }

    fn raw_scores(
        &self,
        i: usize,
        frame: &Frame,
        cands: &[Point],
        mm: &MotionModel,
        nbs: &[NeighborSet],
    ) -> Result<[Vec<f64>; 3], TrackerError> {
        let a = self.models[i].score(frame, cands)?;
        let m = if self.cfg.use_motion { motion_cost(&self.states[i], mm, cands)? } else { vec![0.0; cands.len()] };
        let nm = if self.cfg.use_neighborhood {
            neighborhood_motion_cost(&self.states[i], &nbs[i], mm, cands)?
        } else {
            vec![0.0; cands.len()]
        };
        Ok([a, m, nm])
    }

    /// Builds the problem for `frame` as the next frame without advancing.
    pub fn frame_problem(&self, frame: &Frame) -> Result<FrameProblem, TrackerError> {
        let t = self.frame_index + 1;
        let mut probe = self.clone();
        probe.refresh_groups(t);
        probe.build(frame, t)
    }

    fn build(&self, frame: &Frame, t: usize) -> Result<FrameProblem, TrackerError> {
        let cfg = &self.cfg;
        let mm = MotionModel::for_target_size(cfg.target_size as f64);
        let nbs = if cfg.use_neighborhood {
            neighbor_sets(&self.states, &self.labels, cfg.target_size as f64)
        } else {
            Vec::new()
        };
        let mut candidates = Vec::with_capacity(self.states.len());
        let mut scores: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (i, s) in self.states.iter().enumerate() {
            let region = SearchRegion::for_target(s.position.round(), cfg.target_size as i32);
            let mut cands = dense_candidates(&region, cfg.stride, self.width, self.height)?;
            let mut raw = self.raw_scores(i, frame, &cands, &mm, &nbs)?;
            if let Some(pc) = &cfg.prune {
                let one = BlockLayout::new(vec![cands.len()])?;
                let mut map = vec![0.0; cands.len()];
                let enabled = [true, cfg.use_motion, cfg.use_neighborhood];
                for (r, on) in raw.iter().zip(enabled) {
                    if on {
                        for (m, v) in map.iter_mut().zip(normalize_scores(&one, r)) {
                            *m += v;
                        }
                    }
                }
                cands = prune_candidates(&cands, &map, pc, self.width, self.height)?;
                raw = self.raw_scores(i, frame, &cands, &mm, &nbs)?;
            }
            for (acc, r) in scores.iter_mut().zip(raw) {
                acc.extend(r);
            }
            candidates.push(cands);
        }
        let layout = BlockLayout::new(candidates.iter().map(Vec::len).collect())?;
        let [a, m, nm] = scores;
        let appearance = normalize_scores(&layout, &a);
        let lin = LinearCosts {
            appearance: appearance.iter().map(|v| -v).collect(),
            motion: scores_to_costs(&layout, &m),
            neighborhood: scores_to_costs(&layout, &nm),
            zeta: cfg.zeta,
            eta: cfg.eta,
        };
        let flat: Vec<Point> = candidates.iter().flatten().copied().collect();
        let mut quads = Vec::new();
        if cfg.use_proximity {
            let blocks: Vec<usize> = (0..layout.n_blocks()).flat_map(|j| core::iter::repeat_n(j, layout.block_size(j))).collect();
            let s = proximity_similarity(&flat, &blocks, cfg.sigma());
            quads.push(laplacianize(&s, cfg.proximity_mode, &layout)?);
        }
        if cfg.use_group && self.groups.edges().next().is_some() {
            let s = group_similarity(&candidates, &self.groups, cfg.sigma(), t)?;
            quads.push(laplacianize(&s, LaplacianMode::Attract, &layout)?);
        }
        let problem = build_problem(layout, lin, quads)?.with_pixels(flat)?;
        Ok(FrameProblem { problem, candidates, appearance })
    }

    /// Processes the next frame.
    pub fn step(&mut self, frame: &Frame, clock: &dyn Clock) -> Result<(Vec<Vec2>, FrameSummary), TrackerError> {
        if frame.width() != self.width || frame.height() != self.height {
            return Err(TrackerError::FrameSize {
                frame: self.frame_index + 1,
                w: self.width,
                h: self.height,
                got_w: frame.width(),
                got_h: frame.height(),
            });
        }
        let start = clock.now_us();
        let t = self.frame_index + 1;
        self.refresh_groups(t);
        let fp = self.build(frame, t)?;
        let res = fw_solve_with_clock(&fp.problem, &self.cfg.solver, None, clock)?;
        let layout = fp.problem.layout();
        let converged = res.converged || self.cfg.solver.variant == Variant::Exact;
        let patch = PatchSize::square(self.cfg.target_size);
        let mut out = Vec::with_capacity(self.states.len());
        for (i, s) in self.states.iter_mut().enumerate() {
            let local = res.rounded.chosen[i] as usize;
            let pos = if converged { fp.candidates[i][local].to_vec2() } else { s.position + s.velocity };
            s.advance(pos, self.cfg.velocity_window);
            out.push(pos);
            if converged && fp.appearance[layout.global(i, local)] >= self.cfg.update_threshold {
                let fresh = AppearanceModel::train(self.cfg.appearance, frame, pos.round(), patch, self.cfg.ridge)?;
                self.models[i] = self.models[i].blend(&fresh, self.cfg.learning_rate)?;
            }
        }
        self.frame_index = t;
        let summary = FrameSummary {
            frame: t,
            n_variables: fp.problem.len(),
            iterations: res.trace.iterations,
            final_objective: res.trace.final_objective,
            final_gap: res.trace.final_gap,
            converged,
            solve_time_us: res.trace.wall_time_us,
            frame_time_us: clock.now_us().saturating_sub(start),
            trace: self.cfg.keep_traces.then_some(res.trace),
        };
        Ok((out, summary))
    }
}

/// Tracks all targets through `frames`, starting from `init` at frame 0.
pub fn track_sequence(frames: &[Frame], init: &[Vec2], cfg: &TrackerConfig) -> Result<TrackOutput, TrackerError> {
    track_sequence_with_clock(frames, init, cfg, &NullClock)
}

pub fn track_sequence_with_clock(
    frames: &[Frame],
    init: &[Vec2],
    cfg: &TrackerConfig,
    clock: &dyn Clock,
) -> Result<TrackOutput, TrackerError> {
    let first = frames.first().ok_or(TrackerError::EmptySequence)?;
    let mut tracker = Tracker::new(first, init, cfg.clone())?;
    let mut tracks = TrackSet::new(vec![init.to_vec()]);
    let mut summaries = Vec::with_capacity(frames.len().saturating_sub(1));
    for f in &frames[1..] {
        let (pos, summary) = tracker.step(f, clock)?;
        tracks.positions.push(pos);
        tracks.coasted.push(!summary.converged);
        summaries.push(summary);
    }
    Ok(TrackOutput { tracks, summaries })
}

/// Like [`track_sequence`] but checks the initialisation against the
/// expected number of targets first.
pub fn track_sequence_checked(
    frames: &[Frame],
    init: &[Vec2],
    n_targets: usize,
    cfg: &TrackerConfig,
) -> Result<TrackOutput, TrackerError> {
    if init.len() != n_targets {
        return Err(TrackerError::MissingInit { expected: n_targets, got: init.len() });
    }
    track_sequence(frames, init, cfg)
}
