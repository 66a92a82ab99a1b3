//! Synthetic crowd sequences with ground truth.
//!
//! Targets are small anti-aliased disks drawn from a small colour palette
//! over a static textured background plus per-frame pixel noise. Targets
//! move in groups that share a base velocity; group directions are spread
//! evenly around the circle so some groups walk against each other.
//! Groups bounce off the frame borders as a whole.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::raster::Frame;

/// Placement attempts before a scene is declared too dense.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("could not place {n_targets} targets without overlap after {MAX_PLACEMENT_ATTEMPTS} attempts")]
    TooDense { n_targets: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_targets: usize,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub target_radius: usize,
    pub n_groups: usize,
    pub palette_size: usize,
    /// Group speeds are drawn uniformly from this range (pixels/frame).
    pub speed_range: (f64, f64),
    /// Per-frame Gaussian pixel noise (0-255 scale).
    pub noise_sigma: f64,
    /// Per-frame velocity jitter of each member around its group velocity.
    pub jitter_sigma: f64,
    /// Minimum centre distance at placement; `None` means two target diameters.
    pub min_spacing: Option<f64>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::standard(100, 200, 4, 4, 0)
    }
}

impl SceneConfig {
    /// Frame size scales with the target count (about 1200 px^2 per target, 4:3).
    pub fn standard(n_targets: usize, n_frames: usize, n_groups: usize, palette_size: usize, seed: u64) -> Self {
        let area = (n_targets.max(1) as f64) * 1200.0;
        let height = libm::ceil(libm::sqrt(area * 3.0 / 4.0)).max(48.0) as usize;
        let width = (height * 4).div_ceil(3);
        Self {
            n_targets,
            n_frames,
            width,
            height,
            target_radius: 3,
            n_groups,
            palette_size,
            speed_range: (0.8, 1.6),
            noise_sigma: 12.0,
            jitter_sigma: 0.2,
            min_spacing: None,
            seed,
        }
    }

    /// Diameter of a rendered target in pixels.
    pub fn target_size(&self) -> usize {
        2 * self.target_radius + 1
    }

    pub fn spacing(&self) -> f64 {
        self.min_spacing.unwrap_or(2.0 * self.target_size() as f64)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.n_targets == 0 || self.n_frames == 0 || self.n_groups == 0 || self.palette_size == 0 {
            return Err(SceneError::InvalidConfig("counts must be at least 1"));
        }
        if self.target_radius < 1 {
            return Err(SceneError::InvalidConfig("target radius must be at least 1"));
        }
        let margin = 2 * self.target_radius + 2;
        if self.width <= margin || self.height <= margin {
            return Err(SceneError::InvalidConfig("frame too small for the target radius"));
        }
        let (lo, hi) = self.speed_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(SceneError::InvalidConfig("speed range must satisfy 0 <= lo <= hi"));
        }
        if !(self.noise_sigma >= 0.0 && self.jitter_sigma >= 0.0) {
            return Err(SceneError::InvalidConfig("noise levels must be non-negative"));
        }
        Ok(())
    }
}

/// Positions of every target in every frame plus its planted group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `positions[frame][target]`
    pub positions: Vec<Vec<Vec2>>,
    pub groups: Vec<usize>,
}

impl GroundTruth {
    pub fn n_frames(&self) -> usize {
        self.positions.len()
    }

    pub fn n_targets(&self) -> usize {
        self.groups.len()
    }

    /// Per-target trajectories, oldest first, up to and including `frame`.
    pub fn histories_until(&self, frame: usize) -> Vec<Vec<Vec2>> {
        (0..self.n_targets()).map(|i| self.positions[..=frame].iter().map(|f| f[i]).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
    pub colors: Vec<[u8; 3]>,
    pub config: SceneConfig,
}

const BASE_PALETTE: [[u8; 3]; 8] = [
    [220, 40, 40],
    [40, 190, 60],
    [50, 80, 225],
    [235, 215, 50],
    [200, 60, 200],
    [50, 200, 215],
    [245, 140, 30],
    [240, 240, 240],
];

/// First `n` palette colours; beyond the base palette, hues are spread evenly.
pub fn palette(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|i| {
            if i < BASE_PALETTE.len() {
                BASE_PALETTE[i]
            } else {
                let h = (i as f64 * 0.618_033_988_75) % 1.0 * 6.0;
                let x = 1.0 - libm::fabs(h % 2.0 - 1.0);
                let (r, g, b) = match h as u32 {
                    0 => (1.0, x, 0.0),
                    1 => (x, 1.0, 0.0),
                    2 => (0.0, 1.0, x),
                    3 => (0.0, x, 1.0),
                    4 => (x, 0.0, 1.0),
                    _ => (1.0, 0.0, x),
                };
                [(40.0 + 200.0 * r) as u8, (40.0 + 200.0 * g) as u8, (40.0 + 200.0 * b) as u8]
            }
        })
        .collect()
}

/// Static textured background shared by all frames of a scene.
#[derive(Debug, Clone)]
pub struct Renderer {
    width: usize,
    height: usize,
    radius: f64,
    noise_sigma: f64,
    seed: u64,
    background: Vec<f64>,
}

impl Renderer {
    pub fn new(cfg: &SceneConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6261_636b_6772_6e64);
        let waves: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                let ang = rng.random::<f64>() * 2.0 * PI;
                let freq = 0.05 + 0.15 * rng.random::<f64>();
                (libm::cos(ang) * freq, libm::sin(ang) * freq, rng.random::<f64>() * 2.0 * PI, 8.0 + 8.0 * rng.random::<f64>())
            })
            .collect();
        let tint = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let mut background = Vec::with_capacity(cfg.width * cfg.height * 3);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let mut v = 110.0;
                for &(fx, fy, ph, amp) in &waves {
                    v += amp * libm::sin(fx * x as f64 + fy * y as f64 + ph);
                }
                let grain = rng.random_range(-12.0..12.0);
                for t in tint {
                    background.push(v + grain + t);
                }
            }
        }
        Self {
            width: cfg.width,
            height: cfg.height,
            radius: cfg.target_radius as f64,
            noise_sigma: cfg.noise_sigma,
            seed: cfg.seed,
            background,
        }
    }

    /// Draws the targets in order (later ones on top) and adds the frame's noise.
    pub fn render(&self, targets: &[(Vec2, [u8; 3])], frame_index: usize) -> Frame {
        let mut buf = self.background.clone();
        let r = self.radius;
        for &(p, color) in targets {
            let x0 = libm::floor(p.x - r - 1.0).max(0.0) as usize;
            let y0 = libm::floor(p.y - r - 1.0).max(0.0) as usize;
            let x1 = (libm::ceil(p.x + r + 1.0) as usize).min(self.width.saturating_sub(1));
            let y1 = (libm::ceil(p.y + r + 1.0) as usize).min(self.height.saturating_sub(1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = libm::hypot(x as f64 - p.x, y as f64 - p.y);
                    let cover = (r + 0.5 - d).clamp(0.0, 1.0);
                    if cover > 0.0 {
                        let i = (y * self.width + x) * 3;
                        for c in 0..3 {
                            buf[i + c] = (1.0 - cover) * buf[i + c] + cover * color[c] as f64;
                        }
                    }
                }
            }
        }
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ frame_index as u64);
            let normal = Normal::new(0.0, self.noise_sigma).unwrap();
            for v in buf.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        let data = buf.into_iter().map(|v| libm::round(v).clamp(0.0, 255.0) as u8).collect();
        Frame::from_raw(self.width, self.height, data).unwrap()
    }
}

/// One-off rendering of a single frame (builds the background each call).
pub fn render_frame(targets: &[(Vec2, [u8; 3])], cfg: &SceneConfig, frame_index: usize) -> Frame {
    Renderer::new(cfg).render(targets, frame_index)
}

/// Simulates and renders a full sequence. Deterministic per configuration.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, SceneError> {
    cfg.validate()?;
    let truth = simulate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x636f_6c6f_7273);
    let pal = palette(cfg.palette_size);
    let colors: Vec<[u8; 3]> = (0..cfg.n_targets).map(|_| pal[rng.random_range(0..pal.len())]).collect();
    Ok(render_scene(cfg, truth, colors))
}

/// Renders given trajectories and colours with the scene's background and noise.
pub fn render_scene(cfg: &SceneConfig, truth: GroundTruth, colors: Vec<[u8; 3]>) -> Scene {
    let renderer = Renderer::new(cfg);
    let frames = truth
        .positions
        .iter()
        .enumerate()
        .map(|(t, pos)| {
            let targets: Vec<(Vec2, [u8; 3])> = pos.iter().copied().zip(colors.iter().copied()).collect();
            renderer.render(&targets, t)
        })
        .collect();
    Scene { frames, truth, colors, config: cfg.clone() }
}

/// Two identical targets walking side by side, `gap` pixels apart
/// vertically, with small independent jitter.
pub fn two_similar_targets(seed: u64, n_frames: usize, gap: f64) -> Scene {
    let cfg = SceneConfig {
        n_targets: 2,
        n_frames,
        width: 60 + n_frames,
        height: 48,
        n_groups: 1,
        palette_size: 1,
        speed_range: (1.0, 1.0),
        min_spacing: Some(gap),
        seed,
        ..SceneConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, cfg.jitter_sigma).unwrap();
    let cy = cfg.height as f64 / 2.0;
    let mut pos = [Vec2::new(20.0, cy - gap / 2.0), Vec2::new(20.0, cy + gap / 2.0)];
    let mut positions = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        positions.push(pos.to_vec());
        for p in pos.iter_mut() {
            *p = *p + Vec2::new(1.0 + jitter.sample(&mut rng), jitter.sample(&mut rng));
        }
    }
    let color = palette(1)[0];
    render_scene(&cfg, GroundTruth { positions, groups: vec![0, 0] }, vec![color; 2])
}

/// Motion only, without rendering.
pub fn simulate(cfg: &SceneConfig) -> Result<GroundTruth, SceneError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_targets;
    let g = cfg.n_groups.min(n);
    let groups: Vec<usize> = (0..n).map(|i| i * g / n).collect();
    let r = cfg.target_radius as f64;
    let margin = r + 1.0;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let spacing = cfg.spacing();

    let mut positions: Vec<Vec2> = Vec::with_capacity(n);
    let mut attempts = 0;
    for gi in 0..g {
        let members = groups.iter().filter(|&&x| x == gi).count();
        let first = positions.len();
        let spread = 0.75 * spacing * libm::sqrt(members as f64);
        let cx = rng.random_range(margin + spread.min(w / 2.0 - margin)..=w - margin - spread.min(w / 2.0 - margin));
        let cy = rng.random_range(margin + spread.min(h / 2.0 - margin)..=h - margin - spread.min(h / 2.0 - margin));
        while positions.len() < first + members {
            attempts += 1;
            if attempts > MAX_PLACEMENT_ATTEMPTS {
                return Err(SceneError::TooDense { n_targets: n });
            }
            // each member goes next to an earlier member of its group, so
            // every group stays one connected formation
            let p = if positions.len() == first {
                let rad = spread * libm::sqrt(rng.random::<f64>());
                let ang = rng.random::<f64>() * 2.0 * PI;
                Vec2::new(cx + rad * libm::cos(ang), cy + rad * libm::sin(ang))
            } else {
                let anchor = positions[rng.random_range(first..positions.len())];
                let rad = spacing * rng.random_range(1.0..1.5);
                let ang = rng.random::<f64>() * 2.0 * PI;
                anchor + Vec2::new(rad * libm::cos(ang), rad * libm::sin(ang))
            };
            if p.x < margin || p.y < margin || p.x > w - 1.0 - margin || p.y > h - 1.0 - margin {
                continue;
            }
            if positions.iter().all(|q| q.dist(p) >= spacing) {
                positions.push(p);
            }
        }
    }

    let theta0 = rng.random::<f64>() * 2.0 * PI;
    let mut base: Vec<Vec2> = (0..g)
        .map(|gi| {
            let speed = if cfg.speed_range.1 > cfg.speed_range.0 {
                rng.random_range(cfg.speed_range.0..cfg.speed_range.1)
            } else {
                cfg.speed_range.0
            };
            let th = theta0 + 2.0 * PI * gi as f64 / g as f64;
            Vec2::new(speed * libm::cos(th), speed * libm::sin(th))
        })
        .collect();
    let jitter = (cfg.jitter_sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter_sigma).unwrap());

    let mut all = Vec::with_capacity(cfg.n_frames);
    all.push(positions.clone());
    for _ in 1..cfg.n_frames {
        for (gi, b) in base.iter_mut().enumerate() {
            let members = || positions.iter().zip(&groups).filter(move |(_, &x)| x == gi).map(|(p, _)| *p);
            if members().any(|p| p.x + b.x < margin || p.x + b.x > w - 1.0 - margin) {
                b.x = -b.x;
            }
            if members().any(|p| p.y + b.y < margin || p.y + b.y > h - 1.0 - margin) {
                b.y = -b.y;
            }
        }
        for (p, &gi) in positions.iter_mut().zip(&groups) {
            let mut v = base[gi];
            if let Some(j) = &jitter {
                v = v + Vec2::new(j.sample(&mut rng), j.sample(&mut rng));
            }
            let q = *p + v;
            *p = Vec2::new(q.x.clamp(margin, w - 1.0 - margin), q.y.clamp(margin, h - 1.0 - margin));
        }
        all.push(positions.clone());
    }
    Ok(GroundTruth { positions: all, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_single_target_scene_is_constant() {
        let cfg = SceneConfig {
            n_targets: 1,
            n_frames: 5,
            width: 40,
            height: 30,
            n_groups: 1,
            palette_size: 1,
            speed_range: (0.0, 0.0),
            noise_sigma: 0.0,
            jitter_sigma: 0.0,
            ..SceneConfig::default()
        };
        let s = generate_scene(&cfg).unwrap();
        assert!(s.frames.windows(2).all(|w| w[0] == w[1]));
        assert!(s.truth.positions.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn centred_disk_has_target_colour() {
        let cfg = SceneConfig { width: 21, height: 21, noise_sigma: 0.0, ..SceneConfig::default() };
        let f = render_frame(&[(Vec2::new(10.0, 10.0), [200, 10, 30])], &cfg, 0);
        assert_eq!(f.pixel(10, 10), [200, 10, 30]);
        let empty = render_frame(&[], &cfg, 0);
        let again = render_frame(&[], &cfg, 0);
        assert_eq!(empty, again);
        assert_ne!(f, empty);
    }

    #[test]
    fn later_targets_draw_on_top() {
        let cfg = SceneConfig { width: 21, height: 21, noise_sigma: 0.0, ..SceneConfig::default() };
        let f = render_frame(&[(Vec2::new(10.0, 10.0), [200, 0, 0]), (Vec2::new(11.0, 10.0), [0, 0, 200])], &cfg, 0);
        assert_eq!(f.pixel(10, 10), [0, 0, 200]);
        assert_eq!(f.pixel(11, 10), [0, 0, 200]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = SceneConfig { n_targets: 0, ..SceneConfig::default() };
        assert!(generate_scene(&cfg).is_err());
        let crowded = SceneConfig { n_targets: 400, width: 60, height: 60, n_frames: 1, ..SceneConfig::default() };
        assert_eq!(simulate(&crowded), Err(SceneError::TooDense { n_targets: 400 }));
    }
}
