use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crowdtrack::bench::{bench_solvers, write_bench, BenchConfig};
use crowdtrack::clock::MonotonicClock;
use crowdtrack::config::ConfigFile;
use crowdtrack::formats::{align, read_generic, read_table, write_curve, write_ground_truth, write_traces, write_tracks};
use crowdtrack::plot::{plot_from_csv, render_svg};
use crowdtrack::ppm::{read_frames, write_frames};
use crowdtrack_core::appearance::AppearanceBackend;
use crowdtrack_core::candidates::PruneConfig;
use crowdtrack_core::metrics::accuracy_curve;
use crowdtrack_core::scene::{generate_scene, SceneConfig};
use crowdtrack_core::solver::Variant;
use crowdtrack_core::tracker::{track_sequence_with_clock, TrackerConfig};

#[derive(Parser)]
#[command(name = "crowdtrack", version, about = "Online dense-crowd tracking with Frank-Wolfe solved quadratic programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic crowd sequence (PPM frames + gt.csv)
    Synth(SynthArgs),
    /// Track targets through a frame directory
    Track(TrackArgs),
    /// Accuracy-vs-threshold curve of tracks against ground truth
    Eval(EvalArgs),
    /// Compare solver variants on synthetic frame problems
    Bench(BenchArgs),
    /// Render a curve or benchmark CSV as SVG
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    palette: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AppearanceArg {
    Ridge,
    Ncc,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Fw,
    Away,
    Swap,
    Exact,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_motion: bool,
    #[arg(long)]
    no_nmotion: bool,
    #[arg(long)]
    no_proximity: bool,
    #[arg(long)]
    no_group: bool,
    #[arg(long, value_enum)]
    appearance: Option<AppearanceArg>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, conflicts_with = "no_prune")]
    prune_m: Option<usize>,
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Target diameter in pixels
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    max_thresh: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(path: &Option<PathBuf>, known: &[&str]) -> Result<ConfigFile> {
    let Some(p) = path else { return Ok(ConfigFile::default()) };
    let c = ConfigFile::load(p)?;
    c.check_keys(known).with_context(|| format!("in {}", p.display()))?;
    Ok(c)
}

fn required(cli: Option<PathBuf>, file: &ConfigFile, key: &str) -> Result<PathBuf> {
    match cli.or(file.get::<PathBuf>(key)?) {
        Some(p) => Ok(p),
        None => bail!("--{key} is required (on the command line or in --config)"),
    }
}

fn flag(cli: bool, file: &ConfigFile, key: &str) -> Result<bool> {
    Ok(cli || file.get_bool(key)?.unwrap_or(false))
}

fn synth(a: SynthArgs) -> Result<()> {
    let f = load_config(&a.config, &["targets", "frames", "groups", "palette", "seed", "noise", "out"])?;
    let n = a.targets.or(f.get("targets")?).unwrap_or(100);
    let frames = a.frames.or(f.get("frames")?).unwrap_or(200);
    let groups = a.groups.or(f.get("groups")?).unwrap_or(4);
    let palette = a.palette.or(f.get("palette")?).unwrap_or(4);
    let seed = a.seed.or(f.get("seed")?).unwrap_or(0);
    let out = required(a.out, &f, "out")?;
    let mut cfg = SceneConfig::standard(n, frames, groups, palette, seed);
    if let Some(noise) = a.noise.or(f.get("noise")?) {
        cfg.noise_sigma = noise;
    }
    let scene = generate_scene(&cfg)?;
    write_frames(&out, &scene.frames)?;
    write_ground_truth(&out.join("gt.csv"), &scene.truth)?;
    eprintln!("wrote {} frames ({}x{}) and gt.csv to {}", frames, cfg.width, cfg.height, out.display());
    Ok(())
}

const TRACK_KEYS: &[&str] = &[
    "frames", "init", "out", "no-motion", "no-nmotion", "no-proximity", "no-group", "appearance", "solver", "eps", "prune-m",
    "no-prune", "zeta", "eta", "target-size", "trace",
];

fn track(a: TrackArgs) -> Result<()> {
    let f = load_config(&a.config, TRACK_KEYS)?;
    let frames_dir = required(a.frames, &f, "frames")?;
    let init_path = required(a.init, &f, "init")?;
    let out = required(a.out, &f, "out")?;
    let trace = a.trace.or(f.get("trace")?);
    let target_size = a.target_size.or(f.get("target-size")?).unwrap_or(7);
    let mut cfg = TrackerConfig::full(target_size);
    cfg.use_motion = !flag(a.no_motion, &f, "no-motion")?;
    cfg.use_neighborhood = !flag(a.no_nmotion, &f, "no-nmotion")?;
    cfg.use_proximity = !flag(a.no_proximity, &f, "no-proximity")?;
    cfg.use_group = !flag(a.no_group, &f, "no-group")?;
    let appearance = match a.appearance {
        Some(x) => x,
        None => match f.get::<String>("appearance")?.as_deref() {
            None | Some("ridge") => AppearanceArg::Ridge,
            Some("ncc") => AppearanceArg::Ncc,
            Some(o) => bail!("appearance must be ridge or ncc, got {o:?}"),
        },
    };
    cfg.appearance = match appearance {
        AppearanceArg::Ridge => AppearanceBackend::Ridge,
        AppearanceArg::Ncc => AppearanceBackend::Ncc,
    };
    let solver = match a.solver {
        Some(x) => x,
        None => match f.get::<String>("solver")?.as_deref() {
            None | Some("swap") => SolverArg::Swap,
            Some("fw") => SolverArg::Fw,
            Some("away") => SolverArg::Away,
            Some("exact") => SolverArg::Exact,
            Some(o) => bail!("solver must be fw, away, swap or exact, got {o:?}"),
        },
    };
    cfg.solver.variant = match solver {
        SolverArg::Fw => Variant::Fw,
        SolverArg::Away => Variant::FwAway,
        SolverArg::Swap => Variant::FwSwap,
        SolverArg::Exact => Variant::Exact,
    };
    if let Some(eps) = a.eps.or(f.get("eps")?) {
        cfg.solver.epsilon = eps;
    }
    if let Some(z) = a.zeta.or(f.get("zeta")?) {
        cfg.zeta = z;
    }
    if let Some(e) = a.eta.or(f.get("eta")?) {
        cfg.eta = e;
    }
    let prune_m = a.prune_m.or(f.get("prune-m")?);
    cfg.prune = if a.no_prune || (prune_m.is_none() && f.get_bool("no-prune")?.unwrap_or(false)) {
        None
    } else {
        Some(PruneConfig { m: prune_m.unwrap_or(3), ..PruneConfig::default() })
    };
    if trace.is_some() {
        cfg.keep_traces = true;
        cfg.solver.record_iterations = true;
    }

    let frames = read_frames(&frames_dir)?;
    let table = read_table(&init_path)?;
    let first = table.frame(0);
    if first.is_empty() {
        bail!("{} has no rows for frame 0", init_path.display());
    }
    let ids: Vec<u64> = first.iter().map(|r| r.0).collect();
    let init: Vec<_> = first.iter().map(|r| r.1).collect();
    let clock = MonotonicClock::new();
    let res = track_sequence_with_clock(&frames, &init, &cfg, &clock)?;
    write_tracks(&out, &ids, &res.tracks)?;
    if let Some(t) = trace {
        write_traces(&t, res.summaries.iter().filter_map(|s| s.trace.as_ref()))?;
    }
    let coasted = res.tracks.coasted.iter().filter(|c| **c).count();
    let total_ms: f64 = res.summaries.iter().map(|s| s.frame_time_us as f64 / 1000.0).sum();
    eprintln!(
        "tracked {} targets over {} frames in {:.1} s ({} frames coasted)",
        ids.len(),
        frames.len(),
        total_ms / 1000.0,
        coasted
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let f = load_config(&a.config, &["tracks", "gt", "max-thresh", "out"])?;
    let tracks = read_table(&required(a.tracks, &f, "tracks")?)?;
    let gt = read_table(&required(a.gt, &f, "gt")?)?;
    let max = a.max_thresh.or(f.get("max-thresh")?).unwrap_or(50);
    let out = required(a.out, &f, "out")?;
    let (ts, truth) = align(&tracks, &gt)?;
    let curve = accuracy_curve(&ts, &truth, max)?;
    write_curve(&out, &curve)?;
    if let Some(a15) = curve.at(15) {
        println!("accuracy@15px {a15:.4}");
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let f = load_config(&a.config, &["sizes", "seeds", "eps", "candidates", "out"])?;
    let mut cfg = BenchConfig::default();
    if let Some(s) = a.sizes {
        cfg.sizes = s;
    } else if let Some(s) = f.get::<String>("sizes")? {
        cfg.sizes = s.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>().context("sizes")?;
    }
    if let Some(s) = a.seeds.or(f.get("seeds")?) {
        cfg.seeds = s;
    }
    if let Some(e) = a.eps.or(f.get("eps")?) {
        cfg.epsilon = e;
    }
    if let Some(k) = a.candidates.or(f.get("candidates")?) {
        cfg.candidates_per_target = k;
    }
    let out = required(a.out, &f, "out")?;
    let rows = bench_solvers(&cfg)?;
    write_bench(&out, &rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let f = load_config(&a.config, &["in", "out"])?;
    let input = required(a.input, &f, "in")?;
    let out = required(a.out, &f, "out")?;
    let (headers, rows) = read_generic(&input)?;
    let p = plot_from_csv(&headers, &rows).map_err(anyhow::Error::msg).with_context(|| input.display().to_string())?;
    write_file(&out, &render_svg(&p))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Track(a) => track(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Plot(a) => plot(a),
    }
}
