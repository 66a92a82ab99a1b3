//! Acceptance checks. Each test prints one `PASS`/`FAIL` line and then
//! asserts. Tests run one at a time so the timing checks are not contended.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use crowdtrack::bench::{bench_solvers, BenchConfig};
use crowdtrack::clock::MonotonicClock;
use crowdtrack::core::geometry::Vec2;
use crowdtrack::core::instances::{frame_instance, random_instance, FrameInstanceConfig};
use crowdtrack::core::metrics::{accuracy_curve, identity_switches};
use crowdtrack::core::motion::{build_group_mst, coherent_groups, CoherenceParams};
use crowdtrack::core::qp::BlockLayout;
use crowdtrack::core::scene::{generate_scene, simulate, two_similar_targets, Scene, SceneConfig};
use crowdtrack::core::solver::{brute_force_solve, fw_solve, fw_solve_with_clock, round_solution, SolverConfig, Variant};
use crowdtrack::core::tracker::{track_sequence, track_sequence_with_clock, TrackOutput, TrackerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    // written to the raw handle so the line shows without --nocapture
    let line = format!(
        "criterion {id:>2} {name}: {} ({detail}; {:.2?} of {:.0?} budget)\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed,
        budget
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    ok
}

const TARGET_SIZE: usize = 7;

fn standard_scene() -> &'static Scene {
    static SCENE: OnceLock<Scene> = OnceLock::new();
    SCENE.get_or_init(|| generate_scene(&SceneConfig::standard(100, 200, 4, 4, 0)).unwrap())
}

fn run_timed(scene: &Scene, cfg: &TrackerConfig) -> TrackOutput {
    track_sequence_with_clock(&scene.frames, &scene.truth.positions[0], cfg, &MonotonicClock::new()).unwrap()
}

fn acc15(scene: &Scene, out: &TrackOutput) -> f64 {
    accuracy_curve(&out.tracks, &scene.truth, 15).unwrap().at(15).unwrap()
}

/// The pruned full-config run is shared by the ablation and speed-up checks.
fn full_pruned_run() -> &'static (TrackOutput, Duration) {
    static RUN: OnceLock<(TrackOutput, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let out = run_timed(standard_scene(), &TrackerConfig::full(TARGET_SIZE));
        (out, start.elapsed())
    })
}

#[test]
fn c01_gradient_matches_finite_differences() {
    let _g = serial();
    let start = Instant::now();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let n = 1 + seed as usize % 10;
        let p = random_instance(seed, n, 8, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x: Vec<f64> = (0..p.len()).map(|_| rng.random::<f64>()).collect();
        let g = p.gradient(&x).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.objective(&xp).unwrap() - p.objective(&xm).unwrap()) / (2.0 * h);
            num += (fd - g[i]).powi(2);
            den += g[i].powi(2);
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-12));
    }
    let ok = report(
        1,
        "gradient vs central differences",
        worst <= 1e-6,
        format!("worst relative error {worst:.2e} over 50 problems"),
        start.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}

#[test]
fn c02_relaxation_bound_and_rounding_against_enumeration() {
    let _g = serial();
    let start = Instant::now();
    let cfg = SolverConfig { epsilon: 1e-12, max_iterations: 200_000, record_iterations: false, ..SolverConfig::default() };
    let total = 200;
    let mut bound_ok = 0;
    let mut agree = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..total as u64 {
        let n = 2 + seed as usize % 4;
        let k = 2 + (seed as usize / 4) % 3;
        let p = frame_instance(seed, &FrameInstanceConfig::new(n, k));
        let r = fw_solve(&p, &cfg, None).unwrap();
        let (_, best) = brute_force_solve(&p, false).unwrap();
        let relaxed = p.objective(&r.fractional.x).unwrap();
        worst_excess = worst_excess.max(relaxed - best);
        if relaxed <= best + 1e-8 {
            bound_ok += 1;
        }
        if (p.assignment_objective(&r.rounded) - best).abs() <= 1e-9 {
            agree += 1;
        }
    }
    let rate = agree as f64 / total as f64;
    let ok = report(
        2,
        "relaxation bound and rounding",
        bound_ok == total && rate >= 0.90,
        format!(
            "bound holds {bound_ok}/{total} (worst f_relaxed - f_opt {worst_excess:.2e}); rounding optimal {agree}/{total} = {:.1}%",
            100.0 * rate
        ),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

#[test]
fn c03_monotone_descent_and_certificates() {
    let _g = serial();
    let start = Instant::now();
    let rows = bench_solvers(&BenchConfig { keep_traces: true, ..BenchConfig::default() }).unwrap();
    let eps = BenchConfig::default().epsilon;
    let mut solves = 0;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut bad_cert = 0;
    for row in &rows {
        let Some(trace) = &row.trace else { continue };
        solves += 1;
        let mut objs: Vec<f64> = trace.records.iter().map(|r| r.objective).collect();
        objs.push(trace.final_objective);
        for w in objs.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        if row.converged && !(trace.final_gap <= eps) {
            bad_cert += 1;
        }
    }
    let ok = report(
        3,
        "monotone descent and gap certificates",
        worst_rise <= 1e-10 && bad_cert == 0 && solves > 0,
        format!("{solves} solves; largest step increase {worst_rise:.2e}; converged with gap > eps: {bad_cert}"),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}

#[test]
fn c04_variant_iteration_ordering() {
    let _g = serial();
    let start = Instant::now();
    let seeds = 30u64;
    let cap = 50_000;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [25usize, 50, 100] {
        let mut sum = [0usize; 3];
        let mut capped = [0usize; 3];
        for seed in 0..seeds {
            let p = frame_instance(seed, &FrameInstanceConfig::new(n, 30));
            for (vi, v) in Variant::ITERATIVE.into_iter().enumerate() {
                let cfg = SolverConfig { variant: v, epsilon: 1e-4, max_iterations: cap, record_iterations: false, ..SolverConfig::default() };
                let r = fw_solve(&p, &cfg, None).unwrap();
                sum[vi] += r.trace.iterations;
                capped[vi] += usize::from(!r.converged);
            }
        }
        let mean = sum.map(|s| s as f64 / seeds as f64);
        // A capped run's true count is at least the cap, so a capped slower
        // variant cannot invert the ordering; a capped faster one can.
        let ordered = mean[2] <= mean[1] && mean[1] <= mean[0] && capped[1] == 0 && capped[2] == 0;
        pass &= ordered;
        parts.push(format!(
            "n={n}: fw {:.0}{} fw_away {:.0} fw_swap {:.0}",
            mean[0],
            if capped[0] > 0 { format!(" ({} capped at {cap})", capped[0]) } else { String::new() },
            mean[1],
            mean[2]
        ));
    }
    let ok = report(4, "variant ordering", pass, parts.join("; "), start.elapsed(), Duration::from_secs(300));
    assert!(ok);
}

#[test]
fn c05_scale_single_frame() {
    let _g = serial();
    let start = Instant::now();
    let clock = MonotonicClock::new();
    let cfg = SolverConfig { variant: Variant::FwSwap, epsilon: 0.01, record_iterations: false, ..SolverConfig::default() };
    let mut slowest = Duration::ZERO;
    let mut all_converged = true;
    let mut vars = 0;
    for seed in 0..3u64 {
        let p = frame_instance(seed, &FrameInstanceConfig::new(200, 30));
        vars = p.len();
        let t = Instant::now();
        let r = fw_solve_with_clock(&p, &cfg, None, &clock).unwrap();
        slowest = slowest.max(t.elapsed());
        all_converged &= r.converged;
    }
    let ok = report(
        5,
        "fw_swap at l=6000",
        vars == 6000 && all_converged && slowest <= Duration::from_secs(2),
        format!("slowest of 3 solves {slowest:.2?}, all converged: {all_converged}"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

#[test]
fn c06_ablation_trend() {
    let _g = serial();
    let start = Instant::now();
    let scene = standard_scene();
    let b = acc15(scene, &track_sequence(&scene.frames, &scene.truth.positions[0], &TrackerConfig::appearance_only(TARGET_SIZE)).unwrap());
    let bmo = acc15(scene, &track_sequence(&scene.frames, &scene.truth.positions[0], &TrackerConfig::with_motion(TARGET_SIZE)).unwrap());
    let full = acc15(scene, &full_pruned_run().0);
    let ok = report(
        6,
        "ablation trend",
        full >= bmo && bmo >= b && (full - b) * 100.0 >= 3.0,
        format!("acc@15px B {:.2}%, B+Mo {:.2}%, full {:.2}%", 100.0 * b, 100.0 * bmo, 100.0 * full),
        start.elapsed(),
        Duration::from_secs(600),
    );
    assert!(ok);
}

#[test]
fn c07_proximity_prevents_swaps() {
    let _g = serial();
    let start = Instant::now();
    let scene = two_similar_targets(0, 80, 7.0);
    let swaps = |cfg: TrackerConfig| {
        let out = track_sequence(&scene.frames, &scene.truth.positions[0], &cfg).unwrap();
        identity_switches(&out.tracks, &scene.truth, 3.5).unwrap()
    };
    let with = swaps(TrackerConfig::full(TARGET_SIZE));
    let without = swaps(TrackerConfig { use_proximity: false, ..TrackerConfig::full(TARGET_SIZE) });
    let ok = report(
        7,
        "proximity term",
        with == 0 && with <= without,
        format!("identity swaps with proximity {with}, without {without}"),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

#[test]
fn c08_pruning_speedup() {
    let _g = serial();
    let start = Instant::now();
    let scene = standard_scene();
    let (pruned, _) = full_pruned_run();
    let dense = run_timed(scene, &TrackerConfig { prune: None, ..TrackerConfig::full(TARGET_SIZE) });
    let vars = |o: &TrackOutput| o.summaries.iter().map(|s| s.n_variables).sum::<usize>() as f64;
    let per_frame = |o: &TrackOutput| o.summaries.iter().map(|s| s.frame_time_us).sum::<u64>() as f64 / o.summaries.len() as f64;
    let reduction = vars(&dense) / vars(pruned);
    let speedup = per_frame(&dense) / per_frame(pruned);
    let (ap, ad) = (acc15(scene, pruned), acc15(scene, &dense));
    let delta = (ap - ad).abs() * 100.0;
    let ok = report(
        8,
        "candidate pruning",
        reduction >= 5.0 && delta <= 1.0 && speedup >= 3.0,
        format!(
            "variables reduced {reduction:.1}x; acc@15px pruned {:.2}% vs dense {:.2}% (|delta| {delta:.2} pts); per-frame speed-up {speedup:.1}x",
            100.0 * ap,
            100.0 * ad
        ),
        start.elapsed(),
        Duration::from_secs(900),
    );
    assert!(ok);
}

fn dist2(x: &[f64], layout: &BlockLayout, chosen: &[u32]) -> f64 {
    let mut v = x.iter().map(|a| a * a).sum::<f64>();
    for (j, &c) in chosen.iter().enumerate() {
        let i = layout.global(j, c as usize);
        v += 1.0 - 2.0 * x[i];
    }
    v
}

#[test]
fn c09_rounding_is_nearest_vertex() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let total = 500;
    let mut hits = 0;
    for _ in 0..total {
        let n = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
        let layout = BlockLayout::new(sizes.clone()).unwrap();
        let mut x = vec![0.0; layout.len()];
        for j in 0..n {
            let r = layout.range(j);
            let w: Vec<f64> = r.clone().map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            for (xi, wi) in x[r].iter_mut().zip(&w) {
                *xi = wi / s;
            }
        }
        // enumerate every binary feasible point, Euclidean distance computed directly
        let mut best = f64::INFINITY;
        let mut chosen = vec![0u32; n];
        loop {
            let mut v = vec![0.0; layout.len()];
            for (j, &c) in chosen.iter().enumerate() {
                v[layout.global(j, c as usize)] = 1.0;
            }
            best = best.min(x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
            let mut j = 0;
            while j < n {
                chosen[j] += 1;
                if (chosen[j] as usize) < sizes[j] {
                    break;
                }
                chosen[j] = 0;
                j += 1;
            }
            if j == n {
                break;
            }
        }
        let a = round_solution(&layout, &x);
        if a.is_valid(&layout) && dist2(&x, &layout, &a.chosen) <= best + 1e-12 {
            hits += 1;
        }
    }
    let ok = report(
        9,
        "rounding is the nearest binary point",
        hits == total,
        format!("{hits}/{total} nearest"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            pairs += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    if pairs == 0 {
        1.0
    } else {
        agree as f64 / pairs as f64
    }
}

/// Minimum spanning tree weight over all `m^(m-2)` labelled trees (Prüfer codes).
fn enumerated_mst_weight(pts: &[Vec2]) -> f64 {
    let m = pts.len();
    if m < 2 {
        return 0.0;
    }
    if m == 2 {
        return pts[0].dist(pts[1]);
    }
    let mut code = vec![0usize; m - 2];
    let mut best = f64::INFINITY;
    loop {
        let mut degree = vec![1usize; m];
        for &c in &code {
            degree[c] += 1;
        }
        let mut w = 0.0;
        for &c in &code {
            let leaf = (0..m).find(|&i| degree[i] == 1).unwrap();
            w += pts[leaf].dist(pts[c]);
            degree[leaf] -= 1;
            degree[c] -= 1;
        }
        let rest: Vec<usize> = (0..m).filter(|&i| degree[i] == 1).collect();
        w += pts[rest[0]].dist(pts[rest[1]]);
        best = best.min(w);
        let mut j = 0;
        while j < code.len() {
            code[j] += 1;
            if code[j] < m {
                break;
            }
            code[j] = 0;
            j += 1;
        }
        if j == code.len() {
            return best;
        }
    }
}

#[test]
fn c10_group_recovery_and_mst() {
    let _g = serial();
    let start = Instant::now();
    let params = CoherenceParams::for_target_size(TARGET_SIZE as f64);
    let mut perfect = 0;
    let mut worst_ri: f64 = 1.0;
    for seed in 0..20u64 {
        let cfg = SceneConfig { jitter_sigma: 0.0, ..SceneConfig::standard(100, params.window + 1, 4, 4, seed) };
        let gt = simulate(&cfg).unwrap();
        let labels = coherent_groups(&gt.histories_until(params.window), &params);
        let ri = rand_index(&labels, &gt.groups);
        worst_ri = worst_ri.min(ri);
        if ri == 1.0 {
            perfect += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mst_ok = 0;
    let mut mst_total = 0;
    for m in 1..=8usize {
        for _ in 0..5 {
            let pts: Vec<Vec2> = (0..m).map(|_| Vec2::new(rng.random_range(0.0..60.0), rng.random_range(0.0..60.0))).collect();
            let ids: Vec<usize> = (0..m).map(|i| 3 * i + 1).collect();
            let tree = build_group_mst(&ids, &pts);
            let w: f64 = tree.iter().map(|e| e.rest_length).sum();
            mst_total += 1;
            if tree.len() + 1 == m.max(1) && (w - enumerated_mst_weight(&pts)).abs() <= 1e-9 {
                mst_ok += 1;
            }
        }
    }
    let ok = report(
        10,
        "group recovery and spanning trees",
        perfect == 20 && mst_ok == mst_total,
        format!("Rand index 1 on {perfect}/20 seeds (worst {worst_ri:.4}); MST weight optimal {mst_ok}/{mst_total}"),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}
