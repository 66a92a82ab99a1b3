//! Self-contained SVG line plots.

use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Builds a plot from CSV headers and rows. Benchmark files (with `size`,
/// `variant` and `wall_time_us` columns) plot mean wall time per variant
/// against size; anything else plots every numeric column against the first.
pub fn plot_from_csv(headers: &[String], rows: &[Vec<String>]) -> Result<Plot, String> {
    let col = |n: &str| headers.iter().position(|h| h == n);
    if let (Some(cs), Some(cv), Some(ct)) = (col("size"), col("variant"), col("wall_time_us")) {
        let mut acc: BTreeMap<String, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
        for r in rows {
            let size: u64 = r[cs].parse().map_err(|_| format!("bad size {:?}", r[cs]))?;
            let t: f64 = r[ct].parse().map_err(|_| format!("bad time {:?}", r[ct]))?;
            let e = acc.entry(r[cv].clone()).or_default().entry(size).or_insert((0.0, 0));
            e.0 += t / 1000.0;
            e.1 += 1;
        }
        let series = acc
            .into_iter()
            .map(|(name, pts)| Series { name, points: pts.into_iter().map(|(s, (t, n))| (s as f64, t / n as f64)).collect() })
            .collect();
        return Ok(Plot { title: "solver run time".into(), x_label: "targets".into(), y_label: "mean wall time (ms)".into(), series });
    }
    if headers.len() < 2 {
        return Err("need at least two columns".into());
    }
    let mut series: Vec<Series> =
        headers[1..].iter().map(|h| Series { name: h.clone(), points: Vec::new() }).collect();
    for r in rows {
        let Ok(x) = r[0].parse::<f64>() else { continue };
        for (s, v) in series.iter_mut().zip(&r[1..]) {
            if let Ok(y) = v.parse::<f64>() {
                s.points.push((x, y));
            }
        }
    }
    series.retain(|s| !s.points.is_empty());
    if series.is_empty() {
        return Err("no numeric data".into());
    }
    let title = if headers[0] == "threshold" { "tracking accuracy".to_string() } else { String::new() };
    Ok(Plot { title, x_label: headers[0].clone(), y_label: if series.len() == 1 { series[0].name.clone() } else { String::new() }, series })
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(plot: &Plot) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 150.0, 40.0, 50.0);
    let pts = plot.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    y0 = y0.min(0.0);
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, escape(&plot.title));
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{:.1}" stroke="#e5e5e5"/>"##, mt + ph);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, mt + ph + 16.0);
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(svg, r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e5e5e5"/>"##, ml + pw);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, y + 4.0, (t * 1e6).round() / 1e6);
    }
    let _ = writeln!(svg, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 12.0, escape(&plot.x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&plot.y_label)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = mt + 10.0 + 18.0 * i as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn curve_and_bench_inputs() {
        let p = plot_from_csv(&strings(&["threshold", "accuracy"]), &[strings(&["1", "0.5"]), strings(&["2", "0.9"])]).unwrap();
        assert_eq!(p.series.len(), 1);
        assert_eq!(p.series[0].points, vec![(1.0, 0.5), (2.0, 0.9)]);
        let svg = render_svg(&p);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

        let h = strings(&["size", "seed", "variant", "wall_time_us"]);
        let rows = [strings(&["25", "0", "fw", "1000"]), strings(&["25", "1", "fw", "3000"]), strings(&["25", "0", "fw_swap", "500"])];
        let p = plot_from_csv(&h, &rows).unwrap();
        assert_eq!(p.series.len(), 2);
        assert_eq!(p.series[0].points, vec![(25.0, 2.0)]);
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 1.0);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-9);
    }
}
