//! CSV files: ground truth, tracks, accuracy curves, solver traces.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crowdtrack_core::geometry::Vec2;
use crowdtrack_core::metrics::AccuracyCurve;
use crowdtrack_core::scene::GroundTruth;
use crowdtrack_core::solver::SolverTrace;
use crowdtrack_core::tracker::TrackSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
    #[error("coverage mismatch: {0}")]
    Coverage(String),
}

/// Rows keyed by `(frame, target_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub rows: BTreeMap<(usize, u64), Vec2>,
    pub groups: BTreeMap<u64, usize>,
}

impl Table {
    pub fn ids(&self) -> Vec<u64> {
        self.rows.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn n_frames(&self) -> usize {
        self.rows.keys().map(|k| k.0 + 1).max().unwrap_or(0)
    }

    /// Positions of every id at `frame`, in id order.
    pub fn frame(&self, frame: usize) -> Vec<(u64, Vec2)> {
        self.rows.range((frame, 0)..=(frame, u64::MAX)).map(|(k, v)| (k.1, *v)).collect()
    }

    /// Dense `[frame][target]` positions; every id must appear in every frame.
    pub fn to_dense(&self) -> Result<(Vec<u64>, Vec<Vec<Vec2>>), FormatError> {
        let ids = self.ids();
        let frames = self.n_frames();
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            let mut row = Vec::with_capacity(ids.len());
            for &id in &ids {
                match self.rows.get(&(f, id)) {
                    Some(p) => row.push(*p),
                    None => missing.push((f, id)),
                }
            }
            out.push(row);
        }
        if !missing.is_empty() {
            return Err(FormatError::Coverage(describe_pairs("missing", &missing)));
        }
        Ok((ids, out))
    }
}

fn describe_pairs(what: &str, pairs: &[(usize, u64)]) -> String {
    let shown: Vec<String> = pairs.iter().take(10).map(|(f, t)| format!("(frame {f}, target {t})")).collect();
    let more = if pairs.len() > 10 { format!(" and {} more", pairs.len() - 10) } else { String::new() };
    format!("{} pairs {what}: {}{more}", pairs.len(), shown.join(" "))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, FormatError> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|source| FormatError::Csv { path: path.into(), source })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, FormatError> {
    csv::Writer::from_path(path).map_err(|source| FormatError::Csv { path: path.into(), source })
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, FormatError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| FormatError::Invalid { path: path.into(), msg: format!("missing column {name:?}") })
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<T, FormatError> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| FormatError::Invalid { path: path.into(), msg: format!("row {line}: cannot parse {s:?}") })
}

/// Reads `frame,target_id,x,y[,group_id]`.
pub fn read_table(path: &Path) -> Result<Table, FormatError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|source| FormatError::Csv { path: path.into(), source })?.clone();
    let cf = column(&headers, "frame", path)?;
    let ct = column(&headers, "target_id", path)?;
    let cx = column(&headers, "x", path)?;
    let cy = column(&headers, "y", path)?;
    let cg = headers.iter().position(|h| h == "group_id");
    let mut table = Table::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|source| FormatError::Csv { path: path.into(), source })?;
        let key = (field(&rec, cf, path, line + 2)?, field(&rec, ct, path, line + 2)?);
        let p = Vec2::new(field(&rec, cx, path, line + 2)?, field(&rec, cy, path, line + 2)?);
        if !p.is_finite() {
            return Err(FormatError::Invalid { path: path.into(), msg: format!("row {}: non-finite position", line + 2) });
        }
        if table.rows.insert(key, p).is_some() {
            return Err(FormatError::Invalid {
                path: path.into(),
                msg: format!("duplicate row for frame {} target {}", key.0, key.1),
            });
        }
        if let Some(c) = cg {
            table.groups.insert(key.1, field(&rec, c, path, line + 2)?);
        }
    }
    Ok(table)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<(), FormatError> {
    let mut w = writer(path)?;
    let err = |source| FormatError::Csv { path: path.into(), source };
    w.write_record(["frame", "target_id", "x", "y", "group_id"]).map_err(err)?;
    for (f, row) in gt.positions.iter().enumerate() {
        for (i, p) in row.iter().enumerate() {
            w.write_record([f.to_string(), i.to_string(), format!("{:.2}", p.x), format!("{:.2}", p.y), gt.groups[i].to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| err(e.into()))
}

/// Ground truth with targets in id order.
pub fn read_ground_truth(path: &Path) -> Result<(Vec<u64>, GroundTruth), FormatError> {
    let table = read_table(path)?;
    let (ids, positions) = table.to_dense()?;
    let groups = ids.iter().map(|id| table.groups.get(id).copied().unwrap_or(0)).collect();
    Ok((ids, GroundTruth { positions, groups }))
}

pub fn write_tracks(path: &Path, ids: &[u64], tracks: &TrackSet) -> Result<(), FormatError> {
    let mut w = writer(path)?;
    let err = |source| FormatError::Csv { path: path.into(), source };
    w.write_record(["frame", "target_id", "x", "y"]).map_err(err)?;
    for (f, row) in tracks.positions.iter().enumerate() {
        for (id, p) in ids.iter().zip(row) {
            w.write_record([f.to_string(), id.to_string(), format!("{:.2}", p.x), format!("{:.2}", p.y)]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| err(e.into()))
}

/// Aligns tracks with ground truth by `(frame, target_id)`. Every pair must
/// be present on both sides.
pub fn align(tracks: &Table, gt: &Table) -> Result<(TrackSet, GroundTruth), FormatError> {
    let a: BTreeSet<_> = tracks.rows.keys().copied().collect();
    let b: BTreeSet<_> = gt.rows.keys().copied().collect();
    let missing: Vec<_> = b.difference(&a).copied().collect();
    let extra: Vec<_> = a.difference(&b).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = Vec::new();
        if !missing.is_empty() {
            msg.push(describe_pairs("missing from tracks", &missing));
        }
        if !extra.is_empty() {
            msg.push(describe_pairs("not in ground truth", &extra));
        }
        return Err(FormatError::Coverage(msg.join("; ")));
    }
    let (ids, gt_pos) = gt.to_dense()?;
    let (_, tr_pos) = tracks.to_dense()?;
    let groups = ids.iter().map(|id| gt.groups.get(id).copied().unwrap_or(0)).collect();
    Ok((TrackSet::new(tr_pos), GroundTruth { positions: gt_pos, groups }))
}

pub fn write_curve(path: &Path, curve: &AccuracyCurve) -> Result<(), FormatError> {
    let mut w = writer(path)?;
    let err = |source| FormatError::Csv { path: path.into(), source };
    w.write_record(["threshold", "accuracy"]).map_err(err)?;
    for (t, a) in curve.thresholds.iter().zip(&curve.accuracy) {
        w.write_record([t.to_string(), format!("{a:.6}")]).map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

/// Per-iteration solver records. Several traces are concatenated in order;
/// iteration numbers restart at 0 for each.
pub fn write_traces<'a>(path: &Path, traces: impl IntoIterator<Item = &'a SolverTrace>) -> Result<(), FormatError> {
    let mut w = writer(path)?;
    let err = |source| FormatError::Csv { path: path.into(), source };
    w.write_record(["iteration", "objective", "gap", "step_kind", "lambda", "wall_time_us"]).map_err(err)?;
    for trace in traces {
        for r in &trace.records {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.12e}", r.objective),
                format!("{:.6e}", r.gap),
                r.step.name().to_string(),
                format!("{:.6e}", r.lambda),
                r.elapsed_us.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| err(e.into()))
}

/// Generic numeric CSV: header names and rows of raw fields.
pub fn read_generic(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), FormatError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|source| FormatError::Csv { path: path.into(), source })?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| FormatError::Csv { path: path.into(), source })?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((headers, rows))
}
