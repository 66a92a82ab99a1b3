//! Binary PPM (P6) frames, one file per frame named `frame_%06d.ppm`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crowdtrack_core::raster::Frame;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpmError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("no frame_*.ppm files in {0}")]
    NoFrames(PathBuf),
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:06}.ppm"))
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Frame, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ascii header")?.to_string());
    }
    if fields[0] != "P6" {
        return Err(format!("unsupported magic {:?}, expected P6", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(format!("raster has {} bytes, expected {need}", bytes.len().saturating_sub(pos)));
    }
    Frame::from_raw(w, h, bytes[pos..pos + need].to_vec()).ok_or_else(|| "bad raster size".into())
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<(), PpmError> {
    let io = |source| PpmError::Io { path: path.to_path_buf(), source };
    let mut f = BufWriter::new(fs::File::create(path).map_err(io)?);
    f.write_all(&encode(frame)).map_err(io)?;
    f.flush().map_err(io)
}

pub fn read_frame(path: &Path) -> Result<Frame, PpmError> {
    let bytes = fs::read(path).map_err(|source| PpmError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes).map_err(|msg| PpmError::Format { path: path.to_path_buf(), msg })
}

pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<(), PpmError> {
    fs::create_dir_all(dir).map_err(|source| PpmError::Io { path: dir.to_path_buf(), source })?;
    for (i, f) in frames.iter().enumerate() {
        write_frame(&frame_path(dir, i), f)?;
    }
    Ok(())
}

/// Reads `frame_*.ppm` from `dir` in file-name order.
pub fn read_frames(dir: &Path) -> Result<Vec<Frame>, PpmError> {
    let io = |source| PpmError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".ppm"))
        })
        .collect();
    if paths.is_empty() {
        return Err(PpmError::NoFrames(dir.to_path_buf()));
    }
    paths.sort();
    paths.iter().map(|p| read_frame(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let f = decode(&bytes).unwrap();
        assert_eq!(f.pixel(1, 0), [4, 5, 6]);
        assert!(decode(b"P3\n1 1\n255\n").is_err());
        assert!(decode(b"P6\n2 2\n255\n\x00").is_err());
    }
}
