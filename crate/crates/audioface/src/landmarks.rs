//! Tracked 3D landmark frames and their stream formats.
//!
//! A landmark frame is one video frame's 468 vertices in image-pixel units
//! (x right, y down, z depth from the tracker) plus a timestamp. Streams are
//! stored in a binary format (magic header, then per frame one `f64`
//! timestamp followed by 468×3 little-endian `f32`), with a CSV import path
//! for interoperability.

use crate::error::PipelineError;
use crate::Result;
use nalgebra::Point3;
use std::io::{Read, Write};
use std::path::Path;

pub const LANDMARK_MAGIC: &[u8; 4] = b"AFLM";
pub const LANDMARK_VERSION: u32 = 1;

/// One frame's tracked vertices.
#[derive(Debug, Clone)]
pub struct LandmarkFrame {
    pub vertices: Vec<Point3<f64>>,
    /// Seconds from the start of the take.
    pub timestamp: f64,
}

impl LandmarkFrame {
    pub fn new(vertices: Vec<Point3<f64>>, timestamp: f64) -> Result<Self> {
        if vertices.len() != crate::topology::VERTEX_COUNT {
            return Err(PipelineError::ShapeMismatch(format!(
                "landmark frame has {} vertices, expected {}",
                vertices.len(),
                crate::topology::VERTEX_COUNT
            )));
        }
        if vertices.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(PipelineError::InvalidInput("non-finite landmark coordinate".into()));
        }
        Ok(LandmarkFrame { vertices, timestamp })
    }
}

/// Writes a landmark stream to the binary format.
pub fn save_stream(path: &Path, frames: &[LandmarkFrame]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(LANDMARK_MAGIC)?;
    f.write_all(&LANDMARK_VERSION.to_le_bytes())?;
    f.write_all(&(crate::topology::VERTEX_COUNT as u32).to_le_bytes())?;
    f.write_all(&(frames.len() as u64).to_le_bytes())?;
    for frame in frames {
        f.write_all(&frame.timestamp.to_le_bytes())?;
        for p in &frame.vertices {
            for c in 0..3 {
                f.write_all(&(p[c] as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a binary landmark stream.
pub fn load_stream(path: &Path) -> Result<Vec<LandmarkFrame>> {
    let ferr = |detail: String| PipelineError::Format {
        path: path.display().to_string(),
        detail,
    };
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != LANDMARK_MAGIC {
        return Err(ferr("bad magic".into()));
    }
    let version = read_u32(&mut f)?;
    if version != LANDMARK_VERSION {
        return Err(ferr(format!("unsupported version {}", version)));
    }
    let nverts = read_u32(&mut f)? as usize;
    if nverts != crate::topology::VERTEX_COUNT {
        return Err(ferr(format!("unexpected vertex count {}", nverts)));
    }
    let nframes = read_u64(&mut f)? as usize;
    let mut frames = Vec::with_capacity(nframes);
    let mut coord_buf = vec![0u8; nverts * 3 * 4];
    for _ in 0..nframes {
        let mut ts = [0u8; 8];
        f.read_exact(&mut ts)?;
        f.read_exact(&mut coord_buf)?;
        let mut vertices = Vec::with_capacity(nverts);
        for v in 0..nverts {
            let at = |k: usize| {
                let o = (v * 3 + k) * 4;
                f32::from_le_bytes([coord_buf[o], coord_buf[o + 1], coord_buf[o + 2], coord_buf[o + 3]])
                    as f64
            };
            vertices.push(Point3::new(at(0), at(1), at(2)));
        }
        frames.push(LandmarkFrame::new(vertices, f64::from_le_bytes(ts))?);
    }
    Ok(frames)
}

/// Imports a CSV stream: one row per frame, `timestamp,x0,y0,z0,...`
/// (1405 columns). A non-numeric first row is treated as a header.
pub fn load_csv(path: &Path) -> Result<Vec<LandmarkFrame>> {
    let text = std::fs::read_to_string(path)?;
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if lineno == 0 && fields[0].trim().parse::<f64>().is_err() {
            continue; // header row
        }
        if fields.len() != 1 + crate::topology::VERTEX_COUNT * 3 {
            return Err(PipelineError::Format {
                path: path.display().to_string(),
                detail: format!("row {} has {} fields, expected {}", lineno + 1, fields.len(),
                    1 + crate::topology::VERTEX_COUNT * 3),
            });
        }
        let mut values = Vec::with_capacity(fields.len());
        for field in &fields {
            values.push(field.trim().parse::<f64>().map_err(|_| PipelineError::Format {
                path: path.display().to_string(),
                detail: format!("bad number '{}' on row {}", field, lineno + 1),
            })?);
        }
        let vertices = values[1..]
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        frames.push(LandmarkFrame::new(vertices, values[0])?);
    }
    Ok(frames)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
