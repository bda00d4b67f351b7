//! Fixed 468-vertex face mesh topology.
//!
//! The tracker emits 468 landmarks with a predefined triangulation. This
//! module carries that triangulation plus the index sets the pipeline needs:
//! the rigid upper-face subset used for pose alignment, the mouth subset for
//! landmark-distance evaluation, a skin mask for lighting statistics, mirror
//! pairs for symmetrization checks, and anchor vertices (eye corners, nose
//! tip) that pin the cylindrical atlas mapping.
//!
//! The default topology arranges the 468 vertices on a 13×36 grid (13
//! columns spanning azimuth, 36 rows spanning forehead→chin), which is also
//! the layout the synthetic face generator samples its half-ellipsoid with.

use crate::error::PipelineError;
use crate::Result;
use std::path::Path;

pub const VERTEX_COUNT: usize = 468;

/// Grid layout of the default topology: `GRID_COLS * GRID_ROWS == 468`.
pub const GRID_COLS: usize = 13;
pub const GRID_ROWS: usize = 36;

/// Rectangle in atlas pixel coordinates (x, y are the top-left corner).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Mesh topology and index sets for the 468-vertex face.
#[derive(Debug, Clone)]
pub struct FaceTopology {
    pub vertex_count: usize,
    pub triangles: Vec<[usize; 3]>,
    /// Upper, mostly rigid vertices used for similarity alignment.
    pub rigid_indices: Vec<usize>,
    /// Mouth vertices used by the landmark-distance metric.
    pub mouth_indices: Vec<usize>,
    /// True where a vertex is skin (excludes mouth interior).
    pub skin_vertex_mask: Vec<bool>,
    /// Left/right vertex pairs; an involution with no repeated index.
    pub mirror_pairs: Vec<(usize, usize)>,
    /// Vertices whose mean is the left eye anchor.
    pub left_eye_indices: Vec<usize>,
    /// Vertices whose mean is the right eye anchor.
    pub right_eye_indices: Vec<usize>,
    pub nose_tip_index: usize,
    /// Lip region cropped out of the 256×256 atlas for texture prediction.
    pub lip_crop: CropRect,
}

/// Index of grid vertex (row, col) in the default layout.
pub fn grid_index(row: usize, col: usize) -> usize {
    row * GRID_COLS + col
}

impl FaceTopology {
    /// The built-in default topology on the 13×36 grid.
    pub fn default_grid() -> FaceTopology {
        let mut triangles = Vec::with_capacity((GRID_ROWS - 1) * (GRID_COLS - 1) * 2);
        for r in 0..GRID_ROWS - 1 {
            for c in 0..GRID_COLS - 1 {
                let a = grid_index(r, c);
                let b = grid_index(r, c + 1);
                let d = grid_index(r + 1, c);
                let e = grid_index(r + 1, c + 1);
                triangles.push([a, b, d]);
                triangles.push([d, b, e]);
            }
        }

        // Forehead through the eye band and nose bridge; rows below deform
        // with speech.
        let rigid_indices: Vec<usize> = (0..14)
            .flat_map(|r| (0..GRID_COLS).map(move |c| grid_index(r, c)))
            .collect();

        let mouth_rows = 24..=29;
        let mouth_cols = 3..=9;
        let mouth_indices: Vec<usize> = mouth_rows
            .clone()
            .flat_map(|r| mouth_cols.clone().map(move |c| grid_index(r, c)))
            .collect();

        let mut skin_vertex_mask = vec![true; VERTEX_COUNT];
        for r in 25..=28 {
            for c in 4..=8 {
                skin_vertex_mask[grid_index(r, c)] = false;
            }
        }

        let mirror_pairs: Vec<(usize, usize)> = (0..GRID_ROWS)
            .flat_map(|r| {
                (0..GRID_COLS / 2).map(move |c| (grid_index(r, c), grid_index(r, GRID_COLS - 1 - c)))
            })
            .collect();

        FaceTopology {
            vertex_count: VERTEX_COUNT,
            triangles,
            rigid_indices,
            mouth_indices,
            skin_vertex_mask,
            mirror_pairs,
            left_eye_indices: vec![grid_index(8, 2), grid_index(8, 4)],
            right_eye_indices: vec![grid_index(8, 8), grid_index(8, 10)],
            nose_tip_index: grid_index(16, 6),
            lip_crop: CropRect { x: 64, y: 120, w: 128, h: 128 },
        }
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn validate(&self, atlas_size: usize) -> Result<()> {
        let fail = |msg: String| Err(PipelineError::InvalidInput(msg));
        if self.skin_vertex_mask.len() != self.vertex_count {
            return fail("skin mask length mismatch".into());
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.vertex_count) {
                return fail(format!("triangle {} references vertex out of range", i));
            }
        }
        if self.rigid_indices.is_empty() {
            return fail("rigid index set is empty".into());
        }
        for set in [&self.rigid_indices, &self.mouth_indices, &self.left_eye_indices, &self.right_eye_indices] {
            if set.iter().any(|&v| v >= self.vertex_count) {
                return fail("index set references vertex out of range".into());
            }
        }
        if self.nose_tip_index >= self.vertex_count {
            return fail("nose tip index out of range".into());
        }
        let mut seen = vec![false; self.vertex_count];
        for &(a, b) in &self.mirror_pairs {
            if a >= self.vertex_count || b >= self.vertex_count || a == b {
                return fail("bad mirror pair".into());
            }
            if seen[a] || seen[b] {
                return fail("vertex appears in more than one mirror pair".into());
            }
            seen[a] = true;
            seen[b] = true;
        }
        if self.lip_crop.x + self.lip_crop.w > atlas_size || self.lip_crop.y + self.lip_crop.h > atlas_size {
            return fail(format!("lip crop exceeds the {0}x{0} atlas", atlas_size));
        }
        Ok(())
    }

    /// Serializes to the versioned plain-text topology format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("audioface-topology 1\n");
        out.push_str(&format!("vertices {}\n", self.vertex_count));
        out.push_str(&format!("triangles {}\n", self.triangles.len()));
        for t in &self.triangles {
            out.push_str(&format!("t {} {} {}\n", t[0], t[1], t[2]));
        }
        write_index_line(&mut out, "rigid", &self.rigid_indices);
        write_index_line(&mut out, "mouth", &self.mouth_indices);
        let skin: Vec<usize> = self
            .skin_vertex_mask
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| i)
            .collect();
        write_index_line(&mut out, "skin", &skin);
        out.push_str(&format!("mirror {}", self.mirror_pairs.len()));
        for &(a, b) in &self.mirror_pairs {
            out.push_str(&format!(" {}:{}", a, b));
        }
        out.push('\n');
        write_index_line(&mut out, "left_eye", &self.left_eye_indices);
        write_index_line(&mut out, "right_eye", &self.right_eye_indices);
        out.push_str(&format!("nose_tip {}\n", self.nose_tip_index));
        out.push_str(&format!(
            "lip_crop {} {} {} {}\n",
            self.lip_crop.x, self.lip_crop.y, self.lip_crop.w, self.lip_crop.h
        ));
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FaceTopology> {
        let text = std::fs::read_to_string(path)?;
        let ferr = |detail: String| PipelineError::Format {
            path: path.display().to_string(),
            detail,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| ferr("empty file".into()))?;
        if header.trim() != "audioface-topology 1" {
            return Err(ferr(format!("unsupported header '{}'", header)));
        }

        let mut vertex_count = 0usize;
        let mut expected_triangles = 0usize;
        let mut triangles = Vec::new();
        let mut rigid = Vec::new();
        let mut mouth = Vec::new();
        let mut skin_indices: Option<Vec<usize>> = None;
        let mut mirror = Vec::new();
        let mut left_eye = Vec::new();
        let mut right_eye = Vec::new();
        let mut nose_tip = None;
        let mut lip_crop = None;

        for line in lines {
            let mut it = line.split_whitespace();
            let Some(key) = it.next() else { continue };
            match key {
                "vertices" => vertex_count = parse_next(&mut it, line, path)?,
                "triangles" => expected_triangles = parse_next(&mut it, line, path)?,
                "t" => {
                    let a = parse_next(&mut it, line, path)?;
                    let b = parse_next(&mut it, line, path)?;
                    let c = parse_next(&mut it, line, path)?;
                    triangles.push([a, b, c]);
                }
                "rigid" => rigid = parse_index_line(&mut it, line, path)?,
                "mouth" => mouth = parse_index_line(&mut it, line, path)?,
                "skin" => skin_indices = Some(parse_index_line(&mut it, line, path)?),
                "mirror" => {
                    let n: usize = parse_next(&mut it, line, path)?;
                    for _ in 0..n {
                        let pair = it.next().ok_or_else(|| ferr(format!("short mirror line '{}'", line)))?;
                        let (a, b) = pair
                            .split_once(':')
                            .ok_or_else(|| ferr(format!("bad mirror pair '{}'", pair)))?;
                        let a = a.parse().map_err(|_| ferr(format!("bad mirror index '{}'", pair)))?;
                        let b = b.parse().map_err(|_| ferr(format!("bad mirror index '{}'", pair)))?;
                        mirror.push((a, b));
                    }
                }
                "left_eye" => left_eye = parse_index_line(&mut it, line, path)?,
                "right_eye" => right_eye = parse_index_line(&mut it, line, path)?,
                "nose_tip" => nose_tip = Some(parse_next(&mut it, line, path)?),
                "lip_crop" => {
                    lip_crop = Some(CropRect {
                        x: parse_next(&mut it, line, path)?,
                        y: parse_next(&mut it, line, path)?,
                        w: parse_next(&mut it, line, path)?,
                        h: parse_next(&mut it, line, path)?,
                    });
                }
                _ => return Err(ferr(format!("unknown keyword '{}'", key))),
            }
        }

        if triangles.len() != expected_triangles {
            return Err(ferr(format!(
                "expected {} triangles, found {}",
                expected_triangles,
                triangles.len()
            )));
        }
        let mut skin_vertex_mask = vec![false; vertex_count];
        for i in skin_indices.ok_or_else(|| ferr("missing skin line".into()))? {
            if i >= vertex_count {
                return Err(ferr(format!("skin index {} out of range", i)));
            }
            skin_vertex_mask[i] = true;
        }
        let topo = FaceTopology {
            vertex_count,
            triangles,
            rigid_indices: rigid,
            mouth_indices: mouth,
            skin_vertex_mask,
            mirror_pairs: mirror,
            left_eye_indices: left_eye,
            right_eye_indices: right_eye,
            nose_tip_index: nose_tip.ok_or_else(|| ferr("missing nose_tip".into()))?,
            lip_crop: lip_crop.ok_or_else(|| ferr("missing lip_crop".into()))?,
        };
        topo.validate(256)?;
        Ok(topo)
    }
}

fn write_index_line(out: &mut String, key: &str, indices: &[usize]) {
    out.push_str(&format!("{} {}", key, indices.len()));
    for i in indices {
        out.push_str(&format!(" {}", i));
    }
    out.push('\n');
}

fn parse_next<'a, T: std::str::FromStr>(
    it: &mut impl Iterator<Item = &'a str>,
    line: &str,
    path: &Path,
) -> Result<T> {
    it.next()
        .and_then(|tok| tok.parse().ok())
        .ok_or_else(|| PipelineError::Format {
            path: path.display().to_string(),
            detail: format!("malformed line '{}'", line),
        })
}

fn parse_index_line<'a>(
    it: &mut impl Iterator<Item = &'a str>,
    line: &str,
    path: &Path,
) -> Result<Vec<usize>> {
    let n: usize = parse_next(it, line, path)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(parse_next(it, line, path)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_valid() {
        let topo = FaceTopology::default_grid();
        topo.validate(256).unwrap();
        assert_eq!(topo.vertex_count, 468);
        assert_eq!(topo.triangles.len(), (GRID_ROWS - 1) * (GRID_COLS - 1) * 2);
    }

    #[test]
    fn mirror_pairs_are_an_involution() {
        let topo = FaceTopology::default_grid();
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &topo.mirror_pairs {
            assert_ne!(a, b);
            assert!(seen.insert(a));
            assert!(seen.insert(b));
        }
        // Center column vertices stay unpaired.
        assert_eq!(seen.len(), VERTEX_COUNT - GRID_ROWS);
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.topo");
        let topo = FaceTopology::default_grid();
        topo.save(&path).unwrap();
        let back = FaceTopology::load(&path).unwrap();
        assert_eq!(back.vertex_count, topo.vertex_count);
        assert_eq!(back.triangles, topo.triangles);
        assert_eq!(back.rigid_indices, topo.rigid_indices);
        assert_eq!(back.mouth_indices, topo.mouth_indices);
        assert_eq!(back.skin_vertex_mask, topo.skin_vertex_mask);
        assert_eq!(back.mirror_pairs, topo.mirror_pairs);
        assert_eq!(back.lip_crop, topo.lip_crop);
    }

    #[test]
    fn rejects_out_of_range_triangle() {
        let mut topo = FaceTopology::default_grid();
        topo.triangles[0] = [0, 1, 9999];
        assert!(topo.validate(256).is_err());
    }

    #[test]
    fn rejects_unknown_keyword() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.topo");
        std::fs::write(&path, "audioface-topology 1\nbogus 3\n").unwrap();
        assert!(FaceTopology::load(&path).is_err());
    }
}
