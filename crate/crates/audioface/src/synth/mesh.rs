//! Textured mesh container and Wavefront OBJ export/import.

use crate::error::PipelineError;
use crate::geom::TextureAtlas;
use crate::Result;
use nalgebra::Point3;
use std::io::Write;
use std::path::Path;

/// A fully textured face mesh.
#[derive(Debug, Clone)]
pub struct TexturedMesh {
    pub vertices: Vec<Point3<f64>>,
    /// Per-vertex atlas coordinates in pixels.
    pub uv: Vec<(f64, f64)>,
    pub triangles: Vec<[usize; 3]>,
    pub atlas: TextureAtlas,
}

/// Writes `<stem>.obj`, `<stem>.mtl` and `<stem>.png`. Output bytes are
/// deterministic for identical inputs (fixed float formatting).
pub fn export_obj(mesh: &TexturedMesh, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| PipelineError::InvalidInput(format!("bad OBJ path {}", path.display())))?
        .to_string();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;

    let texture_name = format!("{}.png", stem);
    mesh.atlas.pixels.save_png(&dir.join(&texture_name))?;

    let mtl_name = format!("{}.mtl", stem);
    let mtl = format!(
        "newmtl face\nKa 1.0 1.0 1.0\nKd 1.0 1.0 1.0\nKs 0.0 0.0 0.0\nmap_Kd {}\n",
        texture_name
    );
    std::fs::write(dir.join(&mtl_name), mtl)?;

    let (ah, aw) = mesh.atlas.size();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "mtllib {}", mtl_name)?;
    writeln!(f, "usemtl face")?;
    for v in &mesh.vertices {
        writeln!(f, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z)?;
    }
    for &(u, v) in &mesh.uv {
        // OBJ texture space: origin at bottom-left, unit range.
        writeln!(f, "vt {:.6} {:.6}", u / aw as f64, 1.0 - v / ah as f64)?;
    }
    for t in &mesh.triangles {
        writeln!(f, "f {0}/{0} {1}/{1} {2}/{2}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Reads back an OBJ written by [`export_obj`] (vertices, uv, faces; the
/// texture is reloaded from the referenced PNG when present).
pub fn import_obj(path: &Path) -> Result<TexturedMesh> {
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let ferr = |detail: String| PipelineError::Format {
        path: path.display().to_string(),
        detail,
    };
    let mut vertices = Vec::new();
    let mut uv_unit: Vec<(f64, f64)> = Vec::new();
    let mut triangles = Vec::new();
    let mut texture: Option<crate::image::Image> = None;

    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let x: f64 = parse(&mut it, line, path)?;
                let y: f64 = parse(&mut it, line, path)?;
                let z: f64 = parse(&mut it, line, path)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("vt") => {
                let u: f64 = parse(&mut it, line, path)?;
                let v: f64 = parse(&mut it, line, path)?;
                uv_unit.push((u, v));
            }
            Some("f") => {
                let mut idx = [0usize; 3];
                for slot in &mut idx {
                    let tok = it.next().ok_or_else(|| ferr(format!("short face line '{}'", line)))?;
                    let first = tok.split('/').next().unwrap_or(tok);
                    *slot = first
                        .parse::<usize>()
                        .map_err(|_| ferr(format!("bad face index '{}'", tok)))?
                        - 1;
                }
                triangles.push(idx);
            }
            Some("mtllib") => {
                if let Some(name) = it.next() {
                    if let Ok(mtl) = std::fs::read_to_string(dir.join(name)) {
                        for mline in mtl.lines() {
                            if let Some(tex) = mline.trim().strip_prefix("map_Kd ") {
                                texture = crate::image::Image::load_png(&dir.join(tex.trim())).ok();
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }

    let atlas = match texture {
        Some(pixels) => {
            let (h, w) = (pixels.height(), pixels.width());
            TextureAtlas { pixels, valid: crate::image::Mask::filled(h, w, true) }
        }
        None => TextureAtlas::new(256, 256),
    };
    let (ah, aw) = atlas.size();
    let uv = uv_unit
        .into_iter()
        .map(|(u, v)| (u * aw as f64, (1.0 - v) * ah as f64))
        .collect();
    Ok(TexturedMesh { vertices, uv, triangles, atlas })
}

fn parse<'a, T: std::str::FromStr>(
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::FaceTopology;

    fn sample_mesh() -> TexturedMesh {
        let topo = FaceTopology::default_grid();
        let frame = crate::synthkit::base_face_frame(160.0, 160.0, 90.0, 0.0);
        let cyl = crate::geom::fit_reference_cylinder(&frame, &topo, 256).unwrap();
        let uv = crate::geom::cylinder_uv(&frame.vertices, &cyl).unwrap();
        let mut atlas = TextureAtlas::new(256, 256);
        for y in 0..256 {
            for x in 0..256 {
                atlas.pixels.set(y, x, [x as f32 / 255.0, y as f32 / 255.0, 0.5]);
            }
        }
        TexturedMesh { vertices: frame.vertices, uv, triangles: topo.triangles, atlas }
    }

    #[test]
    fn obj_has_expected_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.obj");
        let mesh = sample_mesh();
        export_obj(&mesh, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v_count = text.lines().filter(|l| l.starts_with("v ")).count();
        let f_count = text.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(v_count, 468);
        assert_eq!(f_count, mesh.triangles.len());
    }

    #[test]
    fn export_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = sample_mesh();
        let p1 = dir.path().join("run1").join("face.obj");
        let p2 = dir.path().join("run2").join("face.obj");
        export_obj(&mesh, &p1).unwrap();
        export_obj(&mesh, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(
            std::fs::read(p1.with_extension("png")).unwrap(),
            std::fs::read(p2.with_extension("png")).unwrap()
        );
    }

    #[test]
    fn obj_round_trip_preserves_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("face.obj");
        let mesh = sample_mesh();
        export_obj(&mesh, &path).unwrap();
        let back = import_obj(&path).unwrap();
        assert_eq!(back.vertices.len(), mesh.vertices.len());
        assert_eq!(back.triangles, mesh.triangles);
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            assert!((a - b).norm() < 1e-5);
        }
        for ((ua, va), (ub, vb)) in mesh.uv.iter().zip(&back.uv) {
            assert!((ua - ub).abs() < 1e-3 && (va - vb).abs() < 1e-3);
        }
    }
}
