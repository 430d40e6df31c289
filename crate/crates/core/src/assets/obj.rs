//! Minimal OBJ mesh reader/writer: `v` and triangular `f` records only.
//! Floats are printed with Rust's shortest round-trip formatting, so a
//! write→read cycle reproduces coordinates exactly.

use super::AssetError;
use crate::binding::TriangleMesh;
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::Path;

pub fn mesh_to_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), AssetError> {
    std::fs::write(path, mesh_to_obj(mesh)).map_err(|e| AssetError::io(path, e))
}

pub fn parse_obj(text: &str, label: u32, origin: &str) -> Result<TriangleMesh, AssetError> {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        let parse_err = |msg: String| AssetError::Parse {
            context: format!("{origin}:{}", lineno + 1),
            message: msg,
        };
        match tag {
            "v" => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = parts
                        .next()
                        .ok_or_else(|| parse_err("vertex needs 3 coordinates".into()))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut idx = [0usize; 3];
                for slot in &mut idx {
                    let tok = parts
                        .next()
                        .ok_or_else(|| parse_err("face needs 3 vertex indices".into()))?;
                    // Accept v/vt/vn forms; only the vertex index is used.
                    let first = tok.split('/').next().unwrap();
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(format!("bad face index {tok:?}")))?;
                    if i < 1 {
                        return Err(parse_err(format!("face index {i} must be ≥ 1")));
                    }
                    *slot = (i - 1) as usize;
                }
                if parts.next().is_some() {
                    return Err(parse_err("only triangular faces are supported".into()));
                }
                faces.push(idx);
            }
            // Normals, texcoords, groups, materials are ignored.
            _ => {}
        }
    }
    let mesh = TriangleMesh::new(vertices, faces, label);
    mesh.validate().map_err(|e| AssetError::Parse {
        context: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok(mesh)
}

pub fn read_obj(path: &Path, label: u32) -> Result<TriangleMesh, AssetError> {
    let text = std::fs::read_to_string(path).map_err(|e| AssetError::io(path, e))?;
    parse_obj(&text, label, &path.display().to_string())
}
