//! Minimal Wavefront OBJ support: `v` and `f` records, plus `g handle` /
//! `o handle` groups to tag handle triangles. Polygons are fan-triangulated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{canonicalize, CanonicalMesh, Mesh};
use crate::error::{Error, Result};
use crate::io::write_atomic;

const HANDLE_GROUP: &str = "handle";

/// Sidecar record stored next to a canonical OBJ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalMeta {
    pub source_scale: f64,
    pub nocs_extents: [f64; 3],
}

pub fn parse_obj(text: &str, context: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut handle = Vec::new();
    let mut in_handle = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let here = || format!("{context}:{}", lineno + 1);
        match tag {
            "v" => {
                let coords: Vec<f64> = fields
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(here(), e.to_string()))?;
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(Error::parse(here(), "vertex needs 3 coordinates"));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut idx = Vec::new();
                for f in fields {
                    let head = f.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(here(), format!("bad face index {f:?}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::parse(here(), format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(here(), "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    if in_handle {
                        handle.push(triangles.len());
                    }
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            "g" | "o" => in_handle = fields.any(|name| name == HANDLE_GROUP),
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::parse(context, "no faces"));
    }
    let mesh = Mesh::new(vertices, triangles).map_err(|e| Error::parse(context, e.to_string()))?;
    if handle.is_empty() {
        Ok(mesh)
    } else {
        mesh.with_handle(handle)
    }
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text, &path.display().to_string())
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    let handle: Vec<bool> = match &mesh.handle {
        Some(h) => {
            let mut flags = vec![false; mesh.triangles.len()];
            h.iter().for_each(|&t| flags[t] = true);
            flags
        }
        None => vec![false; mesh.triangles.len()],
    };
    let mut current = false;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if handle[t] != current {
            current = handle[t];
            out.push_str(if current { "g handle\n" } else { "g body\n" });
        }
        writeln!(out, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

pub fn sidecar_path(obj_path: &Path) -> PathBuf {
    obj_path.with_extension("json")
}

/// Writes the canonical OBJ and its `.json` sidecar.
pub fn write_canonical(path: &Path, mesh: &CanonicalMesh) -> Result<()> {
    write_obj(path, &mesh.mesh)?;
    let meta = CanonicalMeta {
        source_scale: mesh.source_scale,
        nocs_extents: mesh.nocs_extents.into(),
    };
    write_atomic(&sidecar_path(path), serde_json::to_string_pretty(&meta)?.as_bytes())
}

/// Reads a canonical OBJ; without a sidecar the mesh is re-normalized.
pub fn read_canonical(path: &Path) -> Result<CanonicalMesh> {
    let mesh = read_obj(path)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return canonicalize(&mesh);
    }
    let meta: CanonicalMeta = serde_json::from_str(&std::fs::read_to_string(&side)?)?;
    Ok(CanonicalMesh {
        mesh,
        nocs_extents: Vector3::from(meta.nocs_extents),
        source_scale: meta.source_scale,
    })
}
