//! Z-buffered software rasterizer for ground-truth NOCS maps, depth maps and
//! instance masks of posed canonical meshes.
//!
//! Pixels are sampled at their centers (integer image coordinates, matching
//! [`Intrinsics::unproject`]). Both triangle windings are drawn. Edge pixels
//! are resolved by a top-left style tie rule so that a shared edge belongs to
//! exactly one of its triangles. Attributes are interpolated
//! perspective-correctly.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::canonical::{CanonicalMesh, NOCS_CENTER};
use crate::error::{Error, Result};
use crate::geom::{meters_to_mm, DepthMap, InstanceMask, Intrinsics, SimilarityTransform};

/// Triangles with a vertex closer than this (meters) are skipped.
pub const NEAR_PLANE: f64 = 1e-3;

/// Minimum visible handle pixels for a handle to count as visible.
pub const DEFAULT_HANDLE_MIN_PIXELS: usize = 10;

const NO_OWNER: u32 = u32::MAX;

/// Dense per-pixel NOCS coordinates with a validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct NocsMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl NocsMap {
    /// All-background map.
    pub fn new(width: usize, height: usize) -> Self {
        NocsMap {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<Vector3<f64>> {
        self.valid[idx].then(|| Vector3::from(self.data[idx]))
    }

    pub fn set(&mut self, idx: usize, value: Vector3<f64>) {
        self.data[idx] = value.into();
        self.valid[idx] = true;
    }

    pub fn clear(&mut self, idx: usize) {
        self.data[idx] = [0.0; 3];
        self.valid[idx] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// A canonical mesh placed in the camera frame.
///
/// The pose maps centered NOCS coordinates `p - (0.5, 0.5, 0.5)` to camera
/// space in meters, so its translation is the object's bbox center.
#[derive(Debug, Clone)]
pub struct SceneInstance {
    pub mesh: Arc<CanonicalMesh>,
    pub pose: SimilarityTransform,
    pub class_id: u32,
    pub instance_id: u8,
    pub handle_visible: Option<bool>,
}

impl SceneInstance {
    pub fn to_camera(&self, nocs: &Vector3<f64>) -> Vector3<f64> {
        self.pose.apply(&(nocs - NOCS_CENTER))
    }

    /// Metric side lengths of the object's tight bbox.
    pub fn dimensions(&self) -> Vector3<f64> {
        self.mesh.dimensions(self.pose.scale())
    }
}

/// Result of rasterizing a list of instances.
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Camera-space z in meters; infinity where uncovered.
    pub z: Vec<f64>,
    /// Index into the instance list, `u32::MAX` where uncovered.
    pub instance: Vec<u32>,
    /// Triangle index within the owning instance's mesh.
    pub triangle: Vec<u32>,
    pub nocs: Vec<[f64; 3]>,
}

impl Raster {
    fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Raster {
            width,
            height,
            z: vec![f64::INFINITY; n],
            instance: vec![NO_OWNER; n],
            triangle: vec![NO_OWNER; n],
            nocs: vec![[0.0; 3]; n],
        }
    }

    pub fn owner(&self, idx: usize) -> Option<(usize, usize)> {
        (self.instance[idx] != NO_OWNER)
            .then(|| (self.instance[idx] as usize, self.triangle[idx] as usize))
    }
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[inline]
fn owns_edge(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy > 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Rasterizes every triangle of every instance into one z-buffer.
pub fn rasterize(instances: &[SceneInstance], intr: &Intrinsics) -> Raster {
    let (w, h) = (intr.width, intr.height);
    let mut out = Raster::new(w, h);
    for (inst_idx, inst) in instances.iter().enumerate() {
        let verts = &inst.mesh.mesh.vertices;
        let cam: Vec<Vector3<f64>> = verts.iter().map(|v| inst.to_camera(v)).collect();
        for (tri_idx, tri) in inst.mesh.mesh.triangles.iter().enumerate() {
            let mut order = *tri;
            let p = order.map(|i| cam[i]);
            if p.iter().any(|q| q.z <= NEAR_PLANE) {
                continue;
            }
            let mut s = p.map(|q| (intr.fx * q.x / q.z + intr.cx, intr.fy * q.y / q.z + intr.cy));
            let mut area = edge(s[0], s[1], s[2]);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            if area < 0.0 {
                order.swap(1, 2);
                s.swap(1, 2);
                area = -area;
            }
            let z = order.map(|i| cam[i].z);
            let n = order.map(|i| verts[i]);
            let min_u = s.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let max_u = s
                .iter()
                .map(|q| q.0)
                .fold(f64::NEG_INFINITY, f64::max)
                .floor()
                .min(w as f64 - 1.0);
            let min_v = s.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let max_v = s
                .iter()
                .map(|q| q.1)
                .fold(f64::NEG_INFINITY, f64::max)
                .floor()
                .min(h as f64 - 1.0);
            if min_u > max_u || min_v > max_v {
                continue;
            }
            let owns = [owns_edge(s[1], s[2]), owns_edge(s[2], s[0]), owns_edge(s[0], s[1])];
            for v in min_v as usize..=max_v as usize {
                for u in min_u as usize..=max_u as usize {
                    let px = (u as f64, v as f64);
                    let e = [edge(s[1], s[2], px), edge(s[2], s[0], px), edge(s[0], s[1], px)];
                    if (0..3).any(|k| e[k] < 0.0 || (e[k] == 0.0 && !owns[k])) {
                        continue;
                    }
                    let q = [e[0] / area / z[0], e[1] / area / z[1], e[2] / area / z[2]];
                    let inv_z = q[0] + q[1] + q[2];
                    let depth = 1.0 / inv_z;
                    let idx = v * w + u;
                    if depth >= out.z[idx] {
                        continue;
                    }
                    let b = [q[0] * depth, q[1] * depth, q[2] * depth];
                    let value = n[0] * b[0] + n[1] * b[1] + n[2] * b[2];
                    out.z[idx] = depth;
                    out.instance[idx] = inst_idx as u32;
                    out.triangle[idx] = tri_idx as u32;
                    out.nocs[idx] = value.map(|c| c.clamp(0.0, 1.0)).into();
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub nocs: NocsMap,
    pub depth: DepthMap,
    pub mask: InstanceMask,
}

pub(crate) fn check_instance_ids(instances: &[SceneInstance]) -> Result<()> {
    let mut seen = HashSet::new();
    for inst in instances {
        if inst.instance_id == 0 {
            return Err(Error::invalid("instance id 0 is reserved for background"));
        }
        if !seen.insert(inst.instance_id) {
            return Err(Error::invalid(format!(
                "duplicate instance id {}",
                inst.instance_id
            )));
        }
    }
    Ok(())
}

/// Converts a raster into the three ground-truth images. A pixel is valid in
/// all three outputs or in none.
pub fn raster_to_output(raster: &Raster, instances: &[SceneInstance]) -> RenderOutput {
    let (w, h) = (raster.width, raster.height);
    let mut nocs = NocsMap::new(w, h);
    let mut depth = DepthMap::new(w, h);
    let mut mask = InstanceMask::new(w, h);
    for idx in 0..w * h {
        let Some((inst, _)) = raster.owner(idx) else { continue };
        let mm = meters_to_mm(raster.z[idx]);
        if mm == 0 {
            continue;
        }
        depth.data[idx] = mm;
        mask.data[idx] = instances[inst].instance_id;
        nocs.data[idx] = raster.nocs[idx];
        nocs.valid[idx] = true;
    }
    RenderOutput { nocs, depth, mask }
}

/// Renders ground-truth NOCS map, depth (mm) and instance mask.
pub fn render_scene(instances: &[SceneInstance], intr: &Intrinsics) -> Result<RenderOutput> {
    intr.validate()?;
    check_instance_ids(instances)?;
    let raster = rasterize(instances, intr);
    Ok(raster_to_output(&raster, instances))
}

/// Whether at least `min_pixels` of the instance's visible mask pixels are
/// covered by its tagged handle triangles.
pub fn handle_visibility(
    instance: &SceneInstance,
    mask: &InstanceMask,
    intr: &Intrinsics,
    min_pixels: usize,
) -> Result<bool> {
    let Some(handle) = &instance.mesh.mesh.handle else {
        return Err(Error::NotApplicable("mesh has no handle tag"));
    };
    if mask.width != intr.width || mask.height != intr.height {
        return Err(Error::invalid("mask size differs from intrinsics"));
    }
    let handle: HashSet<u32> = handle.iter().map(|&t| t as u32).collect();
    let raster = rasterize(std::slice::from_ref(instance), intr);
    let visible = (0..mask.data.len())
        .filter(|&idx| {
            mask.data[idx] == instance.instance_id
                && raster.instance[idx] == 0
                && handle.contains(&raster.triangle[idx])
        })
        .count();
    Ok(visible >= min_pixels)
}
