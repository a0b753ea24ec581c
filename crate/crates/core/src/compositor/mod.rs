//! Mixed-reality frame generation: synthetic objects rendered onto detected
//! supporting planes of RGB-D backgrounds, with exact ground truth.

pub mod background;
pub mod placement;
pub mod planes;
mod polygon;
pub mod shapes;

use std::sync::Arc;

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use background::{synthetic_tabletop, Background, TabletopConfig};
pub use placement::{sample_placements, Placement, PlacementOutcome, Placer, MAX_FOOTPRINT_OVERLAP};
pub use planes::{detect_planes, PlaneConfig, PlaneModel};

use crate::canonical::{CanonicalMesh, NOCS_CENTER};
use crate::category::CategoryTable;
use crate::error::{Error, Result};
use crate::geom::{meters_to_mm, DepthMap, InstanceMask};
use crate::io::{InstanceRecord, SceneRecord};
use crate::render::{handle_visibility, rasterize, NocsMap, SceneInstance, DEFAULT_HANDLE_MIN_PIXELS};

/// Largest distance between a placed object's lowest point and its plane.
pub const CONTACT_TOLERANCE: f64 = 1e-3;

/// A mesh available for placement together with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryMesh {
    pub mesh: Arc<CanonicalMesh>,
    pub class_id: u32,
    /// Optional path recorded in the scene metadata.
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeConfig {
    /// Direction toward the light, camera frame.
    pub light_dir: [f64; 3],
    pub ambient: f64,
    /// Instances with fewer visible pixels are dropped from the frame.
    pub min_visible_pixels: usize,
    pub handle_min_pixels: usize,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        CompositeConfig {
            light_dir: [-0.3, -0.8, -0.5],
            ambient: 0.3,
            min_visible_pixels: 50,
            handle_min_pixels: DEFAULT_HANDLE_MIN_PIXELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFrame {
    pub rgb: RgbImage,
    pub nocs: NocsMap,
    pub depth: DepthMap,
    pub mask: InstanceMask,
    pub scene: SceneRecord,
    /// The placements that survived visibility filtering, in instance-id order.
    pub placements: Vec<Placement>,
}

fn albedo(class_id: u32) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 7] = [
        [200.0, 60.0, 50.0],
        [60.0, 160.0, 80.0],
        [60.0, 90.0, 200.0],
        [220.0, 190.0, 60.0],
        [150.0, 70.0, 180.0],
        [60.0, 190.0, 200.0],
        [230.0, 230.0, 230.0],
    ];
    PALETTE[class_id as usize % PALETTE.len()]
}

fn scene_instances(placements: &[Placement], library: &[LibraryMesh]) -> Vec<SceneInstance> {
    placements
        .iter()
        .enumerate()
        .map(|(k, p)| SceneInstance {
            mesh: Arc::clone(&library[p.mesh].mesh),
            pose: p.pose,
            class_id: library[p.mesh].class_id,
            instance_id: (k + 1) as u8,
            handle_visible: None,
        })
        .collect()
}

/// Renders `placements` over the background with a depth test against the
/// background depth (zero depth counts as infinitely far).
pub fn composite(
    bg: &Background,
    placements: &[Placement],
    library: &[LibraryMesh],
    image_id: &str,
    cfg: &CompositeConfig,
) -> Result<CompositeFrame> {
    if placements.len() > u8::MAX as usize {
        return Err(Error::invalid("at most 255 instances fit in an 8-bit mask"));
    }
    if let Some(p) = placements.iter().find(|p| p.mesh >= library.len()) {
        return Err(Error::invalid(format!("placement refers to missing mesh {}", p.mesh)));
    }
    let intr = &bg.intr;
    let n = intr.pixel_count();
    let bg_z = |idx: usize| bg.depth.meters_at(idx).unwrap_or(f64::INFINITY);

    let mut kept: Vec<Placement> = placements.to_vec();
    let (instances, raster) = loop {
        let instances = scene_instances(&kept, library);
        let raster = rasterize(&instances, intr);
        let mut visible = vec![0usize; kept.len()];
        for idx in 0..n {
            if let Some((i, _)) = raster.owner(idx) {
                if raster.z[idx] < bg_z(idx) && meters_to_mm(raster.z[idx]) != 0 {
                    visible[i] += 1;
                }
            }
        }
        if visible.iter().all(|&c| c >= cfg.min_visible_pixels) {
            break (instances, raster);
        }
        let mut k = 0;
        kept.retain(|_| {
            k += 1;
            visible[k - 1] >= cfg.min_visible_pixels
        });
    };

    let light = Vector3::from(cfg.light_dir).normalize();
    let normals: Vec<Vec<Vector3<f64>>> = instances
        .iter()
        .map(|inst| {
            let v = &inst.mesh.mesh.vertices;
            inst.mesh
                .mesh
                .triangles
                .iter()
                .map(|t| {
                    let r = inst.pose.rotation();
                    let n = (r * (v[t[1]] - v[t[0]])).cross(&(r * (v[t[2]] - v[t[0]])));
                    n.try_normalize(1e-300).unwrap_or_else(Vector3::zeros)
                })
                .collect()
        })
        .collect();

    let mut rgb = bg.rgb.clone();
    let mut depth = bg.depth.clone();
    let mut mask = InstanceMask::new(intr.width, intr.height);
    let mut nocs = NocsMap::new(intr.width, intr.height);
    for idx in 0..n {
        let Some((i, tri)) = raster.owner(idx) else { continue };
        let z = raster.z[idx];
        let mm = meters_to_mm(z);
        if !(z < bg_z(idx)) || mm == 0 {
            continue;
        }
        depth.data[idx] = mm;
        mask.data[idx] = instances[i].instance_id;
        nocs.data[idx] = raster.nocs[idx];
        nocs.valid[idx] = true;
        let (u, v) = (idx % intr.width, idx / intr.width);
        let view = intr.unproject(u as f64, v as f64, z);
        let mut normal = normals[i][tri];
        if normal.dot(&view) > 0.0 {
            normal = -normal;
        }
        let shade = cfg.ambient + (1.0 - cfg.ambient) * normal.dot(&light).max(0.0);
        let base = albedo(instances[i].class_id);
        rgb.put_pixel(
            u as u32,
            v as u32,
            Rgb(std::array::from_fn(|k| (base[k] * shade).round().clamp(0.0, 255.0) as u8)),
        );
    }

    let mut records = Vec::with_capacity(instances.len());
    for (inst, p) in instances.iter().zip(&kept) {
        let handle_visible = if inst.mesh.mesh.handle.is_some() {
            Some(handle_visibility(inst, &mask, intr, cfg.handle_min_pixels)?)
        } else {
            None
        };
        records.push(InstanceRecord {
            class_id: inst.class_id,
            instance_id: inst.instance_id,
            mesh: library[p.mesh].source.clone(),
            pose: (&inst.pose).into(),
            dimensions: inst.dimensions().into(),
            handle_visible,
        });
    }
    Ok(CompositeFrame {
        rgb,
        nocs,
        depth,
        mask,
        scene: SceneRecord {
            image_id: image_id.to_string(),
            width: intr.width,
            height: intr.height,
            instances: records,
        },
        placements: kept,
    })
}

/// Checks plane contact and polygon containment of a placement.
pub fn verify_placement(plane: &PlaneModel, placement: &Placement, mesh: &CanonicalMesh) -> Result<()> {
    let lowest = mesh
        .mesh
        .vertices
        .iter()
        .map(|v| plane.signed_distance(&placement.pose.apply(&(v - NOCS_CENTER))))
        .fold(f64::INFINITY, f64::min);
    if lowest.abs() > CONTACT_TOLERANCE {
        return Err(Error::GeometryInconsistency { excess: lowest.abs() - CONTACT_TOLERANCE });
    }
    if !plane.polygon_contains(plane.to_plane(placement.pose.translation())) {
        return Err(Error::invalid("placement footprint center lies outside its support polygon"));
    }
    Ok(())
}

/// Seed of frame `index` in a run seeded with `seed`.
pub fn frame_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.gen()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    /// Inclusive range of objects attempted per frame.
    pub objects: [usize; 2],
    pub planes: PlaneConfig,
    pub composite: CompositeConfig,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            objects: [2, 5],
            planes: PlaneConfig::default(),
            composite: CompositeConfig::default(),
        }
    }
}

/// Generates one composited frame with procedurally built instances of the
/// table's categories. Deterministic per (background, seed).
pub fn generate_frame(
    bg: &Background,
    table: &CategoryTable,
    image_id: &str,
    seed: u64,
    cfg: &FrameConfig,
) -> Result<CompositeFrame> {
    let categories: Vec<_> = table
        .categories
        .iter()
        .filter(|c| shapes::CATEGORY_NAMES.contains(&c.name.as_str()))
        .collect();
    if categories.is_empty() {
        return Err(Error::invalid("category table has no procedurally generated categories"));
    }
    if cfg.objects[0] > cfg.objects[1] {
        return Err(Error::invalid("object count range is reversed"));
    }
    let planes = detect_planes(
        &bg.depth,
        &bg.intr,
        &PlaneConfig { rng_seed: seed, ..cfg.planes.clone() },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(cfg.objects[0]..=cfg.objects[1]);
    let mut placer = Placer::new(&planes)?;
    let mut library = Vec::new();
    for _ in 0..count {
        let spec = categories[rng.gen_range(0..categories.len())];
        let mesh = shapes::generate(&spec.name, &mut rng)?;
        if placer.place(library.len(), &mesh, spec.scale_range, &mut rng)?.is_some() {
            library.push(LibraryMesh {
                mesh: Arc::new(mesh),
                class_id: spec.class_id,
                source: None,
            });
        }
    }
    let placements = placer.into_placements();
    for p in &placements {
        verify_placement(&planes[p.plane], p, &library[p.mesh].mesh)?;
    }
    composite(bg, &placements, &library, image_id, &cfg.composite)
}
