//! Random upright object placement on detected supporting planes.

use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::planes::PlaneModel;
use super::polygon::{self, Point2};
use crate::canonical::{CanonicalMesh, NOCS_CENTER};
use crate::error::{Error, Result};
use crate::geom::{axis_rotation, SimilarityTransform};

/// Largest allowed footprint overlap, as a fraction of the smaller footprint.
pub const MAX_FOOTPRINT_OVERLAP: f64 = 0.3;

/// Closest allowed vertex depth for a placed object, meters.
const MIN_OBJECT_DEPTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// Index into the mesh list the placement was sampled from.
    pub mesh: usize,
    /// Maps centered NOCS coordinates to camera space.
    pub pose: SimilarityTransform,
    /// Index into the plane list.
    pub plane: usize,
    /// Convex hull of the object's vertices projected onto the plane.
    pub footprint: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementOutcome {
    pub placements: Vec<Placement>,
    /// False when fewer than the requested count fit within the attempt budget.
    pub complete: bool,
}

/// Rotation taking `from` onto `to` (both unit).
fn align(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    match Rotation3::rotation_between(from, to) {
        Some(r) => r.into_inner(),
        None => {
            let perp = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
            axis_rotation(&from.cross(&perp), 180.0)
        }
    }
}

/// Incremental placer that remembers accepted footprints.
#[derive(Debug)]
pub struct Placer<'a> {
    planes: &'a [PlaneModel],
    cumulative_area: Vec<f64>,
    accepted: Vec<Placement>,
    pub attempts_per_object: usize,
}

impl<'a> Placer<'a> {
    pub fn new(planes: &'a [PlaneModel]) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::invalid("placement needs at least one plane"));
        }
        let mut total = 0.0;
        let cumulative_area = planes
            .iter()
            .map(|p| {
                total += p.area().max(0.0);
                total
            })
            .collect();
        if total <= 0.0 {
            return Err(Error::invalid("support polygons have zero area"));
        }
        Ok(Placer {
            planes,
            cumulative_area,
            accepted: Vec::new(),
            attempts_per_object: 200,
        })
    }

    pub fn placements(&self) -> &[Placement] {
        &self.accepted
    }

    pub fn into_placements(self) -> Vec<Placement> {
        self.accepted
    }

    fn pick_plane<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative_area.last().expect("nonempty");
        let x = rng.gen_range(0.0..total);
        self.cumulative_area.partition_point(|&c| c <= x).min(self.planes.len() - 1)
    }

    fn sample_point<R: Rng>(plane: &PlaneModel, rng: &mut R) -> Option<Point2> {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &plane.polygon {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return None;
        }
        (0..100)
            .map(|_| [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])])
            .find(|&q| plane.polygon_contains(q))
    }

    /// Tries to place one object; returns its index in the accepted list.
    pub fn place<R: Rng>(
        &mut self,
        mesh_index: usize,
        mesh: &CanonicalMesh,
        scale_range: [f64; 2],
        rng: &mut R,
    ) -> Result<Option<usize>> {
        if !(scale_range[0] > 0.0 && scale_range[0] <= scale_range[1] && scale_range[1].is_finite()) {
            return Err(Error::invalid("scale_range must satisfy 0 < lo <= hi"));
        }
        let centered: Vec<Vector3<f64>> =
            mesh.mesh.vertices.iter().map(|v| v - NOCS_CENTER).collect();
        for _ in 0..self.attempts_per_object {
            let plane_index = self.pick_plane(rng);
            let plane = &self.planes[plane_index];
            let Some(q) = Self::sample_point(plane, rng) else { continue };
            let yaw = rng.gen_range(0.0..360.0);
            let s = if scale_range[0] == scale_range[1] {
                scale_range[0]
            } else {
                rng.gen_range(scale_range[0]..scale_range[1])
            };
            let rotation = align(&Vector3::y(), &plane.normal) * axis_rotation(&Vector3::y(), yaw);
            let lowest = centered
                .iter()
                .map(|v| plane.normal.dot(&(rotation * v * s)))
                .fold(f64::INFINITY, f64::min);
            let translation = plane.from_plane(q) - plane.normal * lowest;
            let pose = SimilarityTransform::new(s, rotation, translation)?;
            let placed: Vec<Vector3<f64>> = centered.iter().map(|v| pose.apply(v)).collect();
            if placed.iter().any(|p| p.z < MIN_OBJECT_DEPTH) {
                continue;
            }
            let projected: Vec<Point2> = placed.iter().map(|p| plane.to_plane(p)).collect();
            let footprint = polygon::convex_hull(&projected);
            if !footprint.iter().all(|&p| plane.polygon_contains(p)) {
                continue;
            }
            let area = polygon::area(&footprint);
            let collides = self.accepted.iter().any(|other| {
                other.plane == plane_index && {
                    let inter = polygon::area(&polygon::intersection(&footprint, &other.footprint));
                    inter > MAX_FOOTPRINT_OVERLAP * area.min(polygon::area(&other.footprint))
                }
            });
            if collides {
                continue;
            }
            self.accepted.push(Placement {
                mesh: mesh_index,
                pose,
                plane: plane_index,
                footprint,
            });
            return Ok(Some(self.accepted.len() - 1));
        }
        Ok(None)
    }
}

/// Places `count` objects, choosing meshes uniformly from `meshes`.
pub fn sample_placements(
    planes: &[PlaneModel],
    meshes: &[Arc<CanonicalMesh>],
    count: usize,
    scale_range: [f64; 2],
    rng_seed: u64,
) -> Result<PlacementOutcome> {
    if meshes.is_empty() && count > 0 {
        return Err(Error::invalid("placement needs at least one mesh"));
    }
    let mut placer = Placer::new(planes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..count {
        let k = rng.gen_range(0..meshes.len());
        placer.place(k, &meshes[k], scale_range, &mut rng)?;
    }
    let placements = placer.into_placements();
    Ok(PlacementOutcome {
        complete: placements.len() == count,
        placements,
    })
}
