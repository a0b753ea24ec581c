//! Procedural stand-ins for the six tabletop categories. Models are built
//! upright (+y up, front facing +z) and returned canonicalized; the mug's
//! handle triangles are tagged.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::Rng;

use crate::canonical::{canonicalize, CanonicalMesh, Mesh};
use crate::error::{Error, Result};
use crate::geom::axis_rotation;

const SEGMENTS: usize = 32;

/// Surface of revolution about +y from a `(radius, height)` profile.
/// Profile ends with zero radius close the solid.
fn lathe(profile: &[(f64, f64)]) -> Mesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for &(r, y) in profile {
        for k in 0..SEGMENTS {
            let a = TAU * k as f64 / SEGMENTS as f64;
            vertices.push(Vector3::new(r * a.cos(), y, r * a.sin()));
        }
    }
    for ring in 0..profile.len() - 1 {
        let (lo, hi) = (ring * SEGMENTS, (ring + 1) * SEGMENTS);
        for k in 0..SEGMENTS {
            let k1 = (k + 1) % SEGMENTS;
            if profile[ring].0 > 0.0 {
                triangles.push([lo + k, lo + k1, hi + k1]);
            }
            if profile[ring + 1].0 > 0.0 {
                triangles.push([lo + k, hi + k1, hi + k]);
            }
        }
    }
    Mesh {
        vertices,
        triangles,
        handle: None,
    }
}

fn cuboid(center: Vector3<f64>, size: Vector3<f64>) -> Mesh {
    let h = size / 2.0;
    let vertices = (0..8)
        .map(|i| {
            center
                + Vector3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
        })
        .collect();
    let quads = [
        [0, 2, 6, 4],
        [1, 5, 7, 3],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 6, 7, 5],
    ];
    Mesh {
        vertices,
        triangles: quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect(),
        handle: None,
    }
}

/// Half torus in the xy-plane on the +x side of the y axis.
fn handle_arc(center: Vector3<f64>, major: f64, minor: f64) -> Mesh {
    let (rings, sides) = (16usize, 12usize);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for i in 0..=rings {
        let phi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / rings as f64;
        let dir = Vector3::new(phi.cos(), phi.sin(), 0.0);
        for j in 0..sides {
            let psi = TAU * j as f64 / sides as f64;
            vertices.push(center + dir * (major + minor * psi.cos()) + Vector3::z() * minor * psi.sin());
        }
    }
    for i in 0..rings {
        for j in 0..sides {
            let j1 = (j + 1) % sides;
            let (a, b) = (i * sides, (i + 1) * sides);
            triangles.push([a + j, a + j1, b + j1]);
            triangles.push([a + j, b + j1, b + j]);
        }
    }
    Mesh {
        vertices,
        triangles,
        handle: None,
    }
}

fn rotated(mesh: Mesh, axis: Vector3<f64>, degrees: f64, offset: Vector3<f64>) -> Mesh {
    let r = axis_rotation(&axis, degrees);
    Mesh {
        vertices: mesh.vertices.iter().map(|v| r * v + offset).collect(),
        ..mesh
    }
}

/// Shape parameters; `jitter` scales the free proportions of each category.
fn build(name: &str, jitter: &mut dyn FnMut() -> f64) -> Option<Mesh> {
    let mesh = match name {
        "bottle" => {
            let r = 0.035 * jitter();
            let body = 0.16 * jitter();
            let neck_r = r * 0.4;
            let neck = 0.05 * jitter();
            lathe(&[
                (0.0, 0.0),
                (r, 0.0),
                (r, body),
                (r * 0.9, body + 0.02),
                (neck_r, body + 0.045),
                (neck_r, body + 0.045 + neck),
                (0.0, body + 0.045 + neck),
            ])
        }
        "bowl" => {
            let rim = 0.08 * jitter();
            let depth = 0.06 * jitter();
            let foot = rim * 0.45;
            let wall = 0.006;
            lathe(&[
                (0.0, 0.0),
                (foot, 0.0),
                (rim * 0.85, depth * 0.6),
                (rim, depth),
                (rim - wall, depth),
                (rim * 0.85 - wall, depth * 0.6),
                (foot - wall, wall),
                (0.0, wall),
            ])
        }
        "can" => {
            let r = 0.033 * jitter();
            let h = 0.12 * jitter();
            lathe(&[
                (0.0, 0.0),
                (r * 0.92, 0.0),
                (r, 0.008),
                (r, h - 0.008),
                (r * 0.92, h),
                (0.0, h),
            ])
        }
        "mug" => {
            let r = 0.04 * jitter();
            let h = 0.095 * jitter();
            let wall = 0.005;
            let mut body = lathe(&[
                (0.0, 0.0),
                (r, 0.0),
                (r, h),
                (r - wall, h),
                (r - wall, wall),
                (0.0, wall),
            ]);
            let major = h * 0.3;
            let handle = handle_arc(Vector3::new(r, h * 0.5, 0.0), major, 0.007);
            body.append(&handle, true);
            body
        }
        "camera" => {
            let size = Vector3::new(0.12 * jitter(), 0.08 * jitter(), 0.06 * jitter());
            let mut m = cuboid(Vector3::new(0.0, size.y / 2.0, 0.0), size);
            let lens_r = size.y * 0.32;
            let lens_len = 0.05 * jitter();
            let lens = lathe(&[(0.0, 0.0), (lens_r, 0.0), (lens_r, lens_len), (0.0, lens_len)]);
            m.append(
                &rotated(
                    lens,
                    Vector3::x(),
                    90.0,
                    Vector3::new(0.0, size.y * 0.5, size.z / 2.0),
                ),
                false,
            );
            m.append(
                &cuboid(
                    Vector3::new(-size.x * 0.3, size.y + 0.008, 0.0),
                    Vector3::new(size.x * 0.25, 0.016, size.z * 0.6),
                ),
                false,
            );
            m
        }
        "laptop" => {
            let w = 0.32 * jitter();
            let d = 0.22 * jitter();
            let t = 0.015;
            let mut m = cuboid(Vector3::new(0.0, t / 2.0, 0.0), Vector3::new(w, t, d));
            // Screen hinged at the back edge, opened to 105 degrees.
            let screen = cuboid(Vector3::new(0.0, d / 2.0, 0.0), Vector3::new(w, d, 0.008));
            m.append(
                &rotated(screen, Vector3::x(), -15.0, Vector3::new(0.0, t, -d / 2.0)),
                false,
            );
            m
        }
        _ => return None,
    };
    Some(mesh)
}

/// Known procedural category names.
pub const CATEGORY_NAMES: [&str; 6] = ["bottle", "bowl", "camera", "can", "laptop", "mug"];

/// Canonical mesh of the category's nominal (unjittered) shape.
pub fn nominal(name: &str) -> Option<CanonicalMesh> {
    build(name, &mut || 1.0).map(|m| canonicalize(&m).expect("nominal shapes are valid"))
}

pub fn nominal_extents(name: &str) -> Option<Vector3<f64>> {
    nominal(name).map(|c| c.nocs_extents)
}

/// A random instance of the category; proportions vary by up to ±12%.
pub fn generate<R: Rng + ?Sized>(name: &str, rng: &mut R) -> Result<CanonicalMesh> {
    let mesh = build(name, &mut || rng.gen_range(0.88..1.12))
        .ok_or_else(|| Error::invalid(format!("no procedural generator for {name:?}")))?;
    canonicalize(&mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn aligned_iou(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        let inter: f64 = (0..3).map(|k| a[k].min(b[k])).product();
        inter / (a.product() + b.product() - inter)
    }

    #[test]
    fn every_category_builds_a_valid_canonical_mesh() {
        for name in CATEGORY_NAMES {
            let c = nominal(name).unwrap();
            c.mesh.validate().unwrap();
            assert!((c.nocs_extents.norm() - 1.0).abs() < 1e-9);
            assert_eq!(c.mesh.handle.is_some(), name == "mug");
        }
        assert!(nominal("teapot").is_none());
    }

    #[test]
    fn instances_stay_close_to_category_prior() {
        // Same-centered boxes with the prior extents must stay well above the
        // 50% IoU gate for every generated instance.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for name in CATEGORY_NAMES {
            let prior = nominal_extents(name).unwrap();
            for _ in 0..200 {
                let inst = generate(name, &mut rng).unwrap();
                let iou = aligned_iou(&inst.nocs_extents, &prior);
                assert!(iou > 0.6, "{name}: iou {iou}");
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate("mug", &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate("mug", &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }
}
