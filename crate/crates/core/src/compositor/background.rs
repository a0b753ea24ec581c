//! RGB-D backgrounds: loaded captures or seeded synthetic tabletop rooms.

use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{meters_to_mm, DepthMap, Intrinsics};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub intr: Intrinsics,
}

impl Background {
    pub fn new(rgb: RgbImage, depth: DepthMap, intr: Intrinsics) -> Result<Self> {
        intr.validate()?;
        let (w, h) = (intr.width, intr.height);
        if rgb.width() as usize != w || rgb.height() as usize != h || depth.width != w || depth.height != h {
            return Err(Error::invalid("background images differ in size from intrinsics"));
        }
        Ok(Background { rgb, depth, intr })
    }

    /// Loads a paired RGB PNG and 16-bit depth PNG.
    pub fn load(rgb: &Path, depth: &Path, intr: Intrinsics) -> Result<Self> {
        Background::new(io::read_rgb_png(rgb)?, io::read_depth_png(depth)?, intr)
    }
}

/// Axis-aligned box in the room frame (y up, meters).
#[derive(Debug, Clone, Copy)]
struct Block {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    color: [f64; 3],
}

impl Block {
    /// Slab test; returns the entry distance and the hit face normal.
    fn hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        let mut normal = Vector3::zeros();
        for k in 0..3 {
            if dir[k].abs() < 1e-15 {
                if origin[k] < self.lo[k] || origin[k] > self.hi[k] {
                    return None;
                }
                continue;
            }
            let (a, b) = ((self.lo[k] - origin[k]) / dir[k], (self.hi[k] - origin[k]) / dir[k]);
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            if near > t0 {
                t0 = near;
                normal = Vector3::zeros();
                normal[k] = -dir[k].signum();
            }
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        (t0 > 0.0).then_some((t0, normal))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabletopConfig {
    /// Camera height above the table top, meters.
    pub camera_height: [f64; 2],
    /// Downward camera pitch, degrees.
    pub pitch_deg: [f64; 2],
    pub max_clutter: usize,
    /// Gaussian depth noise, millimeters.
    pub depth_noise_mm: f64,
}

impl Default for TabletopConfig {
    fn default() -> Self {
        TabletopConfig {
            camera_height: [0.45, 0.7],
            pitch_deg: [30.0, 50.0],
            max_clutter: 2,
            depth_noise_mm: 1.0,
        }
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A table on a floor in front of a wall, with a few box-shaped clutter
/// objects on the table. The camera looks down at the table.
pub fn synthetic_tabletop(intr: &Intrinsics, cfg: &TabletopConfig, seed: u64) -> Result<Background> {
    intr.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table_top = 0.75;
    let height = rng.gen_range(cfg.camera_height[0]..=cfg.camera_height[1]);
    let pitch = rng.gen_range(cfg.pitch_deg[0]..=cfg.pitch_deg[1]).to_radians();
    let (width, depth) = (rng.gen_range(1.4..1.8), rng.gen_range(0.9..1.2));
    let look = height / pitch.tan();
    let near_edge = (look - depth / 2.0).max(0.05);
    let wall = near_edge + depth + rng.gen_range(0.3..1.0);
    let wood = [rng.gen_range(120.0..170.0), rng.gen_range(85.0..120.0), rng.gen_range(50.0..80.0)];
    let mut blocks = vec![Block {
        lo: Vector3::new(-width / 2.0, 0.0, near_edge),
        hi: Vector3::new(width / 2.0, table_top, near_edge + depth),
        color: wood,
    }];
    for _ in 0..rng.gen_range(0..=cfg.max_clutter) {
        let size = Vector3::new(rng.gen_range(0.05..0.15), rng.gen_range(0.1..0.3), rng.gen_range(0.05..0.15));
        let x = rng.gen_range(-width / 2.0 + 0.1..width / 2.0 - 0.1);
        let z = rng.gen_range(near_edge + 0.1..near_edge + depth - 0.1);
        let base = Vector3::new(x, table_top, z);
        blocks.push(Block {
            lo: base - Vector3::new(size.x / 2.0, 0.0, size.z / 2.0),
            hi: base + Vector3::new(size.x / 2.0, size.y, size.z / 2.0),
            color: [rng.gen_range(40.0..230.0), rng.gen_range(40.0..230.0), rng.gen_range(40.0..230.0)],
        });
    }

    let eye = Vector3::new(0.0, table_top + height, 0.0);
    let forward = Vector3::new(0.0, -pitch.sin(), pitch.cos());
    let right = Vector3::new(-1.0, 0.0, 0.0);
    let down = forward.cross(&right);
    // Columns are the camera axes in room coordinates.
    let cam_to_room = Matrix3::from_columns(&[right, down, forward]);
    let light = Vector3::new(0.3, 1.0, -0.4).normalize();

    let (w, h) = (intr.width, intr.height);
    let mut rgb = RgbImage::new(w as u32, h as u32);
    let mut data = vec![0u16; w * h];
    for v in 0..h {
        for u in 0..w {
            let ray = cam_to_room * intr.unproject(u as f64, v as f64, 1.0);
            let mut best: Option<(f64, Vector3<f64>, [f64; 3])> = None;
            let mut consider = |t: f64, n: Vector3<f64>, c: [f64; 3]| {
                if t > 0.0 && best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, n, c));
                }
            };
            if ray.y < 0.0 {
                let t = -eye.y / ray.y;
                let p = eye + ray * t;
                let checker = ((p.x / 0.3).floor() + (p.z / 0.3).floor()).rem_euclid(2.0);
                let g = 90.0 + 40.0 * checker;
                consider(t, Vector3::y(), [g, g, g * 0.95]);
            }
            if ray.z > 0.0 {
                consider((wall - eye.z) / ray.z, -Vector3::z(), [200.0, 190.0, 165.0]);
            }
            for b in &blocks {
                if let Some((t, n)) = b.hit(&eye, &ray) {
                    consider(t, n, b.color);
                }
            }
            let Some((t, n, color)) = best else { continue };
            let z = t + cfg.depth_noise_mm * 1e-3 * gauss(&mut rng);
            data[v * w + u] = meters_to_mm(z);
            let shade = 0.55 + 0.45 * n.dot(&light).abs();
            let px: [u8; 3] = std::array::from_fn(|k| {
                (color[k] * shade + rng.gen_range(-6.0..6.0)).round().clamp(0.0, 255.0) as u8
            });
            rgb.put_pixel(u as u32, v as u32, Rgb(px));
        }
    }
    Background::new(rgb, DepthMap::from_data(w, h, data)?, *intr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::planes::{detect_planes, PlaneConfig};

    fn small() -> Intrinsics {
        Intrinsics::new(288.75, 288.75, 159.5, 119.5, 320, 240).unwrap()
    }

    #[test]
    fn tabletop_is_seeded_and_dense() {
        let a = synthetic_tabletop(&small(), &TabletopConfig::default(), 5).unwrap();
        let b = synthetic_tabletop(&small(), &TabletopConfig::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = synthetic_tabletop(&small(), &TabletopConfig::default(), 6).unwrap();
        assert_ne!(a.depth, c.depth);
        assert!(a.depth.data.iter().all(|&d| d > 0));
    }

    #[test]
    fn table_is_the_dominant_supporting_plane() {
        let bg = synthetic_tabletop(&small(), &TabletopConfig { max_clutter: 0, ..Default::default() }, 2).unwrap();
        let planes = detect_planes(&bg.depth, &bg.intr, &PlaneConfig::default()).unwrap();
        let top = &planes[0];
        // The camera sits 0.45 to 0.7 m above the table.
        assert!((-top.offset) > 0.44 && (-top.offset) < 0.71, "offset {}", top.offset);
        assert!(top.normal.y < -0.5);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let bg = synthetic_tabletop(&small(), &TabletopConfig::default(), 1).unwrap();
        assert!(Background::new(bg.rgb, DepthMap::new(10, 10), bg.intr).is_err());
    }
}
