//! Supporting-plane extraction from a depth image by sequential RANSAC.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::polygon::{self, Point2};
use crate::error::{Error, Result};
use crate::geom::{DepthMap, Intrinsics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneConfig {
    /// Inlier distance, meters.
    pub distance_threshold: f64,
    /// Hypotheses drawn per extracted plane.
    pub iterations: usize,
    /// Minimum inliers as a fraction of valid depth pixels.
    pub min_support_fraction: f64,
    /// Upper bound on extraction rounds, including rejected planes.
    pub max_planes: usize,
    /// Points used to score each hypothesis.
    pub score_samples: usize,
    /// Camera-frame up direction. Planes whose normal is more than
    /// `max_tilt_deg` from it are discarded; `None` keeps every plane.
    pub up: Option<[f64; 3]>,
    pub max_tilt_deg: f64,
    pub rng_seed: u64,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        PlaneConfig {
            distance_threshold: 0.01,
            iterations: 200,
            min_support_fraction: 0.05,
            max_planes: 5,
            score_samples: 4000,
            up: Some([0.0, -1.0, 0.0]),
            max_tilt_deg: 60.0,
            rng_seed: 0,
        }
    }
}

impl PlaneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0 && self.distance_threshold.is_finite()) {
            return Err(Error::invalid("distance_threshold must be positive"));
        }
        if !(self.min_support_fraction > 0.0 && self.min_support_fraction <= 1.0) {
            return Err(Error::invalid("min_support_fraction must be in (0, 1]"));
        }
        if self.iterations == 0 || self.max_planes == 0 || self.score_samples == 0 {
            return Err(Error::invalid("plane search budgets must be positive"));
        }
        if let Some(up) = self.up {
            if Vector3::from(up).norm() < 1e-12 {
                return Err(Error::invalid("up direction must be nonzero"));
            }
        }
        Ok(())
    }
}

/// A plane `normal · p = offset` facing the camera (`offset < 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Pixel indices `v * width + u` of the inliers.
    pub inliers: Vec<usize>,
    /// In-plane frame: origin on the plane and two orthonormal axes.
    pub origin: Vector3<f64>,
    pub axes: [Vector3<f64>; 2],
    /// Convex hull of the inliers in plane coordinates.
    pub polygon: Vec<Point2>,
}

impl PlaneModel {
    fn new(normal: Vector3<f64>, offset: f64, inliers: Vec<usize>, points: &[Vector3<f64>]) -> Self {
        let origin = normal * offset;
        let seed = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = normal.cross(&seed).normalize();
        let e2 = normal.cross(&e1);
        let mut plane = PlaneModel {
            normal,
            offset,
            inliers,
            origin,
            axes: [e1, e2],
            polygon: Vec::new(),
        };
        let projected: Vec<Point2> = points.iter().map(|p| plane.to_plane(p)).collect();
        plane.polygon = polygon::convex_hull(&projected);
        plane
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn to_plane(&self, p: &Vector3<f64>) -> Point2 {
        let d = p - self.origin;
        [d.dot(&self.axes[0]), d.dot(&self.axes[1])]
    }

    pub fn from_plane(&self, q: Point2) -> Vector3<f64> {
        self.origin + self.axes[0] * q[0] + self.axes[1] * q[1]
    }

    /// Support polygon area, square meters.
    pub fn area(&self) -> f64 {
        polygon::area(&self.polygon)
    }

    pub fn polygon_contains(&self, q: Point2) -> bool {
        polygon::contains(&self.polygon, q)
    }
}

fn plane_through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len < 1e-10 {
        return None;
    }
    let n = n / len;
    Some((n, n.dot(a)))
}

/// Total least-squares plane through the points.
fn refit(points: &[Vector3<f64>], idx: &[usize]) -> Option<(Vector3<f64>, f64)> {
    if idx.len() < 3 {
        return None;
    }
    let mean = idx.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / idx.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i] - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(k).into_owned().normalize();
    Some((n, n.dot(&mean)))
}

/// Extracts camera-facing supporting planes, largest support first.
pub fn detect_planes(depth: &DepthMap, intr: &Intrinsics, cfg: &PlaneConfig) -> Result<Vec<PlaneModel>> {
    intr.validate()?;
    cfg.validate()?;
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::invalid("depth size differs from intrinsics"));
    }
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for idx in 0..depth.data.len() {
        if let Some(z) = depth.meters_at(idx) {
            let (u, v) = (idx % depth.width, idx / depth.width);
            points.push(intr.unproject(u as f64, v as f64, z));
            pixels.push(idx);
        }
    }
    let min_support = ((cfg.min_support_fraction * points.len() as f64).ceil() as usize).max(3);
    let up = cfg.up.map(|u| Vector3::from(u).normalize());
    let min_cos = cfg.max_tilt_deg.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut planes = Vec::new();

    for _ in 0..cfg.max_planes {
        if remaining.len() < min_support {
            break;
        }
        let scoring: Vec<usize> = if remaining.len() <= cfg.score_samples {
            remaining.clone()
        } else {
            remaining.choose_multiple(&mut rng, cfg.score_samples).copied().collect()
        };
        let mut best: Option<((Vector3<f64>, f64), usize)> = None;
        for _ in 0..cfg.iterations {
            let a = points[remaining[rng.gen_range(0..remaining.len())]];
            let b = points[remaining[rng.gen_range(0..remaining.len())]];
            let c = points[remaining[rng.gen_range(0..remaining.len())]];
            let Some((n, d)) = plane_through(&a, &b, &c) else { continue };
            let score = scoring
                .iter()
                .filter(|&&i| (n.dot(&points[i]) - d).abs() <= cfg.distance_threshold)
                .count();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some(((n, d), score));
            }
        }
        let Some(((mut n, mut d), _)) = best else { break };
        let mut inliers: Vec<usize> = Vec::new();
        for _ in 0..3 {
            inliers = remaining
                .iter()
                .copied()
                .filter(|&i| (n.dot(&points[i]) - d).abs() <= cfg.distance_threshold)
                .collect();
            match refit(&points, &inliers) {
                Some(fit) => (n, d) = fit,
                None => break,
            }
        }
        inliers.retain(|&i| (n.dot(&points[i]) - d).abs() <= cfg.distance_threshold);
        if inliers.len() < min_support {
            break;
        }
        if d > 0.0 {
            n = -n;
            d = -d;
        }
        let taken: std::collections::HashSet<usize> = inliers.iter().copied().collect();
        remaining.retain(|i| !taken.contains(i));
        if up.is_some_and(|u| n.dot(&u) < min_cos) {
            continue;
        }
        let inlier_points: Vec<Vector3<f64>> = inliers.iter().map(|&i| points[i]).collect();
        let inlier_pixels = inliers.iter().map(|&i| pixels[i]).collect();
        planes.push(PlaneModel::new(n, d, inlier_pixels, &inlier_points));
    }
    if planes.is_empty() {
        return Err(Error::NoPlaneFound);
    }
    planes.sort_by_key(|p| std::cmp::Reverse(p.inliers.len()));
    Ok(planes)
}
