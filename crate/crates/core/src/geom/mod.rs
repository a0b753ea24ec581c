//! Camera model, similarity transforms, depth back-projection and the
//! pose-error / box-overlap measures used throughout the pipeline.

mod boxes;
mod metrics;

pub use boxes::{box_iou, box_iou_exact, ConvexPolytope, OrientedBox3, DEFAULT_SYMMETRY_STEP_DEG};
pub use metrics::{projection_error_2d, rotation_error, translation_error, Symmetry};

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality / determinant tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// Pinhole camera. Pixel `(u, v)` refers to the pixel whose center sits at
/// integer image coordinates `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::invalid("cx outside the image"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid("cy outside the image"));
        }
        Ok(())
    }

    /// Camera used by the default 640x480 pipeline.
    pub fn default_vga() -> Self {
        Intrinsics {
            fx: 577.5,
            fy: 577.5,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Perspective projection to continuous pixel coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> Result<(f64, f64)> {
        if p.z <= 0.0 {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-space point at depth `z` (meters) along the ray through `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }
}

/// 7-DoF transform `x -> s * R * x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        if !is_rotation(&rotation, ROTATION_TOL) {
            return Err(Error::invalid("rotation is not orthonormal with det +1"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        Ok(SimilarityTransform {
            scale,
            rotation,
            translation,
        })
    }

    /// Like [`SimilarityTransform::new`] but projects a nearly-orthonormal
    /// matrix (hand-written or rounded pose files) onto SO(3) first.
    pub fn new_projected(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !is_rotation(&rotation, 1e-3) {
            return Err(Error::invalid("rotation is not close to orthonormal"));
        }
        Self::new(scale, nearest_rotation(&rotation), translation)
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Self {
        SimilarityTransform {
            scale,
            rotation,
            translation,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rt = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation as nine row-major entries.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    if !r.iter().all(|v| v.is_finite()) {
        return false;
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    ortho <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Closest rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Rotation by `degrees` about `axis` (normalized internally).
pub fn axis_rotation(axis: &Vector3<f64>, degrees: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), degrees.to_radians()).into_inner()
}

/// Point set, optionally remembering the linear pixel index each point came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub pixels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        PointCloud {
            points,
            pixels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            pixels: self.pixels.clone(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            pixels: self
                .pixels
                .as_ref()
                .map(|px| indices.iter().map(|&i| px[i]).collect()),
        }
    }
}

/// Depth image in millimeters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("depth buffer length does not match dimensions"));
        }
        Ok(DepthMap {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.width + u]
    }

    /// Depth in meters, `None` where invalid.
    pub fn meters_at(&self, idx: usize) -> Option<f64> {
        match self.data[idx] {
            0 => None,
            mm => Some(mm as f64 * 1e-3),
        }
    }
}

/// Converts meters to the stored millimeter encoding (0 when out of range).
pub fn meters_to_mm(z: f64) -> u16 {
    let mm = (z * 1000.0).round();
    if mm >= 1.0 && mm <= u16::MAX as f64 {
        mm as u16
    } else {
        0
    }
}

/// Per-pixel instance ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl InstanceMask {
    pub fn new(width: usize, height: usize) -> Self {
        InstanceMask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("mask buffer length does not match dimensions"));
        }
        Ok(InstanceMask {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    pub fn count(&self, instance_id: u8) -> usize {
        self.data.iter().filter(|&&m| m == instance_id).count()
    }

    /// Sorted distinct nonzero ids.
    pub fn instance_ids(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &m in &self.data {
            seen[m as usize] = true;
        }
        (1..=255u8).filter(|&i| seen[i as usize]).collect()
    }
}

/// Back-projects masked depth pixels into camera space (meters).
///
/// With `instance = Some(k)` only pixels labelled `k` are used, otherwise any
/// nonzero mask pixel. The linear pixel index of every point is recorded.
pub fn backproject(
    depth: &DepthMap,
    mask: &InstanceMask,
    intr: &Intrinsics,
    instance: Option<u8>,
) -> Result<PointCloud> {
    if depth.width != intr.width
        || depth.height != intr.height
        || mask.width != intr.width
        || mask.height != intr.height
    {
        return Err(Error::invalid(format!(
            "image sizes differ: depth {}x{}, mask {}x{}, intrinsics {}x{}",
            depth.width, depth.height, mask.width, mask.height, intr.width, intr.height
        )));
    }
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for (idx, (&d, &m)) in depth.data.iter().zip(&mask.data).enumerate() {
        let selected = match instance {
            Some(k) => m == k && k != 0,
            None => m != 0,
        };
        if !selected || d == 0 {
            continue;
        }
        let u = (idx % intr.width) as f64;
        let v = (idx / intr.width) as f64;
        points.push(intr.unproject(u, v, d as f64 * 1e-3));
        pixels.push(idx);
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud {
        points,
        pixels: Some(pixels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn intr() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn principal_point_ray() {
        let intr = intr();
        let mut depth = DepthMap::new(640, 480);
        let mut mask = InstanceMask::new(640, 480);
        depth.data[240 * 640 + 320] = 1000;
        mask.data[240 * 640 + 320] = 1;
        let cloud = backproject(&depth, &mask, &intr, Some(1)).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_abs_diff_eq!(cloud.points[0], Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_eq!(cloud.pixels.unwrap(), vec![240 * 640 + 320]);
    }

    #[test]
    fn lateral_pixel_matches_pinhole_arithmetic() {
        // (u - cx) * z / fx = (820 - 320) * 1 / 500 = 1.0
        let intr = Intrinsics::new(500.0, 500.0, 320.0, 240.0, 1000, 480).unwrap();
        let mut depth = DepthMap::new(1000, 480);
        let mut mask = InstanceMask::new(1000, 480);
        depth.data[240 * 1000 + 820] = 1000;
        mask.data[240 * 1000 + 820] = 3;
        let cloud = backproject(&depth, &mask, &intr, None).unwrap();
        assert_abs_diff_eq!(cloud.points[0], Vector3::new(1.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn empty_mask_is_empty_cloud() {
        let intr = intr();
        let mut depth = DepthMap::new(640, 480);
        depth.data.fill(1000);
        let mask = InstanceMask::new(640, 480);
        assert!(matches!(
            backproject(&depth, &mask, &intr, None),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn dimension_mismatch_is_invalid() {
        let intr = intr();
        let depth = DepthMap::new(320, 240);
        let mask = InstanceMask::new(640, 480);
        assert!(matches!(
            backproject(&depth, &mask, &intr, None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn intrinsics_reject_bad_principal_point() {
        assert!(Intrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
        assert!(Intrinsics::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn similarity_rejects_reflection() {
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(SimilarityTransform::new(1.0, refl, Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn projected_constructor_accepts_rounded_rotation() {
        let r = Matrix3::new(0.7071, -0.7071, 0.0, 0.7071, 0.7071, 0.0, 0.0, 0.0, 1.0);
        let t = SimilarityTransform::new_projected(1.0, r, Vector3::zeros()).unwrap();
        assert!(is_rotation(t.rotation(), 1e-12));
    }

    fn arb_transform() -> impl Strategy<Value = SimilarityTransform> {
        (
            0.05f64..20.0,
            prop::array::uniform3(-1.0f64..1.0),
            -180.0f64..180.0,
            prop::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter_map("zero axis", |(s, axis, angle, t)| {
                let axis = Vector3::from(axis);
                (axis.norm() > 1e-3).then(|| {
                    SimilarityTransform::new(s, axis_rotation(&axis, angle), Vector3::from(t))
                        .unwrap()
                })
            })
    }

    proptest! {
        #[test]
        fn inverse_round_trip(t in arb_transform()) {
            let id = t.inverse().compose(&t);
            prop_assert!((id.scale() - 1.0).abs() < 1e-9);
            prop_assert!((id.rotation() - Matrix3::identity()).amax() < 1e-9);
            prop_assert!(id.translation().amax() < 1e-9);
        }

        #[test]
        fn compose_matches_sequential_application(a in arb_transform(), b in arb_transform(),
                                                  p in prop::array::uniform3(-1.0f64..1.0)) {
            let p = Vector3::from(p);
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).amax() < 1e-9 * (1.0 + rhs.amax()));
        }

        #[test]
        fn backproject_then_project_recovers_pixel(u in 0usize..640, v in 0usize..480, mm in 1u16..60000) {
            let intr = intr();
            let mut depth = DepthMap::new(640, 480);
            let mut mask = InstanceMask::new(640, 480);
            depth.data[v * 640 + u] = mm;
            mask.data[v * 640 + u] = 7;
            let cloud = backproject(&depth, &mask, &intr, Some(7)).unwrap();
            let (pu, pv) = intr.project(&cloud.points[0]).unwrap();
            prop_assert!((pu - u as f64).abs() < 1e-9);
            prop_assert!((pv - v as f64).abs() < 1e-9);
        }
    }
}
