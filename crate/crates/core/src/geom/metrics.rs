use nalgebra::{Matrix3, Vector3};

use super::{Intrinsics, PointCloud, SimilarityTransform};
use crate::error::{Error, Result};

/// Rotational symmetry of an object in its canonical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symmetry {
    None,
    /// Continuous symmetry about a unit axis expressed in the object frame.
    Axial(Vector3<f64>),
}

impl Symmetry {
    pub fn axis(&self) -> Option<&Vector3<f64>> {
        match self {
            Symmetry::None => None,
            Symmetry::Axial(a) => Some(a),
        }
    }
}

/// Geodesic rotation distance in degrees.
///
/// For an axially symmetric object only the direction of the mapped symmetry
/// axis is compared, so spinning about that axis costs nothing.
pub fn rotation_error(ra: &Matrix3<f64>, rb: &Matrix3<f64>, sym: &Symmetry) -> f64 {
    match sym {
        Symmetry::None => {
            let rel = ra.transpose() * rb;
            let sin2 = Vector3::new(
                rel[(2, 1)] - rel[(1, 2)],
                rel[(0, 2)] - rel[(2, 0)],
                rel[(1, 0)] - rel[(0, 1)],
            )
            .norm();
            let cos2 = rel.trace() - 1.0;
            sin2.atan2(cos2).to_degrees()
        }
        Symmetry::Axial(axis) => {
            let a = ra * axis;
            let b = rb * axis;
            a.cross(&b).norm().atan2(a.dot(&b)).to_degrees()
        }
    }
}

/// Euclidean distance between translations, meters in, centimeters out.
pub fn translation_error(ta: &Vector3<f64>, tb: &Vector3<f64>) -> f64 {
    (ta - tb).norm() * 100.0
}

/// Mean pixel distance between the projections of `model_pts` under two poses.
pub fn projection_error_2d(
    pose_a: &SimilarityTransform,
    pose_b: &SimilarityTransform,
    model_pts: &PointCloud,
    intr: &Intrinsics,
) -> Result<f64> {
    if model_pts.is_empty() {
        return Err(Error::invalid("model point set is empty"));
    }
    let mut total = 0.0;
    for p in &model_pts.points {
        let (ua, va) = intr.project(&pose_a.apply(p))?;
        let (ub, vb) = intr.project(&pose_b.apply(p))?;
        total += (ua - ub).hypot(va - vb);
    }
    Ok(total / model_pts.len() as f64)
}
