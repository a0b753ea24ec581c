use nalgebra::{Matrix3, Vector3};

use super::{axis_rotation, SimilarityTransform, Symmetry};

/// Angular resolution of the symmetric-IoU sweep.
pub const DEFAULT_SYMMETRY_STEP_DEG: f64 = 1.0;

const PLANE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3 {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    /// Full side lengths along the box's local axes.
    pub extents: Vector3<f64>,
}

impl OrientedBox3 {
    pub fn new(center: Vector3<f64>, rotation: Matrix3<f64>, extents: Vector3<f64>) -> Self {
        debug_assert!(extents.iter().all(|&e| e > 0.0));
        OrientedBox3 {
            center,
            rotation,
            extents,
        }
    }

    /// Box of an object whose pose maps centered NOCS coordinates to camera
    /// space; `dimensions` are the metric side lengths.
    pub fn from_pose(pose: &SimilarityTransform, dimensions: &Vector3<f64>) -> Self {
        OrientedBox3::new(*pose.translation(), *pose.rotation(), *dimensions)
    }

    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }

    pub fn half_diagonal(&self) -> f64 {
        self.extents.norm() / 2.0
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.extents / 2.0;
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let local = Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            *c = self.center + self.rotation * local;
        }
        out
    }

    /// The six bounding half-spaces as `(n, d)` with `n·x <= d` inside.
    pub fn half_spaces(&self) -> [(Vector3<f64>, f64); 6] {
        let mut out = [(Vector3::zeros(), 0.0); 6];
        for axis in 0..3 {
            let n: Vector3<f64> = self.rotation.column(axis).into();
            let c = n.dot(&self.center);
            let h = self.extents[axis] / 2.0;
            out[2 * axis] = (n, c + h);
            out[2 * axis + 1] = (-n, -c + h);
        }
        out
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let local = self.rotation.transpose() * (p - self.center);
        (0..3).all(|i| local[i].abs() <= self.extents[i] / 2.0)
    }

    /// Same box spun by `degrees` about `axis` given in the box frame.
    pub fn spun(&self, axis: &Vector3<f64>, degrees: f64) -> OrientedBox3 {
        OrientedBox3 {
            rotation: self.rotation * axis_rotation(axis, degrees),
            ..*self
        }
    }
}

/// Convex polytope stored as a list of planar faces.
#[derive(Debug, Clone, Default)]
pub struct ConvexPolytope {
    pub faces: Vec<Vec<Vector3<f64>>>,
}

impl ConvexPolytope {
    pub fn from_box(b: &OrientedBox3) -> Self {
        let c = b.corners();
        // Corner index bits: x = 1, y = 2, z = 4.
        let quads = [
            [0, 2, 6, 4],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 5, 7, 6],
        ];
        ConvexPolytope {
            faces: quads
                .iter()
                .map(|q| q.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Keeps the part with `n·x <= d`.
    pub fn clip(&self, n: &Vector3<f64>, d: f64) -> ConvexPolytope {
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vector3<f64>> = Vec::new();
        for face in &self.faces {
            let dist: Vec<f64> = face.iter().map(|p| n.dot(p) - d).collect();
            if dist.iter().all(|&s| s.abs() <= PLANE_EPS) {
                // Face lies on the cutting plane; the cap will represent it.
                cap.extend(face.iter().copied());
                continue;
            }
            let mut out = Vec::with_capacity(face.len() + 1);
            for i in 0..face.len() {
                let j = (i + 1) % face.len();
                let (dc, dn) = (dist[i], dist[j]);
                if dc <= PLANE_EPS {
                    out.push(face[i]);
                    if dc.abs() <= PLANE_EPS {
                        cap.push(face[i]);
                    }
                }
                if (dc < -PLANE_EPS && dn > PLANE_EPS) || (dc > PLANE_EPS && dn < -PLANE_EPS) {
                    let t = dc / (dc - dn);
                    let p = face[i] + (face[j] - face[i]) * t;
                    out.push(p);
                    cap.push(p);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if faces.is_empty() {
            return ConvexPolytope::default();
        }
        if let Some(cap_face) = order_on_plane(cap, n) {
            faces.push(cap_face);
        }
        ConvexPolytope { faces }
    }

    pub fn volume(&self) -> f64 {
        let count: usize = self.faces.iter().map(Vec::len).sum();
        if count == 0 {
            return 0.0;
        }
        let inner = self.faces.iter().flatten().sum::<Vector3<f64>>() / count as f64;
        let mut vol = 0.0;
        for face in &self.faces {
            let a = face[0] - inner;
            for k in 1..face.len() - 1 {
                let b = face[k] - inner;
                let c = face[k + 1] - inner;
                vol += a.dot(&b.cross(&c)).abs();
            }
        }
        vol / 6.0
    }
}

fn order_on_plane(mut pts: Vec<Vector3<f64>>, n: &Vector3<f64>) -> Option<Vec<Vector3<f64>>> {
    let scale = pts.iter().map(|p| p.amax()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut unique: Vec<Vector3<f64>> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if !unique.iter().any(|q| (q - p).amax() <= tol) {
            unique.push(p);
        }
    }
    if unique.len() < 3 {
        return None;
    }
    let center = unique.iter().sum::<Vector3<f64>>() / unique.len() as f64;
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let mut keyed: Vec<(f64, Vector3<f64>)> = unique
        .into_iter()
        .map(|p| {
            let r = p - center;
            (r.dot(&e2).atan2(r.dot(&e1)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Exact IoU of two oriented boxes by clipping one against the other.
pub fn box_iou_exact(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    if (a.center - b.center).norm() > a.half_diagonal() + b.half_diagonal() {
        return 0.0;
    }
    let mut poly = ConvexPolytope::from_box(a);
    for (n, d) in b.half_spaces() {
        poly = poly.clip(&n, d);
        if poly.is_empty() {
            return 0.0;
        }
    }
    let inter = poly.volume();
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// 3D IoU; for axially symmetric objects `a` is swept about its own symmetry
/// axis in `angular_step` increments and the best overlap is returned.
pub fn box_iou(a: &OrientedBox3, b: &OrientedBox3, sym: &Symmetry, angular_step: f64) -> f64 {
    match sym {
        Symmetry::None => box_iou_exact(a, b),
        Symmetry::Axial(axis) => {
            if (a.center - b.center).norm() > a.half_diagonal() + b.half_diagonal() {
                return 0.0;
            }
            let steps = (360.0 / angular_step).round().max(1.0) as usize;
            let step = 360.0 / steps as f64;
            (0..steps)
                .map(|k| box_iou_exact(&a.spun(axis, k as f64 * step), b))
                .fold(0.0, f64::max)
        }
    }
}
