//! Normalized object coordinate space: mesh normalization and the bin codec
//! used by classification-style NOCS predictions.

mod obj;

pub use obj::{parse_obj, read_canonical, read_obj, write_canonical, write_obj, CanonicalMeta};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// NOCS cube center.
pub const NOCS_CENTER: Vector3<f64> = Vector3::new(0.5, 0.5, 0.5);

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Triangle indices forming a tagged handle part, if any.
    pub handle: Option<Vec<usize>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            handle: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_handle(mut self, handle: Vec<usize>) -> Result<Self> {
        if handle.iter().any(|&t| t >= self.triangles.len()) {
            return Err(Error::invalid("handle triangle index out of range"));
        }
        self.handle = Some(handle);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        let n = self.vertices.len();
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::invalid("triangle references a missing vertex"));
        }
        if !self.vertices.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::invalid("mesh has non-finite vertices"));
        }
        Ok(())
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn scaled(&self, k: f64) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            ..self.clone()
        }
    }

    /// Appends another mesh, optionally tagging its triangles as handle.
    pub fn append(&mut self, other: &Mesh, as_handle: bool) {
        let base = self.vertices.len();
        let tri_base = self.triangles.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
        if as_handle {
            self.handle
                .get_or_insert_with(Vec::new)
                .extend(tri_base..self.triangles.len());
        } else if let Some(h) = &other.handle {
            self.handle
                .get_or_insert_with(Vec::new)
                .extend(h.iter().map(|t| t + tri_base));
        }
    }
}

/// Mesh expressed in NOCS: bbox centered at (0.5, 0.5, 0.5) with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalMesh {
    pub mesh: Mesh,
    /// Side lengths of the tight bbox in NOCS units.
    pub nocs_extents: Vector3<f64>,
    /// Bbox diagonal of the source mesh, meters.
    pub source_scale: f64,
}

impl CanonicalMesh {
    /// Metric side lengths when rendered with uniform scale `s`.
    pub fn dimensions(&self, s: f64) -> Vector3<f64> {
        self.nocs_extents * s
    }
}

/// Uniformly scales and recenters a pre-oriented mesh into NOCS.
pub fn canonicalize(mesh: &Mesh) -> Result<CanonicalMesh> {
    mesh.validate()?;
    let (lo, hi) = mesh.bounds();
    let size = hi - lo;
    let diag = size.norm();
    let magnitude = lo.amax().max(hi.amax()).max(1.0);
    if !(diag > f64::EPSILON * magnitude) {
        return Err(Error::DegenerateMesh);
    }
    let center = (lo + hi) / 2.0;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| (v - center) / diag + NOCS_CENTER)
        .collect();
    Ok(CanonicalMesh {
        mesh: Mesh {
            vertices,
            triangles: mesh.triangles.clone(),
            handle: mesh.handle.clone(),
        },
        nocs_extents: size / diag,
        source_scale: diag,
    })
}

/// Uniform discretization of [0, 1] into `bins` classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinCodec {
    bins: usize,
}

impl BinCodec {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("bin count must be at least 1"));
        }
        Ok(BinCodec { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn quantize(&self, v: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                what: "NOCS coordinate must lie in [0, 1]",
                value: v,
            });
        }
        Ok(((v * self.bins as f64).floor() as usize).min(self.bins - 1))
    }

    /// Bin-center value.
    pub fn dequantize(&self, bin: usize) -> Result<f64> {
        if bin >= self.bins {
            return Err(Error::OutOfRange {
                what: "bin index must be below the bin count",
                value: bin as f64,
            });
        }
        Ok((bin as f64 + 0.5) / self.bins as f64)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn cube(half: f64) -> Mesh {
        let mut vertices = Vec::new();
        for i in 0..8 {
            vertices.push(Vector3::new(
                if i & 1 == 0 { -half } else { half },
                if i & 2 == 0 { -half } else { half },
                if i & 4 == 0 { -half } else { half },
            ));
        }
        let quads = [
            [0, 2, 6, 4],
            [1, 5, 7, 3],
            [0, 4, 5, 1],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 6, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Mesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn unit_cube_normalization() {
        let c = canonicalize(&cube(0.5)).unwrap();
        assert!((c.source_scale - 3f64.sqrt()).abs() < 1e-12);
        let half = 1.0 / (2.0 * 3f64.sqrt());
        let (lo, hi) = c.mesh.bounds();
        for k in 0..3 {
            assert!((lo[k] - (0.5 - half)).abs() < 1e-12);
            assert!((hi[k] - (0.5 + half)).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_input_is_a_fixed_point() {
        let once = canonicalize(&cube(0.5)).unwrap();
        let twice = canonicalize(&once.mesh).unwrap();
        for (a, b) in once.mesh.vertices.iter().zip(&twice.mesh.vertices) {
            assert!((a - b).amax() < 1e-12);
        }
        assert!((twice.source_scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_vertex_is_degenerate() {
        let m = Mesh::new(vec![Vector3::new(1.0, 2.0, 3.0); 3], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(canonicalize(&m), Err(Error::DegenerateMesh)));
    }

    #[test]
    fn mesh_rejects_bad_indices() {
        assert!(Mesh::new(vec![Vector3::zeros(); 2], vec![[0, 1, 2]]).is_err());
        assert!(Mesh::new(vec![Vector3::zeros(); 3], vec![]).is_err());
    }

    #[test]
    fn quantize_examples() {
        let c = BinCodec::new(32).unwrap();
        assert_eq!(c.quantize(0.0).unwrap(), 0);
        assert_eq!(c.quantize(1.0).unwrap(), 31);
        assert_eq!(c.quantize(0.5).unwrap(), 16);
        assert!(c.quantize(1.0001).is_err());
        assert!(c.quantize(-1e-9).is_err());
        assert!(c.quantize(f64::NAN).is_err());
        let one = BinCodec::new(1).unwrap();
        assert_eq!(one.quantize(0.73).unwrap(), 0);
        assert!(BinCodec::new(0).is_err());
    }

    #[test]
    fn dequantize_examples() {
        let c = BinCodec::new(32).unwrap();
        assert_eq!(c.dequantize(0).unwrap(), 0.015625);
        assert_eq!(c.dequantize(31).unwrap(), 0.984375);
        assert!(c.dequantize(32).is_err());
        assert_eq!(BinCodec::new(1).unwrap().dequantize(0).unwrap(), 0.5);
    }

    #[test]
    fn quantization_error_bound_sweep() {
        for bins in [1usize, 32, 128] {
            let c = BinCodec::new(bins).unwrap();
            let bound = 1.0 / (2.0 * bins as f64);
            for i in 0..=10_000 {
                let v = i as f64 * 1e-4;
                let back = c.dequantize(c.quantize(v).unwrap()).unwrap();
                assert!((back - v).abs() <= bound + 1e-15, "v={v} bins={bins}");
            }
        }
    }

    fn arb_mesh() -> impl Strategy<Value = Mesh> {
        prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 4..20).prop_filter_map(
            "flat",
            |pts| {
                let vertices: Vec<Vector3<f64>> = pts.into_iter().map(Vector3::from).collect();
                let n = vertices.len();
                let triangles = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
                let m = Mesh::new(vertices, triangles).ok()?;
                let (lo, hi) = m.bounds();
                ((hi - lo).min() > 1e-3).then_some(m)
            },
        )
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(m in arb_mesh()) {
            let once = canonicalize(&m).unwrap();
            let twice = canonicalize(&once.mesh).unwrap();
            for (a, b) in once.mesh.vertices.iter().zip(&twice.mesh.vertices) {
                prop_assert!((a - b).amax() < 1e-9);
            }
            prop_assert!((once.nocs_extents - twice.nocs_extents).amax() < 1e-9);
        }

        #[test]
        fn canonicalize_ignores_uniform_scale(m in arb_mesh(), k in 0.01f64..100.0) {
            let a = canonicalize(&m).unwrap();
            let b = canonicalize(&m.scaled(k)).unwrap();
            for (p, q) in a.mesh.vertices.iter().zip(&b.mesh.vertices) {
                prop_assert!((p - q).amax() < 1e-9);
            }
            prop_assert!((b.source_scale / a.source_scale - k).abs() < 1e-9 * k);
        }

        #[test]
        fn canonical_bounds_invariants(m in arb_mesh()) {
            let c = canonicalize(&m).unwrap();
            let (lo, hi) = c.mesh.bounds();
            prop_assert!(lo.min() >= 0.0 && hi.max() <= 1.0);
            prop_assert!(((hi - lo).norm() - 1.0).abs() < 1e-9);
            prop_assert!(((lo + hi) / 2.0 - NOCS_CENTER).amax() < 1e-9);
            prop_assert!((c.nocs_extents.norm() - 1.0).abs() < 1e-9);
            prop_assert!(c.nocs_extents.max() <= 1.0);
        }
    }
}
