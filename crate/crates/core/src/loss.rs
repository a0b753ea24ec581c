//! Reference implementations of the NOCS-map training losses.
//!
//! All losses are averaged over the pixels of one region of interest, given
//! as an instance mask plus the instance id that selects the region. The
//! per-pixel soft L1 term is applied to each of the three coordinates and
//! averaged over them.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::canonical::{BinCodec, NOCS_CENTER};
pub use crate::category::CategorySpec;
use crate::error::{Error, Result};
use crate::geom::{axis_rotation, InstanceMask};
use crate::io::write_atomic;
use crate::render::NocsMap;

/// Knee of the soft L1 loss: quadratic below, linear above.
pub const SOFT_L1_KNEE: f64 = 0.1;

/// Probabilities below this are clipped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

const CUBE_TOL: f64 = 1e-9;

/// Scalar soft L1 term for a single coordinate difference.
#[inline]
pub fn soft_l1_term(d: f64) -> f64 {
    let a = d.abs();
    if a <= SOFT_L1_KNEE {
        5.0 * d * d
    } else {
        a - 0.05
    }
}

/// Derivative of [`soft_l1_term`] with respect to `d`.
#[inline]
pub fn soft_l1_term_grad(d: f64) -> f64 {
    if d.abs() <= SOFT_L1_KNEE {
        10.0 * d
    } else {
        d.signum()
    }
}

fn check_shapes(gt: &NocsMap, pred: &NocsMap, roi: &InstanceMask) -> Result<()> {
    if gt.width != pred.width
        || gt.height != pred.height
        || gt.width != roi.width
        || gt.height != roi.height
    {
        return Err(Error::invalid("NOCS maps and ROI mask differ in size"));
    }
    Ok(())
}

fn roi_pixels(roi: &InstanceMask, id: u8) -> Result<Vec<usize>> {
    let px: Vec<usize> = (0..roi.data.len()).filter(|&i| roi.data[i] == id).collect();
    if px.is_empty() {
        return Err(Error::EmptyRoi);
    }
    Ok(px)
}

fn rotate_about_center(rot: &Matrix3<f64>, p: &Vector3<f64>) -> Result<Vector3<f64>> {
    let q = rot * (p - NOCS_CENTER) + NOCS_CENTER;
    let excess = q.iter().map(|&c| (-c).max(c - 1.0)).fold(0.0, f64::max);
    if excess > CUBE_TOL {
        return Err(Error::GeometryInconsistency { excess });
    }
    Ok(q.map(|c| c.clamp(0.0, 1.0)))
}

fn soft_l1_pixels(
    gt: &NocsMap,
    pred: &NocsMap,
    pixels: &[usize],
    rot: Option<&Matrix3<f64>>,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in pixels {
        let mut y = Vector3::from(gt.data[i]);
        if let (Some(r), true) = (rot, gt.valid[i]) {
            y = rotate_about_center(r, &y)?;
        }
        let y_pred = Vector3::from(pred.data[i]);
        total += (0..3).map(|k| soft_l1_term(y[k] - y_pred[k])).sum::<f64>() / 3.0;
    }
    Ok(total / pixels.len() as f64)
}

/// Soft L1 regression loss over the pixels of `roi` labelled `roi_id`.
pub fn soft_l1(gt: &NocsMap, pred: &NocsMap, roi: &InstanceMask, roi_id: u8) -> Result<f64> {
    check_shapes(gt, pred, roi)?;
    let px = roi_pixels(roi, roi_id)?;
    soft_l1_pixels(gt, pred, &px, None)
}

/// Gradient of [`soft_l1`] with respect to every predicted coordinate.
pub fn soft_l1_grad(
    gt: &NocsMap,
    pred: &NocsMap,
    roi: &InstanceMask,
    roi_id: u8,
) -> Result<Vec<[f64; 3]>> {
    check_shapes(gt, pred, roi)?;
    let px = roi_pixels(roi, roi_id)?;
    let scale = 1.0 / (3.0 * px.len() as f64);
    let mut grad = vec![[0.0; 3]; gt.len()];
    for &i in &px {
        for k in 0..3 {
            // d = y - y*, so d/dy* = -d/dd
            grad[i][k] = -soft_l1_term_grad(gt.data[i][k] - pred.data[i][k]) * scale;
        }
    }
    Ok(grad)
}

/// Ground-truth map rotated by `angle` degrees about the category's symmetry
/// axis through the NOCS center. Invalid pixels are left untouched.
pub fn rotate_nocs(gt: &NocsMap, spec: &CategorySpec, angle: f64) -> Result<NocsMap> {
    let rot = axis_rotation(&spec.axis(), angle);
    let mut out = gt.clone();
    for i in 0..gt.len() {
        if let Some(p) = gt.get(i) {
            out.data[i] = rotate_about_center(&rot, &p)?.into();
        }
    }
    Ok(out)
}

/// Minimum soft L1 loss over the category's ground-truth rotations.
///
/// For conditionally symmetric categories `handle_visible` selects the set
/// (see [`CategorySpec::effective_theta`]).
pub fn symmetric_loss(
    gt: &NocsMap,
    pred: &NocsMap,
    roi: &InstanceMask,
    roi_id: u8,
    spec: &CategorySpec,
    handle_visible: Option<bool>,
) -> Result<f64> {
    check_shapes(gt, pred, roi)?;
    let px = roi_pixels(roi, roi_id)?;
    let axis = spec.axis();
    let mut best = f64::INFINITY;
    for theta in spec.effective_theta(handle_visible) {
        let loss = if theta == 0.0 {
            soft_l1_pixels(gt, pred, &px, None)?
        } else {
            soft_l1_pixels(gt, pred, &px, Some(&axis_rotation(&axis, theta)))?
        };
        best = best.min(loss);
    }
    Ok(best)
}

/// Per-pixel, per-coordinate categorical distributions over NOCS bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub bins: usize,
    /// Layout: `((pixel * 3 + channel) * bins + bin)`.
    pub data: Vec<f32>,
}

const PROB_MAGIC: &[u8; 8] = b"NOCSPROB";
const PROB_VERSION: u32 = 1;

impl ProbabilityMap {
    pub fn uniform(width: usize, height: usize, bins: usize) -> Self {
        ProbabilityMap {
            width,
            height,
            bins,
            data: vec![1.0 / bins as f32; width * height * 3 * bins],
        }
    }

    pub fn distribution(&self, pixel: usize, channel: usize) -> &[f32] {
        let start = (pixel * 3 + channel) * self.bins;
        &self.data[start..start + self.bins]
    }

    pub fn distribution_mut(&mut self, pixel: usize, channel: usize) -> &mut [f32] {
        let start = (pixel * 3 + channel) * self.bins;
        &mut self.data[start..start + self.bins]
    }

    /// Raw tensor: 8-byte magic `NOCSPROB`, then little-endian u32 version,
    /// width, height, bins, then `width * height * 3 * bins` f32 values.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.data.len() * 4);
        buf.write_all(PROB_MAGIC)?;
        for v in [PROB_VERSION, self.width as u32, self.height as u32, self.bins as u32] {
            buf.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            buf.write_all(&v.to_le_bytes())?;
        }
        write_atomic(path, &buf)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let ctx = path.display().to_string();
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != PROB_MAGIC {
            return Err(Error::parse(ctx, "not a probability tensor"));
        }
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            f.read_exact(&mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, width, height, bins] = header;
        if version != PROB_VERSION || bins == 0 {
            return Err(Error::parse(ctx, "unsupported tensor header"));
        }
        let count = width as usize * height as usize * 3 * bins as usize;
        let mut raw = Vec::new();
        f.read_to_end(&mut raw)?;
        if raw.len() != count * 4 {
            return Err(Error::parse(ctx, "tensor payload has the wrong length"));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(ProbabilityMap {
            width: width as usize,
            height: height as usize,
            bins: bins as usize,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Number of (pixel, channel) terms whose target probability was clipped.
    pub clipped: usize,
}

/// Softmax classification loss against quantized ground truth.
pub fn bin_cross_entropy(
    gt: &NocsMap,
    probs: &ProbabilityMap,
    roi: &InstanceMask,
    roi_id: u8,
    codec: &BinCodec,
) -> Result<CrossEntropy> {
    if probs.width != gt.width || probs.height != gt.height {
        return Err(Error::invalid("probability map size differs from NOCS map"));
    }
    if roi.width != gt.width || roi.height != gt.height {
        return Err(Error::invalid("ROI mask size differs from NOCS map"));
    }
    if probs.bins != codec.bins() {
        return Err(Error::invalid(format!(
            "probability map has {} bins, codec expects {}",
            probs.bins,
            codec.bins()
        )));
    }
    let px = roi_pixels(roi, roi_id)?;
    let mut total = 0.0;
    let mut clipped = 0;
    for &i in &px {
        for ch in 0..3 {
            let dist = probs.distribution(i, ch);
            let mut sum = 0.0f64;
            for &p in dist {
                if !(p >= 0.0) {
                    return Err(Error::invalid("negative or NaN probability"));
                }
                sum += p as f64;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "probabilities at pixel {i} channel {ch} sum to {sum}"
                )));
            }
            let target = codec.quantize(gt.data[i][ch])?;
            let p = dist[target] as f64;
            if p < PROB_FLOOR {
                clipped += 1;
            }
            total -= p.max(PROB_FLOOR).ln();
        }
    }
    Ok(CrossEntropy {
        loss: total / (3 * px.len()) as f64,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::{CategoryTable, ConditionalRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_pixel(gt: [f64; 3], pred: [f64; 3]) -> (NocsMap, NocsMap, InstanceMask) {
        let mut g = NocsMap::new(1, 1);
        let mut p = NocsMap::new(1, 1);
        g.set(0, Vector3::from(gt));
        p.set(0, Vector3::from(pred));
        (g, p, InstanceMask::from_data(1, 1, vec![1]).unwrap())
    }

    fn y_axis_spec(theta: Vec<f64>) -> CategorySpec {
        CategorySpec::new(1, "t", Vector3::y(), theta, ConditionalRule::None).unwrap()
    }

    /// Random map whose valid values lie inside the NOCS ball of radius 0.5,
    /// so every rotation about the center stays inside the cube.
    fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> NocsMap {
        let mut m = NocsMap::new(w, h);
        for i in 0..w * h {
            if rng.gen_bool(0.8) {
                let dir = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let p = NOCS_CENTER + dir.normalize() * rng.gen_range(0.0..0.5);
                m.set(i, p);
            }
        }
        m
    }

    #[test]
    fn identical_maps_have_zero_loss() {
        let (g, _, m) = one_pixel([0.2, 0.4, 0.6], [0.0; 3]);
        assert_eq!(soft_l1(&g, &g, &m, 1).unwrap(), 0.0);
    }

    #[test]
    fn knee_value_is_continuous() {
        assert!((soft_l1_term(0.1) - 0.05).abs() < 1e-15);
        assert!((soft_l1_term(0.1 + 1e-12) - 0.05).abs() < 1e-11);
        let (g, p, m) = one_pixel([0.5, 0.5, 0.5], [0.4, 0.5, 0.5]);
        let l = soft_l1(&g, &p, &m, 1).unwrap();
        assert!((l - 0.05 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn linear_branch_value() {
        let (g, p, m) = one_pixel([0.9, 0.9, 0.9], [0.4, 0.4, 0.4]);
        assert!((soft_l1(&g, &p, &m, 1).unwrap() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn empty_roi_is_an_error() {
        let (g, p, m) = one_pixel([0.9; 3], [0.4; 3]);
        assert!(matches!(soft_l1(&g, &p, &m, 2), Err(Error::EmptyRoi)));
    }

    #[test]
    fn monotone_in_abs_difference() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let d = i as f64 * 1e-3;
            let v = soft_l1_term(d);
            assert!(v >= prev);
            assert_eq!(v, soft_l1_term(-d));
            prev = v;
        }
    }

    #[test]
    fn rotation_examples() {
        let spec = y_axis_spec(vec![0.0, 180.0]);
        let (g, _, _) = one_pixel([0.6, 0.5, 0.5], [0.0; 3]);
        assert_eq!(rotate_nocs(&g, &spec, 0.0).unwrap(), g);
        let full = rotate_nocs(&g, &spec, 360.0).unwrap();
        assert!((Vector3::from(full.data[0]) - Vector3::from(g.data[0])).amax() < 1e-12);
        let half = rotate_nocs(&g, &spec, 180.0).unwrap();
        assert!((Vector3::from(half.data[0]) - Vector3::new(0.4, 0.5, 0.5)).amax() < 1e-12);
    }

    #[test]
    fn off_center_rotation_is_flagged() {
        let spec = y_axis_spec(vec![0.0]);
        let (g, _, _) = one_pixel([1.0, 0.5, 1.0], [0.0; 3]);
        assert!(matches!(
            rotate_nocs(&g, &spec, 45.0),
            Err(Error::GeometryInconsistency { .. })
        ));
    }

    #[test]
    fn non_symmetric_spec_equals_soft_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_map(&mut rng, 8, 6);
        let p = random_map(&mut rng, 8, 6);
        let m = InstanceMask::from_data(8, 6, vec![1; 48]).unwrap();
        let spec = y_axis_spec(vec![0.0]);
        assert_eq!(
            symmetric_loss(&g, &p, &m, 1, &spec, None).unwrap(),
            soft_l1(&g, &p, &m, 1).unwrap()
        );
    }

    #[test]
    fn symmetric_loss_matches_brute_force_minimum() {
        let spec = y_axis_spec(vec![0.0, 90.0, 180.0, 270.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let g = random_map(&mut rng, 6, 5);
            let p = random_map(&mut rng, 6, 5);
            let m = InstanceMask::from_data(6, 5, vec![3; 30]).unwrap();
            let brute = spec
                .theta_set
                .iter()
                .map(|&t| soft_l1(&rotate_nocs(&g, &spec, t).unwrap(), &p, &m, 3).unwrap())
                .fold(f64::INFINITY, f64::min);
            let fast = symmetric_loss(&g, &p, &m, 3, &spec, None).unwrap();
            assert!((brute - fast).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_prediction_has_zero_symmetric_loss() {
        let spec = y_axis_spec(vec![0.0, 90.0, 180.0, 270.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_map(&mut rng, 7, 7);
        let m = InstanceMask::from_data(7, 7, vec![1; 49]).unwrap();
        let p = rotate_nocs(&g, &spec, 90.0).unwrap();
        assert!(symmetric_loss(&g, &p, &m, 1, &spec, None).unwrap() < 1e-20);
        assert!(soft_l1(&g, &p, &m, 1).unwrap() > 0.0);
    }

    #[test]
    fn group_invariance_for_closed_theta_set() {
        let spec = y_axis_spec(vec![0.0, 90.0, 180.0, 270.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_map(&mut rng, 5, 5);
        let p = random_map(&mut rng, 5, 5);
        let m = InstanceMask::from_data(5, 5, vec![1; 25]).unwrap();
        let base = symmetric_loss(&g, &p, &m, 1, &spec, None).unwrap();
        for &t in &spec.theta_set {
            let rg = rotate_nocs(&g, &spec, t).unwrap();
            let l = symmetric_loss(&rg, &p, &m, 1, &spec, None).unwrap();
            assert!((l - base).abs() < 1e-12);
        }
    }

    #[test]
    fn mug_rule_selects_theta_set() {
        let table = CategoryTable::default_table();
        let mug = table.by_name("mug").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_map(&mut rng, 5, 5);
        let m = InstanceMask::from_data(5, 5, vec![1; 25]).unwrap();
        let p = rotate_nocs(&g, mug, 60.0).unwrap();
        assert!(symmetric_loss(&g, &p, &m, 1, mug, Some(false)).unwrap() < 1e-20);
        assert!(symmetric_loss(&g, &p, &m, 1, mug, Some(true)).unwrap() > 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_map(&mut rng, 4, 4);
        let mut p = random_map(&mut rng, 4, 4);
        let m = InstanceMask::from_data(4, 4, vec![1; 16]).unwrap();
        let grad = soft_l1_grad(&g, &p, &m, 1).unwrap();
        let h = 1e-7;
        for i in 0..16 {
            for k in 0..3 {
                let d = g.data[i][k] - p.data[i][k];
                if (d.abs() - SOFT_L1_KNEE).abs() < 1e-5 {
                    continue;
                }
                let orig = p.data[i][k];
                p.data[i][k] = orig + h;
                let up = soft_l1(&g, &p, &m, 1).unwrap();
                p.data[i][k] = orig - h;
                let down = soft_l1(&g, &p, &m, 1).unwrap();
                p.data[i][k] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grad[i][k]).abs() < 1e-4, "pixel {i} ch {k}");
            }
        }
    }

    fn constant_gt(v: f64) -> (NocsMap, InstanceMask) {
        let mut g = NocsMap::new(2, 2);
        for i in 0..4 {
            g.set(i, Vector3::repeat(v));
        }
        (g, InstanceMask::from_data(2, 2, vec![1; 4]).unwrap())
    }

    #[test]
    fn cross_entropy_examples() {
        let codec = BinCodec::new(32).unwrap();
        let (g, m) = constant_gt(0.5);
        let uniform = ProbabilityMap::uniform(2, 2, 32);
        let ce = bin_cross_entropy(&g, &uniform, &m, 1, &codec).unwrap();
        assert!((ce.loss - 32f64.ln()).abs() < 1e-6);
        assert_eq!(ce.clipped, 0);

        let mut right = ProbabilityMap { data: vec![0.0; 4 * 3 * 32], ..uniform.clone() };
        let mut wrong = right.clone();
        for px in 0..4 {
            for ch in 0..3 {
                right.distribution_mut(px, ch)[16] = 1.0;
                wrong.distribution_mut(px, ch)[3] = 1.0;
            }
        }
        let ce = bin_cross_entropy(&g, &right, &m, 1, &codec).unwrap();
        assert_eq!(ce.loss, 0.0);
        let ce = bin_cross_entropy(&g, &wrong, &m, 1, &codec).unwrap();
        assert!((ce.loss - 27.631021115928547).abs() < 1e-9);
        assert_eq!(ce.clipped, 12);
    }

    #[test]
    fn cross_entropy_rejects_unnormalized() {
        let codec = BinCodec::new(4).unwrap();
        let (g, m) = constant_gt(0.2);
        let mut probs = ProbabilityMap::uniform(2, 2, 4);
        probs.data[0] = 0.5;
        assert!(matches!(
            bin_cross_entropy(&g, &probs, &m, 1, &codec),
            Err(Error::InvalidInput(_))
        ));
        let other = BinCodec::new(8).unwrap();
        assert!(bin_cross_entropy(&g, &ProbabilityMap::uniform(2, 2, 4), &m, 1, &other).is_err());
    }

    #[test]
    fn probability_tensor_round_trip() {
        let dir = std::env::temp_dir().join(format!("nocs-prob-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.bin");
        let mut probs = ProbabilityMap::uniform(3, 2, 8);
        probs.data[5] = 0.25;
        probs.write(&path).unwrap();
        assert_eq!(ProbabilityMap::read(&path).unwrap(), probs);
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(ProbabilityMap::read(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
