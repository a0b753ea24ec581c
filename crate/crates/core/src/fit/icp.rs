use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;

use super::{fit_similarity, PoseResult};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, SimilarityTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: SimilarityTransform,
    pub iterations: usize,
    /// Mean nearest-neighbor distance under the returned transform, meters.
    pub mean_residual: f64,
}

fn mean_nn_residual(
    tree: &ImmutableKdTree<f64, 3>,
    target: &[Vector3<f64>],
    source: &[Vector3<f64>],
    t: &SimilarityTransform,
    matches: &mut Vec<Vector3<f64>>,
) -> f64 {
    matches.clear();
    let mut total = 0.0;
    for p in source {
        let q = t.apply(p);
        let nn = tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        matches.push(target[nn.item as usize]);
        total += nn.distance.sqrt();
    }
    total / source.len() as f64
}

/// Point-to-point ICP with the scale held at `init.scale()`.
///
/// Stops when the mean residual changes by less than `tol` (meters) between
/// iterations or after `max_iters` refits.
pub fn icp_align(
    source: &PointCloud,
    target: &PointCloud,
    init: &SimilarityTransform,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("ICP needs nonempty source and target clouds"));
    }
    let coords: Vec<[f64; 3]> = target.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = ImmutableKdTree::<f64, 3>::new_from_slice(&coords);
    let scale = init.scale();
    let mut current = *init;
    let mut matches = Vec::with_capacity(source.len());
    let mut residual =
        mean_nn_residual(&tree, &target.points, &source.points, &current, &mut matches);
    let mut iterations = 0;
    while iterations < max_iters {
        let Ok(next) = fit_similarity(&source.points, &matches, Some(scale)) else {
            break;
        };
        iterations += 1;
        let next_residual =
            mean_nn_residual(&tree, &target.points, &source.points, &next, &mut matches);
        let change = (residual - next_residual).abs();
        current = next;
        residual = next_residual;
        if change < tol {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        iterations,
        mean_residual: residual,
    })
}

/// Baseline pose: align model points (centered NOCS) at a fixed metric
/// scale to an observed cloud, starting from a centroid-aligned guess.
pub fn icp_baseline(
    model: &PointCloud,
    observed: &PointCloud,
    scale: f64,
    max_iters: usize,
    tol: f64,
) -> Result<PoseResult> {
    let (Some(mc), Some(oc)) = (model.centroid(), observed.centroid()) else {
        return Err(Error::invalid("ICP needs nonempty source and target clouds"));
    };
    let init = SimilarityTransform::new(scale, nalgebra::Matrix3::identity(), oc - mc * scale)?;
    let r = icp_align(model, observed, &init, max_iters, tol)?;
    Ok(PoseResult {
        transform: r.transform,
        dimensions: Vector3::repeat(scale),
        inlier_count: model.len(),
        rmse: r.mean_residual,
        inliers: (0..model.len()).collect(),
    })
}
