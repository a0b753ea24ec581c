//! Detection matching and average precision over 3D IoU and pose error.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::category::CategoryTable;
use crate::error::{Error, Result};
use crate::geom::{box_iou, rotation_error, translation_error, OrientedBox3, SimilarityTransform, DEFAULT_SYMMETRY_STEP_DEG};
use crate::io::{self, DetectionRecord, FramePaths, InstanceRecord};

/// Smallest 3D IoU for a detection to be matched to a ground-truth box.
pub const MATCH_IOU: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: u32,
    pub score: f64,
    pub pose: SimilarityTransform,
    pub dimensions: Vector3<f64>,
}

impl Detection {
    pub fn from_record(r: &DetectionRecord) -> Result<Self> {
        if !r.score.is_finite() {
            return Err(Error::invalid("detection score must be finite"));
        }
        Ok(Detection {
            class_id: r.class_id,
            score: r.score,
            pose: r.pose.to_transform()?,
            dimensions: r.dimensions.into(),
        })
    }

    fn bbox(&self) -> OrientedBox3 {
        OrientedBox3::from_pose(&self.pose, &self.dimensions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub class_id: u32,
    pub pose: SimilarityTransform,
    pub dimensions: Vector3<f64>,
    pub handle_visible: Option<bool>,
}

impl GroundTruthInstance {
    pub fn from_record(r: &InstanceRecord) -> Result<Self> {
        Ok(GroundTruthInstance {
            class_id: r.class_id,
            pose: r.pose.to_transform()?,
            dimensions: r.dimensions.into(),
            handle_visible: r.handle_visible,
        })
    }

    fn bbox(&self) -> OrientedBox3 {
        OrientedBox3::from_pose(&self.pose, &self.dimensions)
    }
}

/// Errors of a matched detection against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairErrors {
    pub gt: usize,
    pub iou: f64,
    /// Degrees.
    pub rotation: f64,
    /// Centimeters.
    pub translation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub detection: usize,
    pub class_id: u32,
    pub score: f64,
    /// `None` for a false positive.
    pub matched: Option<PairErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatches {
    pub image_id: String,
    pub outcomes: Vec<DetectionOutcome>,
    /// Ground-truth instances per class.
    pub gt_counts: BTreeMap<u32, usize>,
}

/// Greedy per-class matching in descending score order. Each detection takes
/// the unmatched ground truth of its class with the highest symmetric-aware
/// IoU, provided the IoU reaches `gate`.
pub fn match_detections(
    image_id: &str,
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    table: &CategoryTable,
    gate: f64,
    angular_step: f64,
) -> ImageMatches {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let gt_boxes: Vec<OrientedBox3> = gts.iter().map(|g| g.bbox()).collect();
    let mut taken = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(dets.len());
    for k in order {
        let det = &dets[k];
        let pred_box = det.bbox();
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.class_id != det.class_id {
                continue;
            }
            let sym = table.symmetry(gt.class_id, gt.handle_visible);
            let iou = box_iou(&pred_box, &gt_boxes[g], &sym, angular_step);
            if iou >= gate && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let matched = best.map(|(g, iou)| {
            taken[g] = true;
            let gt = &gts[g];
            let sym = table.symmetry(gt.class_id, gt.handle_visible);
            PairErrors {
                gt: g,
                iou,
                rotation: rotation_error(det.pose.rotation(), gt.pose.rotation(), &sym),
                translation: translation_error(det.pose.translation(), gt.pose.translation()),
            }
        });
        outcomes.push(DetectionOutcome {
            detection: k,
            class_id: det.class_id,
            score: det.score,
            matched,
        });
    }
    let mut gt_counts = BTreeMap::new();
    for gt in gts {
        *gt_counts.entry(gt.class_id).or_insert(0) += 1;
    }
    ImageMatches {
        image_id: image_id.to_string(),
        outcomes,
        gt_counts,
    }
}

/// A true-positive test applied to matched pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Criterion {
    Iou(f64),
    /// Rotation error in degrees and translation error in centimeters.
    Pose { rotation: f64, translation: f64 },
    Rotation(f64),
    Translation(f64),
}

impl Criterion {
    pub fn accepts(&self, e: &PairErrors) -> bool {
        match *self {
            Criterion::Iou(t) => e.iou >= t,
            Criterion::Pose { rotation, translation } => e.rotation <= rotation && e.translation <= translation,
            Criterion::Rotation(t) => e.rotation <= t,
            Criterion::Translation(t) => e.translation <= t,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Criterion::Iou(t) => format!("IoU{}", (t * 100.0).round()),
            Criterion::Pose { rotation, translation } => format!("{rotation}deg_{translation}cm"),
            Criterion::Rotation(t) => format!("{t}deg"),
            Criterion::Translation(t) => format!("{t}cm"),
        }
    }
}

/// All-point interpolated AP of score-ranked detections. `None` when the
/// class has no ground truth.
pub fn average_precision(ranked: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].0.total_cmp(&ranked[a].0));
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for (rank, &k) in order.iter().enumerate() {
        tp += ranked[k].1 as usize;
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev) * p;
        prev = *r;
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub criteria: Vec<Criterion>,
    pub match_iou: f64,
    /// Sweep step for symmetric IoU, degrees.
    pub angular_step: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            criteria: vec![
                Criterion::Iou(0.25),
                Criterion::Iou(0.5),
                Criterion::Pose { rotation: 5.0, translation: 5.0 },
                Criterion::Pose { rotation: 10.0, translation: 5.0 },
                Criterion::Pose { rotation: 10.0, translation: 10.0 },
            ],
            match_iou: MATCH_IOU,
            angular_step: DEFAULT_SYMMETRY_STEP_DEG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: u32,
    pub name: String,
    pub gt_count: usize,
    /// One AP per configured criterion.
    pub ap: Vec<f64>,
}

/// AP as a function of one swept threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub thresholds: Vec<f64>,
    pub mean: Vec<f64>,
    /// Per-class AP at each threshold, keyed by class id.
    pub per_class: BTreeMap<u32, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub columns: Vec<String>,
    pub classes: Vec<ClassReport>,
    /// Mean over classes with ground truth; `None` when no class has any.
    pub mean: Vec<Option<f64>>,
    /// Classes that have detections but no ground truth.
    pub absent: Vec<u32>,
    pub curves: Vec<Curve>,
    pub matches: Vec<ImageMatches>,
}

impl EvalReport {
    /// Mean AP of the criterion with the given label.
    pub fn mean_ap(&self, label: &str) -> Option<f64> {
        let k = self.columns.iter().position(|c| c == label)?;
        self.mean[k]
    }
}

fn class_ap(matches: &[ImageMatches], class_id: u32, gt_count: usize, c: &Criterion) -> f64 {
    let ranked: Vec<(f64, bool)> = matches
        .iter()
        .flat_map(|m| &m.outcomes)
        .filter(|o| o.class_id == class_id)
        .map(|o| (o.score, o.matched.as_ref().is_some_and(|e| c.accepts(e))))
        .collect();
    average_precision(&ranked, gt_count).expect("class has ground truth")
}

fn sweep(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect()
}

/// Aggregates per-image matches into per-class and mean AP plus the dense
/// IoU, rotation and translation curves.
pub fn summarize(mut matches: Vec<ImageMatches>, table: &CategoryTable, cfg: &EvalConfig) -> EvalReport {
    matches.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut gt_totals: BTreeMap<u32, usize> = BTreeMap::new();
    for m in &matches {
        for (&c, &n) in &m.gt_counts {
            *gt_totals.entry(c).or_insert(0) += n;
        }
    }
    gt_totals.retain(|_, n| *n > 0);
    let absent: Vec<u32> = matches
        .iter()
        .flat_map(|m| &m.outcomes)
        .map(|o| o.class_id)
        .filter(|c| !gt_totals.contains_key(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mean_of = |values: &[f64]| -> Option<f64> {
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };

    let classes: Vec<ClassReport> = gt_totals
        .iter()
        .map(|(&class_id, &gt_count)| ClassReport {
            class_id,
            name: table
                .get(class_id)
                .map_or_else(|| format!("class_{class_id}"), |s| s.name.clone()),
            gt_count,
            ap: cfg.criteria.iter().map(|c| class_ap(&matches, class_id, gt_count, c)).collect(),
        })
        .collect();
    let mean = (0..cfg.criteria.len())
        .map(|k| mean_of(&classes.iter().map(|c| c.ap[k]).collect::<Vec<_>>()))
        .collect();

    let curve = |name: &str, thresholds: Vec<f64>, make: &dyn Fn(f64) -> Criterion| {
        let per_class: BTreeMap<u32, Vec<f64>> = gt_totals
            .iter()
            .map(|(&c, &n)| (c, thresholds.iter().map(|&t| class_ap(&matches, c, n, &make(t))).collect()))
            .collect();
        let mean = (0..thresholds.len())
            .map(|i| mean_of(&per_class.values().map(|v| v[i]).collect::<Vec<_>>()).unwrap_or(0.0))
            .collect();
        Curve {
            name: name.to_string(),
            thresholds,
            mean,
            per_class,
        }
    };
    let curves = vec![
        curve("iou", sweep(0.0, 1.0, 100), &Criterion::Iou),
        curve("rotation", sweep(0.0, 60.0, 60), &Criterion::Rotation),
        curve("translation", sweep(0.0, 10.0, 100), &Criterion::Translation),
    ];
    EvalReport {
        columns: cfg.criteria.iter().map(Criterion::label).collect(),
        classes,
        mean,
        absent,
        curves,
        matches,
    }
}

/// Ground truth and predictions for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageData {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruthInstance>,
}

pub fn evaluate(images: &[ImageData], table: &CategoryTable, cfg: &EvalConfig) -> EvalReport {
    let matches = images
        .iter()
        .map(|im| {
            match_detections(
                &im.image_id,
                &im.detections,
                &im.ground_truth,
                table,
                cfg.match_iou,
                cfg.angular_step,
            )
        })
        .collect();
    summarize(matches, table, cfg)
}

/// Loads `<id>_pred.json` files from `pred_dir` and `<id>_meta.json` files
/// from `gt_dir`. Ground truth without predictions counts as missed
/// instances; predictions without ground truth are an error.
pub fn load_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<Vec<ImageData>> {
    let pred_ids = io::list_ids(pred_dir, "_pred.json")?;
    let gt_ids = io::list_ids(gt_dir, "_meta.json")?;
    let gt_set: BTreeSet<&String> = gt_ids.iter().collect();
    let missing: Vec<String> = pred_ids.iter().filter(|id| !gt_set.contains(id)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }
    let pred_set: BTreeSet<&String> = pred_ids.iter().collect();
    gt_ids
        .iter()
        .map(|id| {
            let scene: io::SceneRecord = io::read_json(&FramePaths::new(gt_dir, id).meta)?;
            let detections = if pred_set.contains(id) {
                let pred: io::PredictionRecord = io::read_json(&FramePaths::new(pred_dir, id).pred)?;
                pred.detections.iter().map(Detection::from_record).collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            Ok(ImageData {
                image_id: id.clone(),
                detections,
                ground_truth: scene
                    .instances
                    .iter()
                    .map(GroundTruthInstance::from_record)
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path, table: &CategoryTable, cfg: &EvalConfig) -> Result<EvalReport> {
    Ok(evaluate(&load_dataset(pred_dir, gt_dir)?, table, cfg))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    io::write_atomic(path, &bytes)
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Per-class rows and a final `mean` row, one column per criterion.
pub fn write_table_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut header = vec!["class_id".to_string(), "name".into(), "gt_count".into()];
    header.extend(report.columns.iter().cloned());
    let mut rows = vec![header];
    for c in &report.classes {
        let mut row = vec![c.class_id.to_string(), c.name.clone(), c.gt_count.to_string()];
        row.extend(c.ap.iter().map(|&v| fmt(v)));
        rows.push(row);
    }
    let mut mean = vec![String::new(), "mean".into(), report.classes.iter().map(|c| c.gt_count).sum::<usize>().to_string()];
    mean.extend(report.mean.iter().map(|m| m.map_or_else(String::new, fmt)));
    rows.push(mean);
    write_csv(path, rows)
}

/// Writes `curve_<name>.csv` files with `threshold,mean,<class ids>` columns.
pub fn write_curves_csv(report: &EvalReport, dir: &Path) -> Result<()> {
    for curve in &report.curves {
        let mut header = vec!["threshold".to_string(), "mean".into()];
        header.extend(curve.per_class.keys().map(|c| c.to_string()));
        let mut rows = vec![header];
        for (i, &t) in curve.thresholds.iter().enumerate() {
            let mut row = vec![fmt(t), fmt(curve.mean[i])];
            row.extend(curve.per_class.values().map(|v| fmt(v[i])));
            rows.push(row);
        }
        write_csv(&dir.join(format!("curve_{}.csv", curve.name)), rows)?;
    }
    Ok(())
}
