//! Class-agnostic instance segmentation evaluation (COCO-style mask AP/AR).
//!
//! Per image, predictions are ranked by confidence and truncated to the
//! detection budget. At each IoU threshold a prediction claims the unmatched
//! ground-truth instance it overlaps most, provided the IoU reaches the
//! threshold. Matches from all images are pooled by descending confidence
//! into one precision/recall curve, and AP is the 101-point interpolated
//! precision. Equal confidences form a single step of the curve, which keeps
//! the result independent of image order.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maskio::{GroundTruthScene, InstanceId, InstanceLabelMap, BACKGROUND};

pub const DEFAULT_MAX_DETECTIONS: usize = 100;
const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("mask dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("IoU of two empty masks is undefined")]
    BothEmpty,
    #[error("{predictions} prediction images but {ground_truth} ground-truth images")]
    Misaligned {
        predictions: usize,
        ground_truth: usize,
    },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize, "mask size");
        Self { width, height, bits }
    }

    /// Pixels of instance `id` in `map`.
    pub fn of_instance(map: &InstanceLabelMap, id: InstanceId) -> Self {
        Self::new(
            map.width(),
            map.height(),
            map.labels().iter().map(|&l| l == id).collect(),
        )
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Intersection over union of two masks of equal size.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(MetricsError::DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Err(MetricsError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

/// IoU thresholds and per-image detection budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_thresholds")]
    pub iou_thresholds: Vec<f64>,
    #[serde(default = "default_max_detections")]
    pub max_detections: usize,
}

/// 0.50, 0.55, ..., 0.95, each the nearest double to its decimal value.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn default_max_detections() -> usize {
    DEFAULT_MAX_DETECTIONS
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: default_thresholds(),
            max_detections: DEFAULT_MAX_DETECTIONS,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.iou_thresholds.is_empty() {
            return Err(MetricsError::InvalidConfig("no IoU thresholds".into()));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
            return Err(MetricsError::InvalidConfig(format!("threshold {t} outside (0, 1]")));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::InvalidConfig("thresholds must be strictly increasing".into()));
        }
        if self.max_detections == 0 {
            return Err(MetricsError::InvalidConfig("max_detections must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub iou: f64,
    pub ap: f64,
    pub recall: f64,
}

/// AP and AR averaged over the IoU thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub per_threshold: Vec<ThresholdResult>,
}

/// One prediction's outcome at every threshold.
#[derive(Debug, Clone)]
struct Detection {
    score: f64,
    matched: Vec<bool>,
}

#[derive(Debug, Clone)]
struct ImageEval {
    detections: Vec<Detection>,
    gt_count: usize,
}

/// Pairwise IoU between prediction and ground-truth instances from one pixel
/// pass over both label maps. Rows follow `pred_ids`, columns `gt_ids`.
fn iou_matrix(
    pred: &InstanceLabelMap,
    gt: &InstanceLabelMap,
    pred_ids: &[InstanceId],
    gt_ids: &[InstanceId],
) -> Vec<Vec<f64>> {
    let mut inter: HashMap<(InstanceId, InstanceId), usize> = HashMap::new();
    let mut pred_area: HashMap<InstanceId, usize> = HashMap::new();
    let mut gt_area: HashMap<InstanceId, usize> = HashMap::new();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if p != BACKGROUND {
            *pred_area.entry(p).or_default() += 1;
        }
        if g != BACKGROUND {
            *gt_area.entry(g).or_default() += 1;
        }
        if p != BACKGROUND && g != BACKGROUND {
            *inter.entry((p, g)).or_default() += 1;
        }
    }
    pred_ids
        .iter()
        .map(|p| {
            gt_ids
                .iter()
                .map(|g| {
                    let i = inter.get(&(*p, *g)).copied().unwrap_or(0);
                    let u = pred_area[p] + gt_area[g] - i;
                    i as f64 / u as f64
                })
                .collect()
        })
        .collect()
}

fn evaluate_image(
    pred: &InstanceLabelMap,
    gt: &GroundTruthScene,
    cfg: &EvalConfig,
) -> Result<ImageEval, MetricsError> {
    let gt_map = gt.labelmap();
    if (pred.width(), pred.height()) != (gt_map.width(), gt_map.height()) {
        return Err(MetricsError::DimensionMismatch {
            a: (pred.width(), pred.height()),
            b: (gt_map.width(), gt_map.height()),
        });
    }
    // rank by confidence, ties by id; stable and independent of hash order
    let mut ranked: Vec<(InstanceId, f64)> = pred.scores().iter().map(|(&id, &s)| (id, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.max_detections);

    let pred_ids: Vec<InstanceId> = ranked.iter().map(|r| r.0).collect();
    let gt_ids: Vec<InstanceId> = gt_map.ids().collect();
    let ious = iou_matrix(pred, gt_map, &pred_ids, &gt_ids);

    let mut detections: Vec<Detection> = ranked
        .iter()
        .map(|&(_, score)| Detection {
            score,
            matched: Vec::with_capacity(cfg.iou_thresholds.len()),
        })
        .collect();
    for &t in &cfg.iou_thresholds {
        let mut gt_taken = vec![false; gt_ids.len()];
        for (d, det) in detections.iter_mut().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in ious[d].iter().enumerate() {
                if gt_taken[g] || iou < t {
                    continue;
                }
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                gt_taken[g] = true;
            }
            det.matched.push(best.is_some());
        }
    }
    Ok(ImageEval {
        detections,
        gt_count: gt_ids.len(),
    })
}

/// Interpolated AP at one threshold and final recall, from detections
/// pooled over all images.
fn accumulate(dets: &[(f64, bool)], gt_total: usize) -> (f64, f64) {
    if gt_total == 0 || dets.is_empty() {
        return (0.0, 0.0);
    }
    // (recall, precision) after each group of equal scores
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(score, hit)) in dets.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = dets.get(i + 1).is_none_or(|next| next.0 != score);
        if group_ends {
            curve.push((tp as f64 / gt_total as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    // precision envelope: max precision at any recall to the right
    for i in (1..curve.len()).rev() {
        if curve[i].1 > curve[i - 1].1 {
            curve[i - 1].1 = curve[i].1;
        }
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / 100.0;
        while idx < curve.len() && curve[idx].0 < r {
            idx += 1;
        }
        if idx == curve.len() {
            break;
        }
        sum += curve[idx].1;
    }
    (sum / RECALL_POINTS as f64, curve.last().map_or(0.0, |c| c.0))
}

/// Evaluates predictions against ground truth, one label map per image.
pub fn evaluate(
    predictions: &[InstanceLabelMap],
    ground_truth: &[GroundTruthScene],
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    cfg.validate()?;
    if predictions.len() != ground_truth.len() {
        return Err(MetricsError::Misaligned {
            predictions: predictions.len(),
            ground_truth: ground_truth.len(),
        });
    }
    let images: Vec<ImageEval> = predictions
        .par_iter()
        .zip(ground_truth.par_iter())
        .map(|(p, g)| evaluate_image(p, g, cfg))
        .collect::<Result<_, _>>()?;

    let gt_total: usize = images.iter().map(|i| i.gt_count).sum();
    // order by score only; hits and misses sharing a score collapse into one curve step
    let mut pooled: Vec<&Detection> = images.iter().flat_map(|i| &i.detections).collect();
    pooled.sort_by(|a, b| b.score.total_cmp(&a.score));

    let per_threshold: Vec<ThresholdResult> = cfg
        .iou_thresholds
        .iter()
        .enumerate()
        .map(|(t, &iou)| {
            let dets: Vec<(f64, bool)> = pooled.iter().map(|d| (d.score, d.matched[t])).collect();
            let (ap, recall) = accumulate(&dets, gt_total);
            ThresholdResult { iou, ap, recall }
        })
        .collect();
    let n = per_threshold.len() as f64;
    Ok(EvalReport {
        ap: per_threshold.iter().map(|r| r.ap).sum::<f64>() / n,
        ar: per_threshold.iter().map(|r| r.recall).sum::<f64>() / n,
        per_threshold,
    })
}

/// Per-instance IoU lookups for callers that want raw overlaps.
pub fn instance_ious(
    pred: &InstanceLabelMap,
    gt: &InstanceLabelMap,
) -> BTreeMap<(InstanceId, InstanceId), f64> {
    let pred_ids: Vec<_> = pred.ids().collect();
    let gt_ids: Vec<_> = gt.ids().collect();
    let m = iou_matrix(pred, gt, &pred_ids, &gt_ids);
    let mut out = BTreeMap::new();
    for (i, p) in pred_ids.iter().enumerate() {
        for (j, g) in gt_ids.iter().enumerate() {
            out.insert((*p, *g), m[i][j]);
        }
    }
    out
}
