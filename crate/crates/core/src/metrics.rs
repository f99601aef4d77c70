//! COCO-style average precision for poking-region instance masks.
//!
//! Detections are ranked by descending score (ties keep insertion order) and
//! greedily matched, per IoU threshold, to the unmatched ground truth of
//! highest IoU. Precision is interpolated at the 101 recall points
//! `0, 0.01, …, 1`. Area buckets use the ground-truth poking-region area;
//! ground truths outside a bucket are ignored, as are detections matched to
//! them and unmatched detections whose own area falls outside the bucket.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Mask;
use crate::pokegt::InstanceAnnotation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("{0} images of detections but {1} images of ground truth")]
    ImageCountMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: usize,
    pub mask: Mask,
    pub score: f64,
}

pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64, MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch(a.dims(), b.dims()));
    }
    let union = a.union_count(b);
    Ok(if union == 0 {
        0.0
    } else {
        a.intersection_count(b) as f64 / union as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaBucket {
    All,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub iou_thresholds: Vec<f64>,
    /// Upper bound (exclusive) of the small bucket, in pixels.
    pub small_max: usize,
    /// Upper bound (exclusive) of the medium bucket, in pixels.
    pub medium_max: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            small_max: 32 * 32,
            medium_max: 96 * 96,
        }
    }
}

impl ApConfig {
    pub fn contains(&self, bucket: AreaBucket, area: usize) -> bool {
        match bucket {
            AreaBucket::All => true,
            AreaBucket::Small => area < self.small_max,
            AreaBucket::Medium => area >= self.small_max && area < self.medium_max,
            AreaBucket::Large => area >= self.medium_max,
        }
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.iou_thresholds.is_empty()
            || self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0))
        {
            return Err(MetricsError::InvalidConfig("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.small_max > self.medium_max {
            return Err(MetricsError::InvalidConfig("small_max exceeds medium_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// `None` when no ground truth falls in the bucket.
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub iou_thresholds: Vec<f64>,
    /// All-area AP at each threshold.
    pub per_threshold: Vec<Option<f64>>,
}

impl ApReport {
    pub const CSV_HEADER: &'static str = "metric,value";

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("N/A".to_string(), |x| format!("{x}"));
        let mut out = String::from("# 101-point interpolated AP; score ties keep insertion order\n");
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for (name, v) in [
            ("mAP", self.map),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("AP_S", self.ap_s),
            ("AP_M", self.ap_m),
            ("AP_L", self.ap_l),
        ] {
            out.push_str(&format!("{name},{}\n", fmt(v)));
        }
        out
    }
}

/// Poking regions of the annotated instances, per image.
pub fn ground_truth_regions(annotations: &[Vec<InstanceAnnotation>]) -> Vec<Vec<Mask>> {
    annotations
        .iter()
        .map(|img| img.iter().map(|a| a.poking_region.clone()).collect())
        .collect()
}

struct ImageEval {
    /// Detection indices ranked by descending score.
    order: Vec<usize>,
    scores: Vec<f64>,
    det_areas: Vec<usize>,
    gt_areas: Vec<usize>,
    /// `ious[d][g]`, rows in rank order.
    ious: Vec<Vec<f64>>,
}

fn prepare(dets: &[Detection], gts: &[Mask]) -> Result<ImageEval, MetricsError> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let ious = order
        .iter()
        .map(|&d| gts.iter().map(|g| mask_iou(&dets[d].mask, g)).collect())
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    Ok(ImageEval {
        scores: order.iter().map(|&d| dets[d].score).collect(),
        det_areas: order.iter().map(|&d| dets[d].mask.count()).collect(),
        order,
        gt_areas: gts.iter().map(|g| g.count()).collect(),
        ious,
    })
}

/// Per-rank `(score, matched, ignored)` for one image at one threshold.
fn match_image(img: &ImageEval, threshold: f64, cfg: &ApConfig, bucket: AreaBucket) -> Vec<(f64, bool, bool)> {
    let gt_ignored: Vec<bool> = img.gt_areas.iter().map(|&a| !cfg.contains(bucket, a)).collect();
    // Non-ignored ground truths are tried first.
    let mut gt_order: Vec<usize> = (0..img.gt_areas.len()).collect();
    gt_order.sort_by_key(|&g| gt_ignored[g]);
    let mut gt_taken = vec![false; img.gt_areas.len()];
    let mut out = Vec::with_capacity(img.order.len());
    for (rank, row) in img.ious.iter().enumerate() {
        let mut best = threshold.min(1.0 - 1e-10);
        let mut m: Option<usize> = None;
        for &g in &gt_order {
            if gt_taken[g] {
                continue;
            }
            if let Some(prev) = m {
                if !gt_ignored[prev] && gt_ignored[g] {
                    break;
                }
            }
            if row[g] < best {
                continue;
            }
            best = row[g];
            m = Some(g);
        }
        let entry = match m {
            Some(g) => {
                gt_taken[g] = true;
                (img.scores[rank], true, gt_ignored[g])
            }
            None => (img.scores[rank], false, !cfg.contains(bucket, img.det_areas[rank])),
        };
        out.push(entry);
    }
    out
}

/// 101-point interpolated AP of a ranked `(score, true_positive)` list.
pub fn interpolated_ap(ranked: &[bool], n_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(ranked.len());
    let mut recall = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            total += precision[idx];
        }
    }
    total / 101.0
}

fn bucket_ap(images: &[ImageEval], threshold: f64, cfg: &ApConfig, bucket: AreaBucket) -> Option<f64> {
    let n_gt: usize = images
        .iter()
        .flat_map(|img| img.gt_areas.iter())
        .filter(|&&a| cfg.contains(bucket, a))
        .count();
    if n_gt == 0 {
        return None;
    }
    let mut entries: Vec<(f64, bool, bool)> = images
        .iter()
        .flat_map(|img| match_image(img, threshold, cfg, bucket))
        .collect();
    // Stable: equal scores keep image order, then rank order.
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let ranked: Vec<bool> = entries.iter().filter(|e| !e.2).map(|e| e.1).collect();
    Some(interpolated_ap(&ranked, n_gt))
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Per-threshold AP for one bucket.
pub fn ap_per_threshold(
    detections: &[Vec<Detection>],
    gts: &[Vec<Mask>],
    cfg: &ApConfig,
    bucket: AreaBucket,
) -> Result<Vec<Option<f64>>, MetricsError> {
    let images = prepare_all(detections, gts, cfg)?;
    Ok(cfg
        .iou_thresholds
        .iter()
        .map(|&t| bucket_ap(&images, t, cfg, bucket))
        .collect())
}

fn prepare_all(detections: &[Vec<Detection>], gts: &[Vec<Mask>], cfg: &ApConfig) -> Result<Vec<ImageEval>, MetricsError> {
    cfg.validate()?;
    if detections.len() != gts.len() {
        return Err(MetricsError::ImageCountMismatch(detections.len(), gts.len()));
    }
    detections
        .par_iter()
        .zip(gts.par_iter())
        .map(|(d, g)| prepare(d, g))
        .collect()
}

pub fn evaluate_ap(detections: &[Vec<Detection>], gts: &[Vec<Mask>], cfg: &ApConfig) -> Result<ApReport, MetricsError> {
    let images = prepare_all(detections, gts, cfg)?;
    let sweep = |bucket| -> Vec<Option<f64>> {
        cfg.iou_thresholds
            .iter()
            .map(|&t| bucket_ap(&images, t, cfg, bucket))
            .collect()
    };
    let per_threshold = sweep(AreaBucket::All);
    let at = |t: f64| {
        cfg.iou_thresholds
            .iter()
            .position(|&x| (x - t).abs() < 1e-9)
            .map_or_else(|| bucket_ap(&images, t, cfg, AreaBucket::All), |i| per_threshold[i])
    };
    Ok(ApReport {
        map: mean_defined(&per_threshold),
        ap50: at(0.5),
        ap75: at(0.75),
        ap_s: mean_defined(&sweep(AreaBucket::Small)),
        ap_m: mean_defined(&sweep(AreaBucket::Medium)),
        ap_l: mean_defined(&sweep(AreaBucket::Large)),
        iou_thresholds: cfg.iou_thresholds.clone(),
        per_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        Grid::from_fn(64, 64, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    fn det(mask: Mask, score: f64) -> Detection {
        Detection { image_id: 0, mask, score }
    }

    #[test]
    fn iou_cases() {
        let a = rect(0, 0, 10, 10);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &rect(20, 20, 30, 30)).unwrap(), 0.0);
        let two = rect(0, 0, 2, 1);
        let other = rect(1, 0, 3, 1);
        assert!((mask_iou(&two, &other).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let small = Mask::filled(3, 3, true);
        assert!(matches!(mask_iou(&a, &small), Err(MetricsError::ShapeMismatch(..))));
    }

    #[test]
    fn perfect_and_empty() {
        let gts = vec![vec![rect(0, 0, 10, 10), rect(20, 20, 50, 50)], vec![rect(5, 5, 9, 9)]];
        let perfect: Vec<Vec<Detection>> = gts
            .iter()
            .map(|img| img.iter().map(|m| det(m.clone(), 1.0)).collect())
            .collect();
        let r = evaluate_ap(&perfect, &gts, &ApConfig::default()).unwrap();
        assert_eq!(r.map, Some(1.0));
        assert_eq!(r.ap50, Some(1.0));
        assert_eq!(r.ap_s, Some(1.0));
        assert_eq!(r.ap_l, None);
        let none = vec![vec![], vec![]];
        let r = evaluate_ap(&none, &gts, &ApConfig::default()).unwrap();
        assert_eq!(r.map, Some(0.0));
        assert_eq!(r.ap_s, Some(0.0));
    }

    #[test]
    fn hit_miss_hit_matches_hand_oracle() {
        let g1 = rect(0, 0, 10, 10);
        let g2 = rect(30, 30, 40, 40);
        let dets = vec![vec![det(g1.clone(), 0.9), det(rect(50, 0, 60, 10), 0.8), det(g2.clone(), 0.7)]];
        let gts = vec![vec![g1, g2]];
        // Ranked: TP (P=1, R=.5), FP (P=.5, R=.5), TP (P=2/3, R=1).
        // Interpolated precision: 1 for r ≤ .5 (51 points), 2/3 above (50 points).
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        let r = evaluate_ap(&dets, &gts, &ApConfig::default()).unwrap();
        assert!((r.ap50.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicates_never_help() {
        let g = rect(0, 0, 10, 10);
        let base = vec![vec![det(g.clone(), 0.9)]];
        let dup = vec![vec![det(g.clone(), 0.9), det(g.clone(), 0.5)]];
        let gts = vec![vec![g]];
        let a = evaluate_ap(&base, &gts, &ApConfig::default()).unwrap();
        let b = evaluate_ap(&dup, &gts, &ApConfig::default()).unwrap();
        for (x, y) in a.per_threshold.iter().zip(&b.per_threshold) {
            assert!(y.unwrap() <= x.unwrap());
        }
    }

    #[test]
    fn monotone_score_transform_is_invariant() {
        let gts = vec![vec![rect(0, 0, 10, 10), rect(20, 20, 30, 28)]];
        let dets = vec![vec![
            det(rect(1, 0, 10, 10), 0.2),
            det(rect(20, 21, 30, 28), 0.7),
            det(rect(40, 40, 50, 50), 0.5),
        ]];
        let squashed: Vec<Vec<Detection>> = dets
            .iter()
            .map(|img| img.iter().map(|d| Detection { score: d.score.powi(3) * 0.1, ..d.clone() }).collect())
            .collect();
        let a = evaluate_ap(&dets, &gts, &ApConfig::default()).unwrap();
        let b = evaluate_ap(&squashed, &gts, &ApConfig::default()).unwrap();
        assert_eq!(a, b);
        let mean = a.per_threshold.iter().flatten().sum::<f64>() / 10.0;
        assert!((a.map.unwrap() - mean).abs() < 1e-12);
    }
}
