//! Self-checks run by `pokegrasp verify`: loss gradients against finite
//! differences, the AP evaluator against an exhaustive oracle, and geometry
//! and file-format round trips.
//!
//! Check names double as failure names, e.g. `mask_loss_grad/fd_mismatch`.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::grid::{Grid, Mask};
use crate::harness::catalog::default_catalog;
use crate::harness::seed::{mix, rng};
use crate::io;
use crate::losses::{mask_loss_grad, max_fd_relative_error, LossConfig, LossVariant};
use crate::metrics::{evaluate_ap, mask_iou, ApConfig, Detection};
use crate::scene::{backproject_at_height, project, CameraModel, Scene};

const GRAD_INSTANCES: usize = 100;
const GRAD_SIDE: usize = 8;
const FD_STEP: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-5;
const AP_SCENES: usize = 50;
const AP_TOLERANCE: f64 = 1e-9;

const GRAD_STREAM: u64 = 0x96AD;
const AP_STREAM: u64 = 0xA9;
const GEOMETRY_STREAM: u64 = 0x6E0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Perturb the analytic mask-loss gradient, as a negative control.
    pub inject_grad_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

pub fn run(opts: &VerifyOptions) -> VerifyReport {
    let mut checks = vec![gradient_check(opts)];
    checks.extend(ap_checks(opts.seed));
    checks.extend(geometry_checks(opts.seed));
    checks.extend(format_checks(opts.seed));
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Random `side × side` logits in `[-4, 4]` with a random ground truth whose
/// positive fraction varies per instance.
pub fn grad_instance(seed: u64, index: usize, side: usize) -> (Grid<f64>, Mask) {
    let mut r = rng(mix(seed, GRAD_STREAM, 0, index as u64));
    let p: f64 = r.gen_range(0.02..0.98);
    let logits = Grid::from_fn(side, side, |_, _| r.gen_range(-4.0..4.0));
    let gt = Grid::from_fn(side, side, |_, _| r.gen_bool(p));
    (logits, gt)
}

fn gradient_check(opts: &VerifyOptions) -> CheckResult {
    let mut worst: f64 = 0.0;
    for i in 0..GRAD_INSTANCES {
        let (logits, gt) = grad_instance(opts.seed, i, GRAD_SIDE);
        for variant in LossVariant::ALL {
            let cfg = LossConfig::new(variant);
            let err = mask_loss_grad(&logits, &gt, &cfg).and_then(|mut g| {
                if opts.inject_grad_fault {
                    g.as_mut_slice()[0] *= 1.01;
                }
                max_fd_relative_error(&logits, &gt, &cfg, &g, FD_STEP)
            });
            match err {
                Ok(e) => worst = worst.max(e),
                Err(e) => {
                    return CheckResult::new("mask_loss_grad/fd_mismatch", false, e.to_string());
                }
            }
        }
    }
    CheckResult::new(
        "mask_loss_grad/fd_mismatch",
        worst < GRAD_TOLERANCE,
        format!("max relative error {worst:.3e} over {GRAD_INSTANCES} instances × 4 variants"),
    )
}

/// Micro-scene of 1–3 images, each with up to 5 rectangular ground truths
/// and jittered, spurious or missing detections with distinct scores.
pub fn ap_micro_scene(seed: u64, index: usize) -> (Vec<Vec<Detection>>, Vec<Vec<Mask>>) {
    let mut r = rng(mix(seed, AP_STREAM, 0, index as u64));
    let (w, h) = (r.gen_range(16..=64usize), r.gen_range(16..=64usize));
    let rect = |r: &mut rand_chacha::ChaCha8Rng| {
        let (x0, y0) = (r.gen_range(0..w - 4), r.gen_range(0..h - 4));
        let (x1, y1) = (r.gen_range(x0 + 2..=w), r.gen_range(y0 + 2..=h));
        (x0 as i64, y0 as i64, x1 as i64, y1 as i64)
    };
    let fill = |(x0, y0, x1, y1): (i64, i64, i64, i64)| {
        Grid::from_fn(w, h, |x, y| {
            let (x, y) = (x as i64, y as i64);
            x >= x0 && x < x1 && y >= y0 && y < y1
        })
    };
    let images = r.gen_range(1..=3);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for image_id in 0..images {
        let mut g = Vec::new();
        let mut d = Vec::new();
        for _ in 0..r.gen_range(0..=5) {
            let b = rect(&mut r);
            g.push(fill(b));
            if r.gen_bool(0.8) {
                let j = |r: &mut rand_chacha::ChaCha8Rng| r.gen_range(-2..=2);
                let jb = (b.0 + j(&mut r), b.1 + j(&mut r), b.2 + j(&mut r), b.3 + j(&mut r));
                d.push(Detection {
                    image_id,
                    mask: fill(jb),
                    score: r.gen(),
                });
            }
        }
        for _ in 0..r.gen_range(0..=2) {
            let b = rect(&mut r);
            d.push(Detection {
                image_id,
                mask: fill(b),
                score: r.gen(),
            });
        }
        dets.push(d);
        gts.push(g);
    }
    (dets, gts)
}

/// AP at one threshold by exhaustive search: every cut-off of the global
/// ranking is scored, and each recall point takes the best precision among
/// cut-offs reaching it. `None` without ground truth.
pub fn oracle_ap(dets: &[Vec<Detection>], gts: &[Vec<Mask>], threshold: f64) -> Option<f64> {
    let n_gt: usize = gts.iter().map(Vec::len).sum();
    if n_gt == 0 {
        return None;
    }
    let mut all: Vec<(usize, usize)> = dets
        .iter()
        .enumerate()
        .flat_map(|(i, d)| (0..d.len()).map(move |k| (i, k)))
        .collect();
    all.sort_by(|a, b| dets[b.0][b.1].score.total_cmp(&dets[a.0][a.1].score));
    let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut hits = Vec::new();
    for &(i, k) in &all {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[i].iter().enumerate() {
            let iou = mask_iou(&dets[i][k].mask, gt).ok()?;
            if !taken[i][g] && iou >= threshold && best.is_none_or(|(_, b)| iou >= b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[i][g] = true;
        }
        hits.push(best.is_some());
    }
    let cutoffs: Vec<(f64, f64)> = (1..=hits.len())
        .map(|n| {
            let tp = hits[..n].iter().filter(|&&h| h).count() as f64;
            (tp / n as f64, tp / n_gt as f64)
        })
        .collect();
    let total: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            cutoffs
                .iter()
                .filter(|c| c.1 >= r)
                .map(|c| c.0)
                .fold(0.0, f64::max)
        })
        .sum();
    Some(total / 101.0)
}

fn ap_checks(seed: u64) -> Vec<CheckResult> {
    let cfg = ApConfig::default();
    let mut worst: f64 = 0.0;
    let mut mismatch = None;
    for s in 0..AP_SCENES {
        let (dets, gts) = ap_micro_scene(seed, s);
        let report = match evaluate_ap(&dets, &gts, &cfg) {
            Ok(r) => r,
            Err(e) => {
                mismatch = Some(format!("scene {s}: {e}"));
                break;
            }
        };
        for (t, got) in cfg.iou_thresholds.iter().zip(&report.per_threshold) {
            let want = oracle_ap(&dets, &gts, *t);
            match (got, want) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => mismatch = Some(format!("scene {s}: defined-ness differs at {t}")),
            }
        }
    }
    let oracle = match mismatch {
        Some(m) => CheckResult::new("ap/oracle_mismatch", false, m),
        None => CheckResult::new(
            "ap/oracle_mismatch",
            worst <= AP_TOLERANCE,
            format!("max |Δ| {worst:.3e} over {AP_SCENES} scenes"),
        ),
    };

    let (_, gts) = ap_micro_scene(seed, 0);
    let perfect: Vec<Vec<Detection>> = gts
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.iter()
                .map(|m| Detection {
                    image_id: i,
                    mask: m.clone(),
                    score: 1.0,
                })
                .collect()
        })
        .collect();
    let empty: Vec<Vec<Detection>> = gts.iter().map(|_| Vec::new()).collect();
    let has_gt = gts.iter().any(|g| !g.is_empty());
    let map = |d: &[Vec<Detection>]| evaluate_ap(d, &gts, &cfg).ok().and_then(|r| r.map);
    vec![
        oracle,
        CheckResult::new(
            "ap/perfect_not_one",
            !has_gt || map(&perfect) == Some(1.0),
            format!("mAP {:?}", map(&perfect)),
        ),
        CheckResult::new(
            "ap/empty_not_zero",
            !has_gt || map(&empty) == Some(0.0),
            format!("mAP {:?}", map(&empty)),
        ),
    ]
}

fn geometry_checks(seed: u64) -> Vec<CheckResult> {
    let mut r = rng(mix(seed, GEOMETRY_STREAM, 0, 0));
    let mut pose_err: f64 = 0.0;
    let mut proj_err: f64 = 0.0;
    let camera = CameraModel::default();
    for _ in 0..200 {
        let axis = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let t = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let pose = Pose::from_axis_angle(axis, r.gen_range(-3.0..3.0), t);
        let p = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let back = pose.inverse().transform_point(&pose.transform_point(&p));
        let composed = pose.compose(&pose.inverse()).transform_point(&p);
        pose_err = pose_err.max((back - p).norm()).max((composed - p).norm());

        let pixel = (r.gen_range(0.0..640.0), r.gen_range(0.0..480.0));
        let height = r.gen_range(0.0..0.2);
        match backproject_at_height(&camera, pixel, height).and_then(|w| project(&camera, &w)) {
            Ok((u, v)) => proj_err = proj_err.max((u - pixel.0).hypot(v - pixel.1)),
            Err(_) => proj_err = f64::INFINITY,
        }
    }
    let catalog = default_catalog();
    let scene = Scene::new(
        camera,
        catalog
            .iter()
            .enumerate()
            .map(|(i, e)| e.instantiate(i as u32 + 1, Pose::from_translation(Vector3::new(0.1 * i as f64, 0.0, 0.0))))
            .collect(),
    );
    let json_ok = Scene::from_json(&scene.to_json()).is_ok_and(|s| s == scene);
    vec![
        CheckResult::new("geometry/pose_round_trip", pose_err < 1e-12, format!("max error {pose_err:.3e} m")),
        CheckResult::new(
            "geometry/projection_round_trip",
            proj_err < 1e-9,
            format!("max error {proj_err:.3e} px"),
        ),
        CheckResult::new("geometry/scene_json_round_trip", json_ok, String::new()),
    ]
}

fn format_checks(seed: u64) -> Vec<CheckResult> {
    let mut r = rng(mix(seed, GEOMETRY_STREAM, 1, 0));
    let img = io::PfmImage {
        width: 7,
        height: 5,
        channels: 3,
        data: (0..105).map(|_| r.gen_range(-10.0f32..10.0)).collect(),
    };
    let pfm_ok = io::decode_pfm(&io::encode_pfm(&img)).is_ok_and(|d| d == img);
    let mask: Mask = Grid::from_fn(9, 4, |_, _| r.gen_bool(0.5));
    let pgm_ok = io::pgm_to_mask(&io::mask_to_pgm(&mask)).is_ok_and(|m| m == mask);
    vec![
        CheckResult::new("io/pfm_round_trip", pfm_ok, String::new()),
        CheckResult::new("io/pgm_round_trip", pgm_ok, String::new()),
    ]
}
