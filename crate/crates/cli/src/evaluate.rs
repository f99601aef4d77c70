//! `evaluate`: AP of detected poking regions listed in a JSON manifest.
//!
//! ```json
//! { "images": [
//!     { "scene": "vial_0003",
//!       "ground_truth": ["gt/vial_0003_1.pgm"],
//!       "detections": [ { "mask": "det/vial_0003_a.pgm", "score": 0.93 } ] } ] }
//! ```
//!
//! Paths are relative to the manifest. An image without `ground_truth` takes
//! the poking regions of the dataset scene named by `scene`.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use pokegrasp::dataset::{write_json, Dataset};
use pokegrasp::grid::Mask;
use pokegrasp::io;
use pokegrasp::metrics::{evaluate_ap, ApConfig, Detection};

use crate::{usage, EvaluateArgs};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    images: Vec<ImageEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageEntry {
    scene: Option<String>,
    ground_truth: Option<Vec<String>>,
    #[serde(default)]
    detections: Vec<DetectionEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionEntry {
    mask: String,
    score: f64,
}

fn read_mask(path: &Path) -> Result<Mask> {
    Ok(io::pgm_to_mask(&io::read_file(path)?)?)
}

pub fn run(cfg: &ApConfig, a: &EvaluateArgs) -> Result<()> {
    let bytes = io::read_file(&a.detections)?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| usage(format!("{}: {e}", a.detections.display())))?;
    let base = a.detections.parent().unwrap_or(Path::new("."));
    let dataset = a.dataset.as_deref().map(Dataset::open).transpose()?;

    let mut dets = Vec::with_capacity(manifest.images.len());
    let mut gts = Vec::with_capacity(manifest.images.len());
    for (i, img) in manifest.images.iter().enumerate() {
        let gt = match (&img.ground_truth, &img.scene, &dataset) {
            (Some(paths), _, _) => paths.iter().map(|p| read_mask(&base.join(p))).collect::<Result<Vec<_>>>()?,
            (None, Some(scene), Some(ds)) => {
                let dir = ds.scene_dir(scene);
                ds.annotations(scene)?
                    .iter()
                    .map(|r| read_mask(&dir.join(&r.poke_file)))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => return Err(usage(format!("image {i}: no ground truth and no dataset scene"))),
        };
        let d = img
            .detections
            .iter()
            .map(|d| {
                if !d.score.is_finite() {
                    return Err(usage(format!("image {i}: non-finite score")));
                }
                Ok(Detection {
                    image_id: i,
                    mask: read_mask(&base.join(&d.mask)).with_context(|| format!("image {i}"))?,
                    score: d.score,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        dets.push(d);
        gts.push(gt);
    }
    let report = evaluate_ap(&dets, &gts, cfg)?;
    io::create_dir(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    io::write_file(&a.out.join("report.csv"), report.to_csv().as_bytes())?;
    print!("{}", report.to_csv());
    Ok(())
}
