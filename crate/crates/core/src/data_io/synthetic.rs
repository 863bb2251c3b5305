//! Synthetic cell datasets: elliptical "nuclei" on a noisy background.
//!
//! Each image is tagged `easy` or `hard`. Hard images are rendered with lower
//! contrast and heavier noise, and the synthetic predictor keys its error
//! model off the same tag.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::manifest::{
    save_manifest, AnnotationEntry, Category, DatasetManifest, ImageEntry, Split,
};
use crate::geometry::{ellipse_mask, BoundingBox};
use crate::rng::{derive_seed, rng_for, uniform_below, unit_f64};
use crate::sampling::sample_random;
use crate::{Error, Result};

pub const EASY: &str = "easy";
pub const HARD: &str = "hard";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub train_images: usize,
    pub test_images: usize,
    pub min_cells: usize,
    pub max_cells: usize,
    pub hard_fraction: f64,
    pub image_size: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            train_images: 200,
            test_images: 80,
            min_cells: 3,
            max_cells: 8,
            hard_fraction: 0.5,
            image_size: 96,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(Error::InvalidArgument(format!(
                "hard_fraction must be in [0, 1], got {}",
                self.hard_fraction
            )));
        }
        if self.min_cells > self.max_cells {
            return Err(Error::InvalidArgument(format!(
                "cell range {}..{} is empty",
                self.min_cells, self.max_cells
            )));
        }
        if self.image_size < 16 {
            return Err(Error::InvalidArgument("image_size must be at least 16".into()));
        }
        if self.train_images == 0 || self.test_images == 0 {
            return Err(Error::InvalidArgument(
                "need at least one train and one test image".into(),
            ));
        }
        Ok(())
    }
}

const PLACEMENT_ATTEMPTS: usize = 64;

fn cell_boxes(spec: &SyntheticSpec, image_id: u64) -> Vec<BoundingBox> {
    let mut rng = rng_for(spec.seed, &[0xCE11, image_id]);
    let size = spec.image_size as u64;
    let span = (spec.max_cells - spec.min_cells + 1) as u64;
    let count = spec.min_cells + uniform_below(&mut rng, span) as usize;
    let (min_side, max_side) = ((size / 12).max(3), (size / 5).max(4));
    let mut boxes: Vec<BoundingBox> = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = min_side + uniform_below(&mut rng, max_side - min_side + 1);
            let h = min_side + uniform_below(&mut rng, max_side - min_side + 1);
            let x = uniform_below(&mut rng, size - w + 1);
            let y = uniform_below(&mut rng, size - h + 1);
            let b = BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64)
                .expect("positive side lengths");
            // keep a one-pixel gap between cells
            let padded = BoundingBox::new(b.x1() - 1.0, b.y1() - 1.0, b.x2() + 1.0, b.y2() + 1.0)
                .expect("padding keeps the box valid");
            if boxes.iter().any(|o| o.intersection_area(&padded) > 0.0) {
                continue;
            }
            let mask = ellipse_mask(&b, spec.image_size, spec.image_size)
                .expect("image size is positive");
            if mask.tight_box() == Some(b) {
                boxes.push(b);
                break;
            }
        }
    }
    boxes
}

/// Builds the manifest. Image ids are 1-based; train images come first.
/// Exactly `round(hard_fraction * n)` images of each split are hard.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let splits = [
        (Split::Train, 1u64, spec.train_images),
        (Split::Test, 1 + spec.train_images as u64, spec.test_images),
    ];
    for (split, first_id, n) in splits {
        let ids: Vec<u64> = (first_id..first_id + n as u64).collect();
        let n_hard = (spec.hard_fraction * n as f64).round() as usize;
        let mut hard = sample_random(&ids, n_hard, derive_seed(spec.seed, &[0x4A2D, first_id]))?;
        hard.sort_unstable();
        for &id in &ids {
            let stratum = if hard.binary_search(&id).is_ok() { HARD } else { EASY };
            images.push(ImageEntry {
                id,
                file_name: format!("images/{id:05}.png"),
                width: spec.image_size,
                height: spec.image_size,
                split,
                stratum: Some(stratum.to_string()),
            });
            for b in cell_boxes(spec, id) {
                annotations.push(AnnotationEntry {
                    image_id: id,
                    bbox: b.to_xywh(),
                    category_id: 1,
                    segmentation: ellipse_mask(&b, spec.image_size, spec.image_size)?,
                });
            }
        }
    }
    Ok(DatasetManifest {
        images,
        annotations,
        categories: vec![Category {
            id: 1,
            name: "cell".into(),
        }],
    })
}

/// Renders one image of a generated manifest.
pub fn render_image(manifest: &DatasetManifest, image_id: u64, seed: u64) -> Result<GrayImage> {
    let img = manifest
        .images
        .iter()
        .find(|i| i.id == image_id)
        .ok_or(Error::UnknownImage(image_id))?;
    let hard = img.stratum.as_deref() == Some(HARD);
    let (background, foreground, noise) = if hard {
        (95.0, 135.0, 40.0)
    } else {
        (40.0, 200.0, 12.0)
    };
    let mut canvas = vec![background; img.width as usize * img.height as usize];
    for ann in manifest.annotations.iter().filter(|a| a.image_id == image_id) {
        let h = img.height as u64;
        for (s, e) in ann.segmentation.intervals() {
            for idx in s..e {
                let (row, col) = (idx % h, idx / h);
                canvas[row as usize * img.width as usize + col as usize] = foreground;
            }
        }
    }
    let mut rng = rng_for(seed, &[0x9E1D, image_id]);
    let out = GrayImage::from_fn(img.width, img.height, |x, y| {
        let base = canvas[y as usize * img.width as usize + x as usize];
        let v = base + (unit_f64(&mut rng) - 0.5) * noise;
        Luma([v.clamp(0.0, 255.0) as u8])
    });
    Ok(out)
}

/// Generates a dataset into `dir`: `manifest.json` plus one PNG per image.
pub fn write_synthetic(dir: impl AsRef<Path>, spec: &SyntheticSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let manifest = generate_synthetic(spec)?;
    fs::create_dir_all(dir.join("images")).map_err(Error::at(dir))?;
    for img in &manifest.images {
        let path = dir.join(&img.file_name);
        render_image(&manifest, img.id, spec.seed)?
            .save(&path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    }
    let path = dir.join("manifest.json");
    save_manifest(&path, &manifest)?;
    Ok(path)
}
