use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::{union_masks, BoundingBox, InstanceMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    /// Relative to the manifest's directory.
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

/// One ground-truth instance. `bbox` is COCO `[x, y, w, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub image_id: u64,
    pub bbox: [f64; 4],
    pub category_id: u64,
    pub segmentation: InstanceMask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

/// COCO-like dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<AnnotationEntry>,
    pub categories: Vec<Category>,
}

impl DatasetManifest {
    /// Checks referential integrity, geometry and split coverage. Errors
    /// name the offending record.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        let mut ids = BTreeMap::new();
        for (i, img) in self.images.iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return bad(format!("images[{i}] (id {}): dimensions must be positive", img.id));
            }
            if ids.insert(img.id, img).is_some() {
                return bad(format!("images[{i}]: duplicate image id {}", img.id));
            }
        }
        let mut cats = HashSet::new();
        for (i, c) in self.categories.iter().enumerate() {
            if !cats.insert(c.id) {
                return bad(format!("categories[{i}]: duplicate category id {}", c.id));
            }
        }
        if cats.is_empty() {
            return bad("at least one category is required".into());
        }
        for (i, ann) in self.annotations.iter().enumerate() {
            let Some(img) = ids.get(&ann.image_id) else {
                return bad(format!("annotations[{i}]: image_id {} not found", ann.image_id));
            };
            if !cats.contains(&ann.category_id) {
                return bad(format!(
                    "annotations[{i}]: category_id {} not found",
                    ann.category_id
                ));
            }
            let [x, y, w, h] = ann.bbox;
            let bbox = BoundingBox::from_xywh(x, y, w, h)
                .map_err(|e| Error::Manifest(format!("annotations[{i}]: {e}")))?;
            if !bbox.within(img.width as f64, img.height as f64) {
                return bad(format!(
                    "annotations[{i}]: bbox {:?} exceeds image {} ({}x{})",
                    ann.bbox, img.id, img.width, img.height
                ));
            }
            let seg = &ann.segmentation;
            if seg.height() != img.height || seg.width() != img.width {
                return bad(format!(
                    "annotations[{i}]: segmentation size {}x{} does not match image {} ({}x{})",
                    seg.height(),
                    seg.width(),
                    img.id,
                    img.height,
                    img.width
                ));
            }
        }
        if !self.images.iter().any(|i| i.split == Split::Train) {
            return bad("at least one train image is required".into());
        }
        if !self.images.iter().any(|i| i.split == Split::Test) {
            return bad("at least one test image is required".into());
        }
        Ok(())
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::at(path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(manifest)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::at(path))
}

/// A ground-truth instance in internal (corner-form) representation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub bbox: BoundingBox,
    pub mask: InstanceMask,
    pub category_id: u64,
}

/// Validated, indexed view of a manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: DatasetManifest,
    root: PathBuf,
    images: BTreeMap<u64, usize>,
    instances: BTreeMap<u64, Vec<GroundTruth>>,
    train_ids: Vec<u64>,
    test_ids: Vec<u64>,
}

impl Dataset {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest = load_manifest(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_manifest(manifest, root)
    }

    pub fn from_manifest(manifest: DatasetManifest, root: impl Into<PathBuf>) -> Result<Self> {
        manifest.validate()?;
        let images = manifest
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.id, i))
            .collect();
        let mut instances: BTreeMap<u64, Vec<GroundTruth>> = BTreeMap::new();
        for ann in &manifest.annotations {
            let [x, y, w, h] = ann.bbox;
            instances.entry(ann.image_id).or_default().push(GroundTruth {
                bbox: BoundingBox::from_xywh(x, y, w, h)?,
                mask: ann.segmentation.clone(),
                category_id: ann.category_id,
            });
        }
        let ids_of = |split| {
            let mut ids: Vec<u64> = manifest
                .images
                .iter()
                .filter(|i| i.split == split)
                .map(|i| i.id)
                .collect();
            ids.sort_unstable();
            ids
        };
        let train_ids = ids_of(Split::Train);
        let test_ids = ids_of(Split::Test);
        Ok(Self {
            root: root.into(),
            images,
            instances,
            train_ids,
            test_ids,
            manifest,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn image(&self, id: u64) -> Option<&ImageEntry> {
        self.images.get(&id).map(|&i| &self.manifest.images[i])
    }

    pub fn image_path(&self, id: u64) -> Option<PathBuf> {
        self.image(id).map(|img| self.root.join(&img.file_name))
    }

    pub fn instances(&self, id: u64) -> &[GroundTruth] {
        self.instances.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn boxes(&self, id: u64) -> Vec<BoundingBox> {
        self.instances(id).iter().map(|g| g.bbox).collect()
    }

    /// Union of all ground-truth masks of an image.
    pub fn foreground(&self, id: u64) -> Result<InstanceMask> {
        let img = self.image(id).ok_or(Error::UnknownImage(id))?;
        let masks: Vec<_> = self.instances(id).iter().map(|g| g.mask.clone()).collect();
        if masks.is_empty() {
            return InstanceMask::empty(img.height, img.width);
        }
        union_masks(&masks)
    }

    /// Sorted ascending.
    pub fn train_ids(&self) -> &[u64] {
        &self.train_ids
    }

    /// Sorted ascending.
    pub fn test_ids(&self) -> &[u64] {
        &self.test_ids
    }

    /// Category assigned to oracle boxes, which carry no class.
    pub fn default_category(&self) -> u64 {
        self.manifest.categories[0].id
    }

    /// Class count used for the class-entropy term; one-class datasets are
    /// scored as foreground vs background.
    pub fn class_count(&self) -> usize {
        self.manifest.categories.len().max(2)
    }
}
