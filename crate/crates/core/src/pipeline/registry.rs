use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_manifest, PipelineConfig, PipelineError, CALIBRATION_FILE};
use crate::imaging::{crop, load_image, resize, Image};
use crate::keypoints::{extract_features, load_features, save_features, FeatureSet, SiftConfig};
use crate::persist::{self, PersistError};
use crate::textmatch::{keyword_subset_pairs, load_metadata, KeywordMetadata, TextError};
use crate::ClassId;

pub const REGISTRY_SCHEMA: &str = "idclass.registry/v1";
const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryClass {
    pub id: ClassId,
    pub name: String,
    /// Enrolled (cropped and resized) source image, relative to the registry directory.
    pub source: String,
    pub features: String,
    pub keypoints: usize,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    schema: String,
    resize: [u32; 2],
    sift: SiftConfig,
    classes: Vec<RegistryClass>,
    metadata: Vec<KeywordMetadata>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnrollWarning {
    /// Every keyword of `sub` is also a keyword of `sup`.
    KeywordSubset { sub: ClassId, sup: ClassId },
}

impl std::fmt::Display for EnrollWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnrollWarning::KeywordSubset { sub, sup } => write!(
                f,
                "keywords of class {sub} are a subset of class {sup}; text alone cannot prefer {sub}"
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnrollReport {
    pub registry: PathBuf,
    pub classes: Vec<RegistryClass>,
    pub warnings: Vec<EnrollWarning>,
}

/// Everything classification needs from an enrolled registry, in manifest order.
#[derive(Debug, Clone)]
pub struct Registry {
    pub dir: PathBuf,
    pub resize: [u32; 2],
    pub sift: SiftConfig,
    pub classes: Vec<RegistryClass>,
    /// Aligned with `classes`.
    pub metadata: Vec<KeywordMetadata>,
    /// Aligned with `classes`.
    pub features: Vec<FeatureSet>,
}

impl Registry {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(REGISTRY_FILE);
        let file: RegistryFile = persist::read_json(&path)?;
        if file.schema != REGISTRY_SCHEMA {
            return Err(PipelineError::Config(format!(
                "{}: unsupported schema {:?}",
                path.display(),
                file.schema
            )));
        }
        let features = file
            .classes
            .iter()
            .map(|c| load_features(&dir.join(&c.features)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Registry {
            dir: dir.to_path_buf(),
            resize: file.resize,
            sift: file.sift,
            classes: file.classes,
            metadata: file.metadata,
            features,
        })
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.classes.iter().map(|c| c.id).collect()
    }

    pub fn index_of(&self, id: ClassId) -> Option<usize> {
        self.classes.iter().position(|c| c.id == id)
    }

    pub fn source_image(&self, index: usize) -> Result<Image, PipelineError> {
        Ok(load_image(&self.dir.join(&self.classes[index].source))?)
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.dir.join(CALIBRATION_FILE)
    }
}

/// Crop and resize each source, extract and cache its features, and write the registry.
/// Keyword sets that are subsets of another class's set are reported, not rejected.
pub fn enroll(manifest_path: &Path, registry_dir: &Path, cfg: &PipelineConfig) -> Result<EnrollReport, PipelineError> {
    cfg.validate()?;
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let all_meta = load_metadata(&base.join(&manifest.metadata))?;
    let mut metadata = Vec::with_capacity(manifest.classes.len());
    for c in &manifest.classes {
        let m = all_meta
            .iter()
            .find(|m| m.class_id == c.id)
            .ok_or_else(|| TextError::Metadata(format!("class {} has no keyword metadata", c.id)))?;
        metadata.push(m.clone());
    }
    for m in &all_meta {
        if !manifest.classes.iter().any(|c| c.id == m.class_id) {
            log::warn!("keyword metadata for class {} ignored: not in the manifest", m.class_id);
        }
    }

    for sub in ["features", "sources"] {
        let d = registry_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| PersistError::io(&d, e))?;
    }
    let mut classes = Vec::with_capacity(manifest.classes.len());
    for c in &manifest.classes {
        let mut img = load_image(&base.join(&c.source))?;
        if let Some([x, y, w, h]) = c.crop {
            img = crop(&img, x, y, w, h)?;
        }
        let img = resize(&img, cfg.resize[0], cfg.resize[1]);
        let mut feats = extract_features(&img, &cfg.sift)?;
        feats.source_class = Some(c.id);
        let entry = RegistryClass {
            id: c.id,
            name: c.name.clone(),
            source: format!("sources/{}.png", c.id),
            features: format!("features/{}.json", c.id),
            keypoints: feats.len(),
        };
        persist::write_atomic(&registry_dir.join(&entry.source), &img.to_png_bytes()?)?;
        save_features(&feats, &registry_dir.join(&entry.features))?;
        log::info!("enrolled class {} ({}) with {} keypoints", c.id, c.name, feats.len());
        classes.push(entry);
    }

    let warnings: Vec<EnrollWarning> = keyword_subset_pairs(&metadata)
        .into_iter()
        .map(|(sub, sup)| EnrollWarning::KeywordSubset { sub, sup })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let file = RegistryFile {
        schema: REGISTRY_SCHEMA.into(),
        resize: cfg.resize,
        sift: cfg.sift.clone(),
        classes: classes.clone(),
        metadata,
    };
    persist::write_json_atomic(&registry_dir.join(REGISTRY_FILE), &file)?;
    Ok(EnrollReport {
        registry: registry_dir.to_path_buf(),
        classes,
        warnings,
    })
}
