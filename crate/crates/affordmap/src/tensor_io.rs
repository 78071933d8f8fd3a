//! Files exchanged with the extraction client: NPY arrays, `meta.json` sidecars,
//! sample bundles and ground-truth maps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use affordmap_core::npy::{self, ArrayFile};
use affordmap_core::{AttentionStack, DenseFeatureMap, Sample, SpatialMap};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURES_FILE: &str = "features.npy";
pub const ATTN_VERB_FILE: &str = "attn_verb.npy";
pub const ATTN_OBJECT_FILE: &str = "attn_object.npy";
pub const META_FILE: &str = "meta.json";

pub fn read_array(path: &Path) -> Result<ArrayFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    npy::decode(&bytes).map_err(|source| Error::Array { path: path.to_owned(), source })
}

pub fn write_array(path: &Path, arr: &ArrayFile) -> Result<()> {
    let bytes = npy::encode(arr).map_err(|source| Error::Array { path: path.to_owned(), source })?;
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn write_map(path: &Path, map: &SpatialMap) -> Result<()> {
    let arr = ArrayFile::new(vec![map.height(), map.width()], map.values().to_vec())?;
    write_array(path, &arr)
}

/// Reads a rank-2 array as a map.
pub fn read_map(path: &Path) -> Result<SpatialMap> {
    let arr = read_array(path)?;
    match arr.shape[..] {
        [h, w] => SpatialMap::new(h, w, arr.data).map_err(|source| Error::Array { path: path.to_owned(), source }),
        _ => Err(Error::ShapeMismatch {
            path: path.to_owned(),
            reason: format!("expected a [H, W] map, got shape {:?}", arr.shape),
        }),
    }
}

/// Sidecar describing how a bundle was extracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    #[serde(default)]
    pub image_path: String,
    pub verb: String,
    pub object: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub layer_ids: Vec<i64>,
    pub grid_h: usize,
    pub grid_w: usize,
    #[serde(default)]
    pub source_model: String,
    /// Extractor-specific fields (timesteps, token spans, ...), kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_uppercase() || c.is_whitespace())
}

impl SampleMeta {
    pub fn validate(&self, path: &Path) -> Result<()> {
        let bad = |reason: String| Error::Meta { path: path.to_owned(), reason };
        if !is_token(&self.verb) {
            return Err(bad(format!("verb {:?} is not a non-empty lowercase token", self.verb)));
        }
        if !is_token(&self.object) {
            return Err(bad(format!("object {:?} is not a non-empty lowercase token", self.object)));
        }
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(bad(format!("grid {}x{} is empty", self.grid_h, self.grid_w)));
        }
        Ok(())
    }
}

pub fn read_meta(path: &Path) -> Result<SampleMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: SampleMeta =
        serde_json::from_str(&text).map_err(|e| Error::Meta { path: path.to_owned(), reason: e.to_string() })?;
    meta.validate(path)?;
    Ok(meta)
}

pub fn write_meta(path: &Path, meta: &SampleMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// One loaded sample directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub dir: PathBuf,
    pub sample: Sample,
    pub meta: SampleMeta,
}

impl Bundle {
    pub fn features(&self) -> &DenseFeatureMap {
        &self.sample.features
    }

    /// `image.jpg`/`image.png` next to the arrays, else `meta.image_path` if it exists.
    pub fn image_path(&self) -> Option<PathBuf> {
        ["image.jpg", "image.jpeg", "image.png"]
            .iter()
            .map(|n| self.dir.join(n))
            .chain((!self.meta.image_path.is_empty()).then(|| PathBuf::from(&self.meta.image_path)))
            .find(|p| p.is_file())
    }
}

fn read_stack(path: &Path, grid: (usize, usize)) -> Result<AttentionStack> {
    let arr = read_array(path)?;
    let [layers, h, w] = arr.shape[..] else {
        return Err(Error::ShapeMismatch {
            path: path.to_owned(),
            reason: format!("expected [L, H, W], got {:?}", arr.shape),
        });
    };
    if (h, w) != grid {
        return Err(Error::ShapeMismatch {
            path: path.to_owned(),
            reason: format!("grid {h}x{w} does not match meta.json grid {}x{}", grid.0, grid.1),
        });
    }
    AttentionStack::new(layers, h, w, arr.data).map_err(|source| Error::Array { path: path.to_owned(), source })
}

pub fn read_sample_bundle(dir: &Path) -> Result<Bundle> {
    for name in [FEATURES_FILE, ATTN_VERB_FILE, ATTN_OBJECT_FILE, META_FILE] {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(Error::MissingInput(p));
        }
    }
    let meta_path = dir.join(META_FILE);
    let meta = read_meta(&meta_path)?;
    let grid = (meta.grid_h, meta.grid_w);

    let fpath = dir.join(FEATURES_FILE);
    let arr = read_array(&fpath)?;
    let [h, w, c] = arr.shape[..] else {
        return Err(Error::ShapeMismatch { path: fpath, reason: format!("expected [H, W, C], got {:?}", arr.shape) });
    };
    if (h, w) != grid {
        return Err(Error::ShapeMismatch {
            path: fpath,
            reason: format!("grid {h}x{w} does not match meta.json grid {}x{}", grid.0, grid.1),
        });
    }
    let features =
        DenseFeatureMap::new(h, w, c, arr.data).map_err(|source| Error::Array { path: fpath.clone(), source })?;
    let verb = read_stack(&dir.join(ATTN_VERB_FILE), grid)?;
    let object = read_stack(&dir.join(ATTN_OBJECT_FILE), grid)?;
    if verb.layers() != object.layers() {
        return Err(Error::ShapeMismatch {
            path: dir.to_owned(),
            reason: format!("verb stack has {} layers, object stack {}", verb.layers(), object.layers()),
        });
    }
    let sample = Sample::new(features, verb, object)?;
    Ok(Bundle { dir: dir.to_owned(), sample, meta })
}

/// Writes the four bundle files into `dir` (created if needed).
pub fn write_sample_bundle(dir: &Path, sample: &Sample, meta: &SampleMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })?;
    let (h, w) = sample.features.grid();
    let features = ArrayFile::new(vec![h, w, sample.features.channels()], sample.features.values().to_vec())?;
    write_array(&dir.join(FEATURES_FILE), &features)?;
    for (name, stack) in [(ATTN_VERB_FILE, &sample.verb), (ATTN_OBJECT_FILE, &sample.object)] {
        let (sh, sw) = stack.grid();
        let arr = ArrayFile::new(vec![stack.layers(), sh, sw], stack.values().to_vec())?;
        write_array(&dir.join(name), &arr)?;
    }
    write_meta(&dir.join(META_FILE), meta)
}

/// `gt.npy` (`[H, W]` float) or an 8-bit grayscale PNG rescaled to `[0, 1]`.
pub fn read_ground_truth(path: &Path) -> Result<SpatialMap> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if ext.as_deref() == Some("npy") {
        return read_map(path);
    }
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_owned()));
    }
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_owned(), source })?.into_luma8();
    let (w, h) = img.dimensions();
    let values = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(SpatialMap::new(h as usize, w as usize, values)?)
}

/// Locates the ground-truth file of a sample directory.
pub fn find_ground_truth(dir: &Path) -> Option<PathBuf> {
    ["gt.npy", "gt.png"].iter().map(|n| dir.join(n)).find(|p| p.is_file())
}
