//! Dataset layouts, enumeration and per-item loading.
//!
//! A dataset is described by a [`LayoutAdapter`]: glob patterns for forged
//! and pristine images and a mask path template paired by file stem.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{DataMap, Value, DCT_COEFFICIENTS, IMAGE, IMAGE_SIZE, QTABLES};
use crate::image_io::{self, FileKind, ImageIoError, ImageTensor};
use crate::preprocessing::{PipelineSpec, PreprocessError, GRAY_WEIGHTS};

/// Names accepted by [`registry_descriptor`].
pub const DATASET_NAMES: [&str; 8] = [
    "columbia",
    "casia1_sp",
    "casia1_cm",
    "coverage",
    "dso1",
    "korus",
    "autosplice",
    "trace",
];

/// Keys a dataset can load directly.
pub const LOADABLE_KEYS: [&str; 4] = [IMAGE, DCT_COEFFICIENTS, QTABLES, IMAGE_SIZE];

#[derive(thiserror::Error, Debug)]
pub enum DatasetError {
    #[error("dataset root not found: {0}")]
    RootNotFound(PathBuf),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("expected {expected} images, found {found}")]
    CountMismatch { expected: Counts, found: Counts },
    #[error("index {index} out of range for dataset of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("DCT data requested for non-JPEG image `{0}`")]
    DctRequestedForNonJpeg(String),
    #[error("mask is {mask:?} but image is {image:?}")]
    ShapeMismatch {
        mask: (usize, usize),
        image: (usize, usize),
    },
    #[error("no ground-truth mask for `{0}`")]
    MissingMask(String),
    #[error("invalid load keys: {0}")]
    InvalidLoadKeys(String),
    #[error("unknown dataset `{name}`; registered datasets: {}", DATASET_NAMES.join(", "))]
    UnknownDataset { name: String },
    #[error("invalid dataset descriptor: {0}")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub forged: usize,
    pub pristine: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.forged + self.pristine
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} + {})", self.total(), self.forged, self.pristine)
    }
}

/// How a decoded ground-truth file becomes a `{0, 1}` mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MaskRule {
    /// Luma above 127.
    #[default]
    Default,
    /// Luma of the inverted mask above 127.
    Inverted,
    /// Any non-zero channel.
    AnyNonzero,
    /// The given channel above 127.
    Channel { channel: usize },
}

pub fn binarize_mask(raw: &ImageTensor, rule: MaskRule) -> Result<Array2<u8>, DatasetError> {
    let data = raw.data();
    let (c, h, w) = data.dim();
    let luma = |y: usize, x: usize| -> f64 {
        if c == 1 {
            f64::from(data[[0, y, x]])
        } else {
            (0..3).map(|k| GRAY_WEIGHTS[k] * f64::from(data[[k, y, x]])).sum()
        }
    };
    if let MaskRule::Channel { channel } = rule {
        if channel >= c {
            return Err(DatasetError::InvalidDescriptor(format!(
                "mask channel {channel} of a {c}-channel mask"
            )));
        }
    }
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        let on = match rule {
            MaskRule::Default => luma(y, x) > 127.0,
            MaskRule::Inverted => 255.0 - luma(y, x) > 127.0,
            MaskRule::AnyNonzero => (0..c).any(|k| data[[k, y, x]] != 0),
            MaskRule::Channel { channel } => data[[channel, y, x]] > 127,
        };
        u8::from(on)
    }))
}

/// Folder structure of a dataset release. Globs are relative to the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutAdapter {
    pub forged_glob: String,
    #[serde(default)]
    pub pristine_glob: Option<String>,
    /// Mask path relative to the root; `{stem}` is replaced by the forged
    /// image's stem and glob wildcards may select the extension.
    pub mask_pattern: String,
    /// Removed from the end of a forged stem before pairing.
    #[serde(default)]
    pub forged_suffix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub name: String,
    pub root: PathBuf,
    pub layout: LayoutAdapter,
    #[serde(default)]
    pub counts: Option<Counts>,
    #[serde(default)]
    pub mask_rule: MaskRule,
}

impl DatasetDescriptor {
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::InvalidDescriptor(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

fn layout(forged: &str, pristine: Option<&str>, mask: &str, suffix: Option<&str>) -> LayoutAdapter {
    LayoutAdapter {
        forged_glob: forged.into(),
        pristine_glob: pristine.map(Into::into),
        mask_pattern: mask.into(),
        forged_suffix: suffix.map(Into::into),
    }
}

fn counts(forged: usize, pristine: usize) -> Option<Counts> {
    Some(Counts { forged, pristine })
}

/// The built-in descriptor for `name`, rooted at `root`.
pub fn registry_descriptor(name: &str, root: impl Into<PathBuf>) -> Result<DatasetDescriptor, DatasetError> {
    let (layout, counts, mask_rule) = match name {
        "columbia" => (
            layout(
                "4cam_splc/*.tif",
                Some("4cam_auth/*.tif"),
                "4cam_splc/edgemask/{stem}_edgemask.*",
                None,
            ),
            counts(180, 183),
            MaskRule::Default,
        ),
        "casia1_sp" => (
            layout("Sp/*.jpg", Some("Au/*.jpg"), "groundtruth/Sp/{stem}_gt.png", None),
            None,
            MaskRule::Default,
        ),
        "casia1_cm" => (
            layout("CM/*.jpg", Some("Au/*.jpg"), "groundtruth/CM/{stem}_gt.png", None),
            None,
            MaskRule::Default,
        ),
        "coverage" => (
            layout("image/*t.tif", Some("image/*[0-9].tif"), "mask/{stem}forged.tif", Some("t")),
            counts(100, 100),
            MaskRule::Default,
        ),
        "dso1" => (
            layout("images/splicing-*.png", Some("images/normal-*.png"), "masks/{stem}.png", None),
            counts(100, 100),
            MaskRule::Default,
        ),
        "korus" => (
            layout(
                "tampered-realistic/*.TIF",
                Some("pristine/*.TIF"),
                "ground-truth/{stem}.PNG",
                None,
            ),
            counts(220, 220),
            MaskRule::AnyNonzero,
        ),
        "autosplice" => (
            layout("forged/*.jpg", Some("authentic/*.jpg"), "mask/{stem}_mask.png", None),
            counts(3621, 2273),
            MaskRule::Default,
        ),
        "trace" => (
            layout("images/*.png", None, "masks/{stem}.png", None),
            None,
            MaskRule::Default,
        ),
        _ => {
            return Err(DatasetError::UnknownDataset {
                name: name.to_string(),
            })
        }
    };
    Ok(DatasetDescriptor {
        name: name.to_string(),
        root: root.into(),
        layout,
        counts,
        mask_rule,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub data: DataMap,
    pub mask: Array2<u8>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    path: PathBuf,
    rel: String,
    name: String,
    mask: Option<PathBuf>,
}

/// An immutable, index-addressable dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    descriptor: DatasetDescriptor,
    entries: Vec<Entry>,
    keys: Vec<String>,
    pipeline: Option<PipelineSpec>,
    tampered_only: bool,
    counts: Counts,
}

fn glob_rel(root: &Path, pattern: &str) -> Result<Vec<(PathBuf, String)>, DatasetError> {
    let full = format!("{}/{}", glob::Pattern::escape(&root.to_string_lossy()), pattern);
    let paths = glob::glob(&full).map_err(|e| DatasetError::InvalidDescriptor(e.to_string()))?;
    let mut out = Vec::new();
    for p in paths {
        let p = p.map_err(|e| DatasetError::Image(ImageIoError::Io(e.into())))?;
        if !p.is_file() {
            continue;
        }
        let rel = p
            .strip_prefix(root)
            .unwrap_or(&p)
            .to_string_lossy()
            .replace('\\', "/");
        out.push((p, rel));
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn find_mask(root: &Path, layout: &LayoutAdapter, image: &Path) -> Result<PathBuf, DatasetError> {
    let mut key = stem(image);
    if let Some(suffix) = &layout.forged_suffix {
        if let Some(stripped) = key.strip_suffix(suffix.as_str()) {
            key = stripped.to_string();
        }
    }
    let pattern = layout.mask_pattern.replace("{stem}", &glob::Pattern::escape(&key));
    let mut found = glob_rel(root, &pattern)?;
    found.sort_by(|a, b| a.1.cmp(&b.1));
    match found.len() {
        1 => Ok(found.remove(0).0),
        0 => Err(DatasetError::MissingMask(image.display().to_string())),
        n => Err(DatasetError::LayoutMismatch(format!(
            "{n} masks match `{pattern}`"
        ))),
    }
}

fn validate_keys(keys: &[String]) -> Result<(), DatasetError> {
    if keys.is_empty() {
        return Err(DatasetError::InvalidLoadKeys("no keys requested".into()));
    }
    if let Some(bad) = keys.iter().find(|k| !LOADABLE_KEYS.contains(&k.as_str())) {
        return Err(DatasetError::InvalidLoadKeys(format!(
            "`{bad}` is not one of {}",
            LOADABLE_KEYS.join(", ")
        )));
    }
    Ok(())
}

/// Enumerates a dataset. When a pipeline is given its declared inputs are the
/// keys loaded for each item; otherwise `load` is used.
pub fn load_dataset<S: AsRef<str>>(
    descriptor: &DatasetDescriptor,
    pipeline: Option<&PipelineSpec>,
    tampered_only: bool,
    load: &[S],
) -> Result<Dataset, DatasetError> {
    let root = &descriptor.root;
    if !root.is_dir() {
        return Err(DatasetError::RootNotFound(root.clone()));
    }
    let keys: Vec<String> = match pipeline {
        Some(p) => {
            p.validate()?;
            p.inputs.clone()
        }
        None => load.iter().map(|k| k.as_ref().to_string()).collect(),
    };
    validate_keys(&keys)?;

    let layout = &descriptor.layout;
    let forged = glob_rel(root, &layout.forged_glob)?;
    let pristine = match &layout.pristine_glob {
        Some(g) => glob_rel(root, g)?,
        None => Vec::new(),
    };
    if forged.is_empty() && pristine.is_empty() {
        return Err(DatasetError::LayoutMismatch(format!(
            "no images match `{}`{} under {}",
            layout.forged_glob,
            layout.pristine_glob.as_ref().map(|g| format!(" or `{g}`")).unwrap_or_default(),
            root.display()
        )));
    }
    let found = Counts {
        forged: forged.len(),
        pristine: pristine.len(),
    };
    if let Some(expected) = descriptor.counts {
        if expected != found {
            return Err(DatasetError::CountMismatch { expected, found });
        }
    }
    let forged_rel: HashSet<&str> = forged.iter().map(|(_, r)| r.as_str()).collect();
    if let Some((_, r)) = pristine.iter().find(|(_, r)| forged_rel.contains(r.as_str())) {
        return Err(DatasetError::LayoutMismatch(format!(
            "`{r}` matches both the forged and the pristine pattern"
        )));
    }

    let mut entries = Vec::with_capacity(forged.len() + pristine.len());
    for (path, rel) in forged {
        let mask = find_mask(root, layout, &path)?;
        entries.push(Entry {
            name: String::new(),
            path,
            rel,
            mask: Some(mask),
        });
    }
    if !tampered_only {
        for (path, rel) in pristine {
            entries.push(Entry {
                name: String::new(),
                path,
                rel,
                mask: None,
            });
        }
    }
    entries.sort_by(|a, b| a.rel.cmp(&b.rel));
    assign_names(&mut entries);

    Ok(Dataset {
        descriptor: descriptor.clone(),
        entries,
        keys,
        pipeline: pipeline.cloned(),
        tampered_only,
        counts: found,
    })
}

/// Stems when they are unique, otherwise relative paths with `/` as `__`.
fn assign_names(entries: &mut [Entry]) {
    let stems: Vec<String> = entries.iter().map(|e| stem(&e.path)).collect();
    let unique = stems.iter().collect::<HashSet<_>>().len() == stems.len();
    for (e, s) in entries.iter_mut().zip(stems) {
        e.name = if unique {
            s
        } else {
            let rel = Path::new(&e.rel).with_extension("");
            rel.to_string_lossy().replace('/', "__")
        };
    }
}

/// Loads the requested keys for one image file and returns them with the
/// image's `(height, width)`.
pub fn load_image_data<S: AsRef<str>>(path: &Path, keys: &[S]) -> Result<(DataMap, (usize, usize)), DatasetError> {
    let keys: Vec<String> = keys.iter().map(|k| k.as_ref().to_string()).collect();
    validate_keys(&keys)?;
    let wants = |k: &str| keys.iter().any(|w| w == k);
    let mut data = DataMap::new();
    let mut size = None;
    if wants(IMAGE) {
        let img = image_io::read_image(path)?;
        size = Some(img.size());
        data.insert(IMAGE, Value::Image(img)).expect("reserved key type");
    }
    if wants(DCT_COEFFICIENTS) || wants(QTABLES) {
        if image_io::file_kind(path)? != FileKind::Jpeg {
            return Err(DatasetError::DctRequestedForNonJpeg(path.display().to_string()));
        }
        let (dct, qtables) = image_io::read_jpeg_data(path)?;
        if wants(DCT_COEFFICIENTS) {
            data.insert(DCT_COEFFICIENTS, Value::Dct(dct)).expect("reserved key type");
        }
        if wants(QTABLES) {
            data.insert(QTABLES, Value::QTables(qtables)).expect("reserved key type");
        }
    }
    let size = match size {
        Some(s) => s,
        None => image_io::image_size(path)?,
    };
    if wants(IMAGE_SIZE) {
        data.insert(IMAGE_SIZE, Value::Size(size.0, size.1)).expect("reserved key type");
    }
    Ok((data, size))
}

impl Dataset {
    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn descriptor(&self) -> &DatasetDescriptor {
        &self.descriptor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tampered_only(&self) -> bool {
        self.tampered_only
    }

    /// Forged and pristine images found on disk, regardless of the filter.
    pub fn counts(&self) -> Counts {
        self.counts
    }

    /// Keys loaded before the pipeline (if any) runs.
    pub fn load_keys(&self) -> &[String] {
        &self.keys
    }

    pub fn pipeline(&self) -> Option<&PipelineSpec> {
        self.pipeline.as_ref()
    }

    pub fn image_name(&self, index: usize) -> Result<&str, DatasetError> {
        Ok(&self.entry(index)?.name)
    }

    pub fn image_path(&self, index: usize) -> Result<&Path, DatasetError> {
        Ok(&self.entry(index)?.path)
    }

    pub fn is_forged(&self, index: usize) -> Result<bool, DatasetError> {
        Ok(self.entry(index)?.mask.is_some())
    }

    fn entry(&self, index: usize) -> Result<&Entry, DatasetError> {
        self.entries.get(index).ok_or(DatasetError::IndexOutOfRange {
            index,
            len: self.entries.len(),
        })
    }

    pub fn get(&self, index: usize) -> Result<DatasetItem, DatasetError> {
        let entry = self.entry(index)?;
        let (data, size) = load_image_data(&entry.path, &self.keys)?;
        let mask = match &entry.mask {
            Some(path) => {
                let mask = binarize_mask(&image_io::read_image(path)?, self.descriptor.mask_rule)?;
                if mask.dim() != size {
                    return Err(DatasetError::ShapeMismatch {
                        mask: mask.dim(),
                        image: size,
                    });
                }
                mask
            }
            None => Array2::zeros(size),
        };
        let data = match &self.pipeline {
            Some(p) => p.run(&data)?,
            None => data,
        };
        Ok(DatasetItem {
            data,
            mask,
            name: entry.name.clone(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<DatasetItem, DatasetError>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}
