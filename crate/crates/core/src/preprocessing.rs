//! Composable transforms over a [`DataMap`] and the pipeline that validates
//! inputs and filters outputs.

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{DataMap, Value, IMAGE, IMAGE_SIZE};
use crate::image_io::ImageTensor;

/// ITU-R BT.601 luma weights.
pub const GRAY_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("wrong channel count: expected {expected}, got {got}")]
    WrongChannelCount { expected: usize, got: usize },
    #[error("normalize: standard deviation must be non-zero")]
    ZeroStd,
    #[error("missing pipeline input `{0}`")]
    MissingInputKey(String),
    #[error("pipeline never produced output `{0}`")]
    MissingOutputKey(String),
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("key `{key}` holds {got}, transform needs {expected}")]
    WrongValueType {
        key: String,
        expected: &'static str,
        got: &'static str,
    },
}

fn one() -> f32 {
    1.0
}

fn is_one(v: &f32) -> bool {
    *v == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// `[0, 255]` → `[0, 1]` by division by 255.
    ZeroOneRange,
    /// Per-channel `(x − mean) / std`; single-entry vectors broadcast.
    Normalize { mean: Vec<f32>, std: Vec<f32> },
    RgbToGray,
    GrayToRgb,
    /// Multiplies by `scale`, rounds half away from zero and clamps to `[0, 255]`.
    RoundToUint {
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f32,
    },
    /// Adds `image_size = (height, width)`.
    GetImageSize,
}

impl TransformSpec {
    pub fn round_to_uint() -> Self {
        TransformSpec::RoundToUint { scale: 1.0 }
    }

    fn validate(&self) -> Result<(), PreprocessError> {
        if let TransformSpec::Normalize { mean, std } = self {
            if std.iter().any(|&s| s == 0.0) {
                return Err(PreprocessError::ZeroStd);
            }
            if mean.is_empty() || std.is_empty() {
                return Err(PreprocessError::InvalidPipeline(
                    "normalize needs mean and std".into(),
                ));
            }
        }
        Ok(())
    }
}

fn take_pixels(d: &DataMap) -> Result<&Value, PreprocessError> {
    d.get(IMAGE)
        .ok_or_else(|| PreprocessError::MissingKey(IMAGE.into()))
}

fn pixels_f32(v: &Value) -> Result<Array3<f32>, PreprocessError> {
    v.pixels_f32().ok_or_else(|| PreprocessError::WrongValueType {
        key: IMAGE.into(),
        expected: "image",
        got: v.type_name(),
    })
}

fn put(d: &mut DataMap, key: &str, value: Value) {
    d.insert(key, value)
        .expect("transforms only write correctly typed reserved keys");
}

/// Applies one transform to a copy of `d`.
pub fn apply_transform(t: &TransformSpec, d: &DataMap) -> Result<DataMap, PreprocessError> {
    t.validate()?;
    let mut out = d.clone();
    match t {
        TransformSpec::ZeroOneRange => {
            let px = pixels_f32(take_pixels(d)?)?;
            put(&mut out, IMAGE, Value::FloatImage(px.mapv(|v| v / 255.0)));
        }
        TransformSpec::Normalize { mean, std } => {
            let mut px = pixels_f32(take_pixels(d)?)?;
            let c = px.dim().0;
            for (name, v) in [("mean", mean), ("std", std)] {
                if v.len() != 1 && v.len() != c {
                    return Err(PreprocessError::InvalidPipeline(format!(
                        "normalize {name} has {} entries for {c} channels",
                        v.len()
                    )));
                }
            }
            for (ch, mut plane) in px.axis_iter_mut(Axis(0)).enumerate() {
                let m = mean[if mean.len() == 1 { 0 } else { ch }];
                let s = std[if std.len() == 1 { 0 } else { ch }];
                plane.mapv_inplace(|v| (v - m) / s);
            }
            put(&mut out, IMAGE, Value::FloatImage(px));
        }
        TransformSpec::RgbToGray => {
            let px = pixels_f32(take_pixels(d)?)?;
            let (c, h, w) = px.dim();
            if c != 3 {
                return Err(PreprocessError::WrongChannelCount {
                    expected: 3,
                    got: c,
                });
            }
            let gray = Array3::from_shape_fn((1, h, w), |(_, y, x)| {
                let s: f64 = (0..3)
                    .map(|ch| GRAY_WEIGHTS[ch] * f64::from(px[[ch, y, x]]))
                    .sum();
                s as f32
            });
            put(&mut out, IMAGE, Value::FloatImage(gray));
        }
        TransformSpec::GrayToRgb => {
            let value = take_pixels(d)?;
            let (c, _, _) = value.pixel_dim().ok_or_else(|| PreprocessError::WrongValueType {
                key: IMAGE.into(),
                expected: "image",
                got: value.type_name(),
            })?;
            if c != 1 {
                return Err(PreprocessError::WrongChannelCount {
                    expected: 1,
                    got: c,
                });
            }
            let rgb = match value {
                Value::Image(img) => {
                    let a = img.data();
                    let (_, h, w) = a.dim();
                    let rgb = Array3::from_shape_fn((3, h, w), |(_, y, x)| a[[0, y, x]]);
                    Value::Image(ImageTensor::new(rgb).expect("three channels"))
                }
                Value::FloatImage(a) => {
                    let (_, h, w) = a.dim();
                    Value::FloatImage(Array3::from_shape_fn((3, h, w), |(_, y, x)| a[[0, y, x]]))
                }
                _ => unreachable!("pixel_dim checked the variant"),
            };
            put(&mut out, IMAGE, rgb);
        }
        TransformSpec::RoundToUint { scale } => {
            let px = pixels_f32(take_pixels(d)?)?;
            let rounded = px.mapv(|v| (v * scale).round().clamp(0.0, 255.0) as u8);
            let tensor = ImageTensor::new(rounded).map_err(|_| {
                PreprocessError::WrongChannelCount {
                    expected: 3,
                    got: px.dim().0,
                }
            })?;
            put(&mut out, IMAGE, Value::Image(tensor));
        }
        TransformSpec::GetImageSize => {
            let value = take_pixels(d)?;
            let (_, h, w) = value.pixel_dim().ok_or_else(|| PreprocessError::WrongValueType {
                key: IMAGE.into(),
                expected: "image",
                got: value.type_name(),
            })?;
            put(&mut out, IMAGE_SIZE, Value::Size(h, w));
        }
    }
    Ok(out)
}

/// Ordered transforms with declared input and output keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub transforms: Vec<TransformSpec>,
    pub inputs: Vec<String>,
    pub outputs_keys: Vec<String>,
}

impl PipelineSpec {
    pub fn new(
        transforms: Vec<TransformSpec>,
        inputs: &[&str],
        outputs_keys: &[&str],
    ) -> Result<Self, PreprocessError> {
        let p = Self {
            transforms,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs_keys: outputs_keys.iter().map(|s| s.to_string()).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.inputs.is_empty() {
            return Err(PreprocessError::InvalidPipeline("no input keys".into()));
        }
        if self.outputs_keys.is_empty() {
            return Err(PreprocessError::InvalidPipeline("no output keys".into()));
        }
        self.transforms.iter().try_for_each(TransformSpec::validate)
    }

    pub fn from_json(text: &str) -> Result<Self, PreprocessError> {
        let p: Self = serde_json::from_str(text)
            .map_err(|e| PreprocessError::InvalidPipeline(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline serializes")
    }

    /// Validates inputs, applies every transform in order and keeps exactly
    /// `outputs_keys`.
    pub fn run(&self, d: &DataMap) -> Result<DataMap, PreprocessError> {
        self.validate()?;
        if let Some(missing) = self.inputs.iter().find(|k| !d.contains_key(k)) {
            return Err(PreprocessError::MissingInputKey(missing.clone()));
        }
        let mut current = d.clone();
        for t in &self.transforms {
            current = apply_transform(t, &current)?;
        }
        if let Some(missing) = self.outputs_keys.iter().find(|k| !current.contains_key(k)) {
            return Err(PreprocessError::MissingOutputKey(missing.clone()));
        }
        current.retain_keys(&self.outputs_keys);
        Ok(current)
    }
}

pub fn run_pipeline(p: &PipelineSpec, d: &DataMap) -> Result<DataMap, PreprocessError> {
    p.run(d)
}
