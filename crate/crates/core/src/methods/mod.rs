//! The method interface, its registry, and the built-in detectors.

pub mod acontrario;
mod dq;
mod grid_align;
mod noise_blocks;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{DataMap, Value, IMAGE};
use crate::postprocessing::PostprocessError;
use crate::preprocessing::{PipelineSpec, PreprocessError, GRAY_WEIGHTS};

pub use dq::{DqConfig, DqMethod};
pub use grid_align::{GridAlignConfig, GridAlignMethod, NO_VOTE};
pub use noise_blocks::{NoiseBlocksConfig, NoiseBlocksMethod};

/// Names accepted by [`load_method`].
pub const METHOD_NAMES: [&str; 3] = ["dq", "grid_align", "noise_blocks"];

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum MethodError {
    #[error("unknown method `{name}`; registered methods: {}", METHOD_NAMES.join(", "))]
    UnknownMethod { name: String },
    #[error("invalid config for `{param}`: {reason}")]
    InvalidConfig { param: String, reason: String },
    #[error("missing input key `{0}`")]
    MissingKey(String),
    #[error("image is {got:?}, smaller than the {min}×{min} minimum")]
    ImageTooSmall { min: usize, got: (usize, usize) },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputType {
    Heatmap,
    Mask,
    Detection,
}

impl OutputType {
    pub const ALL: [OutputType; 3] = [OutputType::Heatmap, OutputType::Mask, OutputType::Detection];

    pub fn as_str(self) -> &'static str {
        match self {
            OutputType::Heatmap => "heatmap",
            OutputType::Mask => "mask",
            OutputType::Detection => "detection",
        }
    }
}

impl fmt::Display for OutputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// At most one heatmap, one mask and one detection score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodOutput {
    pub heatmap: Option<Array2<f32>>,
    pub mask: Option<Array2<u8>>,
    pub detection: Option<f64>,
}

impl MethodOutput {
    pub fn output_types(&self) -> Vec<OutputType> {
        let mut out = Vec::new();
        if self.heatmap.is_some() {
            out.push(OutputType::Heatmap);
        }
        if self.mask.is_some() {
            out.push(OutputType::Mask);
        }
        if self.detection.is_some() {
            out.push(OutputType::Detection);
        }
        out
    }

    /// Checks value ranges and, when `size` is given, spatial dimensions.
    pub fn validate(&self, size: Option<(usize, usize)>) -> Result<(), MethodError> {
        if self.heatmap.is_none() && self.mask.is_none() && self.detection.is_none() {
            return Err(MethodError::InvalidInput("empty method output".into()));
        }
        if let Some(h) = &self.heatmap {
            if h.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(MethodError::InvalidInput("heatmap outside [0, 1]".into()));
            }
            if size.is_some_and(|s| s != h.dim()) {
                return Err(MethodError::InvalidInput("heatmap size differs from image".into()));
            }
        }
        if let Some(m) = &self.mask {
            if m.iter().any(|&v| v > 1) {
                return Err(MethodError::InvalidInput("mask is not binary".into()));
            }
            if size.is_some_and(|s| s != m.dim()) {
                return Err(MethodError::InvalidInput("mask size differs from image".into()));
            }
        }
        if let Some(d) = self.detection {
            if !(0.0..=1.0).contains(&d) {
                return Err(MethodError::InvalidInput("detection outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Method-specific diagnostic arrays.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtraArray {
    U8(Array2<u8>),
    F32(Array2<f32>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prediction {
    pub output: MethodOutput,
    pub extras: Vec<(String, ExtraArray)>,
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    /// Output types every prediction carries.
    fn output_types(&self) -> &'static [OutputType];

    /// The preprocessing the method expects to have been applied.
    fn pipeline(&self) -> PipelineSpec;

    fn predict(&self, d: &DataMap) -> Result<Prediction, MethodError>;

    /// Single entry point used by the benchmark runner.
    fn benchmark(&self, d: &DataMap) -> Result<MethodOutput, MethodError> {
        Ok(self.predict(d)?.output)
    }
}

/// `{ "name": ..., "config": { ... } }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default = "empty_object")]
    pub config: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl MethodSpec {
    pub fn from_json(text: &str) -> Result<Self, MethodError> {
        serde_json::from_str(text).map_err(|e| MethodError::InvalidConfig {
            param: "method spec".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(&self) -> Result<(Box<dyn Method>, PipelineSpec), MethodError> {
        load_method(&self.name, &self.config)
    }
}

fn parse_config<T: serde::de::DeserializeOwned>(config: &serde_json::Value) -> Result<T, MethodError> {
    let config = if config.is_null() { empty_object() } else { config.clone() };
    serde_json::from_value(config).map_err(|e| MethodError::InvalidConfig {
        param: "config".into(),
        reason: e.to_string(),
    })
}

pub(crate) fn invalid(param: &str, reason: impl Into<String>) -> MethodError {
    MethodError::InvalidConfig {
        param: param.into(),
        reason: reason.into(),
    }
}

pub(crate) fn check_device(device: &Option<String>) {
    if let Some(d) = device {
        if d != "cpu" {
            log::warn!("device `{d}` ignored: built-in methods run on the CPU");
        }
    }
}

/// Builds a registered method from a JSON config (`null` or `{}` for defaults).
pub fn load_method(
    name: &str,
    config: &serde_json::Value,
) -> Result<(Box<dyn Method>, PipelineSpec), MethodError> {
    let method: Box<dyn Method> = match name {
        "dq" => Box::new(DqMethod::new(parse_config(config)?)?),
        "grid_align" => Box::new(GridAlignMethod::new(parse_config(config)?)?),
        "noise_blocks" => Box::new(NoiseBlocksMethod::new(parse_config(config)?)?),
        _ => {
            return Err(MethodError::UnknownMethod {
                name: name.to_string(),
            })
        }
    };
    let pipeline = method.pipeline();
    Ok((method, pipeline))
}

/// Luminance as `f64` from a 1- or 3-channel image value.
pub(crate) fn luminance(d: &DataMap) -> Result<Array2<f64>, MethodError> {
    let value = d.get(IMAGE).ok_or_else(|| MethodError::MissingKey(IMAGE.into()))?;
    let pixels = match value {
        Value::Image(img) => img.data().mapv(f64::from),
        Value::FloatImage(a) => a.mapv(f64::from),
        other => {
            return Err(MethodError::InvalidInput(format!(
                "`image` holds {}",
                other.type_name()
            )))
        }
    };
    let (c, h, w) = pixels.dim();
    match c {
        1 => Ok(pixels.index_axis(ndarray::Axis(0), 0).to_owned()),
        3 => Ok(Array2::from_shape_fn((h, w), |(y, x)| {
            (0..3).map(|k| GRAY_WEIGHTS[k] * pixels[[k, y, x]]).sum()
        })),
        _ => Err(MethodError::InvalidInput(format!("{c}-channel image"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn registry_defaults_load() {
        for name in METHOD_NAMES {
            let (m, p) = load_method(name, &json!({})).unwrap();
            assert_eq!(m.name(), name);
            assert!(p.validate().is_ok());
        }
    }

    #[test]
    fn dq_declares_its_inputs() {
        let (_, p) = load_method("dq", &serde_json::Value::Null).unwrap();
        let mut inputs = p.inputs.clone();
        inputs.sort();
        assert_eq!(inputs, vec!["dct_coefficients", "image_size"]);
    }

    #[test]
    fn unknown_and_invalid() {
        assert!(matches!(
            load_method("nope", &json!({})),
            Err(MethodError::UnknownMethod { .. })
        ));
        let err = load_method("grid_align", &json!({"nfa_epsilon": -1.0})).err().unwrap();
        assert!(matches!(err, MethodError::InvalidConfig { ref param, .. } if param == "nfa_epsilon"));
        assert!(load_method("dq", &json!({"bogus": 1})).is_err());
        assert!(load_method("dq", &json!({"seed": 3, "device": "cpu"})).is_ok());
    }

    #[test]
    fn spec_from_json() {
        let spec = MethodSpec::from_json(r#"{"name": "noise_blocks", "config": {"block_size": 32}}"#).unwrap();
        let (m, _) = spec.load().unwrap();
        assert_eq!(m.name(), "noise_blocks");
        assert!(MethodSpec::from_json(r#"{"name": "noise_blocks", "config": {"block_size": 1}}"#)
            .unwrap()
            .load()
            .is_err());
    }

    #[test]
    fn output_validation() {
        let out = MethodOutput {
            detection: Some(1.5),
            ..Default::default()
        };
        assert!(out.validate(None).is_err());
        assert!(MethodOutput::default().validate(None).is_err());
        let ok = MethodOutput {
            mask: Some(Array2::zeros((2, 3))),
            ..Default::default()
        };
        assert!(ok.validate(Some((2, 3))).is_ok());
        assert!(ok.validate(Some((3, 3))).is_err());
    }
}
