//! The keyed per-image data container passed between datasets,
//! preprocessing and methods.

use std::collections::BTreeMap;

use ndarray::Array3;

use crate::image_io::{DctCoefficients, ImageTensor, QTables};

pub const IMAGE: &str = "image";
pub const DCT_COEFFICIENTS: &str = "dct_coefficients";
pub const QTABLES: &str = "qtables";
pub const IMAGE_SIZE: &str = "image_size";

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// 8-bit samples, channels × height × width.
    Image(ImageTensor),
    /// Real-valued samples produced by pixel transforms, channels × height × width.
    FloatImage(Array3<f32>),
    Dct(DctCoefficients),
    QTables(QTables),
    /// `(height, width)`.
    Size(usize, usize),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Image(_) => "u8 image",
            Value::FloatImage(_) => "float image",
            Value::Dct(_) => "dct coefficients",
            Value::QTables(_) => "quantization tables",
            Value::Size(..) => "image size",
        }
    }

    /// Pixel array as `f32` regardless of storage type.
    pub fn pixels_f32(&self) -> Option<Array3<f32>> {
        match self {
            Value::Image(img) => Some(img.data().mapv(f32::from)),
            Value::FloatImage(a) => Some(a.clone()),
            _ => None,
        }
    }

    /// `(channels, height, width)` of a pixel value.
    pub fn pixel_dim(&self) -> Option<(usize, usize, usize)> {
        match self {
            Value::Image(img) => Some(img.data().dim()),
            Value::FloatImage(a) => Some(a.dim()),
            _ => None,
        }
    }
}

#[derive(thiserror::Error, Debug, Clone, PartialEq, Eq)]
#[error("key `{key}` expects {expected}, got {got}")]
pub struct KeyTypeError {
    pub key: String,
    pub expected: &'static str,
    pub got: &'static str,
}

/// Ordered string-keyed map of per-image arrays. Reserved keys are type
/// checked on insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataMap {
    entries: BTreeMap<String, Value>,
}

impl DataMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: Value) -> Result<(), KeyTypeError> {
        let key = key.into();
        let expected = match key.as_str() {
            IMAGE => matches!(value, Value::Image(_) | Value::FloatImage(_))
                .then_some(())
                .ok_or("image"),
            DCT_COEFFICIENTS => matches!(value, Value::Dct(_))
                .then_some(())
                .ok_or("dct coefficients"),
            QTABLES => matches!(value, Value::QTables(_))
                .then_some(())
                .ok_or("quantization tables"),
            IMAGE_SIZE => matches!(value, Value::Size(..))
                .then_some(())
                .ok_or("image size"),
            _ => Ok(()),
        };
        if let Err(expected) = expected {
            return Err(KeyTypeError {
                key,
                expected,
                got: value.type_name(),
            });
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn with(mut self, key: impl Into<String>, value: Value) -> Result<Self, KeyTypeError> {
        self.insert(key, value)?;
        Ok(self)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps only the listed keys.
    pub fn retain_keys(&mut self, keys: &[String]) {
        self.entries.retain(|k, _| keys.iter().any(|w| w == k));
    }

    pub fn image(&self) -> Option<&Value> {
        self.get(IMAGE)
    }

    pub fn dct(&self) -> Option<&DctCoefficients> {
        match self.get(DCT_COEFFICIENTS) {
            Some(Value::Dct(d)) => Some(d),
            _ => None,
        }
    }

    pub fn qtables(&self) -> Option<&QTables> {
        match self.get(QTABLES) {
            Some(Value::QTables(q)) => Some(q),
            _ => None,
        }
    }

    pub fn image_size(&self) -> Option<(usize, usize)> {
        match self.get(IMAGE_SIZE) {
            Some(Value::Size(h, w)) => Some((*h, *w)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_keys_are_type_checked() {
        let mut d = DataMap::new();
        let err = d.insert(IMAGE, Value::Size(1, 1)).unwrap_err();
        assert_eq!(err.key, "image");
        assert!(d.insert(IMAGE_SIZE, Value::Size(4, 5)).is_ok());
        assert!(d.insert("custom", Value::Size(4, 5)).is_ok());
        assert_eq!(d.image_size(), Some((4, 5)));
        assert_eq!(d.keys().collect::<Vec<_>>(), vec!["custom", "image_size"]);
    }
}
