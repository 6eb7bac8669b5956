//! `.phz` output container: a deflated zip with `manifest.json` and a raw
//! little-endian row-major `payload.bin`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use super::BenchmarkError;
use crate::methods::{ExtraArray, MethodOutput};

const MANIFEST: &str = "manifest.json";
const PAYLOAD: &str = "payload.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: Dtype,
    pub shape: [usize; 2],
    pub byte_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub arrays: Vec<ArrayEntry>,
    pub detection: Option<f64>,
}

fn corrupt(path: &Path, reason: impl std::fmt::Display) -> BenchmarkError {
    BenchmarkError::CorruptOutput {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Serializes named arrays and an optional detection score.
pub fn encode(arrays: &[(String, ExtraArray)], detection: Option<f64>) -> Result<Vec<u8>, BenchmarkError> {
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(arrays.len());
    for (name, array) in arrays {
        let byte_offset = payload.len();
        let (dtype, shape) = match array {
            ExtraArray::F32(a) => {
                a.iter().for_each(|v| payload.extend_from_slice(&v.to_le_bytes()));
                (Dtype::F32, a.dim())
            }
            ExtraArray::U8(a) => {
                payload.extend(a.iter());
                (Dtype::U8, a.dim())
            }
        };
        entries.push(ArrayEntry {
            name: name.clone(),
            dtype,
            shape: [shape.0, shape.1],
            byte_offset,
        });
    }
    let manifest = serde_json::to_vec(&Manifest {
        arrays: entries,
        detection,
    })
    .expect("manifest serializes");

    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    let mut zip = ZipWriter::new(std::io::Cursor::new(Vec::new()));
    zip.start_file(MANIFEST, options)?;
    zip.write_all(&manifest)?;
    zip.start_file(PAYLOAD, options)?;
    zip.write_all(&payload)?;
    Ok(zip.finish()?.into_inner())
}

fn read_entry(archive: &mut ZipArchive<std::io::Cursor<&[u8]>>, name: &str, path: &Path) -> Result<Vec<u8>, BenchmarkError> {
    let mut file = archive.by_name(name).map_err(|e| corrupt(path, e))?;
    let mut out = Vec::new();
    file.read_to_end(&mut out).map_err(|e| corrupt(path, e))?;
    Ok(out)
}

/// Inverse of [`encode`]; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Vec<(String, ExtraArray)>, Option<f64>), BenchmarkError> {
    let mut archive = ZipArchive::new(std::io::Cursor::new(bytes)).map_err(|e| corrupt(path, e))?;
    let manifest: Manifest =
        serde_json::from_slice(&read_entry(&mut archive, MANIFEST, path)?).map_err(|e| corrupt(path, e))?;
    let payload = read_entry(&mut archive, PAYLOAD, path)?;
    let mut arrays = Vec::with_capacity(manifest.arrays.len());
    for entry in manifest.arrays {
        let [h, w] = entry.shape;
        let width = match entry.dtype {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        };
        let end = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(width))
            .and_then(|n| n.checked_add(entry.byte_offset))
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| corrupt(path, format!("array `{}` exceeds the payload", entry.name)))?;
        let raw = &payload[entry.byte_offset..end];
        let array = match entry.dtype {
            Dtype::F32 => {
                let values = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                ExtraArray::F32(Array2::from_shape_vec((h, w), values).map_err(|e| corrupt(path, e))?)
            }
            Dtype::U8 => ExtraArray::U8(Array2::from_shape_vec((h, w), raw.to_vec()).map_err(|e| corrupt(path, e))?),
        };
        arrays.push((entry.name, array));
    }
    Ok((arrays, manifest.detection))
}

/// Writes to a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BenchmarkError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| BenchmarkError::Io(e.error))?;
    Ok(())
}

pub fn save_output(folder: impl AsRef<Path>, image_name: &str, output: &MethodOutput) -> Result<std::path::PathBuf, BenchmarkError> {
    let path = folder.as_ref().join(format!("{image_name}.phz"));
    let mut arrays = Vec::new();
    if let Some(h) = &output.heatmap {
        arrays.push(("heatmap".to_string(), ExtraArray::F32(h.clone())));
    }
    if let Some(m) = &output.mask {
        arrays.push(("mask".to_string(), ExtraArray::U8(m.clone())));
    }
    write_atomic(&path, &encode(&arrays, output.detection)?)?;
    Ok(path)
}

pub fn load_output(path: impl AsRef<Path>) -> Result<MethodOutput, BenchmarkError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let (arrays, detection) = decode(&bytes, path)?;
    let mut out = MethodOutput {
        detection,
        ..Default::default()
    };
    for (name, array) in arrays {
        match (name.as_str(), array) {
            ("heatmap", ExtraArray::F32(a)) if out.heatmap.is_none() => out.heatmap = Some(a),
            ("mask", ExtraArray::U8(a)) if out.mask.is_none() => out.mask = Some(a),
            (other, _) => return Err(corrupt(path, format!("unexpected array `{other}`"))),
        }
    }
    Ok(out)
}
