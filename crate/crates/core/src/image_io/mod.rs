//! Image decoding, baseline JPEG coefficient extraction and PNG output.

pub mod jpeg;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use ndarray::{Array2, Array3, ArrayView2};

pub use jpeg::{parse_jpeg, JpegError, ZIGZAG};

#[derive(thiserror::Error, Debug)]
pub enum ImageIoError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: String, reason: String },
    #[error(transparent)]
    Jpeg(#[from] JpegError),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// 8-bit image stored channel-first (channels × height × width), with one
/// (gray) or three (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTensor {
    data: Array3<u8>,
}

impl ImageTensor {
    pub fn new(data: Array3<u8>) -> Result<Self, ImageIoError> {
        let (c, h, w) = data.dim();
        if c != 1 && c != 3 {
            return Err(ImageIoError::InvalidImage(format!(
                "expected 1 or 3 channels, got {c}"
            )));
        }
        if h == 0 || w == 0 {
            return Err(ImageIoError::InvalidImage("empty image".into()));
        }
        Ok(Self { data })
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn data(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn into_inner(self) -> Array3<u8> {
        self.data
    }
}

/// One 8×8 quantization table in natural (row-major) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QTable([u16; 64]);

impl QTable {
    pub fn new(values: [u16; 64]) -> Self {
        Self(values)
    }

    /// Step for frequency (row `u`, column `v`).
    pub fn step(&self, u: usize, v: usize) -> u16 {
        self.0[u * 8 + v]
    }

    pub fn values(&self) -> &[u16; 64] {
        &self.0
    }

    pub fn to_array(&self) -> Array2<u16> {
        Array2::from_shape_fn((8, 8), |(u, v)| self.step(u, v))
    }
}

/// Quantization tables of a JPEG file, addressed by table id (0..=3).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QTables {
    tables: [Option<QTable>; 4],
}

impl QTables {
    pub fn get(&self, id: usize) -> Option<&QTable> {
        self.tables.get(id).and_then(Option::as_ref)
    }

    pub fn set(&mut self, id: usize, table: QTable) {
        self.tables[id] = Some(table);
    }

    /// Present tables as `(id, table)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &QTable)> {
        self.tables
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_ref().map(|t| (i, t)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Quantized coefficients of one colour component. Element `(8i+u, 8j+v)`
/// of `coefficients` is frequency `(u, v)` of block `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentCoefficients {
    pub id: u8,
    /// Horizontal and vertical sampling factors.
    pub sampling: (u8, u8),
    pub qtable_id: u8,
    pub coefficients: Array2<i16>,
}

impl ComponentCoefficients {
    pub fn blocks(&self) -> (usize, usize) {
        let (r, c) = self.coefficients.dim();
        (r / 8, c / 8)
    }

    /// Coefficients of block `(i, j)` as an 8×8 view.
    pub fn block(&self, i: usize, j: usize) -> ArrayView2<'_, i16> {
        self.coefficients
            .slice(ndarray::s![i * 8..i * 8 + 8, j * 8..j * 8 + 8])
    }
}

/// Raw (not dequantized) DCT coefficients of every component in frame order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DctCoefficients {
    pub width: usize,
    pub height: usize,
    pub components: Vec<ComponentCoefficients>,
}

impl DctCoefficients {
    pub fn luma(&self) -> &ComponentCoefficients {
        &self.components[0]
    }

    /// Dequantizes, inverse-transforms and level-shifts one component back to
    /// 8-bit samples on its own (possibly subsampled) block grid.
    pub fn reconstruct(&self, component: usize, qtables: &QTables) -> Option<Array2<u8>> {
        let comp = self.components.get(component)?;
        let table = qtables.get(comp.qtable_id as usize)?;
        let basis = idct_basis();
        let (rows, cols) = comp.coefficients.dim();
        let mut out = Array2::zeros((rows, cols));
        let (bh, bw) = comp.blocks();
        let mut deq = [0f64; 64];
        for bi in 0..bh {
            for bj in 0..bw {
                let block = comp.block(bi, bj);
                for u in 0..8 {
                    for v in 0..8 {
                        deq[u * 8 + v] = f64::from(block[[u, v]]) * f64::from(table.step(u, v));
                    }
                }
                for y in 0..8 {
                    for x in 0..8 {
                        let mut s = 0.0;
                        for u in 0..8 {
                            let row = basis[y][u];
                            for v in 0..8 {
                                s += row * basis[x][v] * deq[u * 8 + v];
                            }
                        }
                        let value = (s + 128.0).round().clamp(0.0, 255.0);
                        out[[bi * 8 + y, bj * 8 + x]] = value as u8;
                    }
                }
            }
        }
        Some(out)
    }
}

/// `basis[x][u] = C(u)/2 · cos((2x+1)uπ/16)`, the orthonormal 8-point DCT-II basis.
pub(crate) fn idct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (x, row) in b.iter_mut().enumerate() {
        for (u, value) in row.iter_mut().enumerate() {
            let c = if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
            *value = 0.5 * c * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
        }
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Png,
    Tiff,
    Jpeg,
}

/// Identifies PNG, TIFF or JPEG from magic bytes.
pub fn sniff(bytes: &[u8]) -> Option<FileKind> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some(FileKind::Png)
    } else if bytes.starts_with(b"II*\0") || bytes.starts_with(b"MM\0*") {
        Some(FileKind::Tiff)
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some(FileKind::Jpeg)
    } else {
        None
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ImageIoError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ImageIoError::FileNotFound(path.display().to_string()))
        }
        Err(e) => Err(ImageIoError::Io(e)),
    }
}

/// Returns the file kind of `path` without decoding it.
pub fn file_kind(path: &Path) -> Result<FileKind, ImageIoError> {
    use std::io::Read;
    let mut file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ImageIoError::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(ImageIoError::Io(e)),
    };
    let mut head = Vec::with_capacity(8);
    file.by_ref().take(8).read_to_end(&mut head)?;
    sniff(&head).ok_or_else(|| ImageIoError::UnsupportedFormat(path.display().to_string()))
}

/// Decodes a PNG, TIFF or JPEG file to 8-bit gray or RGB samples. Alpha is
/// dropped and 16-bit samples are divided by 257.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageTensor, ImageIoError> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    decode_image(&bytes).map_err(|e| match e {
        ImageIoError::CorruptImage { reason, .. } => ImageIoError::CorruptImage {
            path: path.display().to_string(),
            reason,
        },
        ImageIoError::UnsupportedFormat(_) => {
            ImageIoError::UnsupportedFormat(path.display().to_string())
        }
        other => other,
    })
}

/// In-memory variant of [`read_image`].
pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor, ImageIoError> {
    let format = match sniff(bytes) {
        Some(FileKind::Png) => ImageFormat::Png,
        Some(FileKind::Tiff) => ImageFormat::Tiff,
        Some(FileKind::Jpeg) => ImageFormat::Jpeg,
        None => return Err(ImageIoError::UnsupportedFormat("<memory>".into())),
    };
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| {
        ImageIoError::CorruptImage {
            path: "<memory>".into(),
            reason: e.to_string(),
        }
    })?;
    from_dynamic(img)
}

fn from_dynamic(img: DynamicImage) -> Result<ImageTensor, ImageIoError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(buf) => Array3::from_shape_vec((1, h, w), buf.into_raw()),
        DynamicImage::ImageLumaA8(buf) => {
            let raw: Vec<u8> = buf.into_raw().chunks_exact(2).map(|p| p[0]).collect();
            Array3::from_shape_vec((1, h, w), raw)
        }
        DynamicImage::ImageLuma16(buf) => {
            let raw: Vec<u8> = buf.into_raw().into_iter().map(scale16).collect();
            Array3::from_shape_vec((1, h, w), raw)
        }
        DynamicImage::ImageLumaA16(buf) => {
            let raw: Vec<u8> = buf
                .into_raw()
                .chunks_exact(2)
                .map(|p| scale16(p[0]))
                .collect();
            Array3::from_shape_vec((1, h, w), raw)
        }
        DynamicImage::ImageRgb8(buf) => interleaved_to_planar(&buf.into_raw(), 3, h, w),
        DynamicImage::ImageRgba8(buf) => interleaved_to_planar(&buf.into_raw(), 4, h, w),
        DynamicImage::ImageRgb16(buf) => {
            let raw: Vec<u8> = buf.into_raw().into_iter().map(scale16).collect();
            interleaved_to_planar(&raw, 3, h, w)
        }
        DynamicImage::ImageRgba16(buf) => {
            let raw: Vec<u8> = buf.into_raw().into_iter().map(scale16).collect();
            interleaved_to_planar(&raw, 4, h, w)
        }
        other => {
            return Err(ImageIoError::UnsupportedFormat(format!(
                "sample layout {:?}",
                other.color()
            )))
        }
    }
    .map_err(|e| ImageIoError::InvalidImage(e.to_string()))?;
    ImageTensor::new(data)
}

fn scale16(v: u16) -> u8 {
    (v / 257) as u8
}

/// Keeps the first three channels of an interleaved buffer.
fn interleaved_to_planar(
    raw: &[u8],
    stride: usize,
    h: usize,
    w: usize,
) -> Result<Array3<u8>, ndarray::ShapeError> {
    if raw.len() != stride * h * w {
        return Err(ndarray::ShapeError::from_kind(
            ndarray::ErrorKind::IncompatibleShape,
        ));
    }
    Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| {
        raw[(y * w + x) * stride + c]
    }))
}

/// Extracts quantized DCT coefficients and quantization tables from a
/// baseline JPEG file.
pub fn read_jpeg_data(path: impl AsRef<Path>) -> Result<(DctCoefficients, QTables), ImageIoError> {
    let bytes = read_bytes(path.as_ref())?;
    Ok(parse_jpeg(&bytes)?)
}

/// Reads only the pixel dimensions `(height, width)` from a file header.
pub fn image_size(path: impl AsRef<Path>) -> Result<(usize, usize), ImageIoError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(ImageIoError::FileNotFound(path.display().to_string()));
    }
    file_kind(path)?;
    let (w, h) = image::image_dimensions(path).map_err(|e| ImageIoError::CorruptImage {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok((h as usize, w as usize))
}

/// Writes a lossless gray or RGB PNG.
pub fn write_png(path: impl AsRef<Path>, image: &ImageTensor) -> Result<(), ImageIoError> {
    let (c, h, w) = image.data.dim();
    let raw: Vec<u8> = if c == 1 {
        image.data.iter().copied().collect()
    } else {
        let mut raw = Vec::with_capacity(3 * h * w);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    raw.push(image.data[[ch, y, x]]);
                }
            }
        }
        raw
    };
    let color = if c == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let file = fs::File::create(path.as_ref())?;
    let encoder = image::codecs::png::PngEncoder::new(std::io::BufWriter::new(file));
    image::ImageEncoder::write_image(encoder, &raw, w as u32, h as u32, color).map_err(|e| {
        match e {
            image::ImageError::IoError(io) => ImageIoError::Io(io),
            other => ImageIoError::InvalidImage(other.to_string()),
        }
    })
}
