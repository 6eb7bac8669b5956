//! Synthetic images, forgeries, JPEG corpora and dataset fixtures used by the
//! forgery-bench test suites. Everything is seeded and deterministic.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth random field in roughly `[-1, 1]` with features of size `scale`.
fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, scale: usize) -> Vec<f64> {
    let (gw, gh) = (w / scale + 2, h / scale + 2);
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let fy = y as f64 / scale as f64;
        let (gy, ty) = (fy as usize, smooth(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / scale as f64;
            let (gx, tx) = (fx as usize, smooth(fx.fract()));
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(gy, gx) * (1.0 - tx) + g(gy, gx + 1) * tx;
            let bottom = g(gy + 1, gx) * (1.0 - tx) + g(gy + 1, gx + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Textured colour image: multi-octave noise, a few hard-edged shapes and a
/// small amount of per-pixel sensor-like noise.
pub fn natural_rgb(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
    let mut luma = vec![0.0; w * h];
    for (scale, amp) in [(64, 45.0), (32, 28.0), (16, 18.0), (8, 12.0), (4, 8.0), (2, 5.0)] {
        let n = value_noise(rng, w, h, scale);
        for (l, v) in luma.iter_mut().zip(n) {
            *l += amp * v;
        }
    }
    let cb = value_noise(rng, w, h, 48);
    let cr = value_noise(rng, w, h, 40);
    let mut shapes = Vec::new();
    for _ in 0..rng.gen_range(3..7) {
        let cy = rng.gen_range(0.0..h as f64);
        let cx = rng.gen_range(0.0..w as f64);
        let r = rng.gen_range(0.05..0.2) * w.min(h) as f64;
        let delta = rng.gen_range(-50.0..50.0);
        let disk = rng.gen_bool(0.5);
        shapes.push((cy, cx, r, delta, disk));
    }
    let fine = Normal::new(0.0, 2.0).unwrap();
    let base = rng.gen_range(100.0..150.0);
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let i = y * w + x;
        let mut l = base + luma[i];
        for &(cy, cx, r, delta, disk) in &shapes {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let inside = if disk {
                dy * dy + dx * dx < r * r
            } else {
                dy.abs() < r && dx.abs() < 0.6 * r
            };
            if inside {
                l += delta;
            }
        }
        let (u, v) = (25.0 * cb[i], 25.0 * cr[i]);
        let mut px = [l + 1.4 * v, l - 0.34 * u - 0.71 * v, l + 1.77 * u];
        for c in &mut px {
            *c += fine.sample(rng);
        }
        Rgb([clamp_u8(px[0]), clamp_u8(px[1]), clamp_u8(px[2])])
    })
}

pub fn to_gray(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get_pixel(x, y).0;
        let l = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
        Luma([clamp_u8(l)])
    })
}

/// Chroma layout requested from the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// The encoder's default for the quality.
    Default,
    S444,
    S422,
    S420,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JpegOptions {
    pub quality: u8,
    pub sampling: Sampling,
    pub restart_interval: Option<u16>,
    pub progressive: bool,
}

impl JpegOptions {
    pub fn quality(quality: u8) -> Self {
        Self {
            quality,
            sampling: Sampling::Default,
            restart_interval: None,
            progressive: false,
        }
    }
}

fn encoder(out: &mut Vec<u8>, opts: JpegOptions) -> Encoder<&mut Vec<u8>> {
    let mut enc = Encoder::new(out, opts.quality);
    match opts.sampling {
        Sampling::Default => {}
        Sampling::S444 => enc.set_sampling_factor(SamplingFactor::F_1_1),
        Sampling::S422 => enc.set_sampling_factor(SamplingFactor::F_2_1),
        Sampling::S420 => enc.set_sampling_factor(SamplingFactor::F_2_2),
    }
    if let Some(r) = opts.restart_interval {
        enc.set_restart_interval(r);
    }
    enc.set_progressive(opts.progressive);
    enc
}

pub fn encode_rgb(img: &RgbImage, opts: JpegOptions) -> Vec<u8> {
    let mut out = Vec::new();
    encoder(&mut out, opts)
        .encode(img.as_raw(), img.width() as u16, img.height() as u16, ColorType::Rgb)
        .expect("jpeg encoding");
    out
}

pub fn encode_gray(img: &GrayImage, opts: JpegOptions) -> Vec<u8> {
    let mut out = Vec::new();
    encoder(&mut out, opts)
        .encode(img.as_raw(), img.width() as u16, img.height() as u16, ColorType::Luma)
        .expect("jpeg encoding");
    out
}

/// Decodes to RGB with the reference decoder.
pub fn decode_rgb(bytes: &[u8]) -> RgbImage {
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    let pixels = dec.decode().expect("reference decode");
    let info = dec.info().unwrap();
    let (w, h) = (u32::from(info.width), u32::from(info.height));
    match info.pixel_format {
        jpeg_decoder::PixelFormat::RGB24 => RgbImage::from_raw(w, h, pixels).unwrap(),
        jpeg_decoder::PixelFormat::L8 => {
            let g = GrayImage::from_raw(w, h, pixels).unwrap();
            RgbImage::from_fn(w, h, |x, y| {
                let v = g.get_pixel(x, y).0[0];
                Rgb([v, v, v])
            })
        }
        other => panic!("unexpected pixel format {other:?}"),
    }
}

/// Reference decoder output without colour conversion: interleaved samples
/// of every component at full resolution, plus `(width, height, components)`.
pub fn decode_raw_components(bytes: &[u8]) -> (Vec<u8>, usize, usize, usize) {
    let mut probe = jpeg_decoder::Decoder::new(bytes);
    probe.read_info().expect("reference header");
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    // Declaring three-component data as RGB makes the decoder interleave the
    // planes without converting them.
    if probe.info().unwrap().pixel_format == jpeg_decoder::PixelFormat::RGB24 {
        dec.set_color_transform(jpeg_decoder::ColorTransform::RGB);
    }
    let pixels = dec.decode().expect("reference decode");
    let info = dec.info().unwrap();
    let c = match info.pixel_format {
        jpeg_decoder::PixelFormat::L8 => 1,
        jpeg_decoder::PixelFormat::RGB24 => 3,
        other => panic!("unexpected pixel format {other:?}"),
    };
    (pixels, usize::from(info.width), usize::from(info.height), c)
}

const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113,
    92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

const ANNEX_K_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
];

/// Quality-scaled Annex K table in natural order, as written by the encoder.
pub fn expected_qtable(quality: u8, chroma: bool) -> [u16; 64] {
    let q = u32::from(quality.clamp(1, 100));
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let base = if chroma { &ANNEX_K_CHROMA } else { &ANNEX_K_LUMA };
    base.map(|b| ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16)
}

/// Rectangle `(y0, x0, height, width)`.
pub type Rect = (usize, usize, usize, usize);

pub fn rect_mask(w: usize, h: usize, r: Rect) -> GrayImage {
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let inside = y >= r.0 && y < r.0 + r.2 && x >= r.1 && x < r.1 + r.3;
        Luma([if inside { 255 } else { 0 }])
    })
}

/// Ground truth as 0/1 values in row-major order.
pub fn mask_bits(mask: &GrayImage) -> Vec<u8> {
    mask.as_raw().iter().map(|&v| u8::from(v > 127)).collect()
}

fn random_rect(rng: &mut ChaCha8Rng, w: usize, h: usize, align: usize) -> Rect {
    let rh = rng.gen_range(h / 4..=h / 2) / align * align;
    let rw = rng.gen_range(w / 4..=w / 2) / align * align;
    let y0 = rng.gen_range(align..h - rh - align) / align * align;
    let x0 = rng.gen_range(align..w - rw - align) / align * align;
    (y0, x0, rh, rw)
}

pub struct JpegSplice {
    pub jpeg: Vec<u8>,
    pub mask: GrayImage,
    pub rect: Rect,
}

/// Background compressed at `q1` then, with a block-aligned region pasted
/// from an uncompressed source, recompressed at `q2`.
pub fn double_compression_splice(seed: u64, size: usize, q1: u8, q2: u8) -> JpegSplice {
    let mut r = rng(seed);
    let background = natural_rgb(&mut r, size, size);
    let donor = natural_rgb(&mut r, size, size);
    let first = decode_rgb(&encode_rgb(&background, JpegOptions::quality(q1)));
    let rect = random_rect(&mut r, size, size, 8);
    let mut composite = first;
    for y in rect.0..rect.0 + rect.2 {
        for x in rect.1..rect.1 + rect.3 {
            composite.put_pixel(x as u32, y as u32, *donor.get_pixel(x as u32, y as u32));
        }
    }
    JpegSplice {
        jpeg: encode_rgb(&composite, JpegOptions::quality(q2)),
        mask: rect_mask(size, size, rect),
        rect,
    }
}

/// One compression of a textured image.
pub fn single_compression(seed: u64, size: usize, quality: u8) -> Vec<u8> {
    let mut r = rng(seed);
    encode_rgb(&natural_rgb(&mut r, size, size), JpegOptions::quality(quality))
}

pub struct PixelSplice<I> {
    pub image: I,
    pub mask: GrayImage,
    pub rect: Rect,
}

/// Decoded JPEG background with a patch from another decoded JPEG pasted so
/// its 8×8 grid sits at offset (4, 4). The result is left uncompressed.
pub fn grid_shift_splice(seed: u64, size: usize) -> PixelSplice<RgbImage> {
    let mut r = rng(seed);
    let qb = [75, 80, 85][r.gen_range(0..3)];
    let qd = [75, 80, 85][r.gen_range(0..3)];
    let background = decode_rgb(&encode_rgb(&natural_rgb(&mut r, size, size), JpegOptions::quality(qb)));
    let donor = decode_rgb(&encode_rgb(&natural_rgb(&mut r, size, size), JpegOptions::quality(qd)));
    let aligned = random_rect(&mut r, size, size, 8);
    let rect = (aligned.0 + 4, aligned.1 + 4, aligned.2, aligned.3);
    let mut image = background;
    for dy in 0..rect.2 {
        for dx in 0..rect.3 {
            // Source offsets are multiples of 8, so the donor grid lands on (4, 4).
            let p = *donor.get_pixel((aligned.1 + dx) as u32, (aligned.0 + dy) as u32);
            image.put_pixel((rect.1 + dx) as u32, (rect.0 + dy) as u32, p);
        }
    }
    PixelSplice {
        image,
        mask: rect_mask(size, size, rect),
        rect,
    }
}

/// A single-compressed image decoded back to pixels.
pub fn pristine_decoded(seed: u64, size: usize) -> RgbImage {
    let mut r = rng(seed);
    let q = [75, 80, 85, 90][r.gen_range(0..4)];
    decode_rgb(&encode_rgb(&natural_rgb(&mut r, size, size), JpegOptions::quality(q)))
}

fn ramp(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let a = rng.gen_range(0.3..0.7);
    let wobble = value_noise(rng, size, size, 64);
    (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            40.0 + 170.0 * (a * x + (1.0 - a) * y) / size as f64 + 8.0 * wobble[i]
        })
        .collect()
}

fn noisy_gray(rng: &mut ChaCha8Rng, size: usize, sigma: impl Fn(usize, usize) -> f64) -> GrayImage {
    let base = ramp(rng, size);
    let unit = Normal::new(0.0, 1.0).unwrap();
    GrayImage::from_fn(size as u32, size as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Luma([clamp_u8(base[y * size + x] + sigma(y, x) * unit.sample(rng))])
    })
}

/// Gaussian noise of σ = 2 on a smooth ramp.
pub fn homogeneous_noise(seed: u64, size: usize) -> GrayImage {
    let mut r = rng(seed);
    noisy_gray(&mut r, size, |_, _| 2.0)
}

/// Like [`homogeneous_noise`] but with σ = 0.2 inside a rectangle.
pub fn noise_removal_splice(seed: u64, size: usize) -> PixelSplice<GrayImage> {
    let mut r = rng(seed);
    let rect = random_rect(&mut r, size, size, 1);
    let inside = |y: usize, x: usize| y >= rect.0 && y < rect.0 + rect.2 && x >= rect.1 && x < rect.1 + rect.3;
    let image = noisy_gray(&mut r, size, |y, x| if inside(y, x) { 0.2 } else { 2.0 });
    PixelSplice {
        image,
        mask: rect_mask(size, size, rect),
        rect,
    }
}

pub struct CorpusEntry {
    pub name: String,
    pub jpeg: Vec<u8>,
    pub quality: u8,
    pub grayscale: bool,
    /// Chroma sampled at luma resolution (or no chroma).
    pub full_chroma: bool,
}

/// Baseline JPEGs over qualities 75/90/95/100, colour and grayscale, several
/// chroma layouts, odd sizes and restart intervals.
pub fn jpeg_corpus(seed: u64) -> Vec<CorpusEntry> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let cases: [(u8, u32, u32, Sampling, Option<u16>, bool); 10] = [
        (75, 64, 48, Sampling::Default, None, false),
        (90, 61, 45, Sampling::Default, None, false),
        (95, 40, 72, Sampling::Default, None, false),
        (100, 33, 33, Sampling::Default, None, false),
        (75, 50, 37, Sampling::S444, None, false),
        (90, 47, 29, Sampling::S422, None, false),
        (95, 80, 64, Sampling::S420, Some(3), false),
        (75, 57, 41, Sampling::Default, None, true),
        (100, 24, 19, Sampling::Default, Some(2), true),
        (90, 96, 72, Sampling::S444, Some(5), false),
    ];
    for (i, (q, w, h, sampling, restart, gray)) in cases.into_iter().enumerate() {
        let img = natural_rgb(&mut r, w as usize, h as usize);
        let opts = JpegOptions {
            quality: q,
            sampling,
            restart_interval: restart,
            progressive: false,
        };
        let jpeg = if gray {
            encode_gray(&to_gray(&img), opts)
        } else {
            encode_rgb(&img, opts)
        };
        let full_chroma = gray || sampling == Sampling::S444 || (sampling == Sampling::Default && q >= 90);
        out.push(CorpusEntry {
            name: format!("corpus_{i:02}_q{q}.jpg"),
            jpeg,
            quality: q,
            grayscale: gray,
            full_chroma,
        });
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)
}

fn save(path: &Path, img: &image::DynamicImage) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    img.save(path).map_err(io::Error::other)
}

/// Writes the Columbia folder layout with `forged` spliced and `pristine`
/// authentic 16×16 TIFF stubs plus PNG edge masks.
pub fn columbia_fixture(root: &Path, forged: usize, pristine: usize) -> io::Result<()> {
    let mut r = rng(363);
    for i in 0..forged {
        let img = natural_rgb(&mut r, 16, 16);
        let stem = format!("canong3_canonxt_sub_{i:03}");
        save(
            &root.join("4cam_splc").join(format!("{stem}.tif")),
            &image::DynamicImage::ImageRgb8(img),
        )?;
        let mask = rect_mask(16, 16, (4, 4, 8, 6));
        save(
            &root.join("4cam_splc/edgemask").join(format!("{stem}_edgemask.png")),
            &image::DynamicImage::ImageLuma8(mask),
        )?;
    }
    for i in 0..pristine {
        let img = natural_rgb(&mut r, 16, 16);
        save(
            &root.join("4cam_auth").join(format!("canong3_{i:03}.tif")),
            &image::DynamicImage::ImageRgb8(img),
        )?;
    }
    Ok(())
}

/// A generic `forged/`, `pristine/`, `masks/` layout. Forged images are
/// JPEG files with rectangle masks; returns the forged paths.
pub fn jpeg_dataset_fixture(root: &Path, forged: usize, pristine: usize, size: usize) -> io::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for i in 0..forged {
        let s = double_compression_splice(1000 + i as u64, size, 95, 75);
        let path = root.join("forged").join(format!("img_{i:02}.jpg"));
        write(&path, &s.jpeg)?;
        save(
            &root.join("masks").join(format!("img_{i:02}.png")),
            &image::DynamicImage::ImageLuma8(s.mask),
        )?;
        paths.push(path);
    }
    for i in 0..pristine {
        let jpeg = single_compression(2000 + i as u64, size, 75);
        write(&root.join("pristine").join(format!("ref_{i:02}.jpg")), &jpeg)?;
    }
    Ok(paths)
}
