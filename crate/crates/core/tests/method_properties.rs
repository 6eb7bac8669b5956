//! Behaviour of the built-in detectors on seeded synthetic forgeries.

use forgery_bench::data::{DataMap, Value, DCT_COEFFICIENTS, IMAGE, IMAGE_SIZE};
use forgery_bench::image_io::{parse_jpeg, ImageTensor};
use forgery_bench::methods::{load_method, Method};
use forgery_bench_testkit as tk;
use image::{GrayImage, RgbImage};
use ndarray::{Array2, Array3};

fn rgb_map(img: &RgbImage) -> DataMap {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = Array3::from_shape_fn((3, h, w), |(c, y, x)| img.get_pixel(x as u32, y as u32).0[c]);
    DataMap::new()
        .with(IMAGE, Value::Image(ImageTensor::new(data).unwrap()))
        .unwrap()
}

fn gray_map(img: &GrayImage) -> DataMap {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = Array3::from_shape_vec((1, h, w), img.as_raw().clone()).unwrap();
    DataMap::new()
        .with(IMAGE, Value::Image(ImageTensor::new(data).unwrap()))
        .unwrap()
}

fn jpeg_map(bytes: &[u8], size: usize) -> DataMap {
    let (dct, _) = parse_jpeg(bytes).unwrap();
    DataMap::new()
        .with(DCT_COEFFICIENTS, Value::Dct(dct))
        .unwrap()
        .with(IMAGE_SIZE, Value::Size(size, size))
        .unwrap()
}

fn method(name: &str) -> Box<dyn Method> {
    load_method(name, &serde_json::json!({})).unwrap().0
}

fn mask_array(mask: &GrayImage) -> Array2<u8> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    Array2::from_shape_vec((h, w), tk::mask_bits(mask)).unwrap()
}

fn iou(pred: &Array2<u8>, gt: &Array2<u8>) -> f64 {
    let inter = pred.iter().zip(gt).filter(|(&p, &g)| p == 1 && g == 1).count();
    let union = pred.iter().zip(gt).filter(|(&p, &g)| p == 1 || g == 1).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn dq_highlights_single_compressed_regions() {
    let dq = method("dq");
    let mut wins = 0;
    for seed in 0..10 {
        let s = tk::double_compression_splice(seed, 512, 95, 75);
        let heat = dq.benchmark(&jpeg_map(&s.jpeg, 512)).unwrap().heatmap.unwrap();
        let gt = mask_array(&s.mask);
        let (mut inside, mut ni, mut outside, mut no) = (0.0, 0, 0.0, 0);
        for (&h, &g) in heat.iter().zip(&gt) {
            if g == 1 {
                inside += f64::from(h);
                ni += 1;
            } else {
                outside += f64::from(h);
                no += 1;
            }
        }
        let (mi, mo) = (inside / ni as f64, outside / no as f64);
        println!("dq seed {seed}: inside {mi:.3} outside {mo:.3}");
        wins += usize::from(mi > mo);
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn grid_align_finds_shifted_patches() {
    let m = method("grid_align");
    let (mut hits, mut good) = (0, 0);
    for seed in 0..10 {
        let s = tk::grid_shift_splice(100 + seed, 256);
        let out = m.benchmark(&rgb_map(&s.image)).unwrap();
        let score = iou(out.mask.as_ref().unwrap(), &mask_array(&s.mask));
        println!("grid seed {seed}: detection {:?} iou {score:.3}", out.detection);
        if out.detection == Some(1.0) {
            hits += 1;
            good += usize::from(score >= 0.3);
        }
    }
    let mut false_alarms = 0;
    for seed in 0..10 {
        let out = m.benchmark(&rgb_map(&tk::pristine_decoded(200 + seed, 256))).unwrap();
        false_alarms += usize::from(out.detection == Some(1.0));
    }
    println!("grid: hits {hits} good {good} false alarms {false_alarms}");
    assert!(hits >= 8 && good >= 8 && false_alarms <= 1);
}

#[test]
fn noise_blocks_finds_denoised_regions() {
    let m = method("noise_blocks");
    let mut hits = 0;
    for seed in 0..10 {
        let s = tk::noise_removal_splice(300 + seed, 256);
        let out = m.benchmark(&gray_map(&s.image)).unwrap();
        let score = iou(out.mask.as_ref().unwrap(), &mask_array(&s.mask));
        hits += usize::from(out.detection == Some(1.0) && score >= 0.3);
    }
    let mut false_alarms = 0;
    for seed in 0..10 {
        let out = m.benchmark(&gray_map(&tk::homogeneous_noise(400 + seed, 256))).unwrap();
        false_alarms += usize::from(out.detection == Some(1.0));
    }
    println!("noise: hits {hits} false alarms {false_alarms}");
    assert!(hits >= 8 && false_alarms <= 1);
}

#[test]
fn dq_single_compression_is_flat() {
    let dq = method("dq");
    for seed in 0..3 {
        let jpeg = tk::single_compression(500 + seed, 256, 90);
        let heat = dq.benchmark(&jpeg_map(&jpeg, 256)).unwrap().heatmap.unwrap();
        let global = heat.mean().unwrap();
        assert!(global < 0.6, "mean {global}");
        // 64×64 regions stand in for "block regions".
        for by in 0..4 {
            for bx in 0..4 {
                let region = heat.slice(ndarray::s![by * 64..(by + 1) * 64, bx * 64..(bx + 1) * 64]);
                assert!(region.mean().unwrap() - global <= 0.3);
            }
        }
    }
}

#[test]
fn grid_align_ignores_white_noise() {
    let m = method("grid_align");
    let mut r = tk::rng(77);
    let img = GrayImage::from_fn(128, 128, |_, _| image::Luma([rand::Rng::gen::<u8>(&mut r)]));
    let out = m.benchmark(&gray_map(&img)).unwrap();
    assert_eq!(out.detection, Some(0.0));
    assert!(out.mask.unwrap().iter().all(|&v| v == 0));
}

#[test]
fn noise_blocks_ignores_constant_images() {
    let m = method("noise_blocks");
    let img = GrayImage::from_pixel(96, 96, image::Luma([128]));
    assert_eq!(m.benchmark(&gray_map(&img)).unwrap().detection, Some(0.0));
}
