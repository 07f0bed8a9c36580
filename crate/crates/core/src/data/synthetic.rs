//! Desk-scale image classification data.
//!
//! Each class owns a few smooth prototype images (sums of coloured Gaussian
//! blobs). A sample picks one of its class's prototypes, shifts it by up to
//! `jitter` pixels, adds a global brightness offset and per-pixel Gaussian
//! noise, and is clamped to `[0, 1]`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::seed::{Rng, SeedPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub image_size: usize,
    pub channels: usize,
    pub noise: f64,
    pub prototypes: usize,
    pub blobs: usize,
    pub jitter: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 10,
            per_class: 300,
            test_per_class: 100,
            image_size: 8,
            channels: 3,
            noise: 0.2,
            prototypes: 4,
            blobs: 3,
            jitter: 1,
            seed: 0,
        }
    }
}

fn prototype(spec: &SyntheticSpec, rng: &mut Rng) -> Vec<f64> {
    let s = spec.image_size as f64;
    let plane = spec.image_size * spec.image_size;
    let mut img = vec![0.0; spec.channels * plane];
    for _ in 0..spec.blobs.max(1) {
        let cy = rng.gen_range(0.0..s);
        let cx = rng.gen_range(0.0..s);
        let sigma = rng.gen_range(s / 8.0..s / 3.0);
        let amps: Vec<f64> = (0..spec.channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for y in 0..spec.image_size {
            for x in 0..spec.image_size {
                let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                let g = (-d2 / (2.0 * sigma * sigma)).exp();
                for (c, a) in amps.iter().enumerate() {
                    img[c * plane + y * spec.image_size + x] += a * g;
                }
            }
        }
    }
    let peak = img.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    img.into_iter().map(|v| 0.5 + 0.45 * v / peak).collect()
}

fn render(spec: &SyntheticSpec, proto: &[f64], rng: &mut Rng, noise: &Normal<f64>) -> Vec<f32> {
    let n = spec.image_size as isize;
    let plane = spec.image_size * spec.image_size;
    let j = spec.jitter as isize;
    let (dy, dx) = if j > 0 {
        (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
    } else {
        (0, 0)
    };
    let brightness = if spec.noise > 0.0 {
        rng.gen_range(-0.05..0.05)
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(spec.channels * plane);
    for c in 0..spec.channels {
        for y in 0..n {
            for x in 0..n {
                let sy = (y - dy).clamp(0, n - 1) as usize;
                let sx = (x - dx).clamp(0, n - 1) as usize;
                let mut v = proto[c * plane + sy * spec.image_size + sx] + brightness;
                if spec.noise > 0.0 {
                    v += noise.sample(rng);
                }
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

/// Deterministic train and test sets drawn from the same class prototypes.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    if spec.per_class == 0 {
        return Err(Error::config("synthetic dataset needs per_class > 0"));
    }
    if spec.image_size == 0 || !spec.image_size.is_multiple_of(8) {
        return Err(Error::config(format!(
            "image size {} not divisible by 8",
            spec.image_size
        )));
    }
    if spec.classes < 2 || spec.channels == 0 || spec.prototypes == 0 {
        return Err(Error::config("need >= 2 classes, >= 1 channel, >= 1 prototype"));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::config("noise must be non-negative"));
    }
    let root = SeedPath::root(spec.seed).with("synthetic");
    let mut proto_rng = root.with("prototypes").rng();
    let protos: Vec<Vec<Vec<f64>>> = (0..spec.classes)
        .map(|_| (0..spec.prototypes).map(|_| prototype(spec, &mut proto_rng)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid std");

    let make = |split: Split, per_class: usize| -> Result<Dataset> {
        let tag = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let mut rng = root.with(tag).rng();
        let mut images = Vec::new();
        let mut labels = Vec::new();
        // interleave classes so that prefixes stay roughly balanced
        for _ in 0..per_class {
            for (class, cp) in protos.iter().enumerate() {
                let p = &cp[rng.gen_range(0..cp.len())];
                images.extend(render(spec, p, &mut rng, &noise));
                labels.push(class);
            }
        }
        Dataset::new(
            images,
            labels,
            spec.classes,
            spec.channels,
            spec.image_size,
            spec.image_size,
            split,
        )
    };
    Ok((make(Split::Train, spec.per_class)?, make(Split::Test, spec.test_per_class)?))
}
