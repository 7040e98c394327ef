//! Synthetic classes that differ jointly in shape outline and texture frequency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::viewgen::RgbImage;

const SHAPES: [&str; 4] = ["disc", "square", "triangle", "cross"];
const TEXTURES: [(&str, f64); 2] = [("coarse", 8.0), ("fine", 2.0)];

/// Largest class count the generator can produce.
pub const MAX_CLASSES: usize = SHAPES.len() * TEXTURES.len();

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            samples_per_class: 200,
            image_size: 16,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(2..=MAX_CLASSES).contains(&self.n_classes) {
            return Err(TrainError::Config(format!("synth.n_classes must be in 2..={MAX_CLASSES}")));
        }
        if self.samples_per_class < 5 {
            return Err(TrainError::Config("synth.samples_per_class must be at least 5".into()));
        }
        if self.image_size < 8 {
            return Err(TrainError::Config("synth.image_size must be at least 8".into()));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes)
            .map(|c| format!("{}_{}", SHAPES[c / 2], TEXTURES[c % 2].0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RgbImage,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

fn inside(shape: usize, dy: f64, dx: f64, r: f64) -> bool {
    match shape {
        0 => dy * dy + dx * dx <= r * r,
        1 => dy.abs() <= r * 0.85 && dx.abs() <= r * 0.85,
        2 => dy <= r * 0.8 && dy >= -r && dx.abs() <= (dy + r) * 0.55,
        _ => (dy.abs() <= r * 0.3 && dx.abs() <= r) || (dx.abs() <= r * 0.3 && dy.abs() <= r),
    }
}

fn render(rng: &mut ChaCha8Rng, class: usize, size: usize) -> RgbImage {
    let shape = class / 2;
    let period = TEXTURES[class % 2].1;
    let s = size as f64;
    let r = rng.random_range(0.28 * s..0.4 * s);
    let cy = s / 2.0 + rng.random_range(-0.12 * s..0.12 * s);
    let cx = s / 2.0 + rng.random_range(-0.12 * s..0.12 * s);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let phase = rng.random_range(0.0..period);
    let (ct, st) = (theta.cos(), theta.sin());
    let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(20.0..110.0));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(130.0..230.0));
    let contrast = rng.random_range(40.0..70.0);
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let stripe = ((dx * ct + dy * st + phase) / period * std::f64::consts::TAU).sin();
            let base = if inside(shape, dy, dx, r) { fg } else { bg };
            for b in base {
                let v = b + contrast * stripe + rng.random_range(-12.0..12.0);
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(size, size, pixels).expect("generated buffer matches its size")
}

/// Deterministic, class-balanced dataset with a stratified 80/20 train/test split.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset, TrainError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_train = (spec.samples_per_class * 4).div_ceil(5);
    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for i in 0..spec.samples_per_class {
        for class in 0..spec.n_classes {
            samples.push(Sample {
                image: render(&mut rng, class, spec.image_size),
                label: class,
                split: if i < n_train { Split::Train } else { Split::Test },
            });
        }
    }
    Ok(Dataset {
        classes: spec.class_names(),
        samples,
    })
}
