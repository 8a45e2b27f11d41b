use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::{AugmentSpec, Label, LabeledDataset, LabeledImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Additive `N(0, sigma²)` noise, clamped to `[0, 1]`.
pub fn gaussian_noise<R: Rng + ?Sized>(pixels: &Tensor<f32>, sigma: f64, rng: &mut R) -> Tensor<f32> {
    if sigma == 0.0 {
        return pixels.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    pixels.map(|p| (p as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32)
}

/// `Poisson(p · scale) / scale` per pixel, clamped to `[0, 1]`.
pub fn shot_noise<R: Rng + ?Sized>(pixels: &Tensor<f32>, scale: f64, rng: &mut R) -> Tensor<f32> {
    pixels.map(|p| {
        let lambda = p.max(0.0) as f64 * scale;
        if lambda <= 0.0 {
            return 0.0;
        }
        let k: f64 = Poisson::new(lambda).expect("lambda is finite and positive").sample(rng);
        (k / scale).clamp(0.0, 1.0) as f32
    })
}

/// Tops up every minority class to the majority count with noisy copies of
/// its own images, alternating Gaussian and shot noise. Originals come first
/// and unchanged; copy `j` of a class is drawn from a stream keyed by
/// `(spec.seed, j, class)`.
pub fn balance_classes(train: Vec<LabeledImage>, spec: &AugmentSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    let counts = LabeledDataset::class_counts(&train);
    if let Some(l) = Label::ALL.into_iter().find(|l| counts[l.index()] == 0) {
        return Err(Error::Data(format!("class {l} has no images to balance from")));
    }
    let target = *counts.iter().max().expect("three classes");
    let mut out = train.clone();
    for label in Label::ALL {
        let members: Vec<&LabeledImage> = train.iter().filter(|im| im.label == label).collect();
        for j in 0..target - counts[label.index()] {
            let src = members[j % members.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((j as u64) << 2) | label.index() as u64);
            let (pixels, kind) = if j % 2 == 0 {
                (gaussian_noise(&src.pixels, spec.gaussian_sigma, &mut rng), "gauss")
            } else {
                (shot_noise(&src.pixels, spec.shot_noise_scale, &mut rng), "shot")
            };
            out.push(LabeledImage {
                pixels,
                source_id: format!("{}+{kind}{j}", src.source_id),
                augmented: true,
                ..src.clone()
            });
        }
    }
    Ok(out)
}
