use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Init, ParamStore};
use crate::nrca::{reconstruction_loss, Nrca, NrcaConfig};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::{adamw_step, AdamState, AdamW};

/// Reconstruction-only training of the autoencoder on noisy/clean pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 8,
            lr: 3e-3,
            noise_sigma: 0.3,
            seed: 0,
        }
    }
}

pub struct DenoiseOutcome {
    pub nrca: Nrca,
    pub params: ParamStore<f32>,
    /// Reconstruction MSE per step.
    pub losses: Vec<f64>,
}

/// Smooth `[C, size, size]` images: a mid-grey offset plus three random
/// low-frequency plane waves per channel.
pub fn smooth_images(n: usize, channels: usize, size: usize, seed: u64) -> Vec<Tensor<f32>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut data = Vec::with_capacity(channels * size * size);
            for _ in 0..channels {
                let waves: Vec<(f64, f64, f64, f64)> = (0..3)
                    .map(|_| {
                        (
                            rng.random_range(-2.0..2.0),
                            rng.random_range(-2.0..2.0),
                            rng.random::<f64>(),
                            rng.random_range(0.05..0.12),
                        )
                    })
                    .collect();
                for y in 0..size {
                    for x in 0..size {
                        let (u, v) = (y as f64 / size as f64, x as f64 / size as f64);
                        let s: f64 = waves
                            .iter()
                            .map(|&(fy, fx, ph, a)| a * (TAU * (fy * u + fx * v + ph)).sin())
                            .sum();
                        data.push((0.5 + s) as f32);
                    }
                }
            }
            Tensor::from_parts(vec![channels, size, size], data)
        })
        .collect()
}

fn batch_of(images: &[&Tensor<f32>]) -> Tensor<f32> {
    let mut shape = vec![images.len()];
    shape.extend_from_slice(images[0].shape());
    Tensor::from_parts(shape, images.iter().flat_map(|t| t.data().iter().copied()).collect())
}

fn add_noise(x: &Tensor<f32>, sigma: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let n = Normal::new(0.0, sigma).expect("validated sigma");
    x.map(|v| v + n.sample(rng) as f32)
}

pub fn train_denoiser(
    cfg: &NrcaConfig,
    channels: usize,
    clean: &[Tensor<f32>],
    dcfg: &DenoiseConfig,
) -> Result<DenoiseOutcome> {
    cfg.validate()?;
    if clean.is_empty() || dcfg.batch_size == 0 {
        return Err(Error::Data(
            "denoiser training needs images and a positive batch size".into(),
        ));
    }
    if !(dcfg.noise_sigma.is_finite() && dcfg.noise_sigma > 0.0) {
        return Err(Error::Config("noise_sigma must be finite and > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed);
    let mut params = ParamStore::new();
    let nrca = Nrca::new(&mut Init::new(&mut params, &mut rng), cfg, channels)?;
    let mut opt = AdamState::new(&params);
    let hp = AdamW {
        weight_decay: 0.0,
        ..AdamW::default()
    };
    let mut losses = Vec::with_capacity(dcfg.steps);
    for _ in 0..dcfg.steps {
        let pick: Vec<&Tensor<f32>> = (0..dcfg.batch_size)
            .map(|_| &clean[rng.random_range(0..clean.len())])
            .collect();
        let target = batch_of(&pick);
        let noisy = add_noise(&target, dcfg.noise_sigma, &mut rng);
        let mut tape = Tape::<f32>::new();
        let p = params.bind(&mut tape);
        let x = tape.constant(noisy);
        let y = tape.constant(target);
        let out = nrca.forward(&mut tape, &p, x)?;
        let loss = reconstruction_loss(&mut tape, out, y)?;
        losses.push(tape.value(loss).item()? as f64);
        tape.backward(loss)?;
        let grads: Vec<Tensor<f32>> = p.grads(&tape).into_iter().map(|g| g.expect("bound")).collect();
        adamw_step(&mut params, &grads, &mut opt, dcfg.lr, &hp)?;
    }
    Ok(DenoiseOutcome { nrca, params, losses })
}

/// `(model MSE, identity MSE)` on freshly noised copies of `clean`, where
/// the identity baseline returns the noisy input unchanged.
pub fn denoise_mse(outcome: &DenoiseOutcome, clean: &[Tensor<f32>], sigma: f64, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut model, mut ident, mut n) = (0.0, 0.0, 0usize);
    for img in clean {
        let target = batch_of(&[img]);
        let noisy = add_noise(&target, sigma, &mut rng);
        let mut tape = Tape::<f32>::no_grad();
        let p = outcome.params.bind(&mut tape);
        let x = tape.constant(noisy.clone());
        let out = outcome.nrca.forward(&mut tape, &p, x)?;
        for ((o, z), t) in tape.value(out).data().iter().zip(noisy.data()).zip(target.data()) {
            model += ((o - t) as f64).powi(2);
            ident += ((z - t) as f64).powi(2);
        }
        n += target.numel();
    }
    if n == 0 {
        return Err(Error::Data("no held-out images".into()));
    }
    Ok((model / n as f64, ident / n as f64))
}
