//! Noise-reducing convolutional autoencoder.
//!
//! The encoder is a stack of `conv → GELU → max-pool → per-channel norm`
//! blocks followed by a 1×1 bottleneck to `latent_channels`. The decoder
//! mirrors it with transposed convolutions whose kernel and stride equal the
//! pool window, so every block exactly undoes one pooling step and the output
//! has the input's spatial size. The last decoder layer is linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, Init, ParamId, LN_EPS};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrcaConfig {
    pub enabled: bool,
    pub encoder_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_window: usize,
    pub latent_channels: usize,
}

impl Default for NrcaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            encoder_channels: vec![16, 32, 64],
            kernel_size: 3,
            pool_window: 2,
            latent_channels: 64,
        }
    }
}

impl NrcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(Error::Config("nrca.encoder_channels must not be empty".into()));
        }
        if self.encoder_channels.contains(&0) || self.latent_channels == 0 {
            return Err(Error::Config("nrca channel counts must be positive".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "nrca.kernel_size must be odd for size-preserving padding, got {}",
                self.kernel_size
            )));
        }
        if self.pool_window == 0 {
            return Err(Error::Config("nrca.pool_window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Spatial sizes must be multiples of this.
    pub fn required_divisor(&self) -> usize {
        self.pool_window.pow(self.depth() as u32)
    }

    /// Number of scalar parameters for `image_channels`-channel images.
    pub fn param_count(&self, image_channels: usize) -> usize {
        let k2 = self.kernel_size * self.kernel_size;
        let p2 = self.pool_window * self.pool_window;
        let mut n = 0;
        let mut cin = image_channels;
        for &c in &self.encoder_channels {
            n += c * cin * k2 + c + 2 * c;
            cin = c;
        }
        n += self.latent_channels * cin + self.latent_channels;
        let mut cin = self.latent_channels;
        for &c in self.decoder_channels(image_channels).iter() {
            n += cin * c * p2 + c;
            cin = c;
        }
        n
    }

    fn decoder_channels(&self, image_channels: usize) -> Vec<usize> {
        let mut outs: Vec<usize> = self.encoder_channels[..self.depth() - 1]
            .iter()
            .rev()
            .copied()
            .collect();
        outs.push(image_channels);
        outs
    }
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    kernel: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    kernel: ParamId,
    bias: ParamId,
}

/// Parameter handles of one autoencoder; the tensors live in a `ParamStore`.
#[derive(Clone, Debug)]
pub struct Nrca {
    cfg: NrcaConfig,
    image_channels: usize,
    encoder: Vec<EncoderBlock>,
    bottleneck: (ParamId, ParamId),
    decoder: Vec<DecoderBlock>,
}

impl Nrca {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &NrcaConfig, image_channels: usize) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel_size;
        let p = cfg.pool_window;
        let mut encoder = Vec::new();
        let mut cin = image_channels;
        for (i, &c) in cfg.encoder_channels.iter().enumerate() {
            let mut b = init.sub(&format!("enc{i}"));
            let std = (2.0 / (cin * k * k) as f64).sqrt();
            encoder.push(EncoderBlock {
                kernel: b.normal("conv/w", &[c, cin, k, k], std),
                bias: b.zeros("conv/b", &[c]),
                gamma: b.ones("norm/gamma", &[c]),
                beta: b.zeros("norm/beta", &[c]),
            });
            cin = c;
        }
        let latent = cfg.latent_channels;
        let bottleneck = {
            let mut b = init.sub("bottleneck");
            (
                b.normal("w", &[latent, cin, 1, 1], (2.0 / cin as f64).sqrt()),
                b.zeros("b", &[latent]),
            )
        };
        let mut decoder = Vec::new();
        let mut cin = latent;
        let outs = cfg.decoder_channels(image_channels);
        let last = outs.len() - 1;
        for (i, &c) in outs.iter().enumerate() {
            let mut b = init.sub(&format!("dec{i}"));
            let gain = if i == last { 1.0 } else { 2.0 };
            decoder.push(DecoderBlock {
                kernel: b.normal("w", &[cin, c, p, p], (gain / cin as f64).sqrt()),
                bias: b.zeros("b", &[c]),
            });
            cin = c;
        }
        Ok(Self {
            cfg: cfg.clone(),
            image_channels,
            encoder,
            bottleneck,
            decoder,
        })
    }

    pub fn config(&self) -> &NrcaConfig {
        &self.cfg
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != self.image_channels {
            return Err(Error::Contract(format!(
                "autoencoder expects [B, {}, H, W] images, got {shape:?}",
                self.image_channels
            )));
        }
        let d = self.cfg.required_divisor();
        if !shape[2].is_multiple_of(d) || !shape[3].is_multiple_of(d) {
            return Err(Error::Config(format!(
                "autoencoder with {} blocks and pool window {} needs height and width divisible by {d}; got {}x{}",
                self.cfg.depth(),
                self.cfg.pool_window,
                shape[2],
                shape[3]
            )));
        }
        Ok(())
    }

    /// Denoised image with the same shape as `image`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, image: Var) -> Result<Var> {
        self.check_input(tape.shape(image))?;
        let pad = self.cfg.kernel_size / 2;
        let pool = self.cfg.pool_window;
        let mut x = image;
        for blk in &self.encoder {
            x = tape.conv2d(x, p[blk.kernel], Some(p[blk.bias]), 1, pad)?;
            x = tape.gelu(x);
            x = tape.max_pool2d(x, pool, pool)?;
            x = channel_norm(tape, x, p[blk.gamma], p[blk.beta])?;
        }
        x = tape.conv2d(x, p[self.bottleneck.0], Some(p[self.bottleneck.1]), 1, 0)?;
        x = tape.gelu(x);
        let last = self.decoder.len() - 1;
        for (i, blk) in self.decoder.iter().enumerate() {
            x = tape.conv_transpose2d(x, p[blk.kernel], Some(p[blk.bias]), pool, 0)?;
            if i != last {
                x = tape.gelu(x);
            }
        }
        Ok(x)
    }
}

/// Normalizes each channel of each sample over its spatial positions, then
/// applies a per-channel affine map. Independent of batch size.
fn channel_norm<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let flat = tape.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
    let normed = tape.normalize_last(flat, T::lit(LN_EPS));
    let normed = tape.reshape(normed, &s)?;
    let g = tape.reshape(gamma, &[s[1], 1, 1])?;
    let b = tape.reshape(beta, &[s[1], 1, 1])?;
    let scaled = tape.mul(normed, g)?;
    tape.add(scaled, b)
}

/// Mean squared error over all elements.
pub fn reconstruction_loss<T: Scalar>(tape: &mut Tape<T>, output: Var, clean: Var) -> Result<Var> {
    if tape.shape(output) != tape.shape(clean) {
        return Err(Error::dim(
            "reconstruction_loss",
            format!("output {:?} vs clean {:?}", tape.shape(output), tape.shape(clean)),
        ));
    }
    let diff = tape.sub(output, clean)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}
