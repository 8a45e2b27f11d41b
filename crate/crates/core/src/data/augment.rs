use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledImage, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Boundary handling for samples that fall outside the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// `dcba|abcd|dcba`
    #[default]
    Reflect,
    /// `aaaa|abcd|dddd`
    Nearest,
    /// `kkkk|abcd|kkkk`
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    /// Rotate by a random multiple of 90°.
    pub rotation: bool,
    /// Maximum shift as a fraction of the image side, in `[0, 1)`.
    pub translate_fraction: f64,
    /// Maximum counterclockwise shear angle in radians.
    pub shear_radians: f64,
    pub fill_mode: FillMode,
    /// Value used by [`FillMode::Constant`].
    #[serde(default)]
    pub fill_value: f32,
    pub gaussian_sigma: f64,
    /// Counts per unit intensity for shot noise.
    pub shot_noise_scale: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rotation: true,
            translate_fraction: 0.1,
            shear_radians: 0.2,
            fill_mode: FillMode::Reflect,
            fill_value: 0.0,
            gaussian_sigma: 0.05,
            shot_noise_scale: 255.0,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// No rotation, translation or shear.
    pub fn null() -> Self {
        Self {
            rotation: false,
            translate_fraction: 0.0,
            shear_radians: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.translate_fraction) {
            return Err(Error::Config(format!(
                "translate_fraction must lie in [0, 1), got {}",
                self.translate_fraction
            )));
        }
        if !self.shear_radians.is_finite() {
            return Err(Error::Config("shear_radians must be finite".into()));
        }
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::Config("gaussian_sigma must be finite and >= 0".into()));
        }
        if !(self.shot_noise_scale > 0.0 && self.shot_noise_scale.is_finite()) {
            return Err(Error::Config("shot_noise_scale must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// One concrete geometric transform. Translation is in pixels, positive
/// `tx` moves content right and positive `ty` moves it down.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AffineParams {
    pub quarter_turns: u8,
    pub tx: f64,
    pub ty: f64,
    pub shear: f64,
}

impl AffineParams {
    pub fn sample<R: Rng + ?Sized>(spec: &AugmentSpec, h: usize, w: usize, rng: &mut R) -> Self {
        let sym = |rng: &mut R, m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        Self {
            quarter_turns: if spec.rotation { rng.random_range(0..4) } else { 0 },
            tx: sym(rng, spec.translate_fraction * w as f64),
            ty: sym(rng, spec.translate_fraction * h as f64),
            shear: sym(rng, spec.shear_radians),
        }
    }
}

/// Rotates `[C, H, W]` counterclockwise by `k · 90°`; the result is `[C, W, H]`
/// for odd `k`.
pub fn rotate90(image: &Tensor<f32>, k: u8) -> Tensor<f32> {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let src = image.data();
    match k % 4 {
        0 => image.clone(),
        2 => {
            let mut out = Vec::with_capacity(src.len());
            for ch in 0..c {
                let plane = &src[ch * h * w..(ch + 1) * h * w];
                out.extend(plane.iter().rev());
            }
            Tensor::from_parts(vec![c, h, w], out)
        }
        r => {
            let mut out = vec![0.0f32; src.len()];
            for ch in 0..c {
                for y in 0..w {
                    for x in 0..h {
                        // ccw: out[y][x] = in[x][w-1-y]; cw: out[y][x] = in[h-1-x][y]
                        let (sy, sx) = if r == 1 { (x, w - 1 - y) } else { (h - 1 - x, y) };
                        out[(ch * w + y) * h + x] = src[(ch * h + sy) * w + sx];
                    }
                }
            }
            Tensor::from_parts(vec![c, w, h], out)
        }
    }
}

fn fill_index(i: i64, n: usize, mode: FillMode) -> Option<usize> {
    let n = n as i64;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match mode {
        FillMode::Constant => None,
        FillMode::Nearest => Some(i.clamp(0, n - 1) as usize),
        FillMode::Reflect => {
            let m = i.rem_euclid(2 * n);
            Some(if m >= n { 2 * n - 1 - m } else { m } as usize)
        }
    }
}

/// Translation and shear about the image centre with nearest-neighbour
/// sampling; rotation is applied first via [`rotate90`]. The shear slides
/// each row horizontally by `tan(shear)` times its offset from the centre
/// row, so a positive angle tilts verticals counterclockwise.
pub fn affine_transform(image: &Tensor<f32>, params: &AffineParams, fill: FillMode, fill_value: f32) -> Tensor<f32> {
    let img = rotate90(image, params.quarter_turns);
    if params.tx == 0.0 && params.ty == 0.0 && params.shear == 0.0 {
        return img;
    }
    let s = img.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let tan = params.shear.tan();
    let src = img.data();
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            // output -> input: undo translation, then the row shear
            let u = y as f64 - cy - params.ty;
            let v = x as f64 - cx - params.tx;
            let sy = (u + cy).round() as i64;
            let sx = (v - tan * u + cx).round() as i64;
            let idx = fill_index(sy, h, fill).zip(fill_index(sx, w, fill));
            for ch in 0..c {
                out[(ch * h + y) * w + x] = match idx {
                    Some((iy, ix)) => src[(ch * h + iy) * w + ix],
                    None => fill_value,
                };
            }
        }
    }
    Tensor::from_parts(vec![c, h, w], out)
}

/// Random rotation, translation and shear of a training image.
pub fn augment<R: Rng + ?Sized>(image: &LabeledImage, spec: &AugmentSpec, rng: &mut R) -> Result<LabeledImage> {
    if image.split == Some(Split::Test) {
        return Err(Error::Contract(format!(
            "{}: test images are never augmented",
            image.source_id
        )));
    }
    let params = AffineParams::sample(spec, image.height(), image.width(), rng);
    let pixels = affine_transform(&image.pixels, &params, spec.fill_mode, spec.fill_value);
    Ok(LabeledImage {
        pixels,
        augmented: image.augmented || params != AffineParams::default(),
        ..image.clone()
    })
}
