use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::data::{Label, LabeledDataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(e.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn to_tensor(img: DynamicImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (c, raw) = if img.color().has_color() {
        (3, img.into_rgb8().into_raw())
    } else {
        (1, img.into_luma8().into_raw())
    };
    // interleaved HWC -> planar CHW
    let mut data = vec![0.0f32; c * h * w];
    for (i, &v) in raw.iter().enumerate() {
        let (px, ch) = (i / c, i % c);
        data[ch * h * w + px] = v as f32 / 255.0;
    }
    Tensor::from_parts(vec![c, h, w], data)
}

/// Reads `<root>/<label>/<file>` images. Grayscale files load as one
/// channel, everything else as RGB; 8-bit values are divided by 255.
/// Entries are visited in sorted order and `source_id` is the path
/// relative to `root` with `/` separators.
pub fn load_image_dir(root: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    let root = root.as_ref();
    let mut images = Vec::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let label: Label = name
            .parse()
            .map_err(|_| Error::Data(format!("unknown label directory `{}`", dir.display())))?;
        for file in sorted_entries(&dir)? {
            if !file.is_file() {
                continue;
            }
            let img = image::open(&file).map_err(|e| Error::Data(format!("cannot read {}: {e}", file.display())))?;
            let rel = file.strip_prefix(root).unwrap_or(&file);
            let source_id = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            images.push(LabeledImage::new(to_tensor(img), label, source_id));
        }
    }
    Ok(images)
}

/// Writes a `[1|3, H, W]` tensor as an 8-bit PNG, rounding `v · 255`.
pub fn save_image_png(pixels: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = pixels.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(Error::dim("save_image_png", format!("expected [1|3, H, W], got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let d = pixels.data();
    let mut raw = vec![0u8; c * h * w];
    for ch in 0..c {
        for px in 0..h * w {
            raw[px * c + ch] = q(d[ch * h * w + px]);
        }
    }
    let dynimg = if c == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer sized above"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer sized above"))
    };
    dynimg
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

/// Writes every image under `root` at its `source_id`, which must be a
/// `<label>/<file>.png` relative path for [`load_image_dir`] to read it back.
pub fn write_image_dir(images: &[LabeledImage], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    for im in images {
        let path = root.join(&im.source_id);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        save_image_png(&im.pixels, &path)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub source_id: String,
    pub label: Label,
    pub split: Split,
}

/// One `source_id<TAB>label<TAB>split` line per image with an assigned split.
pub fn write_split_manifest(images: &[LabeledImage], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for im in images {
        let split = im
            .split
            .ok_or_else(|| Error::Contract(format!("{} has no split assigned", im.source_id)))?;
        if im.source_id.contains(['\t', '\n']) {
            return Err(Error::Data(format!(
                "source_id {:?} contains a tab or newline",
                im.source_id
            )));
        }
        text.push_str(&format!("{}\t{}\t{}\n", im.source_id, im.label, split));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_split_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Data(format!(
                    "{}:{}: expected 3 tab-separated fields",
                    path.display(),
                    n + 1
                )));
            }
            Ok(ManifestRecord {
                source_id: f[0].to_string(),
                label: f[1].parse()?,
                split: f[2].parse()?,
            })
        })
        .collect()
}

impl LabeledDataset {
    /// Assigns splits from manifest records matched by `source_id`. Every
    /// image must have a record with the same label.
    pub fn with_manifest(images: Vec<LabeledImage>, records: &[ManifestRecord]) -> Result<Self> {
        let index: std::collections::HashMap<&str, &ManifestRecord> =
            records.iter().map(|r| (r.source_id.as_str(), r)).collect();
        let mut images = images;
        for im in &mut images {
            let r = index
                .get(im.source_id.as_str())
                .ok_or_else(|| Error::Data(format!("{} is missing from the split manifest", im.source_id)))?;
            if r.label != im.label {
                return Err(Error::Data(format!(
                    "{}: manifest label {} disagrees with directory label {}",
                    im.source_id, r.label, im.label
                )));
            }
            im.split = Some(r.split);
        }
        Self::new(images)
    }
}
