use serde::{Deserialize, Serialize};

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel standardization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    /// Lower bound on the stored standard deviation.
    pub const MIN_STD: f32 = 1e-6;

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Population mean and std over every pixel of `images`.
    pub fn fit<'a>(images: impl IntoIterator<Item = &'a LabeledImage>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for im in images {
            let c = im.channels();
            if sum.is_empty() {
                sum = vec![0.0; c];
                sq = vec![0.0; c];
            } else if sum.len() != c {
                return Err(Error::Data(format!(
                    "{}: channel count {c} != {}",
                    im.source_id,
                    sum.len()
                )));
            }
            let plane = im.height() * im.width();
            for (ch, chunk) in im.pixels.data().chunks(plane).enumerate() {
                for &v in chunk {
                    sum[ch] += v as f64;
                    sq[ch] += (v as f64) * (v as f64);
                }
            }
            count += plane;
        }
        if count == 0 {
            return Err(Error::Data("cannot fit normalization on an empty split".into()));
        }
        let n = count as f64;
        let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
        let std = sum
            .iter()
            .zip(&sq)
            .map(|(s, q)| {
                let m = s / n;
                ((q / n - m * m).max(0.0).sqrt() as f32).max(Self::MIN_STD)
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// Standardizes a `[C, H, W]` or `[B, C, H, W]` tensor.
    pub fn apply(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let s = x.shape();
        let c_axis = match s.len() {
            3 => 0,
            4 => 1,
            _ => return Err(Error::dim("normalize", format!("expected 3D or 4D input, got {s:?}"))),
        };
        if s[c_axis] != self.mean.len() {
            return Err(Error::dim(
                "normalize",
                format!("{} channels, stats have {}", s[c_axis], self.mean.len()),
            ));
        }
        let plane: usize = s[c_axis + 1..].iter().product();
        let c = self.mean.len();
        let mut out = x.clone();
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let ch = i % c;
            let (m, sd) = (self.mean[ch], self.std[ch]);
            chunk.iter_mut().for_each(|v| *v = (*v - m) / sd);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    #[test]
    fn standardizes_each_channel() {
        let px = Tensor::new([2, 1, 2], vec![1.0, 3.0, 5.0, 5.0]).unwrap();
        let im = LabeledImage::new(px.clone(), Label::Viable, "a");
        let st = NormStats::fit([&im]).unwrap();
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.std, vec![1.0, NormStats::MIN_STD]);
        let y = st.apply(&px).unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(NormStats::fit(std::iter::empty()).is_err());
    }
}
