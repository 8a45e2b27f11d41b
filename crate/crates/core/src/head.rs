//! Classifier heads over the two final CLS tokens, and the cross-entropy loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, Init, LayerNorm, Linear};
use crate::ops::softmax_rows;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Residual,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub kind: HeadKind,
    /// Width of the hidden layers; defaults to `C_small + C_large`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    pub num_classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            kind: HeadKind::Residual,
            hidden_dim: None,
            num_classes: 3,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::Config("head hidden_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ResidualBlock {
    fc1: Linear,
    norm: LayerNorm,
    fc2: Linear,
}

#[derive(Clone, Debug)]
enum Body {
    Residual {
        input: Option<Linear>,
        blocks: Vec<ResidualBlock>,
    },
    Mlp {
        fc: Linear,
    },
}

/// Maps `[B,1,C_s]` and `[B,1,C_l]` CLS tokens to `[B, num_classes]` logits.
/// Softmax is left to the loss.
#[derive(Clone, Debug)]
pub struct Head {
    cfg: HeadConfig,
    in_dim: usize,
    body: Body,
    classifier: Linear,
}

impl Head {
    pub const RESIDUAL_BLOCKS: usize = 2;

    /// The final classifier layer starts at zero, so an untrained model
    /// outputs uniform class probabilities.
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        cfg: &HeadConfig,
        small_dim: usize,
        large_dim: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let in_dim = small_dim + large_dim;
        let hidden = cfg.hidden_dim.unwrap_or(in_dim);
        let body = match cfg.kind {
            HeadKind::Residual => Body::Residual {
                input: (hidden != in_dim).then(|| Linear::xavier(&mut init.sub("input"), in_dim, hidden)),
                blocks: (0..Self::RESIDUAL_BLOCKS)
                    .map(|i| {
                        let mut b = init.sub(&format!("block{i}"));
                        ResidualBlock {
                            fc1: Linear::xavier(&mut b.sub("fc1"), hidden, hidden),
                            norm: LayerNorm::new(&mut b.sub("norm"), hidden),
                            fc2: Linear::xavier(&mut b.sub("fc2"), hidden, hidden),
                        }
                    })
                    .collect(),
            },
            HeadKind::Mlp => Body::Mlp {
                fc: Linear::xavier(&mut init.sub("fc"), in_dim, hidden),
            },
        };
        let classifier = Linear::zeros(&mut init.sub("classifier"), hidden, cfg.num_classes);
        Ok(Self {
            cfg: cfg.clone(),
            in_dim,
            body,
            classifier,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.cfg
    }

    pub fn classifier(&self) -> &Linear {
        &self.classifier
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, cls_small: Var, cls_large: Var) -> Result<Var> {
        let b = tape.shape(cls_small)[0];
        let s = tape.reshape(cls_small, &[b, tape.shape(cls_small)[2]])?;
        let l = tape.reshape(cls_large, &[b, tape.shape(cls_large)[2]])?;
        let mut x = tape.concat(&[s, l], 1)?;
        if tape.shape(x)[1] != self.in_dim {
            return Err(Error::dim(
                "head",
                format!("concatenated CLS width {} != {}", tape.shape(x)[1], self.in_dim),
            ));
        }
        match &self.body {
            Body::Residual { input, blocks } => {
                if let Some(lin) = input {
                    x = lin.forward(tape, p, x)?;
                }
                for blk in blocks {
                    let h = blk.fc1.forward(tape, p, x)?;
                    let h = blk.norm.forward(tape, p, h)?;
                    let h = tape.gelu(h);
                    let h = blk.fc2.forward(tape, p, h)?;
                    x = tape.add(x, h)?;
                }
            }
            Body::Mlp { fc } => {
                x = fc.forward(tape, p, x)?;
                x = tape.gelu(x);
            }
        }
        self.classifier.forward(tape, p, x)
    }
}

/// Mean cross-entropy together with the predicted and target distributions.
pub struct LossOutput<T> {
    pub loss: Var,
    /// Softmax of the logits, `[B, k]`.
    pub predicted: Tensor<T>,
    /// One-hot targets, `[B, k]`.
    pub target: Tensor<T>,
}

pub fn one_hot<T: Scalar>(labels: &[usize], k: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros([labels.len(), k]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Contract(format!("label {y} out of range for {k} classes")));
        }
        t.data_mut()[i * k + y] = T::one();
    }
    Ok(t)
}

/// `mean_b(−Σ_i q_d,i · log q_s,i)` with `q_s = softmax(logits)`, computed
/// through a log-sum-exp so large logits stay finite.
pub fn cross_entropy<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<LossOutput<T>> {
    let s = tape.shape(logits).to_vec();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::Contract(format!(
            "cross_entropy needs [B, k] logits for {} labels, got {s:?}",
            labels.len()
        )));
    }
    let target = one_hot::<T>(labels, s[1])?;
    let logp = tape.log_softmax(logits);
    let t = tape.constant(target.clone());
    let picked = tape.mul(logp, t)?;
    let total = tape.sum(picked);
    let loss = tape.scale(total, -T::one() / T::lit(s[0] as f64));
    Ok(LossOutput {
        loss,
        predicted: softmax_rows(tape.value(logits)),
        target,
    })
}
