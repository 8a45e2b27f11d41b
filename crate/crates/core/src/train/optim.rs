use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// AdamW hyperparameters; the learning rate comes from the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

impl AdamW {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("adam eps must be > 0 and weight_decay >= 0".into()));
        }
        Ok(())
    }
}

/// First and second moments per parameter, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().iter().map(Tensor::zeros_like).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One decoupled-weight-decay Adam update:
///
/// ```text
/// p ← p · (1 − lr·wd)
/// m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²
/// p ← p − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
/// ```
///
/// Nothing is modified when any gradient is non-finite.
pub fn adamw_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    hp: &AdamW,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    for ((id, name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() || state.m[id.index()].shape() != p.shape() {
            return Err(Error::Contract(format!("shape mismatch for parameter `{name}`")));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient { path: name.to_string() });
        }
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let decay = 1.0 - lr * hp.weight_decay;
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v, g) = (state.m[i].data_mut(), state.v[i].data_mut(), grads[i].data());
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j].as_f64();
            let mj = hp.beta1 * m[j].as_f64() + (1.0 - hp.beta1) * gj;
            let vj = hp.beta2 * v[j].as_f64() + (1.0 - hp.beta2) * gj * gj;
            m[j] = T::lit(mj);
            v[j] = T::lit(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + hp.eps);
            *w = T::lit(w.as_f64() * decay - update);
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn zero_grad_without_decay_is_fixed_point() {
        let mut p = single(0.7);
        let mut st = AdamState::new(&p);
        let hp = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        adamw_step(&mut p, &[Tensor::scalar(0.0)], &mut st, 1e-3, &hp).unwrap();
        assert_eq!(p.tensors()[0].data()[0], 0.7);
    }

    #[test]
    fn zero_grad_decays_weights() {
        let mut p = single(2.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &[Tensor::scalar(0.0)], &mut st, 0.1, &AdamW::default()).unwrap();
        assert_eq!(p.tensors()[0].data()[0], 2.0 * (1.0 - 0.1 * 0.05));
    }

    #[test]
    fn non_finite_grad_names_the_parameter() {
        let mut p = single(1.0);
        let mut st = AdamState::new(&p);
        let r = adamw_step(&mut p, &[Tensor::scalar(f64::NAN)], &mut st, 0.1, &AdamW::default());
        assert!(matches!(r, Err(Error::NonFiniteGradient { ref path }) if path == "w"));
        assert_eq!(st.step, 0);
        assert_eq!(p.tensors()[0].data()[0], 1.0);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![Tensor::<f64>::from_f64([2], &[3.0, 4.0]).unwrap()];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    }
}
