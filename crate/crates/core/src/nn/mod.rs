//! Parameter storage and the two layers every other module is built from.

mod layers;
mod params;

pub use layers::{LayerNorm, Linear, LN_EPS};
pub use params::{Bound, Init, ParamId, ParamStore};
