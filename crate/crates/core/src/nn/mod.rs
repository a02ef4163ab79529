//! Minimal float64 layers with hand-written backward passes.

mod adam;
mod attention;
mod layers;
mod params;

pub use adam::Adam;
pub use attention::{AttentionCache, MultiHeadAttention};
pub use layers::{add_into, dot, mean_rows, relu, relu_backward, sigmoid, Conv2d, Linear};
pub use params::{round_to_f32, Grads, Init, ParamId, ParamStore, Tensor};
