//! Minimal reverse-mode autodiff and neural-network layers, 64-bit throughout.

pub mod layers;
pub mod mat;
pub mod optim;
pub mod params;
pub mod tape;

pub use layers::{GatV2Layer, GruCell, LayerNorm, Linear, Mlp, SelfAttention};
pub use mat::Mat;
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use tape::{EdgeList, Gradients, Tape, Var};
