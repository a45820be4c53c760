//! Minimal deterministic tensor kernel: reverse-mode differentiation,
//! attention building blocks, sinusoidal encodings, and the reproducible
//! PRNG every stochastic choice in the crate is derived from.

pub mod attention;
pub mod encoding;
pub mod gradcheck;
pub mod graph;
pub mod prng;
pub mod tensor;

pub use attention::{attention_block, attn_sublayer, ffn_sublayer, AttnParams, FfnParams};
pub use gradcheck::{check_all_ops, grad_check, CheckBlock};
pub use graph::{Graph, NodeId};
pub use prng::{fnv1a64, mix64, Prng};
pub use tensor::Tensor;
