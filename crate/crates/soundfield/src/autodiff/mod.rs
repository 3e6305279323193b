//! Minimal reverse-mode automatic differentiation over dense f64 tensors:
//! a linear tape of primitive ops (including STFT/inverse-STFT linear
//! transforms), exact gradients, Adam with decoupled weight decay, and a
//! binary checkpoint container.

mod adam;
mod checkpoint;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use tape::{spectrogram_to_tensor, tensor_to_spectrogram, Tape, Var};
pub use tensor::Tensor;
