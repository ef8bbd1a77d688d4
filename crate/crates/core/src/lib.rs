//! Feature-fusion vision transformer for fine-grained classification.
//!
//! The encoder runs `L-1` transformer layers over patch tokens, picks the K
//! most informative patch tokens of every layer from its attention scores
//! (mutual attention weight selection, or the single-row baseline), and feeds
//! the class token plus all picked tokens to the final layer.
//!
//! Everything runs on the small reverse-mode engine in [`autodiff`], with a
//! finite-difference oracle in [`gradcheck`].
//!
//! | module | contents |
//! |---|---|
//! | [`tensor`] | dense tensors, kernels, FTZ files |
//! | [`autodiff`] | tape and backward rules |
//! | [`gradcheck`] | central-difference gradient oracle |
//! | [`vit`] | patch embedding, encoder layers, attention capture |
//! | [`select`] | SAWS / MAWS token selection |
//! | [`model`] | fusion, full forward pass, checkpoints |
//! | [`data`] | synthetic datasets and augmentation |
//! | [`train`] | SGD with momentum, cosine schedule, evaluation |
//! | [`verify`] | the gradient-check suite |
//! | [`cli`] | the `ffvt` command-line tool |

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod select;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod vit;

pub use error::{Error, Result};
pub use tensor::Tensor;
