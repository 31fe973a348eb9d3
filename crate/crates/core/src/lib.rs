//! Influence-guided diffusion for multivariate time series.
//!
//! A conditional denoising diffusion model generates labeled series; during
//! sampling the reverse-step mean is pushed along the input gradient of a
//! sample's influence on a downstream classifier, measured against a cached
//! guidance-set gradient. The crate contains everything needed end to end:
//!
//! - [`gradcore`]: reverse-mode autodiff with differentiable gradients
//! - [`nets`]: the MLP classifier and denoiser, checkpoints, Adam
//! - [`diffusion`]: noise schedule, denoiser training, guided sampling
//! - [`influence`]: gradient cache, influence and its input gradient, retraining oracle
//! - [`datasets`]: synthetic imbalanced generator, splits, file formats
//! - [`eval`]: metrics and the TSTR / TSRTR / sweep protocols
//! - [`cli`]: the `tardiff` command-line pipeline
//!
//! The guide in `book/` covers each piece with runnable examples.

pub mod cli;
pub mod datasets;
pub mod diffusion;
pub mod digest;
pub mod error;
pub mod eval;
pub mod gradcore;
pub mod influence;
pub mod nets;
pub mod seeding;

pub use error::{Error, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/influence.md")]
    mod influence {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
