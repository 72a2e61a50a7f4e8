//! Generalized residual vector quantization.
//!
//! Vectors are compressed to `M` small indices, one per codebook, and
//! reconstructed as the sum of the selected codewords. Codebooks are trained
//! by repeatedly re-optimizing one codebook against the residuals left by all
//! others, using transition clustering, and vectors are encoded by beam search
//! over codebooks sorted by variance. Residual VQ, product quantization and
//! plain k-means fall out as special cases.
//!
//! The crate also covers compressed-domain nearest-neighbor search with
//! asymmetric distance tables, recall measurement, entropy diagnostics of
//! encodings and the TexMex `fvecs`/`bvecs`/`ivecs` file formats.

pub mod analysis;
pub mod clustering;
pub mod encoder;
mod error;
pub mod io;
pub mod model;
pub mod search;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{epsilon_of_codes, CodeMatrix, Codebook, EpsMode, EpsQuantizer, QuantModel, VectorSet};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/additive-model.md")]
    mod additive_model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
