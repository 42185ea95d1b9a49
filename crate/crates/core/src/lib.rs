//! Classical simulation of a quantum principal-component compression
//! pipeline: spectral decomposition, a binary-tree state-preparation store,
//! a register-aware state-vector engine, the end-to-end projection circuit
//! with a resource ledger, and two downstream learners.
//!
//! ```
//! use qpca::fixtures::rank_k;
//! use qpca::pipeline::{run_pipeline, PipelineConfig, Target};
//!
//! let x = rank_k(16, 8, 2, 7).unwrap();
//! let run = run_pipeline(&x, Some(0), &Target::Full, &PipelineConfig::default()).unwrap();
//! assert_eq!(run.report.d, 2);
//! assert!(run.report.infidelity < 1e-10);
//! ```

// `!(x > 0.0)` is the validity idiom here: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fixtures;
mod linalg;
pub mod pca;
pub mod pipeline;
pub mod qram;
pub mod state;

pub use error::{Error, Result};
pub use pca::{svd_decompose, DataMatrix, SpectralModel};
pub use pipeline::{run_pipeline, Mode, PipelineConfig, Target};
pub use state::StateVector;

/// Compiles and runs every snippet of the guide in `book/src`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spectral-model.md")]
    mod spectral_model {}
    #[doc = include_str!("../../../book/src/data-loading.md")]
    mod data_loading {}
    #[doc = include_str!("../../../book/src/statevector.md")]
    mod statevector {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/applications.md")]
    mod applications {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/testing.md")]
    mod testing {}
}
