//! Kernel methods with conformal transformations.
//!
//! This crate is the allocation-only core of `confkern`: sparse vector
//! arithmetic, the Linear / Gaussian / Gaussian-Cosine / Diffusion kernels,
//! conformal factors `D(x)` fitted on support vectors, the Riemannian metric
//! a kernel induces on its input space, an SMO solver for the soft-margin
//! SVM dual, text embedding, synthetic data generation and the evaluation
//! harness (stratified folds, F1, paired t-test, the two-pass procedure).
//!
//! Everything here is `no_std` + `alloc`. File IO, corpus loading and the
//! command line live in the `confkern` crate.
//!
//! ```
//! use confkern_core::{KernelSpec, SparseVector, Kernel};
//!
//! let a = SparseVector::from_dense(&[1.0, 0.0]);
//! let b = SparseVector::from_dense(&[0.0, 1.0]);
//! let k = KernelSpec::gaussian_cosine(1.0).unwrap();
//! assert!((k.eval(&a, &b).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
//! ```
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod conformal;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod sparse;
pub mod stats;
pub mod svm;
pub mod text;

pub use conformal::{
    ConformalKernel, ConformalSpec, ExponentScale, FittedConformal, NeighbourScale,
};
pub use error::{Error, Result};
pub use kernels::{check_psd, gram, GramMatrix, Kernel, KernelFn, KernelSpec, PsdReport};
pub use sparse::SparseVector;
pub use svm::{predict_labels, train, SvmParams, TrainSet, TrainedModel};
