//! Squeezed-state kernels for support vector classification of 2D data.
//!
//! Each input point is encoded as the displacement of a single-mode displaced
//! squeezed vacuum state. The kernel between two points is the overlap of the
//! two pure Gaussian states, which reduces to the RBF kernel when the squeezing
//! vanishes. On top of that kernel the crate provides
//!
//! * a soft-margin SVM trained by pairwise dual ascent ([`svm`]),
//! * ensemble statistics and Hilbert–Schmidt / Fisher kernel learning ([`metric_learning`]),
//! * quasi-conformal kernel refinement around support vectors ([`quasi_conformal`]),
//! * shot-noise simulation of the zero-photon estimators ([`shot_sim`]),
//! * seeded synthetic tasks ([`datasets`]) and an experiment harness ([`experiment`]).
//!
//! Data-parallel loops (Gram rows, grid cells, seeds, shot batches) go through
//! [`exec`], which uses rayon when the `parallel` feature is enabled and falls
//! back to plain iteration otherwise.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod gaussian_optics;
pub mod io;
pub mod metric_learning;
pub mod point;
pub mod quasi_conformal;
pub mod seed;
pub mod shot_sim;
pub mod simplex;
pub mod svm;

pub use error::{Error, Result};
pub use exec::Execution;
pub use gaussian_optics::{AnglePolicy, GaussianPureState, GramMatrix, MetricTensor2, SqueezedKernelParams};
pub use point::Point2;
pub use quasi_conformal::QFactorSpec;
pub use svm::{KernelSpec, Label, LabeledDataset, SvmModel};
