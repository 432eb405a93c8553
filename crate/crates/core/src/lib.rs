//! Support vector machines over combined kernels.
//!
//! The pieces, bottom up:
//!
//! - [`kernel`]: kernel functions, Gram matrices and PSD repair
//! - [`combine`]: label-aware combination of several Gram matrices
//! - [`qp`]: the box-constrained dual solver and a brute-force oracle
//! - [`svm`] and [`one_class`]: trained models
//! - [`data`]: loaders, scaling and seeded partitions

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combine;
pub mod data;
pub mod error;
pub mod kernel;
pub mod matrix;
pub mod one_class;
pub mod qp;
pub mod svm;

pub use combine::{CombinerConfig, GFunction, Labels, Normalization, Normalizer, TestEvalMode};
pub use data::{LabeledDataset, ScalingMode, ScalingTransform, Split, SplitPlan};
pub use error::{Error, Result};
pub use kernel::{GramMatrix, KernelSpec, Provenance, PsdMode};
pub use matrix::Matrix;
pub use one_class::{OneClassModel, OrderDual, OrderSolution};
pub use qp::{BoxQP, DualSolution, SolverConfig};
pub use svm::{Evaluation, KernelHandle, SvmModel};
