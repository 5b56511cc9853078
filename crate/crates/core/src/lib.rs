//! Highly adaptive ridge regression.
//!
//! Kernel ridge regression with a data-adaptive kernel: the inner product of a
//! saturated tensor-product spline basis with knots at the training rows. The
//! crate provides the kernels (any spline order, plus the mixed Sobolev and
//! Gaussian kernels for comparison), a dual solver with closed-form
//! leave-one-out selection, a brute-force basis oracle, data handling, and the
//! simulation and benchmark studies.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis_oracle;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod matrix;
pub mod model_io;
pub mod scalar;
pub mod section_table;
pub mod solver;

pub use error::{HarError, Result};
pub use kernels::{
    cross_kernel_matrix, gram_matrix, har0_kernel_sum, har_kernel, har_kernel_product, mixed_sobolev_kernel,
    rbf_kernel, CrossKernelMatrix, GramMatrix, KernelFamily, KernelSpec,
};
pub use matrix::DesignMatrix;
pub use scalar::Scalar;
pub use solver::{
    fit, fit_with_gram, lambda_grid, lambda_max, loocv_errors, loocv_score, predict, tune, FittedModel,
    TuningConfig, TuningResult,
};

pub type DesignMatrixF64 = DesignMatrix<f64>;
pub type DesignMatrixF32 = DesignMatrix<f32>;
pub type KernelSpecF64 = KernelSpec<f64>;
pub type KernelSpecF32 = KernelSpec<f32>;
pub type GramMatrixF64 = GramMatrix<f64>;
pub type GramMatrixF32 = GramMatrix<f32>;
pub type FittedModelF64 = FittedModel<f64>;
pub type FittedModelF32 = FittedModel<f32>;
pub type TuningResultF64 = TuningResult<f64>;
pub type DatasetF64 = data::Dataset<f64>;
