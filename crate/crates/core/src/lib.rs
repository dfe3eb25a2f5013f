//! Numerical laboratory for smooth Gaussian random fields given as finite
//! Karhunen–Loève expansions `X = Σ_n σ_n ξ_n f_n`.
//!
//! - [`basis`]: closed-form basis functions with exact derivatives
//! - [`kernel`]: covariance kernels, mixed derivatives, product seminorms
//! - [`field`]: sampling, sample-path seminorms, Cameron–Martin structure
//! - [`jet`]: jet covariances and the maximal-rank certificate
//! - [`mc`]: seeded Monte Carlo estimates of event probabilities
//! - [`counterexample`]: bump-sum fields with vanishing kernels that do not
//!   vanish in law

pub mod basis;
pub mod counterexample;
pub mod error;
mod features;
pub mod field;
pub mod grid;
pub mod jet;
pub mod kernel;
pub mod linalg;
pub mod mc;
pub mod report;
pub mod rng;
pub mod special;

pub use basis::{fd_check, BasisFunction, MultiIndex};
pub use error::{Error, Result};
pub use features::SignedExpansion;
pub use field::{cm_inner, projection_residual, sample, support_basis, KLField, SamplePath};
pub use grid::GridBox;
pub use kernel::{
    check_psd, check_symmetry, kernel_distance, kernel_seminorm, ClosedForm, CovarianceKernel,
    Kernel, KernelSeminormSpec,
};
pub use mc::{EventSpec, MCEstimate};
pub use rng::RandomStream;
pub use special::{normal_cdf, normal_quantile};
