//! Smooth minimum distance estimation of partially linear models with a
//! Box-Cox transformed response.
//!
//! The pipeline is [`Dataset`] → [`Problem`] (kernel plan, weight operator and
//! partialled covariates) → [`fit_problem`] over a λ grid → [`estimate_vcov`]
//! and the distance-metric tests in [`inference`].

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod competitors;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod scalar;
pub mod simulation;
pub mod transform;
pub mod weights;

pub use competitors::{nl2sls_fit, Nl2slsConfig, Nl2slsResult};
pub use error::{Error, Result};
pub use estimator::{fit, fit_problem, EstimatorConfig, FitResult, LambdaGrid, Problem, ProfilePath, Restriction, ScaleChoice};
pub use inference::{
    dm_beta_test, dm_joint_test, dm_lambda_curve, dm_lambda_test, estimate_vcov, Hypothesis, SigmaMode, TestOptions,
    TestResult, VarianceEstimate, VarianceMode, WeightedChiSquare,
};
pub use kernel::{Bandwidth, Dataset, GaussianKernel, KernelOptions, KernelPlan, UnivariateKernel};
pub use scalar::Scalar;
pub use simulation::{generate, run_monte_carlo, run_power_curve, DgpSpec, McConfig, McReport, ModelId, PowerAxis};
pub use transform::{box_cox, box_cox_d1, box_cox_d2, box_cox_d3, inverse_box_cox, LambdaInterval};
pub use weights::{AutoScale, Scales, WeightConfig, WeightOperator};

pub type Dataset64 = Dataset<f64>;
pub type Fit64 = FitResult<f64>;
pub type Fit32 = FitResult<f32>;
