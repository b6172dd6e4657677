//! Robust kernel association testing for SNP sets.
//!
//! Tests `H0: h(Z) = 0` in `Y = Xᵀβ + h(Z) + ε` by fitting the null model
//! with a robust M-estimator, forming the score-type statistic
//! `T = wᵀℙ𝕂ℙw` with `w_i = ψ(ê_i/ŝ)`, and approximating its permutation
//! null by matching exact permutation moments to a Pearson type III law.
//!
//! Least squares recovers the SKAT statistic and LAD the median
//! quantile-regression kernel statistic; Huber, Hampel and bisquare losses
//! give robust alternatives.

pub mod assoc_test;
pub mod batch;
pub mod cli;
pub mod error;
pub mod io;
pub mod kernel;
pub mod loss;
pub mod quad;
pub mod robust_fit;
pub mod sim;

pub use assoc_test::{
    robkat_test, test_with_fit, with_intercept, KernelSource, PValueMethod, PermutationMoments,
    TestOptions, TestResult,
};
pub use error::{Result, RobkatError};
pub use kernel::{GenotypeMatrix, KernelKind, KernelMatrix};
pub use loss::{LossFamily, LossSpec};
pub use robust_fit::{fit_null, FitOptions, NullFit};
pub use sim::{run_simulation, ErrorDist, HForm, SimConfig, SimResult};
