//! The robust kernel association test: `T = wᵀℙ𝕂ℙw` with `w_i = ψ(ê_i/ŝ)`
//! and a p-value from the permutation null.

mod moments;
mod pvalue;

pub use moments::{permutation_moments, PermutationMoments};
pub use pvalue::{
    exact_permutation_pvalue, monte_carlo_pvalue, monte_carlo_pvalue_stream, pearson3_pvalue,
    MAX_EXACT_N, MIN_MC_REPS, SKEW_NORMAL_CUTOFF, TIE_SLACK,
};

use crate::error::{Result, RobkatError};
use crate::kernel::{build_kernel, center_kernel, GenotypeMatrix, KernelKind, KernelMatrix};
use crate::loss::LossSpec;
use crate::robust_fit::{fit_null, score_vector, FitOptions, NullFit};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Relative size of a centered kernel below which it is treated as zero.
const ZERO_KERNEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PValueMethod {
    PearsonIII,
    ExactPermutation,
    MonteCarlo,
}

impl PValueMethod {
    pub fn name(self) -> &'static str {
        match self {
            PValueMethod::PearsonIII => "pearson3",
            PValueMethod::ExactPermutation => "exact",
            PValueMethod::MonteCarlo => "mc",
        }
    }
}

impl fmt::Display for PValueMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for PValueMethod {
    type Err = RobkatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pearson3" | "pearsoniii" => Ok(PValueMethod::PearsonIII),
            "exact" => Ok(PValueMethod::ExactPermutation),
            "mc" | "montecarlo" => Ok(PValueMethod::MonteCarlo),
            other => Err(RobkatError::Input(format!("unknown p-value method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    pub method: PValueMethod,
    /// Permutations for [`PValueMethod::MonteCarlo`].
    pub mc_reps: usize,
    pub seed: u64,
    /// ChaCha stream for Monte Carlo; batch runs give each test its own.
    pub stream: u64,
    pub fit: FitOptions,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            method: PValueMethod::PearsonIII,
            mc_reps: 10_000,
            seed: 0,
            stream: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub pvalue: f64,
    /// Exact permutation moments; always computed.
    pub moments: PermutationMoments,
    pub method: PValueMethod,
    pub loss: LossSpec,
    pub kernel_kind: KernelKind,
    pub n: usize,
    pub fit_converged: bool,
    /// Set when the permutation variance is zero and `p = 1` by convention.
    pub degenerate: bool,
}

/// Where the kernel comes from.
#[derive(Debug, Clone, Copy)]
pub enum KernelSource<'a> {
    Genotypes {
        z: &'a GenotypeMatrix,
        kind: KernelKind,
        weights: Option<&'a [f64]>,
    },
    Matrix(&'a KernelMatrix),
}

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// `T = wᵀ Kc w` for a centered kernel.
pub fn test_statistic(w: &[f64], kc: &KernelMatrix) -> Result<f64> {
    if !kc.is_centered() {
        return Err(RobkatError::Input("test statistic needs a centered kernel".into()));
    }
    let m = kc.matrix();
    if m.nrows() != w.len() {
        return Err(RobkatError::Input(format!(
            "kernel is {}x{} but the score vector has length {}",
            m.nrows(),
            m.ncols(),
            w.len()
        )));
    }
    let w = DVector::from_column_slice(w);
    Ok(w.dot(&(m * &w)))
}

/// Test a precomputed null fit against one kernel. The kernel is centered
/// here if it is not already.
pub fn test_with_fit(fit: &NullFit, kernel: &KernelMatrix, opts: &TestOptions) -> Result<TestResult> {
    let n = fit.n();
    if kernel.n() != n {
        return Err(RobkatError::Input(format!(
            "kernel has {} samples but the fit has {n}",
            kernel.n()
        )));
    }
    let kc = if kernel.is_centered() {
        kernel.clone()
    } else {
        center_kernel(kernel)
    };
    let w = score_vector(fit);
    let w = w.as_slice();
    let statistic = test_statistic(w, &kc)?;

    let zero_kernel = kc.matrix().amax() <= ZERO_KERNEL_TOL * kernel.matrix().amax();
    let moments = if zero_kernel {
        PermutationMoments::degenerate(0.0)
    } else {
        permutation_moments(kc.matrix(), w)?
    };
    let degenerate = moments.is_degenerate();
    let pvalue = if degenerate {
        1.0
    } else {
        match opts.method {
            PValueMethod::PearsonIII => pearson3_pvalue(statistic, &moments),
            PValueMethod::ExactPermutation => exact_permutation_pvalue(kc.matrix(), w)?,
            PValueMethod::MonteCarlo => {
                monte_carlo_pvalue_stream(kc.matrix(), w, opts.mc_reps, opts.seed, opts.stream)?
            }
        }
    };
    Ok(TestResult {
        statistic,
        pvalue,
        moments,
        method: opts.method,
        loss: fit.loss,
        kernel_kind: kernel.kind(),
        n,
        fit_converged: fit.converged,
        degenerate,
    })
}

/// Full pipeline: null fit, score vector, kernel, centering, statistic,
/// permutation moments and p-value.
///
/// `x` is used as given; add an intercept with [`with_intercept`].
pub fn robkat_test(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    kernel: KernelSource<'_>,
    loss: LossSpec,
    opts: &TestOptions,
) -> Result<TestResult> {
    let fit = fit_null(y, x, loss, &opts.fit)?;
    match kernel {
        KernelSource::Genotypes { z, kind, weights } => {
            if z.n_samples() != y.len() {
                return Err(RobkatError::Input(format!(
                    "genotypes have {} samples but the response has {}",
                    z.n_samples(),
                    y.len()
                )));
            }
            test_with_fit(&fit, &build_kernel(z, kind, weights)?, opts)
        }
        KernelSource::Matrix(k) => test_with_fit(&fit, k, opts),
    }
}
