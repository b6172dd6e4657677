//! Gene-set batch testing: one shared null fit, every (set × kernel) test,
//! and a tab-separated report.

use crate::assoc_test::{test_with_fit, with_intercept, TestOptions};
use crate::error::{Result, RobkatError};
use crate::io::StudyData;
use crate::kernel::{build_kernel, KernelKind, KernelMatrix};
use crate::loss::LossSpec;
use crate::robust_fit::{fit_null, NullFit};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Set name reported for a custom kernel, which ignores the SNP sets.
pub const CUSTOM_SET_NAME: &str = "custom";

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub loss: LossSpec,
    /// Genotype kernels applied to every SNP set.
    pub kernels: Vec<KernelKind>,
    /// A whole-study kernel tested once, in study sample order.
    pub custom_kernel: Option<KernelMatrix>,
    pub test: TestOptions,
    /// Prepend an intercept column to the covariates.
    pub intercept: bool,
}

/// What went wrong in a failed row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub set: String,
    pub kernel: KernelKind,
    pub loss: LossSpec,
    pub n: usize,
    pub n_snps: Option<usize>,
    pub statistic: Option<f64>,
    pub pvalue: Option<f64>,
    pub method: crate::assoc_test::PValueMethod,
    pub converged: bool,
    pub degenerate: bool,
    pub error: Option<(FailureKind, String)>,
}

/// The design matrix for a study: covariates, with an intercept if asked.
pub fn design_matrix(study: &StudyData, intercept: bool) -> nalgebra::DMatrix<f64> {
    if intercept {
        with_intercept(&study.covariates)
    } else {
        study.covariates.clone()
    }
}

fn failure(e: &RobkatError) -> (FailureKind, String) {
    let kind = if e.is_numerical() {
        FailureKind::Numerical
    } else {
        FailureKind::Input
    };
    (kind, e.to_string())
}

fn test_set(
    study: &StudyData,
    fit: &NullFit,
    columns: &[usize],
    kind: KernelKind,
    opts: &TestOptions,
) -> Result<crate::TestResult> {
    if columns.is_empty() {
        return Err(RobkatError::Input("set has no SNPs in the genotype file".into()));
    }
    let z = study.genotypes.select_snps(columns);
    test_with_fit(fit, &build_kernel(&z, kind, None)?, opts)
}

/// Test every SNP set against every kernel, reusing one null fit.
///
/// Rows come out set-major in input order, followed by the custom kernel
/// row if any. Per-row failures are recorded in the row rather than
/// aborting. Monte Carlo tests draw from stream `row index`, so results do
/// not depend on scheduling.
pub fn run_batch(study: &StudyData, opts: &BatchOptions) -> Vec<BatchRow> {
    let x = design_matrix(study, opts.intercept);
    let fit = fit_null(&study.phenotype, &x, opts.loss, &opts.test.fit);
    if let Ok(f) = &fit {
        if !f.converged {
            log::warn!("null fit did not converge in {} iterations", f.iterations);
        }
    }

    let mut jobs: Vec<(String, KernelKind, Option<Vec<usize>>)> = Vec::new();
    for set in &study.snp_sets {
        let cols = study.set_columns(set);
        for &k in &opts.kernels {
            jobs.push((set.name.clone(), k, Some(cols.clone())));
        }
    }
    if opts.custom_kernel.is_some() {
        jobs.push((CUSTOM_SET_NAME.to_string(), KernelKind::Custom, None));
    }

    jobs.into_par_iter()
        .enumerate()
        .map(|(idx, (set, kernel, cols))| {
            let test_opts = TestOptions {
                stream: opts.test.stream.wrapping_add(idx as u64),
                ..opts.test
            };
            let result = match &fit {
                Err(e) => Err(RobkatError::Numerical(format!("null fit failed: {e}"))),
                Ok(fit) => match (&cols, &opts.custom_kernel) {
                    (Some(c), _) => test_set(study, fit, c, kernel, &test_opts),
                    (None, Some(k)) => test_with_fit(fit, k, &test_opts),
                    (None, None) => unreachable!("custom row without a custom kernel"),
                },
            };
            let base = BatchRow {
                set,
                kernel,
                loss: opts.loss,
                n: study.n(),
                n_snps: cols.as_ref().map(Vec::len),
                statistic: None,
                pvalue: None,
                method: opts.test.method,
                converged: fit.as_ref().is_ok_and(|f| f.converged),
                degenerate: false,
                error: None,
            };
            match result {
                Ok(r) => BatchRow {
                    statistic: Some(r.statistic),
                    pvalue: Some(r.pvalue),
                    degenerate: r.degenerate,
                    ..base
                },
                Err(e) => BatchRow {
                    error: Some(failure(&e)),
                    ..base
                },
            }
        })
        .collect()
}

/// `x` to `digits` significant digits; scientific outside `[1e-4, 1e6)`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return "NA".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (digits as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format_sci(x, digits - 1)
    }
}

/// `m.mmmme-XX` with a signed exponent of at least two digits.
pub fn format_sci(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// p-values: `2.2314e-06` style below `1e-4`, else 6 significant digits.
pub fn format_pvalue(p: f64) -> String {
    if p > 0.0 && p < 1e-4 {
        format_sci(p, 4)
    } else {
        format_sig(p, 6)
    }
}

/// Render the report. With `alpha`, adds the Bonferroni threshold
/// `alpha / rows` and a significance flag.
pub fn render_report(rows: &[BatchRow], alpha: Option<f64>) -> Result<String> {
    if rows.is_empty() {
        return Err(RobkatError::Input("no results to report".into()));
    }
    let threshold = alpha.map(|a| a / rows.len() as f64);
    let mut out = String::new();
    out.push_str("set\tkernel\tloss\tn\tn_snps\tstatistic\tpvalue\tmethod\tconverged\tdegenerate");
    if threshold.is_some() {
        out.push_str("\tthreshold\tsignificant");
    }
    out.push_str("\terror\n");
    let na = || "NA".to_string();
    for r in rows {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.set,
            r.kernel,
            r.loss,
            r.n,
            r.n_snps.map_or_else(na, |v| v.to_string()),
            r.statistic.map_or_else(na, |v| format_sig(v, 6)),
            r.pvalue.map_or_else(na, format_pvalue),
            r.method,
            r.converged,
            r.degenerate,
        );
        if let Some(t) = threshold {
            let sig = r.pvalue.map_or_else(na, |p| (p <= t).to_string());
            let _ = write!(out, "\t{}\t{}", format_sig(t, 6), sig);
        }
        let err = r.error.as_ref().map_or_else(String::new, |(_, m)| m.replace(['\t', '\n'], " "));
        let _ = writeln!(out, "\t{err}");
    }
    Ok(out)
}

/// Write the report to `path`.
pub fn emit_report(rows: &[BatchRow], alpha: Option<f64>, path: &Path) -> Result<()> {
    let text = render_report(rows, alpha)?;
    let io_err = |source| RobkatError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(text.as_bytes()).map_err(io_err)
}

/// Process exit code for a finished batch: 2 if any row failed numerically,
/// 1 if any failed on its input, else 0.
pub fn exit_code(rows: &[BatchRow]) -> i32 {
    let kinds: Vec<FailureKind> = rows.iter().filter_map(|r| r.error.as_ref().map(|e| e.0)).collect();
    if kinds.contains(&FailureKind::Numerical) {
        2
    } else if kinds.contains(&FailureKind::Input) {
        1
    } else {
        0
    }
}
