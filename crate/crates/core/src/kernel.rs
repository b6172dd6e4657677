//! Genetic similarity kernels and double centering.

use crate::error::{Result, RobkatError};
use nalgebra::{DMatrix, SymmetricEigen};
use std::fmt;
use std::str::FromStr;

/// Tolerance used when admitting user-supplied kernels.
pub const CUSTOM_PSD_TOL: f64 = 1e-8;

/// Allele counts for `n` samples at `p` SNPs. `NaN` marks a missing call.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    values: DMatrix<f64>,
    sample_ids: Vec<String>,
    snp_ids: Vec<String>,
}

impl GenotypeMatrix {
    pub fn new(values: DMatrix<f64>, sample_ids: Vec<String>, snp_ids: Vec<String>) -> Result<Self> {
        if values.nrows() != sample_ids.len() || values.ncols() != snp_ids.len() {
            return Err(RobkatError::Input(format!(
                "genotype matrix is {}x{} but has {} sample and {} SNP labels",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                snp_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_nan() && !(0.0..=2.0).contains(*v)) {
            return Err(RobkatError::Input(format!("genotype value {v} outside [0, 2]")));
        }
        Ok(GenotypeMatrix {
            values,
            sample_ids,
            snp_ids,
        })
    }

    /// Unlabelled matrix; samples and SNPs are numbered from zero.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let samples = (0..values.nrows()).map(|i| format!("s{i}")).collect();
        let snps = (0..values.ncols()).map(|j| format!("snp{j}")).collect();
        Self::new(values, samples, snps)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(RobkatError::Input("ragged genotype rows".into()));
        }
        Self::from_values(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_snps(&self) -> usize {
        self.values.ncols()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Keep the given SNP columns, in the given order.
    pub fn select_snps(&self, columns: &[usize]) -> GenotypeMatrix {
        GenotypeMatrix {
            values: self.values.select_columns(columns),
            sample_ids: self.sample_ids.clone(),
            snp_ids: columns.iter().map(|&j| self.snp_ids[j].clone()).collect(),
        }
    }

    /// Keep the given sample rows, in the given order.
    pub fn select_samples(&self, rows: &[usize]) -> GenotypeMatrix {
        GenotypeMatrix {
            values: self.values.select_rows(rows),
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            snp_ids: self.snp_ids.clone(),
        }
    }

    fn impute_with(&self, fill: impl Fn(&[f64]) -> f64) -> GenotypeMatrix {
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            if observed.len() == col.len() {
                continue;
            }
            let f = if observed.is_empty() { 0.0 } else { fill(&observed) };
            col.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = f);
        }
        GenotypeMatrix {
            values,
            sample_ids: self.sample_ids.clone(),
            snp_ids: self.snp_ids.clone(),
        }
    }

    /// Replace missing calls by the per-SNP mean of the observed calls.
    pub fn impute_mean(&self) -> GenotypeMatrix {
        self.impute_with(|obs| obs.iter().sum::<f64>() / obs.len() as f64)
    }

    /// Replace missing calls by the most frequent rounded allele count
    /// (ties resolve to the smaller count).
    pub fn impute_mode(&self) -> GenotypeMatrix {
        self.impute_with(|obs| {
            let mut counts = [0usize; 3];
            for v in obs {
                let r = v.round();
                if (0.0..=2.0).contains(&r) {
                    counts[r as usize] += 1;
                }
            }
            let best = (0..3).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
            best as f64
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Linear,
    Quadratic,
    Ibs,
    Custom,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Quadratic => "quadratic",
            KernelKind::Ibs => "ibs",
            KernelKind::Custom => "custom",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = RobkatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "quadratic" => Ok(KernelKind::Quadratic),
            "ibs" => Ok(KernelKind::Ibs),
            "custom" => Ok(KernelKind::Custom),
            other => Err(RobkatError::Input(format!("unknown kernel `{other}`"))),
        }
    }
}

/// A symmetric positive semi-definite similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    matrix: DMatrix<f64>,
    kind: KernelKind,
    centered: bool,
}

impl KernelMatrix {
    /// Admit a user-supplied kernel. It must be square, symmetric and pass
    /// [`validate_psd`] at [`CUSTOM_PSD_TOL`].
    pub fn custom(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(RobkatError::Input(format!(
                "kernel must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(RobkatError::Input("kernel has non-finite entries".into()));
        }
        let scale = matrix.amax();
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(RobkatError::Input(format!("kernel is not symmetric (max |K - Kᵀ| = {asym:.3e})")));
        }
        let kernel = KernelMatrix {
            matrix: symmetrize(matrix),
            kind: KernelKind::Custom,
            centered: false,
        };
        let diag = validate_psd(&kernel, CUSTOM_PSD_TOL)?;
        if !diag.is_psd {
            return Err(RobkatError::Input(format!(
                "kernel is not positive semi-definite (λ_min = {:.4e}, λ_max = {:.4e})",
                diag.min_eigenvalue, diag.max_eigenvalue
            )));
        }
        Ok(kernel)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Principal submatrix on the given samples.
    pub fn select(&self, samples: &[usize]) -> KernelMatrix {
        KernelMatrix {
            matrix: self.matrix.select_rows(samples).select_columns(samples),
            kind: self.kind,
            centered: false,
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn complete(z: &GenotypeMatrix) -> Result<&DMatrix<f64>> {
    if z.has_missing() {
        return Err(RobkatError::Input(
            "genotypes contain missing calls; impute before building a kernel".into(),
        ));
    }
    Ok(&z.values)
}

fn weighted(z: &DMatrix<f64>, weights: Option<&[f64]>) -> Result<DMatrix<f64>> {
    match weights {
        None => Ok(z.clone()),
        Some(w) if w.len() == z.ncols() => {
            let mut out = z.clone();
            for (mut col, &wj) in out.column_iter_mut().zip(w) {
                col *= wj;
            }
            Ok(out)
        }
        Some(w) => Err(RobkatError::Input(format!(
            "{} SNP weights for {} SNPs",
            w.len(),
            z.ncols()
        ))),
    }
}

/// `K_ij = Z_iᵀ Z_j`.
pub fn linear_kernel(z: &GenotypeMatrix) -> Result<KernelMatrix> {
    weighted_linear_kernel(z, None)
}

/// Linear kernel on `Z · diag(weights)`.
pub fn weighted_linear_kernel(z: &GenotypeMatrix, weights: Option<&[f64]>) -> Result<KernelMatrix> {
    let zw = weighted(complete(z)?, weights)?;
    Ok(KernelMatrix {
        matrix: symmetrize(&zw * zw.transpose()),
        kind: KernelKind::Linear,
        centered: false,
    })
}

/// `K_ij = (Z_iᵀ Z_j)²`.
pub fn quadratic_kernel(z: &GenotypeMatrix) -> Result<KernelMatrix> {
    weighted_quadratic_kernel(z, None)
}

pub fn weighted_quadratic_kernel(
    z: &GenotypeMatrix,
    weights: Option<&[f64]>,
) -> Result<KernelMatrix> {
    let lin = weighted_linear_kernel(z, weights)?;
    Ok(KernelMatrix {
        matrix: lin.matrix.map(|v| v * v),
        kind: KernelKind::Quadratic,
        centered: false,
    })
}

/// Identity-by-state similarity: the proportion of alleles shared,
/// `K_ij = (1/2p) Σ_k [2·I{Z_ik = Z_jk} + I{|Z_ik − Z_jk| = 1}]`.
///
/// Entries are rounded to the nearest integer first and must then lie in
/// `{0, 1, 2}`.
pub fn ibs_kernel(z: &GenotypeMatrix) -> Result<KernelMatrix> {
    let raw = complete(z)?;
    let (n, p) = raw.shape();
    if p == 0 {
        return Err(RobkatError::Input("IBS kernel needs at least one SNP".into()));
    }
    let counts = raw.map(f64::round);
    if let Some(v) = counts.iter().find(|v| !(0.0..=2.0).contains(*v)) {
        return Err(RobkatError::Input(format!("IBS kernel needs allele counts in {{0,1,2}}, got {v}")));
    }
    // For counts in {0,1,2} the shared allele count is 2 − |Z_ik − Z_jk|.
    let mut matrix = DMatrix::<f64>::identity(n, n);
    let denom = 2.0 * p as f64;
    for i in 0..n {
        for j in 0..i {
            let dist: f64 = (0..p).map(|k| (counts[(i, k)] - counts[(j, k)]).abs()).sum();
            let v = 1.0 - dist / denom;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        matrix,
        kind: KernelKind::Ibs,
        centered: false,
    })
}

/// Build a genotype kernel, applying the missing-data policy: per-SNP mean
/// imputation for linear/quadratic, per-SNP mode imputation for IBS.
/// `weights` multiply SNP columns and are only accepted for linear/quadratic.
pub fn build_kernel(
    z: &GenotypeMatrix,
    kind: KernelKind,
    weights: Option<&[f64]>,
) -> Result<KernelMatrix> {
    match kind {
        KernelKind::Linear => weighted_linear_kernel(&z.impute_mean(), weights),
        KernelKind::Quadratic => weighted_quadratic_kernel(&z.impute_mean(), weights),
        KernelKind::Ibs => {
            if weights.is_some() {
                return Err(RobkatError::Input("SNP weights are not supported for the IBS kernel".into()));
            }
            ibs_kernel(&z.impute_mode())
        }
        KernelKind::Custom => Err(RobkatError::Input(
            "custom kernels are read from a file, not built from genotypes".into(),
        )),
    }
}

/// `ℙKℙ` with `ℙ = I − (1/n)𝟙𝟙ᵀ`.
pub fn center_kernel(k: &KernelMatrix) -> KernelMatrix {
    let m = &k.matrix;
    let n = m.nrows();
    if n == 0 {
        return KernelMatrix { centered: true, ..k.clone() };
    }
    let nf = n as f64;
    let row_means: Vec<f64> = m.row_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = m.column_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let centered = DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand);
    KernelMatrix {
        matrix: symmetrize(centered),
        kind: k.kind,
        centered: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdDiagnostics {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// PSD check: `λ_min ≥ −tol · λ_max`.
pub fn validate_psd(k: &KernelMatrix, tol: f64) -> Result<PsdDiagnostics> {
    if k.matrix.iter().any(|v| !v.is_finite()) {
        return Err(RobkatError::Numerical("kernel has non-finite entries".into()));
    }
    if k.n() == 0 {
        return Ok(PsdDiagnostics {
            is_psd: true,
            min_eigenvalue: 0.0,
            max_eigenvalue: 0.0,
        });
    }
    let eig = SymmetricEigen::new(k.matrix.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !min.is_finite() || !max.is_finite() {
        return Err(RobkatError::Numerical("eigensolver returned non-finite eigenvalues".into()));
    }
    Ok(PsdDiagnostics {
        is_psd: min >= -tol * max.max(0.0),
        min_eigenvalue: min,
        max_eigenvalue: max,
    })
}
