//! Simulation harness for Type I error and power studies.
//!
//! Each replication draws `X ~ N(0, I_q)`, a fresh genotype matrix and an
//! error vector, then forms `Y = Xβ + c·h(Z) + ε` for every `c` in the grid
//! (the same draws are reused across `c`, so power curves share noise).
//! Replication `r` draws from ChaCha stream `r` of the configured seed, so
//! results do not depend on how replications are scheduled.

use crate::assoc_test::{test_with_fit, with_intercept, PValueMethod, TestOptions};
use crate::error::{Result, RobkatError};
use crate::kernel::{build_kernel, center_kernel, GenotypeMatrix, KernelKind};
use crate::loss::LossSpec;
use crate::robust_fit::{fit_null, FitOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Cauchy, ChiSquared, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::Deserialize;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

/// Minor allele frequencies of the default 9-SNP set.
pub const DEFAULT_MAFS: [f64; 9] = [0.05, 0.12, 0.21, 0.30, 0.08, 0.45, 0.17, 0.26, 0.38];

/// Offset added to the seed for Monte Carlo p-values inside a replication.
const MC_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(try_from = "String")]
pub enum ErrorDist {
    T3,
    ChiSq1,
    StdNormal,
    Cauchy,
    /// 10% of draws from `N(10, 1)`, centered.
    Mix10,
    /// 30% of draws from `N(10, 1)`, centered.
    Mix30,
}

impl ErrorDist {
    pub const ALL: [ErrorDist; 6] = [
        ErrorDist::T3,
        ErrorDist::ChiSq1,
        ErrorDist::StdNormal,
        ErrorDist::Cauchy,
        ErrorDist::Mix10,
        ErrorDist::Mix30,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorDist::T3 => "t3",
            ErrorDist::ChiSq1 => "chisq1",
            ErrorDist::StdNormal => "normal",
            ErrorDist::Cauchy => "cauchy",
            ErrorDist::Mix10 => "mix10",
            ErrorDist::Mix30 => "mix30",
        }
    }

    /// Weight `θ` of the `N(0, 1)` component for the mixtures.
    pub fn mixture_theta(self) -> Option<f64> {
        match self {
            ErrorDist::Mix10 => Some(0.9),
            ErrorDist::Mix30 => Some(0.7),
            _ => None,
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ErrorDist {
    type Err = RobkatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t3" => Ok(ErrorDist::T3),
            "chisq1" | "chisq" => Ok(ErrorDist::ChiSq1),
            "normal" | "stdnormal" => Ok(ErrorDist::StdNormal),
            "cauchy" => Ok(ErrorDist::Cauchy),
            "mix10" => Ok(ErrorDist::Mix10),
            "mix30" => Ok(ErrorDist::Mix30),
            other => Err(RobkatError::Input(format!("unknown error distribution `{other}`"))),
        }
    }
}

impl TryFrom<String> for ErrorDist {
    type Error = RobkatError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(try_from = "String")]
pub enum HForm {
    Linear,
    Nonlinear,
}

impl HForm {
    pub fn name(self) -> &'static str {
        match self {
            HForm::Linear => "linear",
            HForm::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for HForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for HForm {
    type Err = RobkatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(HForm::Linear),
            "nonlinear" => Ok(HForm::Nonlinear),
            other => Err(RobkatError::Input(format!("unknown h form `{other}`"))),
        }
    }
}

impl TryFrom<String> for HForm {
    type Error = RobkatError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One simulation scenario. Deserializes from TOML; every field except `n`
/// has a default.
///
/// Losses are written as `"huber"` or with tuning constants as
/// `"hampel:1.5,3.5,8"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    /// Number of covariates (excluding the intercept).
    pub q: usize,
    pub mafs: Vec<f64>,
    pub error_dist: ErrorDist,
    pub h_form: HForm,
    /// SNP columns entering the linear `h`, zero-based.
    pub linear_snps: Vec<usize>,
    pub c_grid: Vec<f64>,
    pub losses: Vec<String>,
    pub kernel: String,
    pub replications: usize,
    pub alpha_levels: Vec<f64>,
    pub seed: u64,
    /// Covariate effects; defaults to all ones.
    pub beta: Option<Vec<f64>>,
    pub method: String,
    pub mc_reps: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        SimConfig {
            n: 100,
            q: 5,
            mafs: DEFAULT_MAFS.to_vec(),
            error_dist: ErrorDist::StdNormal,
            h_form: HForm::Linear,
            linear_snps: (0..5).collect(),
            c_grid: vec![0.0],
            losses: vec!["huber".into()],
            kernel: "ibs".into(),
            replications: 1000,
            alpha_levels: vec![0.01, 0.05, 0.1],
            seed: 1,
            beta: None,
            method: "pearson3".into(),
            mc_reps: 1000,
            max_iter: fit.max_iter,
            tol: fit.tol,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RobkatError::Input(format!("invalid simulation config: {e}")))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RobkatError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn parsed_losses(&self) -> Result<Vec<LossSpec>> {
        self.losses
            .iter()
            .map(|s| match s.split_once(':') {
                Some((family, tuning)) => LossSpec::parse(family, Some(tuning)),
                None => LossSpec::parse(s, None),
            })
            .collect()
    }

    pub fn kernel_kind(&self) -> Result<KernelKind> {
        let kind: KernelKind = self.kernel.parse()?;
        if kind == KernelKind::Custom {
            return Err(RobkatError::Input("simulations need a genotype kernel, not `custom`".into()));
        }
        Ok(kind)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta.clone().unwrap_or_else(|| vec![1.0; self.q])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RobkatError::Input(msg));
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if self.mafs.is_empty() || self.mafs.iter().any(|&m| !(m > 0.0 && m <= 0.5)) {
            return bad("every MAF must lie in (0, 0.5]".into());
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return bad("c_grid must be non-empty with finite entries >= 0".into());
        }
        if self.alpha_levels.is_empty() || self.alpha_levels.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad("alpha levels must lie in (0, 1]".into());
        }
        if self.losses.is_empty() {
            return bad("at least one loss is required".into());
        }
        if self.beta().len() != self.q {
            return bad(format!("beta has {} entries but q = {}", self.beta().len(), self.q));
        }
        if self.n < self.q + 3 {
            return bad(format!("n = {} is too small for q = {}", self.n, self.q));
        }
        if self.h_form == HForm::Linear {
            if let Some(&j) = self.linear_snps.iter().find(|&&j| j >= self.mafs.len()) {
                return bad(format!("linear_snps index {j} exceeds the {} SNPs", self.mafs.len()));
            }
        }
        self.parsed_losses()?;
        self.kernel_kind()?;
        self.method.parse::<PValueMethod>()?;
        Ok(())
    }
}

/// Rejection rate for one (loss, c, α) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub loss: LossSpec,
    pub kernel: KernelKind,
    pub error_dist: ErrorDist,
    pub h_form: HForm,
    pub c: f64,
    pub alpha: f64,
    pub rate: f64,
    /// `sqrt(rate (1 − rate) / n_converged)`.
    pub se: f64,
    /// Replications entering the denominator.
    pub n_converged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Ordered by loss, then `c`, then `α`, as in the config.
    pub rows: Vec<SimRow>,
    pub replications: usize,
}

impl SimResult {
    pub fn rate(&self, loss: &LossSpec, c: f64, alpha: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.loss == *loss && r.c == c && r.alpha == alpha)
            .map(|r| r.rate)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "loss\tkernel\terror_dist\th_form\tc\talpha\trate\tse\tn_converged")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
                r.loss, r.kernel, r.error_dist, r.h_form, r.c, r.alpha, r.rate, r.se, r.n_converged
            )?;
        }
        Ok(())
    }
}

/// `n × p` genotypes with independent `Binomial(2, maf_k)` entries.
pub fn gen_genotypes<R: Rng + ?Sized>(n: usize, mafs: &[f64], rng: &mut R) -> Result<GenotypeMatrix> {
    let dists = mafs
        .iter()
        .map(|&m| Binomial::new(2, m).map_err(|e| RobkatError::Domain(format!("MAF {m}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut values = DMatrix::zeros(n, mafs.len());
    for i in 0..n {
        for (j, d) in dists.iter().enumerate() {
            values[(i, j)] = d.sample(rng) as f64;
        }
    }
    GenotypeMatrix::from_values(values)
}

/// `h(Z_i) = Σ_{k ∈ snps} Z_ik`.
pub fn h_linear(z: &DMatrix<f64>, snps: &[usize]) -> Result<DVector<f64>> {
    if z.ncols() < 5 {
        return Err(RobkatError::Input(format!(
            "the linear effect needs at least 5 SNPs, got {}",
            z.ncols()
        )));
    }
    if let Some(&j) = snps.iter().find(|&&j| j >= z.ncols()) {
        return Err(RobkatError::Input(format!("SNP index {j} out of range")));
    }
    Ok(DVector::from_fn(z.nrows(), |i, _| snps.iter().map(|&j| z[(i, j)]).sum()))
}

/// `h(Z_i) = 1 + Σ_k Z_ik + 2 Σ_{k≥2} Z_i1 Z_ik`.
pub fn h_nonlinear(z: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(z.nrows(), |i, _| {
        let row = z.row(i);
        let interaction: f64 = row.iter().skip(1).map(|&v| row[0] * v).sum();
        1.0 + row.sum() + 2.0 * interaction
    })
}

/// `n` iid errors; the mixtures are `B·W₀ + (1−B)·W₁₀ − 10(1−θ)` with
/// `W_m ~ N(m, 1)` and `B ~ Bernoulli(θ)`, which has mean exactly zero.
pub fn gen_errors<R: Rng + ?Sized>(dist: ErrorDist, n: usize, rng: &mut R) -> DVector<f64> {
    match dist {
        ErrorDist::T3 => {
            let d = StudentT::new(3.0).expect("valid degrees of freedom");
            DVector::from_fn(n, |_, _| d.sample(rng))
        }
        ErrorDist::ChiSq1 => {
            let d = ChiSquared::new(1.0).expect("valid degrees of freedom");
            DVector::from_fn(n, |_, _| d.sample(rng))
        }
        ErrorDist::StdNormal => DVector::from_fn(n, |_, _| StandardNormal.sample(rng)),
        ErrorDist::Cauchy => {
            let d = Cauchy::new(0.0, 1.0).expect("valid scale");
            DVector::from_fn(n, |_, _| d.sample(rng))
        }
        ErrorDist::Mix10 | ErrorDist::Mix30 => {
            let theta = dist.mixture_theta().unwrap();
            DVector::from_fn(n, |_, _| {
                let w: f64 = StandardNormal.sample(rng);
                let shift = if rng.random::<f64>() < theta { 0.0 } else { 10.0 };
                w + shift - 10.0 * (1.0 - theta)
            })
        }
    }
}

/// The random generator for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// p-values of one replication, indexed `[loss][c]`; `None` marks a fit that
/// failed or did not converge.
pub fn replication_pvalues(config: &SimConfig, rep: u64) -> Result<Vec<Vec<Option<f64>>>> {
    let losses = config.parsed_losses()?;
    let kind = config.kernel_kind()?;
    let method: PValueMethod = config.method.parse()?;
    let beta = DVector::from_vec(config.beta());
    let n = config.n;

    let mut rng = replication_rng(config.seed, rep);
    let x = DMatrix::from_fn(n, config.q, |_, _| StandardNormal.sample(&mut rng));
    let z = gen_genotypes(n, &config.mafs, &mut rng)?;
    let eps = gen_errors(config.error_dist, n, &mut rng);
    let h = match config.h_form {
        HForm::Linear => h_linear(z.values(), &config.linear_snps)?,
        HForm::Nonlinear => h_nonlinear(z.values()),
    };
    let xi = with_intercept(&x);
    let kernel = center_kernel(&build_kernel(&z, kind, None)?);
    let base = &x * &beta + &eps;

    let opts = TestOptions {
        method,
        mc_reps: config.mc_reps,
        seed: config.seed.wrapping_add(MC_SEED_OFFSET),
        stream: rep,
        fit: FitOptions {
            max_iter: config.max_iter,
            tol: config.tol,
        },
    };
    let mut out = vec![Vec::with_capacity(config.c_grid.len()); losses.len()];
    for &c in &config.c_grid {
        let y = &base + &h * c;
        for (l, loss) in losses.iter().enumerate() {
            let p = match fit_null(&y, &xi, *loss, &opts.fit) {
                Ok(fit) if fit.converged => Some(test_with_fit(&fit, &kernel, &opts)?.pvalue),
                Ok(_) => None,
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            };
            out[l].push(p);
        }
    }
    Ok(out)
}

/// Run every replication (in parallel on the current rayon pool) and tally
/// rejections `p ≤ α`.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let losses = config.parsed_losses()?;
    let kind = config.kernel_kind()?;
    let all = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| replication_pvalues(config, rep))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (l, loss) in losses.iter().enumerate() {
        for (ci, &c) in config.c_grid.iter().enumerate() {
            let ps: Vec<f64> = all.iter().filter_map(|rep| rep[l][ci]).collect();
            let n_converged = ps.len();
            if n_converged < config.replications {
                log::warn!(
                    "{loss}, c = {c}: {} of {} replications excluded (fit failed or did not converge)",
                    config.replications - n_converged,
                    config.replications
                );
            }
            for &alpha in &config.alpha_levels {
                let (rate, se) = if n_converged == 0 {
                    (f64::NAN, f64::NAN)
                } else {
                    let r = ps.iter().filter(|&&p| p <= alpha).count() as f64 / n_converged as f64;
                    (r, (r * (1.0 - r) / n_converged as f64).sqrt())
                };
                rows.push(SimRow {
                    loss: *loss,
                    kernel: kind,
                    error_dist: config.error_dist,
                    h_form: config.h_form,
                    c,
                    alpha,
                    rate,
                    se,
                    n_converged,
                });
            }
        }
    }
    Ok(SimResult {
        rows,
        replications: config.replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(v: &DVector<f64>) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.mean();
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn genotype_means_match_binomial() {
        let mut rng = replication_rng(1, 0);
        let n = 20_000;
        let z = gen_genotypes(n, &[0.5, 0.1], &mut rng).unwrap();
        for (j, maf) in [0.5, 0.1].into_iter().enumerate() {
            let mean = z.values().column(j).mean();
            let se = (2.0 * maf * (1.0 - maf) / n as f64).sqrt();
            assert!((mean - 2.0 * maf).abs() < 4.0 * se, "{mean}");
        }
        let z0 = gen_genotypes(50, &[1e-300], &mut rng).unwrap();
        assert!(z0.values().iter().all(|&v| v == 0.0));
        let a = gen_genotypes(10, &DEFAULT_MAFS, &mut replication_rng(9, 3)).unwrap();
        let b = gen_genotypes(10, &DEFAULT_MAFS, &mut replication_rng(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn effect_functions() {
        let mut z = DMatrix::zeros(2, 9);
        assert_eq!(h_linear(&z, &[0, 1, 2, 3, 4]).unwrap()[0], 0.0);
        assert_eq!(h_nonlinear(&z)[0], 1.0);
        z[(1, 0)] = 1.0;
        z[(1, 1)] = 1.0;
        assert_eq!(h_nonlinear(&z)[1], 5.0);
        z[(1, 6)] = 2.0;
        assert_eq!(h_linear(&z, &[0, 1, 2, 3, 4]).unwrap()[1], 2.0);
        assert!(h_linear(&DMatrix::zeros(3, 4), &[0]).is_err());
    }

    #[test]
    fn error_distribution_moments() {
        let n = 1_000_000;
        let mut rng = replication_rng(2, 0);
        for dist in [ErrorDist::Mix10, ErrorDist::Mix30] {
            let e = gen_errors(dist, n, &mut rng);
            let (mean, var) = stats(&e);
            assert!(mean.abs() < 4.0 * (var / n as f64).sqrt(), "{dist}: {mean}");
        }
        let (_, var) = stats(&gen_errors(ErrorDist::T3, n, &mut rng));
        // t₃ has infinite fourth moment, so the variance converges slowly;
        // a loose band still catches a wrong law.
        assert!((var - 3.0).abs() < 0.3, "{var}");
        let (mean, var) = stats(&gen_errors(ErrorDist::ChiSq1, n, &mut rng));
        assert!((mean - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
        assert!((var - 2.0).abs() < 0.05);
        let mut c: Vec<f64> = gen_errors(ErrorDist::Cauchy, n, &mut rng).iter().copied().collect();
        c.sort_by(|a, b| a.total_cmp(b));
        let median = c[n / 2];
        // sd of the sample median: 1 / (2 f(0) sqrt(n)) with f(0) = 1/π
        let se = std::f64::consts::PI / (2.0 * (n as f64).sqrt());
        assert!(median.abs() < 4.0 * se, "{median}");
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg = SimConfig::from_toml_str(
            r#"
            n = 50
            error_dist = "cauchy"
            h_form = "nonlinear"
            c_grid = [0.0, 0.5]
            losses = ["huber", "ls", "hampel:1.5,3.5,8"]
            replications = 3
            alpha_levels = [0.05]
            seed = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.error_dist, ErrorDist::Cauchy);
        assert_eq!(cfg.parsed_losses().unwrap().len(), 3);
        assert_eq!(cfg.mafs, DEFAULT_MAFS.to_vec());
        cfg.validate().unwrap();
        assert!(SimConfig::from_toml_str("n = 50\nbogus = 1").is_err());
        assert!(SimConfig::from_toml_str("error_dist = \"laplace\"").is_err());
    }

    #[test]
    fn small_run_is_deterministic_and_nested_in_alpha() {
        let cfg = SimConfig {
            n: 40,
            replications: 12,
            c_grid: vec![0.0, 1.0],
            losses: vec!["huber".into(), "ls".into()],
            alpha_levels: vec![0.05, 0.5, 1.0],
            ..SimConfig::default()
        };
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2 * 2 * 3);
        for chunk in a.rows.chunks(3) {
            assert!(chunk[0].rate <= chunk[1].rate && chunk[1].rate <= chunk[2].rate);
            assert_eq!(chunk[2].rate, 1.0);
        }
        let mut buf = Vec::new();
        a.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("loss\tkernel\terror_dist\th_form\tc\talpha\trate\tse\tn_converged\n"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimConfig::default();
        for cfg in [
            SimConfig { replications: 0, ..base.clone() },
            SimConfig { mafs: vec![0.6], ..base.clone() },
            SimConfig { c_grid: vec![-1.0], ..base.clone() },
            SimConfig { kernel: "custom".into(), ..base.clone() },
            SimConfig { losses: vec!["l2".into()], ..base.clone() },
        ] {
            assert!(run_simulation(&cfg).is_err());
        }
    }
}
