//! The `robkat` command line: `robkat test` for gene-set batches and
//! `robkat sim` for simulation studies.
//!
//! Every `test` flag can also be set in a TOML file passed with `--config`,
//! using the flag name as key (`mc-reps = 5000`, `kernel = ["linear", "ibs"]`).
//! Flags given on the command line win.

use crate::assoc_test::{PValueMethod, TestOptions};
use crate::batch::{emit_report, exit_code, render_report, run_batch, BatchOptions};
use crate::error::{Result, RobkatError};
use crate::io::{load_study, read_custom_kernel};
use crate::kernel::KernelKind;
use crate::loss::LossSpec;
use crate::robust_fit::FitOptions;
use crate::sim::{run_simulation, SimConfig};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "robkat", version, about = "Robust kernel association tests for SNP sets")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test SNP sets for association with a phenotype.
    Test(TestArgs),
    /// Run a Type I error / power simulation.
    Sim(SimArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TestArgs {
    /// Phenotype table (`sample_id`, value).
    #[arg(long)]
    pub pheno: Option<PathBuf>,
    /// Covariate table (`sample_id`, one column per covariate).
    #[arg(long)]
    pub covar: Option<PathBuf>,
    /// Genotype table (`sample_id`, one 0/1/2 column per SNP, `NA` missing).
    #[arg(long)]
    pub geno: Option<PathBuf>,
    /// SNP sets (`set_name`, `snp_id`).
    #[arg(long)]
    pub sets: Option<PathBuf>,
    /// Kernels: linear, quadratic, ibs, custom (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    pub kernel: Option<Vec<String>>,
    /// Whole-study kernel matrix for `--kernel custom`.
    #[arg(long)]
    pub custom_kernel: Option<PathBuf>,
    /// Loss: ls, lad, huber, hampel, bisquare.
    #[arg(long)]
    pub loss: Option<String>,
    /// Comma-separated tuning constants for the loss.
    #[arg(long)]
    pub tuning: Option<String>,
    /// p-value method: pearson3, exact, mc.
    #[arg(long)]
    pub method: Option<String>,
    /// Permutations for `--method mc`.
    #[arg(long)]
    pub mc_reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Family-wise level; adds Bonferroni threshold and significance columns.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output TSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Do not prepend an intercept to the covariates.
    #[arg(long)]
    #[serde(default)]
    pub no_intercept: bool,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl TestArgs {
    /// Fill unset flags from `file`.
    pub fn merged_with(self, file: TestArgs) -> TestArgs {
        TestArgs {
            pheno: self.pheno.or(file.pheno),
            covar: self.covar.or(file.covar),
            geno: self.geno.or(file.geno),
            sets: self.sets.or(file.sets),
            kernel: self.kernel.or(file.kernel),
            custom_kernel: self.custom_kernel.or(file.custom_kernel),
            loss: self.loss.or(file.loss),
            tuning: self.tuning.or(file.tuning),
            method: self.method.or(file.method),
            mc_reps: self.mc_reps.or(file.mc_reps),
            seed: self.seed.or(file.seed),
            alpha: self.alpha.or(file.alpha),
            out: self.out.or(file.out),
            no_intercept: self.no_intercept || file.no_intercept,
            max_iter: self.max_iter.or(file.max_iter),
            tol: self.tol.or(file.tol),
            config: self.config,
        }
    }

    /// Apply `--config` if given.
    pub fn resolve(self) -> Result<TestArgs> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|source| RobkatError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: TestArgs = toml::from_str(&text)
            .map_err(|e| RobkatError::Input(format!("{}: {e}", path.display())))?;
        Ok(self.merged_with(file))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Simulation config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output TSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| RobkatError::Input(format!("--{flag} is required")))
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| RobkatError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Run `robkat test`; returns the process exit code.
pub fn run_test(args: TestArgs) -> Result<i32> {
    let args = args.resolve()?;
    let loss = LossSpec::parse(args.loss.as_deref().unwrap_or("huber"), args.tuning.as_deref())?;
    let kinds = args
        .kernel
        .clone()
        .unwrap_or_else(|| vec!["ibs".into()])
        .iter()
        .map(|k| k.parse::<KernelKind>())
        .collect::<Result<Vec<_>>>()?;
    let method: PValueMethod = args.method.as_deref().unwrap_or("pearson3").parse()?;
    let defaults = TestOptions::default();
    let fit_defaults = FitOptions::default();
    let test = TestOptions {
        method,
        mc_reps: args.mc_reps.unwrap_or(defaults.mc_reps),
        seed: args.seed.unwrap_or(defaults.seed),
        stream: 0,
        fit: FitOptions {
            max_iter: args.max_iter.unwrap_or(fit_defaults.max_iter),
            tol: args.tol.unwrap_or(fit_defaults.tol),
        },
    };
    if let Some(a) = args.alpha {
        if !(a > 0.0 && a <= 1.0) {
            return Err(RobkatError::Input(format!("--alpha must lie in (0, 1], got {a}")));
        }
    }

    let study = load_study(
        required(&args.pheno, "pheno")?,
        args.covar.as_deref(),
        required(&args.geno, "geno")?,
        required(&args.sets, "sets")?,
    )?;
    let custom_kernel = if kinds.contains(&KernelKind::Custom) {
        Some(read_custom_kernel(required(&args.custom_kernel, "custom-kernel")?, &study.sample_ids)?)
    } else {
        None
    };
    let opts = BatchOptions {
        loss,
        kernels: kinds.into_iter().filter(|&k| k != KernelKind::Custom).collect(),
        custom_kernel,
        test,
        intercept: !args.no_intercept,
    };
    let rows = run_batch(&study, &opts);
    match &args.out {
        Some(path) => emit_report(&rows, args.alpha, path)?,
        None => write_output(&render_report(&rows, args.alpha)?, None)?,
    }
    for r in &rows {
        if let Some((_, msg)) = &r.error {
            log::error!("set `{}`, {} kernel: {msg}", r.set, r.kernel);
        }
    }
    Ok(exit_code(&rows))
}

/// Run `robkat sim`.
pub fn run_sim(args: SimArgs) -> Result<i32> {
    let config = SimConfig::from_file(&args.config)?;
    let result = run_simulation(&config)?;
    let mut buf = Vec::new();
    result
        .write_tsv(&mut buf)
        .expect("writing to memory cannot fail");
    write_output(&String::from_utf8(buf).expect("ASCII output"), args.out.as_deref())?;
    Ok(0)
}

/// Parse arguments, run, and return the exit code: 0 success, 1 input
/// error, 2 numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Test(a) => run_test(a),
        Command::Sim(a) => run_sim(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("robkat: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_values() {
        let file: TestArgs = toml::from_str(
            r#"
            pheno = "p.tsv"
            loss = "ls"
            kernel = ["linear", "ibs"]
            mc-reps = 500
            "#,
        )
        .unwrap();
        let cli = Cli::try_parse_from(["robkat", "test", "--loss", "huber", "--seed", "3"]).unwrap();
        let Command::Test(args) = cli.command else { panic!() };
        let merged = args.merged_with(file);
        assert_eq!(merged.loss.as_deref(), Some("huber"));
        assert_eq!(merged.pheno.as_deref(), Some(Path::new("p.tsv")));
        assert_eq!(merged.kernel.unwrap(), vec!["linear", "ibs"]);
        assert_eq!(merged.mc_reps, Some(500));
        assert_eq!(merged.seed, Some(3));
    }

    #[test]
    fn kernels_accept_commas_and_repeats() {
        let cli =
            Cli::try_parse_from(["robkat", "test", "--kernel", "linear,ibs", "--kernel", "quadratic"]).unwrap();
        let Command::Test(args) = cli.command else { panic!() };
        assert_eq!(args.kernel.unwrap(), vec!["linear", "ibs", "quadratic"]);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<TestArgs>("bogus = 1").is_err());
    }
}
