//! Test-only oracles, independent of the library's algorithms.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Every value of `wᵀ K w` over all permutations of `w`, by recursion.
pub fn enumerate_statistics(k: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    fn rec(k: &DMatrix<f64>, w: &[f64], used: &mut Vec<bool>, perm: &mut Vec<f64>, out: &mut Vec<f64>) {
        let n = w.len();
        if perm.len() == n {
            let mut t = 0.0;
            for i in 0..n {
                for j in 0..n {
                    t += k[(i, j)] * perm[i] * perm[j];
                }
            }
            out.push(t);
            return;
        }
        for idx in 0..n {
            if !used[idx] {
                used[idx] = true;
                perm.push(w[idx]);
                rec(k, w, used, perm, out);
                perm.pop();
                used[idx] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(k, w, &mut vec![false; w.len()], &mut Vec::new(), &mut out);
    out
}

/// (mean, variance, skewness) of a finite population.
pub fn population_moments(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let third = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let skew = if var > 0.0 { third / var.powf(1.5) } else { 0.0 };
    (mean, var, skew)
}

/// Add-one p-value by enumeration with a relative tie slack.
pub fn enumeration_pvalue(k: &DMatrix<f64>, w: &[f64]) -> f64 {
    let stats = enumerate_statistics(k, w);
    let observed = {
        let n = w.len();
        let mut t = 0.0;
        for i in 0..n {
            for j in 0..n {
                t += k[(i, j)] * w[i] * w[j];
            }
        }
        t
    };
    let hits = stats.iter().filter(|&&t| t >= observed - 1e-12 * observed.abs()).count();
    (1 + hits) as f64 / (1 + stats.len()) as f64
}

/// `(I − J/n) K (I − J/n)` by explicit matrix products.
pub fn doubly_center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    &p * k * &p
}

/// Random PSD matrix `G Gᵀ` with `G` n×r standard normal.
pub fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(rng));
    &g * g.transpose()
}

pub fn random_genotypes(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mafs: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..0.5)).collect();
    DMatrix::from_fn(n, p, |_, j| {
        let a = (rng.random::<f64>() < mafs[j]) as u8;
        let b = (rng.random::<f64>() < mafs[j]) as u8;
        (a + b) as f64
    })
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Asymptotic Kolmogorov–Smirnov p-value for a one-sample uniformity test.
pub fn ks_uniform_pvalue(sample: &[f64]) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0f64, f64::max);
    // Stephens' small-sample correction
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        p += term;
    }
    (d, p.clamp(0.0, 1.0))
}

/// Paths of a synthetic study written by [`write_study`].
pub struct StudyFiles {
    pub pheno: std::path::PathBuf,
    pub covar: std::path::PathBuf,
    pub geno: std::path::PathBuf,
    pub sets: std::path::PathBuf,
}

/// Write a synthetic study: `n` samples, two covariates, 36 SNPs grouped into
/// 12 sets of three (set `G01` carries a signal, `G12` contains a monomorphic
/// SNP only). `shuffle` permutes the row order of every file, and one extra
/// genotype-only sample is always present.
pub fn write_study(dir: &std::path::Path, n: usize, seed: u64, shuffle: bool) -> StudyFiles {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use std::fmt::Write as _;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 36;
    let ids: Vec<String> = (0..n).map(|i| format!("S{i:04}")).collect();
    let mut geno = random_genotypes(n, p, &mut rng);
    for i in 0..n {
        geno[(i, 35)] = 1.0;
    }
    let t3 = rand_distr::StudentT::new(3.0).unwrap();
    let mut pheno = Vec::new();
    let mut covar = Vec::new();
    for i in 0..n {
        let age: f64 = 40.0 + 10.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        let sex = (rng.random::<f64>() < 0.5) as u8 as f64;
        let signal = 1.0 * (geno[(i, 0)] + geno[(i, 1)] + geno[(i, 2)]);
        let y = 0.02 * age + 0.5 * sex + signal + t3.sample(&mut rng);
        pheno.push(y);
        covar.push((age, sex));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut perm = |order: &mut Vec<usize>| {
        if shuffle {
            order.shuffle(&mut rng);
        }
    };

    let mut s = String::from("sample_id\ty\n");
    perm(&mut order);
    for &i in &order {
        let _ = writeln!(s, "{}\t{:.10}", ids[i], pheno[i]);
    }
    let pheno_path = dir.join("pheno.tsv");
    std::fs::write(&pheno_path, s).unwrap();

    let mut s = String::from("sample_id\tage\tsex\n");
    perm(&mut order);
    for &i in &order {
        let _ = writeln!(s, "{}\t{:.6}\t{}", ids[i], covar[i].0, covar[i].1);
    }
    let covar_path = dir.join("covar.tsv");
    std::fs::write(&covar_path, s).unwrap();

    let mut s = String::from("sample_id");
    for j in 0..p {
        let _ = write!(s, "\trs{}", j + 1);
    }
    s.push('\n');
    perm(&mut order);
    for &i in &order {
        s.push_str(&ids[i]);
        for j in 0..p {
            let _ = write!(s, "\t{}", geno[(i, j)]);
        }
        s.push('\n');
    }
    s.push_str("EXTRA");
    for _ in 0..p {
        s.push_str("\t0");
    }
    s.push('\n');
    let geno_path = dir.join("geno.tsv");
    std::fs::write(&geno_path, s).unwrap();

    let mut s = String::from("set_name\tsnp_id\n");
    for g in 0..11 {
        for k in 0..3 {
            let _ = writeln!(s, "G{:02}\trs{}", g + 1, 3 * g + k + 1);
        }
    }
    s.push_str("G12\trs36\n");
    let sets_path = dir.join("sets.tsv");
    std::fs::write(&sets_path, s).unwrap();

    StudyFiles {
        pheno: pheno_path,
        covar: covar_path,
        geno: geno_path,
        sets: sets_path,
    }
}
