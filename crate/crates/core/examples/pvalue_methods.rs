//! Compare the three null approximations: Pearson type III moment matching,
//! exact enumeration (n ≤ 9), and Monte Carlo permutation.
//!
//!     cargo run --release --example pvalue_methods

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use robkat::assoc_test::{monte_carlo_pvalue, test_with_fit, MAX_EXACT_N};
use robkat::kernel::{center_kernel, ibs_kernel};
use robkat::robust_fit::{fit_null, score_vector, FitOptions};
use robkat::sim::{gen_errors, gen_genotypes, replication_rng, ErrorDist, DEFAULT_MAFS};
use robkat::{with_intercept, LossFamily, LossSpec, PValueMethod, TestOptions};
use std::time::Instant;

fn main() -> robkat::Result<()> {
    for (n, seed) in [(MAX_EXACT_N, 3u64), (MAX_EXACT_N, 4), (200, 5)] {
        let mut rng = replication_rng(seed, 0);
        let x = with_intercept(&DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng)));
        let z = gen_genotypes(n, &DEFAULT_MAFS, &mut rng)?;
        let y = x.column(1) + gen_errors(ErrorDist::T3, n, &mut rng);
        let fit = fit_null(&y, &x, LossSpec::default_for(LossFamily::Huber), &FitOptions::default())?;
        let k = center_kernel(&ibs_kernel(&z)?);

        println!("n = {n}");
        let mut methods = vec![PValueMethod::PearsonIII, PValueMethod::MonteCarlo];
        if n <= MAX_EXACT_N {
            methods.insert(1, PValueMethod::ExactPermutation);
        }
        for method in methods {
            let opts = TestOptions { method, mc_reps: 100_000, seed: 1, ..TestOptions::default() };
            let t0 = Instant::now();
            let r = test_with_fit(&fit, &k, &opts)?;
            println!("  {method:<9} p = {:.5}   ({:.1} ms)", r.pvalue, t0.elapsed().as_secs_f64() * 1e3);
        }
        // Monte Carlo error shrinks like 1/sqrt(B)
        let w: Vec<f64> = score_vector(&fit).iter().copied().collect();
        for b in [1_000, 10_000] {
            println!("  mc B={b:<6} p = {:.5}", monte_carlo_pvalue(k.matrix(), &w, b, 2)?);
        }
    }
    Ok(())
}
