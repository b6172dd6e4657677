//! Fit the null model with robust M-estimation and compare with least
//! squares when the data carry gross outliers.
//!
//!     cargo run --example null_fit

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use robkat::robust_fit::{fit_null, ols, score_vector, FitOptions};
use robkat::{LossFamily, LossSpec};

fn main() -> robkat::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 200;
    let truth = [1.0, 2.0, -1.0];
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { StandardNormal.sample(&mut rng) });
    let mut y = &x * DVector::from_row_slice(&truth) + DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    // contaminate 5% of responses
    for i in (0..n).step_by(20) {
        y[i] += 40.0;
    }

    let ls = ols(&y, &x)?;
    println!("truth           {truth:?}");
    println!("least squares   {:.3?}", ls.as_slice());
    for family in [LossFamily::Lad, LossFamily::Huber, LossFamily::Hampel, LossFamily::Bisquare] {
        let fit = fit_null(&y, &x, LossSpec::default_for(family), &FitOptions::default())?;
        println!(
            "{family:<15} {:.3?}  scale {:.3}  iterations {:>3}  converged {}",
            fit.beta_hat.as_slice(),
            fit.scale,
            fit.iterations,
            fit.converged
        );
    }

    let huber = fit_null(&y, &x, LossSpec::default_for(LossFamily::Huber), &FitOptions::default())?;
    let w = score_vector(&huber);
    println!(
        "\nHuber scores are bounded by k = 1.345: max |w| = {:.3}; estimating equations max |Σ x ψ| = {:.2e}",
        w.amax(),
        huber.estimating_equations(&x).amax()
    );
    Ok(())
}
