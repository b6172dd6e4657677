//! Null distributions for `T`: Pearson type III moment matching, exact
//! enumeration, and Monte Carlo permutation.

use super::moments::{centered_scores, PermutationMoments};
use crate::error::{Result, RobkatError};
use crate::quad::normal_sf;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{gamma_lr, gamma_ur};

/// Below this absolute skewness the normal tail is used.
pub const SKEW_NORMAL_CUTOFF: f64 = 1e-8;
/// Largest `n` accepted by [`exact_permutation_pvalue`].
pub const MAX_EXACT_N: usize = 9;
/// Relative slack when counting permuted statistics that tie the observed one.
pub const TIE_SLACK: f64 = 1e-12;
pub const MIN_MC_REPS: usize = 100;

// Past this shape the incomplete gamma loses accuracy (~1e-9) and the
// Wilson–Hilferty cube-root transform is at least as good.
const GAMMA_SHAPE_WH: f64 = 1e7;

/// Upper-tail probability of `T` under a Pearson type III law matched to the
/// mean, variance and skewness in `moments`.
///
/// With `z = (T − μ)/σ` and skewness `γ > 0` this is the upper tail of a
/// gamma law of shape `4/γ²` and scale `γ/2`, shifted to mean zero. Negative
/// skewness uses the reflected law. Degenerate moments give `p = 1`.
pub fn pearson3_pvalue(t: f64, moments: &PermutationMoments) -> f64 {
    if moments.is_degenerate() {
        return 1.0;
    }
    let z = (t - moments.mean) / moments.std_dev();
    let gamma = moments.skewness;
    if gamma.abs() <= SKEW_NORMAL_CUTOFF {
        return normal_sf(z);
    }
    let g = gamma.abs();
    let shape = 4.0 / (g * g);
    // standardized law: X = (G − shape)·(g/2) with G ~ Gamma(shape, 1)
    let signed_z = if gamma > 0.0 { z } else { -z };
    let x = shape + 2.0 * signed_z / g;
    let upper = if x <= 0.0 {
        1.0
    } else if shape > GAMMA_SHAPE_WH {
        wilson_hilferty_sf(shape, x)
    } else {
        gamma_ur(shape, x)
    };
    let p = if gamma > 0.0 {
        upper
    } else if x <= 0.0 {
        0.0
    } else if shape > GAMMA_SHAPE_WH {
        1.0 - upper
    } else {
        gamma_lr(shape, x)
    };
    p.clamp(0.0, 1.0)
}

fn wilson_hilferty_sf(shape: f64, x: f64) -> f64 {
    let c = 1.0 / (9.0 * shape);
    let z = ((x / shape).cbrt() - (1.0 - c)) / c.sqrt();
    normal_sf(z)
}

fn quadratic_form(kc: &DMatrix<f64>, v: &[f64], order: &[usize]) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for i in 0..n {
        let vi = v[order[i]];
        let row = kc.column(i);
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * v[order[j]];
        }
        total += vi * acc;
    }
    total
}

fn check_dims(kc: &DMatrix<f64>, w: &[f64]) -> Result<()> {
    if kc.nrows() != w.len() || kc.ncols() != w.len() {
        return Err(RobkatError::Input(format!(
            "kernel is {}x{} but the score vector has length {}",
            kc.nrows(),
            kc.ncols(),
            w.len()
        )));
    }
    Ok(())
}

/// Add-one permutation p-value from full enumeration of all `n!`
/// permutations (`n ≤ 9`).
pub fn exact_permutation_pvalue(kc: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    check_dims(kc, w)?;
    let n = w.len();
    if n > MAX_EXACT_N {
        return Err(RobkatError::Input(format!(
            "exact enumeration supports n <= {MAX_EXACT_N}, got {n}"
        )));
    }
    let Some(v) = centered_scores(w) else {
        return Ok(1.0);
    };
    let identity: Vec<usize> = (0..n).collect();
    let observed = quadratic_form(kc, &v, &identity);
    let threshold = observed - TIE_SLACK * observed.abs();

    // Heap's algorithm
    let mut order = identity;
    let mut counters = vec![0usize; n];
    let mut hits = 1u64; // identity permutation
    let mut total = 1u64;
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(counters[i], i);
            }
            total += 1;
            if quadratic_form(kc, &v, &order) >= threshold {
                hits += 1;
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + total) as f64)
}

/// Add-one Monte Carlo permutation p-value from `reps` random permutations.
pub fn monte_carlo_pvalue(kc: &DMatrix<f64>, w: &[f64], reps: usize, seed: u64) -> Result<f64> {
    monte_carlo_pvalue_stream(kc, w, reps, seed, 0)
}

/// As [`monte_carlo_pvalue`], drawing from an independent ChaCha stream so
/// that concurrent tests sharing a seed stay reproducible.
pub fn monte_carlo_pvalue_stream(
    kc: &DMatrix<f64>,
    w: &[f64],
    reps: usize,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    check_dims(kc, w)?;
    if reps < MIN_MC_REPS {
        return Err(RobkatError::Input(format!(
            "Monte Carlo needs at least {MIN_MC_REPS} permutations, got {reps}"
        )));
    }
    let Some(v) = centered_scores(w) else {
        return Ok(1.0);
    };
    let n = w.len();
    let mut order: Vec<usize> = (0..n).collect();
    let observed = quadratic_form(kc, &v, &order);
    let threshold = observed - TIE_SLACK * observed.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut hits = 0usize;
    for _ in 0..reps {
        order.shuffle(&mut rng);
        if quadratic_form(kc, &v, &order) >= threshold {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + reps) as f64)
}
