//! Null-model M-estimation: `Y = Xβ + ε` fitted by IRLS with simultaneous
//! Huber Proposal 2 scale, and the score vector `w_i = ψ(ê_i / ŝ)`.

use crate::error::{Result, RobkatError};
use crate::loss::LossSpec;
use nalgebra::{DMatrix, DVector};

/// Consistency factor turning the MAD into a normal-scale estimate.
pub const MAD_CONSISTENCY: f64 = 1.4826;

const RANK_TOL: f64 = 1e-10;
const BISECTION_WIDTH: f64 = 100.0;
const MAX_BRACKET_EXPANSIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the relative change of fitted values and scale.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

/// Result of fitting the model under `H0: h(Z) = 0`.
#[derive(Debug, Clone)]
pub struct NullFit {
    pub beta_hat: DVector<f64>,
    /// `ê_i = Y_i − X_iᵀβ̂`.
    pub residuals: DVector<f64>,
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
    pub loss: LossSpec,
}

impl NullFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    /// `Σ X_i ψ(ê_i / ŝ)`; zero at an exact M-estimate.
    pub fn estimating_equations(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x.transpose() * score_vector(self)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Normalized median absolute deviation about the median.
pub fn mad_scale(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let mut buf = residuals.to_vec();
    let center = median(&mut buf);
    for (b, r) in buf.iter_mut().zip(residuals) {
        *b = (r - center).abs();
    }
    MAD_CONSISTENCY * median(&mut buf)
}

fn check_design(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    let (n, q) = x.shape();
    if y.len() != n {
        return Err(RobkatError::Input(format!(
            "response has {} rows but design has {n}",
            y.len()
        )));
    }
    if n <= q {
        return Err(RobkatError::Input(format!(
            "need more observations than covariates (n = {n}, q = {q})"
        )));
    }
    if let Some(v) = y.iter().chain(x.iter()).find(|v| !v.is_finite()) {
        return Err(RobkatError::Input(format!("non-finite value {v} in response or design")));
    }
    let r = x.clone().qr().r();
    let diag: Vec<f64> = (0..q).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 || diag.iter().any(|&d| d <= RANK_TOL * largest) {
        return Err(RobkatError::Input("design matrix is rank deficient".into()));
    }
    Ok(())
}

fn weighted_least_squares(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
) -> Result<DVector<f64>> {
    let q = x.ncols();
    let mut xtwx = DMatrix::<f64>::zeros(q, q);
    let mut xtwy = DVector::<f64>::zeros(q);
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..q {
            let wa = w * row[a];
            xtwy[a] += wa * y[i];
            for b in 0..=a {
                xtwx[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            xtwx[(b, a)] = xtwx[(a, b)];
        }
    }
    let chol = xtwx.cholesky().ok_or_else(|| {
        RobkatError::Numerical("weighted normal equations are singular".into())
    })?;
    Ok(chol.solve(&xtwy))
}

/// Ordinary least squares `β = argmin ‖Y − Xβ‖²`.
pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_design(y, x)?;
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| RobkatError::Input("design matrix is rank deficient".into()))
}

/// One IRLS β-update at fixed scale: weighted least squares with weights
/// `ψ(ê_i/s) / (ê_i/s)` evaluated at the current `beta`.
pub fn irls_step(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    scale: f64,
    loss: &LossSpec,
) -> Result<DVector<f64>> {
    let residuals = y - x * beta;
    let weights: Vec<f64> = residuals
        .iter()
        .map(|e| loss.psi_weight_unchecked(e / scale))
        .collect();
    weighted_least_squares(y, x, &weights)
}

fn mean_psi_sq(residuals: &[f64], loss: &LossSpec, scale: f64, dof: f64) -> f64 {
    residuals
        .iter()
        .map(|e| {
            let p = loss.psi_unchecked(e / scale);
            p * p
        })
        .sum::<f64>()
        / dof
}

/// Huber's Proposal 2 scale: the `s` solving
/// `(1/(n−q)) Σ ψ²(ê_i/s) = E_Φ[ψ²]`.
///
/// LS has the closed form `sqrt(RSS/(n−q))`. LAD has `ψ² ≡ 1/4` away from
/// zero, so the equation carries no scale information; the normalized MAD is
/// returned instead (the LAD score vector does not depend on the scale).
pub fn proposal2_scale(residuals: &[f64], loss: &LossSpec, q: usize) -> Result<f64> {
    let n = residuals.len();
    if n <= q {
        return Err(RobkatError::Input(format!(
            "scale needs n > q (n = {n}, q = {q})"
        )));
    }
    if residuals.iter().any(|e| !e.is_finite()) {
        return Err(RobkatError::Domain("non-finite residual".into()));
    }
    if residuals.iter().all(|&e| e == 0.0) {
        return Err(RobkatError::Degenerate("all residuals are zero".into()));
    }
    let dof = (n - q) as f64;
    let rms = (residuals.iter().map(|e| e * e).sum::<f64>() / dof).sqrt();
    match loss {
        LossSpec::LeastSquares => return Ok(rms),
        LossSpec::Lad => {
            let mad = mad_scale(residuals);
            return Ok(if mad > 0.0 { mad } else { rms });
        }
        _ => {}
    }

    let target = loss.expected_psi_sq()?;
    let g = |s: f64| mean_psi_sq(residuals, loss, s, dof) - target;
    let center = match mad_scale(residuals) {
        m if m > 0.0 => m,
        _ => rms,
    };
    // g(s) < 0 for large s. For monotone ψ it decreases in s and the root is
    // unique; for redescending ψ it also turns negative as s → 0, so scan a
    // log grid for the largest sign change and bisect there.
    let mut width = BISECTION_WIDTH;
    let mut bracket = None;
    for _ in 0..=MAX_BRACKET_EXPANSIONS {
        bracket = largest_sign_change(&g, center / width, center * width);
        if bracket.is_some() {
            break;
        }
        width *= BISECTION_WIDTH;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(RobkatError::Numerical(format!(
            "Proposal 2 equation has no sign change on [{:.3e}, {:.3e}]",
            center / width,
            center * width
        )));
    };
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

const SCALE_GRID: usize = 64;

/// `(lo, hi)` with `g(lo) > 0 >= g(hi)` at the largest such grid step.
fn largest_sign_change(g: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if g(hi) > 0.0 {
        return None;
    }
    let ratio = (hi / lo).powf(1.0 / SCALE_GRID as f64);
    let mut upper = hi;
    for i in (0..SCALE_GRID).rev() {
        let s = lo * ratio.powi(i as i32);
        if g(s) > 0.0 {
            return Some((s, upper));
        }
        upper = s;
    }
    None
}

fn count_zero_residuals(residuals: &DVector<f64>, y: &DVector<f64>) -> usize {
    let magnitude = y.amax().max(f64::MIN_POSITIVE);
    residuals
        .iter()
        .filter(|e| e.abs() <= 64.0 * f64::EPSILON * magnitude)
        .count()
}

fn check_degenerate(residuals: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    let zeros = count_zero_residuals(residuals, y);
    if 2 * zeros > residuals.len() {
        return Err(RobkatError::Degenerate(format!(
            "{zeros} of {} residuals are exactly zero",
            residuals.len()
        )));
    }
    Ok(())
}

/// Fit the null model by IRLS M-estimation with Proposal 2 scale.
///
/// Starts from OLS and the normalized MAD of the OLS residuals, then
/// alternates a β-step and a scale step until both the fitted values (in
/// units of the scale) and the scale change by less than `opts.tol`.
/// Hitting `opts.max_iter` returns the last iterate with `converged = false`.
pub fn fit_null(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    loss: LossSpec,
    opts: &FitOptions,
) -> Result<NullFit> {
    let q = x.ncols();
    let mut beta = ols(y, x)?;
    let mut residuals = y - x * &beta;
    check_degenerate(&residuals, y)?;

    if loss == LossSpec::LeastSquares {
        let scale = proposal2_scale(residuals.as_slice(), &loss, q)?;
        return Ok(NullFit {
            beta_hat: beta,
            residuals,
            scale,
            iterations: 0,
            converged: true,
            loss,
        });
    }

    let mut scale = match mad_scale(residuals.as_slice()) {
        m if m > 0.0 => m,
        _ => proposal2_scale(residuals.as_slice(), &LossSpec::LeastSquares, q)?,
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let next_beta = irls_step(y, x, &beta, scale, &loss)?;
        let fit_change = (x * (&next_beta - &beta)).amax() / scale;
        beta = next_beta;
        residuals = y - x * &beta;
        let next_scale = proposal2_scale(residuals.as_slice(), &loss, q)?;
        let scale_change = (next_scale - scale).abs() / scale;
        scale = next_scale;
        if !beta.iter().all(|b| b.is_finite()) || !scale.is_finite() {
            return Err(RobkatError::Numerical("IRLS produced non-finite iterate".into()));
        }
        if fit_change.max(scale_change) < opts.tol {
            converged = true;
            break;
        }
    }
    check_degenerate(&residuals, y)?;
    Ok(NullFit {
        beta_hat: beta,
        residuals,
        scale,
        iterations,
        converged,
        loss,
    })
}

/// `w_i = ψ(ê_i / ŝ)`.
pub fn score_vector(fit: &NullFit) -> DVector<f64> {
    fit.residuals
        .map(|e| fit.loss.psi_unchecked(e / fit.scale))
}
