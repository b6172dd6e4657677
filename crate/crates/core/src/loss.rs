//! Loss families ρ, their derivatives ψ, IRLS weights, and the standard-normal
//! expectation of ψ² used by Huber's Proposal 2 scale.
//!
//! Every function here works on *standardized* residuals `x = e / s`.

use crate::error::{Result, RobkatError};
use crate::quad;
use std::fmt;
use std::str::FromStr;

/// Default Huber constant (95% efficiency under normal errors).
pub const HUBER_K: f64 = 1.345;
/// Default Hampel constants `(a, b, r)`.
pub const HAMPEL_ABR: (f64, f64, f64) = (1.353, 3.157, 7.216);
/// Default Tukey bisquare constant.
pub const BISQUARE_K: f64 = 4.685;

/// Lower bound on `|x|` in the LAD IRLS weight `0.5 / |x|`.
///
/// Residuals are standardized, so this equals a floor of `1e-8 * scale` on the
/// raw residual.
pub const LAD_WEIGHT_FLOOR: f64 = 1e-8;

/// Absolute tolerance for ψ² expectations that need quadrature.
pub const EXPECTATION_TOL: f64 = 1e-10;

// Beyond this the standard normal density is below 1e-300.
const NORMAL_SUPPORT: f64 = 38.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossFamily {
    LeastSquares,
    Lad,
    Huber,
    Hampel,
    Bisquare,
}

impl LossFamily {
    pub fn name(self) -> &'static str {
        match self {
            LossFamily::LeastSquares => "ls",
            LossFamily::Lad => "lad",
            LossFamily::Huber => "huber",
            LossFamily::Hampel => "hampel",
            LossFamily::Bisquare => "bisquare",
        }
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = RobkatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ls" | "least-squares" | "leastsquares" | "skat" => Ok(LossFamily::LeastSquares),
            "lad" | "qrkm" => Ok(LossFamily::Lad),
            "huber" => Ok(LossFamily::Huber),
            "hampel" => Ok(LossFamily::Hampel),
            "bisquare" | "tukey" => Ok(LossFamily::Bisquare),
            other => Err(RobkatError::Input(format!("unknown loss family `{other}`"))),
        }
    }
}

/// A loss family together with its tuning constants.
///
/// Construct through the validating constructors; the fields of a value are
/// always consistent (positive constants, `a < b < r` for Hampel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    LeastSquares,
    /// Check loss at the median, `ρ(x) = |x| / 2`.
    Lad,
    Huber { k: f64 },
    Hampel { a: f64, b: f64, r: f64 },
    Bisquare { k: f64 },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(RobkatError::Domain(format!(
            "tuning constant {name} must be positive and finite, got {v}"
        )))
    }
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(RobkatError::Domain(format!("non-finite residual {x}")))
    }
}

impl LossSpec {
    pub fn huber(k: f64) -> Result<Self> {
        Ok(LossSpec::Huber { k: positive("k", k)? })
    }

    pub fn hampel(a: f64, b: f64, r: f64) -> Result<Self> {
        let (a, b, r) = (positive("a", a)?, positive("b", b)?, positive("r", r)?);
        if !(a < b && b < r) {
            return Err(RobkatError::Domain(format!(
                "Hampel constants need a < b < r, got ({a}, {b}, {r})"
            )));
        }
        Ok(LossSpec::Hampel { a, b, r })
    }

    pub fn bisquare(k: f64) -> Result<Self> {
        Ok(LossSpec::Bisquare { k: positive("k", k)? })
    }

    /// The family with its default tuning constants.
    pub fn default_for(family: LossFamily) -> Self {
        match family {
            LossFamily::LeastSquares => LossSpec::LeastSquares,
            LossFamily::Lad => LossSpec::Lad,
            LossFamily::Huber => LossSpec::Huber { k: HUBER_K },
            LossFamily::Hampel => {
                let (a, b, r) = HAMPEL_ABR;
                LossSpec::Hampel { a, b, r }
            }
            LossFamily::Bisquare => LossSpec::Bisquare { k: BISQUARE_K },
        }
    }

    /// Build from a family and an optional list of tuning constants.
    ///
    /// An empty list selects the defaults. LS and LAD take no constants.
    pub fn from_parts(family: LossFamily, tuning: &[f64]) -> Result<Self> {
        let arity_err = |want: usize| {
            RobkatError::Input(format!(
                "loss `{family}` takes {want} tuning constant(s), got {}",
                tuning.len()
            ))
        };
        if tuning.is_empty() {
            return Ok(Self::default_for(family));
        }
        match family {
            LossFamily::LeastSquares | LossFamily::Lad => Err(arity_err(0)),
            LossFamily::Huber => match tuning {
                [k] => Self::huber(*k),
                _ => Err(arity_err(1)),
            },
            LossFamily::Hampel => match tuning {
                [a, b, r] => Self::hampel(*a, *b, *r),
                _ => Err(arity_err(3)),
            },
            LossFamily::Bisquare => match tuning {
                [k] => Self::bisquare(*k),
                _ => Err(arity_err(1)),
            },
        }
    }

    /// Parse a family name plus a comma-separated tuning string (may be empty).
    pub fn parse(family: &str, tuning: Option<&str>) -> Result<Self> {
        let family: LossFamily = family.parse()?;
        let constants = match tuning.map(str::trim).filter(|t| !t.is_empty()) {
            None => Vec::new(),
            Some(t) => t
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| RobkatError::Input(format!("bad tuning constant `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Self::from_parts(family, &constants)
    }

    pub fn family(&self) -> LossFamily {
        match self {
            LossSpec::LeastSquares => LossFamily::LeastSquares,
            LossSpec::Lad => LossFamily::Lad,
            LossSpec::Huber { .. } => LossFamily::Huber,
            LossSpec::Hampel { .. } => LossFamily::Hampel,
            LossSpec::Bisquare { .. } => LossFamily::Bisquare,
        }
    }

    /// Tuning constants in canonical order (empty for LS/LAD).
    pub fn tuning(&self) -> Vec<f64> {
        match *self {
            LossSpec::LeastSquares | LossSpec::Lad => Vec::new(),
            LossSpec::Huber { k } | LossSpec::Bisquare { k } => vec![k],
            LossSpec::Hampel { a, b, r } => vec![a, b, r],
        }
    }

    /// Whether ψ is non-decreasing. False for the redescending families,
    /// for which the test may lose power.
    pub fn monotone_psi(&self) -> bool {
        !matches!(self, LossSpec::Hampel { .. } | LossSpec::Bisquare { .. })
    }

    /// `sup |ψ|`, or `None` when ψ is unbounded.
    pub fn psi_bound(&self) -> Option<f64> {
        match *self {
            LossSpec::LeastSquares => None,
            LossSpec::Lad => Some(0.5),
            LossSpec::Huber { k } => Some(k),
            LossSpec::Hampel { a, .. } => Some(a),
            // maximum of x(1 - x²/k²)² is at x = k/√5
            LossSpec::Bisquare { k } => Some(k * 16.0 / (25.0 * 5f64.sqrt())),
        }
    }

    /// Points where ρ is not twice differentiable (non-negative half line).
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            LossSpec::LeastSquares => Vec::new(),
            LossSpec::Lad => vec![0.0],
            LossSpec::Huber { k } | LossSpec::Bisquare { k } => vec![k],
            LossSpec::Hampel { a, b, r } => vec![a, b, r],
        }
    }

    /// The loss ρ(x).
    pub fn rho(&self, x: f64) -> Result<f64> {
        let x = finite(x)?;
        let t = x.abs();
        Ok(match *self {
            LossSpec::LeastSquares => 0.5 * x * x,
            LossSpec::Lad => 0.5 * t,
            LossSpec::Huber { k } => {
                if t <= k {
                    0.5 * x * x
                } else {
                    k * (t - 0.5 * k)
                }
            }
            LossSpec::Hampel { a, b, r } => {
                let plateau_start = a * b - 0.5 * a * a;
                if t <= a {
                    0.5 * x * x
                } else if t <= b {
                    a * t - 0.5 * a * a
                } else if t <= r {
                    let u = (r - t) / (r - b);
                    plateau_start + 0.5 * a * (r - b) * (1.0 - u * u)
                } else {
                    plateau_start + 0.5 * a * (r - b)
                }
            }
            LossSpec::Bisquare { k } => {
                let c = k * k / 6.0;
                if t <= k {
                    let u = 1.0 - (x / k) * (x / k);
                    c * (1.0 - u * u * u)
                } else {
                    c
                }
            }
        })
    }

    /// ψ = ρ'. For LAD the subgradient at 0 is fixed to 0.
    pub fn psi(&self, x: f64) -> Result<f64> {
        finite(x)?;
        Ok(self.psi_unchecked(x))
    }

    #[inline]
    pub(crate) fn psi_unchecked(&self, x: f64) -> f64 {
        let t = x.abs();
        match *self {
            LossSpec::LeastSquares => x,
            LossSpec::Lad => {
                if x > 0.0 {
                    0.5
                } else if x < 0.0 {
                    -0.5
                } else {
                    0.0
                }
            }
            LossSpec::Huber { k } => x.clamp(-k, k),
            LossSpec::Hampel { a, b, r } => {
                if t <= a {
                    x
                } else if t <= b {
                    a * x.signum()
                } else if t <= r {
                    a * x.signum() * (r - t) / (r - b)
                } else {
                    0.0
                }
            }
            LossSpec::Bisquare { k } => {
                if t <= k {
                    let u = 1.0 - (x / k) * (x / k);
                    x * u * u
                } else {
                    0.0
                }
            }
        }
    }

    /// IRLS weight ψ(x)/x, with the analytic limit at 0.
    pub fn psi_weight(&self, x: f64) -> Result<f64> {
        finite(x)?;
        Ok(self.psi_weight_unchecked(x))
    }

    #[inline]
    pub(crate) fn psi_weight_unchecked(&self, x: f64) -> f64 {
        let t = x.abs();
        match *self {
            LossSpec::LeastSquares => 1.0,
            LossSpec::Lad => 0.5 / t.max(LAD_WEIGHT_FLOOR),
            LossSpec::Huber { k } => {
                if t <= k {
                    1.0
                } else {
                    k / t
                }
            }
            LossSpec::Hampel { a, b, r } => {
                if t <= a {
                    1.0
                } else if t <= b {
                    a / t
                } else if t <= r {
                    a * (r - t) / ((r - b) * t)
                } else {
                    0.0
                }
            }
            LossSpec::Bisquare { k } => {
                if t <= k {
                    let u = 1.0 - (x / k) * (x / k);
                    u * u
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[ψ(ε)²]` for `ε ~ N(0, 1)`.
    ///
    /// Closed forms for LS, LAD and Huber; adaptive quadrature (absolute
    /// tolerance [`EXPECTATION_TOL`]) for the redescending families.
    pub fn expected_psi_sq(&self) -> Result<f64> {
        match *self {
            LossSpec::LeastSquares => Ok(1.0),
            LossSpec::Lad => Ok(0.25),
            LossSpec::Huber { k } => {
                // ∫_{|x|<=k} x²φ + k² P(|x|>k)
                let tail = quad::normal_sf(k);
                Ok((1.0 - 2.0 * tail) - 2.0 * k * quad::normal_pdf(k) + 2.0 * k * k * tail)
            }
            LossSpec::Hampel { .. } | LossSpec::Bisquare { .. } => {
                self.expected_psi_sq_quadrature(EXPECTATION_TOL)
            }
        }
    }

    /// Quadrature route for `E[ψ²]`, available for every family.
    pub fn expected_psi_sq_quadrature(&self, tol: f64) -> Result<f64> {
        let mut breaks = vec![0.0];
        breaks.extend(self.kinks().into_iter().filter(|&k| k > 0.0 && k < NORMAL_SUPPORT));
        breaks.push(NORMAL_SUPPORT);
        // ψ² is even: integrate the positive half and double.
        let half = quad::integrate_pieces(
            |x| {
                let p = self.psi_unchecked(x);
                p * p * quad::normal_pdf(x)
            },
            &breaks,
            0.5 * tol,
        )?;
        Ok(2.0 * half)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.family().name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_losses() -> Vec<LossSpec> {
        [
            LossFamily::LeastSquares,
            LossFamily::Lad,
            LossFamily::Huber,
            LossFamily::Hampel,
            LossFamily::Bisquare,
        ]
        .into_iter()
        .map(LossSpec::default_for)
        .collect()
    }

    fn grid() -> impl Iterator<Item = f64> {
        (-1000..=1000).map(|i| i as f64 * 0.01)
    }

    #[test]
    fn huber_rho_examples() {
        let h = LossSpec::huber(1.345).unwrap();
        assert_eq!(h.rho(1.0).unwrap(), 0.5);
        // k(|x| - k/2) = 1.345 * (2 - 0.6725)
        assert!((h.rho(2.0).unwrap() - 1.785_487_5).abs() < 1e-12);
        assert!((h.rho(2.0).unwrap() - 1.78549).abs() < 1e-5);
    }

    #[test]
    fn rho_vanishes_at_zero() {
        for l in all_losses() {
            assert_eq!(l.rho(0.0).unwrap(), 0.0, "{l:?}");
            assert_eq!(l.psi(0.0).unwrap(), 0.0, "{l:?}");
        }
    }

    #[test]
    fn psi_examples() {
        let h = LossSpec::huber(1.345).unwrap();
        assert_eq!(h.psi(0.5).unwrap(), 0.5);
        assert_eq!(h.psi(10.0).unwrap(), 1.345);
        assert_eq!(LossSpec::Lad.psi(2.0).unwrap(), 0.5);
        assert_eq!(LossSpec::Lad.psi(-1.0).unwrap(), -0.5);
        assert_eq!(LossSpec::bisquare(4.685).unwrap().psi(5.0).unwrap(), 0.0);
        let hp = LossSpec::default_for(LossFamily::Hampel);
        assert_eq!(hp.psi(2.0).unwrap(), 1.353);
        assert!((hp.psi(-5.1865).unwrap() + 1.353 * (7.216 - 5.1865) / (7.216 - 3.157)).abs() < 1e-15);
        assert_eq!(hp.psi(8.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_is_odd_and_rho_even() {
        for l in all_losses() {
            for x in grid() {
                assert_eq!(l.psi(-x).unwrap(), -l.psi(x).unwrap());
                assert_eq!(l.rho(-x).unwrap(), l.rho(x).unwrap());
                assert!(l.rho(x).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(LossSpec::LeastSquares.psi_weight(-3.7).unwrap(), 1.0);
        let h = LossSpec::huber(1.345).unwrap();
        assert_eq!(h.psi_weight(0.0).unwrap(), 1.0);
        assert!((h.psi_weight(2.69).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(LossSpec::Lad.psi_weight(0.0).unwrap(), 0.5 / LAD_WEIGHT_FLOOR);
        for l in all_losses() {
            assert_eq!(l.psi_weight(0.0).unwrap() > 0.0, true);
        }
    }

    #[test]
    fn weight_times_x_is_psi() {
        for l in all_losses() {
            for x in grid().filter(|x| x.abs() > LAD_WEIGHT_FLOOR) {
                let lhs = l.psi_weight(x).unwrap() * x;
                assert!((lhs - l.psi(x).unwrap()).abs() < 1e-12, "{l:?} at {x}");
                assert!(l.psi_weight(x).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn monotone_families_have_nondecreasing_psi() {
        for l in all_losses().into_iter().filter(LossSpec::monotone_psi) {
            let values: Vec<f64> = grid().map(|x| l.psi(x).unwrap()).collect();
            assert!(values.windows(2).all(|w| w[0] <= w[1]), "{l:?}");
        }
        assert!(!LossSpec::default_for(LossFamily::Hampel).monotone_psi());
        assert!(!LossSpec::default_for(LossFamily::Bisquare).monotone_psi());
    }

    #[test]
    fn convex_families_satisfy_midpoint_convexity() {
        for l in all_losses().into_iter().filter(LossSpec::monotone_psi) {
            for x in grid().step_by(7) {
                for y in grid().step_by(11) {
                    let mid = l.rho(0.5 * (x + y)).unwrap();
                    let avg = 0.5 * (l.rho(x).unwrap() + l.rho(y).unwrap());
                    assert!(mid <= avg + 1e-12, "{l:?} at ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn psi_matches_central_difference_of_rho() {
        let h = 1e-5;
        for l in all_losses() {
            let kinks = l.kinks();
            for x in grid() {
                if kinks.iter().any(|k| (x.abs() - k).abs() < 1e-3) {
                    continue;
                }
                let fd = (l.rho(x + h).unwrap() - l.rho(x - h).unwrap()) / (2.0 * h);
                assert!((fd - l.psi(x).unwrap()).abs() < 1e-6, "{l:?} at {x}: {fd}");
            }
        }
    }

    #[test]
    fn psi_bound_holds() {
        for l in all_losses() {
            if let Some(bound) = l.psi_bound() {
                for x in grid() {
                    assert!(l.psi(x).unwrap().abs() <= bound + 1e-12);
                }
            }
        }
    }

    #[test]
    fn expectation_examples() {
        assert_eq!(LossSpec::LeastSquares.expected_psi_sq().unwrap(), 1.0);
        assert_eq!(LossSpec::Lad.expected_psi_sq().unwrap(), 0.25);
        // reference value from independent quadrature of min(|x|, k)² φ(x)
        let h = LossSpec::huber(1.345).unwrap().expected_psi_sq().unwrap();
        assert!((h - 0.710_164_548_269).abs() < 1e-10, "{h}");
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        for l in all_losses() {
            let q = l.expected_psi_sq_quadrature(1e-12).unwrap();
            let e = l.expected_psi_sq().unwrap();
            assert!((q - e).abs() < 1e-10, "{l:?}: {q} vs {e}");
        }
    }

    #[test]
    fn non_finite_input_is_domain_error() {
        let h = LossSpec::default_for(LossFamily::Huber);
        assert!(matches!(h.rho(f64::NAN), Err(RobkatError::Domain(_))));
        assert!(matches!(h.psi(f64::INFINITY), Err(RobkatError::Domain(_))));
        assert!(h.psi_weight(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn constructor_validation() {
        assert!(LossSpec::huber(0.0).is_err());
        assert!(LossSpec::huber(-1.0).is_err());
        assert!(LossSpec::hampel(2.0, 1.0, 3.0).is_err());
        assert!(LossSpec::hampel(1.0, 2.0, 2.0).is_err());
        assert!(LossSpec::bisquare(f64::NAN).is_err());
        assert_eq!(
            LossSpec::parse("hampel", Some("1,2,3")).unwrap(),
            LossSpec::Hampel { a: 1.0, b: 2.0, r: 3.0 }
        );
        assert_eq!(LossSpec::parse("HUBER", None).unwrap(), LossSpec::Huber { k: 1.345 });
        assert!(LossSpec::parse("huber", Some("1,2")).is_err());
        assert!(LossSpec::parse("lad", Some("0.3")).is_err());
        assert!(LossSpec::parse("cauchy", None).is_err());
    }
}
