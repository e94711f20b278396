//! Type-change functions `K(x)`.
//!
//! The sign of `K` decides the local type of the equation: elliptic where
//! `K > 0`, hyperbolic where `K < 0`, with the degeneracy (sonic line) at
//! `x = 0`. An admissible `K` satisfies `K(0) = 0` and `x K(x) > 0` for
//! `x != 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Smoothness class of a type-change function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    C2,
    C1,
    PiecewiseConstant,
}

#[derive(Clone)]
enum Kind {
    Power(u32),
    Sgn,
    Custom {
        eval: ScalarFn,
        deriv1: ScalarFn,
        deriv2: Option<ScalarFn>,
    },
}

/// A type-change function together with its first two derivatives.
///
/// Derivatives are `None` where they do not exist (for `sgn` at the origin).
#[derive(Clone)]
pub struct TypeChangeFn {
    kind: Kind,
    regularity: Regularity,
    monotone_hyperbolic: bool,
    label: String,
}

impl fmt::Debug for TypeChangeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TypeChangeFn")
            .field("label", &self.label)
            .field("regularity", &self.regularity)
            .field("monotone_hyperbolic", &self.monotone_hyperbolic)
            .finish()
    }
}

impl fmt::Display for TypeChangeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// `K(x) = x^(2 k0 - 1)`.
pub fn make_power(k0: u32) -> Result<TypeChangeFn> {
    if k0 < 1 {
        return Err(LabError::InvalidParameter(format!(
            "power exponent index k0 must be >= 1, got {k0}"
        )));
    }
    Ok(TypeChangeFn {
        kind: Kind::Power(2 * k0 - 1),
        regularity: Regularity::C2,
        monotone_hyperbolic: true,
        label: if k0 == 1 {
            "x".to_string()
        } else {
            format!("x^{}", 2 * k0 - 1)
        },
    })
}

/// `K(x) = sgn(x)`, with `sgn(0) = 0`.
pub fn make_sgn() -> TypeChangeFn {
    TypeChangeFn {
        kind: Kind::Sgn,
        regularity: Regularity::PiecewiseConstant,
        monotone_hyperbolic: true,
        label: "sgn".to_string(),
    }
}

impl TypeChangeFn {
    /// Wraps user closures. Conditions are not checked here; use [`validate`].
    pub fn custom<E, D1, D2>(
        label: impl Into<String>,
        eval: E,
        deriv1: D1,
        deriv2: Option<D2>,
        regularity: Regularity,
        monotone_hyperbolic: bool,
    ) -> Self
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        TypeChangeFn {
            kind: Kind::Custom {
                eval: Arc::new(eval),
                deriv1: Arc::new(deriv1),
                deriv2: deriv2.map(|d| Arc::new(d) as ScalarFn),
            },
            regularity,
            monotone_hyperbolic,
            label: label.into(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => x.powi(*p as i32),
            Kind::Sgn => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Kind::Custom { eval, .. } => eval(x),
        }
    }

    /// `K'(x)`; `None` where undefined.
    pub fn deriv1(&self, x: f64) -> Option<f64> {
        match &self.kind {
            Kind::Power(1) => Some(1.0),
            Kind::Power(p) => Some(*p as f64 * x.powi(*p as i32 - 1)),
            Kind::Sgn => (x != 0.0).then_some(0.0),
            Kind::Custom { deriv1, .. } => {
                if self.regularity == Regularity::PiecewiseConstant && x == 0.0 {
                    None
                } else {
                    Some(deriv1(x))
                }
            }
        }
    }

    /// `K''(x)`; `None` where undefined.
    pub fn deriv2(&self, x: f64) -> Option<f64> {
        match &self.kind {
            Kind::Power(1) => Some(0.0),
            Kind::Power(p) => {
                let p = *p as f64;
                Some(p * (p - 1.0) * x.powi(p as i32 - 2))
            }
            Kind::Sgn => (x != 0.0).then_some(0.0),
            Kind::Custom { deriv2, .. } => match deriv2 {
                Some(d) if !(self.regularity != Regularity::C2 && x == 0.0) => Some(d(x)),
                _ => None,
            },
        }
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn monotone_hyperbolic(&self) -> bool {
        self.monotone_hyperbolic
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Odd exponent `p` when this is `x^p`.
    pub fn power_exponent(&self) -> Option<u32> {
        match self.kind {
            Kind::Power(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, Kind::Power(1))
    }

    pub fn is_sgn(&self) -> bool {
        matches!(self.kind, Kind::Sgn)
    }
}

impl FromStr for TypeChangeFn {
    type Err = LabError;

    /// Parses `power:<k0>` or `sgn`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("sgn") {
            return Ok(make_sgn());
        }
        if let Some(rest) = s.strip_prefix("power:") {
            let k0: u32 = rest.trim().parse().map_err(|_| {
                LabError::InvalidParameter(format!("bad power index in {s:?}"))
            })?;
            return make_power(k0);
        }
        Err(LabError::InvalidParameter(format!(
            "unknown type-change function {s:?} (expected power:<k0> or sgn)"
        )))
    }
}

/// Structural condition that a sample violated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `K(0) = 0`.
    VanishesAtOrigin,
    /// `x K(x) > 0` for `x != 0`.
    SignCondition,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    pub x: f64,
}

/// Non-fatal observations about an admissible function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "flag", rename_all = "kebab-case")]
pub enum Flag {
    NotC1,
    NonMonotoneHyperbolic { x: f64 },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub flags: Vec<Flag>,
}

impl ValidationReport {
    pub fn admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

const ORIGIN_TOL: f64 = 1e-12;

/// Samples `K` at `n` equispaced points of `[xmin, xmax]` (plus the origin)
/// and reports violated conditions.
pub fn validate(k: &TypeChangeFn, xmin: f64, xmax: f64, n: usize) -> Result<ValidationReport> {
    if !(xmin < 0.0 && 0.0 < xmax) {
        return Err(LabError::InvalidParameter(format!(
            "sample interval [{xmin}, {xmax}] must contain the origin in its interior"
        )));
    }
    if n < 3 {
        return Err(LabError::InvalidParameter(format!("need at least 3 samples, got {n}")));
    }
    let mut report = ValidationReport::default();

    if k.eval(0.0).abs() > ORIGIN_TOL {
        report.violations.push(Violation {
            condition: Condition::VanishesAtOrigin,
            x: 0.0,
        });
    }

    let h = (xmax - xmin) / (n - 1) as f64;
    let mut prev_neg: Option<(f64, f64)> = None;
    let mut non_monotone = None;
    for i in 0..n {
        let x = if i == n - 1 { xmax } else { xmin + i as f64 * h };
        if x == 0.0 {
            continue;
        }
        let kx = k.eval(x);
        if !(x * kx > 0.0) {
            report.violations.push(Violation {
                condition: Condition::SignCondition,
                x,
            });
        }
        if x < 0.0 {
            if let Some((_, kp)) = prev_neg {
                if kx < kp && non_monotone.is_none() {
                    non_monotone = Some(x);
                }
            }
            prev_neg = Some((x, kx));
        }
    }

    if k.regularity() == Regularity::PiecewiseConstant {
        report.flags.push(Flag::NotC1);
    }
    if let Some(x) = non_monotone {
        report.flags.push(Flag::NonMonotoneHyperbolic { x });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_power() {
        let k = make_power(1).unwrap();
        assert_eq!(k.eval(0.0), 0.0);
        assert_eq!(k.eval(0.3), 0.3);
        assert_eq!(k.deriv1(-2.0), Some(1.0));
        assert_eq!(k.deriv2(5.0), Some(0.0));
        assert_eq!(k.regularity(), Regularity::C2);
    }

    #[test]
    fn cubic_power() {
        let k = make_power(2).unwrap();
        assert_eq!(k.eval(-0.5), -0.125);
        assert_eq!(k.deriv1(-0.5), Some(0.75));
        assert_eq!(k.deriv2(-0.5), Some(-3.0));
    }

    #[test]
    fn zero_index_rejected() {
        assert!(matches!(make_power(0), Err(LabError::InvalidParameter(_))));
    }

    #[test]
    fn sign_function() {
        let k = make_sgn();
        assert_eq!(k.eval(2.0), 1.0);
        assert_eq!(k.eval(0.0), 0.0);
        assert_eq!(k.eval(-3.0), -1.0);
        assert_eq!(k.deriv1(0.0), None);
        assert_eq!(k.deriv1(0.1), Some(0.0));
        assert_eq!(k.regularity(), Regularity::PiecewiseConstant);
    }

    #[test]
    fn validate_linear_is_admissible() {
        let r = validate(&make_power(1).unwrap(), -1.0, 1.0, 101).unwrap();
        assert!(r.admissible());
        assert!(r.flags.is_empty());
    }

    #[test]
    fn validate_square_fails_sign_condition() {
        let k = TypeChangeFn::custom(
            "x^2",
            |x| x * x,
            |x| 2.0 * x,
            Some(|_x: f64| 2.0),
            Regularity::C2,
            false,
        );
        let r = validate(&k, -1.0, 1.0, 101).unwrap();
        assert!(!r.admissible());
        assert!(r
            .violations
            .iter()
            .all(|v| v.condition == Condition::SignCondition && v.x < 0.0));
        assert_eq!(r.violations.len(), 50);
    }

    #[test]
    fn validate_sgn_flags_non_c1() {
        let r = validate(&make_sgn(), -1.0, 1.0, 101).unwrap();
        assert!(r.admissible());
        assert_eq!(r.flags, vec![Flag::NotC1]);
    }

    #[test]
    fn validate_flags_non_monotone_without_rejecting() {
        // x (1 + 0.9 sin(8x)) keeps the sign condition but wiggles on x < 0
        let k = TypeChangeFn::custom(
            "wiggle",
            |x| x * (1.0 + 0.9 * (8.0 * x).sin()),
            |x| 1.0 + 0.9 * (8.0 * x).sin() + 7.2 * x * (8.0 * x).cos(),
            None::<fn(f64) -> f64>,
            Regularity::C1,
            false,
        );
        let r = validate(&k, -1.0, 1.0, 201).unwrap();
        assert!(r.admissible());
        assert!(matches!(r.flags[0], Flag::NonMonotoneHyperbolic { .. }));
    }

    #[test]
    fn offset_origin_violates() {
        let k = TypeChangeFn::custom(
            "x+1e-6",
            |x| x + 1e-6,
            |_| 1.0,
            Some(|_x: f64| 0.0),
            Regularity::C2,
            true,
        );
        let r = validate(&k, -1.0, 1.0, 11).unwrap();
        assert_eq!(r.violations[0].condition, Condition::VanishesAtOrigin);
    }

    #[test]
    fn validate_rejects_bad_arguments() {
        let k = make_power(1).unwrap();
        assert!(validate(&k, 0.1, 1.0, 11).is_err());
        assert!(validate(&k, -1.0, 1.0, 2).is_err());
    }

    #[test]
    fn parse() {
        assert_eq!("power:2".parse::<TypeChangeFn>().unwrap().power_exponent(), Some(3));
        assert!("sgn".parse::<TypeChangeFn>().unwrap().is_sgn());
        assert!("cosh".parse::<TypeChangeFn>().is_err());
    }

    proptest! {
        #[test]
        fn power_sign_pattern(k0 in 1u32..5, x in -2.0f64..2.0) {
            let k = make_power(k0).unwrap();
            prop_assume!(x.abs() > 1e-3);
            prop_assert!(x * k.eval(x) > 0.0);
        }

        #[test]
        fn power_derivative_matches_centered_difference(k0 in 1u32..4, x in -1.5f64..1.5) {
            let h = 1e-3;
            prop_assume!(x.abs() > h);
            let k = make_power(k0).unwrap();
            let fd = (k.eval(x + h) - k.eval(x - h)) / (2.0 * h);
            let exact = k.deriv1(x).unwrap();
            // K''' is bounded by 135 on this range for k0 <= 3
            prop_assert!((fd - exact).abs() <= 135.0 * h * h / 6.0 + 1e-12);
        }
    }
}
