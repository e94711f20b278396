//! The Keldysh operator family on grid fields.
//!
//! Every member has the shape `K(x) u_xx + c(x) u_x + u_yy`; the forms differ
//! only in the first-order coefficient `c`.

use crate::abc::Multiplier;
use crate::error::{LabError, Result};
use crate::geometry::Side;
use crate::grid::{diff, Deriv, GridField};
use crate::typechange::{make_power, TypeChangeFn};

/// First-order coefficient of the operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Form {
    /// `K′/2`.
    Loword,
    /// The constant `κ`, with `K(x) = x`.
    Kappa(f64),
    /// `k K′`.
    General(f64),
}

#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub k: TypeChangeFn,
    pub form: Form,
}

impl OperatorSpec {
    /// `K u_xx + K′/2 u_x + u_yy`.
    pub fn loword(k: &TypeChangeFn) -> OperatorSpec {
        OperatorSpec { k: k.clone(), form: Form::Loword }
    }

    /// `x u_xx + κ u_x + u_yy` with `κ ∈ [0, 3/2]`.
    pub fn kappa(kappa: f64) -> Result<OperatorSpec> {
        if !(0.0..=1.5).contains(&kappa) {
            return Err(LabError::InvalidParameter(format!("κ must lie in [0, 3/2], got {kappa}")));
        }
        Ok(OperatorSpec { k: make_power(1)?, form: Form::Kappa(kappa) })
    }

    /// `K u_xx + k K′ u_x + u_yy`.
    pub fn general(k: &TypeChangeFn, kk: f64) -> Result<OperatorSpec> {
        if !kk.is_finite() {
            return Err(LabError::InvalidParameter(format!("k must be finite, got {kk}")));
        }
        Ok(OperatorSpec { k: k.clone(), form: Form::General(kk) })
    }

    /// The `k` in `k K′ u_x`; for the κ form `K′ ≡ 1`, so `k = κ`.
    pub fn k_value(&self) -> f64 {
        match self.form {
            Form::Loword => 0.5,
            Form::Kappa(kappa) => kappa,
            Form::General(k) => k,
        }
    }

    /// Coefficient of `u_x` at `x`; `None` where `K′` is undefined.
    pub fn first_order_coeff(&self, x: f64) -> Option<f64> {
        match self.form {
            Form::Kappa(kappa) => Some(kappa),
            Form::Loword => self.k.deriv1(x).map(|d| 0.5 * d),
            Form::General(k) => {
                if k == 0.0 {
                    Some(0.0)
                } else {
                    self.k.deriv1(x).map(|d| k * d)
                }
            }
        }
    }

    /// Formal adjoint, for the members whose adjoint stays in the family.
    pub fn adjoint(&self) -> Result<OperatorSpec> {
        match self.form {
            Form::Kappa(kappa) => OperatorSpec::kappa(2.0 - kappa),
            Form::General(k) if k == 1.0 => Ok(self.clone()),
            _ => Err(LabError::InvalidParameter(
                "adjoint leaves the operator family; only κ forms and k = 1 are supported".into(),
            )),
        }
    }
}

/// Node-wise `K u_xx + c u_x + u_yy`. Nodes where `c` is undefined come back undefined.
pub fn apply(spec: &OperatorSpec, u: &GridField) -> Result<GridField> {
    let uxx = diff(u, Deriv::XX)?;
    let ux = diff(u, Deriv::X)?;
    let uyy = diff(u, Deriv::YY)?;
    let g = u.grid();
    let mut out = GridField::zeros(g);
    for k in 0..g.len() {
        let x = g.point(k).x;
        match (uxx.get(k), ux.get(k), uyy.get(k), spec.first_order_coeff(x)) {
            (Some(a), Some(b), Some(c), Some(coef)) => out.set(k, spec.k.eval(x) * a + coef * b + c),
            _ => out.undefine(k),
        }
    }
    Ok(out)
}

/// `x u_xx + (2 − κ) u_x + u_yy`.
pub fn apply_adjoint(kappa: f64, u: &GridField) -> Result<GridField> {
    apply(&OperatorSpec::kappa(kappa)?.adjoint()?, u)
}

/// `a u + b u_x + c u_y`, with `b` taken from the side of each node.
pub fn apply_multiplier(ms: &dyn Multiplier, u: &GridField) -> Result<GridField> {
    let ux = diff(u, Deriv::X)?;
    let uy = diff(u, Deriv::Y)?;
    let g = u.grid();
    let mut out = GridField::zeros(g);
    for k in 0..g.len() {
        let p = g.point(k);
        match (u.get(k), ux.get(k), uy.get(k)) {
            (Some(v), Some(dx), Some(dy)) => {
                out.set(k, ms.a() * v + ms.b(p.x, p.y, Side::of(p.x)) * dx + ms.c(p.y) * dy)
            }
            _ => out.undefine(k),
        }
    }
    Ok(out)
}

/// `∂_y(−2u_xu_y) − ∂_x(K u_x² − u_y²) + 2 u_x L u` with `L` in the `K′/2` form.
///
/// Vanishes identically in the continuum, for every `u`.
pub fn divergence_identity_residual(k: &TypeChangeFn, u: &GridField) -> Result<GridField> {
    let ux = diff(u, Deriv::X)?;
    let uy = diff(u, Deriv::Y)?;
    let gx = ux.zip(&uy, |a, b| -2.0 * a * b);
    let kx = u.grid().sample(|x, _| k.eval(x));
    let gy = ux.zip(&kx, |a, kv| kv * a * a).zip(&uy, |p, q| p - q * q);
    let lu = apply(&OperatorSpec::loword(k), u)?;
    let a = diff(&gx, Deriv::Y)?;
    let b = diff(&gy, Deriv::X)?;
    let c = ux.zip(&lu, |p, q| 2.0 * p * q);
    Ok(a.zip(&b, |p, q| p - q).zip(&c, |p, q| p + q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::LinearMultiplier;
    use crate::geometry::{build_domain, Rect};
    use crate::grid::Grid;
    use crate::typechange::make_sgn;
    use proptest::prelude::*;

    fn square() -> Grid {
        Grid::new(Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap(), 17).unwrap()
    }

    fn max_defined(f: &GridField) -> f64 {
        f.max_abs_where(|_| true)
    }

    #[test]
    fn kappa_on_xy_is_exact() {
        let g = square();
        let u = g.sample(|x, y| x * y);
        let lu = apply(&OperatorSpec::kappa(0.7).unwrap(), &u).unwrap();
        let err = lu.map_xy(|_, y, v| v - 0.7 * y);
        assert!(max_defined(&err) < 1e-12);
    }

    #[test]
    fn kappa_on_quadratic_is_exact() {
        let g = square();
        let u = g.sample(|x, y| x * x + y * y);
        let kappa = 1.25;
        let lu = apply(&OperatorSpec::kappa(kappa).unwrap(), &u).unwrap();
        let err = lu.map_xy(|x, _, v| v - (2.0 + 2.0 * (1.0 + kappa) * x));
        assert!(max_defined(&err) < 1e-11);
    }

    #[test]
    fn constants_are_annihilated() {
        let g = square();
        let lu = apply(&OperatorSpec::loword(&make_power(2).unwrap()), &g.sample(|_, _| 4.0)).unwrap();
        assert!(max_defined(&lu) < 1e-12);
    }

    #[test]
    fn kappa_out_of_range_rejected() {
        assert!(OperatorSpec::kappa(1.6).is_err());
        assert!(OperatorSpec::kappa(-0.1).is_err());
    }

    #[test]
    fn adjoint_relations() {
        let g = square();
        let u = g.sample(|x, y| (x + 0.3 * y).sin() * y.exp());
        let a = apply(&OperatorSpec::kappa(1.0).unwrap(), &u).unwrap();
        let b = apply_adjoint(1.0, &u).unwrap();
        assert_eq!(a.values(), b.values());
        let a = apply_adjoint(1.5, &u).unwrap();
        let b = apply(&OperatorSpec::loword(&make_power(1).unwrap()), &u).unwrap();
        assert!(max_defined(&a.zip(&b, |p, q| p - q)) < 1e-12);
        let xy = apply_adjoint(1.5, &g.sample(|x, y| x * y)).unwrap();
        assert!(max_defined(&xy.map_xy(|_, y, v| v - 0.5 * y)) < 1e-12);
    }

    #[test]
    fn sgn_sonic_column_is_excluded() {
        let g = square();
        let lu = apply(&OperatorSpec::loword(&make_sgn()), &g.sample(|x, y| x * x + y)).unwrap();
        let z = g.zero_col().unwrap();
        assert!(!lu.is_defined(g.idx(z, 5)));
        // off the sonic line: sgn(x) * 2
        assert!((lu.at(z + 3, 5) - 2.0).abs() < 1e-12);
        assert!((lu.at(z - 3, 5) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn multiplier_pieces() {
        let g = square();
        let u = g.sample(|x, y| x + 2.0 * y + 1.0);
        let m = LinearMultiplier { a: -1.0, b: [0.0, 0.0, 0.0], c: [0.0, 0.0] };
        let mu = apply_multiplier(&m, &u).unwrap();
        assert!(max_defined(&mu.zip(&u, |p, q| p + q)) < 1e-14);
        let m = LinearMultiplier { a: 0.0, b: [1.0, 0.0, 0.0], c: [0.0, 1.0] };
        let mu = apply_multiplier(&m, &u).unwrap();
        // u_x + y u_y
        assert!(max_defined(&mu.map_xy(|_, y, v| v - (1.0 + 2.0 * y))) < 1e-12);
    }

    fn adjoint_gap(n: usize, kappa: f64) -> f64 {
        let g = Grid::new(Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap(), n).unwrap();
        let bump = |cx: f64, cy: f64| {
            move |x: f64, y: f64| {
                let r2 = ((x - cx) / 0.5).powi(2) + ((y - cy) / 0.5).powi(2);
                if r2 < 1.0 { (1.0 - r2).powi(4) } else { 0.0 }
            }
        };
        let u = g.sample(bump(0.1, 0.0));
        let v = g.sample(bump(-0.1, 0.2));
        let lu = apply(&OperatorSpec::kappa(kappa).unwrap(), &u).unwrap();
        let lsv = apply_adjoint(kappa, &v).unwrap();
        let h2 = g.hx() * g.hy();
        let s1: f64 = lu.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let s2: f64 = u.values().iter().zip(lsv.values()).map(|(a, b)| a * b).sum();
        (s1 - s2).abs() * h2
    }

    #[test]
    fn discrete_adjoint_duality_is_exact() {
        // summation by parts holds exactly for these stencils on compact support
        for n in [33, 65] {
            let e = adjoint_gap(n, 1.25);
            assert!(e < 1e-13, "{n}: {e}");
        }
    }

    fn identity_residual(n: usize) -> f64 {
        let dom = build_domain(&make_power(1).unwrap(), 0.0, 2.0, 1.0).unwrap();
        let g = Grid::new(dom, n).unwrap();
        let u = g.sample(|x, y| x * x * y);
        let r = divergence_identity_residual(&make_power(1).unwrap(), &u).unwrap();
        r.max_abs_inside()
    }

    #[test]
    fn divergence_identity_converges() {
        let (e1, e2) = (identity_residual(33), identity_residual(65));
        assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
    }

    #[test]
    fn divergence_identity_exact_for_constants() {
        let r = divergence_identity_residual(&make_power(1).unwrap(), &square().sample(|_, _| 2.0)).unwrap();
        assert_eq!(max_defined(&r), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn operator_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, kappa in 0.0f64..1.5) {
            let g = square();
            let u = g.sample(|x, y| (x * y).sin());
            let v = g.sample(|x, y| x.exp() * y);
            let spec = OperatorSpec::kappa(kappa).unwrap();
            let lhs = apply(&spec, &u.zip(&v, |p, q| a * p + b * q)).unwrap();
            let rhs = apply(&spec, &u).unwrap().zip(&apply(&spec, &v).unwrap(), |p, q| a * p + b * q);
            prop_assert!(max_defined(&lhs.zip(&rhs, |p, q| p - q)) < 1e-9);
        }
    }
}
