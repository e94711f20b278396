//! The auxiliary potential `ξ` with `ξ_x = −2 u_x u_y`, `ξ_y = K u_x² − u_y²`.
//!
//! Only the gradient and its path integrals are computed.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::{CharacteristicPath, Point};
use crate::grid::{diff, Deriv, GridField};
use crate::quadrature::pairwise_sum;
use crate::typechange::TypeChangeFn;

#[derive(Clone, Debug)]
pub struct XiGradient {
    pub gx: GridField,
    pub gy: GridField,
    pub ux: GridField,
    pub uy: GridField,
    pub k: TypeChangeFn,
}

pub fn build_xi_gradient(k: &TypeChangeFn, u: &GridField) -> Result<XiGradient> {
    let ux = diff(u, Deriv::X)?;
    let uy = diff(u, Deriv::Y)?;
    let gx = ux.zip(&uy, |a, b| -2.0 * a * b);
    let kx = u.grid().sample(|x, _| k.eval(x));
    let gy = ux.zip(&kx, |a, kv| kv * a * a).zip(&uy, |p, q| p - q * q);
    Ok(XiGradient { gx, gy, ux, uy, k: k.clone() })
}

impl XiGradient {
    fn at(&self, f: &GridField, p: Point) -> Result<f64> {
        let region = f.grid().region();
        let tol = 1e-9 * (1.0 + f.grid().h());
        if !region.contains(p, tol) {
            return Err(LabError::InvalidPath { x: p.x, y: p.y });
        }
        f.interpolate(p).ok_or(LabError::InvalidPath { x: p.x, y: p.y })
    }

    /// `diff(gx, y) − diff(gy, x)`; equals `−2 u_x L u` for the `K′/2` form.
    pub fn curl(&self) -> Result<GridField> {
        let a = diff(&self.gx, Deriv::Y)?;
        let b = diff(&self.gy, Deriv::X)?;
        Ok(a.zip(&b, |p, q| p - q))
    }
}

/// Trapezoid `∫ ξ_x dx + ξ_y dy` along a polyline.
pub fn integrate_xi(grad: &XiGradient, path: &[Point]) -> Result<f64> {
    if path.len() < 2 {
        return Ok(0.0);
    }
    let vals = path
        .iter()
        .map(|&p| Ok((grad.at(&grad.gx, p)?, grad.at(&grad.gy, p)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let terms: Vec<f64> = path
        .windows(2)
        .zip(vals.windows(2))
        .map(|(p, v)| 0.5 * ((v[0].0 + v[1].0) * (p[1].x - p[0].x) + (v[0].1 + v[1].1) * (p[1].y - p[0].y)))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `dξ/dy` along a characteristic computed from the gradient (form i) and
/// as `−(√(−K) u_x ± u_y)²` (form ii), per segment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    /// Largest positive form-(i) `dξ/dy`; 0 when `ξ` never increases with `y`.
    pub max_violation: f64,
    pub max_discrepancy: f64,
    pub y: Vec<f64>,
    pub form_i: Vec<f64>,
    pub form_ii: Vec<f64>,
}

pub fn characteristic_decay_check(grad: &XiGradient, path: &CharacteristicPath) -> Result<DecayReport> {
    let sigma = path.branch.sign();
    let v = &path.vertices;
    let mut rep = DecayReport { max_violation: 0.0, max_discrepancy: 0.0, y: vec![], form_i: vec![], form_ii: vec![] };
    let mut prev: Option<(Point, f64, f64, f64)> = None;
    for &p in v {
        let gx = grad.at(&grad.gx, p)?;
        let gy = grad.at(&grad.gy, p)?;
        let s = (-grad.k.eval(p.x)).max(0.0).sqrt();
        let sq = s * grad.at(&grad.ux, p)? + sigma * grad.at(&grad.uy, p)?;
        let ii = -sq * sq;
        if let Some((q, qgx, qgy, qii)) = prev {
            let dy = p.y - q.y;
            if dy != 0.0 {
                let fi = 0.5 * ((gx + qgx) * (p.x - q.x) + (gy + qgy) * dy) / dy;
                let fii = 0.5 * (ii + qii);
                rep.max_violation = rep.max_violation.max(fi);
                rep.max_discrepancy = rep.max_discrepancy.max((fi - fii).abs());
                rep.y.push(0.5 * (p.y + q.y));
                rep.form_i.push(fi);
                rep.form_ii.push(fii);
            }
        }
        prev = Some((p, gx, gy, ii));
    }
    Ok(rep)
}

/// `u_y` and `ξ_y` on the sonic column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SonicReport {
    pub ys: Vec<f64>,
    pub uy: Vec<f64>,
    pub xiy: Vec<f64>,
    pub max_uy: f64,
    pub max_xiy: f64,
}

pub fn sonic_line_report(grad: &XiGradient, u: &GridField) -> Result<SonicReport> {
    let g = u.grid();
    let col = g
        .zero_col()
        .ok_or_else(|| LabError::InvalidDomain("the sonic line is not a grid column".into()))?;
    let mut rep = SonicReport { ys: vec![], uy: vec![], xiy: vec![], max_uy: 0.0, max_xiy: 0.0 };
    for j in 0..g.ny() {
        let k = g.idx(col, j);
        if !g.class(k).is_inside() {
            continue;
        }
        if let (Some(a), Some(b)) = (grad.uy.get(k), grad.gy.get(k)) {
            rep.ys.push(g.y(j));
            rep.uy.push(a);
            rep.xiy.push(b);
            rep.max_uy = rep.max_uy.max(a.abs());
            rep.max_xiy = rep.max_xiy.max(b.abs());
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TestField;
    use crate::geometry::{build_domain, Rect, Region};
    use crate::grid::Grid;
    use crate::operators::{apply, OperatorSpec};
    use crate::typechange::make_power;
    use approx::assert_abs_diff_eq;

    fn lin() -> TypeChangeFn {
        make_power(1).unwrap()
    }

    fn domain_grid(n: usize) -> Grid {
        Grid::new(build_domain(&lin(), 0.0, 2.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn trivial_gradients() {
        let g = domain_grid(17);
        let c = build_xi_gradient(&lin(), &g.sample(|_, _| 3.0)).unwrap();
        assert_eq!(c.gx.max_abs_where(|_| true), 0.0);
        assert_eq!(c.gy.max_abs_where(|_| true), 0.0);
        let y = build_xi_gradient(&lin(), &g.sample(|_, y| y)).unwrap();
        assert!(y.gx.max_abs_where(|_| true) < 1e-14);
        assert!(y.gy.map(|v| v + 1.0).max_abs_where(|_| true) < 1e-13);
        let x = build_xi_gradient(&lin(), &g.sample(|x, _| x)).unwrap();
        assert!(x.gy.map_xy(|x, _, v| v - x).max_abs_where(|_| true) < 1e-13);
    }

    #[test]
    fn path_integrals() {
        let g = domain_grid(17);
        let grad = build_xi_gradient(&lin(), &g.sample(|_, y| y)).unwrap();
        let up = [Point::new(0.0, 0.0), Point::new(0.0, 0.5), Point::new(0.0, 1.0)];
        assert_abs_diff_eq!(integrate_xi(&grad, &up).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(integrate_xi(&grad, &[Point::new(0.2, 0.2)]).unwrap(), 0.0);
        let out = [Point::new(0.0, 0.0), Point::new(1.5, 0.0)];
        assert!(matches!(integrate_xi(&grad, &out), Err(LabError::InvalidPath { .. })));
    }

    #[test]
    fn curl_matches_operator_identity() {
        let r: Region = Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap().into();
        let err = |n: usize| {
            let g = Grid::new(r.clone(), n).unwrap();
            let u = TestField::exp_cos().sample(&g);
            let curl = build_xi_gradient(&lin(), &u).unwrap().curl().unwrap();
            let lu = apply(&OperatorSpec::loword(&lin()), &u).unwrap();
            let ux = diff(&u, Deriv::X).unwrap();
            let d = curl.zip(&lu.zip(&ux, |a, b| -2.0 * a * b), |p, q| p - q);
            let (nx, ny) = (g.nx(), g.ny());
            d.max_abs_where(|k| {
                let (i, j) = g.ij(k);
                (2..nx - 2).contains(&i) && (2..ny - 2).contains(&j)
            })
        };
        let (e1, e2) = (err(33), err(65));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn forms_agree_along_both_characteristics() {
        let dom = build_domain(&lin(), 0.0, 2.0, 1.0).unwrap();
        let gap = |n: usize, path: &CharacteristicPath| {
            let g = Grid::new(dom.clone(), n).unwrap();
            let grad = build_xi_gradient(&lin(), &TestField::wave().sample(&g)).unwrap();
            let r = characteristic_decay_check(&grad, path).unwrap();
            assert!(r.form_ii.iter().all(|&v| v <= 0.0));
            r.max_discrepancy
        };
        for path in [&dom.gamma1, &dom.gamma2] {
            let (e1, e2, e3) = (gap(33, path), gap(65, path), gap(129, path));
            assert!((e2 / e3).log2() > 1.8, "{e1} {e2} {e3}");
        }
    }

    #[test]
    fn constant_field_has_flat_xi() {
        let dom = build_domain(&lin(), 0.0, 2.0, 1.0).unwrap();
        let g = Grid::new(dom.clone(), 17).unwrap();
        let grad = build_xi_gradient(&lin(), &g.sample(|_, _| 1.0)).unwrap();
        let r = characteristic_decay_check(&grad, &dom.gamma2).unwrap();
        assert_eq!(r.max_violation, 0.0);
        assert_eq!(r.max_discrepancy, 0.0);
    }

    #[test]
    fn sonic_report_for_y() {
        let g = domain_grid(17);
        let u = g.sample(|_, y| y);
        let r = sonic_line_report(&build_xi_gradient(&lin(), &u).unwrap(), &u).unwrap();
        assert_eq!(r.ys.len(), 17);
        assert!(r.uy.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(r.xiy.iter().all(|&v| (v + 1.0).abs() < 1e-12));
        let z = GridField::zeros(&g);
        let r = sonic_line_report(&build_xi_gradient(&lin(), &z).unwrap(), &z).unwrap();
        assert_eq!((r.max_uy, r.max_xiy), (0.0, 0.0));
    }
}
