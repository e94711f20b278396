//! Area and boundary quadrature.
//!
//! Area integrals use the cut-cell weights of the grid, kept separately for
//! the two sides of the sonic line. Boundary integrals run the trapezoid rule
//! along the oriented polylines of the region.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::{Point, Region, Side};
use crate::grid::GridField;

/// Which part of the region an area integral covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AreaPart {
    /// `x >= 0`.
    OmegaPlus,
    /// `x < 0`.
    OmegaMinus,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    /// Richardson estimate from the next coarser level; 0 when no coarser level exists.
    pub estimated_error: f64,
}

/// Pairwise summation, fixed order.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn weighted_sum(weights: &[f64], fld: &GridField) -> f64 {
    let terms: Vec<f64> = weights
        .iter()
        .zip(fld.values())
        .zip(fld.defined())
        .map(|((&w, &v), &d)| if w != 0.0 && d { w * v } else { 0.0 })
        .collect();
    pairwise_sum(&terms)
}

fn area_value(fld: &GridField, part: AreaPart) -> f64 {
    let g = fld.grid();
    match part {
        AreaPart::OmegaPlus => weighted_sum(g.weights(Side::Plus), fld),
        AreaPart::OmegaMinus => weighted_sum(g.weights(Side::Minus), fld),
        AreaPart::All => weighted_sum(g.weights(Side::Plus), fld) + weighted_sum(g.weights(Side::Minus), fld),
    }
}

/// Every other node of `fld` on the coarsened grid.
fn coarse_copy(fld: &GridField) -> Option<GridField> {
    let g = fld.grid();
    let c = g.coarsen()?;
    let mut values = Vec::with_capacity(c.len());
    let mut defined = Vec::with_capacity(c.len());
    for j in 0..c.ny() {
        for i in 0..c.nx() {
            let k = g.idx(2 * i, 2 * j);
            values.push(fld.values()[k]);
            defined.push(fld.defined()[k]);
        }
    }
    GridField::from_parts(&c, values, defined).ok()
}

/// Integral of the bilinear interpolant of `fld` over a part of the region.
///
/// Nodes flagged undefined contribute nothing.
pub fn integrate_area(fld: &GridField, part: AreaPart) -> QuadratureResult {
    let value = area_value(fld, part);
    let estimated_error = coarse_copy(fld).map_or(0.0, |c| (value - area_value(&c, part)).abs() / 3.0);
    QuadratureResult { value, estimated_error }
}

/// Integral of a field that takes different values on the two sides of the
/// cut: `plus` over `x >= 0`, `minus` over `x < 0`.
pub fn integrate_area_split(plus: &GridField, minus: &GridField) -> QuadratureResult {
    let a = integrate_area(plus, AreaPart::OmegaPlus);
    let b = integrate_area(minus, AreaPart::OmegaMinus);
    QuadratureResult { value: a.value + b.value, estimated_error: a.estimated_error + b.estimated_error }
}

fn check_closed(region: &Region) -> Result<()> {
    let arcs = region.arcs();
    if arcs.is_empty() {
        return Err(LabError::InvalidDomain("region has no boundary".into()));
    }
    let tol = 1e-9 * (1.0 + region.bbox().width().max(region.bbox().height()));
    for (i, arc) in arcs.iter().enumerate() {
        let next = &arcs[(i + 1) % arcs.len()];
        let (Some(end), Some(start)) = (arc.vertices.last(), next.vertices.first()) else {
            return Err(LabError::InvalidDomain(format!("arc {:?} is empty", arc.name)));
        };
        if end.dist(*start) > tol {
            return Err(LabError::InvalidDomain(format!(
                "boundary is open between {:?} and {:?}",
                arc.name, next.name
            )));
        }
    }
    Ok(())
}

/// Trapezoid `∫ P dx + Q dy` along a polyline, using every `stride`-th vertex.
pub(crate) fn line_integral(
    vertices: &[Point],
    stride: usize,
    p: &impl Fn(Point) -> f64,
    q: &impl Fn(Point) -> f64,
) -> f64 {
    if vertices.len() < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..vertices.len()).step_by(stride).collect();
    if *idx.last().unwrap() != vertices.len() - 1 {
        idx.push(vertices.len() - 1);
    }
    let terms: Vec<f64> = idx
        .windows(2)
        .map(|w| {
            let (a, b) = (vertices[w[0]], vertices[w[1]]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            0.5 * ((p(a) + p(b)) * dx + (q(a) + q(b)) * dy)
        })
        .collect();
    pairwise_sum(&terms)
}

/// `∮ P dx + Q dy` over the counter-clockwise boundary of `region`.
pub fn integrate_boundary(
    p: impl Fn(Point) -> f64,
    q: impl Fn(Point) -> f64,
    region: &Region,
) -> Result<QuadratureResult> {
    check_closed(region)?;
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for arc in region.arcs() {
        fine += line_integral(&arc.vertices, 1, &p, &q);
        coarse += line_integral(&arc.vertices, 2, &p, &q);
    }
    Ok(QuadratureResult { value: fine, estimated_error: (fine - coarse).abs() / 3.0 })
}

/// Net contribution of the cut along `x = 0`: upward with `Minus` values
/// (closing `Ω⁻`) plus downward with `Plus` values (closing `Ω⁺`).
///
/// Zero for any `P`, `Q` continuous across the cut; 0 when the region does
/// not reach both sides.
pub fn cut_contribution(
    p: impl Fn(Point, Side) -> f64,
    q: impl Fn(Point, Side) -> f64,
    region: &Region,
) -> f64 {
    let bb = region.bbox();
    if !(bb.x0 < 0.0 && 0.0 < bb.x1) {
        return 0.0;
    }
    let n = 2048;
    let up: Vec<Point> = (0..=n)
        .map(|i| Point::new(0.0, bb.y0 + (bb.y1 - bb.y0) * i as f64 / n as f64))
        .collect();
    let down: Vec<Point> = up.iter().rev().copied().collect();
    let minus = line_integral(&up, 1, &|pt| p(pt, Side::Minus), &|pt| q(pt, Side::Minus));
    let plus = line_integral(&down, 1, &|pt| p(pt, Side::Plus), &|pt| q(pt, Side::Plus));
    minus + plus
}

/// Boundary integral with the y-axis cut: the outer boundary uses the side
/// of each point, and the cut is traversed once from each side.
pub fn integrate_boundary_cut(
    p: impl Fn(Point, Side) -> f64,
    q: impl Fn(Point, Side) -> f64,
    region: &Region,
) -> Result<QuadratureResult> {
    let outer = integrate_boundary(|pt| p(pt, Side::of(pt.x)), |pt| q(pt, Side::of(pt.x)), region)?;
    let cut = cut_contribution(&p, &q, region);
    Ok(QuadratureResult { value: outer.value + cut, estimated_error: outer.estimated_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, Rect};
    use crate::grid::Grid;
    use crate::typechange::make_power;
    use approx::assert_abs_diff_eq;

    fn domain() -> Region {
        build_domain(&make_power(1).unwrap(), 0.0, 2.0, 1.0).unwrap().into()
    }

    #[test]
    fn rectangle_area() {
        let g = Grid::new(Rect::new(0.0, 1.0, -2.0, 2.0).unwrap(), 17).unwrap();
        let r = integrate_area(&g.sample(|_, _| 1.0), AreaPart::All);
        assert_abs_diff_eq!(r.value, 4.0, epsilon = 1e-12);
        assert!(r.estimated_error < 1e-12);
    }

    #[test]
    fn mixed_domain_area_splits_at_the_cut() {
        let g = Grid::new(domain(), 33).unwrap();
        let one = g.sample(|_, _| 1.0);
        let plus = integrate_area(&one, AreaPart::OmegaPlus).value;
        let minus = integrate_area(&one, AreaPart::OmegaMinus).value;
        assert_abs_diff_eq!(plus, 4.0, epsilon = 1e-12);
        // ∫ (1 - |y|/2)^2 dy over [-2, 2]
        assert_abs_diff_eq!(minus, 4.0 / 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(integrate_area(&one, AreaPart::All).value, 16.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn linear_integrand_exact() {
        let g = Grid::new(Rect::unit_square(), 9).unwrap();
        assert_abs_diff_eq!(integrate_area(&g.sample(|x, _| x), AreaPart::All).value, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn green_area_on_square_and_domain() {
        let sq: Region = Rect::unit_square().into();
        let r = integrate_boundary(|_| 0.0, |p| p.x, &sq).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-12);
        let r = integrate_boundary(|p| -p.y / 2.0, |p| p.x / 2.0, &domain()).unwrap();
        assert_abs_diff_eq!(r.value, 16.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn cut_cancels_for_continuous_integrands() {
        let c = cut_contribution(|p, _| p.y.sin(), |p, _| p.y * p.y + 1.0, &domain());
        assert!(c.abs() < 1e-13, "{c}");
        let jump = cut_contribution(|_, _| 0.0, |_, s| if s == Side::Plus { 1.0 } else { 0.0 }, &domain());
        assert_abs_diff_eq!(jump, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn green_identity_converges_on_the_domain() {
        let region = domain();
        let p = |pt: Point| (pt.x * pt.y).sin();
        let q = |pt: Point| pt.x * pt.x * pt.y.exp();
        let lhs = integrate_boundary(p, q, &region).unwrap().value;
        let gap = |n: usize| {
            let g = Grid::new(region.clone(), n).unwrap();
            let curl = g.sample(|x, y| 2.0 * x * y.exp() - x * (x * y).cos());
            (lhs - integrate_area(&curl, AreaPart::All).value).abs()
        };
        let (e1, e2) = (gap(33), gap(65));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_abs_diff_eq!(pairwise_sum(&v), v.iter().sum::<f64>(), epsilon = 1e-10);
    }
}
