//! Tensor grids over a region, grid fields, and finite differences.
//!
//! Grids cover the bounding box of their region. When the box straddles the
//! sonic line, `x = 0` is placed exactly on a node column, so no cell ever
//! straddles it. Fields carry a per-node `defined` flag: analytic samples are
//! defined everywhere, solver output only on the active nodes.

use std::sync::{Arc, OnceLock};

use crate::error::{LabError, Result};
use crate::geometry::{Point, PointClass, Rect, Region, Side};

/// Which derivative [`diff`] computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deriv {
    X,
    Y,
    XX,
    YY,
    XY,
}

#[derive(Debug)]
struct GridInner {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    x0: f64,
    y0: f64,
    zero_col: Option<usize>,
    region: Region,
    classes: Vec<PointClass>,
    weights_plus: Vec<f64>,
    weights_minus: Vec<f64>,
    coarse: OnceLock<Option<Grid>>,
}

/// A tensor grid laid over a region. Cheap to clone.
#[derive(Clone, Debug)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl Grid {
    /// Grid with roughly `n` nodes across each direction of the bounding box.
    ///
    /// The right edge, both horizontal edges and (if present) the sonic line
    /// fall on node lines.
    pub fn new(region: impl Into<Region>, n: usize) -> Result<Grid> {
        let region = region.into();
        if n < 3 {
            return Err(LabError::InvalidParameter(format!("grid needs n >= 3, got {n}")));
        }
        let bb = region.bbox();
        let hy = bb.height() / (n - 1) as f64;
        let (nx, hx, x0, zero_col) = if bb.x0 < 0.0 && 0.0 < bb.x1 {
            let target = bb.width() / (n - 1) as f64;
            let n_plus = ((bb.x1 / target).round() as usize).max(1);
            let hx = bb.x1 / n_plus as f64;
            let n_minus = ((-bb.x0 / hx - 1e-9).ceil() as usize).max(1);
            (n_minus + n_plus + 1, hx, -(n_minus as f64) * hx, Some(n_minus))
        } else {
            let zero = if bb.x0 == 0.0 { Some(0) } else if bb.x1 == 0.0 { Some(n - 1) } else { None };
            (n, bb.width() / (n - 1) as f64, bb.x0, zero)
        };
        Ok(Self::build(region, nx, n, hx, hy, x0, bb.y0, zero_col))
    }

    /// Grid with explicit geometry over a plain rectangle (used when reading dumps).
    pub fn with_geometry(nx: usize, ny: usize, hx: f64, hy: f64, x0: f64, y0: f64) -> Result<Grid> {
        if nx < 2 || ny < 2 || !(hx > 0.0) || !(hy > 0.0) {
            return Err(LabError::InvalidParameter("bad grid geometry".into()));
        }
        let rect = Rect::new(x0, x0 + (nx - 1) as f64 * hx, y0, y0 + (ny - 1) as f64 * hy)?;
        let zc = (-x0 / hx).round();
        let zero_col = (zc >= 0.0 && zc < nx as f64 && (x0 + zc * hx).abs() < 1e-9 * hx).then_some(zc as usize);
        Ok(Self::build(rect.into(), nx, ny, hx, hy, x0, y0, zero_col))
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        region: Region,
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
        x0: f64,
        y0: f64,
        zero_col: Option<usize>,
    ) -> Grid {
        let mut g = GridInner {
            nx,
            ny,
            hx,
            hy,
            x0,
            y0,
            zero_col,
            region,
            classes: Vec::new(),
            weights_plus: vec![0.0; nx * ny],
            weights_minus: vec![0.0; nx * ny],
            coarse: OnceLock::new(),
        };
        let bb = g.region.bbox();
        let tol = 1e-9 * (1.0 + bb.width().max(bb.height()));
        let xs: Vec<f64> = (0..nx).map(|i| node_x(&g, i)).collect();
        let ys: Vec<f64> = (0..ny).map(|j| node_y(&g, j)).collect();
        g.classes = (0..nx * ny)
            .map(|k| g.region.classify(Point::new(xs[k % nx], ys[k / nx]), tol))
            .collect();

        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let cell = Rect { x0: xs[i], x1: xs[i + 1], y0: ys[j], y1: ys[j + 1] };
                let mo = g.region.cell_moments(&cell);
                if mo.m00 <= 0.0 {
                    continue;
                }
                let (ch, cw) = (hy, hx);
                let i_xi = (mo.m10 - cell.x0 * mo.m00) / cw;
                let i_eta = (mo.m01 - cell.y0 * mo.m00) / ch;
                let i_xieta =
                    (mo.m11 - cell.x0 * mo.m01 - cell.y0 * mo.m10 + cell.x0 * cell.y0 * mo.m00) / (cw * ch);
                let w00 = mo.m00 - i_xi - i_eta + i_xieta;
                let w10 = i_xi - i_xieta;
                let w01 = i_eta - i_xieta;
                let w11 = i_xieta;
                let side = if 0.5 * (cell.x0 + cell.x1) >= 0.0 { Side::Plus } else { Side::Minus };
                let w = match side {
                    Side::Plus => &mut g.weights_plus,
                    Side::Minus => &mut g.weights_minus,
                };
                w[j * nx + i] += w00;
                w[j * nx + i + 1] += w10;
                w[(j + 1) * nx + i] += w01;
                w[(j + 1) * nx + i + 1] += w11;
            }
        }
        Grid { inner: Arc::new(g) }
    }

    pub fn nx(&self) -> usize {
        self.inner.nx
    }
    pub fn ny(&self) -> usize {
        self.inner.ny
    }
    pub fn hx(&self) -> f64 {
        self.inner.hx
    }
    pub fn hy(&self) -> f64 {
        self.inner.hy
    }
    pub fn origin(&self) -> (f64, f64) {
        (self.inner.x0, self.inner.y0)
    }
    pub fn len(&self) -> usize {
        self.inner.nx * self.inner.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn region(&self) -> &Region {
        &self.inner.region
    }
    /// Column index of the sonic line, if the grid contains it.
    pub fn zero_col(&self) -> Option<usize> {
        self.inner.zero_col
    }
    /// Largest spacing.
    pub fn h(&self) -> f64 {
        self.inner.hx.max(self.inner.hy)
    }

    pub fn x(&self, i: usize) -> f64 {
        node_x(&self.inner, i)
    }
    pub fn y(&self, j: usize) -> f64 {
        node_y(&self.inner, j)
    }
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.inner.nx + i
    }
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.inner.nx, k / self.inner.nx)
    }
    pub fn point(&self, k: usize) -> Point {
        let (i, j) = self.ij(k);
        Point::new(self.x(i), self.y(j))
    }
    pub fn class(&self, k: usize) -> PointClass {
        self.inner.classes[k]
    }
    pub fn classes(&self) -> &[PointClass] {
        &self.inner.classes
    }

    /// Cut-cell quadrature weights of each node for one side of the sonic line.
    pub fn weights(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.inner.weights_plus,
            Side::Minus => &self.inner.weights_minus,
        }
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> GridField {
        let values = (0..self.len()).map(|k| {
            let p = self.point(k);
            f(p.x, p.y)
        });
        GridField { grid: self.clone(), values: values.collect(), defined: vec![true; self.len()] }
    }

    /// Samples a side-dependent `f`; nodes on the sonic line use `side`.
    pub fn sample_sided(&self, side: Side, f: impl Fn(f64, f64, Side) -> f64) -> GridField {
        self.sample(|x, y| {
            let s = if x == 0.0 { side } else { Side::of(x) };
            f(x, y, s)
        })
    }

    /// Every other node, when the structure allows it.
    pub fn coarsen(&self) -> Option<Grid> {
        self.inner
            .coarse
            .get_or_init(|| {
                let g = &self.inner;
                if (g.nx - 1) % 2 != 0 || (g.ny - 1) % 2 != 0 || g.nx < 5 || g.ny < 5 {
                    return None;
                }
                if g.zero_col.is_some_and(|z| z % 2 != 0) {
                    return None;
                }
                Some(Grid::build(
                    g.region.clone(),
                    (g.nx - 1) / 2 + 1,
                    (g.ny - 1) / 2 + 1,
                    2.0 * g.hx,
                    2.0 * g.hy,
                    g.x0,
                    g.y0,
                    g.zero_col.map(|z| z / 2),
                ))
            })
            .clone()
    }
}

fn node_x(g: &GridInner, i: usize) -> f64 {
    match g.zero_col {
        Some(z) => (i as f64 - z as f64) * g.hx,
        None => g.x0 + i as f64 * g.hx,
    }
}

fn node_y(g: &GridInner, j: usize) -> f64 {
    if j == g.ny - 1 {
        // land exactly on the top edge
        let bb = g.region.bbox();
        if (g.y0 + j as f64 * g.hy - bb.y1).abs() < 1e-9 * g.hy {
            return bb.y1;
        }
    }
    g.y0 + j as f64 * g.hy
}

/// Scalar values on a grid, with a per-node validity flag.
#[derive(Clone, Debug)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl GridField {
    pub fn zeros(grid: &Grid) -> GridField {
        GridField { grid: grid.clone(), values: vec![0.0; grid.len()], defined: vec![true; grid.len()] }
    }

    pub fn from_parts(grid: &Grid, values: Vec<f64>, defined: Vec<bool>) -> Result<GridField> {
        if values.len() != grid.len() || defined.len() != grid.len() {
            return Err(LabError::InvalidParameter(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid: grid.clone(), values, defined })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn defined(&self) -> &[bool] {
        &self.defined
    }
    pub fn is_defined(&self, k: usize) -> bool {
        self.defined[k]
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }
    pub fn get(&self, k: usize) -> Option<f64> {
        self.defined[k].then(|| self.values[k])
    }
    pub fn set(&mut self, k: usize, v: f64) {
        self.values[k] = v;
        self.defined[k] = true;
    }
    pub fn undefine(&mut self, k: usize) {
        self.defined[k] = false;
    }

    /// Node-wise map; undefined nodes stay undefined.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            defined: self.defined.clone(),
        }
    }

    /// Node-wise map with coordinates.
    pub fn map_xy(&self, f: impl Fn(f64, f64, f64) -> f64) -> GridField {
        let values = (0..self.grid.len())
            .map(|k| {
                let p = self.grid.point(k);
                f(p.x, p.y, self.values[k])
            })
            .collect();
        GridField { grid: self.grid.clone(), values, defined: self.defined.clone() }
    }

    /// Combines two fields on the same grid; defined where both are.
    pub fn zip(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        debug_assert_eq!(self.grid.len(), other.grid.len());
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            defined: self.defined.iter().zip(&other.defined).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map(|v| s * v)
    }

    /// Max `|v|` over defined nodes accepted by `keep`.
    pub fn max_abs_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        (0..self.values.len())
            .filter(|&k| self.defined[k] && keep(k))
            .map(|k| self.values[k].abs())
            .fold(0.0, f64::max)
    }

    /// Max `|v|` over defined nodes inside the region.
    pub fn max_abs_inside(&self) -> f64 {
        self.max_abs_where(|k| self.grid.class(k).is_inside())
    }

    /// Bilinear interpolation; `None` if a corner is undefined or `p` is off the grid.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        let (ks, w) = self.cell_weights(p)?;
        if ks.iter().any(|&k| !self.defined[k]) {
            return None;
        }
        Some(ks.iter().zip(&w).map(|(&k, c)| c * self.values[k]).sum())
    }

    fn cell_weights(&self, p: Point) -> Option<([usize; 4], [f64; 4])> {
        let g = &self.grid;
        let (x0, y0) = (g.x(0), g.y(0));
        let fx = (p.x - x0) / g.hx();
        let fy = (p.y - y0) / g.hy();
        let slack = 1e-9;
        if fx < -slack || fy < -slack || fx > (g.nx() - 1) as f64 + slack || fy > (g.ny() - 1) as f64 + slack {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(g.nx() - 2);
        let j = (fy.floor().max(0.0) as usize).min(g.ny() - 2);
        let tx = ((p.x - g.x(i)) / g.hx()).clamp(0.0, 1.0);
        let ty = ((p.y - g.y(j)) / g.hy()).clamp(0.0, 1.0);
        let k00 = g.idx(i, j);
        let ks = [k00, k00 + 1, k00 + g.nx(), k00 + g.nx() + 1];
        Some((ks, [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty]))
    }

    /// Copy with nodes strictly on the other side of the sonic line undefined.
    pub fn restrict_to_side(&self, side: Side) -> GridField {
        let mut out = self.clone();
        for k in 0..out.values.len() {
            let x = self.grid.point(k).x;
            let drop = match side {
                Side::Plus => x < 0.0,
                Side::Minus => x > 0.0,
            };
            if drop {
                out.defined[k] = false;
            }
        }
        out
    }
}

/// Finite-difference derivative of a field.
///
/// Centered second-order stencils where both neighbours are defined,
/// second-order one-sided stencils otherwise; nodes without enough defined
/// neighbours come back undefined.
pub fn diff(fld: &GridField, which: Deriv) -> Result<GridField> {
    let g = fld.grid();
    if g.nx() < 3 || g.ny() < 3 {
        return Err(LabError::InvalidParameter(format!(
            "finite differences need at least 3x3 nodes, got {}x{}",
            g.nx(),
            g.ny()
        )));
    }
    match which {
        Deriv::X => Ok(diff_axis(fld, true, false)),
        Deriv::Y => Ok(diff_axis(fld, false, false)),
        Deriv::XX => Ok(diff_axis(fld, true, true)),
        Deriv::YY => Ok(diff_axis(fld, false, true)),
        Deriv::XY => Ok(diff_axis(&diff_axis(fld, true, false), false, false)),
    }
}

/// Derivative using only values from one side of the sonic line; the result
/// is meaningful on that side, including the sonic column.
pub fn diff_sided(fld: &GridField, which: Deriv, side: Side) -> Result<GridField> {
    diff(&fld.restrict_to_side(side), which)
}

fn diff_axis(fld: &GridField, along_x: bool, second: bool) -> GridField {
    let g = fld.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (n_along, h, stride) = if along_x { (nx, g.hx(), 1isize) } else { (ny, g.hy(), nx as isize) };
    let v = fld.values();
    let def = fld.defined();
    let mut out = vec![0.0; nx * ny];
    let mut out_def = vec![false; nx * ny];
    for k in 0..nx * ny {
        if !def[k] {
            continue;
        }
        let (i, j) = g.ij(k);
        let pos = if along_x { i } else { j };
        let at = |off: isize| -> Option<f64> {
            let p = pos as isize + off;
            if p < 0 || p >= n_along as isize {
                return None;
            }
            let kk = (k as isize + off * stride) as usize;
            def[kk].then(|| v[kk])
        };
        let u0 = v[k];
        let r = if second {
            match (at(-1), at(1)) {
                (Some(um), Some(up)) => Some((up - 2.0 * u0 + um) / (h * h)),
                _ => match (at(1), at(2), at(3)) {
                    (Some(u1), Some(u2), Some(u3)) => Some((2.0 * u0 - 5.0 * u1 + 4.0 * u2 - u3) / (h * h)),
                    _ => match (at(-1), at(-2), at(-3)) {
                        (Some(u1), Some(u2), Some(u3)) => {
                            Some((2.0 * u0 - 5.0 * u1 + 4.0 * u2 - u3) / (h * h))
                        }
                        _ => None,
                    },
                },
            }
        } else {
            match (at(-1), at(1)) {
                (Some(um), Some(up)) => Some((up - um) / (2.0 * h)),
                _ => match (at(1), at(2)) {
                    (Some(u1), Some(u2)) => Some((-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h)),
                    _ => match (at(-1), at(-2)) {
                        (Some(u1), Some(u2)) => Some((3.0 * u0 - 4.0 * u1 + u2) / (2.0 * h)),
                        _ => None,
                    },
                },
            }
        };
        if let Some(r) = r {
            out[k] = r;
            out_def[k] = true;
        }
    }
    GridField { grid: g.clone(), values: out, defined: out_def }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_domain;
    use crate::typechange::make_power;

    fn unit() -> Grid {
        Grid::new(Rect::unit_square(), 11).unwrap()
    }

    #[test]
    fn sonic_line_is_a_node_column() {
        let dom = build_domain(&make_power(1).unwrap(), 0.0, 2.0, 1.0).unwrap();
        let g = Grid::new(dom, 33).unwrap();
        let z = g.zero_col().unwrap();
        assert_eq!(g.x(z), 0.0);
        assert_eq!(g.nx(), 33);
        assert_eq!(g.x(g.nx() - 1), 1.0);
        assert_eq!(g.y(g.ny() - 1), 2.0);
    }

    #[test]
    fn second_derivative_exact_on_quadratics() {
        let f = unit().sample(|x, _| x * x);
        let d = diff(&f, Deriv::XX).unwrap();
        assert!(d.values().iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn derivatives_of_constants_vanish() {
        let f = unit().sample(|_, _| 3.5);
        for w in [Deriv::X, Deriv::Y, Deriv::XX, Deriv::YY, Deriv::XY] {
            let d = diff(&f, w).unwrap();
            assert!(d.values().iter().all(|v| v.abs() < 1e-10), "{w:?}");
        }
    }

    #[test]
    fn first_derivative_second_order() {
        let err = |n: usize| {
            let g = Grid::new(Rect::unit_square(), n).unwrap();
            let d = diff(&g.sample(|x, _| x.sin()), Deriv::X).unwrap();
            (d.at(0, 0) - 1.0).abs()
        };
        let ratio = err(17) / err(33);
        assert!(ratio > 3.5, "{ratio}");
    }

    #[test]
    fn mixed_partials_commute() {
        let err = |n: usize| {
            let g = Grid::new(Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap(), n).unwrap();
            let f = g.sample(|x, y| (x * y).sin() + x.exp() * y * y);
            let a = diff(&diff(&f, Deriv::X).unwrap(), Deriv::Y).unwrap();
            let b = diff(&diff(&f, Deriv::Y).unwrap(), Deriv::X).unwrap();
            a.zip(&b, |p, q| p - q).max_abs_where(|_| true)
        };
        // the one-sided and centered stencils are tensor products, so they commute exactly
        assert!(err(17) < 1e-10 && err(33) < 1e-10);
    }

    #[test]
    fn too_small_field_rejected() {
        let g = Grid::with_geometry(2, 5, 0.1, 0.1, 0.0, 0.0).unwrap();
        assert!(matches!(diff(&GridField::zeros(&g), Deriv::X), Err(LabError::InvalidParameter(_))));
    }

    #[test]
    fn undefined_neighbours_fall_back_to_one_sided() {
        let g = unit();
        let mut f = g.sample(|x, y| x * x + y);
        for j in 0..g.ny() {
            f.undefine(g.idx(0, j));
        }
        let d = diff(&f, Deriv::X).unwrap();
        assert!(!d.is_defined(g.idx(0, 3)));
        assert!((d.at(1, 3) - 2.0 * g.x(1)).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let f = unit().sample(|x, y| 1.0 + 2.0 * x - y + 3.0 * x * y);
        let v = f.interpolate(Point::new(0.37, 0.81)).unwrap();
        assert!((v - (1.0 + 0.74 - 0.81 + 3.0 * 0.37 * 0.81)).abs() < 1e-12);
        assert!(f.interpolate(Point::new(1.5, 0.5)).is_none());
    }

    #[test]
    fn sided_difference_at_sonic_column() {
        let g = Grid::new(Rect::new(-1.0, 1.0, 0.0, 1.0).unwrap(), 21).unwrap();
        let f = g.sample(|x, _| x.abs());
        let z = g.zero_col().unwrap();
        let p = diff_sided(&f, Deriv::X, Side::Plus).unwrap();
        let m = diff_sided(&f, Deriv::X, Side::Minus).unwrap();
        assert!((p.at(z, 4) - 1.0).abs() < 1e-12);
        assert!((m.at(z, 4) + 1.0).abs() < 1e-12);
    }
}
