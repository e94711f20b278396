//! The abc multiplier, its integration-by-parts identity, the energy
//! inequality chain and the weighted Poincaré constant.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::TestField;
use crate::geometry::{Point, Rect, Region, Side};
use crate::grid::{diff, Deriv, Grid, GridField};
use crate::operators::{apply, apply_adjoint, apply_multiplier, OperatorSpec};
use crate::quadrature::{integrate_area, integrate_area_split, integrate_boundary_cut, AreaPart};
use crate::typechange::{make_power, TypeChangeFn};

/// Coefficients of `Mu = a u + b u_x + c u_y`, with `a` constant and `c = c(y)`.
///
/// `b` may be defined piecewise on the two sides of the sonic line.
pub trait Multiplier: Send + Sync {
    fn a(&self) -> f64;
    fn b(&self, x: f64, y: f64, side: Side) -> f64;
    fn b_x(&self, x: f64, y: f64, side: Side) -> f64;
    fn b_y(&self, x: f64, y: f64, side: Side) -> f64;
    fn c(&self, y: f64) -> f64;
    fn c_y(&self, y: f64) -> f64;
}

/// `b = b[0] + b[1] x + b[2] y`, `c = c[0] + c[1] y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearMultiplier {
    pub a: f64,
    pub b: [f64; 3],
    pub c: [f64; 2],
}

impl Multiplier for LinearMultiplier {
    fn a(&self) -> f64 {
        self.a
    }
    fn b(&self, x: f64, y: f64, _: Side) -> f64 {
        self.b[0] + self.b[1] * x + self.b[2] * y
    }
    fn b_x(&self, _: f64, _: f64, _: Side) -> f64 {
        self.b[1]
    }
    fn b_y(&self, _: f64, _: f64, _: Side) -> f64 {
        self.b[2]
    }
    fn c(&self, y: f64) -> f64 {
        self.c[0] + self.c[1] * y
    }
    fn c_y(&self, _: f64) -> f64 {
        self.c[1]
    }
}

/// The multiplier of the energy estimate for `x u_xx + (2 − κ) u_x + u_yy`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplierSpec {
    pub a: f64,
    pub delta: f64,
    pub kappa: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub q1: f64,
    pub q2: f64,
    /// Lower bound of `γ` over the closed region.
    pub epsilon: f64,
    pub delta_prime: f64,
    pub requested_delta: f64,
    /// How many times `δ` was halved.
    pub shrinks: u32,
    /// Whether `α ≥ δ|x|` is guaranteed on `Ω⁻` (needs `b₁(μ₂) ≥ 2Q₂`).
    pub alpha_certified: bool,
    /// `false` drops the `y²` part of `b`.
    pub b2_enabled: bool,
}

impl MultiplierSpec {
    pub fn b1(&self, x: f64, side: Side) -> f64 {
        match side {
            Side::Plus => (2.0 * self.delta * x / self.q1).exp(),
            Side::Minus => (3.0 * self.delta * x / self.q2).exp(),
        }
    }

    pub fn b2(&self, y: f64) -> f64 {
        if self.b2_enabled {
            (2.0 * self.delta - 1.0) * (1.0 - self.kappa) * y * y
        } else {
            0.0
        }
    }

    /// Same multiplier with `b₂ ≡ 0`, for the self-adjoint operator with general `K`.
    pub fn without_b2(&self) -> MultiplierSpec {
        MultiplierSpec { b2_enabled: false, ..self.clone() }
    }
}

impl Multiplier for MultiplierSpec {
    fn a(&self) -> f64 {
        self.a
    }
    fn b(&self, x: f64, y: f64, side: Side) -> f64 {
        self.b1(x, side) + self.b2(y)
    }
    fn b_x(&self, x: f64, _: f64, side: Side) -> f64 {
        match side {
            Side::Plus => 2.0 * self.delta / self.q1 * self.b1(x, side),
            Side::Minus => 3.0 * self.delta / self.q2 * self.b1(x, side),
        }
    }
    fn b_y(&self, _: f64, y: f64, _: Side) -> f64 {
        if self.b2_enabled {
            2.0 * (2.0 * self.delta - 1.0) * (1.0 - self.kappa) * y
        } else {
            0.0
        }
    }
    fn c(&self, y: f64) -> f64 {
        2.0 * (2.0 * self.delta - 1.0) * y
    }
    fn c_y(&self, _: f64) -> f64 {
        2.0 * (2.0 * self.delta - 1.0)
    }
}

struct Constants {
    q1: f64,
    q2: f64,
    epsilon: f64,
    alpha_ok: bool,
    alpha_achievable: bool,
    sonic_ok: bool,
}

fn constants(delta: f64, mu1: f64, mu2: f64, has_minus: bool) -> Constants {
    let q1 = (2.0 * delta * mu1).exp();
    let q2 = mu2.exp();
    let gamma_plus = 2.0 + delta * (1.0 / q1 - 2.0);
    let mut epsilon = gamma_plus;
    let mut alpha_ok = true;
    if has_minus {
        let b1_min = (3.0 * delta * mu2 / q2).exp();
        epsilon = epsilon.min(2.0 + delta * (3.0 * b1_min / (2.0 * q2) - 2.0));
        alpha_ok = b1_min >= 2.0 * q2;
    }
    Constants {
        q1,
        q2,
        epsilon,
        alpha_ok,
        alpha_achievable: has_minus && 2.0 * q2 < 1.0,
        sonic_ok: !has_minus || 3.0 * delta < q2,
    }
}

/// Builds the multiplier for `region`, halving `δ` (at most 40 times) until
/// `3δ < Q₂`, `ε > 0` and, when attainable, `b₁ ≥ 2Q₂` on `Ω⁻`.
pub fn make_multiplier(region: &Region, kappa: f64, delta: f64) -> Result<MultiplierSpec> {
    if !(1.0..=1.5).contains(&kappa) {
        return Err(LabError::InvalidParameter(format!("κ must lie in [1, 3/2], got {kappa}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(LabError::InvalidParameter(format!("δ must lie in (0, 1/2), got {delta}")));
    }
    let (xmin, xmax) = region.x_extent();
    let mu1 = xmax.max(0.0);
    let mu2 = xmin.min(0.0);
    let has_minus = xmin < 0.0;
    let mut d = delta;
    for shrinks in 0..=40u32 {
        let c = constants(d, mu1, mu2, has_minus);
        let ok = c.sonic_ok && c.epsilon > 0.0 && (c.alpha_ok || !c.alpha_achievable);
        if ok {
            return Ok(MultiplierSpec {
                a: -1.0,
                delta: d,
                kappa,
                mu1,
                mu2,
                q1: c.q1,
                q2: c.q2,
                epsilon: c.epsilon,
                delta_prime: d.min(c.epsilon),
                requested_delta: delta,
                shrinks,
                alpha_certified: c.alpha_ok,
                b2_enabled: true,
            });
        }
        d *= 0.5;
    }
    Err(LabError::InvalidParameter(format!("no admissible δ below {delta} after 40 halvings")))
}

/// `ω`, `α`, `β`, `γ` of the integration-by-parts identity for
/// `L = K u_xx + k K′ u_x + u_yy` and a multiplier.
pub struct IbpCoefficients<'a> {
    pub k: TypeChangeFn,
    pub kk: f64,
    pub m: &'a dyn Multiplier,
}

pub fn ibp_coefficients<'a>(k: &TypeChangeFn, kk: f64, m: &'a dyn Multiplier) -> IbpCoefficients<'a> {
    IbpCoefficients { k: k.clone(), kk, m }
}

fn undefined(what: &'static str, x: f64, y: f64) -> LabError {
    LabError::UndefinedCoefficient { what, x, y }
}

impl IbpCoefficients<'_> {
    pub fn omega(&self, x: f64, y: f64) -> Result<f64> {
        let f = (1.0 - self.kk) * self.m.a() / 2.0;
        if f == 0.0 {
            return Ok(0.0);
        }
        self.k.deriv2(x).map(|d2| f * d2).ok_or_else(|| undefined("omega", x, y))
    }

    pub fn alpha(&self, x: f64, y: f64, side: Side) -> Result<f64> {
        let m = self.m;
        let d1 = self.k.deriv1(x).ok_or_else(|| undefined("alpha", x, y))?;
        Ok((m.c_y(y) / 2.0 - (m.a() + m.b_x(x, y, side) / 2.0)) * self.k.eval(x)
            + m.b(x, y, side) * (self.kk - 0.5) * d1)
    }

    pub fn beta(&self, x: f64, y: f64, side: Side) -> Result<f64> {
        let m = self.m;
        let d1 = self.k.deriv1(x).ok_or_else(|| undefined("beta", x, y))?;
        Ok(0.5 * (m.c(y) * (self.kk - 1.0) * d1 - m.b_y(x, y, side)))
    }

    pub fn gamma(&self, x: f64, y: f64, side: Side) -> Result<f64> {
        let m = self.m;
        Ok(0.5 * (m.b_x(x, y, side) - m.c_y(y)) - m.a())
    }

    /// Divergence flux `(F₁, F₂)` with `Mu · Lu = div F + ω u² + α u_x² + 2β u_x u_y + γ u_y²`.
    pub fn flux(&self, p: Point, side: Side, u: f64, ux: f64, uy: f64) -> (f64, f64) {
        let m = self.m;
        let (kv, d1) = (self.k.eval(p.x), self.k.deriv1(p.x).unwrap_or(f64::NAN));
        let (a, b, c) = (m.a(), m.b(p.x, p.y, side), m.c(p.y));
        let f1 = a * u * kv * ux
            + 0.5 * a * (self.kk - 1.0) * d1 * u * u
            + 0.5 * b * (kv * ux * ux - uy * uy)
            + c * kv * ux * uy;
        let f2 = a * u * uy + b * ux * uy + 0.5 * c * (uy * uy - kv * ux * ux);
        (f1, f2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Link {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
}

/// Two sides of an identity or the links of an inequality chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub links: Vec<Link>,
    pub constant: Option<f64>,
    pub grid: GridDims,
    pub pass: bool,
}

fn link(name: &str, value: f64) -> Link {
    Link { name: name.to_string(), value }
}

fn dims(g: &Grid) -> GridDims {
    GridDims { nx: g.nx(), ny: g.ny() }
}

/// Field of `f(x, y, side, k)` for one side of the cut; errors propagate.
fn sided_field(g: &Grid, side: Side, f: impl Fn(Point, Side, usize) -> Result<Option<f64>>) -> Result<GridField> {
    let mut out = GridField::zeros(g);
    for k in 0..g.len() {
        let p = g.point(k);
        let s = if p.x == 0.0 { side } else { Side::of(p.x) };
        if s != side {
            out.undefine(k);
            continue;
        }
        match f(p, s, k)? {
            Some(v) => out.set(k, v),
            None => out.undefine(k),
        }
    }
    Ok(out)
}

/// Checks `(Mu, Lu) = ∮ F₁ dy − F₂ dx + ∬ ω u² + α u_x² + 2β u_x u_y + γ u_y²`
/// with `L = K u_xx + k K′ u_x + u_yy` on the region of the grid of `u`.
///
/// The area integral is split along `x = 0` and the boundary integral
/// includes the cut traversed from both sides.
pub fn verify_ibp(k: &TypeChangeFn, kk: f64, m: &dyn Multiplier, u: &GridField) -> Result<EnergyReport> {
    let g = u.grid();
    let spec = OperatorSpec::general(k, kk)?;
    let lu = apply(&spec, u)?;
    let mu = apply_multiplier(m, u)?;
    let lhs = integrate_area(&mu.zip(&lu, |a, b| a * b), AreaPart::All).value;

    let ux = diff(u, Deriv::X)?;
    let uy = diff(u, Deriv::Y)?;
    let co = ibp_coefficients(k, kk, m);
    let density = |side: Side| {
        sided_field(g, side, |p, s, i| {
            let (Some(v), Some(dx), Some(dy)) = (u.get(i), ux.get(i), uy.get(i)) else {
                return Ok(None);
            };
            let w = co.omega(p.x, p.y)?;
            let a = co.alpha(p.x, p.y, s)?;
            let b = co.beta(p.x, p.y, s)?;
            let c = co.gamma(p.x, p.y, s)?;
            Ok(Some(w * v * v + a * dx * dx + 2.0 * b * dx * dy + c * dy * dy))
        })
    };
    let area = integrate_area_split(&density(Side::Plus)?, &density(Side::Minus)?).value;
    let beta_density = |side: Side| {
        sided_field(g, side, |p, s, i| match (ux.get(i), uy.get(i)) {
            (Some(dx), Some(dy)) => Ok(Some(2.0 * co.beta(p.x, p.y, s)? * dx * dy)),
            _ => Ok(None),
        })
    };
    let beta_term = integrate_area_split(&beta_density(Side::Plus)?, &beta_density(Side::Minus)?).value;

    let values = |p: Point| -> (f64, f64, f64) {
        let get = |f: &GridField| f.interpolate(p).unwrap_or(f64::NAN);
        (get(u), get(&ux), get(&uy))
    };
    let flux = |p: Point, s: Side| {
        let (v, dx, dy) = values(p);
        co.flux(p, s, v, dx, dy)
    };
    let region = g.region();
    let bnd = integrate_boundary_cut(|p, s| -flux(p, s).1, |p, s| flux(p, s).0, region)?.value;
    let cut = crate::quadrature::cut_contribution(|p, s| -flux(p, s).1, |p, s| flux(p, s).0, region);

    let rhs = bnd + area;
    let gap = (lhs - rhs).abs();
    Ok(EnergyReport {
        lhs,
        rhs,
        gap,
        links: vec![link("boundary", bnd), link("area", area), link("beta_term", beta_term), link("cut", cut)],
        constant: None,
        grid: dims(g),
        pass: gap.is_finite(),
    })
}

/// `∬ (|K| u_x² + u_y²)`, the squared weighted seminorm.
pub fn weighted_seminorm_sq(k: &TypeChangeFn, u: &GridField) -> Result<f64> {
    let ux = diff(u, Deriv::X)?;
    let uy = diff(u, Deriv::Y)?;
    let mut dens = GridField::zeros(u.grid());
    for i in 0..u.grid().len() {
        match (ux.get(i), uy.get(i)) {
            (Some(a), Some(b)) => dens.set(i, k.eval(u.grid().point(i).x).abs() * a * a + b * b),
            _ => dens.undefine(i),
        }
    }
    Ok(integrate_area(&dens, AreaPart::All).value)
}

/// `∬ (|K| u_x² + u_y² + u²)`, the squared full weighted norm.
pub fn weighted_h1_norm_sq(k: &TypeChangeFn, u: &GridField) -> Result<f64> {
    Ok(weighted_seminorm_sq(k, u)? + l2_norm_sq(u))
}

pub fn l2_norm_sq(u: &GridField) -> f64 {
    integrate_area(&u.map(|v| v * v), AreaPart::All).value
}

fn inner(a: &GridField, b: &GridField) -> f64 {
    integrate_area(&a.zip(b, |p, q| p * q), AreaPart::All).value
}

/// `‖u‖² / ∬(|K| u_x² + u_y²)`.
pub fn poincare_ratio(k: &TypeChangeFn, u: &GridField) -> Result<f64> {
    Ok(l2_norm_sq(u) / weighted_seminorm_sq(k, u)?)
}

/// Checks `δ′ ∬(|x| u_x² + u_y²) ≤ (Mu, L*_κ u) ≤ ‖Mu‖ ‖L*_κ u‖` for a
/// compactly supported `u`, within `rel_tol` relative.
pub fn energy_inequality_check(kappa: f64, delta: f64, u: &GridField, rel_tol: f64) -> Result<EnergyReport> {
    let g = u.grid();
    let scale = u.max_abs_where(|_| true);
    let edge = (0..g.len())
        .filter(|&i| !matches!(g.class(i), c if c.is_interior()))
        .map(|i| u.get(i).map_or(0.0, f64::abs))
        .fold(0.0, f64::max);
    if edge > 1e-12 * (1.0 + scale) {
        return Err(LabError::InvalidInput(format!(
            "u is not compactly supported: |u| = {edge:.3e} on or outside the boundary"
        )));
    }
    let ms = make_multiplier(g.region(), kappa, delta)?;
    let lstar = apply_adjoint(kappa, u)?;
    let mu = apply_multiplier(&ms, u)?;
    let semi = weighted_seminorm_sq(&make_power(1)?, u)?;
    let l1 = ms.delta_prime * semi;
    let l2 = inner(&mu, &lstar);
    let (nm, nl) = (l2_norm_sq(&mu).sqrt(), l2_norm_sq(&lstar).sqrt());
    let l3 = nm * nl;
    let slack = |v: f64| rel_tol * v.abs().max(f64::MIN_POSITIVE);
    let pass = l1 <= l2 + slack(l2) && l2 <= l3 + slack(l3);
    Ok(EnergyReport {
        lhs: l1,
        rhs: l2,
        gap: l2 - l1,
        links: vec![link("delta_prime_seminorm", l1), link("pairing", l2), link("cauchy_schwarz", l3)],
        constant: (nl > 0.0).then(|| semi.sqrt() / nl),
        grid: dims(g),
        pass,
    })
}

/// Node-wise certificates for the energy multiplier with `K = x`, `k = 2 − κ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificates {
    /// `min (α − δ|x|)`.
    pub alpha_margin: f64,
    /// `min (γ − ε)`.
    pub gamma_margin: f64,
    pub beta_max: f64,
    pub b_min: f64,
    /// `max b₁ − Q₁` on `Ω⁺`.
    pub b1_plus_excess: f64,
    /// `min b₁ − Q₂` on `Ω⁻`.
    pub b1_minus_margin: f64,
    pub pass: bool,
}

pub fn certify(ms: &MultiplierSpec, grid: &Grid) -> Result<Certificates> {
    let k = make_power(1)?;
    let co = ibp_coefficients(&k, 2.0 - ms.kappa, ms);
    let mut c = Certificates {
        alpha_margin: f64::INFINITY,
        gamma_margin: f64::INFINITY,
        beta_max: 0.0,
        b_min: f64::INFINITY,
        b1_plus_excess: f64::NEG_INFINITY,
        b1_minus_margin: f64::INFINITY,
        pass: false,
    };
    for i in 0..grid.len() {
        if !grid.class(i).is_inside() {
            continue;
        }
        let p = grid.point(i);
        let sides: &[Side] = if p.x == 0.0 { &[Side::Plus, Side::Minus] } else if p.x > 0.0 { &[Side::Plus] } else { &[Side::Minus] };
        for &s in sides {
            c.alpha_margin = c.alpha_margin.min(co.alpha(p.x, p.y, s)? - ms.delta * p.x.abs());
            c.gamma_margin = c.gamma_margin.min(co.gamma(p.x, p.y, s)? - ms.epsilon);
            c.beta_max = c.beta_max.max(co.beta(p.x, p.y, s)?.abs());
            c.b_min = c.b_min.min(ms.b(p.x, p.y, s));
            match s {
                Side::Plus => c.b1_plus_excess = c.b1_plus_excess.max(ms.b1(p.x, s) - ms.q1),
                Side::Minus => c.b1_minus_margin = c.b1_minus_margin.min(ms.b1(p.x, s) - ms.q2),
            }
        }
    }
    c.pass = c.alpha_margin >= -1e-12
        && c.gamma_margin >= -1e-12
        && c.beta_max <= 1e-12
        && c.b_min > 0.0
        && c.b1_plus_excess <= 0.0
        && c.b1_minus_margin > 0.0;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoincareEstimate {
    /// Largest ratio seen; a lower estimate of the best constant.
    pub constant: f64,
    pub ratios: Vec<f64>,
}

/// Maximizes `‖u‖² / ∬(|K| u_x² + u_y²)` over seeded random bump fields on an `n`-node grid.
pub fn poincare_constant(k: &TypeChangeFn, rect: &Rect, trials: usize, seed: u64, n: usize) -> Result<PoincareEstimate> {
    if !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(LabError::InvalidDomain("degenerate rectangle".into()));
    }
    if trials == 0 {
        return Err(LabError::InvalidParameter("need at least one trial".into()));
    }
    let grid = Grid::new(*rect, n)?;
    let ratios = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let u = TestField::random_bumps(&mut rng, rect).sample(&grid);
            poincare_ratio(k, &u)
        })
        .collect::<Result<Vec<f64>>>()?;
    let constant = ratios.iter().copied().fold(0.0, f64::max);
    Ok(PoincareEstimate { constant, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_domain;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn domain() -> Region {
        build_domain(&make_power(1).unwrap(), 0.0, 2.0, 1.0).unwrap().into()
    }

    #[test]
    fn apex_and_corner_extents() {
        let ms = make_multiplier(&domain(), 1.25, 0.25).unwrap();
        assert_abs_diff_eq!(ms.mu1, 1.0);
        assert!((ms.mu2 + 1.0).abs() < 1e-8);
        assert!(3.0 * ms.delta < ms.q2);
        assert!(ms.alpha_certified);
        assert!(ms.shrinks > 0);
    }

    #[test]
    fn b_pieces() {
        let ms = make_multiplier(&domain(), 1.0, 0.1).unwrap();
        assert_eq!(ms.b2(1.7), 0.0);
        assert_eq!(ms.b1(0.0, Side::Plus), 1.0);
        assert_eq!(ms.b1(0.0, Side::Minus), 1.0);
        assert_eq!(ms.c(1.0), 2.0 * (2.0 * ms.delta - 1.0));
    }

    #[test]
    fn kappa_range_enforced() {
        assert!(make_multiplier(&domain(), 0.9, 0.1).is_err());
        assert!(make_multiplier(&domain(), 1.2, 0.6).is_err());
    }

    #[test]
    fn simple_multiplier_coefficients() {
        let k = make_power(1).unwrap();
        let m = LinearMultiplier { a: -1.0, b: [0.0; 3], c: [0.0; 2] };
        let co = ibp_coefficients(&k, 0.5, &m);
        let (x, y) = (0.37, -0.2);
        assert_abs_diff_eq!(co.alpha(x, y, Side::Plus).unwrap(), x);
        assert_abs_diff_eq!(co.gamma(x, y, Side::Plus).unwrap(), 1.0);
        assert_eq!(co.beta(x, y, Side::Plus).unwrap(), 0.0);
        assert_eq!(co.omega(x, y).unwrap(), 0.0);
        let co = ibp_coefficients(&make_power(2).unwrap(), 1.0, &m);
        assert_eq!(co.omega(x, y).unwrap(), 0.0);
    }

    #[test]
    fn beta_cancels_exactly() {
        let ms = make_multiplier(&domain(), 1.25, 0.2).unwrap();
        let co = ibp_coefficients(&make_power(1).unwrap(), 2.0 - 1.25, &ms);
        for &(x, y) in &[(0.3, 1.7), (-0.4, -0.9), (0.0, 0.5)] {
            assert!(co.beta(x, y, Side::of(x)).unwrap().abs() <= 1e-15);
        }
    }

    #[test]
    fn certificates_hold_on_the_domain() {
        let g = Grid::new(domain(), 33).unwrap();
        for kappa in [1.0, 1.25, 1.5] {
            let ms = make_multiplier(g.region(), kappa, 0.25).unwrap();
            let c = certify(&ms, &g).unwrap();
            assert!(c.pass, "{kappa}: {c:?}");
        }
    }

    fn ibp_gap(n: usize, kk: f64, m: &dyn Multiplier, region: Region) -> f64 {
        let g = Grid::new(region, n).unwrap();
        let u = TestField::exp_cos().sample(&g);
        verify_ibp(&make_power(1).unwrap(), kk, m, &u).unwrap().gap
    }

    #[test]
    fn ibp_identity_converges_on_square() {
        let m = LinearMultiplier { a: -1.0, b: [0.5, 1.0, 0.0], c: [0.0, -0.5] };
        let r: Region = Rect::unit_square().into();
        let (e1, e2) = (ibp_gap(33, 0.5, &m, r.clone()), ibp_gap(65, 0.5, &m, r));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn ibp_identity_converges_on_mixed_domain_with_cut() {
        let ms = make_multiplier(&domain(), 1.25, 0.25).unwrap();
        let (e1, e2) = (ibp_gap(33, 0.75, &ms, domain()), ibp_gap(65, 0.75, &ms, domain()));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn sign_of_reduced_boundary_term() {
        // u = sin(πx) sin(πy) vanishes on the unit square; with a = 0, b = x, c = 0
        // the pairing equals +½∮(K u_x² + u_y²)(b dy − c dx) plus the area term.
        let g = Grid::new(Rect::unit_square(), 129).unwrap();
        let u = TestField::sin_sin().sample(&g);
        let m = LinearMultiplier { a: 0.0, b: [0.0, 1.0, 0.0], c: [0.0, 0.0] };
        let r = verify_ibp(&make_power(1).unwrap(), 0.5, &m, &u).unwrap();
        let boundary = r.links[0].value;
        // only the right edge x = 1 contributes: ½ ∫ u_x² dy = π²/4
        assert!((boundary - PI * PI / 4.0).abs() < 2e-3, "{boundary}");
        assert!(r.gap < 1e-2, "{r:?}");
    }

    #[test]
    fn zero_field_gives_zero_report() {
        let g = Grid::new(domain(), 17).unwrap();
        let ms = make_multiplier(g.region(), 1.5, 0.1).unwrap();
        let r = verify_ibp(&make_power(1).unwrap(), 0.5, &ms, &GridField::zeros(&g)).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let e = energy_inequality_check(1.5, 0.1, &GridField::zeros(&g), 1e-8).unwrap();
        assert!(e.links.iter().all(|l| l.value == 0.0));
    }

    #[test]
    fn energy_chain_for_a_bump() {
        let g = Grid::new(domain(), 65).unwrap();
        let u = TestField::bump(0.3, 0.0, 0.4, 0.8).sample(&g);
        let r = energy_inequality_check(1.5, 0.25, &u, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.constant.unwrap().is_finite());
    }

    #[test]
    fn energy_check_rejects_boundary_support() {
        let g = Grid::new(domain(), 17).unwrap();
        let u = g.sample(|x, _| x + 2.0);
        assert!(matches!(energy_inequality_check(1.2, 0.1, &u, 1e-8), Err(LabError::InvalidInput(_))));
    }

    #[test]
    fn poincare_ratio_of_sine_product() {
        let g = Grid::new(Rect::unit_square(), 129).unwrap();
        let r = poincare_ratio(&make_power(1).unwrap(), &TestField::sin_sin().sample(&g)).unwrap();
        let exact = 1.0 / (1.5 * PI * PI);
        assert!((r - exact).abs() / exact < 0.01, "{r} {exact}");
    }

    #[test]
    fn poincare_estimate_is_reproducible_and_bounds_samples() {
        let k = make_power(1).unwrap();
        let a = poincare_constant(&k, &Rect::unit_square(), 8, 42, 33).unwrap();
        let b = poincare_constant(&k, &Rect::unit_square(), 8, 42, 33).unwrap();
        assert_eq!(a, b);
        assert!(a.ratios.iter().all(|&r| r <= a.constant));
        assert!(poincare_constant(&k, &Rect::unit_square(), 0, 42, 33).is_err());
    }

    #[test]
    fn seminorm_is_the_h1_norm_without_l2_part() {
        let g = Grid::new(Rect::unit_square(), 33).unwrap();
        let u = TestField::sin_sin().sample(&g);
        let k = make_power(1).unwrap();
        let diffr = weighted_h1_norm_sq(&k, &u).unwrap() - weighted_seminorm_sq(&k, &u).unwrap();
        assert_abs_diff_eq!(diffr, l2_norm_sq(&u), epsilon = 1e-14);
    }
}
