//! The mixed domain and its characteristic boundary.
//!
//! The domain is bounded by three straight arcs `L1` (bottom), `L2` (right),
//! `L3` (top) and two characteristic arcs `Gamma1`, `Gamma2` that meet at the
//! apex `(m, 0)` on the negative x-axis. Characteristics solve
//! `dx = ±sqrt(-K(x)) dy` and are traced numerically with a fixed-step RK4
//! integrator; everything downstream consumes them as polylines.

use std::sync::Arc;

use serde::ser::SerializeTuple;
use serde::{Serialize, Serializer};

use crate::error::{LabError, Result};
use crate::typechange::{Regularity, TypeChangeFn};

/// Points with `|x|` at most this far from the sonic line count as sonic.
pub const SONIC_TOL: f64 = 1e-9;

const APEX_TOL: f64 = 1e-8;
const ENDPOINT_TOL: f64 = 1e-6;
const ARC_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.end()
    }
}

/// Side of the sonic line. The line itself belongs to `Plus`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn of(x: f64) -> Side {
        if x >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }
}

/// Sign choice in `dx = ±sqrt(-K(x)) dy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plus" | "+" => Ok(Branch::Plus),
            "minus" | "-" => Ok(Branch::Minus),
            other => Err(LabError::InvalidParameter(format!("unknown branch {other:?}"))),
        }
    }
}

/// A traced characteristic.
#[derive(Clone, Debug, Serialize)]
pub struct CharacteristicPath {
    pub branch: Branch,
    pub vertices: Vec<Point>,
    pub step: f64,
    /// The trace stopped because it reached the sonic line.
    pub reached_sonic: bool,
    /// The start point was on the sonic line, so the path is the line itself.
    pub degenerate: bool,
}

impl CharacteristicPath {
    pub fn start(&self) -> Point {
        self.vertices[0]
    }

    pub fn end(&self) -> Point {
        *self.vertices.last().expect("paths have at least one vertex")
    }
}

/// Integration variable. Smooth `K` is traced in `s = sqrt(-x)`, where the
/// approach to the sonic line is regular (`ds/dy` is constant for `K = x`);
/// discontinuous `K` is traced in `x` directly.
#[derive(Clone, Copy)]
enum Var {
    X,
    S,
}

struct Tracer<'a> {
    k: &'a TypeChangeFn,
    var: Var,
    sigma: f64,
}

impl Tracer<'_> {
    fn state(&self, x: f64) -> f64 {
        match self.var {
            Var::X => x,
            Var::S => (-x).max(0.0).sqrt(),
        }
    }

    fn x_of(&self, w: f64) -> f64 {
        match self.var {
            Var::X => w,
            Var::S => -w * w.abs(),
        }
    }

    /// Sonic indicator: negative inside the hyperbolic region, zero on the line.
    fn phi(&self, w: f64) -> f64 {
        self.x_of(w)
    }

    fn rhs(&self, w: f64) -> Result<f64> {
        match self.var {
            Var::X => {
                // stages on or past the sonic line use the left limit;
                // the crossing is located afterwards
                let r = -self.k.eval(w.min(-f64::MIN_POSITIVE));
                if r < 0.0 {
                    return Err(LabError::StepFailure { x: w });
                }
                Ok(self.sigma * r.sqrt())
            }
            Var::S => {
                let s = w.abs();
                let g = if s == 0.0 {
                    self.k.deriv1(0.0).map_or(0.0, |d| d.max(0.0).sqrt() / 2.0)
                } else {
                    let x = -s * s;
                    let r = -self.k.eval(x);
                    if r < 0.0 {
                        return Err(LabError::StepFailure { x });
                    }
                    r.sqrt() / (2.0 * s)
                };
                Ok(-self.sigma * g)
            }
        }
    }

    fn rk4(&self, w: f64, dy: f64) -> Result<f64> {
        let k1 = self.rhs(w)?;
        let k2 = self.rhs(w + 0.5 * dy * k1)?;
        let k3 = self.rhs(w + 0.5 * dy * k2)?;
        let k4 = self.rhs(w + dy * k3)?;
        Ok(w + dy / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    }
}

/// Integrates `dx/dy = ±sqrt(-K(x))` from `start` toward `y_stop`.
///
/// The trace halts early when it reaches the sonic line; the terminal point
/// is then located by bisection on the length of the last step.
pub fn trace_characteristic(
    k: &TypeChangeFn,
    start: Point,
    branch: Branch,
    y_stop: f64,
    step: f64,
) -> Result<CharacteristicPath> {
    trace_impl(k, start, branch, y_stop, step, SONIC_TOL)
}

/// `snap_tol`: terminal points this close to the sonic line are snapped onto it.
fn trace_impl(
    k: &TypeChangeFn,
    start: Point,
    branch: Branch,
    y_stop: f64,
    step: f64,
    snap_tol: f64,
) -> Result<CharacteristicPath> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(LabError::InvalidParameter(format!("trace step must be positive, got {step}")));
    }
    if k.eval(start.x) > 0.0 && start.x.abs() > SONIC_TOL {
        return Err(LabError::InvalidStart { x: start.x, y: start.y });
    }
    let dir = (y_stop - start.y).signum();
    let mut path = CharacteristicPath {
        branch,
        vertices: vec![start],
        step,
        reached_sonic: false,
        degenerate: false,
    };

    if start.x.abs() <= SONIC_TOL {
        path.degenerate = true;
        let n = ((y_stop - start.y).abs() / step).ceil() as usize;
        for i in 1..=n {
            let y = if i == n { y_stop } else { start.y + dir * step * i as f64 };
            path.vertices.push(Point::new(start.x, y));
        }
        return Ok(path);
    }
    if dir == 0.0 {
        return Ok(path);
    }

    let tracer = Tracer {
        k,
        var: if k.regularity() == Regularity::PiecewiseConstant { Var::X } else { Var::S },
        sigma: branch.sign(),
    };
    let mut w = tracer.state(start.x);
    let mut y = start.y;
    let n_full = ((y_stop - start.y).abs() / step).floor() as usize;
    let mut i = 0usize;
    loop {
        let remaining = (y_stop - y).abs();
        if remaining <= 1e-14 * (1.0 + y_stop.abs()) {
            break;
        }
        let h = if i < n_full { step.min(remaining) } else { remaining };
        let w_new = tracer.rk4(w, dir * h)?;
        let phi = tracer.phi(w_new);
        if phi > 0.0 {
            // crossed the sonic line inside this step
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if tracer.phi(tracer.rk4(w, dir * h * mid)?) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let theta = 0.5 * (lo + hi);
            path.vertices.push(Point::new(0.0, y + dir * h * theta));
            path.reached_sonic = true;
            break;
        }
        i += 1;
        y = if i > n_full || h == remaining { y_stop } else { start.y + dir * step * i as f64 };
        w = w_new;
        if phi >= -snap_tol {
            // s falls linearly near the line when K′(0) > 0; finish that sliver
            let y_end = match (tracer.var, tracer.rhs(w)) {
                (Var::S, Ok(r)) if r != 0.0 && w > 0.0 => {
                    let t = y + dir * (w / r.abs()).min(step);
                    if dir * (y_stop - t) < 0.0 { y_stop } else { t }
                }
                _ => y,
            };
            path.vertices.push(Point::new(0.0, y_end));
            path.reached_sonic = true;
            break;
        }
        path.vertices.push(Point::new(tracer.x_of(w), y));
    }
    Ok(path)
}

/// Finds the apex `m < a` whose descending characteristic reaches `(a, -b)`.
pub fn solve_apex(k: &TypeChangeFn, a: f64, b: f64) -> Result<f64> {
    solve_apex_with_step(k, a, b, default_trace_step(b))
}

pub(crate) fn default_trace_step(b: f64) -> f64 {
    b / 2048.0
}

fn solve_apex_with_step(k: &TypeChangeFn, a: f64, b: f64, step: f64) -> Result<f64> {
    if !(a <= 0.0) || !(b > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "apex needs a <= 0 < b, got a = {a}, b = {b}"
        )));
    }
    let target = (-a).sqrt();
    // Monotone decreasing in m; zero at the apex. Paths that halt on the
    // sonic line early contribute their unused height so the map stays continuous.
    let mismatch = |m: f64| -> Result<f64> {
        if m.abs() <= SONIC_TOL {
            return Ok(-b - target);
        }
        let path = trace_impl(k, Point::new(m, 0.0), Branch::Minus, -b, step, 0.0)?;
        let end = path.end();
        if path.reached_sonic && end.y > -b {
            Ok(-(end.y + b) - target)
        } else {
            Ok((-end.x).max(0.0).sqrt() - target)
        }
    };

    let mut lo = a - 4.0 * (b * b + 1.0);
    let mut hi = a;
    let g_lo = mismatch(lo)?;
    if !(g_lo > 0.0) {
        return Err(LabError::NoApex { a, b });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mismatch(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = 0.5 * (lo + hi);
    if a - m <= 1e-9 {
        return Err(LabError::NoApex { a, b });
    }
    let end = trace_characteristic(k, Point::new(m, 0.0), Branch::Minus, -b, step)?.end();
    if (end.x - a).abs() > APEX_TOL || (end.y + b).abs() > APEX_TOL.sqrt() {
        return Err(LabError::NoApex { a, b });
    }
    Ok(m)
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Rect> {
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(LabError::InvalidDomain(format!(
                "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Rect {
        Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }

    fn intersect(&self, o: &Rect) -> Option<Rect> {
        let r = Rect {
            x0: self.x0.max(o.x0),
            x1: self.x1.min(o.x1),
            y0: self.y0.max(o.y0),
            y1: self.y1.min(o.y1),
        };
        (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
    }

    fn arcs(&self) -> Vec<BoundaryArc> {
        let ds = self.width().min(self.height()) / 2048.0;
        let c = [
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        ];
        let names = [ArcName::Bottom, ArcName::Right, ArcName::Top, ArcName::Left];
        (0..4)
            .map(|i| BoundaryArc { name: names[i], vertices: subdivide(c[i], c[(i + 1) % 4], ds) })
            .collect()
    }
}

fn subdivide(p: Point, q: Point, ds: f64) -> Vec<Point> {
    let n = ((p.dist(q) / ds).ceil() as usize).max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                q
            } else {
                let t = i as f64 / n as f64;
                Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ArcName {
    L1,
    L2,
    L3,
    Gamma2,
    Gamma1,
    Bottom,
    Right,
    Top,
    Left,
}

impl ArcName {
    pub fn is_characteristic(self) -> bool {
        matches!(self, ArcName::Gamma1 | ArcName::Gamma2)
    }
}

/// One oriented piece of a counter-clockwise boundary.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryArc {
    pub name: ArcName,
    pub vertices: Vec<Point>,
}

/// The mixed domain bounded by `L1`, `L2`, `L3`, `Gamma2`, `Gamma1`.
#[derive(Clone, Debug)]
pub struct MixedDomain {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub m: f64,
    pub k: TypeChangeFn,
    /// Counter-clockwise: `L1`, `L2`, `L3`, `Gamma2`, `Gamma1`.
    pub arcs: Vec<BoundaryArc>,
    /// Traced from the apex down to `(a, -b)`.
    pub gamma1: CharacteristicPath,
    /// Traced from the apex up to `(a, b)`.
    pub gamma2: CharacteristicPath,
}

/// Builds the domain for `K` with corners `(a, ±b)`, `(d, ±b)`.
pub fn build_domain(k: &TypeChangeFn, a: f64, b: f64, d: f64) -> Result<MixedDomain> {
    if !(a <= 0.0 && 0.0 < d) || !(b > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "domain needs a <= 0 < d and b > 0, got a = {a}, b = {b}, d = {d}"
        )));
    }
    let step = default_trace_step(b);
    let m = solve_apex_with_step(k, a, b, step)?;
    let apex = Point::new(m, 0.0);
    let mut gamma1 = trace_characteristic(k, apex, Branch::Minus, -b, step)?;
    let mut gamma2 = trace_characteristic(k, apex, Branch::Plus, b, step)?;
    snap_end(&mut gamma1, Point::new(a, -b))?;
    snap_end(&mut gamma2, Point::new(a, b))?;

    let ds = step;
    let mut g2_rev = gamma2.vertices.clone();
    g2_rev.reverse();
    let arcs = vec![
        BoundaryArc { name: ArcName::L1, vertices: subdivide(Point::new(a, -b), Point::new(d, -b), ds) },
        BoundaryArc { name: ArcName::L2, vertices: subdivide(Point::new(d, -b), Point::new(d, b), ds) },
        BoundaryArc { name: ArcName::L3, vertices: subdivide(Point::new(d, b), Point::new(a, b), ds) },
        BoundaryArc { name: ArcName::Gamma2, vertices: g2_rev },
        BoundaryArc { name: ArcName::Gamma1, vertices: gamma1.vertices.clone() },
    ];
    Ok(MixedDomain { a, b, d, m, k: k.clone(), arcs, gamma1, gamma2 })
}

fn snap_end(path: &mut CharacteristicPath, target: Point) -> Result<()> {
    let end = path.end();
    if end.dist(target) > ENDPOINT_TOL {
        return Err(LabError::InvalidDomain(format!(
            "characteristic ends at ({}, {}), expected ({}, {})",
            end.x, end.y, target.x, target.y
        )));
    }
    *path.vertices.last_mut().unwrap() = target;
    Ok(())
}

impl MixedDomain {
    /// `x` on the characteristic boundary at height `y` (`|y| <= b`).
    pub fn left_boundary(&self, y: f64) -> f64 {
        let v = &self.gamma2.vertices;
        let t = y.abs().min(self.b);
        let idx = v.partition_point(|p| p.y < t);
        if idx == 0 {
            return v[0].x;
        }
        if idx >= v.len() {
            return v[v.len() - 1].x;
        }
        let (p, q) = (v[idx - 1], v[idx]);
        if q.y == p.y {
            return q.x;
        }
        p.x + (t - p.y) / (q.y - p.y) * (q.x - p.x)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.y.abs() <= self.b + tol && p.x <= self.d + tol && p.x >= self.left_boundary(p.y) - tol
    }

    pub fn bbox(&self) -> Rect {
        Rect { x0: self.m, x1: self.d, y0: -self.b, y1: self.b }
    }

    /// The elliptic part `x >= 0` as a rectangle.
    pub fn elliptic_part(&self) -> Rect {
        Rect { x0: 0.0, x1: self.d, y0: -self.b, y1: self.b }
    }

    fn on_boundary(&self, p: Point, tol: f64) -> bool {
        if !self.contains(p, tol) {
            return false;
        }
        (p.y.abs() - self.b).abs() <= tol
            || (p.x - self.d).abs() <= tol
            || (p.x - self.left_boundary(p.y)).abs() <= tol
    }

    /// Moments of the intersection of `cell` with the domain.
    fn cell_moments(&self, cell: &Rect) -> Moments {
        let y_lo = cell.y0.max(-self.b);
        let y_hi = cell.y1.min(self.b);
        let xr = cell.x1.min(self.d);
        let xl_cap = cell.x0;
        if !(y_lo < y_hi) || !(xl_cap < xr) {
            return Moments::default();
        }
        // breakpoints: sign change of y, characteristic vertices, crossings of x = xl_cap and x = xr
        let mut ys = vec![y_lo, y_hi];
        if y_lo < 0.0 && 0.0 < y_hi {
            ys.push(0.0);
        }
        let v = &self.gamma2.vertices;
        let (t_lo, t_hi) = if y_lo >= 0.0 {
            (y_lo, y_hi)
        } else if y_hi <= 0.0 {
            (-y_hi, -y_lo)
        } else {
            (0.0, y_lo.abs().max(y_hi))
        };
        let i0 = v.partition_point(|p| p.y < t_lo).saturating_sub(1);
        let i1 = (v.partition_point(|p| p.y <= t_hi) + 1).min(v.len());
        for w in v[i0..i1].windows(2) {
            let (p, q) = (w[0], w[1]);
            for yv in [p.y, q.y] {
                for s in [yv, -yv] {
                    if s > y_lo && s < y_hi {
                        ys.push(s);
                    }
                }
            }
            for xc in [xl_cap, xr] {
                if (p.x - xc) * (q.x - xc) < 0.0 {
                    let t = p.y + (xc - p.x) / (q.x - p.x) * (q.y - p.y);
                    for s in [t, -t] {
                        if s > y_lo && s < y_hi {
                            ys.push(s);
                        }
                    }
                }
            }
        }
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();

        let slab = |y: f64| -> [f64; 4] {
            let l = self.left_boundary(y).max(xl_cap);
            if l >= xr {
                return [0.0; 4];
            }
            let w = xr - l;
            let mx = 0.5 * (xr * xr - l * l);
            [w, mx, w * y, mx * y]
        };
        let mut acc = [0.0; 4];
        for w in ys.windows(2) {
            let (ya, yb) = (w[0], w[1]);
            let h = yb - ya;
            if h <= 0.0 {
                continue;
            }
            // Simpson is exact here: the slab integrands are cubic in y on each piece
            let fa = slab(ya);
            let fm = slab(0.5 * (ya + yb));
            let fb = slab(yb);
            for c in 0..4 {
                acc[c] += h / 6.0 * (fa[c] + 4.0 * fm[c] + fb[c]);
            }
        }
        Moments { m00: acc[0], m10: acc[1], m01: acc[2], m11: acc[3] }
    }

    /// JSON document `{a, b, d, m, arcs: [{name, vertices}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "a": self.a,
            "b": self.b,
            "d": self.d,
            "m": self.m,
            "K": self.k.label(),
            "arcs": self.arcs,
        })
    }
}

/// Area moments `∫1`, `∫x`, `∫y`, `∫xy` of a planar set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub m00: f64,
    pub m10: f64,
    pub m01: f64,
    pub m11: f64,
}

/// Classification of a point relative to a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointClass {
    Elliptic,
    Hyperbolic,
    Sonic,
    Boundary,
    Exterior,
}

impl PointClass {
    pub fn is_interior(self) -> bool {
        matches!(self, PointClass::Elliptic | PointClass::Hyperbolic | PointClass::Sonic)
    }

    pub fn is_inside(self) -> bool {
        self != PointClass::Exterior
    }
}

/// Either a rectangle or a mixed domain.
#[derive(Clone, Debug)]
pub enum Region {
    Rect(Rect),
    Mixed(Arc<MixedDomain>),
}

impl From<Rect> for Region {
    fn from(r: Rect) -> Self {
        Region::Rect(r)
    }
}

impl From<MixedDomain> for Region {
    fn from(d: MixedDomain) -> Self {
        Region::Mixed(Arc::new(d))
    }
}

impl Region {
    pub fn bbox(&self) -> Rect {
        match self {
            Region::Rect(r) => *r,
            Region::Mixed(d) => d.bbox(),
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        match self {
            Region::Rect(r) => r.contains(p, tol),
            Region::Mixed(d) => d.contains(p, tol),
        }
    }

    pub fn mixed(&self) -> Option<&MixedDomain> {
        match self {
            Region::Mixed(d) => Some(d),
            Region::Rect(_) => None,
        }
    }

    /// Counter-clockwise boundary arcs.
    pub fn arcs(&self) -> Vec<BoundaryArc> {
        match self {
            Region::Rect(r) => r.arcs(),
            Region::Mixed(d) => d.arcs.clone(),
        }
    }

    /// Closed counter-clockwise vertex loop (first vertex not repeated).
    pub fn polygon(&self) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::new();
        for arc in self.arcs() {
            for p in arc.vertices {
                if out.last().map_or(true, |q| q.dist(p) > 0.0) {
                    out.push(p);
                }
            }
        }
        if out.len() > 1 && out[0].dist(*out.last().unwrap()) == 0.0 {
            out.pop();
        }
        out
    }

    pub fn classify(&self, p: Point, tol: f64) -> PointClass {
        let on_boundary = match self {
            Region::Rect(r) => {
                r.contains(p, tol)
                    && ((p.x - r.x0).abs() <= tol
                        || (p.x - r.x1).abs() <= tol
                        || (p.y - r.y0).abs() <= tol
                        || (p.y - r.y1).abs() <= tol)
            }
            Region::Mixed(d) => d.on_boundary(p, tol),
        };
        if on_boundary {
            PointClass::Boundary
        } else if !self.contains(p, 0.0) {
            PointClass::Exterior
        } else if p.x.abs() <= SONIC_TOL {
            PointClass::Sonic
        } else if p.x > 0.0 {
            PointClass::Elliptic
        } else {
            PointClass::Hyperbolic
        }
    }

    pub(crate) fn cell_moments(&self, cell: &Rect) -> Moments {
        match self {
            Region::Rect(r) => match r.intersect(cell) {
                Some(c) => {
                    let w = c.width();
                    let h = c.height();
                    let mx = 0.5 * (c.x1 * c.x1 - c.x0 * c.x0);
                    let my = 0.5 * (c.y1 * c.y1 - c.y0 * c.y0);
                    Moments { m00: w * h, m10: mx * h, m01: w * my, m11: mx * my }
                }
                None => Moments::default(),
            },
            Region::Mixed(d) => d.cell_moments(cell),
        }
    }

    /// Smallest and largest `x` over the closed region.
    pub fn x_extent(&self) -> (f64, f64) {
        let b = self.bbox();
        (b.x0, b.x1)
    }
}

/// Classifies `p` against a mixed domain.
///
/// Points within `1e-6` of an arc count as boundary points, which covers the
/// polyline error of the traced characteristics.
pub fn classify_point(dom: &MixedDomain, p: Point) -> PointClass {
    Region::Mixed(Arc::new(dom.clone())).classify(p, ARC_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typechange::{make_power, make_sgn};

    fn lin() -> TypeChangeFn {
        make_power(1).unwrap()
    }

    #[test]
    fn trace_linear_reaches_sonic_line_at_closed_form_height() {
        // sqrt(-x) = 1 - y/2 for K = x starting at (-1, 0)
        let path = trace_characteristic(&lin(), Point::new(-1.0, 0.0), Branch::Plus, 3.0, 1e-3).unwrap();
        let end = path.end();
        assert!(path.reached_sonic);
        assert!(end.x.abs() < 1e-6 && (end.y - 2.0).abs() < 1e-6, "{end:?}");
        for p in &path.vertices {
            let exact = -(1.0 - p.y / 2.0).powi(2);
            assert!((p.x - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_sgn_is_straight() {
        let path = trace_characteristic(&make_sgn(), Point::new(-1.0, 0.0), Branch::Plus, 5.0, 0.01).unwrap();
        let end = path.end();
        assert!(path.reached_sonic);
        assert!(end.x.abs() < 1e-9 && (end.y - 1.0).abs() < 1e-9, "{end:?}");
    }

    #[test]
    fn trace_from_sonic_line_is_degenerate() {
        for br in [Branch::Plus, Branch::Minus] {
            let path = trace_characteristic(&lin(), Point::new(0.0, 0.0), br, 1.0, 0.1).unwrap();
            assert!(path.degenerate);
            assert!(path.vertices.iter().all(|p| p.x == 0.0));
        }
    }

    #[test]
    fn trace_rejects_elliptic_start() {
        let err = trace_characteristic(&lin(), Point::new(0.5, 0.0), Branch::Plus, 1.0, 0.1);
        assert!(matches!(err, Err(LabError::InvalidStart { .. })));
    }

    #[test]
    fn trace_detects_negative_radicand() {
        // admissible at the start, but K turns positive on x < 0
        let k = TypeChangeFn::custom(
            "bad",
            |x: f64| x * (x + 0.5),
            |x: f64| 2.0 * x + 0.5,
            Some(|_x: f64| 2.0),
            Regularity::C2,
            false,
        );
        let err = trace_characteristic(&k, Point::new(-0.3, 0.0), Branch::Minus, 5.0, 0.05);
        assert!(matches!(err, Err(LabError::StepFailure { .. })), "{err:?}");
    }

    #[test]
    fn apex_closed_forms() {
        let m = solve_apex(&lin(), 0.0, 2.0).unwrap();
        assert!((m + 1.0).abs() < 1e-6, "{m}");
        let m = solve_apex(&lin(), -0.25, 1.0).unwrap();
        assert!((m + 1.0).abs() < 1e-6, "{m}");
        let m = solve_apex(&make_sgn(), 0.0, 1.0).unwrap();
        assert!((m + 1.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn apex_missing_for_cubic_at_sonic_corner() {
        // x^3 characteristics approach the sonic line only asymptotically
        let k = make_power(2).unwrap();
        assert!(matches!(solve_apex(&k, 0.0, 1.0), Err(LabError::NoApex { .. })));
        assert!(solve_apex(&k, -0.2, 1.0).is_ok());
    }

    #[test]
    fn domain_structure() {
        let dom = build_domain(&lin(), 0.0, 2.0, 1.0).unwrap();
        assert!((dom.m + 1.0).abs() < 1e-9);
        let names: Vec<_> = dom.arcs.iter().map(|a| a.name).collect();
        assert_eq!(names, [ArcName::L1, ArcName::L2, ArcName::L3, ArcName::Gamma2, ArcName::Gamma1]);
        for w in dom.arcs.windows(2) {
            assert_eq!(*w[0].vertices.last().unwrap(), w[1].vertices[0]);
        }
        assert_eq!(*dom.arcs[4].vertices.last().unwrap(), dom.arcs[0].vertices[0]);
        // counter-clockwise: positive shoelace area equal to 4 + 4/3
        let poly = Region::from(dom.clone()).polygon();
        let area: f64 = (0..poly.len())
            .map(|i| {
                let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
                0.5 * (p.x * q.y - q.x * p.y)
            })
            .sum();
        assert!((area - 16.0 / 3.0).abs() < 1e-5, "{area}");
        assert!(dom.gamma1.vertices.iter().all(|p| dom.k.eval(p.x) <= 0.0));
        assert_eq!(dom.elliptic_part(), Rect { x0: 0.0, x1: 1.0, y0: -2.0, y1: 2.0 });
    }

    #[test]
    fn gamma_arcs_are_mirror_images() {
        let dom = build_domain(&make_power(2).unwrap(), -0.3, 1.0, 1.0).unwrap();
        assert_eq!(dom.gamma1.vertices.len(), dom.gamma2.vertices.len());
        for (p, q) in dom.gamma1.vertices.iter().zip(&dom.gamma2.vertices) {
            assert!((p.x - q.x).abs() < 1e-12 && (p.y + q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn characteristic_x_monotone_in_y() {
        let dom = build_domain(&make_power(2).unwrap(), -0.3, 1.0, 1.0).unwrap();
        for w in dom.gamma2.vertices.windows(2) {
            assert!(w[1].x >= w[0].x && w[1].y > w[0].y);
        }
    }

    #[test]
    fn refinement_changes_terminal_point_at_fourth_order() {
        let k = make_power(2).unwrap();
        let end = |h: f64| trace_characteristic(&k, Point::new(-1.0, 0.0), Branch::Plus, 1.0, h).unwrap().end().x;
        let (e1, e2, e3) = (end(0.1), end(0.05), end(0.025));
        let ratio = (e1 - e2).abs() / (e2 - e3).abs();
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn invalid_domain_parameters() {
        assert!(matches!(build_domain(&lin(), 0.0, -1.0, 1.0), Err(LabError::InvalidParameter(_))));
        assert!(matches!(build_domain(&lin(), 0.1, 1.0, 1.0), Err(LabError::InvalidParameter(_))));
    }

    #[test]
    fn classify_examples() {
        let dom = build_domain(&lin(), 0.0, 2.0, 1.0).unwrap();
        assert_eq!(classify_point(&dom, Point::new(0.5, 0.0)), PointClass::Elliptic);
        assert_eq!(classify_point(&dom, Point::new(0.0, 0.3)), PointClass::Sonic);
        assert_eq!(classify_point(&dom, Point::new(-0.9, 0.0)), PointClass::Hyperbolic);
        assert_eq!(classify_point(&dom, Point::new(-0.9, 1.0)), PointClass::Exterior);
        assert_eq!(classify_point(&dom, Point::new(0.5, -2.0)), PointClass::Boundary);
        assert_eq!(classify_point(&dom, Point::new(1.0, 0.2)), PointClass::Boundary);
        assert_eq!(classify_point(&dom, Point::new(-0.25, 1.0)), PointClass::Boundary);
    }

    #[test]
    fn cell_moments_match_full_cells() {
        let dom = Region::from(build_domain(&lin(), 0.0, 2.0, 1.0).unwrap());
        let cell = Rect { x0: 0.25, x1: 0.5, y0: 0.0, y1: 0.25 };
        let m = dom.cell_moments(&cell);
        assert!((m.m00 - 0.0625).abs() < 1e-15);
        assert!((m.m10 - 0.0625 * 0.375).abs() < 1e-15);
    }

    #[test]
    fn json_document() {
        let dom = build_domain(&lin(), 0.0, 2.0, 1.0).unwrap();
        let v = dom.to_json();
        assert_eq!(v["arcs"].as_array().unwrap().len(), 5);
        assert_eq!(v["arcs"][0]["name"], "L1");
        assert!(v["arcs"][0]["vertices"][0].as_array().unwrap().len() == 2);
    }
}
