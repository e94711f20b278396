//! Analytic test fields with exact first and second derivatives.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Rect;
use crate::grid::{Grid, GridField};
use crate::operators::OperatorSpec;

/// Value and derivatives up to second order at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            x: self.x + o.x,
            y: self.y + o.y,
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        Jet { v: s * self.v, x: s * self.x, y: s * self.y, xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }
}

/// Product of a function of `x` and a function of `y`, each given as `(f, f′, f″)`.
fn tensor(p: (f64, f64, f64), q: (f64, f64, f64)) -> Jet {
    Jet { v: p.0 * q.0, x: p.1 * q.0, y: p.0 * q.1, xx: p.2 * q.0, xy: p.1 * q.1, yy: p.0 * q.2 }
}

type JetFn = dyn Fn(f64, f64) -> Jet + Send + Sync;

/// A smooth field known in closed form.
#[derive(Clone)]
pub struct TestField {
    name: String,
    f: Arc<JetFn>,
    support: Option<Rect>,
}

impl fmt::Debug for TestField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestField({})", self.name)
    }
}

/// `(1 − t²)⁴` on `|t| < 1`, zero outside; C³.
pub fn bump_profile(t: f64) -> (f64, f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = 1.0 - t * t;
    (s.powi(4), -8.0 * t * s.powi(3), -8.0 * s.powi(3) + 48.0 * t * t * s * s)
}

/// `exp(1 − 1/(1 − t²))` on `|t| < 1`, zero outside; C∞.
pub fn smooth_bump_profile(t: f64) -> (f64, f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = 1.0 - t * t;
    let v = (1.0 - 1.0 / s).exp();
    let d1 = -2.0 * t / (s * s) * v;
    let d2 = (4.0 * t * t / s.powi(4) - 2.0 / (s * s) - 8.0 * t * t / s.powi(3)) * v;
    (v, d1, d2)
}

/// Cardinal B-spline of order `n` (degree `n − 1`) supported on `[0, n]`.
fn cardinal(n: u32, t: f64) -> f64 {
    if n == 1 {
        return if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
    }
    if t <= 0.0 || t >= n as f64 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    (t * cardinal(n - 1, t) + (n as f64 - t) * cardinal(n - 1, t - 1.0)) / m
}

/// Centered quartic B-spline on `[−5/2, 5/2]` with its first two derivatives.
pub fn quartic_bspline(t: f64) -> (f64, f64, f64) {
    let s = t + 2.5;
    let v = cardinal(5, s);
    let d1 = cardinal(4, s) - cardinal(4, s - 1.0);
    let d2 = cardinal(3, s) - 2.0 * cardinal(3, s - 1.0) + cardinal(3, s - 2.0);
    (v, d1, d2)
}

impl TestField {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64) -> Jet + Send + Sync + 'static) -> TestField {
        TestField { name: name.into(), f: Arc::new(f), support: None }
    }

    /// Declares that the field vanishes with its derivatives outside `[cx ± rx] × [cy ± ry]`.
    fn supported_on(mut self, cx: f64, cy: f64, rx: f64, ry: f64) -> TestField {
        self.support = Some(Rect { x0: cx - rx, x1: cx + rx, y0: cy - ry, y1: cy + ry });
        self
    }

    /// Closed rectangle outside which the field is known to vanish.
    pub fn support(&self) -> Option<Rect> {
        self.support
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn jet(&self, x: f64, y: f64) -> Jet {
        (self.f)(x, y)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.jet(x, y).v
    }

    pub fn sample(&self, grid: &Grid) -> GridField {
        grid.sample(|x, y| self.value(x, y))
    }

    pub fn plus(&self, other: &TestField) -> TestField {
        let (a, b) = (self.f.clone(), other.f.clone());
        TestField::new(format!("{}+{}", self.name, other.name), move |x, y| a(x, y) + b(x, y))
    }

    pub fn scaled(&self, s: f64) -> TestField {
        let a = self.f.clone();
        let mut out = TestField::new(format!("{s}*{}", self.name), move |x, y| a(x, y) * s);
        out.support = self.support;
        out
    }

    /// `L u` in closed form; NaN where the first-order coefficient is undefined.
    pub fn apply(&self, spec: &OperatorSpec, x: f64, y: f64) -> f64 {
        let j = self.jet(x, y);
        match spec.first_order_coeff(x) {
            Some(c) => spec.k.eval(x) * j.xx + c * j.x + j.yy,
            None => f64::NAN,
        }
    }

    pub fn xy() -> TestField {
        TestField::new("xy", |x, y| Jet { v: x * y, x: y, y: x, xx: 0.0, xy: 1.0, yy: 0.0 })
    }

    pub fn x2y() -> TestField {
        TestField::new("x2y", |x, y| Jet { v: x * x * y, x: 2.0 * x * y, y: x * x, xx: 2.0 * y, xy: 2.0 * x, yy: 0.0 })
    }

    /// `sin(πx) sin(πy)`.
    pub fn sin_sin() -> TestField {
        TestField::new("sin_sin", |x, y| {
            let p = ((PI * x).sin(), PI * (PI * x).cos(), -PI * PI * (PI * x).sin());
            let q = ((PI * y).sin(), PI * (PI * y).cos(), -PI * PI * (PI * y).sin());
            tensor(p, q)
        })
    }

    /// `e^{x/2} cos(y)`.
    pub fn exp_cos() -> TestField {
        TestField::new("exp_cos", |x, y| {
            let e = (0.5 * x).exp();
            tensor((e, 0.5 * e, 0.25 * e), (y.cos(), -y.sin(), -y.cos()))
        })
    }

    /// `sin(x + 2y) / 2`.
    pub fn wave() -> TestField {
        TestField::new("wave", |x, y| {
            let (s, c) = (x + 2.0 * y).sin_cos();
            Jet { v: 0.5 * s, x: 0.5 * c, y: c, xx: -0.5 * s, xy: -s, yy: -2.0 * s }
        })
    }

    /// `x³ − x y² + y`.
    pub fn cubic() -> TestField {
        TestField::new("cubic", |x, y| Jet {
            v: x.powi(3) - x * y * y + y,
            x: 3.0 * x * x - y * y,
            y: -2.0 * x * y + 1.0,
            xx: 6.0 * x,
            xy: -2.0 * y,
            yy: -2.0 * x,
        })
    }

    /// `exp(−((x−cx)² + (y−cy)²)/s²)`.
    pub fn gaussian(cx: f64, cy: f64, s: f64) -> TestField {
        TestField::new("gaussian", move |x, y| {
            let e = (-((x - cx) / s).powi(2)).exp();
            let f = (-((y - cy) / s).powi(2)).exp();
            let d = |t: f64, g: f64| (g, -2.0 * t / (s * s) * g, (4.0 * t * t / s.powi(4) - 2.0 / (s * s)) * g);
            tensor(d(x - cx, e), d(y - cy, f))
        })
    }

    /// Tensor bump `(1 − t²)⁴` with half-widths `rx`, `ry`; compactly supported, C³.
    pub fn bump(cx: f64, cy: f64, rx: f64, ry: f64) -> TestField {
        TestField::new("bump", move |x, y| {
            let (p, q) = (bump_profile((x - cx) / rx), bump_profile((y - cy) / ry));
            tensor((p.0, p.1 / rx, p.2 / (rx * rx)), (q.0, q.1 / ry, q.2 / (ry * ry)))
        })
        .supported_on(cx, cy, rx, ry)
    }

    /// Tensor C∞ bump with half-widths `rx`, `ry`.
    pub fn smooth_bump(cx: f64, cy: f64, rx: f64, ry: f64) -> TestField {
        TestField::new("smooth_bump", move |x, y| {
            let (p, q) = (smooth_bump_profile((x - cx) / rx), smooth_bump_profile((y - cy) / ry));
            tensor((p.0, p.1 / rx, p.2 / (rx * rx)), (q.0, q.1 / ry, q.2 / (ry * ry)))
        })
        .supported_on(cx, cy, rx, ry)
    }

    /// Tensor quartic B-spline centered at `(cx, cy)` with knot spacings `hx`, `hy`.
    pub fn bspline(cx: f64, cy: f64, hx: f64, hy: f64) -> TestField {
        TestField::new("bspline", move |x, y| {
            let (p, q) = (quartic_bspline((x - cx) / hx), quartic_bspline((y - cy) / hy));
            tensor((p.0, p.1 / hx, p.2 / (hx * hx)), (q.0, q.1 / hy, q.2 / (hy * hy)))
        })
        .supported_on(cx, cy, 2.5 * hx, 2.5 * hy)
    }

    /// One to three bumps with random centers, widths and signs, supported inside `rect`.
    pub fn random_bumps(rng: &mut ChaCha8Rng, rect: &Rect) -> TestField {
        let count = rng.gen_range(1..=3);
        let mut out: Option<TestField> = None;
        for _ in 0..count {
            let rx = rect.width() * rng.gen_range(0.2..0.45);
            let ry = rect.height() * rng.gen_range(0.2..0.45);
            let cx = rng.gen_range(rect.x0 + rx..rect.x1 - rx);
            let cy = rng.gen_range(rect.y0 + ry..rect.y1 - ry);
            let amp = rng.gen_range(0.5..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let b = TestField::bump(cx, cy, rx, ry).scaled(amp);
            out = Some(match out {
                Some(o) => o.plus(&b),
                None => b,
            });
        }
        out.expect("at least one bump")
    }

    /// Smooth low-frequency field from a seed: a few random Fourier modes on `rect`.
    pub fn random_smooth(seed: u64, rect: &Rect) -> TestField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                let kx = rng.gen_range(0.5..3.0) * PI / rect.width();
                let ky = rng.gen_range(0.5..3.0) * PI / rect.height();
                let px = rng.gen_range(0.0..2.0 * PI);
                let py = rng.gen_range(0.0..2.0 * PI);
                let amp = rng.gen_range(-1.0..1.0);
                (kx, ky, px, py, amp)
            })
            .collect();
        TestField::new(format!("random_smooth({seed})"), move |x, y| {
            modes.iter().fold(Jet::default(), |acc, &(kx, ky, px, py, amp)| {
                let (sx, cx) = (kx * x + px).sin_cos();
                let (sy, cy) = (ky * y + py).sin_cos();
                acc + tensor((sx, kx * cx, -kx * kx * sx), (sy, ky * cy, -ky * ky * sy)) * amp
            })
        })
    }

    /// The five smooth fields used for identity checks.
    pub fn smooth_family() -> Vec<TestField> {
        vec![
            TestField::x2y(),
            TestField::exp_cos(),
            TestField::wave(),
            TestField::cubic(),
            TestField::gaussian(-0.2, 0.3, 0.8),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn check_jet(f: &TestField, x: f64, y: f64) {
        let h = 1e-5;
        let j = f.jet(x, y);
        let v = |a: f64, b: f64| f.value(a, b);
        assert_abs_diff_eq!(j.x, (v(x + h, y) - v(x - h, y)) / (2.0 * h), epsilon = 1e-6);
        assert_abs_diff_eq!(j.y, (v(x, y + h) - v(x, y - h)) / (2.0 * h), epsilon = 1e-6);
        let dx = |a: f64, b: f64| f.jet(a, b).x;
        let dy = |a: f64, b: f64| f.jet(a, b).y;
        assert_abs_diff_eq!(j.xx, (dx(x + h, y) - dx(x - h, y)) / (2.0 * h), epsilon = 1e-5);
        assert_abs_diff_eq!(j.yy, (dy(x, y + h) - dy(x, y - h)) / (2.0 * h), epsilon = 1e-5);
        assert_abs_diff_eq!(j.xy, (dx(x, y + h) - dx(x, y - h)) / (2.0 * h), epsilon = 1e-5);
    }

    #[test]
    fn jets_match_differences() {
        let mut all = TestField::smooth_family();
        all.push(TestField::sin_sin());
        all.push(TestField::bump(0.1, -0.2, 0.6, 0.5));
        all.push(TestField::smooth_bump(0.1, -0.2, 0.6, 0.5));
        all.push(TestField::bspline(0.05, 0.1, 0.3, 0.2));
        all.push(TestField::random_smooth(7, &Rect::unit_square()));
        for f in &all {
            for &(x, y) in &[(0.13, 0.27), (-0.31, 0.05), (0.4, -0.35)] {
                check_jet(f, x, y);
            }
        }
    }

    #[test]
    fn bspline_partition_of_unity() {
        for &t in &[0.0, 0.17, 0.5, 0.93] {
            let s: f64 = (-4..=4).map(|k| quartic_bspline(t - k as f64).0).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        }
        assert_eq!(quartic_bspline(2.5).0, 0.0);
        assert_eq!(quartic_bspline(-2.6), (0.0, 0.0, 0.0));
    }

    #[test]
    fn bump_vanishes_outside() {
        let b = TestField::bump(0.0, 0.0, 0.5, 0.5);
        assert_eq!(b.jet(0.5, 0.1), Jet::default());
        assert_eq!(b.value(0.0, 0.0), 1.0);
    }

    #[test]
    fn random_fields_are_reproducible() {
        let r = Rect::unit_square();
        let a = TestField::random_smooth(3, &r);
        let b = TestField::random_smooth(3, &r);
        assert_eq!(a.value(0.3, 0.7), b.value(0.3, 0.7));
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (f, g) = (TestField::random_bumps(&mut r1, &r), TestField::random_bumps(&mut r2, &r));
        assert_eq!(f.value(0.5, 0.5), g.value(0.5, 0.5));
        assert_eq!(f.value(0.0, 0.3), 0.0);
    }
}
