use proptest::prelude::*;

use keldysh_lab::abc::make_multiplier;
use keldysh_lab::cli::observed_orders;
use keldysh_lab::geometry::{build_domain, trace_characteristic, Branch, Point, Rect, Region, Side};
use keldysh_lab::grid::Grid;
use keldysh_lab::io::fmt_e12;
use keldysh_lab::typechange::{make_power, validate};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn e12_round_trips(v in -1e300f64..1e300) {
        let back: f64 = fmt_e12(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 1e-12 * v.abs());
    }

    #[test]
    fn powers_are_admissible(k0 in 1u32..8, x in -3.0f64..3.0) {
        let k = make_power(k0).unwrap();
        prop_assert!(validate(&k, -2.0, 2.0, 65).unwrap().admissible());
        prop_assert!(x == 0.0 || x * k.eval(x) > 0.0);
    }

    #[test]
    fn linear_characteristics_match_closed_form(x0 in -2.0f64..-0.05, y0 in -1.0f64..1.0) {
        // √(−x) decreases by (y − y₀)/2 along the plus branch
        let p = trace_characteristic(&make_power(1).unwrap(), Point::new(x0, y0), Branch::Plus, y0 + 10.0, 1e-3).unwrap();
        prop_assert!(p.reached_sonic);
        prop_assert!((p.end().y - (y0 + 2.0 * (-x0).sqrt())).abs() < 1e-6);
        prop_assert!(p.vertices.iter().all(|v| v.x <= 1e-12));
    }

    #[test]
    fn multiplier_constraints_hold(kappa in 1.0f64..=1.5, delta in 0.01f64..0.49, b in 0.5f64..3.0) {
        let r: Region = build_domain(&make_power(1).unwrap(), 0.0, b, 1.0).unwrap().into();
        let ms = make_multiplier(&r, kappa, delta).unwrap();
        prop_assert!(3.0 * ms.delta < ms.q2);
        prop_assert!(ms.epsilon > 0.0);
        prop_assert!(ms.delta <= delta);
        prop_assert_eq!(ms.b1(0.0, Side::Plus), ms.b1(0.0, Side::Minus));
    }

    #[test]
    fn bilinear_interpolation_is_exact(c in prop::array::uniform4(-2.0f64..2.0), px in 0.0f64..1.0, py in -1.0f64..1.0) {
        let g = Grid::new(Rect::new(0.0, 1.0, -1.0, 1.0).unwrap(), 17).unwrap();
        let f = |x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * y;
        let v = g.sample(f).interpolate(Point::new(px, py)).unwrap();
        prop_assert!((v - f(px, py)).abs() < 1e-12);
    }

    #[test]
    fn second_order_sequences_have_order_two(c in 1e-3f64..1e3) {
        let errs: Vec<f64> = (0..4).map(|i| c * 0.25f64.powi(i)).collect();
        prop_assert!(observed_orders(&errs).iter().all(|o| (o - 2.0).abs() < 1e-12));
    }
}
