//! Maximum principle for solves on the elliptic part of the domain.

use std::sync::Arc;

use keldysh_lab::geometry::build_domain;
use keldysh_lab::operators::OperatorSpec;
use keldysh_lab::solver::max_principle_experiment;
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let rect = build_domain(&k, 0.0, 2.0, 1.0)?.elliptic_part();
    let data = Arc::new(|p: keldysh_lab::geometry::Point| (3.0 * p.y).sin() + p.x);
    for r in max_principle_experiment(&OperatorSpec::loword(&k), &rect, data, &[17, 33, 65], 10.0)? {
        let m = &r.report;
        println!(
            "n={:>3} max {:.4} <= {:.4}, min {:.4} >= {:.4}, pass={}",
            r.n, m.interior_max, m.boundary_max, m.interior_min, m.boundary_min, m.pass
        );
    }
    Ok(())
}
