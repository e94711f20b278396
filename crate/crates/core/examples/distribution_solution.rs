//! Distribution solution of `x u_xx + κ u_x + u_yy = κ y` by a dual
//! least-squares solve over B-spline test functions.

use keldysh_lab::fields::TestField;
use keldysh_lab::geometry::{build_domain, Region};
use keldysh_lab::grid::Grid;
use keldysh_lab::operators::OperatorSpec;
use keldysh_lab::solver::{bspline_basis, distribution_solve, heldout_tests};
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let region: Region = build_domain(&make_power(1)?, 0.0, 2.0, 1.0)?.into();
    let spec = OperatorSpec::kappa(1.25)?;
    let g = Grid::new(region.clone(), 129)?;
    let f = g.sample(|x, y| TestField::xy().apply(&spec, x, y));
    let heldout = heldout_tests(&region, 5);
    for level in [4, 5] {
        let r = distribution_solve(&spec, &f, &bspline_basis(&region, level), &heldout, 1e-12)?;
        println!(
            "level {level}: {} tests, training {:.2e}, held-out {:.2e}",
            r.test_count, r.pairing_residual, r.heldout_residual
        );
    }
    Ok(())
}
