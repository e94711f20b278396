//! The open Dirichlet problem: homogeneous data drives the least-squares
//! minimizer to zero, and `u = xy` is recovered from its open trace.

use std::sync::Arc;

use keldysh_lab::geometry::{build_domain, Region};
use keldysh_lab::grid::Grid;
use keldysh_lab::operators::OperatorSpec;
use keldysh_lab::solver::{homogeneous_open_experiment, solve_lsq, sup_inside, BoundaryData, LsqOptions};
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let region: Region = build_domain(&k, 0.0, 2.0, 1.0)?.into();
    for r in homogeneous_open_experiment(&OperatorSpec::loword(&k), &region, &[17, 33, 65], 42)? {
        println!("homogeneous n={:>3} start {:.3} -> sup {:.3e}", r.n, r.start_sup_norm, r.sup_norm);
    }
    let spec = OperatorSpec::kappa(1.25)?;
    for n in [17, 33, 65] {
        let g = Grid::new(region.clone(), n)?;
        let f = g.sample(|_, y| 1.25 * y);
        let sol = solve_lsq(&spec, &BoundaryData::open_dirichlet(Arc::new(|p| p.x * p.y)), &f, &LsqOptions::default())?;
        let err = sup_inside(&sol.u.map_xy(|x, y, v| v - x * y));
        println!("manufactured n={n:>3} error {err:.3e} residual {:.3e} unknowns {}", sol.residual_norm, sol.unknowns);
    }
    Ok(())
}
