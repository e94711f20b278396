//! The multiplier integration-by-parts identity on the mixed domain with the
//! sonic cut, for the energy multiplier and `k = 2 − κ`.

use keldysh_lab::abc::{make_multiplier, verify_ibp};
use keldysh_lab::fields::TestField;
use keldysh_lab::geometry::{build_domain, Region};
use keldysh_lab::grid::Grid;
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let k = make_power(1)?;
    let region: Region = build_domain(&k, 0.0, 2.0, 1.0)?.into();
    let kappa = 1.25;
    let ms = make_multiplier(&region, kappa, 0.25)?;
    let mut prev = None;
    for n in [33, 65, 129] {
        let g = Grid::new(region.clone(), n)?;
        let r = verify_ibp(&k, 2.0 - kappa, &ms, &TestField::exp_cos().sample(&g))?;
        let order = prev.map(|p: f64| (p / r.gap).log2());
        println!("n={n:>3} lhs {:.8} rhs {:.8} gap {:.3e} order {order:.3?}", r.lhs, r.rhs, r.gap);
        prev = Some(r.gap);
    }
    Ok(())
}
