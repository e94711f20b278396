//! Multiplier certificates and the energy inequality chain for bumps.

use keldysh_lab::abc::{certify, energy_inequality_check, make_multiplier};
use keldysh_lab::cli::interior_bumps;
use keldysh_lab::geometry::{build_domain, Region};
use keldysh_lab::grid::Grid;
use keldysh_lab::typechange::make_power;

fn main() -> keldysh_lab::Result<()> {
    let region: Region = build_domain(&make_power(1)?, 0.0, 2.0, 1.0)?.into();
    let g = Grid::new(region.clone(), 65)?;
    for kappa in [1.0, 1.25, 1.5] {
        let ms = make_multiplier(&region, kappa, 0.25)?;
        let c = certify(&ms, &g)?;
        println!(
            "κ={kappa}: δ={:.4} after {} halvings, ε={:.4}, certificates pass={}",
            ms.delta, ms.shrinks, ms.epsilon, c.pass
        );
        for b in interior_bumps(&region, 5) {
            let r = energy_inequality_check(kappa, 0.25, &b.sample(&g), 1e-8)?;
            let v: Vec<String> = r.links.iter().map(|l| format!("{:.4e}", l.value)).collect();
            println!("    {} pass={} constant={:.4?}", v.join(" <= "), r.pass, r.constant);
        }
    }
    Ok(())
}
